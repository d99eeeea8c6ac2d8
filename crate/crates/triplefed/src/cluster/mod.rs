//! Node-to-node messaging: transports, traffic accounting, and barriers.
//!
//! A cluster is one master plus `n` workers, each owning an [`Endpoint`].
//! Endpoints encode messages into frames, count every outgoing frame at
//! the sender (split loopback/remote by addressing), and receive through
//! a pending buffer so out-of-order arrivals never get lost between
//! barriers. The two transports — in-process channels and TCP — carry
//! identical frame bytes, so traffic metrics agree between them.
//!
//! Setting the `PHD_BW_LIMIT` environment variable (bytes per second)
//! makes every remote send sleep for its frame's transmission time,
//! simulating a constrained network.

pub mod metrics;
pub mod tcp;
pub mod wire;

use std::collections::{HashMap, VecDeque};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

pub use metrics::{gini, ClusterMetrics, NodeMetrics};
pub use wire::{
    decode_frame, encode_frame, AckBody, Message, NodeId, QueryTask, UpdateOp, WorkerReport,
    MAIN_EDGE, MASTER, TAG_COUNT, TAG_NAMES,
};

/// Context value reserved for the shutdown signal (a structure abort with
/// this context stops a worker's command loop).
pub const SHUTDOWN_CTX: u32 = u32::MAX;

/// A way to move complete frames between nodes. Implementations carry
/// bytes only; all encoding, decoding, and counting happens in
/// [`Endpoint`].
pub trait Transport: Send {
    fn send_frame(&mut self, to: NodeId, frame: Vec<u8>) -> Result<()>;
    /// Receives the next frame addressed to this node; `Ok(None)` on
    /// timeout.
    fn recv_frame(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>>;
}

// ---------------------------------------------------------------------------
// In-process transport

struct InprocNode {
    peers: Arc<HashMap<NodeId, mpsc::Sender<Vec<u8>>>>,
    inbox: mpsc::Receiver<Vec<u8>>,
}

impl Transport for InprocNode {
    fn send_frame(&mut self, to: NodeId, frame: Vec<u8>) -> Result<()> {
        let tx = self
            .peers
            .get(&to)
            .ok_or_else(|| Error::Transport(format!("no route to node {to}")))?;
        tx.send(frame)
            .map_err(|_| Error::Transport(format!("node {to} is gone")))
    }

    fn recv_frame(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>> {
        match self.inbox.recv_timeout(timeout) {
            Ok(f) => Ok(Some(f)),
            Err(mpsc::RecvTimeoutError::Timeout) => Ok(None),
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                Err(Error::Transport("all peers disconnected".into()))
            }
        }
    }
}

/// Builds channel-connected transports for one master and `n` workers.
/// Returned in the order: master, then workers 0..n.
pub fn inproc_network(n: u32) -> Vec<Box<dyn Transport>> {
    let mut senders = HashMap::new();
    let mut inboxes = Vec::new();
    let mut ids: Vec<NodeId> = vec![MASTER];
    ids.extend(0..n);
    for &id in &ids {
        let (tx, rx) = mpsc::channel();
        senders.insert(id, tx);
        inboxes.push(rx);
    }
    let peers = Arc::new(senders);
    inboxes
        .into_iter()
        .map(|inbox| Box::new(InprocNode { peers: Arc::clone(&peers), inbox }) as Box<dyn Transport>)
        .collect()
}

// ---------------------------------------------------------------------------
// Endpoint

/// One node's messaging facade: send with accounting, receive with a
/// pending buffer, and collect-barriers with optional request service.
pub struct Endpoint {
    id: NodeId,
    transport: Box<dyn Transport>,
    pub metrics: NodeMetrics,
    pending: VecDeque<(NodeId, Message)>,
    /// Remote-send throttle in bytes per second.
    bw_limit: Option<f64>,
}

impl Endpoint {
    pub fn new(id: NodeId, transport: Box<dyn Transport>) -> Endpoint {
        let bw_limit = std::env::var("PHD_BW_LIMIT")
            .ok()
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|v| *v > 0.0);
        Endpoint { id, transport, metrics: NodeMetrics::new(), pending: VecDeque::new(), bw_limit }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    fn throttle(&self, loopback: bool, bytes: usize) {
        if loopback {
            return;
        }
        if let Some(limit) = self.bw_limit {
            std::thread::sleep(Duration::from_secs_f64(bytes as f64 / limit));
        }
    }

    /// Sends one message, counting its frame at this sender.
    pub fn send(&mut self, to: NodeId, msg: &Message) -> Result<()> {
        let frame = encode_frame(self.id, msg);
        let loopback = to == self.id;
        self.metrics.count(msg.tag(), loopback, frame.len());
        self.throttle(loopback, frame.len());
        self.transport.send_frame(to, frame)
    }

    /// Sends a completion ack carrying this node's counters. The ack's
    /// own frame is counted first, so the report it carries accounts for
    /// every frame this node has ever sent, itself included.
    pub fn send_report(&mut self, to: NodeId, ctx: u32, main: u64, replica: u64) -> Result<()> {
        let len = wire::done_ack_frame_len();
        let loopback = to == self.id;
        self.metrics.count(13, loopback, len);
        let report =
            WorkerReport { main_triples: main, replica_triples: replica, per_tag: self.metrics.per_tag };
        let frame = encode_frame(self.id, &Message::Ack { body: AckBody::Done { ctx, report } });
        debug_assert_eq!(frame.len(), len);
        self.throttle(loopback, len);
        self.transport.send_frame(to, frame)
    }

    /// Puts a message back for a later collect.
    pub fn push_pending(&mut self, from: NodeId, msg: Message) {
        self.pending.push_back((from, msg));
    }

    /// Next message: buffered ones first, then the transport.
    pub fn recv(&mut self, timeout_ms: u64) -> Result<(NodeId, Message)> {
        if let Some(item) = self.pending.pop_front() {
            return Ok(item);
        }
        match self.transport.recv_frame(Duration::from_millis(timeout_ms))? {
            Some(frame) => decode_frame(&frame),
            None => Err(Error::BarrierTimeout(timeout_ms, "idle receive".into())),
        }
    }

    /// Collects exactly `count` messages satisfying `matches`, buffering
    /// everything else. `serve` sees non-matching messages first and may
    /// consume them (returning `true`) — used to answer peers' requests
    /// while blocked on our own.
    pub fn collect_with<M, S>(
        &mut self,
        mut matches: M,
        count: usize,
        timeout_ms: u64,
        mut serve: S,
    ) -> Result<Vec<(NodeId, Message)>>
    where
        M: FnMut(NodeId, &Message) -> bool,
        S: FnMut(&mut Endpoint, NodeId, Message) -> Result<bool>,
    {
        let mut out = Vec::with_capacity(count);
        let mut keep = VecDeque::new();
        while let Some((from, msg)) = self.pending.pop_front() {
            if out.len() < count && matches(from, &msg) {
                out.push((from, msg));
            } else {
                keep.push_back((from, msg));
            }
        }
        self.pending = keep;

        let deadline = Instant::now() + Duration::from_millis(timeout_ms);
        // On timeout, already-matched messages go back to the buffer so
        // nothing is ever silently dropped.
        let bail = |ep: &mut Endpoint, out: Vec<(NodeId, Message)>| {
            let got = out.len();
            for item in out.into_iter().rev() {
                ep.pending.push_front(item);
            }
            Err(Error::BarrierTimeout(timeout_ms, format!("collected {got} of {count}")))
        };
        while out.len() < count {
            let now = Instant::now();
            if now >= deadline {
                return bail(self, out);
            }
            let frame = self.transport.recv_frame(deadline - now)?;
            let Some(frame) = frame else {
                return bail(self, out);
            };
            let (from, msg) = decode_frame(&frame)?;
            if matches(from, &msg) {
                out.push((from, msg));
            } else if !serve(self, from, msg.clone())? {
                self.pending.push_back((from, msg));
            }
        }
        Ok(out)
    }

    /// [`Endpoint::collect_with`] without request service.
    pub fn collect<M>(
        &mut self,
        matches: M,
        count: usize,
        timeout_ms: u64,
    ) -> Result<Vec<(NodeId, Message)>>
    where
        M: FnMut(NodeId, &Message) -> bool,
    {
        self.collect_with(matches, count, timeout_ms, |_, _, _| Ok(false))
    }
}
