//! TCP transport: a full mesh between master and workers, plus the
//! client protocol the command-line tool speaks to a running master.
//!
//! Mesh setup is synchronous and uses dedicated handshake tags (≥ 200)
//! that never enter the data plane or its counters: workers register
//! with the master, the master replies with a peer table, lower-id
//! workers dial higher-id workers, and every worker confirms mesh
//! completion before the master accepts client connections. After setup,
//! one reader thread per connection feeds whole frames into the node's
//! inbox; sends write directly to the peer's socket.
//!
//! Client connections (tags 100–119) are request/reply on a fresh
//! connection per command and are likewise never counted.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::time::Duration;

use crate::error::{Error, Result};

use super::wire::{self, Reader};
use super::{NodeId, Transport, MASTER};

/// Sender id used on client-protocol frames.
pub const CLIENT: NodeId = u32::MAX - 1;

const TAG_REGISTER: u8 = 200;
const TAG_PEER_TABLE: u8 = 201;
const TAG_IDENTIFY: u8 = 202;
const TAG_MESH_READY: u8 = 203;

pub const TAG_REQ_LOAD: u8 = 101;
pub const TAG_REQ_QUERY: u8 = 102;
pub const TAG_REQ_UPDATE: u8 = 103;
pub const TAG_REQ_METRICS: u8 = 104;
pub const TAG_REQ_WORKLOAD: u8 = 105;
pub const TAG_REQ_SHUTDOWN: u8 = 106;
pub const TAG_REP_ROWS: u8 = 110;
pub const TAG_REP_CSV: u8 = 111;
pub const TAG_REP_TEXT: u8 = 112;
pub const TAG_REP_ERROR: u8 = 113;
pub const TAG_REP_OK: u8 = 114;

// ---------------------------------------------------------------------------
// Raw frame I/O

fn write_raw(stream: &mut TcpStream, tag: u8, sender: NodeId, body: &[u8]) -> Result<()> {
    let mut frame = Vec::with_capacity(body.len() + 9);
    wire::put_u32(&mut frame, (1 + 4 + body.len()) as u32);
    wire::put_u8(&mut frame, tag);
    wire::put_u32(&mut frame, sender);
    frame.extend_from_slice(body);
    stream
        .write_all(&frame)
        .map_err(|e| Error::Transport(format!("write failed: {e}")))
}

/// Reads one complete frame (length prefix included in the result).
fn read_raw(stream: &mut TcpStream) -> Result<Vec<u8>> {
    let mut len_buf = [0u8; 4];
    stream
        .read_exact(&mut len_buf)
        .map_err(|e| Error::Transport(format!("read failed: {e}")))?;
    let len = u32::from_be_bytes(len_buf) as usize;
    if len < 5 {
        return Err(Error::Transport(format!("frame too short: {len}")));
    }
    let mut frame = vec![0u8; 4 + len];
    frame[0..4].copy_from_slice(&len_buf);
    stream
        .read_exact(&mut frame[4..])
        .map_err(|e| Error::Transport(format!("read failed: {e}")))?;
    Ok(frame)
}

fn frame_tag(frame: &[u8]) -> u8 {
    frame[4]
}

fn frame_sender(frame: &[u8]) -> NodeId {
    u32::from_be_bytes(frame[5..9].try_into().unwrap())
}

fn frame_body(frame: &[u8]) -> &[u8] {
    &frame[9..]
}

/// Long string (u32 length prefix) for client payloads that can exceed
/// the data plane's short-string limit.
fn put_blob(buf: &mut Vec<u8>, s: &str) {
    wire::put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

fn read_blob(r: &mut Reader) -> Result<String> {
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        out.push(r.u8()?);
    }
    String::from_utf8(out).map_err(|e| Error::Transport(format!("invalid UTF-8: {e}")))
}

// ---------------------------------------------------------------------------
// Mesh transport

/// TCP-backed [`Transport`]: direct sockets to every peer, loopback via
/// an in-process queue, one reader thread per inbound stream.
pub struct TcpNode {
    id: NodeId,
    outs: HashMap<NodeId, TcpStream>,
    self_tx: mpsc::Sender<Vec<u8>>,
    inbox: mpsc::Receiver<Vec<u8>>,
}

impl Transport for TcpNode {
    fn send_frame(&mut self, to: NodeId, frame: Vec<u8>) -> Result<()> {
        if to == self.id {
            return self
                .self_tx
                .send(frame)
                .map_err(|_| Error::Transport("own inbox closed".into()));
        }
        let stream = self
            .outs
            .get_mut(&to)
            .ok_or_else(|| Error::Transport(format!("no route to node {to}")))?;
        stream
            .write_all(&frame)
            .map_err(|e| Error::Transport(format!("send to {to} failed: {e}")))
    }

    fn recv_frame(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>> {
        match self.inbox.recv_timeout(timeout) {
            Ok(f) => Ok(Some(f)),
            Err(mpsc::RecvTimeoutError::Timeout) => Ok(None),
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                Err(Error::Transport("all connections closed".into()))
            }
        }
    }
}

fn spawn_reader(mut stream: TcpStream, tx: mpsc::Sender<Vec<u8>>) {
    std::thread::spawn(move || {
        while let Ok(frame) = read_raw(&mut stream) {
            if tx.send(frame).is_err() {
                break;
            }
        }
    });
}

/// Master side of mesh setup: accepts `n` worker registrations on
/// `listener`, distributes the peer table, waits for every worker's mesh
/// confirmation, then starts reader threads. Returns the data transport;
/// the listener stays usable for client connections.
pub fn master_mesh(listener: &TcpListener, n: u32) -> Result<Box<dyn Transport>> {
    let mut conns: HashMap<NodeId, TcpStream> = HashMap::new();
    let mut addrs: HashMap<NodeId, String> = HashMap::new();
    while conns.len() < n as usize {
        let (mut stream, _) = listener
            .accept()
            .map_err(|e| Error::Transport(format!("accept failed: {e}")))?;
        stream.set_nodelay(true).ok();
        let frame = read_raw(&mut stream)?;
        if frame_tag(&frame) != TAG_REGISTER {
            // Not a worker registration; drop it (clients must wait for a
            // complete cluster).
            continue;
        }
        let id = frame_sender(&frame);
        if id >= n {
            return Err(Error::Transport(format!("worker id {id} out of range for n={n}")));
        }
        let mut r = Reader::new(frame_body(&frame));
        let listen_addr = r.string()?;
        r.finish().map_err(|e| Error::Transport(e.to_string()))?;
        addrs.insert(id, listen_addr);
        conns.insert(id, stream);
    }
    // Peer table: every worker's id and dialable address.
    let mut body = Vec::new();
    wire::put_u32(&mut body, n);
    for id in 0..n {
        wire::put_u32(&mut body, id);
        wire::put_str(&mut body, &addrs[&id]);
    }
    for (_, stream) in conns.iter_mut() {
        write_raw(stream, TAG_PEER_TABLE, MASTER, &body)?;
    }
    // Wait until every worker has its full mesh.
    for (&id, stream) in conns.iter_mut() {
        let frame = read_raw(stream)?;
        if frame_tag(&frame) != TAG_MESH_READY || frame_sender(&frame) != id {
            return Err(Error::Transport(format!("worker {id} failed mesh setup")));
        }
    }
    let (self_tx, inbox) = mpsc::channel();
    let mut outs = HashMap::new();
    for (id, stream) in conns {
        spawn_reader(
            stream.try_clone().map_err(|e| Error::Transport(e.to_string()))?,
            self_tx.clone(),
        );
        outs.insert(id, stream);
    }
    Ok(Box::new(TcpNode { id: MASTER, outs, self_tx, inbox }))
}

/// Worker side of mesh setup: registers with the master, receives the
/// peer table, dials every higher-id peer, accepts every lower-id peer,
/// confirms, and starts reader threads.
pub fn worker_mesh(master_addr: &str, listen_addr: &str, id: u32) -> Result<Box<dyn Transport>> {
    let listener = TcpListener::bind(listen_addr)
        .map_err(|e| Error::Transport(format!("bind {listen_addr} failed: {e}")))?;
    let actual = listener
        .local_addr()
        .map_err(|e| Error::Transport(e.to_string()))?
        .to_string();

    let mut master = TcpStream::connect(master_addr)
        .map_err(|e| Error::Transport(format!("connect {master_addr} failed: {e}")))?;
    master.set_nodelay(true).ok();
    let mut body = Vec::new();
    wire::put_str(&mut body, &actual);
    write_raw(&mut master, TAG_REGISTER, id, &body)?;

    let frame = read_raw(&mut master)?;
    if frame_tag(&frame) != TAG_PEER_TABLE {
        return Err(Error::Transport("expected peer table".into()));
    }
    let mut r = Reader::new(frame_body(&frame));
    let n = r.u32()?;
    let mut peers: HashMap<NodeId, String> = HashMap::new();
    for _ in 0..n {
        let pid = r.u32()?;
        peers.insert(pid, r.string()?);
    }
    r.finish().map_err(|e| Error::Transport(e.to_string()))?;

    let mut conns: HashMap<NodeId, TcpStream> = HashMap::new();
    // Dial upward.
    for pid in (id + 1)..n {
        let mut s = TcpStream::connect(&peers[&pid])
            .map_err(|e| Error::Transport(format!("connect to worker {pid} failed: {e}")))?;
        s.set_nodelay(true).ok();
        write_raw(&mut s, TAG_IDENTIFY, id, &[])?;
        conns.insert(pid, s);
    }
    // Accept downward.
    while conns.len() < (n - 1) as usize {
        let (mut s, _) = listener
            .accept()
            .map_err(|e| Error::Transport(format!("accept failed: {e}")))?;
        s.set_nodelay(true).ok();
        let frame = read_raw(&mut s)?;
        if frame_tag(&frame) != TAG_IDENTIFY {
            continue;
        }
        let pid = frame_sender(&frame);
        if pid >= id {
            return Err(Error::Transport(format!("unexpected dial from worker {pid}")));
        }
        conns.insert(pid, s);
    }
    write_raw(&mut master, TAG_MESH_READY, id, &[])?;

    let (self_tx, inbox) = mpsc::channel();
    spawn_reader(
        master.try_clone().map_err(|e| Error::Transport(e.to_string()))?,
        self_tx.clone(),
    );
    let mut outs = HashMap::new();
    outs.insert(MASTER, master);
    for (pid, stream) in conns {
        spawn_reader(
            stream.try_clone().map_err(|e| Error::Transport(e.to_string()))?,
            self_tx.clone(),
        );
        outs.insert(pid, stream);
    }
    Ok(Box::new(TcpNode { id, outs, self_tx, inbox }))
}

// ---------------------------------------------------------------------------
// Client protocol

/// One command from the CLI to a running master.
#[derive(Debug, Clone, PartialEq)]
pub enum ClientRequest {
    /// Bulk-load triple text; `assign` optionally maps each triple to a
    /// worker (round-robin otherwise).
    Load { text: String, assign: Option<Vec<u32>> },
    Query { text: String },
    Update { text: String },
    Metrics,
    /// Run a query file sequentially and return per-query measurements.
    Workload { text: String },
    Shutdown,
}

/// Master's answer to a client command.
#[derive(Debug, Clone, PartialEq)]
pub enum ClientReply {
    Rows {
        mode: String,
        redistributed: bool,
        wall_us: u64,
        header: Vec<String>,
        rows: Vec<Vec<String>>,
    },
    Csv(String),
    Text(String),
    Error(String),
    Ok { wall_us: u64 },
}

pub fn write_client_request(stream: &mut TcpStream, req: &ClientRequest) -> Result<()> {
    let mut body = Vec::new();
    let tag = match req {
        ClientRequest::Load { text, assign } => {
            match assign {
                Some(ids) => {
                    wire::put_u8(&mut body, 1);
                    wire::put_u32(&mut body, ids.len() as u32);
                    for &w in ids {
                        wire::put_u32(&mut body, w);
                    }
                }
                None => wire::put_u8(&mut body, 0),
            }
            put_blob(&mut body, text);
            TAG_REQ_LOAD
        }
        ClientRequest::Query { text } => {
            put_blob(&mut body, text);
            TAG_REQ_QUERY
        }
        ClientRequest::Update { text } => {
            put_blob(&mut body, text);
            TAG_REQ_UPDATE
        }
        ClientRequest::Metrics => TAG_REQ_METRICS,
        ClientRequest::Workload { text } => {
            put_blob(&mut body, text);
            TAG_REQ_WORKLOAD
        }
        ClientRequest::Shutdown => TAG_REQ_SHUTDOWN,
    };
    write_raw(stream, tag, CLIENT, &body)
}

pub fn read_client_request(stream: &mut TcpStream) -> Result<ClientRequest> {
    let frame = read_raw(stream)?;
    let mut r = Reader::new(frame_body(&frame));
    let req = match frame_tag(&frame) {
        TAG_REQ_LOAD => {
            let assign = match r.u8()? {
                0 => None,
                1 => {
                    let n = r.u32()? as usize;
                    let mut ids = Vec::with_capacity(n.min(1 << 20));
                    for _ in 0..n {
                        ids.push(r.u32()?);
                    }
                    Some(ids)
                }
                k => return Err(Error::Transport(format!("bad placement kind {k}"))),
            };
            ClientRequest::Load { text: read_blob(&mut r)?, assign }
        }
        TAG_REQ_QUERY => ClientRequest::Query { text: read_blob(&mut r)? },
        TAG_REQ_UPDATE => ClientRequest::Update { text: read_blob(&mut r)? },
        TAG_REQ_METRICS => ClientRequest::Metrics,
        TAG_REQ_WORKLOAD => ClientRequest::Workload { text: read_blob(&mut r)? },
        TAG_REQ_SHUTDOWN => ClientRequest::Shutdown,
        t => return Err(Error::Transport(format!("unknown client request tag {t}"))),
    };
    r.finish().map_err(|e| Error::Transport(e.to_string()))?;
    Ok(req)
}

pub fn write_client_reply(stream: &mut TcpStream, reply: &ClientReply) -> Result<()> {
    let mut body = Vec::new();
    let tag = match reply {
        ClientReply::Rows { mode, redistributed, wall_us, header, rows } => {
            wire::put_str(&mut body, mode);
            wire::put_u8(&mut body, u8::from(*redistributed));
            wire::put_u64(&mut body, *wall_us);
            wire::put_string_rows(&mut body, header, rows);
            TAG_REP_ROWS
        }
        ClientReply::Csv(text) => {
            put_blob(&mut body, text);
            TAG_REP_CSV
        }
        ClientReply::Text(text) => {
            put_blob(&mut body, text);
            TAG_REP_TEXT
        }
        ClientReply::Error(text) => {
            put_blob(&mut body, text);
            TAG_REP_ERROR
        }
        ClientReply::Ok { wall_us } => {
            wire::put_u64(&mut body, *wall_us);
            TAG_REP_OK
        }
    };
    write_raw(stream, tag, MASTER, &body)
}

pub fn read_client_reply(stream: &mut TcpStream) -> Result<ClientReply> {
    let frame = read_raw(stream)?;
    let mut r = Reader::new(frame_body(&frame));
    let reply = match frame_tag(&frame) {
        TAG_REP_ROWS => {
            let mode = r.string()?;
            let redistributed = r.u8()? != 0;
            let wall_us = r.u64()?;
            let (header, rows) = wire::read_string_rows(&mut r)?;
            ClientReply::Rows { mode, redistributed, wall_us, header, rows }
        }
        TAG_REP_CSV => ClientReply::Csv(read_blob(&mut r)?),
        TAG_REP_TEXT => ClientReply::Text(read_blob(&mut r)?),
        TAG_REP_ERROR => ClientReply::Error(read_blob(&mut r)?),
        TAG_REP_OK => ClientReply::Ok { wall_us: r.u64()? },
        t => return Err(Error::Transport(format!("unknown client reply tag {t}"))),
    };
    r.finish().map_err(|e| Error::Transport(e.to_string()))?;
    Ok(reply)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{Endpoint, Message};

    #[test]
    fn mesh_carries_data_frames_between_all_nodes() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let master_addr = listener.local_addr().unwrap().to_string();
        let n = 3u32;
        let mut worker_joins = Vec::new();
        for id in 0..n {
            let addr = master_addr.clone();
            worker_joins.push(std::thread::spawn(move || {
                let t = worker_mesh(&addr, "127.0.0.1:0", id).unwrap();
                let mut ep = Endpoint::new(id, t);
                // Echo one message from the master back, and ping both
                // peers.
                let (_, msg) = ep.recv(5000).unwrap();
                assert_eq!(msg, Message::LoadDone { ctx: id });
                for peer in 0..n {
                    ep.send(peer, &Message::RedistCommit { ctx: id }).unwrap();
                }
                let got = ep
                    .collect(|_, m| matches!(m, Message::RedistCommit { .. }), n as usize, 5000)
                    .unwrap();
                assert_eq!(got.len(), n as usize);
                ep.send_report(MASTER, id, 0, 0).unwrap();
                ep.metrics.clone()
            }));
        }
        let t = master_mesh(&listener, n).unwrap();
        let mut master = Endpoint::new(MASTER, t);
        for id in 0..n {
            master.send(id, &Message::LoadDone { ctx: id }).unwrap();
        }
        let acks = master
            .collect(|_, m| matches!(m, Message::Ack { .. }), n as usize, 5000)
            .unwrap();
        assert_eq!(acks.len(), n as usize);
        for j in worker_joins {
            let m = j.join().unwrap();
            // Each worker sent n commit frames: 1 loopback, n-1 remote.
            assert_eq!(m.per_tag[8][0], 1);
            assert_eq!(m.per_tag[8][2], (n - 1) as u64);
        }
    }

    #[test]
    fn client_protocol_roundtrips() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut s, _) = listener.accept().unwrap();
            let req = read_client_request(&mut s).unwrap();
            assert_eq!(
                req,
                ClientRequest::Load {
                    text: "a p b .\n".into(),
                    assign: Some(vec![0, 1])
                }
            );
            write_client_reply(&mut s, &ClientReply::Ok { wall_us: 42 }).unwrap();
            let req = read_client_request(&mut s).unwrap();
            assert_eq!(req, ClientRequest::Query { text: "SELECT * WHERE { ?a p ?b }".into() });
            write_client_reply(
                &mut s,
                &ClientReply::Rows {
                    mode: "semijoin".into(),
                    redistributed: false,
                    wall_us: 7,
                    header: vec!["?a".into(), "?b".into()],
                    rows: vec![vec!["a".into(), "b".into()]],
                },
            )
            .unwrap();
        });
        let mut c = TcpStream::connect(addr).unwrap();
        write_client_request(
            &mut c,
            &ClientRequest::Load { text: "a p b .\n".into(), assign: Some(vec![0, 1]) },
        )
        .unwrap();
        assert_eq!(read_client_reply(&mut c).unwrap(), ClientReply::Ok { wall_us: 42 });
        write_client_request(
            &mut c,
            &ClientRequest::Query { text: "SELECT * WHERE { ?a p ?b }".into() },
        )
        .unwrap();
        let ClientReply::Rows { mode, rows, .. } = read_client_reply(&mut c).unwrap() else {
            panic!("expected rows");
        };
        assert_eq!(mode, "semijoin");
        assert_eq!(rows, vec![vec!["a".to_string(), "b".to_string()]]);
        server.join().unwrap();
    }
}
