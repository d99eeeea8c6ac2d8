//! Frame codec for inter-node messages.
//!
//! Every message travels as one frame, identical on every transport:
//!
//! ```text
//! u32 BE length of (tag + sender + body)
//! u8  tag
//! u32 BE sender node id
//! body
//! ```
//!
//! Strings are a u16 BE byte length followed by UTF-8; term values cross
//! the wire as lexicals only — interned ids never leave a node. Numbers
//! are big-endian; floats travel as their bit pattern. Tags 0–13 are the
//! data-plane messages below and the only ones the traffic counters
//! track; higher tags (client requests, mesh handshakes) belong to
//! connection setup and are never counted.

use crate::error::{Error, Result};
use crate::index::{NewEdge, RedistBatch};
use crate::planner::{JoinStep, Label, Side};
use crate::rdf::LexicalTriple;
use crate::sparql::{PatternTerm, TriplePattern};
use crate::stats::LocalPredicateStats;

/// Node identifier; workers are 0..n, the master is [`MASTER`].
pub type NodeId = u32;

/// The master's node id.
pub const MASTER: NodeId = u32::MAX;

/// Sentinel edge id addressing a worker's main index instead of a replica
/// module (bulk load uses it).
pub const MAIN_EDGE: u32 = u32::MAX;

/// Number of counted message tags.
pub const TAG_COUNT: usize = 14;

/// Human-readable tag names, indexed by tag byte.
pub const TAG_NAMES: [&str; TAG_COUNT] = [
    "LoadDone",
    "StatsReport",
    "QueryBroadcast",
    "SubqueryProjection",
    "CandidateRows",
    "PartialResult",
    "RedistBegin",
    "RedistTriples",
    "RedistCommit",
    "RedistAbort",
    "UpdateBatch",
    "ValidationRequest",
    "ValidationRows",
    "Ack",
];

/// What a query broadcast asks the workers to do.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryTask {
    /// Report exact local cardinalities per pattern.
    Estimate,
    /// Run the exchange pipeline over the main index, steps in plan order.
    Semijoin { steps: Vec<JoinStep> },
    /// Evaluate replica modules locally; `(module edge id, pattern)` in
    /// join order.
    Parallel { steps: Vec<(u32, usize)> },
}

/// One data mutation; inserts carry their master-assigned home worker.
#[derive(Debug, Clone, PartialEq)]
pub enum UpdateOp {
    Insert { triple: LexicalTriple, worker: u32 },
    Delete { triple: LexicalTriple },
}

impl UpdateOp {
    pub fn triple(&self) -> &LexicalTriple {
        match self {
            UpdateOp::Insert { triple, .. } => triple,
            UpdateOp::Delete { triple } => triple,
        }
    }
}

/// Fixed-width per-node counters piggybacked on completion acks: stored
/// triple counts plus, per tag, messages and bytes split by loopback
/// (sender == receiver) versus remote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WorkerReport {
    pub main_triples: u64,
    pub replica_triples: u64,
    pub per_tag: [[u64; 4]; TAG_COUNT],
}

impl WorkerReport {
    /// Encoded byte width (counts plus 4 u64 per tag).
    pub const WIDTH: usize = 16 + TAG_COUNT * 32;
}

/// Completion/reply payloads.
#[derive(Debug, Clone, PartialEq)]
pub enum AckBody {
    /// Bare synchronization token.
    Plain { ctx: u32 },
    /// Exact per-pattern local cardinalities for an estimate broadcast.
    Counts { ctx: u32, counts: Vec<u64> },
    /// Completion with piggybacked counters; the report already includes
    /// this ack's own frame.
    Done { ctx: u32, report: WorkerReport },
}

/// Every inter-node message.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// Master → worker: bulk load finished, build stats and report.
    LoadDone { ctx: u32 },
    /// Worker → master: local per-predicate degree statistics.
    StatsReport { ctx: u32, stats: Vec<LocalPredicateStats> },
    /// Master → workers: run a query task.
    QueryBroadcast { ctx: u32, patterns: Vec<TriplePattern>, task: QueryTask },
    /// Worker ↔ workers: distinct values of the join columns of a prefix
    /// (exchange mode) or of a parent module's child column
    /// (redistribution).
    SubqueryProjection { ctx: u32, step: u32, cols: Vec<String>, rows: Vec<Vec<String>> },
    /// Worker → worker: local pattern rows surviving one sender's
    /// projection.
    CandidateRows { ctx: u32, step: u32, cols: Vec<String>, rows: Vec<Vec<String>> },
    /// Worker → master: full local binding rows of a finished query.
    PartialResult { ctx: u32, cols: Vec<String>, rows: Vec<Vec<String>> },
    /// Master → workers: stage these structural additions.
    RedistBegin { ctx: u32, batch: RedistBatch },
    /// Triples for one replica module — or for the main index when the
    /// edge id is [`MAIN_EDGE`].
    RedistTriples { edge: u32, triples: Vec<LexicalTriple> },
    /// Master → workers: activate everything staged.
    RedistCommit { ctx: u32 },
    /// Master → workers: drop everything staged.
    RedistAbort { ctx: u32 },
    /// Master → workers: apply these mutations.
    UpdateBatch { ctx: u32, ops: Vec<UpdateOp> },
    /// Worker → workers: which main-index triples of this edge's subquery
    /// attach under the given parent-side bindings?
    ValidationRequest { req: u32, edge: u32, bindings: Vec<String> },
    /// Reply to a validation request.
    ValidationRows { req: u32, edge: u32, triples: Vec<LexicalTriple> },
    /// Synchronization and completion replies.
    Ack { body: AckBody },
}

impl Message {
    pub fn tag(&self) -> u8 {
        match self {
            Message::LoadDone { .. } => 0,
            Message::StatsReport { .. } => 1,
            Message::QueryBroadcast { .. } => 2,
            Message::SubqueryProjection { .. } => 3,
            Message::CandidateRows { .. } => 4,
            Message::PartialResult { .. } => 5,
            Message::RedistBegin { .. } => 6,
            Message::RedistTriples { .. } => 7,
            Message::RedistCommit { .. } => 8,
            Message::RedistAbort { .. } => 9,
            Message::UpdateBatch { .. } => 10,
            Message::ValidationRequest { .. } => 11,
            Message::ValidationRows { .. } => 12,
            Message::Ack { .. } => 13,
        }
    }

    pub fn tag_name(&self) -> &'static str {
        TAG_NAMES[self.tag() as usize]
    }
}

// ---------------------------------------------------------------------------
// Primitive writers/readers

pub(crate) fn put_u8(buf: &mut Vec<u8>, v: u8) {
    buf.push(v);
}

pub(crate) fn put_u16(buf: &mut Vec<u8>, v: u16) {
    buf.extend_from_slice(&v.to_be_bytes());
}

pub(crate) fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_be_bytes());
}

pub(crate) fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_be_bytes());
}

pub(crate) fn put_f64(buf: &mut Vec<u8>, v: f64) {
    put_u64(buf, v.to_bits());
}

pub(crate) fn put_str(buf: &mut Vec<u8>, s: &str) {
    assert!(s.len() <= u16::MAX as usize, "string too long for wire: {} bytes", s.len());
    put_u16(buf, s.len() as u16);
    buf.extend_from_slice(s.as_bytes());
}

/// Cursor over a received frame body.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Reader<'a> {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::WireDecode(format!(
                "frame truncated: wanted {} bytes at offset {} of {}",
                n,
                self.pos,
                self.buf.len()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub fn string(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|e| Error::WireDecode(format!("invalid UTF-8 on wire: {e}")))
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::WireDecode(format!(
                "{} trailing bytes after frame body",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Composite encoders

fn put_term(buf: &mut Vec<u8>, t: &PatternTerm) {
    match t {
        PatternTerm::Var(v) => {
            put_u8(buf, 0);
            put_str(buf, v);
        }
        PatternTerm::Const(c) => {
            put_u8(buf, 1);
            put_str(buf, c);
        }
    }
}

fn read_term(r: &mut Reader) -> Result<PatternTerm> {
    match r.u8()? {
        0 => Ok(PatternTerm::Var(r.string()?)),
        1 => Ok(PatternTerm::Const(r.string()?)),
        k => Err(Error::WireDecode(format!("bad term kind {k}"))),
    }
}

fn put_pattern(buf: &mut Vec<u8>, p: &TriplePattern) {
    put_term(buf, &p.s);
    put_term(buf, &p.p);
    put_term(buf, &p.o);
}

fn read_pattern(r: &mut Reader) -> Result<TriplePattern> {
    Ok(TriplePattern { s: read_term(r)?, p: read_term(r)?, o: read_term(r)? })
}

fn put_label(buf: &mut Vec<u8>, l: &Label) {
    match l {
        Label::Any => put_u8(buf, 0),
        Label::Const(c) => {
            put_u8(buf, 1);
            put_str(buf, c);
        }
    }
}

fn read_label(r: &mut Reader) -> Result<Label> {
    match r.u8()? {
        0 => Ok(Label::Any),
        1 => Ok(Label::Const(r.string()?)),
        k => Err(Error::WireDecode(format!("bad label kind {k}"))),
    }
}

fn put_triples(buf: &mut Vec<u8>, ts: &[LexicalTriple]) {
    put_u32(buf, ts.len() as u32);
    for t in ts {
        put_str(buf, &t[0]);
        put_str(buf, &t[1]);
        put_str(buf, &t[2]);
    }
}

fn read_triples(r: &mut Reader) -> Result<Vec<LexicalTriple>> {
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        out.push([r.string()?, r.string()?, r.string()?]);
    }
    Ok(out)
}

pub(crate) fn put_string_rows(buf: &mut Vec<u8>, cols: &[String], rows: &[Vec<String>]) {
    put_u16(buf, cols.len() as u16);
    for c in cols {
        put_str(buf, c);
    }
    put_u32(buf, rows.len() as u32);
    for row in rows {
        debug_assert_eq!(row.len(), cols.len());
        for v in row {
            put_str(buf, v);
        }
    }
}

pub(crate) fn read_string_rows(r: &mut Reader) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let ncols = r.u16()? as usize;
    let mut cols = Vec::with_capacity(ncols);
    for _ in 0..ncols {
        cols.push(r.string()?);
    }
    let nrows = r.u32()? as usize;
    let mut rows = Vec::with_capacity(nrows.min(1 << 20));
    for _ in 0..nrows {
        let mut row = Vec::with_capacity(ncols);
        for _ in 0..ncols {
            row.push(r.string()?);
        }
        rows.push(row);
    }
    Ok((cols, rows))
}

fn put_report(buf: &mut Vec<u8>, rep: &WorkerReport) {
    put_u64(buf, rep.main_triples);
    put_u64(buf, rep.replica_triples);
    for tag in &rep.per_tag {
        for &v in tag {
            put_u64(buf, v);
        }
    }
}

fn read_report(r: &mut Reader) -> Result<WorkerReport> {
    let mut rep = WorkerReport {
        main_triples: r.u64()?,
        replica_triples: r.u64()?,
        per_tag: [[0; 4]; TAG_COUNT],
    };
    for tag in &mut rep.per_tag {
        for v in tag.iter_mut() {
            *v = r.u64()?;
        }
    }
    Ok(rep)
}

fn put_body(buf: &mut Vec<u8>, msg: &Message) {
    match msg {
        Message::LoadDone { ctx } => put_u32(buf, *ctx),
        Message::StatsReport { ctx, stats } => {
            put_u32(buf, *ctx);
            put_u16(buf, stats.len() as u16);
            for s in stats {
                put_str(buf, &s.predicate);
                put_f64(buf, s.p_s);
                put_f64(buf, s.p_o);
            }
        }
        Message::QueryBroadcast { ctx, patterns, task } => {
            put_u32(buf, *ctx);
            put_u16(buf, patterns.len() as u16);
            for p in patterns {
                put_pattern(buf, p);
            }
            match task {
                QueryTask::Estimate => put_u8(buf, 0),
                QueryTask::Semijoin { steps } => {
                    put_u8(buf, 1);
                    put_u16(buf, steps.len() as u16);
                    for st in steps {
                        put_u16(buf, st.pattern as u16);
                        put_u16(buf, st.join_vars.len() as u16);
                        for v in &st.join_vars {
                            put_str(buf, v);
                        }
                    }
                }
                QueryTask::Parallel { steps } => {
                    put_u8(buf, 2);
                    put_u16(buf, steps.len() as u16);
                    for (edge, pat) in steps {
                        put_u32(buf, *edge);
                        put_u16(buf, *pat as u16);
                    }
                }
            }
        }
        Message::SubqueryProjection { ctx, step, cols, rows } => {
            put_u32(buf, *ctx);
            put_u32(buf, *step);
            put_string_rows(buf, cols, rows);
        }
        Message::CandidateRows { ctx, step, cols, rows } => {
            put_u32(buf, *ctx);
            put_u32(buf, *step);
            put_string_rows(buf, cols, rows);
        }
        Message::PartialResult { ctx, cols, rows } => {
            put_u32(buf, *ctx);
            put_string_rows(buf, cols, rows);
        }
        Message::RedistBegin { ctx, batch } => {
            put_u32(buf, *ctx);
            put_label(buf, &batch.root);
            put_u16(buf, batch.edges.len() as u16);
            for e in &batch.edges {
                put_u32(buf, e.id);
                match e.parent {
                    Some(p) => {
                        put_u8(buf, 1);
                        put_u32(buf, p);
                    }
                    None => {
                        put_u8(buf, 0);
                        put_u32(buf, 0);
                    }
                }
                put_u32(buf, e.level);
                put_str(buf, &e.predicate);
                put_u8(buf, e.parent_on.as_u8());
                put_label(buf, &e.child);
            }
        }
        Message::RedistTriples { edge, triples } => {
            put_u32(buf, *edge);
            put_triples(buf, triples);
        }
        Message::RedistCommit { ctx } => put_u32(buf, *ctx),
        Message::RedistAbort { ctx } => put_u32(buf, *ctx),
        Message::UpdateBatch { ctx, ops } => {
            put_u32(buf, *ctx);
            put_u32(buf, ops.len() as u32);
            for op in ops {
                match op {
                    UpdateOp::Insert { triple, worker } => {
                        put_u8(buf, 0);
                        put_u32(buf, *worker);
                        put_str(buf, &triple[0]);
                        put_str(buf, &triple[1]);
                        put_str(buf, &triple[2]);
                    }
                    UpdateOp::Delete { triple } => {
                        put_u8(buf, 1);
                        put_u32(buf, u32::MAX);
                        put_str(buf, &triple[0]);
                        put_str(buf, &triple[1]);
                        put_str(buf, &triple[2]);
                    }
                }
            }
        }
        Message::ValidationRequest { req, edge, bindings } => {
            put_u32(buf, *req);
            put_u32(buf, *edge);
            put_u32(buf, bindings.len() as u32);
            for b in bindings {
                put_str(buf, b);
            }
        }
        Message::ValidationRows { req, edge, triples } => {
            put_u32(buf, *req);
            put_u32(buf, *edge);
            put_triples(buf, triples);
        }
        Message::Ack { body } => match body {
            AckBody::Plain { ctx } => {
                put_u8(buf, 0);
                put_u32(buf, *ctx);
            }
            AckBody::Counts { ctx, counts } => {
                put_u8(buf, 1);
                put_u32(buf, *ctx);
                put_u16(buf, counts.len() as u16);
                for &c in counts {
                    put_u64(buf, c);
                }
            }
            AckBody::Done { ctx, report } => {
                put_u8(buf, 2);
                put_u32(buf, *ctx);
                put_report(buf, report);
            }
        },
    }
}

fn read_body(tag: u8, r: &mut Reader) -> Result<Message> {
    Ok(match tag {
        0 => Message::LoadDone { ctx: r.u32()? },
        1 => {
            let ctx = r.u32()?;
            let n = r.u16()? as usize;
            let mut stats = Vec::with_capacity(n);
            for _ in 0..n {
                stats.push(LocalPredicateStats {
                    predicate: r.string()?,
                    p_s: r.f64()?,
                    p_o: r.f64()?,
                });
            }
            Message::StatsReport { ctx, stats }
        }
        2 => {
            let ctx = r.u32()?;
            let np = r.u16()? as usize;
            let mut patterns = Vec::with_capacity(np);
            for _ in 0..np {
                patterns.push(read_pattern(r)?);
            }
            let task = match r.u8()? {
                0 => QueryTask::Estimate,
                1 => {
                    let ns = r.u16()? as usize;
                    let mut steps = Vec::with_capacity(ns);
                    for _ in 0..ns {
                        let pattern = r.u16()? as usize;
                        let nv = r.u16()? as usize;
                        let mut join_vars = Vec::with_capacity(nv);
                        for _ in 0..nv {
                            join_vars.push(r.string()?);
                        }
                        steps.push(JoinStep { pattern, join_vars });
                    }
                    QueryTask::Semijoin { steps }
                }
                2 => {
                    let ns = r.u16()? as usize;
                    let mut steps = Vec::with_capacity(ns);
                    for _ in 0..ns {
                        let edge = r.u32()?;
                        let pat = r.u16()? as usize;
                        steps.push((edge, pat));
                    }
                    QueryTask::Parallel { steps }
                }
                k => return Err(Error::WireDecode(format!("bad query task kind {k}"))),
            };
            Message::QueryBroadcast { ctx, patterns, task }
        }
        3 => {
            let ctx = r.u32()?;
            let step = r.u32()?;
            let (cols, rows) = read_string_rows(r)?;
            Message::SubqueryProjection { ctx, step, cols, rows }
        }
        4 => {
            let ctx = r.u32()?;
            let step = r.u32()?;
            let (cols, rows) = read_string_rows(r)?;
            Message::CandidateRows { ctx, step, cols, rows }
        }
        5 => {
            let ctx = r.u32()?;
            let (cols, rows) = read_string_rows(r)?;
            Message::PartialResult { ctx, cols, rows }
        }
        6 => {
            let ctx = r.u32()?;
            let root = read_label(r)?;
            let n = r.u16()? as usize;
            let mut edges = Vec::with_capacity(n);
            for _ in 0..n {
                let id = r.u32()?;
                let has_parent = r.u8()? != 0;
                let parent_raw = r.u32()?;
                let parent = has_parent.then_some(parent_raw);
                edges.push(NewEdge {
                    id,
                    parent,
                    level: r.u32()?,
                    predicate: r.string()?,
                    parent_on: Side::from_u8(r.u8()?)?,
                    child: read_label(r)?,
                });
            }
            Message::RedistBegin { ctx, batch: RedistBatch { root, edges } }
        }
        7 => Message::RedistTriples { edge: r.u32()?, triples: read_triples(r)? },
        8 => Message::RedistCommit { ctx: r.u32()? },
        9 => Message::RedistAbort { ctx: r.u32()? },
        10 => {
            let ctx = r.u32()?;
            let n = r.u32()? as usize;
            let mut ops = Vec::with_capacity(n.min(1 << 20));
            for _ in 0..n {
                let kind = r.u8()?;
                let worker = r.u32()?;
                let triple = [r.string()?, r.string()?, r.string()?];
                ops.push(match kind {
                    0 => UpdateOp::Insert { triple, worker },
                    1 => UpdateOp::Delete { triple },
                    k => return Err(Error::WireDecode(format!("bad update op kind {k}"))),
                });
            }
            Message::UpdateBatch { ctx, ops }
        }
        11 => {
            let req = r.u32()?;
            let edge = r.u32()?;
            let n = r.u32()? as usize;
            let mut bindings = Vec::with_capacity(n.min(1 << 20));
            for _ in 0..n {
                bindings.push(r.string()?);
            }
            Message::ValidationRequest { req, edge, bindings }
        }
        12 => Message::ValidationRows {
            req: r.u32()?,
            edge: r.u32()?,
            triples: read_triples(r)?,
        },
        13 => {
            let body = match r.u8()? {
                0 => AckBody::Plain { ctx: r.u32()? },
                1 => {
                    let ctx = r.u32()?;
                    let n = r.u16()? as usize;
                    let mut counts = Vec::with_capacity(n);
                    for _ in 0..n {
                        counts.push(r.u64()?);
                    }
                    AckBody::Counts { ctx, counts }
                }
                2 => AckBody::Done { ctx: r.u32()?, report: read_report(r)? },
                k => return Err(Error::WireDecode(format!("bad ack kind {k}"))),
            };
            Message::Ack { body }
        }
        t => return Err(Error::WireDecode(format!("unknown message tag {t}"))),
    })
}

/// Encodes a message into a complete frame, length prefix included.
pub fn encode_frame(sender: NodeId, msg: &Message) -> Vec<u8> {
    let mut body = Vec::with_capacity(64);
    put_body(&mut body, msg);
    let mut frame = Vec::with_capacity(body.len() + 9);
    put_u32(&mut frame, (1 + 4 + body.len()) as u32);
    put_u8(&mut frame, msg.tag());
    put_u32(&mut frame, sender);
    frame.extend_from_slice(&body);
    frame
}

/// Exact frame size [`encode_frame`] would produce, without encoding. Used
/// to fold a completion ack's own traffic into the report it carries.
pub fn done_ack_frame_len() -> usize {
    // length + tag + sender + ack kind + ctx + report
    4 + 1 + 4 + 1 + 4 + WorkerReport::WIDTH
}

/// Decodes a complete frame (length prefix included).
pub fn decode_frame(frame: &[u8]) -> Result<(NodeId, Message)> {
    if frame.len() < 9 {
        return Err(Error::WireDecode(format!("frame too short: {} bytes", frame.len())));
    }
    let declared = u32::from_be_bytes(frame[0..4].try_into().unwrap()) as usize;
    if declared != frame.len() - 4 {
        return Err(Error::WireDecode(format!(
            "frame length prefix {} does not match payload {}",
            declared,
            frame.len() - 4
        )));
    }
    let tag = frame[4];
    let sender = u32::from_be_bytes(frame[5..9].try_into().unwrap());
    let mut r = Reader::new(&frame[9..]);
    let msg = read_body(tag, &mut r)?;
    r.finish()?;
    Ok((sender, msg))
}
