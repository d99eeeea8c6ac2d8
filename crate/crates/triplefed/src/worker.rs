//! The worker node: owns one shard of the data and answers the master's
//! commands.
//!
//! A worker holds its main index (the hash-partitioned shard), a mirror
//! of the structural catalog, and one storage module per catalog edge
//! with the replica triples this worker is responsible for. The command
//! loop blocks on top-level messages; mid-phase traffic from peers that
//! are already further along parks in the endpoint's pending buffer until
//! the phase that consumes it starts. Everything a worker does is driven
//! by messages — there is no shared state between nodes.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::cluster::{
    AckBody, Endpoint, Message, NodeId, QueryTask, Transport, UpdateOp, MAIN_EDGE, MASTER,
    SHUTDOWN_CTX,
};
use crate::config::{Config, HashPins, Partitioner};
use crate::error::{Error, Result};
use crate::exec::{col_indices, semi_filter};
use crate::index::{NewEdge, RedistBatch, StructIndex};
use crate::planner::{JoinStep, Label, Side};
use crate::rdf::{LexicalTriple, TermId, Triple};
use crate::sparql::TriplePattern;
use crate::stats::compute_local_stats;
use crate::store::{answer_subquery, local_hash_join, BindingTable, StorageModule, WorkerStore};

/// Messages a worker acts on from its command loop. Everything else is
/// phase traffic and waits in the pending buffer for the phase that
/// expects it.
fn actionable(msg: &Message) -> bool {
    matches!(
        msg,
        Message::LoadDone { .. }
            | Message::QueryBroadcast { .. }
            | Message::RedistBegin { .. }
            | Message::RedistCommit { .. }
            | Message::RedistAbort { .. }
            | Message::UpdateBatch { .. }
            | Message::ValidationRequest { .. }
    ) || matches!(msg, Message::RedistTriples { edge, .. } if *edge == MAIN_EDGE)
}

/// Main matches of one catalog edge's subquery, with constant labels
/// narrowing the scan. Unknown constants match nothing.
fn main_matches(
    store: &WorkerStore,
    predicate: &str,
    parent_on: Side,
    parent: &Label,
    child: &Label,
) -> Result<Vec<LexicalTriple>> {
    let Some(p) = store.dict.lookup(predicate) else {
        return Ok(Vec::new());
    };
    let fix = |l: &Label| -> Option<Option<TermId>> {
        match l {
            Label::Any => Some(None),
            Label::Const(c) => store.dict.lookup(c).map(Some),
        }
    };
    let (s_label, o_label) = match parent_on {
        Side::Subject => (parent, child),
        Side::Object => (child, parent),
    };
    let (Some(s), Some(o)) = (fix(s_label), fix(o_label)) else {
        return Ok(Vec::new());
    };
    store
        .main
        .matching_pairs(p, s, o)
        .into_iter()
        .map(|(s, o)| store.dict.resolve_triple(Triple { s, p, o }))
        .collect()
}

/// Answers one validation request from the (stable) main index: which of
/// my main triples attach to `edge` under the given parent bindings?
fn serve_validation(
    store: &WorkerStore,
    index: &StructIndex,
    ep: &mut Endpoint,
    from: NodeId,
    req: u32,
    edge: u32,
    bindings: &[String],
) -> Result<()> {
    let meta = index
        .edge(edge)
        .ok_or_else(|| Error::InvalidState(format!("validation against unknown edge {edge}")))?;
    let parent = index.parent_label(edge)?;
    let matches = main_matches(store, &meta.predicate, meta.parent_on, &parent, &meta.child)?;
    let pcol = match meta.parent_on {
        Side::Subject => 0,
        Side::Object => 2,
    };
    let allowed: HashSet<&str> = bindings.iter().map(String::as_str).collect();
    let triples: Vec<LexicalTriple> = matches
        .into_iter()
        .filter(|t| allowed.contains(t[pcol].as_str()))
        .collect();
    ep.send(from, &Message::ValidationRows { req, edge, triples })
}

/// One worker node. Created with its transport already meshed, then
/// driven entirely by [`Worker::run`].
pub struct Worker {
    id: u32,
    n: u32,
    ep: Endpoint,
    store: WorkerStore,
    index: StructIndex,
    /// Replica triples per catalog edge id. Staged edges get an (empty)
    /// module immediately; an abort drops them again.
    modules: HashMap<u32, StorageModule>,
    partitioner: Partitioner,
    timeout: u64,
    req_seq: u32,
}

impl Worker {
    pub fn new(id: u32, transport: Box<dyn Transport>, cfg: &Config) -> Result<Worker> {
        let pins = match &cfg.hash_pin_file {
            Some(path) => HashPins::from_file(path)?,
            None => HashPins::default(),
        };
        Ok(Worker {
            id,
            n: cfg.n_workers as u32,
            ep: Endpoint::new(id, transport),
            store: WorkerStore::new(),
            index: StructIndex::new(),
            modules: HashMap::new(),
            partitioner: Partitioner::new(cfg.n_workers, pins),
            timeout: cfg.barrier_timeout_ms,
            req_seq: 0,
        })
    }

    /// The command loop. Returns when told to shut down or when the
    /// transport dies; per-command errors are reported and survived.
    pub fn run(&mut self) -> Result<()> {
        loop {
            let got = self.ep.collect(|_, m| actionable(m), 1, 1_000);
            let (from, msg) = match got {
                Ok(mut v) => v.pop().expect("collect returned one message"),
                Err(Error::BarrierTimeout(..)) => continue, // idle
                Err(e) => return Err(e),
            };
            if matches!(msg, Message::RedistAbort { ctx } if ctx == SHUTDOWN_CTX) {
                return Ok(());
            }
            if let Err(e) = self.handle(from, msg) {
                match e {
                    Error::Transport(_) => return Err(e),
                    e => eprintln!("worker {}: {e}", self.id),
                }
            }
        }
    }

    fn handle(&mut self, from: NodeId, msg: Message) -> Result<()> {
        match msg {
            Message::LoadDone { ctx } => {
                let stats = compute_local_stats(&self.store);
                self.ep.send(MASTER, &Message::StatsReport { ctx, stats })?;
                self.report(ctx)
            }
            Message::RedistTriples { edge, triples } => {
                debug_assert_eq!(edge, MAIN_EDGE, "module rows are collected in-phase");
                for t in &triples {
                    self.store.insert_lexical(t);
                }
                Ok(())
            }
            Message::QueryBroadcast { ctx, patterns, task } => match task {
                QueryTask::Estimate => self.estimate(ctx, &patterns),
                QueryTask::Semijoin { steps } => {
                    let table = self.run_semijoin(ctx, &patterns, &steps)?;
                    self.send_partial(ctx, &table)
                }
                QueryTask::Parallel { steps } => {
                    let table = self.run_parallel(&patterns, &steps)?;
                    self.send_partial(ctx, &table)
                }
            },
            Message::RedistBegin { ctx, batch } => self.handle_redist(ctx, batch),
            Message::RedistCommit { ctx: _ } => {
                self.index.commit_staged();
                Ok(())
            }
            Message::RedistAbort { ctx: _ } => {
                for id in self.index.abort_staged() {
                    self.modules.remove(&id);
                }
                Ok(())
            }
            Message::UpdateBatch { ctx, ops } => self.handle_update(ctx, &ops),
            Message::ValidationRequest { req, edge, bindings } => {
                serve_validation(&self.store, &self.index, &mut self.ep, from, req, edge, &bindings)
            }
            other => Err(Error::InvalidState(format!(
                "unexpected top-level {} from node {from}",
                other.tag_name()
            ))),
        }
    }

    // -- reporting ---------------------------------------------------------

    fn replica_total(&self) -> u64 {
        self.modules.values().map(|m| m.len() as u64).sum()
    }

    fn report(&mut self, ctx: u32) -> Result<()> {
        let main = self.store.main.len() as u64;
        let replica = self.replica_total();
        self.ep.send_report(MASTER, ctx, main, replica)
    }

    // -- queries -----------------------------------------------------------

    fn estimate(&mut self, ctx: u32, patterns: &[TriplePattern]) -> Result<()> {
        let mut counts = Vec::with_capacity(patterns.len());
        for tp in patterns {
            counts.push(self.store.answer_pattern(tp)?.len() as u64);
        }
        self.ep.send(MASTER, &Message::Ack { body: AckBody::Counts { ctx, counts } })
    }

    /// The exchange pipeline: every step after the first broadcasts the
    /// prefix's join-column projection, filters the local pattern rows per
    /// sender, and joins the prefix with the union of everyone's
    /// candidates.
    fn run_semijoin(
        &mut self,
        ctx: u32,
        patterns: &[TriplePattern],
        steps: &[JoinStep],
    ) -> Result<BindingTable> {
        let mut prefix: Option<BindingTable> = None;
        for (step_no, st) in steps.iter().enumerate() {
            let tp = patterns.get(st.pattern).ok_or_else(|| {
                Error::InvalidState(format!("join step names pattern {}", st.pattern))
            })?;
            let local = self.store.answer_pattern(tp)?;
            let Some(pre) = prefix.take() else {
                prefix = Some(local);
                continue;
            };
            let step = step_no as u32;

            // My prefix projection on the join columns, to everyone.
            let jcols = pre.cols(&st.join_vars)?;
            let mut proj: Vec<Vec<String>> = Vec::new();
            for row in pre.project_distinct(&jcols) {
                let mut out = Vec::with_capacity(row.len());
                for id in row {
                    out.push(self.store.dict.resolve(id)?.to_owned());
                }
                proj.push(out);
            }
            proj.sort();
            for w in 0..self.n {
                self.ep.send(
                    w,
                    &Message::SubqueryProjection {
                        ctx,
                        step,
                        cols: st.join_vars.clone(),
                        rows: proj.clone(),
                    },
                )?;
            }

            let local_cols = local.header.clone();
            let local_rows = local.resolve_rows(&self.store.dict)?;
            let key_idx = col_indices(&local_cols, &st.join_vars)?;

            // Everyone's projections; each gets back my rows surviving its
            // projection (possibly none — the message still flows, it is
            // the barrier).
            let projections = self.ep.collect(
                |_, m| {
                    matches!(m, Message::SubqueryProjection { ctx: c, step: s, .. }
                        if *c == ctx && *s == step)
                },
                self.n as usize,
                self.timeout,
            )?;
            for (sender, msg) in projections {
                let Message::SubqueryProjection { rows, .. } = msg else { unreachable!() };
                let allowed: HashSet<Vec<String>> = rows.into_iter().collect();
                let rows = semi_filter(&local_rows, &key_idx, &allowed);
                self.ep.send(
                    sender,
                    &Message::CandidateRows { ctx, step, cols: local_cols.clone(), rows },
                )?;
            }

            let candidates = self.ep.collect(
                |_, m| {
                    matches!(m, Message::CandidateRows { ctx: c, step: s, .. }
                        if *c == ctx && *s == step)
                },
                self.n as usize,
                self.timeout,
            )?;
            let mut table = BindingTable::new(local_cols);
            for (_, msg) in candidates {
                let Message::CandidateRows { rows, .. } = msg else { unreachable!() };
                for row in rows {
                    let ids = row.iter().map(|v| self.store.dict.intern(v)).collect();
                    table.push(ids);
                }
            }
            prefix = Some(local_hash_join(&pre, &table)?);
        }
        prefix.ok_or_else(|| Error::InvalidState("empty join plan".into()))
    }

    /// Communication-free evaluation over replica modules: every step
    /// reads one module and joins locally; partial results are complete
    /// because each worker holds whole groups rooted at its share of the
    /// root bindings.
    fn run_parallel(
        &mut self,
        patterns: &[TriplePattern],
        steps: &[(u32, usize)],
    ) -> Result<BindingTable> {
        let mut prefix: Option<BindingTable> = None;
        for &(edge_id, pat) in steps {
            let module = self
                .modules
                .get(&edge_id)
                .ok_or_else(|| Error::InvalidState(format!("no module for edge {edge_id}")))?;
            let tp = patterns
                .get(pat)
                .ok_or_else(|| Error::InvalidState(format!("task names pattern {pat}")))?;
            let table = answer_subquery(module, tp, &self.store.dict)?;
            prefix = Some(match prefix.take() {
                None => table,
                Some(pre) => local_hash_join(&pre, &table)?,
            });
        }
        prefix.ok_or_else(|| Error::InvalidState("empty parallel plan".into()))
    }

    fn send_partial(&mut self, ctx: u32, table: &BindingTable) -> Result<()> {
        let rows = table.resolve_rows(&self.store.dict)?;
        self.ep
            .send(MASTER, &Message::PartialResult { ctx, cols: table.header.clone(), rows })?;
        self.report(ctx)
    }

    // -- redistribution ----------------------------------------------------

    /// Builds the staged modules level by level. Level 1 hash-distributes
    /// main matches on the root binding; deeper levels ship matches to
    /// exactly the workers whose parent modules bind them.
    fn handle_redist(&mut self, ctx: u32, batch: RedistBatch) -> Result<()> {
        self.index.apply_begin(&batch)?;
        for e in &batch.edges {
            self.modules.insert(e.id, StorageModule::new());
        }
        let mut by_level: BTreeMap<u32, Vec<&NewEdge>> = BTreeMap::new();
        for e in &batch.edges {
            by_level.entry(e.level).or_default().push(e);
        }
        for (level, edges) in &by_level {
            if *level == 1 {
                self.redist_level1(&batch.root, edges)?;
            } else {
                self.redist_deeper(ctx, edges)?;
            }
        }
        self.report(ctx)
    }

    fn redist_level1(&mut self, root: &Label, edges: &[&NewEdge]) -> Result<()> {
        for e in edges {
            let mut per: Vec<Vec<LexicalTriple>> = vec![Vec::new(); self.n as usize];
            for t in main_matches(&self.store, &e.predicate, e.parent_on, root, &e.child)? {
                let root_val = match e.parent_on {
                    Side::Subject => &t[0],
                    Side::Object => &t[2],
                };
                per[self.partitioner.worker_for(root_val) as usize].push(t.clone());
            }
            for (w, mut triples) in per.into_iter().enumerate() {
                triples.sort();
                self.ep.send(w as u32, &Message::RedistTriples { edge: e.id, triples })?;
            }
        }
        for e in edges {
            self.collect_module_rows(e.id)?;
        }
        Ok(())
    }

    fn redist_deeper(&mut self, ctx: u32, edges: &[&NewEdge]) -> Result<()> {
        // Round 1: everyone learns which parent bindings each worker holds.
        for e in edges {
            let parent_id = e.parent.ok_or_else(|| {
                Error::InvalidState(format!("edge {} at level {} lacks a parent", e.id, e.level))
            })?;
            let rows: Vec<Vec<String>> =
                self.module_child_values(parent_id)?.into_iter().map(|v| vec![v]).collect();
            for w in 0..self.n {
                self.ep.send(
                    w,
                    &Message::SubqueryProjection {
                        ctx,
                        step: e.id,
                        cols: vec!["?parent".to_owned()],
                        rows: rows.clone(),
                    },
                )?;
            }
        }
        // Round 2: per edge, answer each sender with the main matches its
        // bindings admit, then collect my own module rows.
        for e in edges {
            let parent_label = self.index.parent_label(e.id)?;
            let matches =
                main_matches(&self.store, &e.predicate, e.parent_on, &parent_label, &e.child)?;
            let pcol = match e.parent_on {
                Side::Subject => 0,
                Side::Object => 2,
            };
            let projections = self.ep.collect(
                |_, m| {
                    matches!(m, Message::SubqueryProjection { ctx: c, step: s, .. }
                        if *c == ctx && *s == e.id)
                },
                self.n as usize,
                self.timeout,
            )?;
            for (sender, msg) in projections {
                let Message::SubqueryProjection { rows, .. } = msg else { unreachable!() };
                let allowed: HashSet<&str> =
                    rows.iter().filter_map(|r| r.first()).map(String::as_str).collect();
                let triples: Vec<LexicalTriple> = matches
                    .iter()
                    .filter(|t| allowed.contains(t[pcol].as_str()))
                    .cloned()
                    .collect();
                self.ep.send(sender, &Message::RedistTriples { edge: e.id, triples })?;
            }
            self.collect_module_rows(e.id)?;
        }
        Ok(())
    }

    /// Barrier on the `n` per-sender triple shipments for one module.
    fn collect_module_rows(&mut self, edge: u32) -> Result<()> {
        let shipments = self.ep.collect(
            |_, m| matches!(m, Message::RedistTriples { edge: e, .. } if *e == edge),
            self.n as usize,
            self.timeout,
        )?;
        let mut module = self
            .modules
            .remove(&edge)
            .ok_or_else(|| Error::InvalidState(format!("no staged module for edge {edge}")))?;
        for (_, msg) in shipments {
            let Message::RedistTriples { triples, .. } = msg else { unreachable!() };
            for t in &triples {
                let interned = self.store.dict.intern_triple(t);
                module.insert(interned);
            }
        }
        self.modules.insert(edge, module);
        Ok(())
    }

    /// Distinct child-column values of one of my modules, sorted.
    fn module_child_values(&self, edge: u32) -> Result<Vec<String>> {
        let meta = self
            .index
            .edge(edge)
            .ok_or_else(|| Error::InvalidState(format!("unknown parent edge {edge}")))?;
        let module = self
            .modules
            .get(&edge)
            .ok_or_else(|| Error::InvalidState(format!("no module for parent edge {edge}")))?;
        let child_side = meta.parent_on.opposite();
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for t in module.triples() {
            let v = match child_side {
                Side::Subject => t.s,
                Side::Object => t.o,
            };
            if seen.insert(v) {
                out.push(self.store.dict.resolve(v)?.to_owned());
            }
        }
        out.sort();
        Ok(out)
    }

    // -- updates -----------------------------------------------------------

    /// Two-phase mutation. Phase A changes main indexes everywhere and
    /// synchronizes on the master, so phase B's validation lookups read a
    /// stable main state on every node. Phase B maintains replica modules
    /// in batch order.
    fn handle_update(&mut self, ctx: u32, ops: &[UpdateOp]) -> Result<()> {
        for op in ops {
            match op {
                UpdateOp::Delete { triple } => {
                    self.store.delete_lexical(triple);
                }
                UpdateOp::Insert { triple, worker } => {
                    if *worker == self.id {
                        self.store.insert_lexical(triple);
                    }
                }
            }
        }
        self.ep.send(MASTER, &Message::Ack { body: AckBody::Plain { ctx } })?;
        self.await_go(ctx)?;
        for op in ops {
            match op {
                UpdateOp::Delete { triple } => self.replica_delete(triple)?,
                UpdateOp::Insert { triple, .. } => self.replica_insert(triple)?,
            }
        }
        self.report(ctx)
    }

    /// Waits for the master's go-ahead, answering peers' validation
    /// lookups in the meantime (they may be in phase B already).
    fn await_go(&mut self, ctx: u32) -> Result<()> {
        let store = &self.store;
        let index = &self.index;
        self.ep
            .collect_with(
                |from, m| {
                    from == MASTER
                        && matches!(m, Message::Ack { body: AckBody::Plain { ctx: c } } if *c == ctx)
                },
                1,
                self.timeout,
                |ep, from, msg| match msg {
                    Message::ValidationRequest { req, edge, bindings } => {
                        serve_validation(store, index, ep, from, req, edge, &bindings)?;
                        Ok(true)
                    }
                    _ => Ok(false),
                },
            )
            .map(|_| ())
    }

    /// Inserts one triple wherever the replica structure admits it. A
    /// level-1 module takes it when the root binding hashes here; a deeper
    /// module when my copy of the parent module already binds the
    /// parent-side value.
    fn replica_insert(&mut self, triple: &LexicalTriple) -> Result<()> {
        for id in self.index.active_edge_ids() {
            let meta = self.index.edge(id).expect("listed edge exists");
            if meta.predicate != triple[1] {
                continue;
            }
            let (parent_val, child_val) = match meta.parent_on {
                Side::Subject => (&triple[0], &triple[2]),
                Side::Object => (&triple[2], &triple[0]),
            };
            if !label_admits(&meta.child, child_val) {
                continue;
            }
            let attach = match meta.parent {
                None => {
                    label_admits(&self.index.parent_label(id)?, parent_val)
                        && self.partitioner.worker_for(parent_val) == self.id
                }
                Some(parent_id) => match self.store.dict.lookup(parent_val) {
                    Some(v) => self.module_binds(parent_id, v)?,
                    None => false,
                },
            };
            if attach {
                self.attach_to_replica(id, triple)?;
            }
        }
        Ok(())
    }

    /// Whether my module for `edge` has any row whose child column equals
    /// `value` — i.e. the value is bound here and children may hang off it.
    fn module_binds(&self, edge: u32, value: TermId) -> Result<bool> {
        let meta = self
            .index
            .edge(edge)
            .ok_or_else(|| Error::InvalidState(format!("unknown edge {edge}")))?;
        let module = self
            .modules
            .get(&edge)
            .ok_or_else(|| Error::InvalidState(format!("no module for edge {edge}")))?;
        let Some(p) = self.store.dict.lookup(&meta.predicate) else {
            return Ok(false);
        };
        let (s, o) = match meta.parent_on.opposite() {
            Side::Subject => (Some(value), None),
            Side::Object => (None, Some(value)),
        };
        Ok(!module.matching_pairs(p, s, o).is_empty())
    }

    /// Appends a triple to one module. A child value bound for the first
    /// time asks the whole cluster (self included) which main triples now
    /// attach under it at each child edge, and appends those recursively.
    fn attach_to_replica(&mut self, edge: u32, triple: &LexicalTriple) -> Result<()> {
        let meta = self
            .index
            .edge(edge)
            .ok_or_else(|| Error::InvalidState(format!("unknown edge {edge}")))?
            .clone();
        let t = self.store.dict.intern_triple(triple);
        let child_val = match meta.parent_on {
            Side::Subject => t.o,
            Side::Object => t.s,
        };
        let freshly_bound = !self.module_binds(edge, child_val)?;
        let inserted = self
            .modules
            .get_mut(&edge)
            .ok_or_else(|| Error::InvalidState(format!("no module for edge {edge}")))?
            .insert(t);
        if !inserted || !freshly_bound {
            return Ok(());
        }
        let children: Vec<u32> = meta
            .children
            .iter()
            .copied()
            .filter(|c| self.index.edge(*c).is_some_and(|e| e.active))
            .collect();
        if children.is_empty() {
            return Ok(());
        }
        let binding = self.store.dict.resolve(child_val)?.to_owned();
        for child_edge in children {
            let req = self.req_seq;
            self.req_seq = self.req_seq.wrapping_add(1);
            for w in 0..self.n {
                self.ep.send(
                    w,
                    &Message::ValidationRequest {
                        req,
                        edge: child_edge,
                        bindings: vec![binding.clone()],
                    },
                )?;
            }
            let replies = {
                let store = &self.store;
                let index = &self.index;
                self.ep.collect_with(
                    |_, m| {
                        matches!(m, Message::ValidationRows { req: r, edge: e, .. }
                            if *r == req && *e == child_edge)
                    },
                    self.n as usize,
                    self.timeout,
                    |ep, from, msg| match msg {
                        Message::ValidationRequest { req, edge, bindings } => {
                            serve_validation(store, index, ep, from, req, edge, &bindings)?;
                            Ok(true)
                        }
                        _ => Ok(false),
                    },
                )?
            };
            for (_, msg) in replies {
                let Message::ValidationRows { triples, .. } = msg else { unreachable!() };
                for vt in &triples {
                    self.attach_to_replica(child_edge, vt)?;
                }
            }
        }
        Ok(())
    }

    /// Removes one triple from every module holding it, cascading: when
    /// the removal unbinds a child value, the rows hanging off that value
    /// in child modules go too. Purely local — placement guaranteed that
    /// dependents live on the same worker.
    fn replica_delete(&mut self, triple: &LexicalTriple) -> Result<()> {
        let ids: Option<Vec<TermId>> = triple.iter().map(|x| self.store.dict.lookup(x)).collect();
        let Some(ids) = ids else {
            return Ok(()); // never seen these lexicals: nothing replicated
        };
        let t = Triple { s: ids[0], p: ids[1], o: ids[2] };
        for id in self.index.active_edge_ids() {
            self.detach_from_replica(id, t)?;
        }
        Ok(())
    }

    fn detach_from_replica(&mut self, edge: u32, t: Triple) -> Result<()> {
        let meta = self
            .index
            .edge(edge)
            .ok_or_else(|| Error::InvalidState(format!("unknown edge {edge}")))?
            .clone();
        let removed = match self.modules.get_mut(&edge) {
            Some(module) => module.remove(t),
            None => false,
        };
        if !removed {
            return Ok(());
        }
        let child_val = match meta.parent_on {
            Side::Subject => t.o,
            Side::Object => t.s,
        };
        if self.module_binds(edge, child_val)? {
            return Ok(()); // other rows still bind the value
        }
        for child_edge in meta.children.iter().copied() {
            let Some(child_meta) = self.index.edge(child_edge) else { continue };
            if !child_meta.active {
                continue;
            }
            let Some(p) = self.store.dict.lookup(&child_meta.predicate) else { continue };
            let (s, o) = match child_meta.parent_on {
                Side::Subject => (Some(child_val), None),
                Side::Object => (None, Some(child_val)),
            };
            let victims: Vec<Triple> = match self.modules.get(&child_edge) {
                Some(m) => m
                    .matching_pairs(p, s, o)
                    .into_iter()
                    .map(|(s, o)| Triple { s, p, o })
                    .collect(),
                None => Vec::new(),
            };
            for victim in victims {
                self.detach_from_replica(child_edge, victim)?;
            }
        }
        Ok(())
    }
}

fn label_admits(label: &Label, value: &str) -> bool {
    match label {
        Label::Any => true,
        Label::Const(c) => c == value,
    }
}
