//! The master node: the cluster's public face.
//!
//! The master owns no triples. It keeps the global predicate statistics,
//! the structural catalog, and the per-template frequency accounting, and
//! turns every client operation into a broadcast/collect exchange with
//! the workers. All run-to-run nondeterminism is confined to message
//! arrival order, which the barriers absorb — the same commands against
//! the same data produce the same answers, placements, and traffic
//! totals.

use std::collections::BTreeMap;
use std::thread::JoinHandle;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cluster::{
    inproc_network, AckBody, ClusterMetrics, Endpoint, Message, QueryTask, Transport, WorkerReport,
    MAIN_EDGE, SHUTDOWN_CTX,
};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::exec::{merge_partials, parallel_order};
use crate::index::StructIndex;
use crate::phd::TemplateStore;
use crate::planner::{
    build_redistribution_tree, check_variable_connectivity, order_joins, select_core, RedistTree,
};
use crate::rdf::{parse_triples, LexicalTriple};
use crate::sparql::{derive_template, parse_query, to_query_graph, BgpQuery, QueryGraph, TemplateKey};
use crate::stats::{aggregate_global, effective_scores, GlobalStats};
use crate::updates::{assign_ops, parse_updates};
use crate::worker::Worker;

/// How a query was executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    /// Distributed semi-joins over the main indexes.
    Semijoin,
    /// Communication-free evaluation over replica modules.
    Parallel,
}

impl ExecMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecMode::Semijoin => "semijoin",
            ExecMode::Parallel => "parallel",
        }
    }
}

impl std::fmt::Display for ExecMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One answered query.
#[derive(Debug, Clone)]
pub struct QueryOutcome {
    pub mode: ExecMode,
    /// Whether answering this query triggered a redistribution first.
    pub redistributed: bool,
    /// Column names, in the query's projection order.
    pub header: Vec<String>,
    /// Distinct rows, lexicographically sorted.
    pub rows: Vec<Vec<String>>,
    pub wall_us: u64,
}

impl QueryOutcome {
    /// Plain-text rendering shared by the CLI and the C interface: the
    /// execution mode on the first line, then `true`/`false` for
    /// variable-free queries or a tab-separated header plus one line per
    /// row.
    pub fn render(&self) -> String {
        render_rows(self.mode.as_str(), &self.header, &self.rows)
    }
}

/// See [`QueryOutcome::render`]; this form works on already-unbundled
/// fields (e.g. rows that arrived over the client protocol).
pub fn render_rows(mode: &str, header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(mode);
    out.push('\n');
    if header.is_empty() {
        out.push_str(if rows.is_empty() { "false" } else { "true" });
        out.push('\n');
    } else {
        out.push_str(&header.join("\t"));
        out.push('\n');
        for row in rows {
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
    }
    out
}

/// One applied update batch.
#[derive(Debug, Clone, Copy)]
pub struct UpdateOutcome {
    pub applied: usize,
    pub wall_us: u64,
}

/// Master-side cluster handle. Start one with [`Cluster::start_inproc`]
/// (workers as threads) or [`Cluster::attach`] (workers elsewhere, e.g.
/// over TCP).
pub struct Cluster {
    cfg: Config,
    n: u32,
    ep: Endpoint,
    stats: GlobalStats,
    index: StructIndex,
    next_edge_id: u32,
    templates: TemplateStore,
    reports: BTreeMap<u32, WorkerReport>,
    ctx: u32,
    rng: ChaCha8Rng,
    timeout: u64,
    handles: Vec<JoinHandle<Result<()>>>,
}

impl Cluster {
    /// Spawns `cfg.n_workers` worker threads over in-process channels and
    /// returns the connected master.
    pub fn start_inproc(cfg: Config) -> Result<Cluster> {
        let mut net = inproc_network(cfg.n_workers as u32);
        let master_transport = net.remove(0);
        let mut handles = Vec::with_capacity(cfg.n_workers);
        for (i, transport) in net.into_iter().enumerate() {
            let mut worker = Worker::new(i as u32, transport, &cfg)?;
            let handle = std::thread::Builder::new()
                .name(format!("worker-{i}"))
                .spawn(move || worker.run())?;
            handles.push(handle);
        }
        let mut cluster = Cluster::attach(cfg, master_transport);
        cluster.handles = handles;
        Ok(cluster)
    }

    /// Wraps an already-meshed master transport. The caller runs the
    /// workers (other processes, usually).
    pub fn attach(cfg: Config, transport: Box<dyn Transport>) -> Cluster {
        let stats = effective_scores(Default::default(), &cfg.type_predicate);
        Cluster {
            n: cfg.n_workers as u32,
            ep: Endpoint::new(crate::cluster::MASTER, transport),
            stats,
            index: StructIndex::new(),
            next_edge_id: 0,
            templates: TemplateStore::new(),
            reports: BTreeMap::new(),
            ctx: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            timeout: cfg.barrier_timeout_ms,
            handles: Vec::new(),
            cfg,
        }
    }

    fn next_ctx(&mut self) -> u32 {
        self.ctx += 1;
        self.ctx
    }

    fn broadcast(&mut self, msg: &Message) -> Result<()> {
        for w in 0..self.n {
            self.ep.send(w, msg)?;
        }
        Ok(())
    }

    /// Barrier on every worker's completion report for a context; folds
    /// the piggybacked storage/traffic counters into the metrics state.
    fn collect_done(&mut self, ctx: u32) -> Result<()> {
        let acks = self.ep.collect(
            |_, m| matches!(m, Message::Ack { body: AckBody::Done { ctx: c, .. } } if *c == ctx),
            self.n as usize,
            self.timeout,
        )?;
        for (from, msg) in acks {
            let Message::Ack { body: AckBody::Done { report, .. } } = msg else { unreachable!() };
            self.reports.insert(from, report);
        }
        Ok(())
    }

    // -- loading -----------------------------------------------------------

    /// Bulk-loads triples: round-robin placement, or per-triple worker ids
    /// when `assign` is given. Recomputes global predicate statistics.
    /// Only allowed while no replica structure exists — redistributed
    /// modules are maintained by updates, not by loads.
    pub fn load_text(&mut self, text: &str, assign: Option<&[u32]>) -> Result<u64> {
        let triples = parse_triples(text)?;
        if !self.index.active_edge_ids().is_empty() {
            return Err(Error::InvalidState(
                "bulk load is only allowed before any redistribution; use updates".into(),
            ));
        }
        if let Some(a) = assign {
            if a.len() != triples.len() {
                return Err(Error::Config(format!(
                    "placement list has {} entries for {} triples",
                    a.len(),
                    triples.len()
                )));
            }
            if let Some(bad) = a.iter().find(|&&w| w >= self.n) {
                return Err(Error::Config(format!(
                    "placement names worker {bad}, cluster has {}",
                    self.n
                )));
            }
        }

        let mut per: Vec<Vec<LexicalTriple>> = vec![Vec::new(); self.n as usize];
        for (i, t) in triples.iter().enumerate() {
            let w = match assign {
                Some(a) => a[i],
                None => (i % self.n as usize) as u32,
            };
            per[w as usize].push(t.clone());
        }
        let ctx = self.next_ctx();
        for (w, chunk) in per.into_iter().enumerate() {
            self.ep.send(w as u32, &Message::RedistTriples { edge: MAIN_EDGE, triples: chunk })?;
        }
        self.broadcast(&Message::LoadDone { ctx })?;

        let stat_msgs = self.ep.collect(
            |_, m| matches!(m, Message::StatsReport { ctx: c, .. } if *c == ctx),
            self.n as usize,
            self.timeout,
        )?;
        self.collect_done(ctx)?;
        let mut locals = Vec::with_capacity(stat_msgs.len());
        for (_, msg) in stat_msgs {
            let Message::StatsReport { stats, .. } = msg else { unreachable!() };
            locals.push(stats);
        }
        self.stats = effective_scores(aggregate_global(&locals), &self.cfg.type_predicate);
        Ok(triples.len() as u64)
    }

    // -- queries -----------------------------------------------------------

    pub fn query_text(&mut self, text: &str) -> Result<QueryOutcome> {
        let q = parse_query(text)?;
        self.run_query(&q)
    }

    /// Answers one query: records its template (possibly redistributing
    /// first), picks the execution mode, runs the distributed evaluation,
    /// and merges the workers' rows. The reported wall time includes any
    /// redistribution this query triggered.
    pub fn run_query(&mut self, q: &BgpQuery) -> Result<QueryOutcome> {
        let t0 = Instant::now();
        let g = to_query_graph(q)?;
        check_variable_connectivity(q)?;

        let d = derive_template(q)?;
        let seen = self.templates.record(&d, self.cfg.freq_threshold);
        let mut redistributed = false;
        if seen.crossed && self.replication_ratio() < self.cfg.rho_max {
            redistributed = self.adapt(&d.key)?;
        }

        let (mode, header, rows) = match self.parallel_task(q, &g)? {
            Some((steps, root_var)) => {
                let ctx = self.next_ctx();
                self.broadcast(&Message::QueryBroadcast {
                    ctx,
                    patterns: q.patterns.clone(),
                    task: QueryTask::Parallel { steps },
                })?;
                let partials = self.collect_partials(ctx)?;
                self.collect_done(ctx)?;
                let (header, rows) = merge_partials(&partials, q, root_var.as_deref())?;
                (ExecMode::Parallel, header, rows)
            }
            None => {
                let ctx = self.next_ctx();
                self.broadcast(&Message::QueryBroadcast {
                    ctx,
                    patterns: q.patterns.clone(),
                    task: QueryTask::Estimate,
                })?;
                let cards = self.collect_counts(ctx, q.patterns.len())?;
                let plan = order_joins(q, &cards)?;
                let ctx = self.next_ctx();
                self.broadcast(&Message::QueryBroadcast {
                    ctx,
                    patterns: q.patterns.clone(),
                    task: QueryTask::Semijoin { steps: plan.steps },
                })?;
                let partials = self.collect_partials(ctx)?;
                self.collect_done(ctx)?;
                let (header, rows) = merge_partials(&partials, q, None)?;
                (ExecMode::Semijoin, header, rows)
            }
        };

        Ok(QueryOutcome {
            mode,
            redistributed,
            header,
            rows,
            wall_us: t0.elapsed().as_micros() as u64,
        })
    }

    /// Decides whether the active structure can answer this query without
    /// exchange: no variable predicates, a usable core, and an embedding
    /// of the query's redistribution tree. Returns the per-step module
    /// ids and the root variable (for the locality check).
    fn parallel_task(
        &self,
        q: &BgpQuery,
        g: &QueryGraph,
    ) -> Result<Option<(Vec<(u32, usize)>, Option<String>)>> {
        if q.patterns.iter().any(|p| p.p.is_var()) {
            return Ok(None);
        }
        let core = match select_core(g, &self.stats) {
            Ok(core) => core,
            Err(Error::NoCore) => return Ok(None),
            Err(e) => return Err(e),
        };
        let tree = build_redistribution_tree(g, core, &self.stats)?;
        let Some(embedding) = self.index.find_embedding(&tree, g) else {
            return Ok(None);
        };
        let steps = parallel_order(&tree, &embedding, q)?;
        let root_token = g.vertex_token(tree.root);
        let root_var = root_token.starts_with('?').then(|| root_token.to_owned());
        Ok(Some((steps, root_var)))
    }

    fn collect_partials(&mut self, ctx: u32) -> Result<Vec<(u32, Vec<String>, Vec<Vec<String>>)>> {
        let msgs = self.ep.collect(
            |_, m| matches!(m, Message::PartialResult { ctx: c, .. } if *c == ctx),
            self.n as usize,
            self.timeout,
        )?;
        let mut partials = Vec::with_capacity(msgs.len());
        for (from, msg) in msgs {
            let Message::PartialResult { cols, rows, .. } = msg else { unreachable!() };
            partials.push((from, cols, rows));
        }
        partials.sort_by_key(|(from, _, _)| *from);
        Ok(partials)
    }

    fn collect_counts(&mut self, ctx: u32, n_patterns: usize) -> Result<Vec<u64>> {
        let acks = self.ep.collect(
            |_, m| matches!(m, Message::Ack { body: AckBody::Counts { ctx: c, .. } } if *c == ctx),
            self.n as usize,
            self.timeout,
        )?;
        let mut totals = vec![0u64; n_patterns];
        for (from, msg) in acks {
            let Message::Ack { body: AckBody::Counts { counts, .. } } = msg else { unreachable!() };
            if counts.len() != n_patterns {
                return Err(Error::InvalidState(format!(
                    "worker {from} estimated {} of {n_patterns} patterns",
                    counts.len()
                )));
            }
            for (total, c) in totals.iter_mut().zip(&counts) {
                *total += c;
            }
        }
        Ok(totals)
    }

    // -- adaptivity --------------------------------------------------------

    /// Turns a just-crossed template into a redistribution. Skips quietly
    /// when the template cannot be instantiated, has no usable core, or
    /// is already covered by the active structure.
    fn adapt(&mut self, key: &TemplateKey) -> Result<bool> {
        let Some(iq) = self.templates.instantiate(key, self.cfg.proactivity_threshold) else {
            return Ok(false);
        };
        let g = to_query_graph(&iq)?;
        let core = match select_core(&g, &self.stats) {
            Ok(core) => core,
            Err(Error::NoCore) => return Ok(false),
            Err(e) => return Err(e),
        };
        let tree = build_redistribution_tree(&g, core, &self.stats)?;
        self.redistribute(&tree, &g)
    }

    /// Plans and applies a redistribution, directly from an explicit
    /// query. Exposed for operational use; normal adaptation goes through
    /// the frequency trigger.
    pub fn redistribute_for(&mut self, text: &str) -> Result<bool> {
        let q = parse_query(text)?;
        let g = to_query_graph(&q)?;
        let core = select_core(&g, &self.stats)?;
        let tree = build_redistribution_tree(&g, core, &self.stats)?;
        self.redistribute(&tree, &g)
    }

    /// Stage → build → commit across the cluster; abort on any failure.
    /// Returns false when the structure already covers the tree (nothing
    /// to move). Edge ids advance even on abort so ids are never reused.
    fn redistribute(&mut self, tree: &RedistTree, g: &QueryGraph) -> Result<bool> {
        let mut next = self.next_edge_id;
        let batch = self.index.plan_additions(tree, g, &mut next)?;
        self.next_edge_id = next;
        if batch.edges.is_empty() {
            return Ok(false);
        }
        let ctx = self.next_ctx();
        self.index.apply_begin(&batch)?;
        self.broadcast(&Message::RedistBegin { ctx, batch })?;
        match self.collect_done(ctx) {
            Ok(()) => {
                self.broadcast(&Message::RedistCommit { ctx })?;
                self.index.commit_staged();
                Ok(true)
            }
            Err(e) => {
                let _ = self.broadcast(&Message::RedistAbort { ctx });
                self.index.abort_staged();
                Err(e)
            }
        }
    }

    // -- updates -----------------------------------------------------------

    /// Applies an update batch everywhere: main indexes first (inserts at
    /// a seeded random home), then, after a cluster-wide barrier, replica
    /// maintenance against the settled main state.
    pub fn update_text(&mut self, text: &str) -> Result<UpdateOutcome> {
        let t0 = Instant::now();
        let items = parse_updates(text)?;
        let applied = items.len();
        let ops = assign_ops(&items, self.n, &mut self.rng);
        let ctx = self.next_ctx();
        self.broadcast(&Message::UpdateBatch { ctx, ops })?;
        self.ep.collect(
            |_, m| matches!(m, Message::Ack { body: AckBody::Plain { ctx: c } } if *c == ctx),
            self.n as usize,
            self.timeout,
        )?;
        self.broadcast(&Message::Ack { body: AckBody::Plain { ctx } })?;
        self.collect_done(ctx)?;
        Ok(UpdateOutcome { applied, wall_us: t0.elapsed().as_micros() as u64 })
    }

    // -- observability -----------------------------------------------------

    /// Storage and traffic counters, as of the workers' last completion
    /// reports.
    pub fn metrics(&self) -> ClusterMetrics {
        ClusterMetrics::assemble(&self.reports, &self.ep.metrics)
    }

    /// Replicated triples as a fraction of main triples, cluster-wide.
    pub fn replication_ratio(&self) -> f64 {
        let main: u64 = self.reports.values().map(|r| r.main_triples).sum();
        let replica: u64 = self.reports.values().map(|r| r.replica_triples).sum();
        if main == 0 {
            0.0
        } else {
            replica as f64 / main as f64
        }
    }

    /// Occurrences recorded so far for the template of `text`.
    pub fn template_count(&self, text: &str) -> Result<u64> {
        let d = derive_template(&parse_query(text)?)?;
        Ok(self.templates.count(&d.key))
    }

    /// Stops every worker and joins the threads this cluster spawned.
    pub fn shutdown(mut self) -> Result<()> {
        for w in 0..self.n {
            // Best effort: one dead worker must not wedge the rest.
            let _ = self.ep.send(w, &Message::RedistAbort { ctx: SHUTDOWN_CTX });
        }
        let mut first_err = None;
        for handle in self.handles.drain(..) {
            match handle.join() {
                Ok(Ok(())) => {}
                Ok(Err(e)) => first_err = first_err.or(Some(e)),
                Err(_) => {
                    first_err =
                        first_err.or(Some(Error::InvalidState("worker thread panicked".into())))
                }
            }
        }
        match first_err {
            None => Ok(()),
            Some(e) => Err(e),
        }
    }
}
