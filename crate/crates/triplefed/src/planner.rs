//! Query planning: core-vertex selection, redistribution-tree
//! construction, join ordering, and the variable-connectivity screen.
//!
//! The redistribution tree spans a query graph from its highest-scoring
//! vertex (the core). Every query edge appears exactly once; vertices may
//! repeat along different paths. Construction keeps a pending list seeded
//! with the core's incident edges and repeatedly extracts the pending edge
//! whose unexplored endpoint scores highest, attaching it under the edge
//! that discovered it — so score never increases along a root-to-leaf
//! path, and deeper levels replicate less. Traversal ignores the
//! direction of the underlying triples; direction is remembered per edge
//! as which side faces the parent.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::sparql::{BgpQuery, PatternTerm, QueryGraph};
use crate::stats::{vertex_score, GlobalStats};

/// Which column of a pattern's triple binds the parent vertex of its tree
/// edge. The parent side fixes a redistributed triple's placement; the
/// opposite (child) side drives the next level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Subject,
    Object,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Subject => Side::Object,
            Side::Object => Side::Subject,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Side::Subject => 0,
            Side::Object => 1,
        }
    }

    pub fn from_u8(b: u8) -> Result<Side> {
        match b {
            0 => Ok(Side::Subject),
            1 => Ok(Side::Object),
            other => Err(Error::WireDecode(format!("bad side byte {other}"))),
        }
    }
}

/// A vertex label as the structural indexes see it: variables collapse to
/// a single wildcard, constants keep their lexical.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Any,
    Const(String),
}

impl Label {
    pub fn of(term: &PatternTerm) -> Label {
        match term {
            PatternTerm::Var(_) => Label::Any,
            PatternTerm::Const(c) => Label::Const(c.clone()),
        }
    }

    /// Covering for eligibility: a wildcard in the index matches any query
    /// label; a constant matches only itself.
    pub fn covers(&self, query: &Label) -> bool {
        match self {
            Label::Any => true,
            Label::Const(c) => matches!(query, Label::Const(q) if q == c),
        }
    }
}

/// One query edge placed in the redistribution tree.
#[derive(Debug, Clone)]
pub struct TreeEdge {
    /// Index into the query graph's edge list (and the query's patterns).
    pub pattern: usize,
    /// Position of the parent tree edge in [`RedistTree::edges`]; none at
    /// level 1.
    pub parent: Option<usize>,
    pub level: u32,
    /// Graph vertex shared with the parent (the core for level 1).
    pub parent_vertex: usize,
    /// The other endpoint; equals `parent_vertex` for self-loops.
    pub child_vertex: usize,
    /// Which triple column binds `parent_vertex`.
    pub parent_on: Side,
}

#[derive(Debug, Clone)]
pub struct RedistTree {
    /// Core graph-vertex index.
    pub root: usize,
    /// Edges in extraction order; parents always precede children.
    pub edges: Vec<TreeEdge>,
    pub levels: u32,
}

/// Scores every vertex of the graph.
pub fn vertex_scores(g: &QueryGraph, eff: &GlobalStats) -> Vec<f64> {
    (0..g.vertices.len()).map(|v| vertex_score(g, v, eff)).collect()
}

/// Picks the highest-scoring vertex; ties go to the lexicographically
/// smallest vertex token. All-minus-infinity means no vertex can anchor a
/// redistribution and the query stays in exchange mode.
pub fn select_core(g: &QueryGraph, eff: &GlobalStats) -> Result<usize> {
    let scores = vertex_scores(g, eff);
    let mut best: Option<usize> = None;
    for v in 0..g.vertices.len() {
        if scores[v] == f64::NEG_INFINITY {
            continue;
        }
        best = match best {
            None => Some(v),
            Some(b) => {
                if scores[v] > scores[b]
                    || (scores[v] == scores[b] && g.vertex_token(v) < g.vertex_token(b))
                {
                    Some(v)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.ok_or(Error::NoCore)
}

struct Pending {
    edge: usize,
    parent_tree: Option<usize>,
    parent_vertex: usize,
    child_vertex: usize,
    insertion: usize,
}

/// Builds the redistribution tree rooted at `core`.
pub fn build_redistribution_tree(
    g: &QueryGraph,
    core: usize,
    eff: &GlobalStats,
) -> Result<RedistTree> {
    let scores = vertex_scores(g, eff);
    let pred_of = |e: usize| g.edges[e].predicate.token().to_owned();

    #[derive(PartialEq, Clone, Copy)]
    enum State {
        Unexplored,
        Pending,
        Done,
    }
    let mut state = vec![State::Unexplored; g.edges.len()];
    let mut pending: Vec<Pending> = Vec::new();
    let mut insertion = 0usize;

    let push = |edge: usize,
                    parent_tree: Option<usize>,
                    parent_vertex: usize,
                    pending: &mut Vec<Pending>,
                    state: &mut Vec<State>,
                    insertion: &mut usize| {
        let ge = &g.edges[edge];
        let child_vertex = if ge.u == parent_vertex { ge.v } else { ge.u };
        pending.push(Pending {
            edge,
            parent_tree,
            parent_vertex,
            child_vertex,
            insertion: *insertion,
        });
        *insertion += 1;
        state[edge] = State::Pending;
    };

    for e in 0..g.edges.len() {
        if g.edges[e].u == core || g.edges[e].v == core {
            push(e, None, core, &mut pending, &mut state, &mut insertion);
        }
    }

    let mut edges: Vec<TreeEdge> = Vec::with_capacity(g.edges.len());
    let mut levels = 0u32;
    while !pending.is_empty() {
        // Highest child-vertex score; ties by predicate lexical, then by
        // discovery order.
        let mut best = 0usize;
        for i in 1..pending.len() {
            let (a, b) = (&pending[i], &pending[best]);
            let (sa, sb) = (scores[a.child_vertex], scores[b.child_vertex]);
            let better = sa > sb
                || (sa == sb
                    && (pred_of(a.edge), a.insertion) < (pred_of(b.edge), b.insertion));
            if better {
                best = i;
            }
        }
        let p = pending.swap_remove(best);
        let ge = &g.edges[p.edge];
        let parent_on = if ge.u == p.parent_vertex { Side::Subject } else { Side::Object };
        let level = match p.parent_tree {
            None => 1,
            Some(t) => edges[t].level + 1,
        };
        levels = levels.max(level);
        let at = edges.len();
        edges.push(TreeEdge {
            pattern: ge.pattern,
            parent: p.parent_tree,
            level,
            parent_vertex: p.parent_vertex,
            child_vertex: p.child_vertex,
            parent_on,
        });
        state[p.edge] = State::Done;
        // Unexplored edges adjacent to this one always hang off its child
        // vertex: anything sharing the parent vertex was discovered when
        // the parent was placed (or seeded, for the core).
        for f in 0..g.edges.len() {
            if state[f] == State::Unexplored
                && (g.edges[f].u == p.child_vertex || g.edges[f].v == p.child_vertex)
            {
                push(f, Some(at), p.child_vertex, &mut pending, &mut state, &mut insertion);
            }
        }
    }

    if edges.len() != g.edges.len() {
        // Unreachable for connected graphs, which to_query_graph enforces.
        return Err(Error::InvalidState(
            "redistribution tree did not cover every query edge".into(),
        ));
    }
    Ok(RedistTree { root: core, edges, levels })
}

// ---------------------------------------------------------------------------
// Join ordering

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinStep {
    /// Pattern index in the query.
    pub pattern: usize,
    /// Variables shared with the accumulated prefix; empty only for the
    /// first step.
    pub join_vars: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinPlan {
    pub steps: Vec<JoinStep>,
}

/// Variables of a pattern including a variable predicate.
fn pattern_vars(q: &BgpQuery, i: usize) -> Vec<String> {
    q.patterns[i].vars().into_iter().map(str::to_owned).collect()
}

/// Rejects multi-pattern queries whose patterns do not all connect through
/// shared variables: evaluating them would need a cartesian product.
pub fn check_variable_connectivity(q: &BgpQuery) -> Result<()> {
    if q.patterns.len() <= 1 {
        return Ok(());
    }
    let vars: Vec<HashSet<String>> = (0..q.patterns.len())
        .map(|i| pattern_vars(q, i).into_iter().collect())
        .collect();
    let mut joined = vec![false; q.patterns.len()];
    let mut frontier = vec![0usize];
    joined[0] = true;
    let mut reached_vars: HashSet<String> = vars[0].clone();
    while !frontier.is_empty() {
        frontier.clear();
        for i in 0..q.patterns.len() {
            if !joined[i] && !vars[i].is_disjoint(&reached_vars) {
                joined[i] = true;
                reached_vars.extend(vars[i].iter().cloned());
                frontier.push(i);
            }
        }
    }
    if let Some(lost) = joined.iter().position(|j| !j) {
        return Err(Error::UnsupportedQuery(format!(
            "pattern {} shares no variable with the rest of the query; \
             cartesian products are not executed",
            lost + 1
        )));
    }
    Ok(())
}

/// Orders patterns least-cardinality-first into a chain where every step
/// joins on at least one prefix variable. `cards[i]` estimates pattern
/// `i`'s result size; ties keep textual order.
pub fn order_joins(q: &BgpQuery, cards: &[u64]) -> Result<JoinPlan> {
    check_variable_connectivity(q)?;
    assert_eq!(cards.len(), q.patterns.len());
    let n = q.patterns.len();
    let mut used = vec![false; n];
    let mut steps = Vec::with_capacity(n);

    let first = (0..n).min_by_key(|&i| (cards[i], i)).expect("nonempty query");
    used[first] = true;
    let mut prefix_vars: HashSet<String> = pattern_vars(q, first).into_iter().collect();
    steps.push(JoinStep { pattern: first, join_vars: Vec::new() });

    for _ in 1..n {
        let next = (0..n)
            .filter(|&i| !used[i])
            .filter(|&i| pattern_vars(q, i).iter().any(|v| prefix_vars.contains(v)))
            .min_by_key(|&i| (cards[i], i))
            .expect("connectivity checked above");
        used[next] = true;
        let join_vars: Vec<String> = pattern_vars(q, next)
            .into_iter()
            .filter(|v| prefix_vars.contains(v))
            .collect();
        prefix_vars.extend(pattern_vars(q, next));
        steps.push(JoinStep { pattern: next, join_vars });
    }
    Ok(JoinPlan { steps })
}
