//! Execution helpers shared by the master and the workers.
//!
//! Two evaluation modes exist. Exchange mode joins patterns over the
//! main indexes step by step, shipping projections and surviving
//! candidate rows between workers at every step. Local mode evaluates an
//! embedded query entirely from replica modules, one pattern per module,
//! with no data messages at all — the redistribution invariant
//! guarantees every result row is assembled whole on the worker its root
//! binding hashes to.
//!
//! Workers ship full binding rows (every query variable) back to the
//! master, which merges: header check, optional root-disjointness check,
//! projection, deduplication, and a lexicographic sort for stable
//! output.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::index::Embedding;
use crate::planner::RedistTree;
use crate::sparql::BgpQuery;

/// Orders an embedded query's tree edges for local evaluation: start at
/// the first extracted edge, then repeatedly take the lowest
/// `(level, extraction position)` edge that shares a variable with what
/// has been joined so far — constants do not connect joins, so an edge
/// adjacent only through a constant waits until a variable path reaches
/// it. Returns `(replica module id, pattern index)` per step.
pub fn parallel_order(
    tree: &RedistTree,
    emb: &Embedding,
    q: &BgpQuery,
) -> Result<Vec<(u32, usize)>> {
    let n = tree.edges.len();
    debug_assert_eq!(emb.edge_ids.len(), n);
    let vars_of = |pos: usize| -> Vec<&str> { q.patterns[tree.edges[pos].pattern].vars() };
    let mut used = vec![false; n];
    let mut acc: HashSet<String> = HashSet::new();
    let mut out = Vec::with_capacity(n);

    for step in 0..n {
        let candidate = (0..n)
            .filter(|&i| !used[i])
            .filter(|&i| step == 0 || vars_of(i).iter().any(|v| acc.contains(*v)))
            .min_by_key(|&i| (tree.edges[i].level, i));
        let Some(pos) = candidate else {
            return Err(Error::InvalidState(
                "no variable-connected pattern left to join".into(),
            ));
        };
        used[pos] = true;
        acc.extend(vars_of(pos).iter().map(|v| (*v).to_owned()));
        out.push((emb.edge_ids[pos], tree.edges[pos].pattern));
    }
    Ok(out)
}

/// Indexes of `want` within `cols`; errors if any is missing.
pub fn col_indices(cols: &[String], want: &[String]) -> Result<Vec<usize>> {
    want.iter()
        .map(|w| {
            cols.iter()
                .position(|c| c == w)
                .ok_or_else(|| Error::InvalidState(format!("column {w} missing from header")))
        })
        .collect()
}

/// Distinct projections of lexical rows onto the given column indexes,
/// first occurrence order.
pub fn distinct_projection(rows: &[Vec<String>], idx: &[usize]) -> Vec<Vec<String>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rows {
        let key: Vec<String> = idx.iter().map(|&i| row[i].clone()).collect();
        if seen.insert(key.clone()) {
            out.push(key);
        }
    }
    out
}

/// Rows whose projection onto `idx` appears in `allowed` — the semi-join
/// that decides which local candidates one peer needs.
pub fn semi_filter(
    rows: &[Vec<String>],
    idx: &[usize],
    allowed: &HashSet<Vec<String>>,
) -> Vec<Vec<String>> {
    rows.iter()
        .filter(|row| {
            let key: Vec<String> = idx.iter().map(|&i| row[i].clone()).collect();
            allowed.contains(&key)
        })
        .cloned()
        .collect()
}

/// Merges workers' full binding rows into the final answer: verifies the
/// shared header, optionally checks that no two workers produced the
/// same root binding (the locality invariant of replica evaluation),
/// projects to the query's selected variables, deduplicates, and sorts.
pub fn merge_partials(
    partials: &[(u32, Vec<String>, Vec<Vec<String>>)],
    q: &BgpQuery,
    root_var: Option<&str>,
) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let header = match partials.first() {
        Some((_, cols, _)) => cols.clone(),
        None => q.projection.clone(),
    };
    for (sender, cols, _) in partials {
        if *cols != header {
            return Err(Error::InvalidState(format!(
                "worker {sender} answered with mismatched header"
            )));
        }
    }

    #[cfg(debug_assertions)]
    if let Some(rv) = root_var {
        if let Some(root_col) = header.iter().position(|h| h == rv) {
            let mut owner: std::collections::HashMap<&String, u32> =
                std::collections::HashMap::new();
            for (sender, _, rows) in partials {
                for row in rows {
                    let prev = owner.insert(&row[root_col], *sender);
                    debug_assert!(
                        prev.is_none() || prev == Some(*sender),
                        "root binding {} produced by workers {} and {}",
                        row[root_col],
                        prev.unwrap(),
                        sender
                    );
                }
            }
        }
    }
    #[cfg(not(debug_assertions))]
    let _ = root_var;

    let idx = col_indices(&header, &q.projection)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (_, _, rows) in partials {
        for row in rows {
            let projected: Vec<String> = idx.iter().map(|&i| row[i].clone()).collect();
            if seen.insert(projected.clone()) {
                out.push(projected);
            }
        }
    }
    out.sort();
    Ok((q.projection.clone(), out))
}
