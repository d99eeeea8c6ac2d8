//! Shared helpers for the integration suites: an independent reference
//! evaluator over plain string triples, plus seeded random dataset,
//! query, and placement generators.
//!
//! The evaluator deliberately shares no code with the engine's storage
//! or join machinery — it works on unindexed string triples with its own
//! binding logic, so agreement between the two is meaningful.

#![allow(dead_code)] // each integration target uses its own subset

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use triplefed::rdf::LexicalTriple;
use triplefed::sparql::{BgpQuery, PatternTerm};

/// Fifteen-triple academic graph used across the micro-scenarios.
pub const ACADEMIC_DATA: &str = include_str!("../data/academic.nt");

// -- reference evaluation ----------------------------------------------------

type Binding = HashMap<String, String>;

fn term_matches(term: &PatternTerm, value: &str, b: &Binding) -> Option<Option<(String, String)>> {
    match term {
        PatternTerm::Const(c) => (c == value).then_some(None),
        PatternTerm::Var(v) => match b.get(v) {
            Some(bound) => (bound == value).then_some(None),
            None => Some(Some((v.clone(), value.to_owned()))),
        },
    }
}

/// Evaluates `q` over `data` by brute force: one pattern at a time, each
/// candidate triple checked against every partial binding. Returns the
/// distinct projected rows; a variable-free query yields one empty row
/// when satisfied and none otherwise. `None` when any intermediate
/// binding set grows past `cap` (used to reject pathological samples).
pub fn reference_rows_capped(
    data: &[LexicalTriple],
    q: &BgpQuery,
    cap: usize,
) -> Option<BTreeSet<Vec<String>>> {
    let mut by_pred: HashMap<&str, Vec<&LexicalTriple>> = HashMap::new();
    for t in data {
        by_pred.entry(t[1].as_str()).or_default().push(t);
    }
    let all: Vec<&LexicalTriple> = data.iter().collect();

    let mut bindings: Vec<Binding> = vec![Binding::new()];
    for pat in &q.patterns {
        let candidates: &[&LexicalTriple] = match &pat.p {
            PatternTerm::Const(c) => by_pred.get(c.as_str()).map(Vec::as_slice).unwrap_or(&[]),
            PatternTerm::Var(_) => &all,
        };
        let mut next = Vec::new();
        for b in &bindings {
            for t in candidates {
                let mut extended: Option<Binding> = None;
                let grow = |add: Option<(String, String)>, base: &Binding| {
                    if let Some((k, v)) = add {
                        let mut e = base.clone();
                        e.insert(k, v);
                        Some(e)
                    } else {
                        None
                    }
                };
                // Apply each position's new binding before checking the
                // next so repeated variables in one pattern stay
                // consistent.
                let Some(add) = term_matches(&pat.s, &t[0], b) else { continue };
                if let Some(e) = grow(add, b) {
                    extended = Some(e);
                }
                let eff = extended.clone().unwrap_or_else(|| b.clone());
                let Some(add) = term_matches(&pat.p, &t[1], &eff) else { continue };
                if let Some(e) = grow(add, &eff) {
                    extended = Some(e);
                }
                let eff = extended.clone().unwrap_or_else(|| b.clone());
                let Some(add) = term_matches(&pat.o, &t[2], &eff) else { continue };
                if let Some(e) = grow(add, &eff) {
                    extended = Some(e);
                }
                next.push(extended.unwrap_or_else(|| b.clone()));
                if next.len() > cap {
                    return None;
                }
            }
        }
        bindings = next;
        if bindings.is_empty() {
            break;
        }
    }

    let mut rows = BTreeSet::new();
    for b in &bindings {
        rows.insert(q.projection.iter().map(|v| b[v].clone()).collect());
    }
    Some(rows)
}

pub fn reference_rows(data: &[LexicalTriple], q: &BgpQuery) -> BTreeSet<Vec<String>> {
    reference_rows_capped(data, q, usize::MAX).expect("uncapped")
}

/// Engine result rows as a comparable set.
pub fn row_set(rows: &[Vec<String>]) -> BTreeSet<Vec<String>> {
    rows.iter().cloned().collect()
}

// -- parsing and formatting ---------------------------------------------------

pub fn parse_triples(text: &str) -> Vec<LexicalTriple> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            let mut it = l.split_whitespace();
            let s = it.next().unwrap().to_owned();
            let p = it.next().unwrap().to_owned();
            let o = it.next().unwrap().to_owned();
            [s, p, o]
        })
        .collect()
}

pub fn triples_to_text(triples: &[LexicalTriple]) -> String {
    let mut out = String::new();
    for t in triples {
        out.push_str(&t[0]);
        out.push(' ');
        out.push_str(&t[1]);
        out.push(' ');
        out.push_str(&t[2]);
        out.push_str(" .\n");
    }
    out
}

// -- generators ----------------------------------------------------------------

/// Random directed labeled graph: `n_triples` distinct edges over
/// `n_preds` predicates, with mildly skewed endpoint sampling so some
/// vertices act as hubs the way organic graphs do.
pub fn random_graph(rng: &mut impl Rng, n_triples: usize, n_preds: usize) -> Vec<LexicalTriple> {
    let n_terms = (n_triples / 3).max(8);
    let mut seen = BTreeSet::new();
    let mut triples = Vec::with_capacity(n_triples);
    while triples.len() < n_triples {
        // Squaring a uniform sample skews toward low indices: low-index
        // terms become hubs.
        let mut skew = || {
            let u: f64 = rng.gen();
            (u * u * n_terms as f64) as usize
        };
        let s = format!("e{}", skew());
        let o = format!("e{}", skew());
        let p = format!("p{}", rng.gen_range(0..n_preds));
        let t = [s, p, o];
        if seen.insert(t.clone()) {
            triples.push(t);
        }
    }
    triples
}

/// Connected basic graph pattern sampled from `data`: grows a subgraph
/// edge by edge through shared endpoints, then lifts endpoints shared by
/// several chosen edges to variables (leaves keep their constant some of
/// the time). Returns query text guaranteed to parse and to be
/// variable-connected.
pub fn random_query(rng: &mut impl Rng, data: &[LexicalTriple], n_patterns: usize) -> String {
    let mut incident: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, t) in data.iter().enumerate() {
        incident.entry(t[0].as_str()).or_default().push(i);
        incident.entry(t[2].as_str()).or_default().push(i);
    }

    // Grow a connected edge set; the attempt cap keeps a pathological
    // component from spinning forever.
    let mut chosen: Vec<usize> = Vec::new();
    let mut pool: Vec<&str> = Vec::new();
    let first = rng.gen_range(0..data.len());
    chosen.push(first);
    pool.push(data[first][0].as_str());
    pool.push(data[first][2].as_str());
    let mut attempts = 0;
    while chosen.len() < n_patterns && attempts < 10_000 {
        attempts += 1;
        let v = pool[rng.gen_range(0..pool.len())];
        let edges = &incident[v];
        let e = edges[rng.gen_range(0..edges.len())];
        if !chosen.contains(&e) {
            chosen.push(e);
            pool.push(data[e][0].as_str());
            pool.push(data[e][2].as_str());
        }
    }

    // Endpoints on two or more chosen edges must become variables so the
    // query stays connected through variables alone.
    let mut uses: HashMap<&str, usize> = HashMap::new();
    for &e in &chosen {
        *uses.entry(data[e][0].as_str()).or_default() += 1;
        *uses.entry(data[e][2].as_str()).or_default() += 1;
    }
    let mut names: HashMap<String, String> = HashMap::new();
    let mut n_vars = 0;
    let mut pattern_texts = Vec::new();
    let mut vars: Vec<String> = Vec::new();
    for &e in &chosen {
        let mut mapped = [String::new(), String::new()];
        for (slot, term) in [(0usize, &data[e][0]), (1, &data[e][2])] {
            let name = if let Some(n) = names.get(term.as_str()) {
                n.clone()
            } else {
                let make_var = uses[term.as_str()] > 1 || rng.gen_bool(0.65);
                let name = if make_var {
                    n_vars += 1;
                    format!("?x{n_vars}")
                } else {
                    term.clone()
                };
                names.insert(term.clone(), name.clone());
                name
            };
            if name.starts_with('?') && !vars.contains(&name) {
                vars.push(name.clone());
            }
            mapped[slot] = name;
        }
        pattern_texts.push(format!("{} {} {}", mapped[0], data[e][1], mapped[1]));
    }
    if vars.is_empty() {
        // All-constant sample; force one variable.
        let e = chosen[0];
        pattern_texts[0] = format!("?x1 {} {}", data[e][1], data[e][2]);
        vars.push("?x1".to_owned());
    }

    // Project all variables half the time, otherwise a prefix.
    let projected: Vec<String> = if vars.len() == 1 || rng.gen_bool(0.5) {
        vars.clone()
    } else {
        let keep = rng.gen_range(1..vars.len());
        vars.iter().take(keep).cloned().collect()
    };
    format!("SELECT {} WHERE {{ {} }}", projected.join(" "), pattern_texts.join(" . "))
}

pub fn random_placement(rng: &mut impl Rng, n_triples: usize, n_workers: u32) -> Vec<u32> {
    (0..n_triples).map(|_| rng.gen_range(0..n_workers)).collect()
}
