//! Predicate and vertex scoring.
//!
//! Each worker computes, per predicate `p`, the mean local degree of the
//! distinct subjects appearing with `p` (the subject score) and likewise
//! for objects (the object score). Degrees are local in+out counts — no
//! cross-worker unification, so the global picture is an approximation by
//! design. The master averages the per-worker scores unweighted, then
//! filters: the reserved type predicate and predicates whose score is an
//! extreme high outlier (more than three population standard deviations
//! above the mean of that score's distribution) are forced to −∞ so they
//! can never anchor a redistribution.
//!
//! A query-graph vertex is scored by the best score among its incident
//! edges: subject scores of outgoing predicates, object scores of
//! incoming ones. The maximum names the core vertex candidate.

use std::collections::HashMap;

use crate::sparql::{PatternTerm, QueryGraph};
use crate::store::WorkerStore;

/// Per-predicate scores computed on one worker, shipped to the master as
/// (lexical, subject score, object score).
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPredicateStats {
    pub predicate: String,
    pub p_s: f64,
    pub p_o: f64,
}

/// Computes local predicate scores from a loaded store. Output is sorted
/// by predicate lexical so reports are deterministic.
pub fn compute_local_stats(store: &WorkerStore) -> Vec<LocalPredicateStats> {
    let mut out = Vec::new();
    for p in store.main.predicates() {
        let mean_degree = |ids: Vec<crate::rdf::TermId>| -> f64 {
            if ids.is_empty() {
                return 0.0;
            }
            let sum: u64 = ids.iter().map(|&v| store.degree(v)).sum();
            sum as f64 / ids.len() as f64
        };
        let p_s = mean_degree(store.main.subjects_of(p).collect());
        let p_o = mean_degree(store.main.objects_of(p).collect());
        let predicate = store
            .dict
            .resolve(p)
            .expect("predicate id from own index")
            .to_owned();
        out.push(LocalPredicateStats { predicate, p_s, p_o });
    }
    out.sort_by(|a, b| a.predicate.cmp(&b.predicate));
    out
}

/// Unweighted per-predicate mean over the workers that reported the
/// predicate.
pub fn aggregate_global(reports: &[Vec<LocalPredicateStats>]) -> HashMap<String, (f64, f64)> {
    let mut acc: HashMap<String, (f64, f64, u32)> = HashMap::new();
    for report in reports {
        for s in report {
            let e = acc.entry(s.predicate.clone()).or_insert((0.0, 0.0, 0));
            e.0 += s.p_s;
            e.1 += s.p_o;
            e.2 += 1;
        }
    }
    acc.into_iter()
        .map(|(p, (s, o, n))| (p, (s / f64::from(n), o / f64::from(n))))
        .collect()
}

/// Global predicate scores: raw averages plus the effective values after
/// filtering. Unknown predicates are effectively −∞ on both sides.
#[derive(Debug, Clone, Default)]
pub struct GlobalStats {
    raw: HashMap<String, (f64, f64)>,
    effective: HashMap<String, (f64, f64)>,
    pub mean_s: f64,
    pub stddev_s: f64,
    pub mean_o: f64,
    pub stddev_o: f64,
}

fn population_mean_stddev(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Applies the filter: type predicate out, extreme high outliers out
/// (strictly more than mean + 3·stddev on either score kills both scores).
pub fn effective_scores(raw: HashMap<String, (f64, f64)>, type_predicate: &str) -> GlobalStats {
    let s_vals: Vec<f64> = raw.values().map(|v| v.0).collect();
    let o_vals: Vec<f64> = raw.values().map(|v| v.1).collect();
    let (mean_s, stddev_s) = population_mean_stddev(&s_vals);
    let (mean_o, stddev_o) = population_mean_stddev(&o_vals);
    let mut effective = HashMap::new();
    for (p, &(ps, po)) in &raw {
        let filtered = p == type_predicate
            || ps > mean_s + 3.0 * stddev_s
            || po > mean_o + 3.0 * stddev_o;
        let v = if filtered {
            (f64::NEG_INFINITY, f64::NEG_INFINITY)
        } else {
            (ps, po)
        };
        effective.insert(p.clone(), v);
    }
    GlobalStats { raw, effective, mean_s, stddev_s, mean_o, stddev_o }
}

impl GlobalStats {
    /// Pinned scores for tests and offline planning: the given values are
    /// taken as already-effective.
    pub fn from_scores(scores: &[(&str, f64, f64)]) -> GlobalStats {
        let map: HashMap<String, (f64, f64)> = scores
            .iter()
            .map(|(p, s, o)| ((*p).to_owned(), (*s, *o)))
            .collect();
        GlobalStats { raw: map.clone(), effective: map, ..GlobalStats::default() }
    }

    pub fn p_s(&self, predicate: &str) -> f64 {
        self.effective
            .get(predicate)
            .map(|v| v.0)
            .unwrap_or(f64::NEG_INFINITY)
    }

    pub fn p_o(&self, predicate: &str) -> f64 {
        self.effective
            .get(predicate)
            .map(|v| v.1)
            .unwrap_or(f64::NEG_INFINITY)
    }

    pub fn raw_scores(&self, predicate: &str) -> Option<(f64, f64)> {
        self.raw.get(predicate).copied()
    }

    pub fn raw_map(&self) -> &HashMap<String, (f64, f64)> {
        &self.raw
    }
}

/// Scores one query-graph vertex: max over outgoing-edge subject scores
/// and incoming-edge object scores. Variable predicates contribute −∞
/// (queries holding them never reach redistribution anyway).
pub fn vertex_score(g: &QueryGraph, v: usize, eff: &GlobalStats) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for e in &g.edges {
        let score = |outgoing: bool| match &e.predicate {
            PatternTerm::Const(p) => {
                if outgoing {
                    eff.p_s(p)
                } else {
                    eff.p_o(p)
                }
            }
            PatternTerm::Var(_) => f64::NEG_INFINITY,
        };
        if e.u == v {
            best = best.max(score(true));
        }
        if e.v == v {
            best = best.max(score(false));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdf::parse_triples;
    use crate::sparql::{parse_query, to_query_graph};

    fn store_from(text: &str) -> WorkerStore {
        let mut ws = WorkerStore::new();
        for t in parse_triples(text).unwrap() {
            ws.insert_lexical(&t);
        }
        ws
    }

    fn stat<'a>(stats: &'a [LocalPredicateStats], p: &str) -> &'a LocalPredicateStats {
        stats.iter().find(|s| s.predicate == p).unwrap()
    }

    #[test]
    fn worksfor_scores_on_reference_graph() {
        let ws = store_from(include_str!("../tests/data/faculty.nt"));
        let stats = compute_local_stats(&ws);
        let wf = stat(&stats, "worksFor");
        // Subjects Prof.Williams/Prof.James/Prof.Dan have degrees 3, 4, 3.
        assert!((wf.p_s - 10.0 / 3.0).abs() < 0.01);
        // Objects Stanford-CS (degree 4) and MIT-CS (degree 3).
        assert!((wf.p_o - 3.5).abs() < 1e-12);
    }

    #[test]
    fn isolated_edge_scores_one() {
        let ws = store_from("a p b .\n");
        let stats = compute_local_stats(&ws);
        assert_eq!(stat(&stats, "p").p_s, 1.0);
        assert_eq!(stat(&stats, "p").p_o, 1.0);
    }

    #[test]
    fn aggregate_is_identity_for_one_worker() {
        let ws = store_from(include_str!("../tests/data/academic.nt"));
        let local = compute_local_stats(&ws);
        let global = aggregate_global(std::slice::from_ref(&local));
        for s in &local {
            let g = global[&s.predicate];
            assert_eq!(g.0, s.p_s);
            assert_eq!(g.1, s.p_o);
        }
    }

    #[test]
    fn aggregate_means_across_workers() {
        let a = vec![LocalPredicateStats { predicate: "p".into(), p_s: 2.0, p_o: 1.0 }];
        let b = vec![LocalPredicateStats { predicate: "p".into(), p_s: 4.0, p_o: 3.0 }];
        let g = aggregate_global(&[a, b]);
        assert_eq!(g["p"], (3.0, 2.0));
    }

    #[test]
    fn type_predicate_is_filtered() {
        let mut raw = HashMap::new();
        raw.insert("type".to_owned(), (5.0, 5.0));
        raw.insert("p".to_owned(), (2.0, 2.0));
        let eff = effective_scores(raw, "type");
        assert_eq!(eff.p_s("type"), f64::NEG_INFINITY);
        assert_eq!(eff.p_o("type"), f64::NEG_INFINITY);
        assert_eq!(eff.p_s("p"), 2.0);
    }

    #[test]
    fn single_predicate_survives_filter() {
        let mut raw = HashMap::new();
        raw.insert("only".to_owned(), (7.0, 3.0));
        let eff = effective_scores(raw, "type");
        assert_eq!(eff.p_s("only"), 7.0);
        assert_eq!(eff.p_o("only"), 3.0);
    }

    #[test]
    fn outlier_filter_is_one_sided_and_strict() {
        // pS values {1,1,1,1,100): mean 20.8, population stddev ≈ 39.6;
        // 100 < 20.8 + 3·39.6 ≈ 139.6, so nothing is filtered.
        let mut raw = HashMap::new();
        for (i, v) in [1.0, 1.0, 1.0, 1.0, 100.0].iter().enumerate() {
            raw.insert(format!("p{i}"), (*v, 1.0));
        }
        let eff = effective_scores(raw, "type");
        assert_eq!(eff.p_s("p4"), 100.0);

        // A much wilder outlier does get cut, and takes its object score
        // with it.
        let mut raw = HashMap::new();
        for i in 0..30 {
            raw.insert(format!("p{i}"), (1.0, 1.0));
        }
        raw.insert("hub".to_owned(), (1000.0, 1.0));
        let eff = effective_scores(raw, "type");
        assert_eq!(eff.p_s("hub"), f64::NEG_INFINITY);
        assert_eq!(eff.p_o("hub"), f64::NEG_INFINITY);
        assert_eq!(eff.p_s("p0"), 1.0);
    }

    #[test]
    fn filtering_is_idempotent() {
        let mut raw = HashMap::new();
        for i in 0..10 {
            raw.insert(format!("p{i}"), (f64::from(i), 2.0));
        }
        let eff1 = effective_scores(raw, "type");
        let eff2 = effective_scores(eff1.effective.clone(), "type");
        for i in 0..10 {
            let p = format!("p{i}");
            assert_eq!(eff1.p_s(&p), eff2.p_s(&p));
        }
    }

    #[test]
    fn unknown_predicate_scores_negative_infinity() {
        let eff = GlobalStats::from_scores(&[("p", 1.0, 2.0)]);
        assert_eq!(eff.p_s("q"), f64::NEG_INFINITY);
        assert_eq!(eff.p_o("q"), f64::NEG_INFINITY);
    }

    #[test]
    fn department_vertex_scores_four() {
        // Six-pattern query over a university graph; with the pinned
        // predicate scores the ?d vertex takes its incoming memberOf
        // object score of 4.
        let q = parse_query(
            "SELECT ?u WHERE { ?d subOrgOf ?u . ?d type department . ?s memberOf ?d . \
             ?s undergradFrom ?u . ?s gradFrom ?u . ?u type university }",
        )
        .unwrap();
        let g = to_query_graph(&q).unwrap();
        let eff = GlobalStats::from_scores(&[
            ("subOrgOf", 3.0, 5.0),
            ("memberOf", 2.0, 4.0),
            ("gradFrom", 2.0, 4.0),
            ("undergradFrom", 2.0, 4.0),
            ("type", f64::NEG_INFINITY, f64::NEG_INFINITY),
        ]);
        let d = g.vertices.iter().position(|v| v.token() == "?d").unwrap();
        assert_eq!(vertex_score(&g, d, &eff), 4.0);
        let u = g.vertices.iter().position(|v| v.token() == "?u").unwrap();
        assert_eq!(vertex_score(&g, u, &eff), 5.0);
    }

    #[test]
    fn type_only_vertex_scores_negative_infinity() {
        let q = parse_query("SELECT ?x WHERE { ?x type department }").unwrap();
        let g = to_query_graph(&q).unwrap();
        let eff = GlobalStats::from_scores(&[("type", f64::NEG_INFINITY, f64::NEG_INFINITY)]);
        let x = g.vertices.iter().position(|v| v.token() == "?x").unwrap();
        assert_eq!(vertex_score(&g, x, &eff), f64::NEG_INFINITY);
    }

    #[test]
    fn vertex_score_is_monotone_in_edges() {
        let eff = GlobalStats::from_scores(&[("p", 1.0, 2.0), ("q", 3.0, 0.5)]);
        let g1 = to_query_graph(&parse_query("SELECT ?a WHERE { ?a p ?b }").unwrap()).unwrap();
        let g2 =
            to_query_graph(&parse_query("SELECT ?a WHERE { ?a p ?b . ?a q ?c }").unwrap()).unwrap();
        let a1 = g1.vertices.iter().position(|v| v.token() == "?a").unwrap();
        let a2 = g2.vertices.iter().position(|v| v.token() == "?a").unwrap();
        assert!(vertex_score(&g2, a2, &eff) >= vertex_score(&g1, a1, &eff));
        assert_eq!(vertex_score(&g2, a2, &eff), 3.0);
    }

    #[test]
    fn self_loop_contributes_both_directions() {
        let eff = GlobalStats::from_scores(&[("p", 1.0, 9.0)]);
        let g = to_query_graph(&parse_query("SELECT ?a WHERE { ?a p ?a }").unwrap()).unwrap();
        assert_eq!(vertex_score(&g, 0, &eff), 9.0);
    }
}
