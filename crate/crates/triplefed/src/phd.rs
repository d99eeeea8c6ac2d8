//! Template frequency accounting and proactive query instantiation.
//!
//! The master records every executed query under its canonical template
//! key. When a template's count first exceeds the configured frequency
//! threshold, the store reports the crossing (exactly once per template)
//! and the master may redistribute. Because the concrete queries behind a
//! template differ only in what sits at each template vertex, the store
//! keeps a value histogram per vertex and can instantiate the template
//! back into a concrete query: positions dominated by one value keep that
//! value, while positions with many distinct values generalize to a fresh
//! variable so the redistributed structure serves future variations too.

use std::collections::HashMap;

use crate::sparql::{BgpQuery, PatternTerm, TemplateDerivation, TemplateKey, TriplePattern};

/// What [`TemplateStore::record`] observed about one occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordOutcome {
    /// Occurrences of this template so far, including this one.
    pub count: u64,
    /// True exactly when this occurrence pushed an eligible template past
    /// the frequency threshold. Later occurrences report false again, so a
    /// crossing triggers at most one redistribution attempt.
    pub crossed: bool,
}

#[derive(Debug, Clone)]
struct TemplateRecord {
    count: u64,
    edges: Vec<(usize, String, usize)>,
    eligible: bool,
    /// Per canonical vertex: observed token -> occurrences. Variable
    /// tokens (with their `?` prefix) count like any other value.
    observations: Vec<HashMap<String, u64>>,
}

/// Frequency and value accounting for every query template seen so far.
#[derive(Debug, Default)]
pub struct TemplateStore {
    templates: HashMap<TemplateKey, TemplateRecord>,
}

impl TemplateStore {
    pub fn new() -> TemplateStore {
        TemplateStore::default()
    }

    /// Counts one occurrence of a template and folds the query's vertex
    /// values into the histograms.
    pub fn record(&mut self, d: &TemplateDerivation, freq_threshold: u64) -> RecordOutcome {
        let rec = self.templates.entry(d.key.clone()).or_insert_with(|| TemplateRecord {
            count: 0,
            edges: d.edges.clone(),
            eligible: d.eligible,
            observations: vec![HashMap::new(); d.vertex_count],
        });
        rec.count += 1;
        for (slot, token) in rec.observations.iter_mut().zip(&d.values) {
            *slot.entry(token.clone()).or_insert(0) += 1;
        }
        RecordOutcome { count: rec.count, crossed: rec.eligible && rec.count == freq_threshold + 1 }
    }

    /// Occurrences recorded for a template so far.
    pub fn count(&self, key: &TemplateKey) -> u64 {
        self.templates.get(key).map_or(0, |r| r.count)
    }

    /// Builds the concrete query that stands for a template. Per vertex:
    /// more distinct observed values than `proactivity_threshold` means a
    /// fresh variable; otherwise the most frequent value wins (ties break
    /// to the lexically smallest token) and a winning variable token stays
    /// a variable under its own name. Returns `None` for unknown templates
    /// and for templates with variable predicates, which can never be
    /// redistributed.
    pub fn instantiate(&self, key: &TemplateKey, proactivity_threshold: u64) -> Option<BgpQuery> {
        let rec = self.templates.get(key)?;
        if !rec.eligible {
            return None;
        }

        let winners: Vec<Option<String>> = rec
            .observations
            .iter()
            .map(|obs| {
                if obs.len() as u64 > proactivity_threshold {
                    None
                } else {
                    obs.iter()
                        .min_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)))
                        .map(|(token, _)| token.clone())
                }
            })
            .collect();

        let taken: Vec<&String> = winners.iter().flatten().collect();
        let tokens: Vec<String> = winners
            .iter()
            .enumerate()
            .map(|(i, w)| match w {
                Some(token) => token.clone(),
                None => {
                    let mut name = format!("?v{i}");
                    while taken.iter().any(|t| **t == name) {
                        name.push('v');
                    }
                    name
                }
            })
            .collect();

        let term = |v: usize| -> PatternTerm {
            let token = &tokens[v];
            if token.starts_with('?') {
                PatternTerm::Var(token.clone())
            } else {
                PatternTerm::Const(token.clone())
            }
        };

        let patterns: Vec<TriplePattern> = rec
            .edges
            .iter()
            .map(|(u, p, v)| TriplePattern {
                s: term(*u),
                p: PatternTerm::Const(p.clone()),
                o: term(*v),
            })
            .collect();

        let mut projection: Vec<String> = Vec::new();
        for tp in &patterns {
            for t in [&tp.s, &tp.o] {
                if let PatternTerm::Var(name) = t {
                    if !projection.contains(name) {
                        projection.push(name.clone());
                    }
                }
            }
        }

        Some(BgpQuery { projection, patterns })
    }
}
