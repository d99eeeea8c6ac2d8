//! Worker-local storage.
//!
//! A [`StorageModule`] is the reusable index block: an append-only pool of
//! ⟨subject, object⟩ pairs plus three views — by predicate, by
//! (predicate, subject), by (predicate, object) — that reference pool
//! entries by position instead of copying them. One module holds a
//! worker's owned triples (the main index); replica-index edges each get
//! their own module holding redistributed triples.
//!
//! A [`WorkerStore`] couples the main module with the worker's term
//! dictionary and an incrementally maintained vertex degree map (local
//! in-degree plus out-degree), which feeds statistics.
//!
//! [`BindingTable`] is the set-semantics variable-binding relation used by
//! both execution modes; joins here are hash joins on the shared
//! variables.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::rdf::{Dictionary, LexicalTriple, TermId, Triple};
use crate::sparql::{PatternTerm, TriplePattern};

/// Index over ⟨s,o⟩ pairs grouped by predicate. Pairs live once in `pairs`
/// (per predicate — the same pair under two predicates is two entries) and
/// the three maps hold positions into it. Deletion unlinks positions from
/// the maps; the pool itself only grows, which keeps references stable.
#[derive(Debug, Clone, Default)]
pub struct StorageModule {
    pairs: Vec<(TermId, TermId)>,
    by_predicate: HashMap<TermId, Vec<u32>>,
    by_predicate_subject: HashMap<TermId, HashMap<TermId, Vec<u32>>>,
    by_predicate_object: HashMap<TermId, HashMap<TermId, Vec<u32>>>,
    present: HashSet<(TermId, TermId, TermId)>,
}

impl StorageModule {
    pub fn new() -> StorageModule {
        StorageModule::default()
    }

    /// Number of triples currently indexed.
    pub fn len(&self) -> usize {
        self.present.len()
    }

    pub fn is_empty(&self) -> bool {
        self.present.is_empty()
    }

    pub fn contains(&self, t: Triple) -> bool {
        self.present.contains(&(t.p, t.s, t.o))
    }

    /// Inserts one triple; returns false (and changes nothing) when it was
    /// already present.
    pub fn insert(&mut self, t: Triple) -> bool {
        if !self.present.insert((t.p, t.s, t.o)) {
            return false;
        }
        let at = self.pairs.len() as u32;
        self.pairs.push((t.s, t.o));
        self.by_predicate.entry(t.p).or_default().push(at);
        self.by_predicate_subject
            .entry(t.p)
            .or_default()
            .entry(t.s)
            .or_default()
            .push(at);
        self.by_predicate_object
            .entry(t.p)
            .or_default()
            .entry(t.o)
            .or_default()
            .push(at);
        true
    }

    /// Removes one triple from all three views; returns whether it was
    /// present. The pool entry stays behind unreferenced.
    pub fn remove(&mut self, t: Triple) -> bool {
        if !self.present.remove(&(t.p, t.s, t.o)) {
            return false;
        }
        let hit = |refs: &mut Vec<u32>, pairs: &[(TermId, TermId)]| {
            refs.retain(|&r| pairs[r as usize] != (t.s, t.o));
        };
        if let Some(refs) = self.by_predicate.get_mut(&t.p) {
            hit(refs, &self.pairs);
            if refs.is_empty() {
                self.by_predicate.remove(&t.p);
            }
        }
        if let Some(subjects) = self.by_predicate_subject.get_mut(&t.p) {
            if let Some(refs) = subjects.get_mut(&t.s) {
                hit(refs, &self.pairs);
                if refs.is_empty() {
                    subjects.remove(&t.s);
                }
            }
            if subjects.is_empty() {
                self.by_predicate_subject.remove(&t.p);
            }
        }
        if let Some(objects) = self.by_predicate_object.get_mut(&t.p) {
            if let Some(refs) = objects.get_mut(&t.o) {
                hit(refs, &self.pairs);
                if refs.is_empty() {
                    objects.remove(&t.o);
                }
            }
            if objects.is_empty() {
                self.by_predicate_object.remove(&t.p);
            }
        }
        true
    }

    pub fn predicates(&self) -> impl Iterator<Item = TermId> + '_ {
        self.by_predicate.keys().copied()
    }

    /// Distinct subjects appearing with `p`.
    pub fn subjects_of(&self, p: TermId) -> impl Iterator<Item = TermId> + '_ {
        self.by_predicate_subject
            .get(&p)
            .into_iter()
            .flat_map(|m| m.keys().copied())
    }

    /// Distinct objects appearing with `p`.
    pub fn objects_of(&self, p: TermId) -> impl Iterator<Item = TermId> + '_ {
        self.by_predicate_object
            .get(&p)
            .into_iter()
            .flat_map(|m| m.keys().copied())
    }

    /// ⟨s,o⟩ pairs matching a predicate with optional fixed subject/object.
    /// Picks the narrowest of the three views.
    pub fn matching_pairs(
        &self,
        p: TermId,
        s: Option<TermId>,
        o: Option<TermId>,
    ) -> Vec<(TermId, TermId)> {
        let refs: &[u32] = match (s, o) {
            (Some(s), _) => self
                .by_predicate_subject
                .get(&p)
                .and_then(|m| m.get(&s))
                .map(|v| v.as_slice())
                .unwrap_or(&[]),
            (None, Some(o)) => self
                .by_predicate_object
                .get(&p)
                .and_then(|m| m.get(&o))
                .map(|v| v.as_slice())
                .unwrap_or(&[]),
            (None, None) => self
                .by_predicate
                .get(&p)
                .map(|v| v.as_slice())
                .unwrap_or(&[]),
        };
        refs.iter()
            .map(|&r| self.pairs[r as usize])
            .filter(|&(ps, po)| s.map_or(true, |s| ps == s) && o.map_or(true, |o| po == o))
            .collect()
    }

    /// Every triple currently indexed, in no particular order.
    pub fn triples(&self) -> Vec<Triple> {
        let mut out = Vec::with_capacity(self.present.len());
        for (&p, refs) in &self.by_predicate {
            for &r in refs {
                let (s, o) = self.pairs[r as usize];
                out.push(Triple { s, p, o });
            }
        }
        out
    }

    #[cfg(test)]
    fn pair_sets_consistent(&self) -> bool {
        let via_pred: HashSet<(TermId, TermId, TermId)> = self
            .by_predicate
            .iter()
            .flat_map(|(&p, refs)| {
                refs.iter().map(move |&r| (p, self.pairs[r as usize].0, self.pairs[r as usize].1))
            })
            .collect();
        let via_subj: HashSet<(TermId, TermId, TermId)> = self
            .by_predicate_subject
            .iter()
            .flat_map(|(&p, m)| {
                m.values().flat_map(move |refs| {
                    refs.iter()
                        .map(move |&r| (p, self.pairs[r as usize].0, self.pairs[r as usize].1))
                })
            })
            .collect();
        let via_obj: HashSet<(TermId, TermId, TermId)> = self
            .by_predicate_object
            .iter()
            .flat_map(|(&p, m)| {
                m.values().flat_map(move |refs| {
                    refs.iter()
                        .map(move |&r| (p, self.pairs[r as usize].0, self.pairs[r as usize].1))
                })
            })
            .collect();
        via_pred == self.present && via_subj == self.present && via_obj == self.present
    }
}

// ---------------------------------------------------------------------------
// Binding tables

/// A relation of variable bindings with set semantics: `header` names the
/// columns, every row has the same arity, duplicates are silently dropped.
/// An empty header with one (empty) row is the boolean "true" relation.
#[derive(Debug, Clone)]
pub struct BindingTable {
    pub header: Vec<String>,
    rows: Vec<Vec<TermId>>,
    seen: HashSet<Vec<TermId>>,
}

impl BindingTable {
    pub fn new(header: Vec<String>) -> BindingTable {
        BindingTable { header, rows: Vec::new(), seen: HashSet::new() }
    }

    /// The boolean-true relation: no columns, one empty row.
    pub fn unit() -> BindingTable {
        let mut t = BindingTable::new(Vec::new());
        t.push(Vec::new());
        t
    }

    pub fn push(&mut self, row: Vec<TermId>) -> bool {
        debug_assert_eq!(row.len(), self.header.len());
        if self.seen.insert(row.clone()) {
            self.rows.push(row);
            true
        } else {
            false
        }
    }

    pub fn rows(&self) -> &[Vec<TermId>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn col(&self, var: &str) -> Option<usize> {
        self.header.iter().position(|h| h == var)
    }

    /// Column indexes for the given variables; error if any is missing.
    pub fn cols(&self, vars: &[String]) -> Result<Vec<usize>> {
        vars.iter()
            .map(|v| {
                self.col(v).ok_or_else(|| {
                    Error::InvalidState(format!("variable {v} not in table header"))
                })
            })
            .collect()
    }

    /// Distinct projections of the rows onto the given columns.
    pub fn project_distinct(&self, cols: &[usize]) -> Vec<Vec<TermId>> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for row in &self.rows {
            let key: Vec<TermId> = cols.iter().map(|&c| row[c]).collect();
            if seen.insert(key.clone()) {
                out.push(key);
            }
        }
        out
    }

    /// Keeps rows whose projection onto `cols` is in `allowed`.
    pub fn retain_by_key(&mut self, cols: &[usize], allowed: &HashSet<Vec<TermId>>) {
        self.rows.retain(|row| {
            let key: Vec<TermId> = cols.iter().map(|&c| row[c]).collect();
            let keep = allowed.contains(&key);
            if !keep {
                // seen is rebuilt lazily; removal leaves stale entries that
                // only suppress re-adding identical rows, which is fine
                // under set semantics.
            }
            keep
        });
    }

    /// New table with only the named columns (deduplicated rows).
    pub fn project(&self, vars: &[String]) -> Result<BindingTable> {
        let cols = self.cols(vars)?;
        let mut out = BindingTable::new(vars.to_vec());
        for row in &self.rows {
            out.push(cols.iter().map(|&c| row[c]).collect());
        }
        Ok(out)
    }

    /// Rows resolved to lexicals through a dictionary.
    pub fn resolve_rows(&self, dict: &Dictionary) -> Result<Vec<Vec<String>>> {
        self.rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|id| dict.resolve(*id).map(|s| s.to_owned()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect()
    }
}

/// Natural hash join on the shared variables of the two headers.
/// Output header: left's columns then right's non-shared columns. Rejects
/// disjoint headers — a cartesian product is never intended here.
pub fn local_hash_join(left: &BindingTable, right: &BindingTable) -> Result<BindingTable> {
    let shared: Vec<String> = left
        .header
        .iter()
        .filter(|v| right.header.contains(v))
        .cloned()
        .collect();
    if shared.is_empty() && !(left.header.is_empty() || right.header.is_empty()) {
        return Err(Error::CartesianJoin);
    }
    // A unit (boolean) side degenerates to a filter: true keeps the other
    // side, false empties it.
    if left.header.is_empty() {
        let mut out = BindingTable::new(right.header.clone());
        if !left.is_empty() {
            for r in right.rows() {
                out.push(r.clone());
            }
        }
        return Ok(out);
    }
    if right.header.is_empty() {
        let mut out = BindingTable::new(left.header.clone());
        if !right.is_empty() {
            for r in left.rows() {
                out.push(r.clone());
            }
        }
        return Ok(out);
    }

    let lcols = left.cols(&shared)?;
    let rcols = right.cols(&shared)?;
    let rextra: Vec<usize> = (0..right.header.len()).filter(|i| !rcols.contains(i)).collect();

    let mut header = left.header.clone();
    header.extend(rextra.iter().map(|&i| right.header[i].clone()));
    let mut out = BindingTable::new(header);

    let mut index: HashMap<Vec<TermId>, Vec<&Vec<TermId>>> = HashMap::new();
    for row in right.rows() {
        let key: Vec<TermId> = rcols.iter().map(|&c| row[c]).collect();
        index.entry(key).or_default().push(row);
    }
    for lrow in left.rows() {
        let key: Vec<TermId> = lcols.iter().map(|&c| lrow[c]).collect();
        if let Some(matches) = index.get(&key) {
            for rrow in matches {
                let mut row = lrow.clone();
                row.extend(rextra.iter().map(|&i| rrow[i]));
                out.push(row);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Pattern answering

/// Positions of a pattern's variables: (column order, repeated-var checks).
fn pattern_slots(tp: &TriplePattern) -> Vec<String> {
    let mut header = Vec::new();
    for t in [&tp.s, &tp.o] {
        if let PatternTerm::Var(v) = t {
            if !header.contains(v) {
                header.push(v.clone());
            }
        }
    }
    header
}

/// Answers a constant-predicate pattern against one module. Constants not
/// present in the dictionary simply match nothing. Header lists the
/// pattern's variables subject-first.
pub fn answer_subquery(
    module: &StorageModule,
    tp: &TriplePattern,
    dict: &Dictionary,
) -> Result<BindingTable> {
    let p_lex = match &tp.p {
        PatternTerm::Const(c) => c,
        PatternTerm::Var(v) => return Err(Error::VariablePredicate(v.clone())),
    };
    let header = pattern_slots(tp);
    let mut out = BindingTable::new(header);

    let p = match dict.lookup(p_lex) {
        Some(id) => id,
        None => return Ok(out),
    };
    // Resolve constant subject/object; an unknown constant matches nothing.
    let fixed = |t: &PatternTerm| -> Option<Option<TermId>> {
        match t {
            PatternTerm::Const(c) => match dict.lookup(c) {
                Some(id) => Some(Some(id)),
                None => None,
            },
            PatternTerm::Var(_) => Some(None),
        }
    };
    let (s_fix, o_fix) = match (fixed(&tp.s), fixed(&tp.o)) {
        (Some(s), Some(o)) => (s, o),
        _ => return Ok(out),
    };

    let same_var = matches!((&tp.s, &tp.o),
        (PatternTerm::Var(a), PatternTerm::Var(b)) if a == b);

    for (s, o) in module.matching_pairs(p, s_fix, o_fix) {
        if same_var && s != o {
            continue;
        }
        let mut row = Vec::new();
        if tp.s.is_var() {
            row.push(s);
        }
        if tp.o.is_var() && !same_var {
            row.push(o);
        }
        out.push(row);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Worker store

/// A worker's owned data: main index, dictionary, and incrementally
/// maintained local degrees (in + out; a self-loop counts twice).
#[derive(Debug, Default)]
pub struct WorkerStore {
    pub dict: Dictionary,
    pub main: StorageModule,
    degree: HashMap<TermId, u64>,
}

impl WorkerStore {
    pub fn new() -> WorkerStore {
        WorkerStore::default()
    }

    pub fn degree(&self, v: TermId) -> u64 {
        self.degree.get(&v).copied().unwrap_or(0)
    }

    pub fn insert_lexical(&mut self, t: &LexicalTriple) -> bool {
        let triple = self.dict.intern_triple(t);
        self.insert(triple)
    }

    pub fn insert(&mut self, t: Triple) -> bool {
        if !self.main.insert(t) {
            return false;
        }
        *self.degree.entry(t.s).or_insert(0) += 1;
        *self.degree.entry(t.o).or_insert(0) += 1;
        true
    }

    pub fn delete_lexical(&mut self, t: &LexicalTriple) -> bool {
        let ids = (
            self.dict.lookup(&t[0]),
            self.dict.lookup(&t[1]),
            self.dict.lookup(&t[2]),
        );
        match ids {
            (Some(s), Some(p), Some(o)) => self.delete(Triple { s, p, o }),
            _ => false,
        }
    }

    pub fn delete(&mut self, t: Triple) -> bool {
        if !self.main.remove(t) {
            return false;
        }
        for v in [t.s, t.o] {
            if let Some(d) = self.degree.get_mut(&v) {
                *d = d.saturating_sub(1);
                if *d == 0 {
                    self.degree.remove(&v);
                }
            }
        }
        true
    }

    /// Answers any pattern against the main index. Variable predicates go
    /// through a scan over every predicate present; used only by the
    /// exchange-based execution mode.
    pub fn answer_pattern(&self, tp: &TriplePattern) -> Result<BindingTable> {
        if let PatternTerm::Const(_) = &tp.p {
            return answer_subquery(&self.main, tp, &self.dict);
        }
        // Header: subject/predicate/object variable order, deduplicated.
        let mut header = Vec::new();
        for t in tp.terms() {
            if let PatternTerm::Var(v) = t {
                if !header.contains(v) {
                    header.push(v.clone());
                }
            }
        }
        let mut out = BindingTable::new(header.clone());
        let fixed = |t: &PatternTerm| -> Option<Option<TermId>> {
            match t {
                PatternTerm::Const(c) => self.dict.lookup(c).map(Some),
                PatternTerm::Var(_) => Some(None),
            }
        };
        let (s_fix, o_fix) = match (fixed(&tp.s), fixed(&tp.o)) {
            (Some(s), Some(o)) => (s, o),
            _ => return Ok(out), // unknown constant matches nothing
        };
        let preds: Vec<TermId> = self.main.predicates().collect();
        for p in preds {
            for (s, o) in self.main.matching_pairs(p, s_fix, o_fix) {
                // Bind variables left to right; a repeated variable must
                // see the same value at every position.
                let mut binding: HashMap<&str, TermId> = HashMap::new();
                let mut ok = true;
                for (term, val) in [(&tp.s, s), (&tp.p, p), (&tp.o, o)] {
                    if let PatternTerm::Var(v) = term {
                        match binding.get(v.as_str()) {
                            Some(&prev) if prev != val => {
                                ok = false;
                                break;
                            }
                            _ => {
                                binding.insert(v, val);
                            }
                        }
                    }
                }
                if ok {
                    out.push(header.iter().map(|h| binding[h.as_str()]).collect());
                }
            }
        }
        Ok(out)
    }
}
