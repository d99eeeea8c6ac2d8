//! Minimal SELECT/WHERE basic-graph-pattern query language.
//!
//! Grammar (keywords case-insensitive):
//!
//! ```text
//! query    := SELECT ( '*' | ?var+ ) WHERE '{' patterns '}'
//! patterns := pattern ( '.' pattern )* '.'?
//! pattern  := term term term
//! ```
//!
//! Terms are whitespace-free tokens; variables start with `?`. A trailing
//! `.` attached to a token is read as the pattern separator. Query files
//! hold one query per block, blocks separated by a line containing only
//! `---`.
//!
//! This module also builds the vertex/edge view of a query used by the
//! planner (subjects and objects are vertices, constants included;
//! predicates label the edges) and derives the canonical template of a
//! query: the structure left after replacing every subject/object with a
//! numbered variable, which is the unit of frequency accounting for
//! adaptive redistribution.

use std::collections::hash_map::DefaultHasher;
use std::collections::{HashMap, HashSet, VecDeque};
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};

/// Predicate token standing in for a variable predicate in a template's
/// canonical edge list.
pub const WILDCARD: &str = "?";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternTerm {
    /// Variable, name kept with its leading `?`.
    Var(String),
    /// Constant term in lexical form.
    Const(String),
}

impl PatternTerm {
    pub fn is_var(&self) -> bool {
        matches!(self, PatternTerm::Var(_))
    }

    /// The token as written: `?name` for variables, the lexical for
    /// constants.
    pub fn token(&self) -> &str {
        match self {
            PatternTerm::Var(v) => v,
            PatternTerm::Const(c) => c,
        }
    }

    pub fn var_name(&self) -> Option<&str> {
        match self {
            PatternTerm::Var(v) => Some(v),
            PatternTerm::Const(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriplePattern {
    pub s: PatternTerm,
    pub p: PatternTerm,
    pub o: PatternTerm,
}

impl TriplePattern {
    pub fn terms(&self) -> [&PatternTerm; 3] {
        [&self.s, &self.p, &self.o]
    }

    /// Variable names bound by this pattern, in subject/predicate/object
    /// order, deduplicated.
    pub fn vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for t in self.terms() {
            if let PatternTerm::Var(v) = t {
                if !out.contains(&v.as_str()) {
                    out.push(v.as_str());
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BgpQuery {
    /// Projected variable names. Empty only for queries without variables,
    /// which behave as boolean (ASK-style) queries.
    pub projection: Vec<String>,
    pub patterns: Vec<TriplePattern>,
}

impl BgpQuery {
    /// All variable names in first-appearance order (subject, predicate,
    /// object within each pattern).
    pub fn all_vars(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for p in &self.patterns {
            for t in p.terms() {
                if let PatternTerm::Var(v) = t {
                    if seen.insert(v.clone()) {
                        out.push(v.clone());
                    }
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Parsing

struct Token {
    text: String,
    line: usize,
    col: usize,
}

fn err_at(tok: Option<&Token>, msg: &str) -> Error {
    match tok {
        Some(t) => Error::QueryParse {
            line: t.line,
            col: t.col,
            msg: format!("{msg} (at `{}`)", t.text),
        },
        None => Error::QueryParse {
            line: 0,
            col: 0,
            msg: format!("{msg} (at end of input)"),
        },
    }
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let mut col = 0usize;
        for chunk in line.split_whitespace() {
            // Recover the column of this chunk for error reporting.
            let start = line[col..].find(chunk).map(|i| i + col).unwrap_or(col);
            col = start + chunk.len();
            let mut rest = chunk;
            let mut local = start;
            // Peel braces and separator dots into their own tokens.
            while !rest.is_empty() {
                if let Some(r) = rest.strip_prefix('{') {
                    out.push(Token { text: "{".into(), line: li + 1, col: local + 1 });
                    rest = r;
                    local += 1;
                } else if let Some(r) = rest.strip_prefix('}') {
                    out.push(Token { text: "}".into(), line: li + 1, col: local + 1 });
                    rest = r;
                    local += 1;
                } else {
                    // Take up to a trailing '{', '}' or a single trailing '.'.
                    let mut word = rest;
                    let mut tail = "";
                    if let Some(i) = word.find(['{', '}']) {
                        tail = &word[i..];
                        word = &word[..i];
                    }
                    if word.len() > 1 && word.ends_with('.') {
                        out.push(Token {
                            text: word[..word.len() - 1].into(),
                            line: li + 1,
                            col: local + 1,
                        });
                        out.push(Token {
                            text: ".".into(),
                            line: li + 1,
                            col: local + word.len(),
                        });
                    } else if !word.is_empty() {
                        out.push(Token { text: word.into(), line: li + 1, col: local + 1 });
                    }
                    local += word.len();
                    rest = tail;
                }
            }
        }
    }
    out
}

fn term_of(tok: &Token) -> Result<PatternTerm> {
    if tok.text.starts_with('?') {
        if tok.text.len() == 1 {
            return Err(err_at(Some(tok), "empty variable name"));
        }
        Ok(PatternTerm::Var(tok.text.clone()))
    } else {
        Ok(PatternTerm::Const(tok.text.clone()))
    }
}

/// Parses a single query.
pub fn parse_query(text: &str) -> Result<BgpQuery> {
    let tokens = tokenize(text);
    let mut i = 0usize;
    let next = |i: &mut usize| -> Option<&Token> {
        let t = tokens.get(*i);
        *i += 1;
        t
    };

    let t = next(&mut i);
    match t {
        Some(t) if t.text.eq_ignore_ascii_case("select") => {}
        other => return Err(err_at(other, "expected SELECT")),
    }

    let mut star = false;
    let mut projection: Vec<String> = Vec::new();
    loop {
        match tokens.get(i) {
            Some(t) if t.text == "*" => {
                star = true;
                i += 1;
            }
            Some(t) if t.text.starts_with('?') => {
                let term = term_of(t)?;
                let name = term.token().to_owned();
                if !projection.contains(&name) {
                    projection.push(name);
                }
                i += 1;
            }
            Some(t) if t.text.eq_ignore_ascii_case("where") => break,
            other => return Err(err_at(other, "expected projection variable or WHERE")),
        }
    }
    if star && !projection.is_empty() {
        let t = tokens.get(i);
        return Err(err_at(t, "projection mixes `*` with named variables"));
    }

    match next(&mut i) {
        Some(t) if t.text.eq_ignore_ascii_case("where") => {}
        other => return Err(err_at(other, "expected WHERE")),
    }
    match next(&mut i) {
        Some(t) if t.text == "{" => {}
        other => return Err(err_at(other, "expected `{`")),
    }

    let mut patterns = Vec::new();
    loop {
        match tokens.get(i) {
            Some(t) if t.text == "}" => {
                i += 1;
                break;
            }
            Some(t) if t.text == "." => {
                // Separator; tolerated before `}` as a trailing terminator.
                i += 1;
            }
            Some(_) => {
                let mut terms = Vec::with_capacity(3);
                for _ in 0..3 {
                    match tokens.get(i) {
                        Some(t) if t.text == "." || t.text == "}" || t.text == "{" => {
                            return Err(err_at(Some(t), "pattern needs 3 terms"));
                        }
                        Some(t) => {
                            terms.push(term_of(t)?);
                            i += 1;
                        }
                        None => return Err(err_at(None, "pattern needs 3 terms")),
                    }
                }
                patterns.push(TriplePattern {
                    s: terms[0].clone(),
                    p: terms[1].clone(),
                    o: terms[2].clone(),
                });
            }
            None => return Err(err_at(None, "expected `}`")),
        }
    }
    if let Some(t) = tokens.get(i) {
        return Err(err_at(Some(t), "trailing input after `}`"));
    }
    if patterns.is_empty() {
        return Err(err_at(None, "empty pattern block"));
    }

    let q_vars: HashSet<String> = {
        let mut s = HashSet::new();
        for p in &patterns {
            for t in p.terms() {
                if let PatternTerm::Var(v) = t {
                    s.insert(v.clone());
                }
            }
        }
        s
    };
    if star {
        let q = BgpQuery { projection: Vec::new(), patterns };
        let projection = q.all_vars();
        return Ok(BgpQuery { projection, ..q });
    }
    for v in &projection {
        if !q_vars.contains(v) {
            return Err(Error::QueryParse {
                line: 0,
                col: 0,
                msg: format!("projected variable {v} does not appear in any pattern"),
            });
        }
    }
    Ok(BgpQuery { projection, patterns })
}

/// Parses a query file: one query per `---`-separated block.
pub fn parse_query_file(text: &str) -> Result<Vec<BgpQuery>> {
    let mut queries = Vec::new();
    let mut block = String::new();
    let flush = |block: &mut String, queries: &mut Vec<BgpQuery>| -> Result<()> {
        if !block.trim().is_empty() {
            queries.push(parse_query(block)?);
        }
        block.clear();
        Ok(())
    };
    for line in text.lines() {
        if line.trim() == "---" {
            flush(&mut block, &mut queries)?;
        } else {
            block.push_str(line);
            block.push('\n');
        }
    }
    flush(&mut block, &mut queries)?;
    Ok(queries)
}

// ---------------------------------------------------------------------------
// Query graph

#[derive(Debug, Clone)]
pub struct GraphEdge {
    /// Subject vertex index.
    pub u: usize,
    /// Object vertex index.
    pub v: usize,
    pub predicate: PatternTerm,
    /// Index of the originating pattern in the query.
    pub pattern: usize,
}

/// Vertex/edge view of a query: distinct subjects and objects (constants
/// included) are vertices, each pattern is one edge labeled by its
/// predicate. Predicates are never vertices.
#[derive(Debug, Clone)]
pub struct QueryGraph {
    pub vertices: Vec<PatternTerm>,
    pub edges: Vec<GraphEdge>,
}

impl QueryGraph {
    /// Edge indexes incident to vertex `v` (self-loops reported once).
    pub fn incident(&self, v: usize) -> Vec<usize> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.u == v || e.v == v)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn vertex_token(&self, v: usize) -> &str {
        self.vertices[v].token()
    }
}

/// Builds the query graph, rejecting disconnected pattern sets: a query
/// whose graph splits into islands would need a cartesian product, which
/// the execution layer does not do.
pub fn to_query_graph(q: &BgpQuery) -> Result<QueryGraph> {
    let mut vertices: Vec<PatternTerm> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut vertex_of = |t: &PatternTerm, vertices: &mut Vec<PatternTerm>| -> usize {
        let key = t.token().to_owned();
        *index.entry(key).or_insert_with(|| {
            vertices.push(t.clone());
            vertices.len() - 1
        })
    };
    let mut edges = Vec::with_capacity(q.patterns.len());
    for (i, p) in q.patterns.iter().enumerate() {
        let u = vertex_of(&p.s, &mut vertices);
        let v = vertex_of(&p.o, &mut vertices);
        edges.push(GraphEdge { u, v, predicate: p.p.clone(), pattern: i });
    }

    // Connectivity over vertices through edges.
    if !vertices.is_empty() {
        let mut seen = vec![false; vertices.len()];
        let mut queue = VecDeque::new();
        queue.push_back(0usize);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for e in &edges {
                for (a, b) in [(e.u, e.v), (e.v, e.u)] {
                    if a == v && !seen[b] {
                        seen[b] = true;
                        queue.push_back(b);
                    }
                }
            }
        }
        if let Some(lost) = seen.iter().position(|s| !s) {
            return Err(Error::DisconnectedQuery(format!(
                "vertex {} is not reachable from {}",
                vertices[lost].token(),
                vertices[0].token()
            )));
        }
    }

    Ok(QueryGraph { vertices, edges })
}

// ---------------------------------------------------------------------------
// Templates

/// Canonical identity of a query's shape after lifting subjects/objects to
/// variables. Two queries get the same key iff their lifted graphs match
/// structurally with predicates fixed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TemplateKey(pub String);

/// A query reduced to its template, plus what this particular query had at
/// each template vertex.
#[derive(Debug, Clone)]
pub struct TemplateDerivation {
    pub key: TemplateKey,
    /// Canonical lifted edges as (subject vertex, predicate token, object
    /// vertex). A variable predicate appears as [`WILDCARD`].
    pub edges: Vec<(usize, String, usize)>,
    pub vertex_count: usize,
    /// Observed token per canonical vertex: the constant lexical, or the
    /// raw variable name (`?`-prefixed) when the query had a variable
    /// there. Variable tokens count as values in template accounting.
    pub values: Vec<String>,
    /// False when any predicate is a variable; such queries are recorded
    /// but can never drive a redistribution.
    pub eligible: bool,
}

fn hash64(parts: &[u64]) -> u64 {
    let mut h = DefaultHasher::new();
    parts.hash(&mut h);
    h.finish()
}

fn hash_str(s: &str) -> u64 {
    let mut h = DefaultHasher::new();
    s.hash(&mut h);
    h.finish()
}

/// Derives the canonical template of a query. Canonicalization runs a small
/// signature refinement over the lifted graph so that pattern order and
/// variable naming do not matter, then numbers vertices by first appearance
/// in the sorted edge list.
pub fn derive_template(q: &BgpQuery) -> Result<TemplateDerivation> {
    let g = to_query_graph(q)?;
    let n = g.vertices.len();
    let eligible = g.edges.iter().all(|e| !e.predicate.is_var());

    let pred_token = |e: &GraphEdge| -> String {
        match &e.predicate {
            PatternTerm::Const(c) => c.clone(),
            PatternTerm::Var(_) => WILDCARD.to_owned(),
        }
    };

    // Signature refinement: start from incident (predicate, direction)
    // multisets and fold neighbor signatures in for as many rounds as the
    // graph could need to separate vertices.
    let mut sig: Vec<u64> = (0..n)
        .map(|v| {
            let mut inc: Vec<u64> = g
                .edges
                .iter()
                .filter(|e| e.u == v || e.v == v)
                .map(|e| {
                    let dir = if e.u == v && e.v == v {
                        2u64
                    } else if e.u == v {
                        0
                    } else {
                        1
                    };
                    hash64(&[hash_str(&pred_token(e)), dir])
                })
                .collect();
            inc.sort_unstable();
            hash64(&inc)
        })
        .collect();
    for _ in 0..n.max(2) {
        let mut next = Vec::with_capacity(n);
        for v in 0..n {
            let mut nb: Vec<u64> = g
                .edges
                .iter()
                .filter(|e| e.u == v || e.v == v)
                .map(|e| {
                    let (dir, other) = if e.u == v && e.v == v {
                        (2u64, v)
                    } else if e.u == v {
                        (0, e.v)
                    } else {
                        (1, e.u)
                    };
                    hash64(&[hash_str(&pred_token(e)), dir, sig[other]])
                })
                .collect();
            nb.sort_unstable();
            next.push(hash64(&[sig[v], hash64(&nb)]));
        }
        sig = next;
    }

    // Emit edges greedily, numbering vertices by first appearance. Each step
    // takes the smallest remaining edge by (predicate, endpoint ranks), where
    // an endpoint already numbered ranks by that number and an unnumbered one
    // by its structural signature. Ranking against the numbering fixed so far
    // is what keeps symmetric edges in one order regardless of how the input
    // listed them: a static sort has only the signatures, which cannot
    // separate interchangeable vertices, so it would fall back to input
    // order.
    let toks: Vec<String> = g.edges.iter().map(pred_token).collect();
    let rank = |v: usize, canon: &HashMap<usize, usize>| -> (u8, u64) {
        match canon.get(&v) {
            Some(&c) => (0, c as u64),
            None => (1, sig[v]),
        }
    };
    let mut canon: HashMap<usize, usize> = HashMap::new();
    let mut remaining: Vec<usize> = (0..g.edges.len()).collect();
    let mut edges = Vec::with_capacity(g.edges.len());
    while !remaining.is_empty() {
        let pos = (0..remaining.len())
            .min_by_key(|&p| {
                let e = &g.edges[remaining[p]];
                (&toks[remaining[p]], rank(e.u, &canon), rank(e.v, &canon))
            })
            .expect("remaining is non-empty");
        let e = &g.edges[remaining.remove(pos)];
        let next = canon.len();
        let cu = *canon.entry(e.u).or_insert(next);
        let next = canon.len();
        let cv = *canon.entry(e.v).or_insert(next);
        edges.push((cu, pred_token(e), cv));
    }

    let mut values = vec![String::new(); n];
    for (orig, &c) in &canon {
        values[c] = g.vertices[*orig].token().to_owned();
    }

    let key = TemplateKey(
        edges
            .iter()
            .map(|(u, p, v)| format!("v{u} {p} v{v}"))
            .collect::<Vec<_>>()
            .join(" . "),
    );

    Ok(TemplateDerivation { key, edges, vertex_count: n, values, eligible })
}
