//! Triple model, dictionary interning, and the whitespace-token triple file
//! format.
//!
//! Every node (master and each worker) owns a private [`Dictionary`] mapping
//! lexical forms to dense ids. Ids are node-local by design: nothing on the
//! wire ever carries a `TermId`, only lexical strings, and each receiver
//! re-interns into its own dictionary. This keeps workers free to build
//! their dictionaries in whatever order data reaches them.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// A term is either an IRI-ish token or a quoted literal. The triple file
/// format carries whitespace-free tokens with no full RDF syntax, so the
/// distinction is inferred: a token wrapped in double quotes is a literal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TermKind {
    Iri,
    Literal,
}

pub fn term_kind_of(lexical: &str) -> TermKind {
    if lexical.len() >= 2 && lexical.starts_with('"') && lexical.ends_with('"') {
        TermKind::Literal
    } else {
        TermKind::Iri
    }
}

/// Dense, node-local term identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermId(pub u32);

impl fmt::Display for TermId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// A triple of interned ids, only meaningful against the dictionary that
/// produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triple {
    pub s: TermId,
    pub p: TermId,
    pub o: TermId,
}

/// A triple in lexical form: `[subject, predicate, object]`. This is the
/// representation used on the wire and in files.
pub type LexicalTriple = [String; 3];

/// Bijective lexical <-> id interner. Ids are assigned densely in first
/// appearance order starting at 0.
#[derive(Debug, Default, Clone)]
pub struct Dictionary {
    forward: HashMap<String, TermId>,
    reverse: Vec<(String, TermKind)>,
}

impl Dictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Interns a lexical form, returning the existing id when already known.
    pub fn intern(&mut self, lexical: &str) -> TermId {
        if let Some(&id) = self.forward.get(lexical) {
            return id;
        }
        let id = TermId(self.reverse.len() as u32);
        self.forward.insert(lexical.to_owned(), id);
        self.reverse.push((lexical.to_owned(), term_kind_of(lexical)));
        id
    }

    /// Looks up a lexical form without interning it. Query constants use
    /// this: an unknown constant simply matches nothing.
    pub fn lookup(&self, lexical: &str) -> Option<TermId> {
        self.forward.get(lexical).copied()
    }

    pub fn resolve(&self, id: TermId) -> Result<&str> {
        self.reverse
            .get(id.0 as usize)
            .map(|(lex, _)| lex.as_str())
            .ok_or(Error::UnknownTermId(id.0))
    }

    pub fn kind(&self, id: TermId) -> Result<TermKind> {
        self.reverse
            .get(id.0 as usize)
            .map(|(_, k)| *k)
            .ok_or(Error::UnknownTermId(id.0))
    }

    pub fn len(&self) -> usize {
        self.reverse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reverse.is_empty()
    }

    pub fn intern_triple(&mut self, t: &LexicalTriple) -> Triple {
        Triple {
            s: self.intern(&t[0]),
            p: self.intern(&t[1]),
            o: self.intern(&t[2]),
        }
    }

    pub fn resolve_triple(&self, t: Triple) -> Result<LexicalTriple> {
        Ok([
            self.resolve(t.s)?.to_owned(),
            self.resolve(t.p)?.to_owned(),
            self.resolve(t.o)?.to_owned(),
        ])
    }
}

/// Parses the triple file format: one triple per line as three
/// whitespace-separated tokens, an optional trailing `.` terminator, `#`
/// comment lines, blank lines ignored. The parse is all-or-nothing — the
/// first malformed line fails the whole file with its line number.
pub fn parse_triples(text: &str) -> Result<Vec<LexicalTriple>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.last() == Some(&".") {
            tokens.pop();
        }
        if tokens.len() != 3 {
            return Err(Error::TripleParse {
                line: line_no,
                msg: format!("expected 3 terms, found {}", tokens.len()),
            });
        }
        out.push([
            tokens[0].to_owned(),
            tokens[1].to_owned(),
            tokens[2].to_owned(),
        ]);
    }
    Ok(out)
}

/// Serializes triples back to the line format accepted by
/// [`parse_triples`].
pub fn serialize_triples<'a, I>(triples: I) -> String
where
    I: IntoIterator<Item = &'a LexicalTriple>,
{
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

#[cfg(test)]
mod tests {
    use super::*;

    const ACADEMIC: &str = include_str!("../tests/data/academic.nt");

    #[test]
    fn intern_is_idempotent() {
        let mut d = Dictionary::new();
        let a = d.intern("MIT");
        let b = d.intern("MIT");
        assert_eq!(a, b);
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn ids_are_dense_in_first_appearance_order() {
        let mut d = Dictionary::new();
        let triples = parse_triples(ACADEMIC).unwrap();
        assert_eq!(triples.len(), 15);
        for t in &triples {
            for term in t {
                d.intern(term);
            }
        }
        // The 15-triple academic fixture mentions 19 distinct lexical forms.
        assert_eq!(d.len(), 19);
        for i in 0..d.len() as u32 {
            let lex = d.resolve(TermId(i)).unwrap().to_owned();
            assert_eq!(d.lookup(&lex), Some(TermId(i)));
        }
    }

    #[test]
    fn resolve_unknown_id_errors() {
        let d = Dictionary::new();
        assert!(matches!(d.resolve(TermId(7)), Err(Error::UnknownTermId(7))));
    }

    #[test]
    fn lookup_does_not_intern() {
        let d = Dictionary::new();
        assert_eq!(d.lookup("ghost"), None);
        assert_eq!(d.len(), 0);
    }

    #[test]
    fn parse_handles_comments_blanks_and_terminators() {
        let text = "# header\n\nLisa advisor Prof.Williams .\nLisa gradFrom MIT\n";
        let ts = parse_triples(text).unwrap();
        assert_eq!(ts.len(), 2);
        assert_eq!(ts[0], ["Lisa", "advisor", "Prof.Williams"].map(String::from));
        assert_eq!(ts[1], ["Lisa", "gradFrom", "MIT"].map(String::from));
    }

    #[test]
    fn parse_rejects_wrong_arity_with_line_number() {
        let text = "Lisa advisor Prof.Williams\nLisa gradFrom\n";
        match parse_triples(text) {
            Err(Error::TripleParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_is_all_or_nothing() {
        let text = "a b c\nbad line here extra\nd e f\n";
        assert!(parse_triples(text).is_err());
    }

    #[test]
    fn quoted_token_is_literal() {
        assert_eq!(term_kind_of("\"1999\""), TermKind::Literal);
        assert_eq!(term_kind_of("MIT"), TermKind::Iri);
        assert_eq!(term_kind_of("\""), TermKind::Iri); // lone quote is not a literal
    }

    #[test]
    fn serialize_then_parse_round_trips_academic() {
        let ts = parse_triples(ACADEMIC).unwrap();
        let text = serialize_triples(&ts);
        let back = parse_triples(&text).unwrap();
        assert_eq!(ts, back);
    }

    #[test]
    fn intern_resolve_round_trips_triples() {
        let mut d = Dictionary::new();
        let ts = parse_triples(ACADEMIC).unwrap();
        let interned: Vec<Triple> = ts.iter().map(|t| d.intern_triple(t)).collect();
        let back: Vec<LexicalTriple> = interned
            .iter()
            .map(|t| d.resolve_triple(*t).unwrap())
            .collect();
        assert_eq!(ts, back);
    }
}
