//! Update batches: the text format and insert placement.
//!
//! An update file holds one operation per line: `+ s p o` inserts a
//! triple, `- s p o` deletes one. The optional trailing `.`, blank lines
//! and `#` comments follow the triple file format. The master turns the
//! parsed items into wire operations, drawing a random home worker for
//! each insert from its seeded generator; deletes go everywhere, so they
//! carry no placement.

use rand::Rng;

use crate::cluster::UpdateOp;
use crate::error::{Error, Result};
use crate::rdf::LexicalTriple;

/// One parsed update line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateItem {
    pub insert: bool,
    pub triple: LexicalTriple,
}

/// Parses update text. All-or-nothing: the first malformed line fails the
/// whole batch with its line number.
pub fn parse_updates(text: &str) -> Result<Vec<UpdateItem>> {
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
        let insert = match tokens.first() {
            Some(&"+") => true,
            Some(&"-") => false,
            _ => {
                return Err(Error::UpdateParse {
                    line: line_no,
                    msg: "update line must start with `+` or `-`".to_owned(),
                })
            }
        };
        if tokens.len() != 4 {
            return Err(Error::UpdateParse {
                line: line_no,
                msg: format!("expected `+/-` and 3 terms, found {} tokens", tokens.len()),
            });
        }
        out.push(UpdateItem {
            insert,
            triple: [tokens[1].to_owned(), tokens[2].to_owned(), tokens[3].to_owned()],
        });
    }
    Ok(out)
}

/// Assigns each insert a home worker drawn from `rng`; deletes pass
/// through. Order is preserved — workers apply a batch in this order.
pub fn assign_ops<R: Rng>(items: &[UpdateItem], n_workers: u32, rng: &mut R) -> Vec<UpdateOp> {
    items
        .iter()
        .map(|item| {
            if item.insert {
                UpdateOp::Insert {
                    triple: item.triple.clone(),
                    worker: rng.gen_range(0..n_workers),
                }
            } else {
                UpdateOp::Delete { triple: item.triple.clone() }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parses_mixed_batch() {
        let text = "\
# seed data fixes
+ Bob worksFor CS .
- Alice memberOf CS

+ CS subOrgOf Stanford";
        let items = parse_updates(text).expect("parse");
        assert_eq!(
            items,
            vec![
                UpdateItem { insert: true, triple: ["Bob", "worksFor", "CS"].map(String::from) },
                UpdateItem {
                    insert: false,
                    triple: ["Alice", "memberOf", "CS"].map(String::from)
                },
                UpdateItem {
                    insert: true,
                    triple: ["CS", "subOrgOf", "Stanford"].map(String::from)
                },
            ]
        );
    }

    #[test]
    fn rejects_missing_sign() {
        let err = parse_updates("Bob worksFor CS").unwrap_err();
        assert!(matches!(err, Error::UpdateParse { line: 1, .. }), "{err}");
    }

    #[test]
    fn rejects_wrong_arity() {
        let err = parse_updates("+ Bob worksFor").unwrap_err();
        assert!(matches!(err, Error::UpdateParse { line: 1, .. }), "{err}");
        let err = parse_updates("\n- a b c d").unwrap_err();
        assert!(matches!(err, Error::UpdateParse { line: 2, .. }), "{err}");
    }

    #[test]
    fn assignment_is_deterministic_and_in_range() {
        let items = parse_updates("+ a p b\n- c p d\n+ e p f\n+ g p h").expect("parse");
        let ops_a = assign_ops(&items, 4, &mut ChaCha8Rng::seed_from_u64(42));
        let ops_b = assign_ops(&items, 4, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(ops_a, ops_b);
        let mut saw_insert = false;
        for (op, item) in ops_a.iter().zip(&items) {
            assert_eq!(op.triple(), &item.triple);
            match op {
                UpdateOp::Insert { worker, .. } => {
                    assert!(*worker < 4);
                    saw_insert = true;
                }
                UpdateOp::Delete { .. } => assert!(!item.insert),
            }
        }
        assert!(saw_insert);
    }
}
