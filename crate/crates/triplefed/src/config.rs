//! Runtime configuration and the partitioning hash.
//!
//! Config files are flat `key=value` text; `#` starts a comment. The CLI
//! can override any key with flags. The partitioning hash is FNV-1a over
//! the term lexical, reducible per test via a pin file that maps exact
//! terms or `prefix*` patterns to fixed worker ids.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    Inproc,
    Tcp,
}

impl TransportKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "inproc" => Ok(TransportKind::Inproc),
            "tcp" => Ok(TransportKind::Tcp),
            other => Err(Error::Config(format!(
                "unknown transport `{other}` (expected inproc or tcp)"
            ))),
        }
    }
}

/// All runtime options. Every field has a default, so an empty config is
/// valid.
#[derive(Debug, Clone)]
pub struct Config {
    pub n_workers: usize,
    pub transport: TransportKind,
    /// Master address for the tcp transport: workers and clients connect
    /// here.
    pub master_addr: String,
    /// Seed for every random choice the engine makes (insert placement).
    pub seed: u64,
    /// A template triggers redistribution when its frequency first
    /// exceeds this.
    pub freq_threshold: u64,
    /// Template vertices with more unique observed values than this stay
    /// variables when instantiated.
    pub proactivity_threshold: u64,
    /// Cap on replica size as a fraction of the dataset; redistribution
    /// is blocked at or above it. Infinite by default.
    pub rho_max: f64,
    pub hash_pin_file: Option<PathBuf>,
    /// Lexical of the membership predicate excluded from scoring.
    pub type_predicate: String,
    pub barrier_timeout_ms: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            n_workers: 4,
            transport: TransportKind::Inproc,
            master_addr: "127.0.0.1:7401".to_owned(),
            seed: 42,
            freq_threshold: 3,
            proactivity_threshold: 10,
            rho_max: f64::INFINITY,
            hash_pin_file: None,
            type_predicate: "type".to_owned(),
            barrier_timeout_ms: 30_000,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got `{line}`", i + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        Config::parse(&text)
    }

    /// Applies one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad value `{value}` for {what}"));
        match key {
            "n_workers" => {
                self.n_workers = value.parse().map_err(|_| bad("n_workers"))?;
                if self.n_workers == 0 {
                    return Err(Error::Config("n_workers must be at least 1".into()));
                }
            }
            "transport" => self.transport = TransportKind::parse(value)?,
            "master_addr" => self.master_addr = value.to_owned(),
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "freq_threshold" => {
                self.freq_threshold = value.parse().map_err(|_| bad("freq_threshold"))?
            }
            "proactivity_threshold" => {
                self.proactivity_threshold =
                    value.parse().map_err(|_| bad("proactivity_threshold"))?
            }
            "rho_max" => {
                self.rho_max = if value == "inf" {
                    f64::INFINITY
                } else {
                    value.parse().map_err(|_| bad("rho_max"))?
                };
                if self.rho_max < 0.0 {
                    return Err(Error::Config("rho_max must be >= 0".into()));
                }
            }
            "hash_pin_file" => self.hash_pin_file = Some(PathBuf::from(value)),
            "type_predicate" => self.type_predicate = value.to_owned(),
            "barrier_timeout_ms" => {
                self.barrier_timeout_ms = value.parse().map_err(|_| bad("barrier_timeout_ms"))?
            }
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Partitioning hash

/// FNV-1a over the UTF-8 bytes of a lexical. Stable across platforms and
/// runs, which keeps placement reproducible.
pub fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Optional fixed placements for tests: exact terms or `prefix*` patterns
/// mapped to 0-based worker ids. Exact entries beat prefixes; among
/// prefixes the longest match wins.
#[derive(Debug, Clone, Default)]
pub struct HashPins {
    exact: HashMap<String, u32>,
    prefixes: Vec<(String, u32)>,
}

impl HashPins {
    pub fn parse(text: &str) -> Result<HashPins> {
        let mut pins = HashPins::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (pat, id) = match (parts.next(), parts.next(), parts.next()) {
                (Some(p), Some(w), None) => (p, w),
                _ => {
                    return Err(Error::Config(format!(
                        "pin file line {}: expected `pattern worker_id`",
                        i + 1
                    )))
                }
            };
            let id: u32 = id.parse().map_err(|_| {
                Error::Config(format!("pin file line {}: bad worker id `{id}`", i + 1))
            })?;
            if let Some(prefix) = pat.strip_suffix('*') {
                pins.prefixes.push((prefix.to_owned(), id));
            } else {
                pins.exact.insert(pat.to_owned(), id);
            }
        }
        // Longest prefixes first so the first match is the winner.
        pins.prefixes.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
        Ok(pins)
    }

    pub fn from_file(path: &Path) -> Result<HashPins> {
        let text = std::fs::read_to_string(path)?;
        HashPins::parse(&text)
    }

    pub fn lookup(&self, lexical: &str) -> Option<u32> {
        if let Some(&id) = self.exact.get(lexical) {
            return Some(id);
        }
        self.prefixes
            .iter()
            .find(|(p, _)| lexical.starts_with(p.as_str()))
            .map(|(_, id)| *id)
    }
}

/// The placement function `H`: pins first, FNV-1a modulo worker count
/// otherwise. Pinned ids are taken modulo N as well so a pin file written
/// for a larger cluster still resolves.
#[derive(Debug, Clone)]
pub struct Partitioner {
    pins: HashPins,
    n: u32,
}

impl Partitioner {
    pub fn new(n: usize, pins: HashPins) -> Partitioner {
        Partitioner { pins, n: n as u32 }
    }

    pub fn unpinned(n: usize) -> Partitioner {
        Partitioner::new(n, HashPins::default())
    }

    pub fn worker_for(&self, lexical: &str) -> u32 {
        match self.pins.lookup(lexical) {
            Some(id) => id % self.n,
            None => (fnv1a64(lexical) % u64::from(self.n)) as u32,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = Config::parse("").unwrap();
        assert_eq!(cfg.n_workers, 4);
        assert_eq!(cfg.freq_threshold, 3);
        assert_eq!(cfg.proactivity_threshold, 10);
        assert!(cfg.rho_max.is_infinite());
        assert_eq!(cfg.type_predicate, "type");

        let cfg = Config::parse(
            "n_workers = 2\nfreq_threshold=5 # comment\nrho_max=0.5\ntransport=tcp\n",
        )
        .unwrap();
        assert_eq!(cfg.n_workers, 2);
        assert_eq!(cfg.freq_threshold, 5);
        assert_eq!(cfg.rho_max, 0.5);
        assert_eq!(cfg.transport, TransportKind::Tcp);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(Config::parse("no_such_key=1").is_err());
        assert!(Config::parse("n_workers=zero").is_err());
        assert!(Config::parse("n_workers=0").is_err());
        assert!(Config::parse("rho_max=-1").is_err());
    }

    #[test]
    fn fnv_is_stable() {
        // Independently computed FNV-1a 64 reference values.
        assert_eq!(fnv1a64(""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64("a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a64("foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn pins_resolve_exact_then_longest_prefix_then_hash() {
        let pins = HashPins::parse("Stanford* 0\nMIT* 1\nMIT-CS 3\nStanford-E* 2\n").unwrap();
        let p = Partitioner::new(4, pins);
        assert_eq!(p.worker_for("MIT-CS"), 3); // exact beats prefix
        assert_eq!(p.worker_for("MIT"), 1);
        assert_eq!(p.worker_for("Stanford-CS"), 0);
        assert_eq!(p.worker_for("Stanford-ENG"), 2); // longest prefix wins
        let unpinned = Partitioner::unpinned(4);
        assert_eq!(unpinned.worker_for("zzz"), (fnv1a64("zzz") % 4) as u32);
    }

    #[test]
    fn partitioner_is_deterministic_and_in_range() {
        let p = Partitioner::unpinned(3);
        for term in ["a", "b", "Lisa", "Prof.Williams", "university"] {
            let w = p.worker_for(term);
            assert!(w < 3);
            assert_eq!(w, p.worker_for(term));
        }
    }
}
