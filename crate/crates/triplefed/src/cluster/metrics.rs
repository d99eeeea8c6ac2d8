//! Traffic and storage accounting.
//!
//! Every node counts outgoing frames at the sender, per message tag,
//! split into loopback (sender == receiver) and remote (sender !=
//! receiver) — the split is by addressing, not by transport, so a
//! single-process cluster reports the same numbers as a TCP one.
//! Workers piggyback their counters on completion acks; the master keeps
//! the latest report per worker plus its own counters and folds them
//! into a [`ClusterMetrics`] snapshot on demand.

use std::collections::BTreeMap;

use super::wire::{WorkerReport, TAG_COUNT, TAG_NAMES};

/// Per-tag outgoing counters: `[loopback msgs, loopback bytes, remote
/// msgs, remote bytes]`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeMetrics {
    pub per_tag: [[u64; 4]; TAG_COUNT],
}

impl NodeMetrics {
    pub fn new() -> NodeMetrics {
        NodeMetrics::default()
    }

    /// Records one outgoing frame of `bytes` total size.
    pub fn count(&mut self, tag: u8, loopback: bool, bytes: usize) {
        let slot = &mut self.per_tag[tag as usize];
        if loopback {
            slot[0] += 1;
            slot[1] += bytes as u64;
        } else {
            slot[2] += 1;
            slot[3] += bytes as u64;
        }
    }

    pub fn remote_bytes(&self) -> u64 {
        self.per_tag.iter().map(|t| t[3]).sum()
    }

    pub fn remote_msgs(&self) -> u64 {
        self.per_tag.iter().map(|t| t[2]).sum()
    }

    pub fn loopback_bytes(&self) -> u64 {
        self.per_tag.iter().map(|t| t[1]).sum()
    }

    pub fn loopback_msgs(&self) -> u64 {
        self.per_tag.iter().map(|t| t[0]).sum()
    }

    pub fn add(&mut self, other: &[[u64; 4]; TAG_COUNT]) {
        for (mine, theirs) in self.per_tag.iter_mut().zip(other.iter()) {
            for (m, t) in mine.iter_mut().zip(theirs.iter()) {
                *m += t;
            }
        }
    }
}

/// Gini coefficient of a distribution: 0 for perfectly even, approaching
/// 1 as everything piles onto one element. Zero mean yields 0.
pub fn gini(xs: &[u64]) -> f64 {
    let n = xs.len();
    if n == 0 {
        return 0.0;
    }
    let total: u64 = xs.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let mean = total as f64 / n as f64;
    let mut abs_diff_sum = 0.0;
    for &a in xs {
        for &b in xs {
            abs_diff_sum += (a as f64 - b as f64).abs();
        }
    }
    abs_diff_sum / (2.0 * (n as f64) * (n as f64) * mean)
}

/// Cluster-wide snapshot assembled by the master.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMetrics {
    /// Worker counters in worker-id order, master's own counters last.
    pub per_node: Vec<(String, NodeMetrics)>,
    /// Stored triples per worker: `(main, replica)`.
    pub storage: Vec<(u64, u64)>,
    pub main_triples: u64,
    pub replica_triples: u64,
}

impl ClusterMetrics {
    pub fn assemble(
        worker_reports: &BTreeMap<u32, WorkerReport>,
        master: &NodeMetrics,
    ) -> ClusterMetrics {
        let mut per_node = Vec::with_capacity(worker_reports.len() + 1);
        let mut storage = Vec::with_capacity(worker_reports.len());
        let mut main_triples = 0;
        let mut replica_triples = 0;
        for (id, rep) in worker_reports {
            per_node.push((format!("worker{id}"), NodeMetrics { per_tag: rep.per_tag }));
            storage.push((rep.main_triples, rep.replica_triples));
            main_triples += rep.main_triples;
            replica_triples += rep.replica_triples;
        }
        per_node.push(("master".to_owned(), master.clone()));
        ClusterMetrics { per_node, storage, main_triples, replica_triples }
    }

    /// Replicated triples per original triple; 0 on an empty store.
    pub fn replication_ratio(&self) -> f64 {
        if self.main_triples == 0 {
            0.0
        } else {
            self.replica_triples as f64 / self.main_triples as f64
        }
    }

    /// Storage balance over per-worker totals (main + replica).
    pub fn storage_gini(&self) -> f64 {
        let xs: Vec<u64> = self.storage.iter().map(|&(m, r)| m + r).collect();
        gini(&xs)
    }

    /// Balance of the original partitioning alone.
    pub fn main_gini(&self) -> f64 {
        let xs: Vec<u64> = self.storage.iter().map(|&(m, _)| m).collect();
        gini(&xs)
    }

    pub fn totals(&self) -> NodeMetrics {
        let mut out = NodeMetrics::new();
        for (_, m) in &self.per_node {
            out.add(&m.per_tag);
        }
        out
    }

    pub fn remote_bytes(&self) -> u64 {
        self.totals().remote_bytes()
    }

    /// Deterministic text rendering, one datum per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let totals = self.totals();
        for (i, name) in TAG_NAMES.iter().enumerate() {
            let t = totals.per_tag[i];
            out.push_str(&format!(
                "tag {name} loopback_msgs {} loopback_bytes {} remote_msgs {} remote_bytes {}\n",
                t[0], t[1], t[2], t[3]
            ));
        }
        out.push_str(&format!(
            "total loopback_msgs {} loopback_bytes {} remote_msgs {} remote_bytes {}\n",
            totals.loopback_msgs(),
            totals.loopback_bytes(),
            totals.remote_msgs(),
            totals.remote_bytes()
        ));
        for (i, &(m, r)) in self.storage.iter().enumerate() {
            out.push_str(&format!("worker {i} main {m} replica {r}\n"));
        }
        out.push_str(&format!("main_triples {}\n", self.main_triples));
        out.push_str(&format!("replica_triples {}\n", self.replica_triples));
        out.push_str(&format!("replication_ratio {:.6}\n", self.replication_ratio()));
        out.push_str(&format!("storage_gini {:.6}\n", self.storage_gini()));
        out.push_str(&format!("main_gini {:.6}\n", self.main_gini()));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting_splits_loopback_and_remote() {
        let mut m = NodeMetrics::new();
        m.count(3, true, 100);
        m.count(3, false, 40);
        m.count(3, false, 60);
        assert_eq!(m.per_tag[3], [1, 100, 2, 100]);
        assert_eq!(m.remote_bytes(), 100);
        assert_eq!(m.loopback_msgs(), 1);
    }

    #[test]
    fn gini_of_even_distribution_is_zero() {
        assert_eq!(gini(&[5, 5, 5, 5]), 0.0);
    }

    #[test]
    fn gini_of_fully_skewed_four_is_three_quarters() {
        let g = gini(&[100, 0, 0, 0]);
        assert!((g - 0.75).abs() < 1e-12, "got {g}");
    }

    #[test]
    fn gini_handles_empty_and_zero() {
        assert_eq!(gini(&[]), 0.0);
        assert_eq!(gini(&[0, 0, 0]), 0.0);
    }

    #[test]
    fn gini_is_scale_invariant() {
        let a = gini(&[1, 2, 3, 4]);
        let b = gini(&[10, 20, 30, 40]);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn assemble_folds_reports() {
        let mut reports = BTreeMap::new();
        let mut r0 = WorkerReport { main_triples: 10, replica_triples: 4, ..Default::default() };
        r0.per_tag[5] = [0, 0, 3, 300];
        reports.insert(0u32, r0);
        let mut r1 = WorkerReport { main_triples: 10, replica_triples: 0, ..Default::default() };
        r1.per_tag[5] = [1, 50, 0, 0];
        reports.insert(1u32, r1);
        let mut master = NodeMetrics::new();
        master.count(2, false, 120);

        let cm = ClusterMetrics::assemble(&reports, &master);
        assert_eq!(cm.main_triples, 20);
        assert_eq!(cm.replica_triples, 4);
        assert!((cm.replication_ratio() - 0.2).abs() < 1e-12);
        assert_eq!(cm.remote_bytes(), 420);
        let totals = cm.totals();
        assert_eq!(totals.per_tag[5], [1, 50, 3, 300]);
        assert_eq!(totals.per_tag[2], [0, 0, 1, 120]);
        let text = cm.render();
        assert!(text.contains("tag PartialResult loopback_msgs 1 loopback_bytes 50 remote_msgs 3 remote_bytes 300"));
        assert!(text.contains("replication_ratio 0.200000"));
    }

    #[test]
    fn empty_store_ratio_is_zero() {
        let cm = ClusterMetrics::assemble(&BTreeMap::new(), &NodeMetrics::new());
        assert_eq!(cm.replication_ratio(), 0.0);
        assert_eq!(cm.storage_gini(), 0.0);
    }
}
