//! Metric index over node histograms.
//!
//! A simplified cover tree (base 2, top scale fixed at 2^1 since norm-1
//! distances are bounded by 2) accelerates the radius and nearest-neighbor
//! queries used for belief merging. The tree is an accelerator only: a
//! brute-force scan over the side list is the correctness authority in
//! tests, with identical tie-breaking (closest entry, then smallest id).

use crate::belief::{l1_distance, BeliefHistogram};
use crate::fsc::NodeId;
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error("nearest-neighbor query on an empty index")]
    EmptyIndex,
}

const TOP_LEVEL: i32 = 1; // 2^1 = 2 covers the whole metric space

struct TreeNode {
    entry: usize,
    level: i32,
    children: Vec<TreeNode>,
}

/// Cover-tree index over `(BeliefHistogram, NodeId)` entries, with an
/// exhaustive side list of everything inserted.
pub struct BeliefIndex {
    entries: Vec<(BeliefHistogram, NodeId)>,
    root: Option<TreeNode>,
    distance_evals: AtomicU64,
}

impl Default for BeliefIndex {
    fn default() -> Self {
        Self::new()
    }
}

impl BeliefIndex {
    pub fn new() -> Self {
        BeliefIndex {
            entries: Vec::new(),
            root: None,
            distance_evals: AtomicU64::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All indexed entries, in insertion order.
    pub fn entries(&self) -> &[(BeliefHistogram, NodeId)] {
        &self.entries
    }

    /// Distance evaluations performed so far (instrumentation).
    pub fn distance_evals(&self) -> u64 {
        self.distance_evals.load(Ordering::Relaxed)
    }

    fn dist(&self, h: &BeliefHistogram, entry: usize) -> f64 {
        self.distance_evals.fetch_add(1, Ordering::Relaxed);
        l1_distance(h, &self.entries[entry].0)
    }

    pub fn insert(&mut self, h: BeliefHistogram, id: NodeId) {
        let entry = self.entries.len();
        self.entries.push((h, id));
        match &mut self.root {
            None => {
                self.root = Some(TreeNode { entry, level: TOP_LEVEL, children: Vec::new() });
            }
            Some(_) => {
                let mut root = self.root.take().unwrap();
                self.insert_rec(&mut root, entry);
                self.root = Some(root);
            }
        }
    }

    // Invariant: d(new, node) <= 2^node.level. Children of a node at level l
    // sit at level l-1, within 2^l of their parent, so a subtree rooted at
    // level l stays within 2^(l+1) of its root.
    fn insert_rec(&self, node: &mut TreeNode, entry: usize) {
        let h = self.entries[entry].0.clone();
        let mut cur = node;
        loop {
            let child_radius = exp2(cur.level - 1);
            let mut chosen: Option<usize> = None;
            for (ci, child) in cur.children.iter().enumerate() {
                if self.dist(&h, child.entry) <= child_radius {
                    chosen = Some(ci);
                    break;
                }
            }
            match chosen {
                Some(ci) => cur = &mut cur.children[ci],
                None => {
                    let level = cur.level - 1;
                    cur.children.push(TreeNode { entry, level, children: Vec::new() });
                    return;
                }
            }
        }
    }

    /// Entry minimizing the norm-1 distance to `h`; ties broken by smallest
    /// node id.
    pub fn search_nearest(&self, h: &BeliefHistogram) -> Result<(NodeId, f64), IndexError> {
        let root = self.root.as_ref().ok_or(IndexError::EmptyIndex)?;
        let d_root = self.dist(h, root.entry);
        let mut best = (d_root, self.entries[root.entry].1);
        self.nearest_rec(root, h, d_root, &mut best);
        Ok((best.1, best.0))
    }

    fn nearest_rec(&self, node: &TreeNode, h: &BeliefHistogram, d_node: f64, best: &mut (f64, NodeId)) {
        let id = self.entries[node.entry].1;
        if d_node < best.0 || (d_node == best.0 && id < best.1) {
            *best = (d_node, id);
        }
        let mut ranked: Vec<(f64, &TreeNode)> =
            node.children.iter().map(|c| (self.dist(h, c.entry), c)).collect();
        ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for (d_child, child) in ranked {
            // subtree radius bound; non-strict so exact ties survive pruning
            if d_child - exp2(child.level + 1) <= best.0 {
                self.nearest_rec(child, h, d_child, best);
            }
        }
    }

    /// Return an existing entry within `xi` of `h` (the closest one, ties by
    /// smallest id), or insert a new entry with the id produced by
    /// `make_node`. The boolean is true iff a new entry was created.
    pub fn search_or_insert(
        &mut self,
        h: &BeliefHistogram,
        xi: f64,
        make_node: impl FnOnce() -> NodeId,
    ) -> (NodeId, bool) {
        debug_assert!(xi > 0.0);
        if let Ok((id, d)) = self.search_nearest(h) {
            if d <= xi {
                return (id, false);
            }
        }
        let id = make_node();
        self.insert(h.clone(), id);
        (id, true)
    }
}

fn exp2(level: i32) -> f64 {
    (level as f64).exp2()
}

/// Brute-force reference with the same tie-breaking, used as the correctness
/// oracle in tests.
pub fn linear_scan_nearest(
    entries: &[(BeliefHistogram, NodeId)],
    h: &BeliefHistogram,
) -> Option<(NodeId, f64)> {
    entries
        .iter()
        .map(|(eh, id)| (l1_distance(h, eh), *id))
        .min_by(|a, b| a.partial_cmp(b).unwrap())
        .map(|(d, id)| (id, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hist(entries: &[(i64, f64)]) -> BeliefHistogram {
        BeliefHistogram {
            bins: entries.iter().map(|&(k, v)| (vec![k], v)).collect(),
        }
    }

    #[test]
    fn empty_index_inserts() {
        let mut idx = BeliefIndex::new();
        let h = hist(&[(0, 1.0)]);
        let (id, created) = idx.search_or_insert(&h, 0.1, || 5);
        assert_eq!((id, created), (5, true));
        assert_eq!(idx.search_nearest(&h).unwrap(), (5, 0.0));
    }

    #[test]
    fn exact_match_reuses_entry() {
        let mut idx = BeliefIndex::new();
        let h = hist(&[(0, 0.5), (1, 0.5)]);
        idx.insert(h.clone(), 0);
        let (id, created) = idx.search_or_insert(&h, 0.1, || unreachable!());
        assert_eq!((id, created), (0, false));
    }

    #[test]
    fn distant_entry_forces_insert() {
        let mut idx = BeliefIndex::new();
        let a = hist(&[(0, 0.5), (1, 0.5)]);
        let b = hist(&[(0, 1.0)]); // d(a, b) = 1.0
        idx.insert(a.clone(), 0);
        // linear-scan oracle confirms no entry within xi
        let (_, d) = linear_scan_nearest(idx.entries(), &b).unwrap();
        assert!(d > 0.1);
        let (id, created) = idx.search_or_insert(&b, 0.1, || 1);
        assert_eq!((id, created), (1, true));
    }

    #[test]
    fn nearest_picks_closest() {
        let mut idx = BeliefIndex::new();
        idx.insert(hist(&[(0, 0.85), (1, 0.15)]), 0); // d to query 0.3
        idx.insert(hist(&[(0, 0.65), (1, 0.35)]), 1); // d to query 0.7
        let q = hist(&[(0, 1.0)]);
        assert_eq!(idx.search_nearest(&q).unwrap().0, 0);
    }

    #[test]
    fn empty_index_nearest_errors() {
        let idx = BeliefIndex::new();
        assert_eq!(idx.search_nearest(&hist(&[(0, 1.0)])).unwrap_err(), IndexError::EmptyIndex);
    }

    fn random_hist(rng: &mut impl rand::Rng) -> BeliefHistogram {
        let nbins = rng.random_range(1..6);
        let keys: Vec<i64> = (0..nbins).map(|_| rng.random_range(0..15)).collect();
        let weights: Vec<f64> = (0..nbins).map(|_| rng.random_range(1..20) as f64).collect();
        let total: f64 = weights.iter().sum();
        let mut bins = std::collections::BTreeMap::new();
        for (k, w) in keys.into_iter().zip(weights) {
            *bins.entry(vec![k]).or_insert(0.0) += w / total;
        }
        BeliefHistogram { bins }
    }

    #[test]
    fn thousand_entries_match_brute_force() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(9);
        let mut idx = BeliefIndex::new();
        for i in 0..1_000 {
            idx.insert(random_hist(&mut rng), i);
        }
        for _ in 0..100 {
            let q = random_hist(&mut rng);
            let tree = idx.search_nearest(&q).unwrap();
            let scan = linear_scan_nearest(idx.entries(), &q).unwrap();
            assert_eq!(tree, scan);
        }
    }

    #[test]
    fn returned_ids_stable_under_insertion() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(4);
        let mut idx = BeliefIndex::new();
        let probe = random_hist(&mut rng);
        idx.insert(probe.clone(), 0);
        let before = idx.search_nearest(&probe).unwrap();
        assert_eq!(before, (0, 0.0));
        for i in 1..200 {
            idx.insert(random_hist(&mut rng), i);
        }
        assert_eq!(idx.search_nearest(&probe).unwrap(), (0, 0.0));
    }

    #[test]
    fn query_cost_advisory() {
        // advisory performance guard, reported but not enforced
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2);
        let mut idx = BeliefIndex::new();
        for i in 0..10_000 {
            idx.insert(random_hist(&mut rng), i);
        }
        let start = idx.distance_evals();
        let queries = 200;
        for _ in 0..queries {
            let q = random_hist(&mut rng);
            idx.search_nearest(&q).unwrap();
        }
        let per_query = (idx.distance_evals() - start) as f64 / queries as f64;
        let ratio = per_query / idx.len() as f64;
        eprintln!(
            "belief-index advisory: {per_query:.0} distance evals/query on {} entries ({:.1}% of brute force)",
            idx.len(),
            ratio * 100.0
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn search_or_insert_matches_reference(seed in 0u64..10_000, ops in 5usize..60, xi in 0.05f64..0.8) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let mut idx = BeliefIndex::new();
            let mut reference: Vec<(BeliefHistogram, NodeId)> = Vec::new();
            let mut next_id = 0;
            for _ in 0..ops {
                let h = random_hist(&mut rng);
                let expected = match linear_scan_nearest(&reference, &h) {
                    Some((id, d)) if d <= xi => (id, false),
                    _ => (next_id, true),
                };
                let (id, created) = idx.search_or_insert(&h, xi, || next_id);
                prop_assert_eq!((id, created), expected);
                if created {
                    reference.push((h, next_id));
                    next_id += 1;
                }
                // nearest query agrees too
                let q = random_hist(&mut rng);
                let tree = idx.search_nearest(&q).unwrap();
                let scan = linear_scan_nearest(&reference, &q).unwrap();
                prop_assert_eq!(tree, scan);
            }
        }
    }
}
