//! Network diagnostics of a bimodule: connectivity threshold, essential
//! edges, and tree-multiplicity.

use std::collections::HashSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corr::{cross_corr_block, gather_rows, Edge, EdgeList, FeatureSet};
use crate::data::TwoViewDataset;
use crate::error::{Error, Result};

/// Edge counts above this size switch to streamed, weight-bucketed passes
/// instead of materializing and sorting the full edge list.
const STREAM_EDGE_LIMIT: usize = 10_000_000;

/// Connectivity threshold, essential edges, and their tree-multiplicity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetStats {
    pub tau_star: f64,
    pub essential_edges: EdgeList,
    pub tree_multiplicity: f64,
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
    components: usize,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
            components: n,
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        self.components -= 1;
        true
    }
}

/// The largest `tau` at which thresholding `|r|` keeps the complete
/// bipartite graph on `A u B` connected; equivalently the bottleneck weight
/// of the maximum spanning structure, found by inserting edges in descending
/// order of `|r|` until one component remains.
pub fn connectivity_threshold(
    dataset: &TwoViewDataset,
    a: &FeatureSet,
    b: &FeatureSet,
) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let na = a.len();
    let nb = b.len();
    if na * nb <= STREAM_EDGE_LIMIT {
        let block = cross_corr_block(dataset, a, b);
        let mut edges: Vec<(f64, u32, u32)> = Vec::with_capacity(na * nb);
        for i in 0..na {
            for j in 0..nb {
                edges.push((block[[i, j]].abs(), i as u32, j as u32));
            }
        }
        sort_edges_descending(&mut edges);
        bottleneck(&edges, na, nb)
    } else {
        connectivity_threshold_streamed(dataset, a, b)
    }
}

fn sort_edges_descending(edges: &mut [(f64, u32, u32)]) {
    edges.sort_unstable_by(|x, y| {
        y.0.partial_cmp(&x.0)
            .unwrap()
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });
}

fn bottleneck(sorted_edges: &[(f64, u32, u32)], na: usize, nb: usize) -> f64 {
    let mut uf = UnionFind::new(na + nb);
    let mut tau = 0.0;
    for &(w, i, j) in sorted_edges {
        uf.union(i as usize, na + j as usize);
        if uf.components == 1 {
            tau = w;
            break;
        }
        tau = w;
    }
    tau
}

/// Multi-pass variant for edge sets too large to hold at once: histogram the
/// weights into buckets, then replay buckets from the strongest down,
/// materializing one bucket at a time.
fn connectivity_threshold_streamed(
    dataset: &TwoViewDataset,
    a: &FeatureSet,
    b: &FeatureSet,
) -> f64 {
    const BUCKETS: usize = 4096;
    let na = a.len();
    let nb = b.len();
    let xa = gather_rows(dataset, a);
    let yb = gather_rows(dataset, b);
    let row_chunk = (STREAM_EDGE_LIMIT / nb).max(1);

    let bucket_of = |w: f64| -> usize {
        // |r| can exceed 1 by rounding; clamp into the top bucket.
        ((w * BUCKETS as f64) as usize).min(BUCKETS - 1)
    };
    let mut counts = vec![0usize; BUCKETS];
    let mut start = 0;
    while start < na {
        let end = (start + row_chunk).min(na);
        let block = xa.slice(ndarray::s![start..end, ..]).dot(&yb.t());
        for w in block.iter() {
            counts[bucket_of(w.abs())] += 1;
        }
        start = end;
    }

    let mut uf = UnionFind::new(na + nb);
    let mut tau = 0.0;
    for bucket in (0..BUCKETS).rev() {
        if counts[bucket] == 0 || uf.components == 1 {
            if uf.components == 1 {
                break;
            }
            continue;
        }
        let mut edges: Vec<(f64, u32, u32)> = Vec::with_capacity(counts[bucket]);
        let mut start = 0;
        while start < na {
            let end = (start + row_chunk).min(na);
            let block = xa.slice(ndarray::s![start..end, ..]).dot(&yb.t());
            for ((i, j), w) in block.indexed_iter() {
                if bucket_of(w.abs()) == bucket {
                    edges.push((w.abs(), (start + i) as u32, j as u32));
                }
            }
            start = end;
        }
        sort_edges_descending(&mut edges);
        for &(w, i, j) in &edges {
            uf.union(i as usize, na + j as usize);
            tau = w;
            if uf.components == 1 {
                break;
            }
        }
        if uf.components == 1 {
            break;
        }
    }
    tau
}

/// All pairs of `A x B` whose `|r|` meets the connectivity threshold, with
/// signed weights; the inclusive comparison keeps the edge graph connected.
pub fn essential_edges(
    dataset: &TwoViewDataset,
    a: &FeatureSet,
    b: &FeatureSet,
    tau_star: f64,
) -> EdgeList {
    let na = a.len();
    let nb = b.len();
    let xa = gather_rows(dataset, a);
    let yb = gather_rows(dataset, b);
    let row_chunk = (STREAM_EDGE_LIMIT / nb.max(1)).max(1);
    let mut edges = Vec::new();
    let mut start = 0;
    while start < na {
        let end = (start + row_chunk).min(na);
        let block = xa.slice(ndarray::s![start..end, ..]).dot(&yb.t());
        for ((i, j), w) in block.indexed_iter() {
            if w.abs() >= tau_star {
                edges.push(Edge {
                    s: a.indices()[start + i],
                    t: b.indices()[j],
                    weight: *w,
                });
            }
        }
        start = end;
    }
    EdgeList { edges }
}

/// Computes all three network statistics for a bimodule.
pub fn net_stats(dataset: &TwoViewDataset, a: &FeatureSet, b: &FeatureSet) -> NetStats {
    let tau_star = connectivity_threshold(dataset, a, b);
    let essential = essential_edges(dataset, a, b, tau_star);
    let tree_multiplicity = essential.len() as f64 / (a.len() + b.len() - 1) as f64;
    NetStats {
        tau_star,
        essential_edges: essential,
        tree_multiplicity,
    }
}

/// Fraction of essential edges absent from the truth set.
pub fn edge_error(essential: &EdgeList, truth_edges: &HashSet<(usize, usize)>) -> Result<f64> {
    if essential.is_empty() {
        return Err(Error::EmptyEdgeList);
    }
    let wrong = essential
        .edges
        .iter()
        .filter(|e| !truth_edges.contains(&(e.s, e.t)))
        .count();
    Ok(wrong as f64 / essential.len() as f64)
}

/// Brute-force check used by tests and verification: sweep every distinct
/// threshold and test connectivity with a breadth-first search.
pub fn brute_force_threshold(abs_weights: &Array2<f64>) -> f64 {
    let na = abs_weights.nrows();
    let nb = abs_weights.ncols();
    let mut taus: Vec<f64> = abs_weights.iter().cloned().collect();
    taus.sort_unstable_by(|x, y| y.partial_cmp(x).unwrap());
    taus.dedup();
    for &tau in &taus {
        if bfs_connected(abs_weights, tau, na, nb) {
            return tau;
        }
    }
    *taus.last().unwrap()
}

fn bfs_connected(abs_weights: &Array2<f64>, tau: f64, na: usize, nb: usize) -> bool {
    let total = na + nb;
    let mut seen = vec![false; total];
    let mut queue = std::collections::VecDeque::new();
    seen[0] = true;
    queue.push_back(0usize);
    let mut visited = 1;
    while let Some(v) = queue.pop_front() {
        if v < na {
            for j in 0..nb {
                if abs_weights[[v, j]] >= tau && !seen[na + j] {
                    seen[na + j] = true;
                    visited += 1;
                    queue.push_back(na + j);
                }
            }
        } else {
            let j = v - na;
            for i in 0..na {
                if abs_weights[[i, j]] >= tau && !seen[i] {
                    seen[i] = true;
                    visited += 1;
                    queue.push_back(i);
                }
            }
        }
    }
    visited == total
}
