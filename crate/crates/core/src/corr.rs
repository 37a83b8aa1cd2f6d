//! Cross-correlation blocks, aggregate squared-correlation statistics, and
//! intra-correlation eigenvalues over a standardized dataset.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::TwoViewDataset;

/// Which of the two views a feature set lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum View {
    TypeOne,
    TypeTwo,
}

impl View {
    pub fn opposite(self) -> View {
        match self {
            View::TypeOne => View::TypeTwo,
            View::TypeTwo => View::TypeOne,
        }
    }
}

/// A sorted, deduplicated set of feature indices within one view.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureSet {
    pub view: View,
    indices: Vec<usize>,
}

impl FeatureSet {
    pub fn new(view: View, mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { view, indices }
    }

    pub fn singleton(view: View, index: usize) -> Self {
        Self {
            view,
            indices: vec![index],
        }
    }

    pub fn empty(view: View) -> Self {
        Self {
            view,
            indices: Vec::new(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    /// Intersection with another set from the same view.
    pub fn intersect(&self, other: &FeatureSet) -> FeatureSet {
        debug_assert_eq!(self.view, other.view);
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(self.indices[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        FeatureSet {
            view: self.view,
            indices: out,
        }
    }

    /// Size of the intersection without materializing it.
    pub fn intersection_len(&self, other: &FeatureSet) -> usize {
        let (mut i, mut j, mut k) = (0, 0, 0);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    k += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        k
    }
}

/// A weighted bipartite edge between a type-1 and a type-2 feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub s: usize,
    pub t: usize,
    pub weight: f64,
}

/// Signed correlation edges, no duplicate pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeList {
    pub edges: Vec<Edge>,
}

impl EdgeList {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Rows of the dataset matrix holding the given feature set, as an owned
/// contiguous block (`|set| x n`).
pub fn gather_rows(dataset: &TwoViewDataset, set: &FeatureSet) -> Array2<f64> {
    let src = match set.view {
        View::TypeOne => &dataset.x,
        View::TypeTwo => &dataset.y,
    };
    src.select(Axis(0), set.indices())
}

/// Pairwise sample correlations between the features of `a` (type 1) and
/// `b` (type 2); entry `(i, j)` is the inner product of the standardized
/// feature rows.
pub fn cross_corr_block(
    dataset: &TwoViewDataset,
    a: &FeatureSet,
    b: &FeatureSet,
) -> Array2<f64> {
    debug_assert!(dataset.is_standardized());
    debug_assert_eq!(a.view, View::TypeOne);
    debug_assert_eq!(b.view, View::TypeTwo);
    let xa = gather_rows(dataset, a);
    let yb = gather_rows(dataset, b);
    xa.dot(&yb.t())
}

/// Aggregate squared correlation `r^2(A, B)`: the sum of squared pairwise
/// correlations. Empty sets contribute zero.
pub fn r2_sum(dataset: &TwoViewDataset, a: &FeatureSet, b: &FeatureSet) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let (one, two) = match (a.view, b.view) {
        (View::TypeOne, View::TypeTwo) => (a, b),
        (View::TypeTwo, View::TypeOne) => (b, a),
        _ => panic!("r2_sum requires one set from each view"),
    };
    let block = cross_corr_block(dataset, one, two);
    block.iter().map(|r| r * r).sum()
}

/// Largest per-entry block size (in f64 elements) used when streaming the
/// profile product; keeps peak memory bounded at large scale.
const PROFILE_BLOCK_ELEMS: usize = 4_000_000;

/// The vector `t -> r^2(A, t)` over every feature of the opposite view,
/// computed with blocked matrix products rather than per-feature loops.
pub fn r2_profile(dataset: &TwoViewDataset, set: &FeatureSet) -> Array1<f64> {
    debug_assert!(dataset.is_standardized());
    debug_assert!(!set.is_empty());
    let block = gather_rows(dataset, set);
    let opposite = match set.view {
        View::TypeOne => &dataset.y,
        View::TypeTwo => &dataset.x,
    };
    let m = opposite.nrows();
    let mut profile = Array1::<f64>::zeros(m);
    let chunk = (PROFILE_BLOCK_ELEMS / set.len().max(1)).clamp(16, m.max(16));
    let mut start = 0;
    while start < m {
        let end = (start + chunk).min(m);
        let opp = opposite.slice(ndarray::s![start..end, ..]);
        // (|set| x n) . (n x chunk) = |set| x chunk of correlations
        let g = block.dot(&opp.t());
        for (j, col) in g.axis_iter(Axis(1)).enumerate() {
            profile[start + j] = col.iter().map(|r| r * r).sum();
        }
        start = end;
    }
    profile
}

/// Eigenvalues of the intra-correlation (Gram) matrix of the set's features,
/// descending, clamped to be nonnegative.
///
/// When the set is larger than the sample count the Gram is computed on the
/// sample side, whose nonzero spectrum is identical, and padded with exact
/// zeros.
pub fn intra_eigenvalues(dataset: &TwoViewDataset, set: &FeatureSet) -> Vec<f64> {
    debug_assert!(dataset.is_standardized());
    debug_assert!(!set.is_empty());
    let block = gather_rows(dataset, set);
    let k = set.len();
    let n = dataset.n();
    let gram = if k <= n {
        block.dot(&block.t())
    } else {
        block.t().dot(&block)
    };
    let dim = gram.nrows();
    let dm = nalgebra::DMatrix::from_iterator(dim, dim, gram.iter().cloned());
    let eig = dm.symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
    vals.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    vals.resize(k, 0.0);
    vals
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TwoViewDataset;
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ids(prefix: &str, k: usize) -> Vec<String> {
        (0..k).map(|i| format!("{prefix}{i}")).collect()
    }

    fn standardized(rng: &mut ChaCha8Rng, n: usize, p: usize, q: usize) -> TwoViewDataset {
        let x = Array2::from_shape_fn((p, n), |_| rng.random::<f64>() - 0.5);
        let y = Array2::from_shape_fn((q, n), |_| rng.random::<f64>() - 0.5);
        TwoViewDataset::from_parts(x, y, ids("s", p), ids("t", q), None)
            .unwrap()
            .standardize()
            .unwrap()
    }

    /// Plain Pearson correlation, the scalar-loop oracle.
    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut da = 0.0;
        let mut db = 0.0;
        for (x, y) in a.iter().zip(b) {
            num += (x - ma) * (y - mb);
            da += (x - ma) * (x - ma);
            db += (y - mb) * (y - mb);
        }
        num / (da * db).sqrt()
    }

    /// Jacobi rotation eigensolver, independent of the nalgebra path.
    #[allow(clippy::needless_range_loop)]
    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a[i][j] * a[i][j];
                }
            }
            if off < 1e-24 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[p][q].abs() < 1e-18 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut vals: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        vals.sort_unstable_by(|x, y| y.partial_cmp(x).unwrap());
        vals
    }

    #[test]
    fn identical_columns_correlate_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20;
        let shared: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut x = Array2::from_shape_fn((2, n), |_| rng.random::<f64>());
        let mut y = Array2::from_shape_fn((2, n), |_| rng.random::<f64>());
        x.row_mut(0).assign(&ndarray::ArrayView1::from(&shared));
        y.row_mut(1).assign(&ndarray::ArrayView1::from(&shared));
        let ds = TwoViewDataset::from_parts(x, y, ids("s", 2), ids("t", 2), None)
            .unwrap()
            .standardize()
            .unwrap();
        let a = FeatureSet::singleton(View::TypeOne, 0);
        let b = FeatureSet::singleton(View::TypeTwo, 1);
        let block = cross_corr_block(&ds, &a, &b);
        assert!((block[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((r2_sum(&ds, &a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_columns_correlate_to_zero() {
        // Two hand-built orthogonal, centered columns.
        let x = ndarray::array![[1.0, -1.0, 1.0, -1.0]];
        let y = ndarray::array![[1.0, 1.0, -1.0, -1.0]];
        let ds = TwoViewDataset::from_parts(x, y, ids("s", 1), ids("t", 1), None)
            .unwrap()
            .standardize()
            .unwrap();
        let a = FeatureSet::singleton(View::TypeOne, 0);
        let b = FeatureSet::singleton(View::TypeTwo, 0);
        assert!(cross_corr_block(&ds, &a, &b)[[0, 0]].abs() < 1e-12);
    }

    #[test]
    fn block_matches_scalar_pearson_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 30;
        let raw_x = Array2::from_shape_fn((4, n), |_| rng.random::<f64>() - 0.2);
        let raw_y = Array2::from_shape_fn((3, n), |_| rng.random::<f64>() * 2.0);
        let ds = TwoViewDataset::from_parts(
            raw_x.clone(),
            raw_y.clone(),
            ids("s", 4),
            ids("t", 3),
            None,
        )
        .unwrap()
        .standardize()
        .unwrap();
        let a = FeatureSet::new(View::TypeOne, (0..4).collect());
        let b = FeatureSet::new(View::TypeTwo, (0..3).collect());
        let block = cross_corr_block(&ds, &a, &b);
        for i in 0..4 {
            for j in 0..3 {
                let direct = pearson(
                    raw_x.row(i).as_slice().unwrap(),
                    raw_y.row(j).as_slice().unwrap(),
                );
                assert!((block[[i, j]] - direct).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn r2_sum_matches_elementwise_oracle_and_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let ds = standardized(&mut rng, 25, 3, 2);
        let a = FeatureSet::new(View::TypeOne, vec![0, 1, 2]);
        let b = FeatureSet::new(View::TypeTwo, vec![0, 1]);
        let block = cross_corr_block(&ds, &a, &b);
        let brute: f64 = block.iter().map(|r| r * r).sum();
        assert!((r2_sum(&ds, &a, &b) - brute).abs() < 1e-9);
        assert!((r2_sum(&ds, &b, &a) - brute).abs() < 1e-12);
        let empty = FeatureSet::empty(View::TypeTwo);
        assert_eq!(r2_sum(&ds, &a, &empty), 0.0);
    }

    #[test]
    fn r2_sum_ignores_index_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let ds = standardized(&mut rng, 20, 6, 5);
        let a1 = FeatureSet::new(View::TypeOne, vec![4, 0, 2]);
        let a2 = FeatureSet::new(View::TypeOne, vec![2, 4, 0]);
        let b1 = FeatureSet::new(View::TypeTwo, vec![3, 1]);
        let b2 = FeatureSet::new(View::TypeTwo, vec![1, 3]);
        let r = r2_sum(&ds, &a1, &b1);
        assert_eq!(r.to_bits(), r2_sum(&ds, &a2, &b2).to_bits());
    }

    #[test]
    fn profile_matches_r2_sum_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let ds = standardized(&mut rng, 22, 6, 9);
        let a = FeatureSet::new(View::TypeOne, vec![1, 3, 4]);
        let profile = r2_profile(&ds, &a);
        assert_eq!(profile.len(), ds.q());
        for t in 0..ds.q() {
            let single = FeatureSet::singleton(View::TypeTwo, t);
            assert!((profile[t] - r2_sum(&ds, &a, &single)).abs() < 1e-12);
        }
        // And the mirrored direction over type-1 features.
        let b = FeatureSet::new(View::TypeTwo, vec![0, 2]);
        let profile_s = r2_profile(&ds, &b);
        assert_eq!(profile_s.len(), ds.p());
        for s in 0..ds.p() {
            let single = FeatureSet::singleton(View::TypeOne, s);
            assert!((profile_s[s] - r2_sum(&ds, &single, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_signal_doubles_profile() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let n = 18;
        let signal: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut x = Array2::from_shape_fn((3, n), |_| rng.random::<f64>());
        x.row_mut(0).assign(&ndarray::ArrayView1::from(&signal));
        x.row_mut(1).assign(&ndarray::ArrayView1::from(&signal));
        let y = Array2::from_shape_fn((5, n), |_| rng.random::<f64>());
        let ds = TwoViewDataset::from_parts(x, y, ids("s", 3), ids("t", 5), None)
            .unwrap()
            .standardize()
            .unwrap();
        let pair = FeatureSet::new(View::TypeOne, vec![0, 1]);
        let single = FeatureSet::singleton(View::TypeOne, 0);
        let p2 = r2_profile(&ds, &pair);
        let p1 = r2_profile(&ds, &single);
        for t in 0..ds.q() {
            assert!((p2[t] - 2.0 * p1[t]).abs() < 1e-10);
        }
    }

    #[test]
    fn eigenvalues_singleton_and_duplicate() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let n = 15;
        let signal: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut x = Array2::from_shape_fn((3, n), |_| rng.random::<f64>());
        x.row_mut(0).assign(&ndarray::ArrayView1::from(&signal));
        x.row_mut(1).assign(&ndarray::ArrayView1::from(&signal));
        let y = Array2::from_shape_fn((2, n), |_| rng.random::<f64>());
        let ds = TwoViewDataset::from_parts(x, y, ids("s", 3), ids("t", 2), None)
            .unwrap()
            .standardize()
            .unwrap();
        let single = FeatureSet::singleton(View::TypeOne, 2);
        let vals = intra_eigenvalues(&ds, &single);
        assert_eq!(vals.len(), 1);
        assert!((vals[0] - 1.0).abs() < 1e-10);

        let dup = FeatureSet::new(View::TypeOne, vec![0, 1]);
        let vals = intra_eigenvalues(&ds, &dup);
        assert!((vals[0] - 2.0).abs() < 1e-10);
        assert!(vals[1].abs() < 1e-10);
    }

    #[test]
    fn eigenvalues_match_jacobi_oracle_and_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let ds = standardized(&mut rng, 40, 6, 2);
        let a = FeatureSet::new(View::TypeOne, (0..6).collect());
        let vals = intra_eigenvalues(&ds, &a);
        let gram = {
            let xa = gather_rows(&ds, &a);
            xa.dot(&xa.t())
        };
        let dense: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..6).map(|j| gram[[i, j]]).collect())
            .collect();
        let oracle = jacobi_eigenvalues(dense);
        for (a, b) in vals.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8);
        }
        let total: f64 = vals.iter().sum();
        assert!((total - 6.0).abs() < 1e-8);
    }

    #[test]
    fn oversized_set_pads_exact_zeros() {
        // More features than samples: rank <= n - 1.
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let ds = standardized(&mut rng, 6, 10, 2);
        let a = FeatureSet::new(View::TypeOne, (0..10).collect());
        let vals = intra_eigenvalues(&ds, &a);
        assert_eq!(vals.len(), 10);
        let total: f64 = vals.iter().sum();
        assert!((total - 10.0).abs() < 1e-8);
        // Everything beyond the sample-side rank is an exact zero.
        for v in &vals[6..] {
            assert_eq!(*v, 0.0);
        }
    }
}
