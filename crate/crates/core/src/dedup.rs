//! Redundancy quantification for a collection of bimodules: the effective
//! number of disjoint bimodules, Jaccard distances over feature-pair sets,
//! and representative selection by average-linkage clustering plus an
//! importance score.

use std::collections::HashMap;

use kodama::{linkage, Method};

use crate::search::Bimodule;

/// A collection of (possibly repeating, overlapping) bimodules together with
/// the per-pair containment counts `C(s, t)`.
///
/// The counts are held as per-feature membership bitmaps over the items;
/// `C(s, t)` is the popcount of the AND of the two bitmaps.
#[derive(Debug, Clone)]
pub struct BimoduleCollection {
    items: Vec<Bimodule>,
    s_membership: HashMap<usize, Vec<u64>>,
    t_membership: HashMap<usize, Vec<u64>>,
    words: usize,
}

impl BimoduleCollection {
    pub fn new(items: Vec<Bimodule>) -> Self {
        let words = items.len().div_ceil(64);
        let mut s_membership: HashMap<usize, Vec<u64>> = HashMap::new();
        let mut t_membership: HashMap<usize, Vec<u64>> = HashMap::new();
        for (i, bm) in items.iter().enumerate() {
            for &s in bm.a.indices() {
                s_membership.entry(s).or_insert_with(|| vec![0u64; words])[i / 64] |=
                    1u64 << (i % 64);
            }
            for &t in bm.b.indices() {
                t_membership.entry(t).or_insert_with(|| vec![0u64; words])[i / 64] |=
                    1u64 << (i % 64);
            }
        }
        Self {
            items,
            s_membership,
            t_membership,
            words,
        }
    }

    pub fn items(&self) -> &[Bimodule] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Number of bimodules in the collection containing the pair `(s, t)`.
    pub fn pair_count(&self, s: usize, t: usize) -> usize {
        match (self.s_membership.get(&s), self.t_membership.get(&t)) {
            (Some(sb), Some(tb)) => (0..self.words)
                .map(|w| (sb[w] & tb[w]).count_ones() as usize)
                .sum(),
            _ => 0,
        }
    }
}

/// Effective number of disjoint bimodules:
/// `N_e = sum_items (1/(|A||B|)) sum_{s in A, t in B} 1/C(s, t)`.
///
/// Equals `r` for `r` pairwise-disjoint bimodules and 1 for a single
/// bimodule repeated any number of times.
pub fn effective_number(collection: &BimoduleCollection) -> f64 {
    let mut total = 0.0;
    for bm in &collection.items {
        let size = (bm.a.len() * bm.b.len()) as f64;
        let mut inner = 0.0;
        for &s in bm.a.indices() {
            for &t in bm.b.indices() {
                inner += 1.0 / collection.pair_count(s, t) as f64;
            }
        }
        total += inner / size;
    }
    total
}

/// Jaccard distance between two bimodules viewed as sets of feature pairs;
/// computed from set intersections without materializing the products.
pub fn jaccard_distance(b1: &Bimodule, b2: &Bimodule) -> f64 {
    let inter = (b1.a.intersection_len(&b2.a) * b1.b.intersection_len(&b2.b)) as f64;
    let union = (b1.a.len() * b1.b.len() + b2.a.len() * b2.b.len()) as f64 - inter;
    if union <= 0.0 {
        return 0.0;
    }
    1.0 - inter / union
}

/// Importance of `candidate` within a cluster: the number of feature pairs
/// of the candidate covered by each cluster member, summed over members.
pub fn importance_score(candidate: &Bimodule, cluster: &[&Bimodule]) -> usize {
    cluster
        .iter()
        .map(|other| {
            candidate.a.intersection_len(&other.a) * candidate.b.intersection_len(&other.b)
        })
        .sum()
}

/// Clusters the collection into `ceil(N_e)` groups by average-linkage over
/// the Jaccard distance and returns the highest-importance member of each
/// cluster; ties break toward larger geometric size, then input order.
///
/// Output preserves the input order of the chosen representatives.
pub fn select_representatives(collection: &BimoduleCollection) -> Vec<Bimodule> {
    let n = collection.len();
    if n == 0 {
        return Vec::new();
    }
    let n_clusters = effective_number(collection).ceil() as usize;
    let n_clusters = n_clusters.clamp(1, n);
    let assignment = cluster_assignments(collection.items(), n_clusters);

    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for (item, &c) in assignment.iter().enumerate() {
        clusters[c].push(item);
    }

    let mut chosen: Vec<usize> = Vec::with_capacity(n_clusters);
    for members in clusters.iter().filter(|m| !m.is_empty()) {
        let refs: Vec<&Bimodule> = members.iter().map(|&i| &collection.items[i]).collect();
        let mut best = members[0];
        let mut best_key = (0usize, 0.0f64);
        for &i in members {
            let imp = importance_score(&collection.items[i], &refs);
            let geo = collection.items[i].geometric_size();
            if imp > best_key.0 || (imp == best_key.0 && geo > best_key.1) {
                best = i;
                best_key = (imp, geo);
            }
        }
        chosen.push(best);
    }
    chosen.sort_unstable();
    chosen
        .into_iter()
        .map(|i| collection.items[i].clone())
        .collect()
}

/// Cuts the average-linkage dendrogram at exactly `n_clusters` groups and
/// returns a cluster index per item, with cluster ids in first-seen order.
fn cluster_assignments(items: &[Bimodule], n_clusters: usize) -> Vec<usize> {
    let n = items.len();
    if n_clusters >= n {
        return (0..n).collect();
    }
    let mut condensed = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n - 1 {
        for j in i + 1..n {
            condensed.push(jaccard_distance(&items[i], &items[j]));
        }
    }
    let dendrogram = linkage(&mut condensed, n, Method::Average);

    // Replay merges until n_clusters groups remain. Step k merges clusters
    // with labels cluster1/cluster2 into label n + k.
    let merges = n - n_clusters;
    let mut parent: HashMap<usize, usize> = HashMap::new();
    for (k, step) in dendrogram.steps().iter().take(merges).enumerate() {
        parent.insert(step.cluster1, n + k);
        parent.insert(step.cluster2, n + k);
    }
    let root_of = |mut label: usize| -> usize {
        while let Some(&up) = parent.get(&label) {
            label = up;
        }
        label
    };
    let mut cluster_ids: HashMap<usize, usize> = HashMap::new();
    let mut assignment = vec![0usize; n];
    for (item, slot) in assignment.iter_mut().enumerate() {
        let root = root_of(item);
        let next = cluster_ids.len();
        *slot = *cluster_ids.entry(root).or_insert(next);
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corr::{FeatureSet, View};

    fn bm(a: Vec<usize>, b: Vec<usize>) -> Bimodule {
        Bimodule::new(
            FeatureSet::new(View::TypeOne, a),
            FeatureSet::new(View::TypeTwo, b),
        )
    }

    #[test]
    fn disjoint_bimodules_count_exactly() {
        let items = vec![
            bm(vec![0, 1], vec![0]),
            bm(vec![2], vec![1, 2]),
            bm(vec![3, 4, 5], vec![3]),
        ];
        let coll = BimoduleCollection::new(items);
        assert!((effective_number(&coll) - 3.0).abs() < 1e-12);
        let reps = select_representatives(&coll);
        assert_eq!(reps.len(), 3);
    }

    #[test]
    fn duplicate_listing_counts_once() {
        let one = bm(vec![0, 1], vec![0, 1]);
        let coll = BimoduleCollection::new(vec![one.clone(), one.clone()]);
        assert!((effective_number(&coll) - 1.0).abs() < 1e-12);
        let reps = select_representatives(&coll);
        assert_eq!(reps.len(), 1);
        assert_eq!(reps[0].a, one.a);

        let five = BimoduleCollection::new(vec![one.clone(); 5]);
        assert!((effective_number(&five) - 1.0).abs() < 1e-12);
        assert_eq!(select_representatives(&five).len(), 1);
    }

    #[test]
    fn empty_collection_has_zero_effective_number() {
        let coll = BimoduleCollection::new(Vec::new());
        assert_eq!(effective_number(&coll), 0.0);
        assert!(select_representatives(&coll).is_empty());
    }

    #[test]
    fn k_fold_duplication_leaves_effective_number_unchanged() {
        let items = vec![
            bm(vec![0, 1, 2], vec![0, 1]),
            bm(vec![1, 2, 3], vec![1, 2]),
            bm(vec![9], vec![7, 8]),
        ];
        let base = effective_number(&BimoduleCollection::new(items.clone()));
        for k in [2usize, 3, 5] {
            let mut dup = Vec::new();
            for _ in 0..k {
                dup.extend(items.iter().cloned());
            }
            let ne = effective_number(&BimoduleCollection::new(dup));
            assert!((ne - base).abs() < 1e-10, "k={k}: {ne} vs {base}");
        }
    }

    #[test]
    fn jaccard_distance_cases() {
        let x = bm(vec![0, 1], vec![0, 1]);
        assert_eq!(jaccard_distance(&x, &x.clone()), 0.0);
        let disjoint = bm(vec![5, 6], vec![9]);
        assert_eq!(jaccard_distance(&x, &disjoint), 1.0);
        // Same A of size 2, B sets of size 2 sharing one element:
        // inter = 2*1 = 2, union = 4 + 4 - 2 = 6.
        let y = bm(vec![0, 1], vec![1, 2]);
        assert!((jaccard_distance(&x, &y) - (1.0 - 2.0 / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn nested_pair_prefers_the_larger_representative() {
        let small = bm(vec![0, 1], vec![0]);
        let large = bm(vec![0, 1, 2, 3], vec![0, 1]);
        let cluster = [&small, &large];
        let imp_small = importance_score(&small, &cluster);
        let imp_large = importance_score(&large, &cluster);
        assert!(imp_large > imp_small, "{imp_large} vs {imp_small}");
    }

    #[test]
    fn effective_number_bounded_by_distinct_count() {
        let items = vec![
            bm(vec![0, 1], vec![0, 1]),
            bm(vec![0, 1, 2], vec![0, 1]),
            bm(vec![0], vec![0]),
            bm(vec![7], vec![7]),
        ];
        let ne = effective_number(&BimoduleCollection::new(items));
        assert!(ne > 0.0 && ne <= 4.0);
    }

    #[test]
    fn representative_count_is_ceiling_of_effective_number() {
        use rand::Rng;
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..100 {
            let n_items = rng.random_range(1..12);
            let items: Vec<Bimodule> = (0..n_items)
                .map(|_| {
                    let a: Vec<usize> =
                        (0..rng.random_range(1..5)).map(|_| rng.random_range(0..12)).collect();
                    let b: Vec<usize> =
                        (0..rng.random_range(1..5)).map(|_| rng.random_range(0..12)).collect();
                    bm(a, b)
                })
                .collect();
            let coll = BimoduleCollection::new(items);
            let ne = effective_number(&coll);
            let reps = select_representatives(&coll);
            assert_eq!(reps.len(), (ne.ceil() as usize).clamp(1, coll.len()));
        }
    }
}
