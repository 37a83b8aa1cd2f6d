//! Synthetic two-view benchmark: planted bimodules driven by a regressor
//! graph, bridge variables linking pairs of bimodules, exportable ground
//! truth, and population-level checkers (connected components and the
//! equilibrium characterization of stability).

use std::collections::HashSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corr::{FeatureSet, View};
use crate::data::TwoViewDataset;
use crate::error::{Error, Result};
use crate::pvalue::derive_seed;

/// One planted bimodule and the parameters that generated it.
#[derive(Debug, Clone)]
pub struct PlantedBimodule {
    pub a: FeatureSet,
    pub b: FeatureSet,
    /// Intra-correlation of the type-1 block.
    pub rho: f64,
    /// Population cross-correlation on regressor edges.
    pub eta: f64,
    /// Noise standard deviation of the regression.
    pub sigma: f64,
    /// Regressor in-degree of every type-2 feature.
    pub d: usize,
    /// Regressor edges in global `(s, t)` indices.
    pub regressor_edges: Vec<(usize, usize)>,
}

impl PlantedBimodule {
    /// `delta = 1 + rho (d - 1)`.
    pub fn delta(&self) -> f64 {
        1.0 + self.rho * (self.d as f64 - 1.0)
    }
}

/// A bridge variable tying two planted bimodules together.
#[derive(Debug, Clone, Copy)]
pub struct BridgeRecord {
    /// Global type-2 index of the bridge variable.
    pub t: usize,
    /// The two type-1 features it sums, one from each bimodule.
    pub s1: usize,
    pub s2: usize,
    /// Bridge noise standard deviation.
    pub sigma: f64,
    /// Population correlation of the bridge with each summed feature.
    pub corr: f64,
}

/// Planted structure exported alongside a generated dataset.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub p: usize,
    pub q: usize,
    pub n: usize,
    pub planted: Vec<PlantedBimodule>,
    pub bridges: Vec<BridgeRecord>,
    /// All `(s, t)` pairs with nonzero population cross-correlation.
    pub population_edges: Vec<(usize, usize)>,
}

/// Parameters of the generator.
#[derive(Debug, Clone)]
pub struct GenConfig {
    pub p: usize,
    pub q: usize,
    pub n: usize,
    /// Number of planted bimodules.
    pub k: usize,
    /// A pair of bimodules is bridged with probability `bridge_rate / k`.
    pub bridge_rate: f64,
    pub rng_seed: u64,
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParam {
                msg: "need at least one planted bimodule".into(),
            });
        }
        if self.p < 2 * self.k || self.q < 2 * self.k {
            return Err(Error::InvalidParam {
                msg: format!(
                    "p and q must be at least 2k = {} (got p={}, q={})",
                    2 * self.k,
                    self.p,
                    self.q
                ),
            });
        }
        if self.n < 10 {
            return Err(Error::InvalidParam {
                msg: format!("n must be at least 10, got {}", self.n),
            });
        }
        if self.bridge_rate < 0.0 {
            return Err(Error::InvalidParam {
                msg: "bridge_rate must be nonnegative".into(),
            });
        }
        Ok(())
    }
}

/// Expected number of bridge variables for `k` bimodules.
pub fn expected_bridge_count(k: usize, bridge_rate: f64) -> f64 {
    bridge_rate * (k as f64 - 1.0) / 2.0
}

/// Sampled parameters of one planted block: the wiring plus `(rho, eta,
/// sigma, d)` under the constraint `delta = 1 + rho(d-1) >= eta^2 d`.
#[derive(Debug, Clone)]
pub struct PlantedParams {
    pub rho: f64,
    pub eta: f64,
    pub sigma: f64,
    pub d: usize,
    /// For each type-2 feature of the block, the local type-1 indices wired
    /// to it.
    pub wiring: Vec<Vec<usize>>,
}

/// Draws regression parameters and a connected `d`-regular-by-column wiring
/// for a block of the given side sizes.
pub fn sample_planted_params(
    a_size: usize,
    b_size: usize,
    rng: &mut ChaCha8Rng,
) -> PlantedParams {
    assert!(a_size >= 1 && b_size >= 1);
    let mut beta: f64 = rng.random();
    let (d, wiring) = loop {
        let d = ((beta * a_size as f64).ceil() as usize).clamp(1, a_size);
        let mut pool: Vec<usize> = (0..a_size).collect();
        let wiring: Vec<Vec<usize>> = (0..b_size)
            .map(|_| {
                pool.shuffle(rng);
                let mut w = pool[..d].to_vec();
                w.sort_unstable();
                w
            })
            .collect();
        if wiring_connected(a_size, b_size, &wiring) {
            break (d, wiring);
        }
        beta = (beta + 0.1).min(1.0);
    };
    let rho: f64 = loop {
        let r: f64 = rng.random();
        if r < 1.0 {
            break r;
        }
    };
    let delta = 1.0 + rho * (d as f64 - 1.0);
    let eta_cap = (delta / d as f64).sqrt().min(0.8);
    let eta = loop {
        let e: f64 = rng.random::<f64>() * eta_cap;
        if e > 1e-9 {
            break e;
        }
    };
    let sigma = (delta * (delta - eta * eta * d as f64)).max(0.0).sqrt() / eta;
    PlantedParams {
        rho,
        eta,
        sigma,
        d,
        wiring,
    }
}

fn wiring_connected(a_size: usize, b_size: usize, wiring: &[Vec<usize>]) -> bool {
    let total = a_size + b_size;
    let mut seen = vec![false; total];
    let mut queue = std::collections::VecDeque::new();
    seen[0] = true;
    queue.push_back(0usize);
    let mut visited = 1;
    while let Some(v) = queue.pop_front() {
        if v < a_size {
            for (tb, nbrs) in wiring.iter().enumerate() {
                if nbrs.contains(&v) && !seen[a_size + tb] {
                    seen[a_size + tb] = true;
                    visited += 1;
                    queue.push_back(a_size + tb);
                }
            }
        } else {
            for &s in &wiring[v - a_size] {
                if !seen[s] {
                    seen[s] = true;
                    visited += 1;
                    queue.push_back(s);
                }
            }
        }
    }
    visited == total
}

/// Splits `total` items into `k` parts: one guaranteed item each, the rest
/// shared out by largest-remainder rounding of symmetric-Dirichlet weights.
fn dirichlet_partition(total: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    debug_assert!(total >= k);
    let draws: Vec<f64> = (0..k)
        .map(|_| -(rng.random::<f64>().max(1e-300)).ln())
        .collect();
    let sum: f64 = draws.iter().sum();
    let spare = (total - k) as f64;
    let targets: Vec<f64> = draws.iter().map(|w| spare * w / sum).collect();
    let mut sizes: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut frac: Vec<(f64, usize)> = targets
        .iter()
        .enumerate()
        .map(|(i, t)| (t - t.floor(), i))
        .collect();
    frac.sort_unstable_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
    for &(_, i) in frac.iter().take(total - k - assigned) {
        sizes[i] += 1;
    }
    sizes.iter_mut().for_each(|s| *s += 1);
    sizes
}

/// Generates the benchmark dataset and its ground truth.
///
/// The first halves of both index spaces are partitioned into `k` planted
/// blocks; each block follows the equicorrelated-regressor model; remaining
/// features are independent standard normals except for bridge variables,
/// which sum one feature from each of two bridged blocks.
pub fn generate_dataset(config: &GenConfig) -> Result<(TwoViewDataset, GroundTruth)> {
    config.validate()?;
    let GenConfig {
        p, q, n, k, ..
    } = *config;
    let master = config.rng_seed;

    let mut part_rng = ChaCha8Rng::seed_from_u64(derive_seed(master, "partition", 0));
    let half_p = p.div_ceil(2);
    let half_q = q.div_ceil(2);
    let a_sizes = dirichlet_partition(half_p, k, &mut part_rng);
    let b_sizes = dirichlet_partition(half_q, k, &mut part_rng);

    let mut x = Array2::<f64>::zeros((p, n));
    let mut y = Array2::<f64>::zeros((q, n));
    let mut planted: Vec<PlantedBimodule> = Vec::with_capacity(k);

    let mut a_start = 0usize;
    let mut b_start = 0usize;
    for block in 0..k {
        let a_size = a_sizes[block];
        let b_size = b_sizes[block];
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, "block", block as u64));
        let params = sample_planted_params(a_size, b_size, &mut rng);

        // X_A: sqrt(rho) shared factor + sqrt(1-rho) idiosyncratic noise.
        let sr = params.rho.sqrt();
        let si = (1.0 - params.rho).sqrt();
        for j in 0..n {
            let shared: f64 = rng.sample(StandardNormal);
            for i in 0..a_size {
                x[[a_start + i, j]] = sr * shared + si * rng.sample::<f64, _>(StandardNormal);
            }
        }
        // Y_B = X_A D + sigma eps, columnwise over the wiring.
        for (tb, nbrs) in params.wiring.iter().enumerate() {
            for j in 0..n {
                let mut v = 0.0;
                for &s in nbrs {
                    v += x[[a_start + s, j]];
                }
                y[[b_start + tb, j]] = v + params.sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let regressor_edges: Vec<(usize, usize)> = params
            .wiring
            .iter()
            .enumerate()
            .flat_map(|(tb, nbrs)| {
                nbrs.iter().map(move |&s| (s, tb))
            })
            .map(|(s, tb)| (a_start + s, b_start + tb))
            .collect();
        planted.push(PlantedBimodule {
            a: FeatureSet::new(View::TypeOne, (a_start..a_start + a_size).collect()),
            b: FeatureSet::new(View::TypeTwo, (b_start..b_start + b_size).collect()),
            rho: params.rho,
            eta: params.eta,
            sigma: params.sigma,
            d: params.d,
            regressor_edges,
        });
        a_start += a_size;
        b_start += b_size;
    }

    // Noise features on the second halves.
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(master, "noise", 0));
    for i in a_start..p {
        for j in 0..n {
            x[[i, j]] = noise_rng.sample(StandardNormal);
        }
    }
    for t in b_start..q {
        for j in 0..n {
            y[[t, j]] = noise_rng.sample(StandardNormal);
        }
    }

    // Bridges between unordered block pairs, consuming spare type-2 indices
    // without replacement.
    let mut bridge_rng = ChaCha8Rng::seed_from_u64(derive_seed(master, "bridges", 0));
    let mut spares: Vec<usize> = (b_start..q).collect();
    spares.shuffle(&mut bridge_rng);
    let mut spare_at = 0usize;
    let mut bridges: Vec<BridgeRecord> = Vec::new();
    let prob = (config.bridge_rate / k as f64).min(1.0);
    for bk in 0..k {
        for bl in (bk + 1)..k {
            if bridge_rng.random::<f64>() >= prob {
                continue;
            }
            if spare_at >= spares.len() {
                return Err(Error::BridgeExhaustion {
                    needed: spare_at + 1,
                    available: spares.len(),
                });
            }
            let t = spares[spare_at];
            spare_at += 1;
            let s1 = *planted[bk]
                .a
                .indices()
                .get(bridge_rng.random_range(0..planted[bk].a.len()))
                .unwrap();
            let s2 = *planted[bl]
                .a
                .indices()
                .get(bridge_rng.random_range(0..planted[bl].a.len()))
                .unwrap();
            // Target correlation: the mean of the two blocks' maximum
            // population cross-correlations, which equal eta on regressor
            // edges. The sum of two unit-variance independent features caps
            // the achievable correlation at 1/sqrt(2).
            let target = 0.5 * (planted[bk].eta + planted[bl].eta);
            let sigma2 = (1.0 / (target * target) - 2.0).max(0.0);
            let sigma = sigma2.sqrt();
            let corr = 1.0 / (2.0 + sigma2).sqrt();
            for j in 0..n {
                y[[t, j]] = x[[s1, j]]
                    + x[[s2, j]]
                    + sigma * bridge_rng.sample::<f64, _>(StandardNormal);
            }
            bridges.push(BridgeRecord {
                t,
                s1,
                s2,
                sigma,
                corr,
            });
        }
    }

    let population_edges = population_edges(&planted, &bridges);
    let s_ids = (0..p).map(|i| format!("s{i}")).collect();
    let t_ids = (0..q).map(|i| format!("t{i}")).collect();
    let dataset = TwoViewDataset::from_parts(x, y, s_ids, t_ids, None)?;
    let truth = GroundTruth {
        p,
        q,
        n,
        planted,
        bridges,
        population_edges,
    };
    Ok((dataset, truth))
}

/// All `(s, t)` pairs with nonzero population cross-correlation.
///
/// Inside a block with positive intra-correlation every pair correlates;
/// with `rho = 0` only regressor edges do. A bridge correlates with its two
/// summands and, through equicorrelation, with the rest of their blocks.
fn population_edges(
    planted: &[PlantedBimodule],
    bridges: &[BridgeRecord],
) -> Vec<(usize, usize)> {
    let mut edges: HashSet<(usize, usize)> = HashSet::new();
    for pb in planted {
        if pb.rho > 0.0 {
            for &s in pb.a.indices() {
                for &t in pb.b.indices() {
                    edges.insert((s, t));
                }
            }
        } else {
            edges.extend(pb.regressor_edges.iter().copied());
        }
    }
    for br in bridges {
        edges.insert((br.s1, br.t));
        edges.insert((br.s2, br.t));
        for pb in planted {
            if pb.rho > 0.0 && (pb.a.contains(br.s1) || pb.a.contains(br.s2)) {
                for &s in pb.a.indices() {
                    edges.insert((s, br.t));
                }
            }
        }
    }
    let mut out: Vec<(usize, usize)> = edges.into_iter().collect();
    out.sort_unstable();
    out
}

impl GroundTruth {
    /// Truth edges used for edge-error scoring: every pair inside a planted
    /// block plus the bridge pairs.
    pub fn truth_edges(&self) -> HashSet<(usize, usize)> {
        let mut edges = HashSet::new();
        for pb in &self.planted {
            for &s in pb.a.indices() {
                for &t in pb.b.indices() {
                    edges.insert((s, t));
                }
            }
        }
        for br in &self.bridges {
            edges.insert((br.s1, br.t));
            edges.insert((br.s2, br.t));
        }
        edges
    }

    /// Exact population cross-correlation matrix; intended for small
    /// instances only (it materializes `p x q`).
    pub fn population_rho(&self) -> Array2<f64> {
        let mut rho = Array2::<f64>::zeros((self.p, self.q));
        for pb in &self.planted {
            let delta = pb.delta();
            let off = pb.eta * pb.rho * pb.d as f64 / delta;
            if pb.rho > 0.0 {
                for &s in pb.a.indices() {
                    for &t in pb.b.indices() {
                        rho[[s, t]] = off;
                    }
                }
            }
            for &(s, t) in &pb.regressor_edges {
                rho[[s, t]] = pb.eta;
            }
        }
        for br in &self.bridges {
            rho[[br.s1, br.t]] = br.corr;
            rho[[br.s2, br.t]] = br.corr;
            for pb in &self.planted {
                for &anchor in [br.s1, br.s2].iter() {
                    if pb.rho > 0.0 && pb.a.contains(anchor) {
                        for &s in pb.a.indices() {
                            if s != anchor {
                                rho[[s, br.t]] = pb.rho * br.corr;
                            }
                        }
                    }
                }
            }
        }
        rho
    }
}

/// Connected components (with more than one vertex) of a bipartite graph
/// given by `(s, t)` edges; these are the minimal stable population
/// bimodules.
pub fn bipartite_components(edges: &[(usize, usize)]) -> Vec<(Vec<usize>, Vec<usize>)> {
    use std::collections::HashMap;
    let mut s_adj: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut t_adj: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(s, t) in edges {
        s_adj.entry(s).or_default().push(t);
        t_adj.entry(t).or_default().push(s);
    }
    let mut s_seen: HashSet<usize> = HashSet::new();
    let mut components = Vec::new();
    let mut s_nodes: Vec<usize> = s_adj.keys().copied().collect();
    s_nodes.sort_unstable();
    for &start in &s_nodes {
        if s_seen.contains(&start) {
            continue;
        }
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut t_seen_local: HashSet<usize> = HashSet::new();
        let mut queue = std::collections::VecDeque::new();
        queue.push_back((View::TypeOne, start));
        s_seen.insert(start);
        while let Some((view, v)) = queue.pop_front() {
            match view {
                View::TypeOne => {
                    a.push(v);
                    for &t in s_adj.get(&v).into_iter().flatten() {
                        if t_seen_local.insert(t) {
                            queue.push_back((View::TypeTwo, t));
                        }
                    }
                }
                View::TypeTwo => {
                    b.push(v);
                    for &s in t_adj.get(&v).into_iter().flatten() {
                        if s_seen.insert(s) {
                            queue.push_back((View::TypeOne, s));
                        }
                    }
                }
            }
        }
        a.sort_unstable();
        b.sort_unstable();
        components.push((a, b));
    }
    components.sort();
    components
}

/// Minimal stable population bimodules of the generated truth.
pub fn population_bimodules(truth: &GroundTruth) -> Vec<(Vec<usize>, Vec<usize>)> {
    bipartite_components(&truth.population_edges)
}

/// Upper bound `epsilon_0 = delta / max(|S|, |T|)` below which the
/// equilibrium characterization applies; `None` when no edges exist.
pub fn nash_epsilon_bound(rho: &Array2<f64>) -> Option<f64> {
    let mut delta = f64::INFINITY;
    let mut any = false;
    for &r in rho.iter() {
        if r != 0.0 {
            delta = delta.min(r * r);
            any = true;
        }
    }
    if !any {
        return None;
    }
    Some(delta / rho.nrows().max(rho.ncols()) as f64)
}

/// Exhaustively checks that the non-empty equilibria of the penalized
/// reward `Phi_eps(A, B) = sum rho^2(s,t) - eps |A||B|` coincide with the
/// unions of connected components of the nonzero-correlation graph.
///
/// Intended for tiny instances (brute force over every subset pair).
pub fn nash_check(rho: &Array2<f64>, epsilon: f64) -> Result<bool> {
    let p = rho.nrows();
    let q = rho.ncols();
    assert!(
        p >= 1 && q >= 1 && p <= 8 && q <= 8,
        "nash_check is a brute-force tool for tiny instances"
    );
    let bound = nash_epsilon_bound(rho).ok_or_else(|| Error::InvalidParam {
        msg: "instance has no nonzero correlations".into(),
    })?;
    if !(epsilon > 0.0 && epsilon < bound) {
        return Err(Error::EpsilonOutOfRange {
            epsilon,
            bound,
        });
    }

    let phi = |a_mask: u32, b_mask: u32| -> f64 {
        let mut total = 0.0;
        let mut na = 0u32;
        for s in 0..p {
            if a_mask & (1 << s) == 0 {
                continue;
            }
            na += 1;
            for t in 0..q {
                if b_mask & (1 << t) != 0 {
                    total += rho[[s, t]] * rho[[s, t]];
                }
            }
        }
        let nb = b_mask.count_ones();
        total - epsilon * (na * nb) as f64
    };

    // All non-empty Nash equilibria by direct best-response checks.
    let mut equilibria: HashSet<(u32, u32)> = HashSet::new();
    let tol = 1e-12;
    for a_mask in 1u32..(1 << p) {
        for b_mask in 1u32..(1 << q) {
            let value = phi(a_mask, b_mask);
            let best_a = (0u32..(1 << p)).map(|m| phi(m, b_mask)).fold(f64::MIN, f64::max);
            if value + tol < best_a {
                continue;
            }
            let best_b = (0u32..(1 << q)).map(|m| phi(a_mask, m)).fold(f64::MIN, f64::max);
            if value + tol < best_b {
                continue;
            }
            equilibria.insert((a_mask, b_mask));
        }
    }

    // All non-empty unions of connected components.
    let edges: Vec<(usize, usize)> = rho
        .indexed_iter()
        .filter(|(_, r)| **r != 0.0)
        .map(|((s, t), _)| (s, t))
        .collect();
    let components = bipartite_components(&edges);
    let mut stable: HashSet<(u32, u32)> = HashSet::new();
    let c = components.len();
    for subset in 1u32..(1 << c) {
        let mut a_mask = 0u32;
        let mut b_mask = 0u32;
        for (ci, (a, b)) in components.iter().enumerate() {
            if subset & (1 << ci) != 0 {
                for &s in a {
                    a_mask |= 1 << s;
                }
                for &t in b {
                    b_mask |= 1 << t;
                }
            }
        }
        stable.insert((a_mask, b_mask));
    }

    Ok(equilibria == stable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn planted_params_respect_the_constraint() {
        let mut rng = ChaCha8Rng::seed_from_u64(301);
        for _ in 0..10_000 {
            let a_size = rng.random_range(1..12);
            let b_size = rng.random_range(1..8);
            let p = sample_planted_params(a_size, b_size, &mut rng);
            let delta = 1.0 + p.rho * (p.d as f64 - 1.0);
            assert!(delta >= p.eta * p.eta * p.d as f64 - 1e-12);
            assert!(p.eta > 0.0 && p.eta <= 0.8);
            assert!(p.rho >= 0.0 && p.rho < 1.0);
            assert!(p.d >= 1 && p.d <= a_size);
            assert!(p.sigma.is_finite() && p.sigma >= 0.0);
            for nbrs in &p.wiring {
                assert_eq!(nbrs.len(), p.d);
            }
            assert!(wiring_connected(a_size, b_size, &p.wiring));
        }
    }

    #[test]
    fn rho_zero_d_one_sigma_formula() {
        // delta = 1, so sigma = sqrt(1 - eta^2) / eta.
        let eta: f64 = 0.5;
        let delta: f64 = 1.0;
        let sigma = (delta * (delta - eta * eta)).sqrt() / eta;
        assert!((sigma - (1.0 - 0.25f64).sqrt() / 0.5).abs() < 1e-15);
    }

    #[test]
    fn complete_wiring_always_connected() {
        let wiring: Vec<Vec<usize>> = (0..3).map(|_| (0..5).collect()).collect();
        assert!(wiring_connected(5, 3, &wiring));
    }

    #[test]
    fn dirichlet_partition_sums_and_floors() {
        let mut rng = ChaCha8Rng::seed_from_u64(302);
        for _ in 0..500 {
            let k = rng.random_range(1..20);
            let total = k + rng.random_range(0..200);
            let sizes = dirichlet_partition(total, k, &mut rng);
            assert_eq!(sizes.len(), k);
            assert_eq!(sizes.iter().sum::<usize>(), total);
            assert!(sizes.iter().all(|&s| s >= 1));
        }
    }

    #[test]
    fn single_block_truth_covers_block_edges() {
        let cfg = GenConfig {
            p: 12,
            q: 8,
            n: 30,
            k: 1,
            bridge_rate: 1.5,
            rng_seed: 5,
        };
        let (ds, truth) = generate_dataset(&cfg).unwrap();
        assert_eq!(ds.p(), 12);
        assert_eq!(ds.q(), 8);
        assert_eq!(truth.planted.len(), 1);
        assert!(truth.bridges.is_empty(), "k = 1 admits no bridges");
        let pb = &truth.planted[0];
        if pb.rho > 0.0 {
            assert_eq!(
                truth.population_edges.len(),
                pb.a.len() * pb.b.len()
            );
        } else {
            assert_eq!(truth.population_edges.len(), pb.regressor_edges.len());
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let cfg = GenConfig {
            p: 40,
            q: 30,
            n: 25,
            k: 4,
            bridge_rate: 1.5,
            rng_seed: 99,
        };
        let (d1, t1) = generate_dataset(&cfg).unwrap();
        let (d2, t2) = generate_dataset(&cfg).unwrap();
        for (a, b) in d1.x.iter().zip(d2.x.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in d1.y.iter().zip(d2.y.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(t1.population_edges, t2.population_edges);
    }

    #[test]
    fn empirical_moments_match_lemma_at_large_n() {
        // One block, many samples: edge correlations concentrate at eta and
        // diag(Cov(Y)) at (delta/eta)^2.
        let cfg = GenConfig {
            p: 16,
            q: 10,
            n: 100_000,
            k: 1,
            bridge_rate: 0.0,
            rng_seed: 11,
        };
        let (ds, truth) = generate_dataset(&cfg).unwrap();
        let pb = &truth.planted[0];
        let delta = pb.delta();
        let n = ds.n() as f64;
        // Empirical correlation on regressor edges.
        for &(s, t) in pb.regressor_edges.iter().take(10) {
            let xs = ds.x.row(s);
            let yt = ds.y.row(t);
            let mx = xs.sum() / n;
            let my = yt.sum() / n;
            let mut num = 0.0;
            let mut vx = 0.0;
            let mut vy = 0.0;
            for (a, b) in xs.iter().zip(yt.iter()) {
                num += (a - mx) * (b - my);
                vx += (a - mx) * (a - mx);
                vy += (b - my) * (b - my);
            }
            let r = num / (vx * vy).sqrt();
            assert!(
                (r - pb.eta).abs() < 0.01,
                "edge correlation {r} vs eta {}",
                pb.eta
            );
        }
        // Variance of each Y feature.
        let expected_var = (delta / pb.eta) * (delta / pb.eta);
        for &t in pb.b.indices() {
            let yt = ds.y.row(t);
            let my = yt.sum() / n;
            let var: f64 = yt.iter().map(|v| (v - my) * (v - my)).sum::<f64>() / (n - 1.0);
            assert!(
                (var - expected_var).abs() / expected_var < 0.02,
                "var {var} vs {expected_var}"
            );
        }
    }

    #[test]
    fn components_simple_cases() {
        let comps = bipartite_components(&[(0, 0), (1, 0)]);
        assert_eq!(comps, vec![(vec![0, 1], vec![0])]);

        // Two blocks merged by one bridge-like edge.
        let comps = bipartite_components(&[(0, 0), (1, 1), (0, 1)]);
        assert_eq!(comps, vec![(vec![0, 1], vec![0, 1])]);

        let comps = bipartite_components(&[(0, 0), (2, 3)]);
        assert_eq!(comps.len(), 2);
    }

    #[test]
    fn components_match_brute_force_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        for _ in 0..1000 {
            let p = rng.random_range(1..=6);
            let q = rng.random_range(1..=6);
            let mut edges = Vec::new();
            for s in 0..p {
                for t in 0..q {
                    if rng.random::<f64>() < 0.25 {
                        edges.push((s, t));
                    }
                }
            }
            let fast = bipartite_components(&edges);
            let brute = brute_components(p, q, &edges);
            assert_eq!(fast, brute);
        }
    }

    /// Label-propagation brute force for components.
    fn brute_components(
        p: usize,
        q: usize,
        edges: &[(usize, usize)],
    ) -> Vec<(Vec<usize>, Vec<usize>)> {
        let mut label: Vec<usize> = (0..p + q).collect();
        loop {
            let mut changed = false;
            for &(s, t) in edges {
                let (ls, lt) = (label[s], label[p + t]);
                let m = ls.min(lt);
                if label[s] != m {
                    label[s] = m;
                    changed = true;
                }
                if label[p + t] != m {
                    label[p + t] = m;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut groups: std::collections::HashMap<usize, (Vec<usize>, Vec<usize>)> =
            std::collections::HashMap::new();
        let touched: HashSet<usize> = edges
            .iter()
            .flat_map(|&(s, t)| [s, p + t])
            .collect();
        for v in touched {
            let entry = groups.entry(label[v]).or_default();
            if v < p {
                entry.0.push(v);
            } else {
                entry.1.push(v - p);
            }
        }
        let mut out: Vec<(Vec<usize>, Vec<usize>)> = groups
            .into_values()
            .map(|(mut a, mut b)| {
                a.sort_unstable();
                b.sort_unstable();
                (a, b)
            })
            .collect();
        out.sort();
        out
    }

    #[test]
    fn nash_single_edge() {
        let rho = array![[0.5]];
        let bound = nash_epsilon_bound(&rho).unwrap();
        assert!((bound - 0.25).abs() < 1e-15);
        assert!(nash_check(&rho, bound / 2.0).unwrap());
    }

    #[test]
    fn nash_two_disjoint_edges() {
        let rho = array![[0.5, 0.0], [0.0, 0.3]];
        assert!(nash_check(&rho, nash_epsilon_bound(&rho).unwrap() / 2.0).unwrap());
    }

    #[test]
    fn nash_epsilon_bound_is_enforced() {
        let rho = array![[0.5]];
        let bound = nash_epsilon_bound(&rho).unwrap();
        assert!(matches!(
            nash_check(&rho, bound),
            Err(Error::EpsilonOutOfRange { .. })
        ));
        assert!(matches!(
            nash_check(&rho, 0.0),
            Err(Error::EpsilonOutOfRange { .. })
        ));
    }

    #[test]
    fn nash_matches_components_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(304);
        let mut nontrivial = 0;
        for _ in 0..300 {
            let p = rng.random_range(1..=4);
            let q = rng.random_range(1..=4);
            let rho = Array2::from_shape_fn((p, q), |_| {
                if rng.random::<f64>() < 0.35 {
                    (rng.random::<f64>() - 0.5).clamp(-0.9, 0.9)
                } else {
                    0.0
                }
            });
            let Some(bound) = nash_epsilon_bound(&rho) else {
                continue;
            };
            nontrivial += 1;
            assert!(nash_check(&rho, bound / 2.0).unwrap());
        }
        assert!(nontrivial > 100);
    }

    #[test]
    fn generated_truth_passes_nash_check_at_small_scale() {
        let cfg = GenConfig {
            p: 4,
            q: 4,
            n: 12,
            k: 2,
            bridge_rate: 0.0,
            rng_seed: 17,
        };
        let (_, truth) = generate_dataset(&cfg).unwrap();
        let rho = truth.population_rho();
        let bound = nash_epsilon_bound(&rho).unwrap();
        assert!(nash_check(&rho, bound / 2.0).unwrap());
        // And the component layer agrees with the stored edge list.
        let comps = population_bimodules(&truth);
        assert!(!comps.is_empty());
    }

    #[test]
    fn bridge_count_near_expectation() {
        let cfg = GenConfig {
            p: 2000,
            q: 1200,
            n: 10,
            k: 500,
            bridge_rate: 1.5,
            rng_seed: 23,
        };
        let (_, truth) = generate_dataset(&cfg).unwrap();
        let expected = expected_bridge_count(cfg.k, cfg.bridge_rate);
        assert!((expected - 374.25).abs() < 1e-9);
        let got = truth.bridges.len() as f64;
        // Binomial sd is about 19; allow five.
        assert!(
            (got - expected).abs() < 100.0,
            "bridge count {got} vs expectation {expected}"
        );
        // Bridges connect previously separate components.
        let comps = population_bimodules(&truth);
        assert!(comps.len() < cfg.k);
    }
}
