//! Moment-matched approximation of permutation p-values for aggregate
//! squared-correlation statistics, plus Monte Carlo permutation oracles.
//!
//! Under the permutation null, and assuming spherical symmetry of the
//! permuted column, `R^2(A, t) = sum_i lambda_i w_i` where the `lambda_i`
//! are the eigenvalues of A's intra-correlation matrix and `w` is symmetric
//! Dirichlet(1/2, ..., 1/2) over `m` coordinates, `m` being the dimension of
//! the centered sample space. The first three moments follow in closed form
//! and an upper tail is read off a location-shifted Gamma distribution fitted
//! to them.

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::corr::{gather_rows, r2_sum, FeatureSet};
use crate::data::TwoViewDataset;
use crate::error::{Error, Result};

/// Smallest p-value ever reported; keeps logarithms finite downstream.
pub const P_FLOOR: f64 = 1e-300;

/// Eigenvalues this far below the spectral mass are treated as rank noise.
const EIGENVALUE_DROP: f64 = 1e-12;

/// First three permutation-null moments of `R^2(A, t)` conditioned on the
/// intra-correlation eigenvalues of `A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermMoments {
    pub mean: f64,
    pub variance: f64,
    pub third_central: f64,
    /// Degrees of freedom: `n_eff - 1`.
    pub m: usize,
}

/// Location-shifted Gamma with shape `k`, scale `theta`, and shift `ell`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedGamma {
    pub shape: f64,
    pub scale: f64,
    pub shift: f64,
}

impl ShiftedGamma {
    pub fn mean(&self) -> f64 {
        self.shift + self.shape * self.scale
    }

    pub fn variance(&self) -> f64 {
        self.shape * self.scale * self.scale
    }

    pub fn third_central(&self) -> f64 {
        2.0 * self.shape * self.scale.powi(3)
    }
}

/// Tail approximation used to score statistics against the permutation null.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailApprox {
    Gamma(ShiftedGamma),
    /// Fallback when floating point produces a non-positive skew.
    Normal { mean: f64, sd: f64 },
    /// All-zero spectrum: the statistic is identically zero.
    Degenerate,
}

/// Closed-form moments from the eigenvalue representation.
///
/// With `S_r = sum_i lambda_i^r`, the raw moments are
/// `mu1 = S1/m`, `mu2 = (S1^2 + 2 S2)/(m(m+2))`, and
/// `mu3 = (S1^3 + 6 S1 S2 + 8 S3)/(m(m+2)(m+4))`.
pub fn moments_from_eigenvalues(lambdas: &[f64], m: usize) -> Result<PermMoments> {
    if m < 5 {
        return Err(Error::DegreesOfFreedom { m });
    }
    let s1: f64 = lambdas.iter().sum();
    let cutoff = EIGENVALUE_DROP * s1;
    let (mut s2, mut s3) = (0.0, 0.0);
    for &l in lambdas {
        debug_assert!(l >= -1e-12);
        if l > cutoff {
            s2 += l * l;
            s3 += l * l * l;
        }
    }
    let mf = m as f64;
    let mu1 = s1 / mf;
    let mu2 = (s1 * s1 + 2.0 * s2) / (mf * (mf + 2.0));
    let mu3 = (s1 * s1 * s1 + 6.0 * s1 * s2 + 8.0 * s3) / (mf * (mf + 2.0) * (mf + 4.0));
    Ok(PermMoments {
        mean: mu1,
        variance: mu2 - mu1 * mu1,
        third_central: mu3 - 3.0 * mu1 * mu2 + 2.0 * mu1 * mu1 * mu1,
        m,
    })
}

/// Inverts the three moment equations of a location-shifted Gamma.
pub fn fit_shifted_gamma(moments: &PermMoments) -> Result<ShiftedGamma> {
    if moments.third_central <= 0.0 {
        return Err(Error::NonPositiveSkew {
            third_central: moments.third_central,
        });
    }
    let theta = moments.third_central / (2.0 * moments.variance);
    let shape = moments.variance / (theta * theta);
    let shift = moments.mean - shape * theta;
    Ok(ShiftedGamma {
        shape,
        scale: theta,
        shift,
    })
}

/// Builds the tail approximation for a moment triple, falling back to a
/// normal tail on non-positive skew and to a point mass on a zero spectrum.
pub fn tail_approx(moments: &PermMoments) -> TailApprox {
    if moments.variance <= 0.0 || moments.mean <= 0.0 {
        return TailApprox::Degenerate;
    }
    match fit_shifted_gamma(moments) {
        Ok(g) => TailApprox::Gamma(g),
        Err(_) => TailApprox::Normal {
            mean: moments.mean,
            sd: moments.variance.sqrt(),
        },
    }
}

/// Upper-tail probability of the fitted Gamma at `statistic`, clamped to
/// `[P_FLOOR, 1]`; statistics at or below the shift map to 1.
pub fn pvalue(statistic: f64, gamma: &ShiftedGamma) -> f64 {
    if statistic <= gamma.shift {
        return 1.0;
    }
    let z = (statistic - gamma.shift) / gamma.scale;
    let tail = gamma_ur(gamma.shape, z);
    tail.clamp(P_FLOOR, 1.0)
}

/// Upper-tail probability under whichever approximation applies.
pub fn pvalue_approx(statistic: f64, tail: &TailApprox) -> f64 {
    match tail {
        TailApprox::Gamma(g) => pvalue(statistic, g),
        TailApprox::Normal { mean, sd } => {
            if *sd <= 0.0 {
                return if statistic > *mean { P_FLOOR } else { 1.0 };
            }
            let z = (statistic - mean) / sd;
            (0.5 * erfc(z / std::f64::consts::SQRT_2)).clamp(P_FLOOR, 1.0)
        }
        TailApprox::Degenerate => 1.0,
    }
}

/// Direct Monte Carlo estimate of `p(A, t)` by permuting the sample labels
/// of the single opposite-view feature `t`.
///
/// Returns `(1 + #{R^2 >= observed}) / (n_perms + 1)`.
pub fn mc_pvalue_oracle(
    dataset: &TwoViewDataset,
    a: &FeatureSet,
    t: usize,
    n_perms: usize,
    rng_seed: u64,
) -> f64 {
    assert!(n_perms >= 100, "mc_pvalue_oracle requires n_perms >= 100");
    let block = gather_rows(dataset, a);
    let tcol: Vec<f64> = dataset.feature(a.view.opposite(), t).to_vec();
    let observed: f64 = block
        .axis_iter(Axis(0))
        .map(|row| {
            let d: f64 = row.iter().zip(&tcol).map(|(x, y)| x * y).sum();
            d * d
        })
        .sum();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut permuted = tcol.clone();
    let mut hits = 0usize;
    for _ in 0..n_perms {
        permuted.shuffle(&mut rng);
        let stat: f64 = block
            .axis_iter(Axis(0))
            .map(|row| {
                let d: f64 = row.iter().zip(&permuted).map(|(x, y)| x * y).sum();
                d * d
            })
            .sum();
        if stat >= observed {
            hits += 1;
        }
    }
    (1 + hits) as f64 / (n_perms + 1) as f64
}

/// Outcome of the sequential Monte Carlo estimate of `p(A, B)`.
#[derive(Debug, Clone, Copy)]
pub struct McSetPvalue {
    /// `(1 + hits) / (perms_run + 1)`.
    pub estimate: f64,
    pub hits: usize,
    pub perms_run: usize,
    /// True when no permutation reached the observed statistic within the
    /// full budget, i.e. the p-value sits below Monte Carlo resolution.
    pub below_resolution: bool,
}

/// Monte Carlo estimate of the joint p-value `p(A, B)` where all columns of
/// `B` are permuted together by one shared permutation per draw.
///
/// Runs at most `max_perms` draws in deterministic batches and stops early
/// once `decide_discard` (given the running hits and a hypothetical
/// zero-additional-hit finish) proves the estimate cannot fall at or below
/// `threshold`.
pub fn mc_set_pvalue(
    dataset: &TwoViewDataset,
    a: &FeatureSet,
    b: &FeatureSet,
    max_perms: usize,
    threshold: f64,
    rng_seed: u64,
) -> McSetPvalue {
    let observed = r2_sum(dataset, a, b);
    // Permute whichever block has fewer features; the statistic only sees
    // the relative alignment of sample labels.
    let (fixed, moved) = if a.len() <= b.len() {
        (gather_rows(dataset, b), gather_rows(dataset, a))
    } else {
        (gather_rows(dataset, a), gather_rows(dataset, b))
    };
    let n = dataset.n();
    let batch = 512usize;
    let mut hits = 0usize;
    let mut run = 0usize;
    // The smallest achievable final estimate given current hits: every
    // remaining draw misses.
    let floor_estimate = |h: usize| (1 + h) as f64 / (max_perms + 1) as f64;
    while run < max_perms {
        let this_batch = batch.min(max_perms - run);
        let base = run;
        let batch_hits: usize = (0..this_batch)
            .map(|i| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(rng_seed ^ fnv1a(&(base + i).to_le_bytes()));
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                let shuffled = moved.select(Axis(1), &perm);
                let g = fixed.dot(&shuffled.t());
                let stat: f64 = g.iter().map(|r| r * r).sum();
                usize::from(stat >= observed)
            })
            .sum();
        hits += batch_hits;
        run += this_batch;
        // A zero-hit run must complete the budget to certify that the
        // p-value sits below Monte Carlo resolution; with hits in hand the
        // outcome may already be forced.
        if hits > 0 && floor_estimate(hits) > threshold {
            break;
        }
    }
    McSetPvalue {
        estimate: (1 + hits) as f64 / (run + 1) as f64,
        hits,
        perms_run: run,
        below_resolution: hits == 0 && run == max_perms,
    }
}

/// Stable 64-bit content hash used to derive per-task RNG streams.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derives a child seed from a parent seed and a label.
pub fn derive_seed(parent: u64, label: &str, index: u64) -> u64 {
    let mut bytes = Vec::with_capacity(label.len() + 16);
    bytes.extend_from_slice(&parent.to_le_bytes());
    bytes.extend_from_slice(label.as_bytes());
    bytes.extend_from_slice(&index.to_le_bytes());
    fnv1a(&bytes)
}

/// Convenience: full tail approximation for a feature set of a standardized
/// dataset, conditioning on its intra-correlation eigenvalues.
pub fn tail_for_set(dataset: &TwoViewDataset, set: &FeatureSet) -> Result<TailApprox> {
    let lambdas = crate::corr::intra_eigenvalues(dataset, set);
    let m = dataset
        .n_eff()
        .checked_sub(1)
        .ok_or(Error::DegreesOfFreedom { m: 0 })?;
    let moments = moments_from_eigenvalues(&lambdas, m)?;
    Ok(tail_approx(&moments))
}
