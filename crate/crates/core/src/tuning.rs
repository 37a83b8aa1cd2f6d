//! Selection of the false discovery parameter over a grid using
//! half-permuted datasets and essential-edge error estimates.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corr::{FeatureSet, View};
use crate::data::TwoViewDataset;
use crate::error::{Error, Result};
use crate::net::net_stats;
use crate::pvalue::derive_seed;
use crate::search::{run_pipeline, Bimodule, SearchConfig};

/// A half-permuted dataset: sample labels of a random half of each view's
/// features are permuted (one shared permutation per view), then covariates
/// are corrected and the data standardized.
#[derive(Debug, Clone)]
pub struct HalfPermInstance {
    pub permuted_s: FeatureSet,
    pub permuted_t: FeatureSet,
    pub dataset: TwoViewDataset,
}

/// Permutes the sample entries of the selected feature rows in place, all
/// with the same permutation.
fn apply_half_permutation(mat: &mut Array2<f64>, selected: &[usize], perm: &[usize]) {
    let n = mat.ncols();
    debug_assert_eq!(perm.len(), n);
    let mut buf = vec![0.0; n];
    for &row in selected {
        {
            let r = mat.row(row);
            for (j, &src) in perm.iter().enumerate() {
                buf[j] = r[src];
            }
        }
        let mut r = mat.row_mut(row);
        for (j, v) in buf.iter().enumerate() {
            r[j] = *v;
        }
    }
}

/// Builds one half-permuted instance from raw (unstandardized) data.
///
/// Covariate correction runs after the permutation step, mirroring the
/// ordering of the full procedure.
pub fn half_permute(dataset_raw: &TwoViewDataset, rng_seed: u64) -> Result<HalfPermInstance> {
    if dataset_raw.is_standardized() {
        return Err(Error::InvalidParam {
            msg: "half_permute requires raw (unstandardized) data".into(),
        });
    }
    let p = dataset_raw.p();
    let q = dataset_raw.q();
    let n = dataset_raw.n();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut s_hat = rand::seq::index::sample(&mut rng, p, p / 2).into_vec();
    s_hat.sort_unstable();
    let mut t_hat = rand::seq::index::sample(&mut rng, q, q / 2).into_vec();
    t_hat.sort_unstable();
    let mut perm1: Vec<usize> = (0..n).collect();
    perm1.shuffle(&mut rng);
    let mut perm2: Vec<usize> = (0..n).collect();
    perm2.shuffle(&mut rng);

    let mut instance = dataset_raw.clone();
    apply_half_permutation(&mut instance.x, &s_hat, &perm1);
    apply_half_permutation(&mut instance.y, &t_hat, &perm2);
    let dataset = instance.prepare()?;
    Ok(HalfPermInstance {
        permuted_s: FeatureSet::new(View::TypeOne, s_hat),
        permuted_t: FeatureSet::new(View::TypeTwo, t_hat),
        dataset,
    })
}

/// Edge-error estimate for a bimodule collection found on a half-permuted
/// instance: the mean fraction of essential edges touching a permuted
/// feature on either side. Empty collections contribute zero.
pub fn estimated_edge_error(
    bimodules: &[Bimodule],
    instance: &HalfPermInstance,
) -> f64 {
    if bimodules.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for bm in bimodules {
        let owned;
        let net = match &bm.net {
            Some(net) => net,
            None => {
                owned = net_stats(&instance.dataset, &bm.a, &bm.b);
                &owned
            }
        };
        let edges = &net.essential_edges;
        if edges.is_empty() {
            continue;
        }
        let touched = edges
            .edges
            .iter()
            .filter(|e| instance.permuted_s.contains(e.s) || instance.permuted_t.contains(e.t))
            .count();
        total += touched as f64 / edges.len() as f64;
    }
    total / bimodules.len() as f64
}

/// Per-instance tuning observation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceReport {
    pub instance: usize,
    pub edge_error: f64,
    pub n_bimodules: usize,
}

/// Aggregated results for one grid value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphaReport {
    pub alpha: f64,
    pub per_instance: Vec<InstanceReport>,
    pub mean_edge_error: f64,
    /// Instances on which the pipeline found nothing; their edge error is
    /// recorded as zero, so this count qualifies the mean.
    pub zero_discovery_instances: usize,
}

/// Full tuning report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningReport {
    pub grid: Vec<f64>,
    pub target: f64,
    pub n_instances: usize,
    pub per_alpha: Vec<AlphaReport>,
    pub chosen_alpha: f64,
    /// Set when no grid value met the target and the smallest was chosen.
    pub no_alpha_met_target: bool,
}

/// Runs the full pipeline over half-permuted instances for every grid value
/// and picks the largest alpha whose mean edge-error estimate meets the
/// target; falls back to the smallest grid value with a warning flag.
pub fn choose_alpha(
    dataset_raw: &TwoViewDataset,
    grid: &[f64],
    n_instances: usize,
    target: f64,
    template: &SearchConfig,
    filter_max_perms: usize,
) -> Result<TuningReport> {
    if grid.is_empty() {
        return Err(Error::InvalidParam {
            msg: "tuning grid must be non-empty".into(),
        });
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParam {
            msg: "tuning grid must be strictly ascending".into(),
        });
    }
    if grid.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(Error::InvalidParam {
            msg: "grid values must lie in (0, 1)".into(),
        });
    }
    if n_instances == 0 {
        return Err(Error::InvalidParam {
            msg: "need at least one half-permuted instance".into(),
        });
    }

    let instances: Vec<HalfPermInstance> = (0..n_instances)
        .into_par_iter()
        .map(|i| {
            half_permute(
                dataset_raw,
                derive_seed(template.rng_seed, "half_perm_instance", i as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut per_alpha = Vec::with_capacity(grid.len());
    for (ai, &alpha) in grid.iter().enumerate() {
        let reports: Vec<InstanceReport> = instances
            .par_iter()
            .enumerate()
            .map(|(ii, instance)| {
                let config = SearchConfig {
                    alpha,
                    rng_seed: derive_seed(
                        template.rng_seed,
                        "tune_run",
                        (ai * n_instances + ii) as u64,
                    ),
                    ..template.clone()
                };
                let result = run_pipeline(&instance.dataset, &config, filter_max_perms)?;
                Ok(InstanceReport {
                    instance: ii,
                    edge_error: estimated_edge_error(&result.bimodules, instance),
                    n_bimodules: result.bimodules.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mean = reports.iter().map(|r| r.edge_error).sum::<f64>() / reports.len() as f64;
        let zero = reports.iter().filter(|r| r.n_bimodules == 0).count();
        per_alpha.push(AlphaReport {
            alpha,
            per_instance: reports,
            mean_edge_error: mean,
            zero_discovery_instances: zero,
        });
    }

    let chosen = per_alpha
        .iter()
        .rev()
        .find(|r| r.mean_edge_error <= target)
        .map(|r| r.alpha);
    let (chosen_alpha, no_alpha_met_target) = match chosen {
        Some(a) => (a, false),
        None => (grid[0], true),
    };
    Ok(TuningReport {
        grid: grid.to_vec(),
        target,
        n_instances,
        per_alpha,
        chosen_alpha,
        no_alpha_met_target,
    })
}
