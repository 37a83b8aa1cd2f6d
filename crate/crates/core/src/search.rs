//! The iterative bimodule search: alternating half-updates driven by
//! moment-approximated permutation p-values and the step-up threshold, with
//! cycle handling, caps, seed scheduling, and the final Bonferroni filter.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

use crate::corr::{r2_profile, r2_sum, FeatureSet, View};
use crate::data::TwoViewDataset;
use crate::dedup::{effective_number, select_representatives, BimoduleCollection};
use crate::error::{Error, Result};
use crate::fdr::by_threshold;
use crate::net::{net_stats, NetStats};
use crate::pvalue::{
    derive_seed, fnv1a, mc_set_pvalue, pvalue_approx, tail_for_set,
};

/// A pair of feature sets with attached statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Bimodule {
    /// Type-1 side.
    pub a: FeatureSet,
    /// Type-2 side.
    pub b: FeatureSet,
    /// Joint permutation p-value attached by the final filter.
    pub pvalue_ab: Option<f64>,
    /// Network diagnostics attached by the pipeline.
    pub net: Option<NetStats>,
}

impl Bimodule {
    pub fn new(a: FeatureSet, b: FeatureSet) -> Self {
        debug_assert_eq!(a.view, View::TypeOne);
        debug_assert_eq!(b.view, View::TypeTwo);
        debug_assert!(!a.is_empty() && !b.is_empty());
        Self {
            a,
            b,
            pvalue_ab: None,
            net: None,
        }
    }

    /// Geometric mean of the two set sizes.
    pub fn geometric_size(&self) -> f64 {
        ((self.a.len() * self.b.len()) as f64).sqrt()
    }
}

/// Why a search stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Non-empty fixed point reached directly.
    FixedPoint,
    /// An iterate lost one side entirely.
    EmptySet,
    /// A cycle was intersected and the search then reached a fixed point.
    CycleResolved,
    IterationCap,
    SizeCap,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::FixedPoint => "fixed_point",
            Termination::EmptySet => "empty_set",
            Termination::CycleResolved => "cycle_resolved",
            Termination::IterationCap => "iteration_cap",
            Termination::SizeCap => "size_cap",
        }
    }
}

/// Per-initialization record of the search.
#[derive(Debug, Clone)]
pub struct SearchTrace {
    pub seed_view: View,
    pub seed_index: usize,
    /// Sizes `(|A_k|, |B_k|)` of each computed iterate.
    pub iterates: Vec<(usize, usize)>,
    pub termination: Termination,
    pub iterations: usize,
    /// Whether the seed feature ended up inside the returned bimodule.
    pub seed_contained: bool,
}

/// Search configuration; defaults follow the published procedure.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    /// False discovery parameter for the step-up threshold.
    pub alpha: f64,
    /// Hard cap on full iterations of the alternating loop.
    pub max_iterations: usize,
    /// Geometric-size cap on iterates.
    pub size_cap: f64,
    /// Fraction of type-1 features used as seeds.
    pub seed_fraction_s: f64,
    /// Fraction of type-2 features used as seeds.
    pub seed_fraction_t: f64,
    /// Skip seeds already covered by a found bimodule (forces serial seed
    /// order).
    pub skip_covered_seeds: bool,
    pub rng_seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            max_iterations: 20,
            size_cap: 5000.0,
            seed_fraction_s: 1.0,
            seed_fraction_t: 1.0,
            skip_covered_seeds: false,
            rng_seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParam {
                msg: format!("alpha must lie in (0, 1), got {}", self.alpha),
            });
        }
        for (name, v) in [
            ("seed_fraction_s", self.seed_fraction_s),
            ("seed_fraction_t", self.seed_fraction_t),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParam {
                    msg: format!("{name} must lie in [0, 1], got {v}"),
                });
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParam {
                msg: "max_iterations must be positive".into(),
            });
        }
        if self.size_cap <= 0.0 {
            return Err(Error::InvalidParam {
                msg: "size_cap must be positive".into(),
            });
        }
        Ok(())
    }
}

/// One half of the alternating update: score every opposite-view feature
/// against `from` and return the indices rejected by the step-up rule.
///
/// The tail approximation conditions on the intra-correlation eigenvalues of
/// `from` and is shared across all scored features.
pub fn half_update(
    dataset: &TwoViewDataset,
    from: &FeatureSet,
    alpha: f64,
) -> Result<FeatureSet> {
    let opposite = from.view.opposite();
    let opposite_size = match opposite {
        View::TypeOne => dataset.p(),
        View::TypeTwo => dataset.q(),
    };
    if from.is_empty() || opposite_size == 0 {
        return Ok(FeatureSet::empty(opposite));
    }
    if !dataset.is_standardized() {
        return Err(Error::NotStandardized);
    }
    let tail = tail_for_set(dataset, from)?;
    let profile = r2_profile(dataset, from);
    let pvals: Vec<f64> = profile.iter().map(|&s| pvalue_approx(s, &tail)).collect();
    let thr = by_threshold(&pvals, alpha);
    Ok(FeatureSet::new(opposite, thr.rejected))
}

type State = (Vec<usize>, Vec<usize>);

fn state_of(a: &FeatureSet, b: &FeatureSet) -> State {
    (a.indices().to_vec(), b.indices().to_vec())
}

/// Runs the alternating search from a singleton seed.
///
/// A type-1 seed starts with `A = {s}` and updates the type-2 side first; a
/// type-2 seed runs the mirrored loop. Returns a bimodule only when a
/// non-empty fixed point is reached; every other outcome is reported through
/// the trace.
pub fn search_from(
    dataset: &TwoViewDataset,
    seed_view: View,
    seed_index: usize,
    config: &SearchConfig,
) -> Result<(Option<Bimodule>, SearchTrace)> {
    search_with(seed_view, seed_index, config, |a, b| match seed_view {
        View::TypeOne => {
            let bn = half_update(dataset, a, config.alpha)?;
            let an = half_update(dataset, &bn, config.alpha)?;
            Ok((an, bn))
        }
        View::TypeTwo => {
            let an = half_update(dataset, b, config.alpha)?;
            let bn = half_update(dataset, &an, config.alpha)?;
            Ok((an, bn))
        }
    })
}

/// The alternation loop with an injectable iteration map; `step` performs
/// both half-updates of one full iteration. Kept separate so tests can force
/// cycles without constructing data that produces them.
fn search_with<F>(
    seed_view: View,
    seed_index: usize,
    config: &SearchConfig,
    mut step: F,
) -> Result<(Option<Bimodule>, SearchTrace)>
where
    F: FnMut(&FeatureSet, &FeatureSet) -> Result<(FeatureSet, FeatureSet)>,
{
    let (mut a, mut b) = match seed_view {
        View::TypeOne => (
            FeatureSet::singleton(View::TypeOne, seed_index),
            FeatureSet::empty(View::TypeTwo),
        ),
        View::TypeTwo => (
            FeatureSet::empty(View::TypeOne),
            FeatureSet::singleton(View::TypeTwo, seed_index),
        ),
    };
    let mut history: HashMap<State, usize> = HashMap::new();
    let mut iterates = Vec::new();
    let mut resolved_cycle = false;
    let mut iterations = 0usize;

    let finish = |termination: Termination,
                  bimodule: Option<Bimodule>,
                  iterates: Vec<(usize, usize)>,
                  iterations: usize| {
        let seed_contained = bimodule
            .as_ref()
            .map(|bm| match seed_view {
                View::TypeOne => bm.a.contains(seed_index),
                View::TypeTwo => bm.b.contains(seed_index),
            })
            .unwrap_or(false);
        Ok((
            bimodule,
            SearchTrace {
                seed_view,
                seed_index,
                iterates,
                termination,
                iterations,
                seed_contained,
            },
        ))
    };

    while iterations < config.max_iterations {
        iterations += 1;
        let (a_new, b_new) = step(&a, &b)?;
        iterates.push((a_new.len(), b_new.len()));

        if a_new.is_empty() || b_new.is_empty() {
            return finish(Termination::EmptySet, None, iterates, iterations);
        }
        let geometric = ((a_new.len() * b_new.len()) as f64).sqrt();
        if geometric > config.size_cap {
            return finish(Termination::SizeCap, None, iterates, iterations);
        }
        if a_new == a && b_new == b {
            let termination = if resolved_cycle {
                Termination::CycleResolved
            } else {
                Termination::FixedPoint
            };
            return finish(termination, Some(Bimodule::new(a_new, b_new)), iterates, iterations);
        }
        if history.contains_key(&state_of(&a_new, &b_new)) {
            // Non-trivial cycle: continue from the pairwise intersection of
            // the last two iterates and forget the old trajectory.
            let ai = a_new.intersect(&a);
            let bi = b_new.intersect(&b);
            resolved_cycle = true;
            history.clear();
            if ai.is_empty() || bi.is_empty() {
                return finish(Termination::EmptySet, None, iterates, iterations);
            }
            a = ai;
            b = bi;
            continue;
        }
        history.insert(state_of(&a, &b), iterations);
        a = a_new;
        b = b_new;
    }
    finish(Termination::IterationCap, None, iterates, iterations)
}

/// Bonferroni significance threshold for the final filter.
pub fn bonferroni_threshold(alpha: f64, p: usize, q: usize) -> f64 {
    alpha / (p as f64 * q as f64)
}

/// Joint p-value `p(A, B)` for a found bimodule and the accept decision.
///
/// When either side is a singleton the statistic is exactly the one the
/// moment machinery covers, conditioning on the other side's eigenvalues.
/// Otherwise the p-value is estimated by Monte Carlo with one shared
/// permutation applied to the whole opposite block per draw; a bimodule
/// whose statistic beats the entire permutation budget is kept even when
/// the threshold lies below Monte Carlo resolution.
pub fn final_filter(
    dataset: &TwoViewDataset,
    mut bimodule: Bimodule,
    alpha: f64,
    max_perms: usize,
    rng_seed: u64,
) -> Result<Option<Bimodule>> {
    let threshold = bonferroni_threshold(alpha, dataset.p(), dataset.q());
    let stat = r2_sum(dataset, &bimodule.a, &bimodule.b);
    let (pvalue, keep) = if bimodule.a.len().min(bimodule.b.len()) == 1 {
        let conditioning = if bimodule.b.len() == 1 {
            &bimodule.a
        } else {
            &bimodule.b
        };
        let tail = tail_for_set(dataset, conditioning)?;
        let p = pvalue_approx(stat, &tail);
        (p, p <= threshold)
    } else {
        let res = mc_set_pvalue(
            dataset,
            &bimodule.a,
            &bimodule.b,
            max_perms,
            threshold,
            rng_seed,
        );
        (res.estimate, res.estimate <= threshold || res.below_resolution)
    };
    if keep {
        bimodule.pvalue_ab = Some(pvalue);
        Ok(Some(bimodule))
    } else {
        Ok(None)
    }
}

/// Checks the stability definition directly: both half-updates from the
/// bimodule's own sets must reproduce the sets exactly.
pub fn verify_stable(
    dataset: &TwoViewDataset,
    bimodule: &Bimodule,
    alpha: f64,
) -> Result<bool> {
    let b_check = half_update(dataset, &bimodule.a, alpha)?;
    let a_check = half_update(dataset, &bimodule.b, alpha)?;
    Ok(a_check == bimodule.a && b_check == bimodule.b)
}

fn sample_seeds(total: usize, fraction: f64, rng_seed: u64) -> Vec<usize> {
    if fraction >= 1.0 {
        return (0..total).collect();
    }
    let k = ((total as f64) * fraction).round() as usize;
    if k == 0 {
        return Vec::new();
    }
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng_seed);
    let mut picked = rand::seq::index::sample(&mut rng, total, k.min(total)).into_vec();
    picked.sort_unstable();
    picked
}

/// Runs the search from every scheduled seed and deduplicates exactly
/// identical results, keeping the first occurrence in seed order.
///
/// Seeds are all sampled type-1 features followed by all sampled type-2
/// features; results merge in that fixed order, so the output does not
/// depend on the number of worker threads.
pub fn run_all(
    dataset: &TwoViewDataset,
    config: &SearchConfig,
) -> Result<(Vec<Bimodule>, Vec<SearchTrace>)> {
    config.validate()?;
    if !dataset.is_standardized() {
        return Err(Error::NotStandardized);
    }
    let s_seeds = sample_seeds(
        dataset.p(),
        config.seed_fraction_s,
        derive_seed(config.rng_seed, "seeds_s", 0),
    );
    let t_seeds = sample_seeds(
        dataset.q(),
        config.seed_fraction_t,
        derive_seed(config.rng_seed, "seeds_t", 0),
    );
    let seeds: Vec<(View, usize)> = s_seeds
        .into_iter()
        .map(|s| (View::TypeOne, s))
        .chain(t_seeds.into_iter().map(|t| (View::TypeTwo, t)))
        .collect();

    let mut found: Vec<Bimodule> = Vec::new();
    let mut traces: Vec<SearchTrace> = Vec::new();
    let mut seen: HashSet<State> = HashSet::new();

    if config.skip_covered_seeds {
        // Sequential: whether a seed is skipped depends on earlier results.
        for (view, idx) in seeds {
            let covered = found.iter().any(|bm| match view {
                View::TypeOne => bm.a.contains(idx),
                View::TypeTwo => bm.b.contains(idx),
            });
            if covered {
                continue;
            }
            let (bm, trace) = search_from(dataset, view, idx, config)?;
            traces.push(trace);
            if let Some(bm) = bm {
                if seen.insert(state_of(&bm.a, &bm.b)) {
                    found.push(bm);
                }
            }
        }
    } else {
        let results: Vec<(Option<Bimodule>, SearchTrace)> = seeds
            .par_iter()
            .map(|&(view, idx)| search_from(dataset, view, idx, config))
            .collect::<Result<Vec<_>>>()?;
        for (bm, trace) in results {
            traces.push(trace);
            if let Some(bm) = bm {
                if seen.insert(state_of(&bm.a, &bm.b)) {
                    found.push(bm);
                }
            }
        }
    }
    Ok((found, traces))
}

/// Everything the full search pipeline produces.
#[derive(Debug)]
pub struct PipelineResult {
    /// Representative bimodules with p-values and network statistics.
    pub bimodules: Vec<Bimodule>,
    pub traces: Vec<SearchTrace>,
    /// Unique fixed points found before the final filter.
    pub n_found: usize,
    /// Survivors of the Bonferroni filter, before overlap filtering.
    pub n_after_filter: usize,
    pub effective_number: f64,
}

/// Search, filter, deduplicate, and annotate: the standard end-to-end run.
pub fn run_pipeline(
    dataset: &TwoViewDataset,
    config: &SearchConfig,
    filter_max_perms: usize,
) -> Result<PipelineResult> {
    let (raw, traces) = run_all(dataset, config)?;
    let n_found = raw.len();
    let filtered: Vec<Bimodule> = raw
        .into_par_iter()
        .map(|bm| {
            // Seed derived from content so the draw stream does not depend
            // on scheduling.
            let mut bytes = Vec::with_capacity(8 * (bm.a.len() + bm.b.len() + 1));
            for &s in bm.a.indices() {
                bytes.extend_from_slice(&(s as u64).to_le_bytes());
            }
            bytes.extend_from_slice(&u64::MAX.to_le_bytes());
            for &t in bm.b.indices() {
                bytes.extend_from_slice(&(t as u64).to_le_bytes());
            }
            let seed = derive_seed(config.rng_seed, "final_filter", fnv1a(&bytes));
            final_filter(dataset, bm, config.alpha, filter_max_perms, seed)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let n_after_filter = filtered.len();
    let collection = BimoduleCollection::new(filtered);
    let ne = effective_number(&collection);
    let mut reps = select_representatives(&collection);
    reps.par_iter_mut().for_each(|bm| {
        bm.net = Some(net_stats(dataset, &bm.a, &bm.b));
    });
    Ok(PipelineResult {
        bimodules: reps,
        traces,
        n_found,
        n_after_filter,
        effective_number: ne,
    })
}
