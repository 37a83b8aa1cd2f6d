//! Benjamini-Yekutieli step-up threshold, valid under arbitrary p-value
//! dependence.

/// Result of the adaptive threshold: the cutoff and the rejected indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdResult {
    /// Largest order statistic satisfying the step-up condition; 0 when no
    /// rank passes.
    pub tau: f64,
    /// Indices `j` with `p_j <= tau`, sorted ascending.
    pub rejected: Vec<usize>,
}

/// Harmonic number `H_m`, summed small-to-large with compensation so the
/// value is identical across platforms.
pub fn harmonic(m: usize) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for i in (1..=m).rev() {
        let y = 1.0 / i as f64 - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// The step-up rule: `tau` is the largest order statistic `p_(k)` with
/// `m * p_(k) / k <= alpha / H_m`; ties share the rank of the last tied
/// element because rejection is by `p_j <= tau`.
pub fn by_threshold(pvalues: &[f64], alpha: f64) -> ThresholdResult {
    assert!(!pvalues.is_empty(), "by_threshold requires at least one p-value");
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_unstable_by(|&i, &j| pvalues[i].partial_cmp(&pvalues[j]).unwrap());
    let bound = alpha / harmonic(m);
    let mf = m as f64;
    let mut tau = 0.0;
    let mut any = false;
    for (rank0, &idx) in order.iter().enumerate() {
        let k = (rank0 + 1) as f64;
        if mf * pvalues[idx] / k <= bound {
            tau = pvalues[idx];
            any = true;
        }
    }
    if !any {
        return ThresholdResult {
            tau: 0.0,
            rejected: Vec::new(),
        };
    }
    let mut rejected: Vec<usize> = (0..m).filter(|&j| pvalues[j] <= tau).collect();
    rejected.sort_unstable();
    ThresholdResult { tau, rejected }
}
