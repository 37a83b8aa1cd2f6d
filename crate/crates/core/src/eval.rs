//! Scoring of detected bimodules against planted ground truth: recall and
//! Jaccard over feature-pair sets, essential-edge error, and overlap counts.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corr::FeatureSet;
use crate::net::edge_error;
use crate::search::Bimodule;

/// How much of the truth pair-set the detection covers.
pub fn recall(truth: (&FeatureSet, &FeatureSet), detected: (&FeatureSet, &FeatureSet)) -> f64 {
    let (at, bt) = truth;
    let (ad, bd) = detected;
    debug_assert!(!at.is_empty() && !bt.is_empty());
    let inter = (at.intersection_len(ad) * bt.intersection_len(bd)) as f64;
    inter / (at.len() * bt.len()) as f64
}

/// Pair-set Jaccard similarity via inclusion-exclusion.
pub fn jaccard(truth: (&FeatureSet, &FeatureSet), detected: (&FeatureSet, &FeatureSet)) -> f64 {
    let (at, bt) = truth;
    let (ad, bd) = detected;
    debug_assert!(!at.is_empty() && !bt.is_empty());
    debug_assert!(!ad.is_empty() && !bd.is_empty());
    let inter = (at.intersection_len(ad) * bt.intersection_len(bd)) as f64;
    let union = (at.len() * bt.len() + ad.len() * bd.len()) as f64 - inter;
    inter / union
}

/// Per-truth recovery scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthScore {
    pub truth_index: usize,
    pub best_recall: f64,
    pub best_jaccard: f64,
    /// Index of the detection attaining the best recall, if any detection
    /// overlaps at all.
    pub best_recall_detection: Option<usize>,
    pub best_jaccard_detection: Option<usize>,
}

/// Per-detection scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionScore {
    pub detection_index: usize,
    /// Fraction of essential edges outside the truth support; absent when
    /// the detection carries no network statistics.
    pub edge_error: Option<f64>,
    /// Number of truths whose pair set intersects this detection.
    pub truth_overlaps: usize,
}

/// Full recovery report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub per_truth: Vec<TruthScore>,
    pub per_detection: Vec<DetectionScore>,
    pub mean_recall: f64,
    pub mean_jaccard: f64,
    /// Mean over detections that carry essential edges.
    pub mean_edge_error: f64,
}

/// Scores a detection collection against planted truths.
///
/// `truth_edges` is the population support used for edge error: every pair
/// inside any true bimodule plus the bridge pairs.
pub fn score_collection(
    truths: &[(FeatureSet, FeatureSet)],
    detections: &[Bimodule],
    truth_edges: &HashSet<(usize, usize)>,
) -> RecoveryReport {
    let per_truth: Vec<TruthScore> = truths
        .par_iter()
        .enumerate()
        .map(|(ti, (at, bt))| {
            let mut best_recall = 0.0;
            let mut best_jaccard = 0.0;
            let mut best_recall_detection = None;
            let mut best_jaccard_detection = None;
            for (di, det) in detections.iter().enumerate() {
                let r = recall((at, bt), (&det.a, &det.b));
                let j = jaccard((at, bt), (&det.a, &det.b));
                if r > best_recall {
                    best_recall = r;
                    best_recall_detection = Some(di);
                }
                if j > best_jaccard {
                    best_jaccard = j;
                    best_jaccard_detection = Some(di);
                }
            }
            TruthScore {
                truth_index: ti,
                best_recall,
                best_jaccard,
                best_recall_detection,
                best_jaccard_detection,
            }
        })
        .collect();

    let per_detection: Vec<DetectionScore> = detections
        .par_iter()
        .enumerate()
        .map(|(di, det)| {
            let edge_err = det
                .net
                .as_ref()
                .and_then(|net| edge_error(&net.essential_edges, truth_edges).ok());
            let overlaps = truths
                .iter()
                .filter(|(at, bt)| {
                    at.intersection_len(&det.a) > 0 && bt.intersection_len(&det.b) > 0
                })
                .count();
            DetectionScore {
                detection_index: di,
                edge_error: edge_err,
                truth_overlaps: overlaps,
            }
        })
        .collect();

    let mean_recall = mean(per_truth.iter().map(|t| t.best_recall));
    let mean_jaccard = mean(per_truth.iter().map(|t| t.best_jaccard));
    let mean_edge_error = mean(per_detection.iter().filter_map(|d| d.edge_error));
    RecoveryReport {
        per_truth,
        per_detection,
        mean_recall,
        mean_jaccard,
        mean_edge_error,
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values {
        sum += v;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Sample cross-correlation strength `sqrt(r^2(A, B) / (|A||B|))` of a pair
/// of sets on a standardized dataset.
pub fn cross_strength(
    dataset: &crate::data::TwoViewDataset,
    a: &FeatureSet,
    b: &FeatureSet,
) -> f64 {
    (crate::corr::r2_sum(dataset, a, b) / (a.len() * b.len()) as f64).sqrt()
}
