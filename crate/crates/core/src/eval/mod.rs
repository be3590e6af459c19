//! Offline metrics: detection mAP, classification accuracy, keypoint AP/AR
//! and deterministic dataset splitting.

mod classification;
mod detection;
mod keypoints;
mod split;

use thiserror::Error;

pub use classification::{accuracy_table, AccuracyReport, ClassAccuracy, LabelPair};
pub use detection::{
    evaluate_detections, mean_average_precision, DetectionDataset, DetectionReport, GroundTruthBox,
    MapReport, PredictedBox,
};
pub use keypoints::{
    keypoint_ap_ar, object_keypoint_similarity, KeypointGroundTruth, KeypointPrediction, KeypointReport,
    DEFAULT_FALLOFF,
};
pub use split::{split_dataset, Split, SplitFractions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no ground truth to evaluate against")]
    NoGroundTruth,
    #[error("no samples")]
    Empty,
    #[error("split fractions must be non-negative and sum to 1, got {0:?}")]
    BadFractions([f64; 3]),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// One scored prediction after matching.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Scored {
    pub score: f64,
    pub hit: bool,
}

/// Greedy matching within one image.
///
/// Predictions are visited by descending score (stable on input order); each
/// takes the unmatched ground truth with the highest similarity at or above
/// `threshold`, the lowest index winning ties.
pub(crate) fn greedy_match(scores: &[f64], similarity: &[Vec<f64>], gt_count: usize, threshold: f64) -> Vec<Scored> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut taken = vec![false; gt_count];
    let mut out = vec![Scored { score: 0.0, hit: false }; scores.len()];
    for p in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, &s) in similarity[p].iter().enumerate() {
            if taken[g] || s < threshold {
                continue;
            }
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((g, s));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
        }
        out[p] = Scored {
            score: scores[p],
            hit: best.is_some(),
        };
    }
    out
}

/// Precision/recall summary of a ranked list of matches.
///
/// Returns the 101-point interpolated average precision and the final
/// recall.
pub(crate) fn average_precision(mut matches: Vec<Scored>, gt_count: usize) -> (f64, f64) {
    if gt_count == 0 {
        return (0.0, 0.0);
    }
    matches.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut tp = 0usize;
    // (true positives, precision) after each prediction.
    let mut curve = Vec::with_capacity(matches.len());
    for (i, m) in matches.iter().enumerate() {
        if m.hit {
            tp += 1;
        }
        curve.push((tp, tp as f64 / (i + 1) as f64));
    }
    // Interpolated precision: best precision at this recall or beyond.
    let mut interp = vec![0.0; curve.len()];
    let mut running: f64 = 0.0;
    for i in (0..curve.len()).rev() {
        running = running.max(curve[i].1);
        interp[i] = running;
    }
    let mut sum = 0.0;
    let mut j = 0;
    for r in 0..=100usize {
        // First point whose recall tp / gt_count reaches r / 100.
        while j < curve.len() && curve[j].0 * 100 < r * gt_count {
            j += 1;
        }
        if j < curve.len() {
            sum += interp[j];
        }
    }
    (sum / 101.0, tp as f64 / gt_count as f64)
}
