use std::collections::BTreeMap;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{average_precision, coco_thresholds, greedy_match, EvalError, Scored};
use crate::model::WheelKeypoints;

/// Uniform per-keypoint falloff used in place of per-joint sigmas.
pub const DEFAULT_FALLOFF: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct KeypointGroundTruth {
    pub image_id: String,
    pub keypoints: WheelKeypoints,
    /// Object area in square pixels; sets the OKS scale.
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct KeypointPrediction {
    pub image_id: String,
    pub keypoints: WheelKeypoints,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct KeypointReport {
    pub ap: f64,
    pub ar: f64,
    pub oks_thresholds: Vec<f64>,
    pub ap_per_threshold: Vec<f64>,
    pub ar_per_threshold: Vec<f64>,
}

/// Mean over visible ground-truth points of `exp(-d^2 / (2 * area * k^2))`.
/// Zero when no ground-truth point is visible.
pub fn object_keypoint_similarity(pred: &WheelKeypoints, gt: &WheelKeypoints, area: f64, falloff: f64) -> f64 {
    let denom = 2.0 * area * falloff * falloff;
    let (mut sum, mut n) = (0.0, 0);
    for (p, g) in pred.as_array().iter().zip(gt.as_array()) {
        if !g.visible {
            continue;
        }
        let d2 = (p.x - g.x).powi(2) + (p.y - g.y).powi(2);
        sum += if denom > 0.0 { (-d2 / denom).exp() } else if d2 == 0.0 { 1.0 } else { 0.0 };
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// AP and AR averaged over `oks_thresholds` (0.50:0.05:0.95 when empty).
pub fn keypoint_ap_ar(
    predictions: &[KeypointPrediction],
    ground_truth: &[KeypointGroundTruth],
    oks_thresholds: &[f64],
    falloff: f64,
) -> Result<KeypointReport, EvalError> {
    if ground_truth.is_empty() {
        return Err(EvalError::NoGroundTruth);
    }
    if ground_truth.iter().any(|g| !(g.area >= 0.0)) {
        return Err(EvalError::InvalidInput("negative or non-finite area".into()));
    }
    let thresholds = if oks_thresholds.is_empty() {
        coco_thresholds()
    } else {
        oks_thresholds.to_vec()
    };
    let mut images: BTreeMap<&str, (Vec<&KeypointPrediction>, Vec<&KeypointGroundTruth>)> = BTreeMap::new();
    for p in predictions {
        images.entry(&p.image_id).or_default().0.push(p);
    }
    for g in ground_truth {
        images.entry(&g.image_id).or_default().1.push(g);
    }
    let sims: Vec<(Vec<f64>, Vec<Vec<f64>>, usize)> = images
        .values()
        .map(|(preds, gts)| {
            let scores = preds.iter().map(|p| p.score).collect();
            let sim = preds
                .iter()
                .map(|p| {
                    gts.iter()
                        .map(|g| object_keypoint_similarity(&p.keypoints, &g.keypoints, g.area, falloff))
                        .collect()
                })
                .collect();
            (scores, sim, gts.len())
        })
        .collect();

    let (mut aps, mut ars) = (Vec::new(), Vec::new());
    for &t in &thresholds {
        let mut matches: Vec<Scored> = Vec::new();
        for (scores, sim, n) in &sims {
            matches.extend(greedy_match(scores, sim, *n, t));
        }
        let (ap, recall) = average_precision(matches, ground_truth.len());
        aps.push(ap);
        ars.push(recall);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(KeypointReport {
        ap: mean(&aps),
        ar: mean(&ars),
        oks_thresholds: thresholds,
        ap_per_threshold: aps,
        ar_per_threshold: ars,
    })
}
