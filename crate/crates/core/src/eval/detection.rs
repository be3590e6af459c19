use std::collections::{BTreeMap, BTreeSet};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{average_precision, coco_thresholds, greedy_match, EvalError, Scored};
use crate::model::BoundingBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GroundTruthBox {
    pub image_id: String,
    pub class_label: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PredictedBox {
    pub image_id: String,
    pub class_label: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub score: f64,
}

/// Ground-truth file layout, also produced by feedback export.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
pub struct DetectionDataset {
    /// Image ids, including images without any boxes.
    #[serde(default)]
    pub images: Vec<String>,
    pub annotations: Vec<GroundTruthBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MapReport {
    pub iou_thresholds: Vec<f64>,
    /// Class -> AP at each threshold.
    pub per_class: BTreeMap<String, Vec<f64>>,
    /// Mean over classes at each threshold.
    pub per_threshold: Vec<f64>,
    pub map: f64,
    /// Classes with predictions but no ground truth.
    pub excluded_classes: Vec<String>,
}

/// Mean average precision over classes, then over `iou_thresholds`.
pub fn mean_average_precision(
    predictions: &[PredictedBox],
    ground_truth: &[GroundTruthBox],
    iou_thresholds: &[f64],
) -> Result<MapReport, EvalError> {
    if iou_thresholds.is_empty() {
        return Err(EvalError::InvalidInput("no IoU thresholds".into()));
    }
    if let Some(p) = predictions.iter().find(|p| !(0.0..=1.0).contains(&p.score)) {
        return Err(EvalError::InvalidInput(format!("score {} outside [0, 1]", p.score)));
    }
    let gt_classes: BTreeSet<&str> = ground_truth.iter().map(|g| g.class_label.as_str()).collect();
    if gt_classes.is_empty() {
        return Err(EvalError::NoGroundTruth);
    }
    let excluded: BTreeSet<&str> = predictions
        .iter()
        .map(|p| p.class_label.as_str())
        .filter(|c| !gt_classes.contains(c))
        .collect();
    for c in &excluded {
        warn!(class = c, "class has predictions but no ground truth; excluded");
    }

    let mut per_class = BTreeMap::new();
    for class in &gt_classes {
        // image -> (prediction indices, gt indices)
        let mut images: BTreeMap<&str, (Vec<&PredictedBox>, Vec<&GroundTruthBox>)> = BTreeMap::new();
        for p in predictions.iter().filter(|p| p.class_label == *class) {
            images.entry(&p.image_id).or_default().0.push(p);
        }
        let mut gt_count = 0;
        for g in ground_truth.iter().filter(|g| g.class_label == *class) {
            images.entry(&g.image_id).or_default().1.push(g);
            gt_count += 1;
        }
        let aps = iou_thresholds
            .iter()
            .map(|&t| {
                let mut matches: Vec<Scored> = Vec::new();
                for (preds, gts) in images.values() {
                    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
                    let sim: Vec<Vec<f64>> = preds
                        .iter()
                        .map(|p| gts.iter().map(|g| p.bbox.iou(&g.bbox)).collect())
                        .collect();
                    matches.extend(greedy_match(&scores, &sim, gts.len(), t));
                }
                average_precision(matches, gt_count).0
            })
            .collect::<Vec<f64>>();
        per_class.insert(class.to_string(), aps);
    }

    let n = per_class.len() as f64;
    let per_threshold: Vec<f64> = (0..iou_thresholds.len())
        .map(|i| per_class.values().map(|aps| aps[i]).sum::<f64>() / n)
        .collect();
    let map = per_threshold.iter().sum::<f64>() / per_threshold.len() as f64;
    Ok(MapReport {
        iou_thresholds: iou_thresholds.to_vec(),
        per_class,
        per_threshold,
        map,
        excluded_classes: excluded.into_iter().map(String::from).collect(),
    })
}

/// Both AP@0.5 and AP@[0.5:0.95], labelled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DetectionReport {
    pub map_50: f64,
    pub map_50_95: f64,
    pub per_class_ap_50: BTreeMap<String, f64>,
    pub per_class_ap_50_95: BTreeMap<String, f64>,
    pub excluded_classes: Vec<String>,
}

pub fn evaluate_detections(
    predictions: &[PredictedBox],
    ground_truth: &[GroundTruthBox],
) -> Result<DetectionReport, EvalError> {
    let at50 = mean_average_precision(predictions, ground_truth, &[0.5])?;
    let coco = mean_average_precision(predictions, ground_truth, &coco_thresholds())?;
    Ok(DetectionReport {
        map_50: at50.map,
        map_50_95: coco.map,
        per_class_ap_50: at50.per_class.iter().map(|(c, v)| (c.clone(), v[0])).collect(),
        per_class_ap_50_95: coco
            .per_class
            .iter()
            .map(|(c, v)| (c.clone(), v.iter().sum::<f64>() / v.len() as f64))
            .collect(),
        excluded_classes: at50.excluded_classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    fn gt(img: &str, class: &str, bbox: BoundingBox) -> GroundTruthBox {
        GroundTruthBox { image_id: img.into(), class_label: class.into(), bbox }
    }

    fn pred(img: &str, class: &str, bbox: BoundingBox, score: f64) -> PredictedBox {
        PredictedBox { image_id: img.into(), class_label: class.into(), bbox, score }
    }

    #[test]
    fn perfect_predictions() {
        let g = vec![gt("a", "car", b(0.0, 0.0, 10.0, 10.0)), gt("b", "number", b(5.0, 5.0, 9.0, 9.0))];
        let p: Vec<_> = g.iter().map(|g| pred(&g.image_id, &g.class_label, g.bbox, 1.0)).collect();
        let r = evaluate_detections(&p, &g).unwrap();
        assert_eq!(r.map_50, 1.0);
        assert_eq!(r.map_50_95, 1.0);
    }

    #[test]
    fn disjoint_predictions() {
        let g = vec![gt("a", "car", b(0.0, 0.0, 10.0, 10.0))];
        let p = vec![pred("a", "car", b(20.0, 20.0, 30.0, 30.0), 0.9)];
        assert_eq!(evaluate_detections(&p, &g).unwrap().map_50_95, 0.0);
    }

    #[test]
    fn hit_ranked_above_miss() {
        let g = vec![gt("a", "car", b(0.0, 0.0, 10.0, 10.0))];
        let p = vec![
            pred("a", "car", b(0.0, 0.0, 10.0, 10.0), 0.9),
            pred("a", "car", b(50.0, 50.0, 60.0, 60.0), 0.8),
        ];
        let r = mean_average_precision(&p, &g, &[0.5]).unwrap();
        assert_eq!(r.map, 1.0);
    }

    #[test]
    fn unmatched_class_excluded() {
        let g = vec![gt("a", "car", b(0.0, 0.0, 10.0, 10.0))];
        let p = vec![
            pred("a", "car", b(0.0, 0.0, 10.0, 10.0), 0.9),
            pred("a", "ghost", b(0.0, 0.0, 10.0, 10.0), 0.9),
        ];
        let r = mean_average_precision(&p, &g, &[0.5]).unwrap();
        assert_eq!(r.map, 1.0);
        assert_eq!(r.excluded_classes, vec!["ghost".to_string()]);
        assert_eq!(mean_average_precision(&p, &[], &[0.5]), Err(EvalError::NoGroundTruth));
    }

    #[test]
    fn cross_image_boxes_never_match() {
        let g = vec![gt("a", "car", b(0.0, 0.0, 10.0, 10.0))];
        let p = vec![pred("b", "car", b(0.0, 0.0, 10.0, 10.0), 0.9)];
        assert_eq!(mean_average_precision(&p, &g, &[0.5]).unwrap().map, 0.0);
    }
}
