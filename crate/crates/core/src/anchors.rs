//! k-means over ground-truth box shapes to propose detector anchors.
//!
//! Two distances are supported: scalar aspect-ratio clustering with squared
//! distance, and shape clustering with `1 - IoU` between origin-centered
//! boxes.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_ITERATIONS: usize = 300;
pub const RESTARTS: u64 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnchorError {
    #[error("no boxes given")]
    EmptyInput,
    #[error("k = {k} exceeds the {distinct} distinct box shapes")]
    KTooLarge { k: usize, distinct: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("box {index} has non-positive or non-finite size")]
    InvalidBox { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorDistance {
    Iou,
    #[default]
    AspectRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    /// Width over height.
    pub aspect_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub distance: AnchorDistance,
    pub anchors: Vec<Anchor>,
    /// Mean over boxes of the best similarity to any anchor: IoU in iou
    /// mode, `min(r, c) / max(r, c)` of aspect ratios otherwise.
    pub mean_best_match: f64,
    /// Anchor index for each input box, in input order.
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

fn origin_iou(a: &[f64], b: &[f64]) -> f64 {
    let inter = a[0].min(b[0]) * a[1].min(b[1]);
    inter / (a[0] * a[1] + b[0] * b[1] - inter)
}

fn ratio_similarity(a: f64, b: f64) -> f64 {
    a.min(b) / a.max(b)
}

fn cost(mode: AnchorDistance, p: &[f64], c: &[f64]) -> f64 {
    match mode {
        AnchorDistance::Iou => 1.0 - origin_iou(p, c),
        AnchorDistance::AspectRatio => (p[0] - c[0]).powi(2),
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Index of the nearest centroid for every point; ties go to the lower index.
pub fn assign_points(mode: AnchorDistance, points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (i, c) in centroids.iter().enumerate() {
                let d = cost(mode, p, c);
                if d < best.1 {
                    best = (i, d);
                }
            }
            best.0
        })
        .collect()
}

fn update(points: &[Vec<f64>], assign: &[usize], old: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = old[0].len();
    let mut sums = vec![vec![0.0; dim]; old.len()];
    let mut counts = vec![0usize; old.len()];
    for (p, &a) in points.iter().zip(assign) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    sums.into_iter()
        .zip(counts)
        .zip(old)
        .map(|((s, n), o)| {
            if n == 0 {
                o.clone()
            } else {
                s.into_iter().map(|v| v / n as f64).collect()
            }
        })
        .collect()
}

struct Run {
    centroids: Vec<Vec<f64>>,
    assign: Vec<usize>,
    cost: f64,
    iterations: usize,
}

fn lloyd(mode: AnchorDistance, points: &[Vec<f64>], init: Vec<Vec<f64>>) -> Run {
    let mut centroids = init;
    let mut assign = assign_points(mode, points, &centroids);
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        centroids = update(points, &assign, &centroids);
        let next = assign_points(mode, points, &centroids);
        if next == assign {
            break;
        }
        assign = next;
    }
    let cost = points
        .iter()
        .zip(&assign)
        .map(|(p, &a)| cost(mode, p, &centroids[a]))
        .sum();
    Run {
        centroids,
        assign,
        cost,
        iterations,
    }
}

/// Clusters `(width, height)` box shapes into `k` anchors.
///
/// Input is put in a canonical order first, so permuting `boxes` does not
/// change the result for a fixed seed. Each of the restarts draws `k`
/// distinct shapes as initial centroids; the lowest total cost wins.
pub fn kmeans_anchors(
    boxes: &[(f64, f64)],
    k: usize,
    mode: AnchorDistance,
    seed: u64,
) -> Result<AnchorSet, AnchorError> {
    if boxes.is_empty() {
        return Err(AnchorError::EmptyInput);
    }
    if k == 0 {
        return Err(AnchorError::ZeroK);
    }
    if let Some(index) = boxes
        .iter()
        .position(|&(w, h)| !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0))
    {
        return Err(AnchorError::InvalidBox { index });
    }

    let feature = |&(w, h): &(f64, f64)| match mode {
        AnchorDistance::Iou => vec![w, h],
        AnchorDistance::AspectRatio => vec![w / h],
    };
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| lex_cmp(&feature(&boxes[a]), &feature(&boxes[b])).then(a.cmp(&b)));
    let points: Vec<Vec<f64>> = order.iter().map(|&i| feature(&boxes[i])).collect();
    let mut distinct = points.clone();
    distinct.dedup();
    if k > distinct.len() {
        return Err(AnchorError::KTooLarge {
            k,
            distinct: distinct.len(),
        });
    }

    let mut best: Option<Run> = None;
    for restart in 0..RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(restart.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        let mut picks = sample(&mut rng, distinct.len(), k).into_vec();
        picks.sort_unstable();
        let init = picks.iter().map(|&i| distinct[i].clone()).collect();
        let run = lloyd(mode, &points, init);
        if best.as_ref().is_none_or(|b| run.cost < b.cost) {
            best = Some(run);
        }
    }
    let run = best.expect("at least one restart");

    // Canonical anchor order: by aspect ratio, then by area.
    let key = |c: &Vec<f64>| match mode {
        AnchorDistance::Iou => (c[0] / c[1], c[0] * c[1]),
        AnchorDistance::AspectRatio => (c[0], 0.0),
    };
    let mut perm: Vec<usize> = (0..k).collect();
    perm.sort_by(|&a, &b| {
        let (ka, kb) = (key(&run.centroids[a]), key(&run.centroids[b]));
        ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(a.cmp(&b))
    });
    let mut relabel = vec![0; k];
    for (new, &old) in perm.iter().enumerate() {
        relabel[old] = new;
    }
    let centroids: Vec<Vec<f64>> = perm.iter().map(|&i| run.centroids[i].clone()).collect();

    let mut assignments = vec![0; boxes.len()];
    for (sorted_pos, &orig) in order.iter().enumerate() {
        assignments[orig] = relabel[run.assign[sorted_pos]];
    }

    let mean_best_match = points
        .iter()
        .map(|p| {
            centroids
                .iter()
                .map(|c| match mode {
                    AnchorDistance::Iou => origin_iou(p, c),
                    AnchorDistance::AspectRatio => ratio_similarity(p[0], c[0]),
                })
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / points.len() as f64;

    let anchors = centroids
        .iter()
        .map(|c| match mode {
            AnchorDistance::Iou => Anchor {
                aspect_ratio: c[0] / c[1],
                width: Some(c[0]),
                height: Some(c[1]),
            },
            AnchorDistance::AspectRatio => Anchor {
                aspect_ratio: c[0],
                width: None,
                height: None,
            },
        })
        .collect();

    Ok(AnchorSet {
        distance: mode,
        anchors,
        mean_best_match,
        assignments,
        iterations: run.iterations,
    })
}

impl AnchorSet {
    /// Centroid vectors in the clustering feature space.
    pub fn centroids(&self) -> Vec<Vec<f64>> {
        self.anchors
            .iter()
            .map(|a| match self.distance {
                AnchorDistance::Iou => vec![a.width.unwrap_or(a.aspect_ratio), a.height.unwrap_or(1.0)],
                AnchorDistance::AspectRatio => vec![a.aspect_ratio],
            })
            .collect()
    }
}
