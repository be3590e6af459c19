//! Car number recognition by digit assembly.
//!
//! A number region is split into single-digit patches, each patch is
//! classified into one of ten digits, and the surviving digits are read left
//! to right.

use image::{GrayImage, Luma};
use imageproc::region_labelling::{connected_components, Connectivity};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_number, BoundingBox, NumberRoster, NumberValidity};

/// Pairwise IoU at or above which two patch candidates count as overlapping.
pub const PATCH_OVERLAP_IOU: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumberError {
    #[error("expected 10 digit probabilities, got {0}")]
    WrongLength(usize),
    #[error("digit probabilities must be finite and non-negative and sum to 1 (sum = {0})")]
    NotNormalized(f64),
}

/// A proposed single-digit box inside a number region, region-local.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PatchCandidate {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    /// Mean foreground contrast in `[0, 1]`; higher wins overlaps.
    pub contrast: f64,
}

/// One classified digit patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DigitPatch {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub probabilities: Vec<f64>,
    pub predicted_digit: u8,
    pub confidence: f64,
}

impl DigitPatch {
    pub fn new(bbox: BoundingBox, probabilities: Vec<f64>) -> Result<Self, NumberError> {
        if probabilities.len() != 10 {
            return Err(NumberError::WrongLength(probabilities.len()));
        }
        let sum: f64 = probabilities.iter().sum();
        if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-6 {
            return Err(NumberError::NotNormalized(sum));
        }
        let (digit, confidence) = probabilities
            .iter()
            .enumerate()
            .fold((0usize, f64::MIN), |best, (i, &p)| if p > best.1 { (i, p) } else { best });
        Ok(Self {
            bbox,
            probabilities,
            predicted_digit: digit as u8,
            confidence,
        })
    }
}

/// A recognised car number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct NumberReading {
    pub number: String,
    pub confidence: f64,
    pub validity: NumberValidity,
}

impl NumberReading {
    pub fn off_roster(&self) -> bool {
        self.validity != NumberValidity::Valid
    }
}

/// Reduces raw candidates to disjoint digit boxes ordered left to right.
///
/// Candidates not fully inside the `width x height` region are dropped. When
/// two candidates overlap the one with higher contrast survives.
pub fn find_digit_patches(candidates: &[PatchCandidate], width: f64, height: f64) -> Vec<BoundingBox> {
    let region = BoundingBox {
        x_min: 0.0,
        y_min: 0.0,
        x_max: width,
        y_max: height,
    };
    let mut inside: Vec<&PatchCandidate> = candidates
        .iter()
        .filter(|c| c.bbox.validate().is_ok() && region.contains_box(&c.bbox))
        .collect();
    inside.sort_by(|a, b| {
        b.contrast
            .total_cmp(&a.contrast)
            .then(a.bbox.x_min.total_cmp(&b.bbox.x_min))
            .then(a.bbox.y_min.total_cmp(&b.bbox.y_min))
    });
    let mut kept: Vec<BoundingBox> = Vec::new();
    for c in inside {
        if kept.iter().all(|k| k.iou(&c.bbox) < PATCH_OVERLAP_IOU) {
            kept.push(c.bbox);
        }
    }
    kept.sort_by(|a, b| a.x_min.total_cmp(&b.x_min).then(a.y_min.total_cmp(&b.y_min)));
    kept
}

/// Tuning of the contrast segmentation heuristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentationParams {
    /// Contrast below this (0-255) is never foreground.
    pub min_contrast: f64,
    /// Foreground threshold as a fraction of the region's peak contrast.
    pub relative_threshold: f64,
    pub min_aspect: f64,
    pub max_aspect: f64,
    /// Minimum glyph height as a fraction of the region height.
    pub min_height_fraction: f64,
    /// Vertical overlap (fraction of the shorter component) needed to merge
    /// horizontally touching components.
    pub merge_vertical_overlap: f64,
    /// Largest horizontal gap, in pixels, still considered adjacent.
    pub merge_gap_px: u32,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            min_contrast: 24.0,
            relative_threshold: 0.5,
            min_aspect: 0.2,
            max_aspect: 1.2,
            min_height_fraction: 0.4,
            merge_vertical_overlap: 0.7,
            merge_gap_px: 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Component {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
    contrast_sum: f64,
    pixels: u64,
}

impl Component {
    fn merge(&mut self, o: &Component) {
        self.x0 = self.x0.min(o.x0);
        self.y0 = self.y0.min(o.y0);
        self.x1 = self.x1.max(o.x1);
        self.y1 = self.y1.max(o.y1);
        self.contrast_sum += o.contrast_sum;
        self.pixels += o.pixels;
    }

    fn adjacent(&self, o: &Component, p: &SegmentationParams) -> bool {
        let gap = self.x0.max(o.x0) as i64 - self.x1.min(o.x1) as i64;
        if gap > p.merge_gap_px as i64 {
            return false;
        }
        let overlap = self.y1.min(o.y1) as f64 - self.y0.max(o.y0) as f64;
        let shorter = (self.y1 - self.y0).min(o.y1 - o.y0) as f64;
        overlap >= p.merge_vertical_overlap * shorter
    }
}

/// Proposes digit boxes from pixels.
///
/// Foreground is whatever contrasts with the dominant (background) gray
/// level by at least half the region's peak contrast. Connected components
/// that touch side by side with strong vertical overlap are merged, then
/// kept only if their aspect ratio and height look like a glyph.
pub fn segment_digit_candidates(region: &GrayImage, params: &SegmentationParams) -> Vec<PatchCandidate> {
    let (w, h) = region.dimensions();
    if w == 0 || h == 0 {
        return Vec::new();
    }

    let mut hist = [0u64; 32];
    for p in region.pixels() {
        hist[(p.0[0] / 8) as usize] += 1;
    }
    let mode = (0..32).max_by_key(|&i| (hist[i], std::cmp::Reverse(i))).unwrap_or(0);
    let (mut bg_sum, mut bg_n) = (0.0, 0u64);
    for p in region.pixels().filter(|p| (p.0[0] / 8) as usize == mode) {
        bg_sum += p.0[0] as f64;
        bg_n += 1;
    }
    let background = bg_sum / bg_n as f64;

    let contrast = |v: u8| (v as f64 - background).abs();
    let peak = region.pixels().map(|p| contrast(p.0[0])).fold(0.0, f64::max);
    if peak < params.min_contrast {
        return Vec::new();
    }
    let threshold = params.min_contrast.max(params.relative_threshold * peak);

    let mask = GrayImage::from_fn(w, h, |x, y| {
        let c = contrast(region.get_pixel(x, y).0[0]);
        Luma([if c >= threshold { 255 } else { 0 }])
    });
    let labels = connected_components(&mask, Connectivity::Eight, Luma([0u8]));

    let mut comps: Vec<Option<Component>> = Vec::new();
    for (x, y, l) in labels.enumerate_pixels() {
        let l = l.0[0] as usize;
        if l == 0 {
            continue;
        }
        if comps.len() < l {
            comps.resize(l, None);
        }
        let c = contrast(region.get_pixel(x, y).0[0]);
        let slot = &mut comps[l - 1];
        match slot {
            Some(comp) => {
                comp.x0 = comp.x0.min(x);
                comp.y0 = comp.y0.min(y);
                comp.x1 = comp.x1.max(x + 1);
                comp.y1 = comp.y1.max(y + 1);
                comp.contrast_sum += c;
                comp.pixels += 1;
            }
            None => {
                *slot = Some(Component {
                    x0: x,
                    y0: y,
                    x1: x + 1,
                    y1: y + 1,
                    contrast_sum: c,
                    pixels: 1,
                })
            }
        }
    }
    let mut comps: Vec<Component> = comps.into_iter().flatten().collect();
    comps.sort_by_key(|c| (c.x0, c.y0));

    loop {
        let mut merged = false;
        'outer: for i in 0..comps.len() {
            for j in i + 1..comps.len() {
                if comps[i].adjacent(&comps[j], params) {
                    let other = comps.remove(j);
                    comps[i].merge(&other);
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            break;
        }
    }

    comps
        .into_iter()
        .filter(|c| {
            let (cw, ch) = ((c.x1 - c.x0) as f64, (c.y1 - c.y0) as f64);
            let aspect = cw / ch;
            aspect >= params.min_aspect
                && aspect <= params.max_aspect
                && ch >= params.min_height_fraction * h as f64
        })
        .map(|c| PatchCandidate {
            bbox: BoundingBox {
                x_min: c.x0 as f64,
                y_min: c.y0 as f64,
                x_max: c.x1 as f64,
                y_max: c.y1 as f64,
            },
            contrast: c.contrast_sum / c.pixels as f64 / 255.0,
        })
        .collect()
}

/// Reads the digits left to right into a number.
///
/// Digits below `min_digit_conf` are skipped; the confidence is the product
/// of the kept digit confidences. Numbers outside the roster are returned with
/// their validity flag set accordingly.
pub fn assemble_number(
    patches: &[DigitPatch],
    roster: &NumberRoster,
    min_digit_conf: f64,
) -> Option<NumberReading> {
    let mut ordered: Vec<&DigitPatch> = patches.iter().collect();
    ordered.sort_by(|a, b| {
        a.bbox
            .x_min
            .total_cmp(&b.bbox.x_min)
            .then(a.bbox.y_min.total_cmp(&b.bbox.y_min))
            .then(a.bbox.x_max.total_cmp(&b.bbox.x_max))
            .then(a.bbox.y_max.total_cmp(&b.bbox.y_max))
            .then(a.predicted_digit.cmp(&b.predicted_digit))
            .then(a.confidence.total_cmp(&b.confidence))
    });
    let kept: Vec<&DigitPatch> = ordered
        .into_iter()
        .filter(|p| p.confidence >= min_digit_conf)
        .collect();
    if kept.is_empty() {
        return None;
    }
    let number: String = kept
        .iter()
        .map(|p| char::from(b'0' + p.predicted_digit))
        .collect();
    let confidence = kept.iter().map(|p| p.confidence).product();
    let validity = validate_number(&number, roster);
    Some(NumberReading {
        number,
        confidence,
        validity,
    })
}
