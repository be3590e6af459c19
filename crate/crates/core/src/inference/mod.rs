//! Neural inference behind a provider interface.
//!
//! Every trained model the engine relies on is a [`Capability`] of an
//! [`InferenceProvider`]. Two providers ship: [`SyntheticProvider`], which
//! answers from per-photo ground-truth sidecars, and [`RemoteProvider`], which
//! forwards requests to a model server over HTTP/JSON. The pipeline talks to
//! providers through [`Gateway`], which enforces capability checks and the
//! output contracts (sorted and clipped detections, normalized
//! probabilities, embedding dimension).

mod pixels;
pub mod protocol;
mod remote;
mod seed;
pub mod sidecar;
mod synthetic;

use std::collections::BTreeSet;
use std::fmt;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BoundingBox, Detection, DetectionClass, Embedding, PhotoRecord, Point, WheelKeypoints};
use crate::number::PatchCandidate;

pub use pixels::{load_region_gray, photo_dimensions};
pub use remote::{RemoteProvider, RemoteSettings};
pub use seed::stream_seed;
pub use synthetic::{PatchSource, SyntheticProvider, SyntheticSettings};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("provider does not offer {0}")]
    ProviderUnavailable(Capability),
    #[error("provider unreachable: {0}")]
    Unreachable(String),
    #[error("cannot read image {uri}: {reason}")]
    UnreadableImage { uri: String, reason: String },
    #[error("invalid provider response: {0}")]
    InvalidResponse(String),
}

impl InferenceError {
    /// Errors after which the photo should stay pending for a retry.
    pub fn is_unavailable(&self) -> bool {
        matches!(
            self,
            InferenceError::ProviderUnavailable(_) | InferenceError::Unreachable(_)
        )
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    CarDetector,
    AttributeDetector,
    DigitClassifier,
    ManufacturerClassifier,
    OrientationClassifier,
    EmbeddingEncoder,
    WheelDetector,
    WheelKeypoints,
}

impl Capability {
    pub const ALL: [Capability; 8] = [
        Capability::CarDetector,
        Capability::AttributeDetector,
        Capability::DigitClassifier,
        Capability::ManufacturerClassifier,
        Capability::OrientationClassifier,
        Capability::EmbeddingEncoder,
        Capability::WheelDetector,
        Capability::WheelKeypoints,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Capability::CarDetector => "car_detector",
            Capability::AttributeDetector => "attribute_detector",
            Capability::DigitClassifier => "digit_classifier",
            Capability::ManufacturerClassifier => "manufacturer_classifier",
            Capability::OrientationClassifier => "orientation_classifier",
            Capability::EmbeddingEncoder => "embedding_encoder",
            Capability::WheelDetector => "wheel_detector",
            Capability::WheelKeypoints => "wheel_keypoints",
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub type CapabilitySet = BTreeSet<Capability>;

pub fn all_capabilities() -> CapabilitySet {
    Capability::ALL.into_iter().collect()
}

/// Input sizing and similar provider-side facts, for display only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ProviderMetadata {
    pub name: String,
    pub detector_input: [u32; 2],
    pub orientation_input: [u32; 2],
    pub keypoint_input: [u32; 2],
    pub embedding_dim: usize,
}

/// The photo an image region belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct PhotoRef {
    pub photo_id: String,
    pub uri: String,
    pub width_px: u32,
    pub height_px: u32,
}

impl From<&PhotoRecord> for PhotoRef {
    fn from(p: &PhotoRecord) -> Self {
        Self {
            photo_id: p.photo_id.clone(),
            uri: p.uri.clone(),
            width_px: p.width_px,
            height_px: p.height_px,
        }
    }
}

/// A rectangular view into a photo.
///
/// `rect` is in photo coordinates; "crop-local" coordinates have their origin
/// at the rect's top-left corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ImageRegion {
    pub photo: PhotoRef,
    pub rect: BoundingBox,
}

impl ImageRegion {
    /// The whole photo.
    pub fn full(photo: PhotoRef) -> Self {
        let rect = BoundingBox {
            x_min: 0.0,
            y_min: 0.0,
            x_max: photo.width_px as f64,
            y_max: photo.height_px as f64,
        };
        Self { photo, rect }
    }

    /// `bbox` (photo coordinates) grown by `pad_fraction` of its size on each
    /// side and clipped to the photo.
    pub fn around(photo: PhotoRef, bbox: &BoundingBox, pad_fraction: f64) -> Self {
        let (dx, dy) = (bbox.width() * pad_fraction, bbox.height() * pad_fraction);
        let grown = BoundingBox {
            x_min: bbox.x_min - dx,
            y_min: bbox.y_min - dy,
            x_max: bbox.x_max + dx,
            y_max: bbox.y_max + dy,
        };
        let rect = grown
            .clip(photo.width_px as f64, photo.height_px as f64)
            .unwrap_or(*bbox);
        Self { photo, rect }
    }

    /// A sub-region given by a box in this region's local coordinates.
    pub fn sub_region(&self, local: &BoundingBox, pad_fraction: f64) -> Self {
        Self::around(self.photo.clone(), &self.box_to_parent(local), pad_fraction)
    }

    pub fn width(&self) -> f64 {
        self.rect.width()
    }

    pub fn height(&self) -> f64 {
        self.rect.height()
    }

    pub fn to_parent(&self, p: Point) -> Point {
        Point::new(p.x + self.rect.x_min, p.y + self.rect.y_min)
    }

    pub fn to_local(&self, p: Point) -> Point {
        Point::new(p.x - self.rect.x_min, p.y - self.rect.y_min)
    }

    pub fn box_to_parent(&self, b: &BoundingBox) -> BoundingBox {
        b.translate(self.rect.x_min, self.rect.y_min)
    }

    pub fn box_to_local(&self, b: &BoundingBox) -> BoundingBox {
        b.translate(-self.rect.x_min, -self.rect.y_min)
    }
}

/// A detected wheel, crop-local.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct WheelDetection {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub score: f64,
}

/// Raw model backend.
///
/// Implementations return boxes in the local coordinates of the region they
/// were given. Callers should go through [`Gateway`], which checks declared
/// capabilities before dispatching and validates outputs.
pub trait InferenceProvider: Send + Sync {
    fn capabilities(&self) -> CapabilitySet;

    fn metadata(&self) -> ProviderMetadata;

    /// Cheap reachability probe.
    fn check_available(&self) -> Result<(), InferenceError> {
        Ok(())
    }

    fn detect_cars(&self, photo: &ImageRegion) -> Result<Vec<Detection>, InferenceError>;

    fn detect_attributes(&self, crop: &ImageRegion) -> Result<Vec<Detection>, InferenceError>;

    /// Candidate single-digit boxes in a number region. Part of the digit
    /// classifier capability.
    fn propose_digit_patches(&self, region: &ImageRegion) -> Result<Vec<PatchCandidate>, InferenceError>;

    fn classify_digit(&self, patch: &ImageRegion) -> Result<Vec<f64>, InferenceError>;

    fn classify_manufacturer(&self, crop: &ImageRegion) -> Result<Vec<f64>, InferenceError>;

    fn classify_orientation(&self, crop: &ImageRegion) -> Result<Vec<f64>, InferenceError>;

    fn encode_embedding(&self, crop: &ImageRegion) -> Result<Embedding, InferenceError>;

    fn detect_wheels(&self, crop: &ImageRegion) -> Result<Vec<WheelDetection>, InferenceError>;

    fn predict_wheel_keypoints(&self, crop: &ImageRegion) -> Result<WheelKeypoints, InferenceError>;
}

/// Capability-checked, contract-enforcing front of a provider.
#[derive(Clone, Copy)]
pub struct Gateway<'a> {
    provider: &'a dyn InferenceProvider,
    embedding_dim: usize,
}

fn normalize(mut probs: Vec<f64>, classes: usize) -> Result<Vec<f64>, InferenceError> {
    if probs.len() != classes {
        return Err(InferenceError::InvalidResponse(format!(
            "expected {classes} probabilities, got {}",
            probs.len()
        )));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(InferenceError::InvalidResponse(
            "probabilities must be finite and non-negative".into(),
        ));
    }
    let sum: f64 = probs.iter().sum();
    if !(sum > 0.0) {
        return Err(InferenceError::InvalidResponse("probabilities sum to zero".into()));
    }
    if (sum - 1.0).abs() > 1e-12 {
        probs.iter_mut().for_each(|p| *p /= sum);
    }
    Ok(probs)
}

fn clip_sorted(mut dets: Vec<Detection>, region: &ImageRegion) -> Result<Vec<Detection>, InferenceError> {
    for d in &dets {
        if !(0.0..=1.0).contains(&d.score) {
            return Err(InferenceError::InvalidResponse(format!("score {} outside [0, 1]", d.score)));
        }
    }
    dets = dets
        .into_iter()
        .filter_map(|mut d| {
            d.bbox = d.bbox.clip(region.width(), region.height())?;
            Some(d)
        })
        .collect();
    dets.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(dets)
}

impl<'a> Gateway<'a> {
    pub fn new(provider: &'a dyn InferenceProvider, embedding_dim: usize) -> Self {
        Self {
            provider,
            embedding_dim,
        }
    }

    pub fn provider(&self) -> &'a dyn InferenceProvider {
        self.provider
    }

    pub fn require(&self, cap: Capability) -> Result<(), InferenceError> {
        if self.provider.capabilities().contains(&cap) {
            Ok(())
        } else {
            Err(InferenceError::ProviderUnavailable(cap))
        }
    }

    /// Car detections sorted by descending score, clipped to the photo.
    pub fn detect_cars(&self, photo: &ImageRegion) -> Result<Vec<Detection>, InferenceError> {
        self.require(Capability::CarDetector)?;
        let dets = self.provider.detect_cars(photo)?;
        let dets = dets.into_iter().filter(|d| d.class_label == DetectionClass::Car).collect();
        clip_sorted(dets, photo)
    }

    pub fn detect_attributes(&self, crop: &ImageRegion) -> Result<Vec<Detection>, InferenceError> {
        self.require(Capability::AttributeDetector)?;
        let dets = self.provider.detect_attributes(crop)?;
        let dets = dets
            .into_iter()
            .filter(|d| d.class_label != DetectionClass::Car)
            .collect();
        clip_sorted(dets, crop)
    }

    pub fn propose_digit_patches(&self, region: &ImageRegion) -> Result<Vec<PatchCandidate>, InferenceError> {
        self.require(Capability::DigitClassifier)?;
        self.provider.propose_digit_patches(region)
    }

    /// Ten probabilities summing to one.
    pub fn classify_digit(&self, patch: &ImageRegion) -> Result<Vec<f64>, InferenceError> {
        self.require(Capability::DigitClassifier)?;
        normalize(self.provider.classify_digit(patch)?, 10)
    }

    pub fn classify_manufacturer(&self, crop: &ImageRegion, classes: usize) -> Result<Vec<f64>, InferenceError> {
        self.require(Capability::ManufacturerClassifier)?;
        normalize(self.provider.classify_manufacturer(crop)?, classes)
    }

    /// Eight probabilities in [`crate::model::Orientation::ALL`] order.
    pub fn classify_orientation(&self, crop: &ImageRegion) -> Result<Vec<f64>, InferenceError> {
        self.require(Capability::OrientationClassifier)?;
        normalize(self.provider.classify_orientation(crop)?, 8)
    }

    pub fn encode_embedding(&self, crop: &ImageRegion) -> Result<Embedding, InferenceError> {
        self.require(Capability::EmbeddingEncoder)?;
        let e = self.provider.encode_embedding(crop)?;
        e.validate(self.embedding_dim)
            .map_err(|err| InferenceError::InvalidResponse(err.to_string()))?;
        Ok(e)
    }

    pub fn detect_wheels(&self, crop: &ImageRegion) -> Result<Vec<WheelDetection>, InferenceError> {
        self.require(Capability::WheelDetector)?;
        let mut wheels: Vec<WheelDetection> = self
            .provider
            .detect_wheels(crop)?
            .into_iter()
            .filter_map(|mut w| {
                w.bbox = w.bbox.clip(crop.width(), crop.height())?;
                Some(w)
            })
            .collect();
        wheels.sort_by(|a, b| b.score.total_cmp(&a.score));
        Ok(wheels)
    }

    pub fn predict_wheel_keypoints(&self, crop: &ImageRegion) -> Result<WheelKeypoints, InferenceError> {
        self.require(Capability::WheelKeypoints)?;
        let kp = self.provider.predict_wheel_keypoints(crop)?;
        if kp.as_array().iter().any(|k| !k.x.is_finite() || !k.y.is_finite()) {
            return Err(InferenceError::InvalidResponse("non-finite keypoint".into()));
        }
        Ok(kp)
    }
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(probs: &[f64]) -> Option<usize> {
    probs
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &p)| match best {
            Some((_, bp)) if bp >= p => best,
            _ => Some((i, p)),
        })
        .map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn photo(w: u32, h: u32) -> PhotoRef {
        PhotoRef {
            photo_id: "p".into(),
            uri: "p.png".into(),
            width_px: w,
            height_px: h,
        }
    }

    #[test]
    fn region_padding_and_clipping() {
        let b = BoundingBox::new(10.0, 10.0, 20.0, 20.0).unwrap();
        assert_eq!(ImageRegion::around(photo(100, 100), &b, 0.0).rect, b);
        let b = BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        assert_eq!(
            ImageRegion::around(photo(100, 100), &b, 0.5).rect,
            BoundingBox::new(0.0, 0.0, 15.0, 15.0).unwrap()
        );
    }

    #[test]
    fn local_parent_round_trip() {
        let b = BoundingBox::new(13.5, 7.25, 80.0, 60.0).unwrap();
        let r = ImageRegion::around(photo(100, 100), &b, 0.1);
        let p = Point::new(3.0, 4.5);
        assert_eq!(r.to_local(r.to_parent(p)), p);
        let sub = r.sub_region(&BoundingBox::new(1.0, 1.0, 5.0, 5.0).unwrap(), 0.0);
        assert_eq!(sub.rect.x_min, r.rect.x_min + 1.0);
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn normalization_contract() {
        let p = normalize(vec![2.0, 2.0], 2).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        assert!(normalize(vec![0.0, 0.0], 2).is_err());
        assert!(normalize(vec![-1.0, 2.0], 2).is_err());
        assert!(normalize(vec![1.0], 2).is_err());
    }
}
