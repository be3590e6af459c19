//! Shared domain vocabulary: photos, detections, car annotations, embeddings,
//! wheel keypoints and user feedback.
//!
//! Every type here is a plain value object. Pixel coordinates are `f64` with
//! the origin at the top-left corner of the image they refer to.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measure::Measurement;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid bounding box ({x_min}, {y_min}, {x_max}, {y_max})")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("bounding box exceeds image bounds {width}x{height}")]
    OutOfBounds { width: f64, height: f64 },
    #[error("unknown orientation label `{0}`")]
    UnknownOrientation(String),
    #[error("unknown photo status `{0}`")]
    UnknownStatus(String),
    #[error("photo dimensions must be positive")]
    ZeroDimension,
    #[error("embedding has dimension {actual}, expected {expected}")]
    EmbeddingDimension { expected: usize, actual: usize },
    #[error("embedding contains non-finite values")]
    NonFiniteEmbedding,
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
}

/// A 2-D point in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned box in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    /// Builds a box, rejecting empty or non-finite extents.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, ModelError> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let finite = [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if finite && self.x_min < self.x_max && self.y_min < self.y_max {
            Ok(())
        } else {
            Err(ModelError::InvalidBox {
                x_min: self.x_min,
                y_min: self.y_min,
                x_max: self.x_max,
                y_max: self.y_max,
            })
        }
    }

    /// Validates the box and checks it lies inside `[0, width] x [0, height]`.
    pub fn validate_within(&self, width: f64, height: f64) -> Result<(), ModelError> {
        self.validate()?;
        if self.x_min < 0.0 || self.y_min < 0.0 || self.x_max > width || self.y_max > height {
            return Err(ModelError::OutOfBounds { width, height });
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn contains_point(&self, p: &Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn contains_box(&self, other: &BoundingBox) -> bool {
        other.x_min >= self.x_min
            && other.y_min >= self.y_min
            && other.x_max <= self.x_max
            && other.y_max <= self.y_max
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        if inter == 0.0 {
            return 0.0;
        }
        inter / (self.area() + other.area() - inter)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    /// Clips to `[0, width] x [0, height]`; `None` when nothing remains.
    pub fn clip(&self, width: f64, height: f64) -> Option<BoundingBox> {
        let b = BoundingBox {
            x_min: self.x_min.clamp(0.0, width),
            y_min: self.y_min.clamp(0.0, height),
            x_max: self.x_max.clamp(0.0, width),
            y_max: self.y_max.clamp(0.0, height),
        };
        b.validate().ok().map(|_| b)
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "snake_case")]
pub enum PhotoStatus {
    Pending,
    Processed,
    NoCar,
    Failed,
}

impl PhotoStatus {
    pub const ALL: [PhotoStatus; 4] = [
        PhotoStatus::Pending,
        PhotoStatus::Processed,
        PhotoStatus::NoCar,
        PhotoStatus::Failed,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PhotoStatus::Pending => "pending",
            PhotoStatus::Processed => "processed",
            PhotoStatus::NoCar => "no_car",
            PhotoStatus::Failed => "failed",
        }
    }
}

impl FromStr for PhotoStatus {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PhotoStatus::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| ModelError::UnknownStatus(s.to_string()))
    }
}

impl fmt::Display for PhotoStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum DetectionClass {
    Car,
    NumberPlateRegion,
    ManufacturerMark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub class_label: DetectionClass,
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: BoundingBox, class_label: DetectionClass, score: f64) -> Self {
        Self {
            bbox,
            class_label,
            score,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.bbox.validate()?;
        if !(0.0..=1.0).contains(&self.score) {
            return Err(ModelError::ScoreOutOfRange(self.score));
        }
        Ok(())
    }
}

/// One of the 8 canonical viewing directions of a car.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Front,
    FrontLeft,
    FrontRight,
    Rear,
    RearLeft,
    RearRight,
    Left,
    Right,
}

impl Orientation {
    /// Class order used by orientation probability vectors.
    pub const ALL: [Orientation; 8] = [
        Orientation::Front,
        Orientation::FrontLeft,
        Orientation::FrontRight,
        Orientation::Rear,
        Orientation::RearLeft,
        Orientation::RearRight,
        Orientation::Left,
        Orientation::Right,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Orientation::Front => "front",
            Orientation::FrontLeft => "front_left",
            Orientation::FrontRight => "front_right",
            Orientation::Rear => "rear",
            Orientation::RearLeft => "rear_left",
            Orientation::RearRight => "rear_right",
            Orientation::Left => "left",
            Orientation::Right => "right",
        }
    }

    pub fn index(&self) -> usize {
        Orientation::ALL
            .iter()
            .position(|o| o == self)
            .expect("orientation is listed in ALL")
    }

    pub fn from_index(i: usize) -> Option<Orientation> {
        Orientation::ALL.get(i).copied()
    }

    pub fn is_side_view(&self) -> bool {
        matches!(self, Orientation::Left | Orientation::Right)
    }
}

impl FromStr for Orientation {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Orientation::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| ModelError::UnknownOrientation(s.to_string()))
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A keypoint with its visibility flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

impl Keypoint {
    pub const fn visible(x: f64, y: f64) -> Self {
        Self { x, y, visible: true }
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// The six named wheel points predicted on a wheel crop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct WheelKeypoints {
    pub top: Keypoint,
    pub right: Keypoint,
    pub bottom: Keypoint,
    pub left: Keypoint,
    pub center: Keypoint,
    pub ground_contact: Keypoint,
}

impl WheelKeypoints {
    pub const NAMES: [&'static str; 6] = ["top", "right", "bottom", "left", "center", "ground_contact"];

    pub fn as_array(&self) -> [Keypoint; 6] {
        [
            self.top,
            self.right,
            self.bottom,
            self.left,
            self.center,
            self.ground_contact,
        ]
    }

    pub fn from_array(points: [Keypoint; 6]) -> Self {
        let [top, right, bottom, left, center, ground_contact] = points;
        Self {
            top,
            right,
            bottom,
            left,
            center,
            ground_contact,
        }
    }

    /// Applies `f` to every coordinate, keeping visibility flags.
    pub fn map_points(&self, f: impl Fn(Point) -> Point) -> Self {
        Self::from_array(self.as_array().map(|k| {
            let p = f(k.point());
            Keypoint {
                x: p.x,
                y: p.y,
                visible: k.visible,
            }
        }))
    }
}

/// Wheel geometry kept on an annotation for overlays, in photo coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct WheelAnnotation {
    pub wheel_box: BoundingBox,
    pub keypoints: WheelKeypoints,
}

/// Everything derived for one detected car.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CarAnnotation {
    pub car_box: BoundingBox,
    #[serde(default = "one")]
    pub car_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub number: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub number_confidence: Option<f64>,
    /// Set when `number` is not a valid roster entry.
    #[serde(default, skip_serializing_if = "is_false")]
    pub off_roster: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manufacturer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<Orientation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub team_assignment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_ref: Option<String>,
    #[serde(default)]
    pub measurements: Vec<Measurement>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wheels: Vec<WheelAnnotation>,
}

fn one() -> f64 {
    1.0
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl CarAnnotation {
    pub fn new(car_box: BoundingBox, car_score: f64) -> Self {
        Self {
            car_box,
            car_score,
            number: None,
            number_confidence: None,
            off_roster: false,
            manufacturer: None,
            orientation: None,
            team_assignment: None,
            embedding_ref: None,
            measurements: Vec::new(),
            wheels: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PhotoRecord {
    pub photo_id: String,
    pub event_id: String,
    pub uri: String,
    pub width_px: u32,
    pub height_px: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captured_at: Option<DateTime<Utc>>,
    pub status: PhotoStatus,
    #[serde(default)]
    pub annotations: Vec<CarAnnotation>,
}

impl PhotoRecord {
    pub fn pending(
        photo_id: impl Into<String>,
        event_id: impl Into<String>,
        uri: impl Into<String>,
        width_px: u32,
        height_px: u32,
    ) -> Result<Self, ModelError> {
        if width_px == 0 || height_px == 0 {
            return Err(ModelError::ZeroDimension);
        }
        Ok(Self {
            photo_id: photo_id.into(),
            event_id: event_id.into(),
            uri: uri.into(),
            width_px,
            height_px,
            captured_at: None,
            status: PhotoStatus::Pending,
            annotations: Vec::new(),
        })
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.width_px == 0 || self.height_px == 0 {
            return Err(ModelError::ZeroDimension);
        }
        let (w, h) = (self.width_px as f64, self.height_px as f64);
        for a in &self.annotations {
            a.car_box.validate_within(w, h)?;
        }
        Ok(())
    }
}

/// Feature vector describing a car's color scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Embedding {
    pub vector: Vec<f64>,
    pub source_photo: String,
}

impl Embedding {
    pub fn new(vector: Vec<f64>, source_photo: impl Into<String>) -> Self {
        Self {
            vector,
            source_photo: source_photo.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn validate(&self, dim: usize) -> Result<(), ModelError> {
        if self.vector.len() != dim {
            return Err(ModelError::EmbeddingDimension {
                expected: dim,
                actual: self.vector.len(),
            });
        }
        if self.vector.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteEmbedding);
        }
        Ok(())
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackReason {
    WrongNumber,
    WrongTeam,
    WrongOrientation,
    MissedCar,
    SpuriousCar,
    WrongMeasurement,
    Other,
}

impl FeedbackReason {
    pub const ALL: [FeedbackReason; 7] = [
        FeedbackReason::WrongNumber,
        FeedbackReason::WrongTeam,
        FeedbackReason::WrongOrientation,
        FeedbackReason::MissedCar,
        FeedbackReason::SpuriousCar,
        FeedbackReason::WrongMeasurement,
        FeedbackReason::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FeedbackReason::WrongNumber => "wrong_number",
            FeedbackReason::WrongTeam => "wrong_team",
            FeedbackReason::WrongOrientation => "wrong_orientation",
            FeedbackReason::MissedCar => "missed_car",
            FeedbackReason::SpuriousCar => "spurious_car",
            FeedbackReason::WrongMeasurement => "wrong_measurement",
            FeedbackReason::Other => "other",
        }
    }
}

/// A photo flagged by a user as wrongly analysed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FeedbackRecord {
    pub photo_id: String,
    pub submitted_at: DateTime<Utc>,
    pub reason: FeedbackReason,
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub exported_to_testset: bool,
}

impl FeedbackRecord {
    pub fn new(photo_id: impl Into<String>, reason: FeedbackReason, note: impl Into<String>) -> Self {
        Self {
            photo_id: photo_id.into(),
            submitted_at: Utc::now(),
            reason,
            note: note.into(),
            exported_to_testset: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum NumberValidity {
    Valid,
    OffRoster,
    Malformed,
}

/// The set of car numbers competing in a deployment.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(transparent)]
pub struct NumberRoster(BTreeSet<String>);

impl NumberRoster {
    pub fn new<I, S>(numbers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self(numbers.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, number: &str) -> bool {
        self.0.contains(number)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn validate(&self, candidate: &str) -> NumberValidity {
        validate_number(candidate, self)
    }
}

/// Classifies a candidate car number against the roster.
///
/// Numbers are 1-3 decimal digits; leading zeros are significant.
pub fn validate_number(candidate: &str, roster: &NumberRoster) -> NumberValidity {
    let well_formed = (1..=3).contains(&candidate.len()) && candidate.bytes().all(|b| b.is_ascii_digit());
    if !well_formed {
        NumberValidity::Malformed
    } else if roster.contains(candidate) {
        NumberValidity::Valid
    } else {
        NumberValidity::OffRoster
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn number_validation() {
        let roster = NumberRoster::new(["43", "11", "07"]);
        assert_eq!(validate_number("43", &roster), NumberValidity::Valid);
        assert_eq!(validate_number("", &roster), NumberValidity::Malformed);
        assert_eq!(
            validate_number("99", &NumberRoster::new(["43", "11"])),
            NumberValidity::OffRoster
        );
        assert_eq!(validate_number("07", &roster), NumberValidity::Valid);
        assert_eq!(validate_number("7", &roster), NumberValidity::OffRoster);
        assert_eq!(validate_number("1234", &roster), NumberValidity::Malformed);
        assert_eq!(validate_number("4a", &roster), NumberValidity::Malformed);
        assert_eq!(validate_number("٤٣", &roster), NumberValidity::Malformed);
    }

    #[test]
    fn orientation_strings_are_a_bijection() {
        let mut seen = BTreeSet::new();
        for o in Orientation::ALL {
            let s = o.to_string();
            assert!(seen.insert(s.clone()));
            assert_eq!(s.parse::<Orientation>().unwrap(), o);
            assert_eq!(Orientation::from_index(o.index()), Some(o));
            let json = serde_json::to_string(&o).unwrap();
            assert_eq!(json, format!("\"{s}\""));
        }
        assert_eq!(seen.len(), 8);
        assert!("front-right".parse::<Orientation>().is_err());
    }

    #[test]
    fn box_validation_and_iou() {
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, f64::NAN, 1.0).is_err());
        let a = BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let b = BoundingBox::new(5.0, 0.0, 15.0, 10.0).unwrap();
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
        assert_eq!(a.iou(&a), 1.0);
        assert!(a.validate_within(10.0, 10.0).is_ok());
        assert!(b.validate_within(10.0, 10.0).is_err());
        assert_eq!(b.clip(10.0, 10.0).unwrap().x_max, 10.0);
        assert!(b.translate(20.0, 0.0).clip(10.0, 10.0).is_none());
    }

    #[test]
    fn pending_photo_requires_positive_size() {
        assert_eq!(
            PhotoRecord::pending("p", "e", "p.png", 0, 10).unwrap_err(),
            ModelError::ZeroDimension
        );
    }

    #[test]
    fn detection_box_field_name() {
        let d = Detection::new(
            BoundingBox::new(1.0, 2.0, 3.0, 4.0).unwrap(),
            DetectionClass::NumberPlateRegion,
            0.5,
        );
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v["class_label"], "number_plate_region");
        assert_eq!(v["box"]["x_max"], 3.0);
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0..1000.0f64, 0.0..1000.0f64, 0.1..500.0f64, 0.1..500.0f64)
            .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, x + w, y + h).unwrap())
    }

    fn arb_keypoints() -> impl Strategy<Value = WheelKeypoints> {
        proptest::array::uniform6((-50.0..600.0f64, -50.0..600.0f64, any::<bool>()))
            .prop_map(|pts| WheelKeypoints::from_array(pts.map(|(x, y, visible)| Keypoint { x, y, visible })))
    }

    fn arb_annotation() -> impl Strategy<Value = CarAnnotation> {
        (
            arb_box(),
            0.0..=1.0f64,
            proptest::option::of("[0-9]{1,3}"),
            proptest::option::of(0.0..=1.0f64),
            any::<bool>(),
            proptest::option::of(0usize..8),
            proptest::option::of("[a-z]{3,8}"),
            proptest::collection::vec((arb_box(), arb_keypoints()), 0..3),
        )
            .prop_map(|(b, s, number, conf, off, o, team, wheels)| {
                let mut a = CarAnnotation::new(b, s);
                a.number = number;
                a.number_confidence = conf;
                a.off_roster = off;
                a.orientation = o.and_then(Orientation::from_index);
                a.manufacturer = team.clone();
                a.team_assignment = team;
                a.wheels = wheels
                    .into_iter()
                    .map(|(wheel_box, keypoints)| WheelAnnotation { wheel_box, keypoints })
                    .collect();
                a
            })
    }

    proptest! {
        #[test]
        fn photo_record_json_round_trip(
            id in "[a-z0-9_-]{1,12}",
            w in 1u32..5000,
            h in 1u32..5000,
            status in 0usize..4,
            anns in proptest::collection::vec(arb_annotation(), 0..4),
            ts in proptest::option::of(0i64..2_000_000_000),
        ) {
            let rec = PhotoRecord {
                photo_id: id.clone(),
                event_id: "ev".into(),
                uri: format!("{id}.png"),
                width_px: w,
                height_px: h,
                captured_at: ts.map(|t| DateTime::from_timestamp(t, 0).unwrap()),
                status: PhotoStatus::ALL[status],
                annotations: anns,
            };
            let json = serde_json::to_string(&rec).unwrap();
            let back: PhotoRecord = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back, rec);
        }

        #[test]
        fn feedback_and_embedding_round_trip(
            reason in 0usize..7,
            note in ".{0,20}",
            v in proptest::collection::vec(-1e3..1e3f64, 1..16),
        ) {
            let fb = FeedbackRecord {
                photo_id: "p1".into(),
                submitted_at: DateTime::from_timestamp(1_700_000_000, 123_000_000).unwrap(),
                reason: FeedbackReason::ALL[reason],
                note,
                exported_to_testset: reason % 2 == 0,
            };
            let back: FeedbackRecord = serde_json::from_str(&serde_json::to_string(&fb).unwrap()).unwrap();
            prop_assert_eq!(back, fb);
            let e = Embedding::new(v, "p1");
            let back: Embedding = serde_json::from_str(&serde_json::to_string(&e).unwrap()).unwrap();
            prop_assert_eq!(back, e);
        }
    }
}
