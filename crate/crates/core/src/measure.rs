//! Wheel-disk calibrated measurements on side-view cars.
//!
//! The disk radius in pixels is estimated from the four rim keypoints, turned
//! into a millimetres-per-pixel scale with the known physical radius, and used
//! to measure the line through both disk centers and the line through both
//! ground contact points.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BoundingBox, Keypoint, Orientation, Point, WheelKeypoints};

/// 7.5 inches.
pub const DEFAULT_KNOWN_RADIUS_MM: f64 = 190.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("keypoint `{0}` is not visible")]
    MissingKeypoint(&'static str),
    #[error("degenerate wheel: radius {radius_px} px")]
    DegenerateWheel { radius_px: f64 },
    #[error("orientation {0} is not eligible for measurement")]
    NotSideView(Orientation),
    #[error("need at least two wheels, got {0}")]
    TooFewWheels(usize),
    #[error("wheel scales disagree: {first} vs {second} mm/px")]
    InconsistentScale { first: f64, second: f64 },
    #[error("known radius must be positive, got {0}")]
    InvalidKnownRadius(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    CenterLine,
    GroundLine,
    PointPair,
}

/// A calibrated distance between two photo points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Measurement {
    pub kind: MeasurementKind,
    pub length_mm: f64,
    pub length_px: f64,
    pub scale_mm_per_px: f64,
    pub wheel_ids: [usize; 2],
    /// Line end points in photo coordinates.
    pub endpoints: [Point; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct MeasurementConfig {
    pub known_radius_mm: f64,
    pub min_radius_px: f64,
    /// Maximum relative difference between the two wheel scales.
    pub scale_tolerance: f64,
    pub eligible_orientations: Vec<Orientation>,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            known_radius_mm: DEFAULT_KNOWN_RADIUS_MM,
            min_radius_px: 1.0,
            scale_tolerance: 0.10,
            eligible_orientations: vec![Orientation::Left, Orientation::Right],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusEstimate {
    pub radius_px: f64,
    /// `(max - min) / mean` over the four center-to-rim distances.
    pub spread: f64,
}

/// Mean distance from the disk center to the four rim points.
pub fn disk_radius_px(kp: &WheelKeypoints) -> Result<RadiusEstimate, MeasureError> {
    let named = [
        ("center", kp.center),
        ("top", kp.top),
        ("right", kp.right),
        ("bottom", kp.bottom),
        ("left", kp.left),
    ];
    if let Some((name, _)) = named.iter().find(|(_, k)| !k.visible) {
        return Err(MeasureError::MissingKeypoint(name));
    }
    let c = kp.center.point();
    let d = [kp.top, kp.right, kp.bottom, kp.left].map(|k| c.distance(&k.point()));
    let mean = d.iter().sum::<f64>() / 4.0;
    if !(mean > 0.0) {
        return Err(MeasureError::DegenerateWheel { radius_px: mean });
    }
    let max = d.iter().cloned().fold(f64::MIN, f64::max);
    let min = d.iter().cloned().fold(f64::MAX, f64::min);
    Ok(RadiusEstimate {
        radius_px: mean,
        spread: (max - min) / mean,
    })
}

/// Millimetres per pixel given the measured and the physical disk radius.
pub fn calibrate_scale(
    radius_px: f64,
    known_radius_mm: f64,
    min_radius_px: f64,
) -> Result<f64, MeasureError> {
    if !(known_radius_mm > 0.0) {
        return Err(MeasureError::InvalidKnownRadius(known_radius_mm));
    }
    if !(radius_px > min_radius_px.max(0.0)) {
        return Err(MeasureError::DegenerateWheel { radius_px });
    }
    Ok(known_radius_mm / radius_px)
}

/// Keypoints predicted on one wheel crop.
#[derive(Debug, Clone, PartialEq)]
pub struct WheelObservation {
    /// Wheel box in photo coordinates.
    pub wheel_box: BoundingBox,
    /// The crop the keypoints were predicted on, in photo coordinates.
    pub crop: BoundingBox,
    /// Crop-local keypoints.
    pub keypoints: WheelKeypoints,
}

impl WheelObservation {
    pub fn to_photo(&self, p: Point) -> Point {
        Point::new(p.x + self.crop.x_min, p.y + self.crop.y_min)
    }

    pub fn keypoints_in_photo(&self) -> WheelKeypoints {
        self.keypoints.map_points(|p| self.to_photo(p))
    }

    /// True when the ground contact is unavailable on this crop.
    pub fn ground_missing(&self) -> bool {
        is_ground_sentinel(&self.keypoints.ground_contact, self.crop.width())
    }
}

/// Unavailable ground contacts are encoded as `(crop_width / 2, 0)`.
pub fn is_ground_sentinel(kp: &Keypoint, crop_width: f64) -> bool {
    if !kp.visible {
        return true;
    }
    (kp.x - crop_width / 2.0).abs() < 1e-9 && kp.y.abs() < 1e-9
}

/// A calibrated distance between two arbitrary photo points.
pub fn measure_points(a: Point, b: Point, scale_mm_per_px: f64) -> Measurement {
    let length_px = a.distance(&b);
    Measurement {
        kind: MeasurementKind::PointPair,
        length_mm: length_px * scale_mm_per_px,
        length_px,
        scale_mm_per_px,
        wheel_ids: [0, 0],
        endpoints: [a, b],
    }
}

/// Center-line and ground-line measurements for a side-view car.
///
/// The two largest wheel boxes are taken as the front/rear pair.
pub fn measure_car(
    wheels: &[WheelObservation],
    orientation: Orientation,
    config: &MeasurementConfig,
) -> Result<Vec<Measurement>, MeasureError> {
    if !config.eligible_orientations.contains(&orientation) {
        return Err(MeasureError::NotSideView(orientation));
    }
    if wheels.len() < 2 {
        return Err(MeasureError::TooFewWheels(wheels.len()));
    }

    let mut by_area: Vec<usize> = (0..wheels.len()).collect();
    by_area.sort_by(|&a, &b| {
        wheels[b]
            .wheel_box
            .area()
            .total_cmp(&wheels[a].wheel_box.area())
            .then(a.cmp(&b))
    });
    let mut pair = [by_area[0], by_area[1]];
    let cx = |i: usize| wheels[i].wheel_box.center().x;
    if cx(pair[1]) < cx(pair[0]) {
        pair.swap(0, 1);
    }

    let scales = pair.map(|i| {
        disk_radius_px(&wheels[i].keypoints).and_then(|r| {
            calibrate_scale(r.radius_px, config.known_radius_mm, config.min_radius_px)
        })
    });
    let [s0, s1] = [scales[0].clone()?, scales[1].clone()?];
    let scale = 0.5 * (s0 + s1);
    if (s0 - s1).abs() / scale > config.scale_tolerance {
        return Err(MeasureError::InconsistentScale {
            first: s0,
            second: s1,
        });
    }

    let (w0, w1) = (&wheels[pair[0]], &wheels[pair[1]]);
    let line = |kind, a: Point, b: Point| {
        let length_px = a.distance(&b);
        Measurement {
            kind,
            length_mm: length_px * scale,
            length_px,
            scale_mm_per_px: scale,
            wheel_ids: pair,
            endpoints: [a, b],
        }
    };

    let mut out = vec![line(
        MeasurementKind::CenterLine,
        w0.to_photo(w0.keypoints.center.point()),
        w1.to_photo(w1.keypoints.center.point()),
    )];
    if !w0.ground_missing() && !w1.ground_missing() {
        out.push(line(
            MeasurementKind::GroundLine,
            w0.to_photo(w0.keypoints.ground_contact.point()),
            w1.to_photo(w1.keypoints.ground_contact.point()),
        ));
    }
    Ok(out)
}
