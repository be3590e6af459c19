//! Per-photo ground truth read by the synthetic provider.
//!
//! A sidecar lives next to its photo with the same basename and the
//! extension `.scene.json`.

use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BoundingBox, ModelError, Orientation, Point};

pub const SIDECAR_EXTENSION: &str = "scene.json";

#[derive(Debug, Error)]
pub enum SidecarError {
    #[error("sidecar {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("sidecar {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid scene: {0}")]
    Invalid(String),
}

impl From<ModelError> for SidecarError {
    fn from(e: ModelError) -> Self {
        SidecarError::Invalid(e.to_string())
    }
}

/// Noise knobs applied by the synthetic provider. All zero means exact echo.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct NoiseControls {
    pub seed: u64,
    /// Scores and winning-class probabilities drop by up to this amount.
    pub score_jitter: f64,
    /// Each detection is independently dropped with this probability.
    pub dropout_probability: f64,
    /// Maximum norm of the noise added to team embeddings.
    pub embedding_noise: f64,
    /// Standard deviation, in pixels, of keypoint noise.
    pub keypoint_noise: f64,
}

/// How team embeddings are laid out.
///
/// Team `slot` maps to `sqrt(d) * b[slot + 1] + sqrt(1 - d) * b[0]` for a
/// seeded orthonormal basis `b`, so any two different teams sit at cosine
/// distance exactly `d = inter_team_distance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct EmbeddingSpace {
    pub dim: usize,
    pub inter_team_distance: f64,
    pub seed: u64,
}

impl Default for EmbeddingSpace {
    fn default() -> Self {
        Self {
            dim: 256,
            inter_team_distance: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DigitGlyph {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub digit: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SyntheticWheel {
    pub center: Point,
    pub disk_radius: f64,
    pub tire_radius: f64,
    #[serde(default = "yes")]
    pub ground_visible: bool,
}

fn yes() -> bool {
    true
}

impl SyntheticWheel {
    /// The tire's bounding box.
    pub fn bbox(&self) -> BoundingBox {
        BoundingBox {
            x_min: self.center.x - self.tire_radius,
            y_min: self.center.y - self.tire_radius,
            x_max: self.center.x + self.tire_radius,
            y_max: self.center.y + self.tire_radius,
        }
    }

    pub fn ground_contact(&self) -> Point {
        Point::new(self.center.x, self.center.y + self.tire_radius)
    }
}

/// Physical distances the generator built into a car.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MeasurementTruth {
    pub center_line_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_line_mm: Option<f64>,
}

/// One synthetic car; all boxes are in photo coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SyntheticCar {
    pub car_box: BoundingBox,
    #[serde(default)]
    pub number: Option<String>,
    #[serde(default)]
    pub number_region: Option<BoundingBox>,
    #[serde(default)]
    pub glyphs: Vec<DigitGlyph>,
    pub manufacturer: String,
    #[serde(default)]
    pub manufacturer_mark: Option<BoundingBox>,
    pub orientation: Orientation,
    pub team: String,
    pub team_slot: usize,
    /// RGB body color used by the renderer.
    #[serde(default)]
    pub color: [u8; 3],
    #[serde(default)]
    pub wheels: Vec<SyntheticWheel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<MeasurementTruth>,
}

impl SyntheticCar {
    /// Number actually readable in the photo.
    pub fn visible_number(&self) -> Option<&str> {
        match (&self.number, &self.number_region, self.glyphs.is_empty()) {
            (Some(n), Some(_), false) => Some(n.as_str()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SceneSidecar {
    pub photo_id: String,
    pub width_px: u32,
    pub height_px: u32,
    #[serde(default)]
    pub cars: Vec<SyntheticCar>,
    #[serde(default)]
    pub noise: NoiseControls,
    #[serde(default)]
    pub embedding_space: EmbeddingSpace,
}

impl SceneSidecar {
    /// Geometric sanity: everything inside the photo, glyphs inside their
    /// number region, wheels with positive radii.
    pub fn validate(&self) -> Result<(), SidecarError> {
        let (w, h) = (self.width_px as f64, self.height_px as f64);
        if self.width_px == 0 || self.height_px == 0 {
            return Err(SidecarError::Invalid("zero photo size".into()));
        }
        if !(0.0..=1.0).contains(&self.noise.dropout_probability) {
            return Err(SidecarError::Invalid("dropout probability outside [0, 1]".into()));
        }
        for (i, car) in self.cars.iter().enumerate() {
            car.car_box.validate_within(w, h)?;
            if let Some(region) = &car.number_region {
                region.validate_within(w, h)?;
                if !car.car_box.contains_box(region) {
                    return Err(SidecarError::Invalid(format!("car {i}: number region outside car")));
                }
                if car.glyphs.iter().any(|g| !region.contains_box(&g.bbox) || g.digit > 9) {
                    return Err(SidecarError::Invalid(format!("car {i}: bad glyph")));
                }
            }
            if let Some(mark) = &car.manufacturer_mark {
                mark.validate_within(w, h)?;
            }
            for wheel in &car.wheels {
                if !(wheel.disk_radius > 0.0 && wheel.tire_radius >= wheel.disk_radius) {
                    return Err(SidecarError::Invalid(format!("car {i}: bad wheel radii")));
                }
                wheel.bbox().validate_within(w, h)?;
            }
            if car.team_slot + 1 >= self.embedding_space.dim && !self.cars.is_empty() {
                return Err(SidecarError::Invalid(format!(
                    "car {i}: team slot {} does not fit embedding dim {}",
                    car.team_slot, self.embedding_space.dim
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SidecarError> {
        let text = std::fs::read_to_string(path).map_err(|source| SidecarError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let scene: SceneSidecar = serde_json::from_str(&text).map_err(|source| SidecarError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn save(&self, path: &Path) -> Result<(), SidecarError> {
        let text = serde_json::to_string_pretty(self).expect("scene serializes");
        std::fs::write(path, text).map_err(|source| SidecarError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// `dir/p001.png` -> `dir/p001.scene.json`.
pub fn sidecar_path(image_uri: &str) -> PathBuf {
    let p = Path::new(image_uri);
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    p.with_file_name(format!("{stem}.{SIDECAR_EXTENSION}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_path_replaces_extension() {
        assert_eq!(sidecar_path("a/b/p001.png"), PathBuf::from("a/b/p001.scene.json"));
        assert_eq!(sidecar_path("p001"), PathBuf::from("p001.scene.json"));
    }

    #[test]
    fn wheel_geometry() {
        let w = SyntheticWheel {
            center: Point::new(100.0, 50.0),
            disk_radius: 20.0,
            tire_radius: 30.0,
            ground_visible: true,
        };
        assert_eq!(w.bbox(), BoundingBox::new(70.0, 20.0, 130.0, 80.0).unwrap());
        assert_eq!(w.ground_contact(), Point::new(100.0, 80.0));
    }
}
