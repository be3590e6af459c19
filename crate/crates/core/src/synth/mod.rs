//! Seeded synthetic race events: scene sidecars, optional rendered images,
//! the number roster and injected feedback.
//!
//! Every quantity the tests check is bookkept exactly: the number of no-car
//! photos is `round(photos * no_car_fraction)`, the number of photos with
//! feedback is `round(photos * feedback_fraction)`, and every side-view car
//! records its physical wheel separation.

mod render;

use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::default_manufacturers;
use crate::inference::sidecar::{
    DigitGlyph, EmbeddingSpace, MeasurementTruth, NoiseControls, SceneSidecar, SidecarError, SyntheticCar,
    SyntheticWheel,
};
use crate::inference::stream_seed;
use crate::measure::DEFAULT_KNOWN_RADIUS_MM;
use crate::model::{BoundingBox, FeedbackReason, NumberRoster, Orientation, Point};

pub use render::render_scene;

pub const GLYPH_WIDTH: u32 = 26;
pub const GLYPH_HEIGHT: u32 = 44;
pub const GLYPH_GAP: u32 = 8;
pub const PLATE_HEIGHT: u32 = 60;
const PLATE_MARGIN: u32 = 8;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error(transparent)]
    Sidecar(#[from] SidecarError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("render {path}: {reason}")]
    Render { path: std::path::PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub event_id: String,
    pub photos: usize,
    pub teams: usize,
    pub seed: u64,
    pub no_car_fraction: f64,
    pub feedback_fraction: f64,
    /// Share of cars whose number is not readable.
    pub hidden_number_fraction: f64,
    /// Share of wheels whose ground contact is hidden.
    pub hidden_ground_fraction: f64,
    pub max_cars_per_photo: usize,
    pub width_px: u32,
    pub height_px: u32,
    pub manufacturers: Vec<String>,
    pub known_radius_mm: f64,
    pub embedding_dim: usize,
    pub inter_team_distance: f64,
    pub noise: NoiseControls,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            event_id: "synthetic".into(),
            photos: 100,
            teams: 20,
            seed: 0,
            no_car_fraction: 0.01,
            feedback_fraction: 0.01,
            hidden_number_fraction: 0.1,
            hidden_ground_fraction: 0.1,
            max_cars_per_photo: 3,
            width_px: 1280,
            height_px: 720,
            manufacturers: default_manufacturers(),
            known_radius_mm: DEFAULT_KNOWN_RADIUS_MM,
            embedding_dim: 256,
            inter_team_distance: 0.8,
            noise: NoiseControls::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamSpec {
    pub team_id: String,
    pub slot: usize,
    pub manufacturer: String,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFeedback {
    pub photo_id: String,
    pub reason: FeedbackReason,
    #[serde(default)]
    pub note: String,
}

/// Generator bookkeeping, written as `synth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config: SynthConfig,
    pub photos: Vec<String>,
    pub no_car_photos: Vec<String>,
    pub feedback_photos: Vec<String>,
    pub teams: Vec<TeamSpec>,
    pub rendered: bool,
}

#[derive(Debug, Clone)]
pub struct SyntheticEvent {
    pub scenes: Vec<SceneSidecar>,
    pub roster: NumberRoster,
    pub feedback: Vec<SyntheticFeedback>,
    pub manifest: SynthManifest,
}

pub fn photo_id(index: usize) -> String {
    format!("p{index:05}")
}

fn round_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).min(n)
}

fn rng_for(seed: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, &[b"synth", tag.as_bytes()]))
}

fn choose_subset(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut picked = idx[..k].to_vec();
    picked.sort();
    picked
}

fn make_teams(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<TeamSpec> {
    let mut numbers: Vec<String> = Vec::with_capacity(config.teams);
    while numbers.len() < config.teams {
        let n = rng.random_range(1..1000u32).to_string();
        if !numbers.contains(&n) {
            numbers.push(n);
        }
    }
    numbers
        .into_iter()
        .enumerate()
        .map(|(slot, team_id)| TeamSpec {
            team_id,
            slot,
            manufacturer: config.manufacturers.choose(rng).expect("manufacturers").clone(),
            color: [rng.random_range(30..230), rng.random_range(30..230), rng.random_range(30..230)],
        })
        .collect()
}

fn ibox(x0: u32, y0: u32, x1: u32, y1: u32) -> BoundingBox {
    BoundingBox {
        x_min: x0 as f64,
        y_min: y0 as f64,
        x_max: x1 as f64,
        y_max: y1 as f64,
    }
}

fn make_car(
    config: &SynthConfig,
    team: &TeamSpec,
    slot: (u32, u32),
    rng: &mut ChaCha8Rng,
) -> SyntheticCar {
    let (slot_x, slot_w) = slot;
    let h = config.height_px;
    let cw = ((slot_w as f64 * rng.random_range(0.75..0.95)) as u32).min(560);
    let ch = rng.random_range(230..=280u32).min(h - 20);
    let x0 = slot_x + rng.random_range(0..=(slot_w - cw));
    let y0 = rng.random_range(10..=(h - ch - 10));
    let car_box = ibox(x0, y0, x0 + cw, y0 + ch);

    let orientation = *Orientation::ALL.choose(rng).expect("orientations");
    let hidden = rng.random_bool(config.hidden_number_fraction.clamp(0.0, 1.0));
    let (number_region, glyphs) = if hidden {
        (None, Vec::new())
    } else {
        let digits: Vec<u8> = team.team_id.bytes().map(|b| b - b'0').collect();
        let n = digits.len() as u32;
        let pw = 2 * PLATE_MARGIN + n * GLYPH_WIDTH + (n - 1) * GLYPH_GAP;
        let px = x0 + cw / 3 - pw / 2;
        let py = y0 + 16;
        let gy = py + (PLATE_HEIGHT - GLYPH_HEIGHT) / 2;
        let glyphs = digits
            .iter()
            .enumerate()
            .map(|(i, &digit)| {
                let gx = px + PLATE_MARGIN + i as u32 * (GLYPH_WIDTH + GLYPH_GAP);
                DigitGlyph {
                    bbox: ibox(gx, gy, gx + GLYPH_WIDTH, gy + GLYPH_HEIGHT),
                    digit,
                }
            })
            .collect();
        (Some(ibox(px, py, px + pw, py + PLATE_HEIGHT)), glyphs)
    };
    let manufacturer_mark = Some(ibox(x0 + cw - 76, y0 + 24, x0 + cw - 16, y0 + 48));

    let mut wheels = Vec::new();
    let mut truth = None;
    if orientation.is_side_view() {
        let r = rng.random_range(30..=50u32) as f64;
        let tire = 1.4 * r;
        let cy = (y0 + ch) as f64 - tire - 2.0;
        let cx0 = x0 as f64 + tire + 12.0;
        let cx1 = (x0 + cw) as f64 - tire - 12.0;
        for cx in [cx0, cx1] {
            wheels.push(SyntheticWheel {
                center: Point::new(cx, cy),
                disk_radius: r,
                tire_radius: tire,
                ground_visible: !rng.random_bool(config.hidden_ground_fraction.clamp(0.0, 1.0)),
            });
        }
        let sep_mm = (cx1 - cx0) * config.known_radius_mm / r;
        truth = Some(MeasurementTruth {
            center_line_mm: sep_mm,
            ground_line_mm: wheels.iter().all(|w| w.ground_visible).then_some(sep_mm),
        });
    }

    SyntheticCar {
        car_box,
        number: Some(team.team_id.clone()),
        number_region,
        glyphs,
        manufacturer: team.manufacturer.clone(),
        manufacturer_mark,
        orientation,
        team: team.team_id.clone(),
        team_slot: team.slot,
        color: team.color,
        wheels,
        truth,
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.into()));
        if self.teams == 0 || self.teams > 999 {
            return bad("teams must be in 1..=999");
        }
        if self.teams + 1 >= self.embedding_dim {
            return bad("embedding_dim must exceed teams + 1");
        }
        for f in [self.no_car_fraction, self.feedback_fraction, self.hidden_number_fraction, self.hidden_ground_fraction] {
            if !(0.0..=1.0).contains(&f) {
                return bad("fractions must be in [0, 1]");
            }
        }
        if !(0.0..=1.0).contains(&self.inter_team_distance) {
            return bad("inter_team_distance must be in [0, 1]");
        }
        if self.max_cars_per_photo == 0 || self.max_cars_per_photo > 4 {
            return bad("max_cars_per_photo must be in 1..=4");
        }
        if self.width_px < 320 * self.max_cars_per_photo as u32 || self.height_px < 300 {
            return bad("photo too small for the requested cars");
        }
        if self.manufacturers.is_empty() {
            return bad("no manufacturers");
        }
        Ok(())
    }
}

pub fn generate(config: &SynthConfig) -> Result<SyntheticEvent, SynthError> {
    config.validate()?;
    let n = config.photos;
    let teams = make_teams(config, &mut rng_for(config.seed, "teams"));
    let no_car: Vec<usize> = choose_subset(n, round_count(n, config.no_car_fraction), &mut rng_for(config.seed, "no-car"));
    let with_feedback: Vec<usize> =
        choose_subset(n, round_count(n, config.feedback_fraction), &mut rng_for(config.seed, "feedback"));
    let space = EmbeddingSpace {
        dim: config.embedding_dim,
        inter_team_distance: config.inter_team_distance,
        seed: config.seed,
    };

    let mut scenes = Vec::with_capacity(n);
    for i in 0..n {
        let id = photo_id(i);
        let mut rng = rng_for(config.seed, &id);
        let mut cars = Vec::new();
        if no_car.binary_search(&i).is_err() {
            let k = rng.random_range(1..=config.max_cars_per_photo);
            let slot_w = config.width_px / k as u32;
            for s in 0..k {
                let team = teams.choose(&mut rng).expect("teams");
                cars.push(make_car(config, team, (s as u32 * slot_w, slot_w), &mut rng));
            }
        }
        let mut noise = config.noise;
        noise.seed = stream_seed(config.noise.seed, &[id.as_bytes()]);
        let scene = SceneSidecar {
            photo_id: id,
            width_px: config.width_px,
            height_px: config.height_px,
            cars,
            noise,
            embedding_space: space,
        };
        scene.validate()?;
        scenes.push(scene);
    }

    let mut fb_rng = rng_for(config.seed, "feedback-reasons");
    let feedback = with_feedback
        .iter()
        .map(|&i| SyntheticFeedback {
            photo_id: photo_id(i),
            reason: *FeedbackReason::ALL.choose(&mut fb_rng).expect("reasons"),
            note: "synthetic".into(),
        })
        .collect();

    let roster = NumberRoster::new(teams.iter().map(|t| t.team_id.clone()));
    let manifest = SynthManifest {
        config: config.clone(),
        photos: scenes.iter().map(|s| s.photo_id.clone()).collect(),
        no_car_photos: no_car.iter().map(|&i| photo_id(i)).collect(),
        feedback_photos: with_feedback.iter().map(|&i| photo_id(i)).collect(),
        teams,
        rendered: false,
    };
    Ok(SyntheticEvent {
        scenes,
        roster,
        feedback,
        manifest,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SynthError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text).map_err(|source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl SyntheticEvent {
    /// Writes `<id>.scene.json` (and `<id>.png` when rendering) per photo,
    /// plus `roster.json`, `feedback.json` and `synth.json`.
    pub fn write(&mut self, dir: &Path, render: bool) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir).map_err(|source| SynthError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        for scene in &self.scenes {
            scene.save(&dir.join(format!("{}.{}", scene.photo_id, crate::inference::sidecar::SIDECAR_EXTENSION)))?;
            if render {
                let path = dir.join(format!("{}.png", scene.photo_id));
                render_scene(scene).save(&path).map_err(|e| SynthError::Render {
                    path: path.clone(),
                    reason: e.to_string(),
                })?;
            }
        }
        self.manifest.rendered = render;
        write_json(&dir.join("roster.json"), &self.roster)?;
        write_json(&dir.join("feedback.json"), &self.feedback)?;
        write_json(&dir.join("synth.json"), &self.manifest)?;
        Ok(())
    }
}
