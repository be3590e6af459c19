//! Deployment configuration shared by the CLI and the HTTP service.
//!
//! Loaded from TOML; every section and field has a default. A handful of
//! settings can be overridden from the environment (see [`Config::apply_env`]).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{
    all_capabilities, InferenceProvider, PatchSource, RemoteProvider, RemoteSettings,
    SyntheticProvider, SyntheticSettings,
};
use crate::measure::MeasurementConfig;
use crate::model::NumberRoster;
use crate::team::TeamConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("environment variable {name}: {reason}")]
    Env { name: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("roster {path}: {reason}")]
    Roster { path: PathBuf, reason: String },
}

pub fn default_manufacturers() -> Vec<String> {
    ["chevrolet", "ford", "toyota", "dodge"].map(String::from).to_vec()
}

/// Which crop the manufacturer classifier sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManufacturerSource {
    /// The detected brand mark, or the whole car when no mark was found.
    #[default]
    BrandMark,
    CarCrop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stages {
    pub number: bool,
    pub manufacturer: bool,
    pub orientation: bool,
    pub team: bool,
    pub measurement: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Self {
            number: true,
            manufacturer: true,
            orientation: true,
            team: true,
            measurement: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub car_threshold: f64,
    pub attribute_threshold: f64,
    pub wheel_threshold: f64,
    pub min_digit_confidence: f64,
    /// Crop padding as a fraction of the box size on each side.
    pub pad_fraction: f64,
    pub wheel_pad_fraction: f64,
    pub embedding_dim: usize,
    pub manufacturers: Vec<String>,
    pub manufacturer_source: ManufacturerSource,
    pub stages: Stages,
    pub team: TeamConfig,
    pub measurement: MeasurementConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            car_threshold: 0.5,
            attribute_threshold: 0.5,
            wheel_threshold: 0.5,
            min_digit_confidence: 0.5,
            pad_fraction: 0.05,
            wheel_pad_fraction: 0.1,
            embedding_dim: 256,
            manufacturers: default_manufacturers(),
            manufacturer_source: ManufacturerSource::BrandMark,
            stages: Stages::default(),
            team: TeamConfig::default(),
            measurement: MeasurementConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("car_threshold", self.car_threshold),
            ("attribute_threshold", self.attribute_threshold),
            ("wheel_threshold", self.wheel_threshold),
            ("min_digit_confidence", self.min_digit_confidence),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::Invalid(format!("{name} must be in [0, 1]")));
            }
        }
        if !(self.pad_fraction >= 0.0 && self.wheel_pad_fraction >= 0.0) {
            return Err(ConfigError::Invalid("pad fractions must be non-negative".into()));
        }
        if self.embedding_dim == 0 {
            return Err(ConfigError::Invalid("embedding_dim must be positive".into()));
        }
        if self.manufacturers.is_empty() {
            return Err(ConfigError::Invalid("at least one manufacturer label is required".into()));
        }
        if self.team.reference_threshold == 0 {
            return Err(ConfigError::Invalid("team.reference_threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    Synthetic {
        #[serde(default)]
        patch_source: PatchSource,
        #[serde(default)]
        seed: u64,
    },
    Remote(RemoteSettings),
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::Synthetic {
            patch_source: PatchSource::Sidecar,
            seed: 0,
        }
    }
}

impl ProviderConfig {
    pub fn build(&self, manufacturers: &[String]) -> Result<Box<dyn InferenceProvider>, crate::inference::InferenceError> {
        Ok(match self {
            ProviderConfig::Synthetic { patch_source, seed } => {
                Box::new(SyntheticProvider::new(SyntheticSettings {
                    manufacturers: manufacturers.to_vec(),
                    patch_source: *patch_source,
                    seed: *seed,
                    capabilities: all_capabilities(),
                }))
            }
            ProviderConfig::Remote(settings) => Box::new(RemoteProvider::new(settings.clone())?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoreConfig {
    File {
        path: PathBuf,
        #[serde(default = "yes")]
        fsync: bool,
    },
    /// CouchDB-compatible document database.
    Couch { url: String, database: String },
}

fn yes() -> bool {
    true
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig::File {
            path: PathBuf::from("racelens-data"),
            fsync: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApiConfig {
    pub host: String,
    pub port: u16,
    /// Static bearer token; no authentication when unset.
    pub token: Option<String>,
    /// Where multipart uploads are written. Defaults to `uploads` under a
    /// file store, else `racelens-uploads`.
    pub upload_dir: Option<PathBuf>,
}

impl Default for ApiConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            token: None,
            upload_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub pipeline: PipelineConfig,
    pub provider: ProviderConfig,
    pub store: StoreConfig,
    pub api: ApiConfig,
    /// JSON array of valid numbers. Without it every well-formed number is
    /// reported off roster.
    pub roster: Option<PathBuf>,
    pub workers: usize,
}

impl Config {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        config.pipeline.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    /// Applies `RACELENS_PORT`, `RACELENS_PROVIDER_ENDPOINT`,
    /// `RACELENS_STORE_PATH` and `RACELENS_TOKEN`.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        for (k, v) in vars {
            let v: String = v.into();
            match k.as_ref() {
                "RACELENS_PORT" => {
                    self.api.port = v.parse().map_err(|_| ConfigError::Env {
                        name: "RACELENS_PORT".into(),
                        reason: format!("not a port: {v}"),
                    })?
                }
                "RACELENS_PROVIDER_ENDPOINT" => match &mut self.provider {
                    ProviderConfig::Remote(s) => s.endpoint = v,
                    other => {
                        *other = ProviderConfig::Remote(RemoteSettings {
                            endpoint: v,
                            ..Default::default()
                        })
                    }
                },
                "RACELENS_STORE_PATH" => match &mut self.store {
                    StoreConfig::File { path, .. } => *path = PathBuf::from(v),
                    StoreConfig::Couch { url, .. } => *url = v,
                },
                "RACELENS_TOKEN" => self.api.token = (!v.is_empty()).then_some(v),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn apply_process_env(&mut self) -> Result<(), ConfigError> {
        self.apply_env(std::env::vars())
    }

    pub fn upload_dir(&self) -> PathBuf {
        match (&self.api.upload_dir, &self.store) {
            (Some(dir), _) => dir.clone(),
            (None, StoreConfig::File { path, .. }) => path.join("uploads"),
            (None, StoreConfig::Couch { .. }) => PathBuf::from("racelens-uploads"),
        }
    }

    /// The configured roster, or an empty one.
    pub fn load_roster(&self) -> Result<NumberRoster, ConfigError> {
        let Some(path) = &self.roster else {
            return Ok(NumberRoster::default());
        };
        let err = |reason: String| ConfigError::Roster {
            path: path.clone(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }
}
