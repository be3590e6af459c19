use std::sync::OnceLock;
use std::time::Duration;

use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::protocol::{
    route, CapabilitiesResponse, DetectionsResponse, EmbeddingResponse, KeypointsResponse,
    PatchesResponse, ProbabilitiesResponse, ProviderRequest, WheelsResponse, ROUTE_DIGIT_PATCHES,
};
use super::{
    Capability, CapabilitySet, ImageRegion, InferenceError, InferenceProvider, ProviderMetadata,
    WheelDetection,
};
use crate::model::{Detection, Embedding, WheelKeypoints};
use crate::number::PatchCandidate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteSettings {
    pub endpoint: String,
    pub timeout_ms: u64,
    /// Extra attempts after a transport error or a 5xx answer.
    pub retries: u32,
    /// Send image bytes inline instead of only the uri.
    pub send_image_bytes: bool,
}

impl Default for RemoteSettings {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:9000".into(),
            timeout_ms: 10_000,
            retries: 2,
            send_image_bytes: false,
        }
    }
}

/// Provider that forwards every call to a model server.
pub struct RemoteProvider {
    settings: RemoteSettings,
    client: reqwest::blocking::Client,
    info: OnceLock<CapabilitiesResponse>,
}

impl RemoteProvider {
    pub fn new(settings: RemoteSettings) -> Result<Self, InferenceError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(settings.timeout_ms))
            .build()
            .map_err(|e| InferenceError::Unreachable(e.to_string()))?;
        Ok(Self {
            settings,
            client,
            info: OnceLock::new(),
        })
    }

    fn url(&self, route: &str) -> String {
        format!("{}/v1/{route}", self.settings.endpoint.trim_end_matches('/'))
    }

    fn info(&self) -> Result<&CapabilitiesResponse, InferenceError> {
        if let Some(info) = self.info.get() {
            return Ok(info);
        }
        let info: CapabilitiesResponse = self.send(None, |c| c.get(self.url("capabilities")))?;
        Ok(self.info.get_or_init(|| info))
    }

    fn send<T: DeserializeOwned>(
        &self,
        cap: Option<Capability>,
        build: impl Fn(&reqwest::blocking::Client) -> reqwest::blocking::RequestBuilder,
    ) -> Result<T, InferenceError> {
        let mut last = String::new();
        for attempt in 0..=self.settings.retries {
            if attempt > 0 {
                tracing::debug!(attempt, error = %last, "retrying provider call");
            }
            let resp = match build(&self.client).send() {
                Ok(r) => r,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            let status = resp.status();
            if status.is_success() {
                return resp
                    .json()
                    .map_err(|e| InferenceError::InvalidResponse(e.to_string()));
            }
            if status == reqwest::StatusCode::NOT_FOUND || status == reqwest::StatusCode::NOT_IMPLEMENTED {
                return Err(match cap {
                    Some(cap) => InferenceError::ProviderUnavailable(cap),
                    None => InferenceError::Unreachable(format!("HTTP {status}")),
                });
            }
            let body = resp.text().unwrap_or_default();
            if status.is_server_error() {
                last = format!("HTTP {status}: {body}");
                continue;
            }
            if status == reqwest::StatusCode::UNPROCESSABLE_ENTITY || status == reqwest::StatusCode::BAD_REQUEST {
                return Err(InferenceError::UnreadableImage {
                    uri: String::new(),
                    reason: body,
                });
            }
            return Err(InferenceError::InvalidResponse(format!("HTTP {status}: {body}")));
        }
        Err(InferenceError::Unreachable(last))
    }

    fn call<T: DeserializeOwned>(&self, cap: Capability, route: &str, region: &ImageRegion) -> Result<T, InferenceError> {
        let bytes = if self.settings.send_image_bytes {
            let raw = std::fs::read(&region.photo.uri).map_err(|e| InferenceError::UnreadableImage {
                uri: region.photo.uri.clone(),
                reason: e.to_string(),
            })?;
            Some(base64::engine::general_purpose::STANDARD.encode(raw))
        } else {
            None
        };
        let body = ProviderRequest::new(region, bytes);
        let url = self.url(route);
        self.send(Some(cap), |c| c.post(&url).json(&body)).map_err(|e| match e {
            InferenceError::UnreadableImage { reason, .. } => InferenceError::UnreadableImage {
                uri: region.photo.uri.clone(),
                reason,
            },
            e => e,
        })
    }
}

impl InferenceProvider for RemoteProvider {
    fn capabilities(&self) -> CapabilitySet {
        match self.info() {
            Ok(info) => info.capabilities.iter().copied().collect(),
            Err(e) => {
                tracing::warn!(error = %e, "provider capabilities unavailable");
                CapabilitySet::new()
            }
        }
    }

    fn metadata(&self) -> ProviderMetadata {
        self.info().map(|i| i.metadata.clone()).unwrap_or(ProviderMetadata {
            name: "remote".into(),
            detector_input: [0, 0],
            orientation_input: [0, 0],
            keypoint_input: [0, 0],
            embedding_dim: 0,
        })
    }

    fn check_available(&self) -> Result<(), InferenceError> {
        self.info().map(|_| ())
    }

    fn detect_cars(&self, photo: &ImageRegion) -> Result<Vec<Detection>, InferenceError> {
        let cap = Capability::CarDetector;
        Ok(self.call::<DetectionsResponse>(cap, route(cap), photo)?.detections)
    }

    fn detect_attributes(&self, crop: &ImageRegion) -> Result<Vec<Detection>, InferenceError> {
        let cap = Capability::AttributeDetector;
        Ok(self.call::<DetectionsResponse>(cap, route(cap), crop)?.detections)
    }

    fn propose_digit_patches(&self, region: &ImageRegion) -> Result<Vec<PatchCandidate>, InferenceError> {
        let cap = Capability::DigitClassifier;
        Ok(self.call::<PatchesResponse>(cap, ROUTE_DIGIT_PATCHES, region)?.patches)
    }

    fn classify_digit(&self, patch: &ImageRegion) -> Result<Vec<f64>, InferenceError> {
        let cap = Capability::DigitClassifier;
        Ok(self.call::<ProbabilitiesResponse>(cap, route(cap), patch)?.probabilities)
    }

    fn classify_manufacturer(&self, crop: &ImageRegion) -> Result<Vec<f64>, InferenceError> {
        let cap = Capability::ManufacturerClassifier;
        Ok(self.call::<ProbabilitiesResponse>(cap, route(cap), crop)?.probabilities)
    }

    fn classify_orientation(&self, crop: &ImageRegion) -> Result<Vec<f64>, InferenceError> {
        let cap = Capability::OrientationClassifier;
        Ok(self.call::<ProbabilitiesResponse>(cap, route(cap), crop)?.probabilities)
    }

    fn encode_embedding(&self, crop: &ImageRegion) -> Result<Embedding, InferenceError> {
        let cap = Capability::EmbeddingEncoder;
        Ok(self.call::<EmbeddingResponse>(cap, route(cap), crop)?.embedding)
    }

    fn detect_wheels(&self, crop: &ImageRegion) -> Result<Vec<WheelDetection>, InferenceError> {
        let cap = Capability::WheelDetector;
        Ok(self.call::<WheelsResponse>(cap, route(cap), crop)?.wheels)
    }

    fn predict_wheel_keypoints(&self, crop: &ImageRegion) -> Result<WheelKeypoints, InferenceError> {
        let cap = Capability::WheelKeypoints;
        Ok(self.call::<KeypointsResponse>(cap, route(cap), crop)?.keypoints)
    }
}
