//! Wire types for the remote provider protocol.
//!
//! Each capability is a `POST {endpoint}/v1/{route}` taking a
//! [`ProviderRequest`] and answering with the matching response type. The
//! provider lists what it offers at `GET {endpoint}/v1/capabilities`.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{Capability, ImageRegion, PhotoRef, ProviderMetadata, WheelDetection};
use crate::model::{BoundingBox, Detection, Embedding, WheelKeypoints};
use crate::number::PatchCandidate;

pub const ROUTE_DIGIT_PATCHES: &str = "digit_patches";

/// Route for a capability's main operation.
pub fn route(cap: Capability) -> &'static str {
    cap.as_str()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ImagePayload {
    pub uri: String,
    /// Raw file bytes, base64. When absent the server reads `uri` itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base64: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RequestParams {
    pub photo_id: String,
    pub width_px: u32,
    pub height_px: u32,
    /// Region of the photo to analyze, photo coordinates.
    pub region: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ProviderRequest {
    pub image: ImagePayload,
    pub params: RequestParams,
}

impl ProviderRequest {
    pub fn new(region: &ImageRegion, base64: Option<String>) -> Self {
        Self {
            image: ImagePayload {
                uri: region.photo.uri.clone(),
                base64,
            },
            params: RequestParams {
                photo_id: region.photo.photo_id.clone(),
                width_px: region.photo.width_px,
                height_px: region.photo.height_px,
                region: region.rect,
            },
        }
    }

    pub fn region(&self) -> ImageRegion {
        ImageRegion {
            photo: PhotoRef {
                photo_id: self.params.photo_id.clone(),
                uri: self.image.uri.clone(),
                width_px: self.params.width_px,
                height_px: self.params.height_px,
            },
            rect: self.params.region,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CapabilitiesResponse {
    pub capabilities: Vec<Capability>,
    pub metadata: ProviderMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DetectionsResponse {
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PatchesResponse {
    pub patches: Vec<PatchCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ProbabilitiesResponse {
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct EmbeddingResponse {
    pub embedding: Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct WheelsResponse {
    pub wheels: Vec<WheelDetection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct KeypointsResponse {
    pub keypoints: WheelKeypoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ProviderErrorBody {
    pub error: String,
}
