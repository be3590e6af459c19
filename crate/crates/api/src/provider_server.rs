//! Serves any [`InferenceProvider`] over the remote provider protocol, so a
//! `RemoteProvider` can talk to it.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use racelens_core::inference::protocol::{
    route, CapabilitiesResponse, DetectionsResponse, EmbeddingResponse, KeypointsResponse, PatchesResponse,
    ProbabilitiesResponse, ProviderErrorBody, ProviderRequest, WheelsResponse, ROUTE_DIGIT_PATCHES,
};
use racelens_core::inference::{Capability, InferenceError, InferenceProvider};

type Shared = Arc<dyn InferenceProvider>;

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(ProviderErrorBody { error: msg.into() })).into_response()
}

fn map_err(e: InferenceError) -> Response {
    let status = match &e {
        InferenceError::ProviderUnavailable(_) => StatusCode::NOT_FOUND,
        InferenceError::UnreadableImage { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        InferenceError::Unreachable(_) => StatusCode::BAD_GATEWAY,
        InferenceError::InvalidResponse(_) => StatusCode::INTERNAL_SERVER_ERROR,
    };
    error(status, e.to_string())
}

async fn capabilities(State(p): State<Shared>) -> Json<CapabilitiesResponse> {
    let p2 = p.clone();
    let (caps, metadata) = tokio::task::spawn_blocking(move || (p2.capabilities(), p2.metadata()))
        .await
        .expect("capability probe");
    Json(CapabilitiesResponse {
        capabilities: caps.into_iter().collect(),
        metadata,
    })
}

fn dispatch(p: &dyn InferenceProvider, name: &str, req: &ProviderRequest) -> Result<Response, Response> {
    let region = req.region();
    let cap = if name == ROUTE_DIGIT_PATCHES {
        Capability::DigitClassifier
    } else {
        *Capability::ALL
            .iter()
            .find(|c| route(**c) == name)
            .ok_or_else(|| error(StatusCode::NOT_FOUND, format!("unknown route {name}")))?
    };
    if !p.capabilities().contains(&cap) {
        return Err(map_err(InferenceError::ProviderUnavailable(cap)));
    }
    let json = |r: Result<Response, InferenceError>| r.map_err(map_err);
    if name == ROUTE_DIGIT_PATCHES {
        return json(p.propose_digit_patches(&region).map(|patches| Json(PatchesResponse { patches }).into_response()));
    }
    let probs = |r: Result<Vec<f64>, InferenceError>| {
        r.map(|probabilities| Json(ProbabilitiesResponse { probabilities }).into_response())
    };
    json(match cap {
        Capability::CarDetector => p
            .detect_cars(&region)
            .map(|detections| Json(DetectionsResponse { detections }).into_response()),
        Capability::AttributeDetector => p
            .detect_attributes(&region)
            .map(|detections| Json(DetectionsResponse { detections }).into_response()),
        Capability::DigitClassifier => probs(p.classify_digit(&region)),
        Capability::ManufacturerClassifier => probs(p.classify_manufacturer(&region)),
        Capability::OrientationClassifier => probs(p.classify_orientation(&region)),
        Capability::EmbeddingEncoder => p
            .encode_embedding(&region)
            .map(|embedding| Json(EmbeddingResponse { embedding }).into_response()),
        Capability::WheelDetector => p
            .detect_wheels(&region)
            .map(|wheels| Json(WheelsResponse { wheels }).into_response()),
        Capability::WheelKeypoints => p
            .predict_wheel_keypoints(&region)
            .map(|keypoints| Json(KeypointsResponse { keypoints }).into_response()),
    })
}

async fn call(
    State(p): State<Shared>,
    Path(name): Path<String>,
    req: Result<Json<ProviderRequest>, JsonRejection>,
) -> Response {
    let req = match req {
        Ok(Json(r)) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    match tokio::task::spawn_blocking(move || dispatch(p.as_ref(), &name, &req)).await {
        Ok(Ok(r)) | Ok(Err(r)) => r,
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

/// `GET /v1/capabilities` and `POST /v1/{route}` for every capability.
pub fn provider_router(provider: Arc<dyn InferenceProvider>) -> Router {
    Router::new()
        .route("/v1/capabilities", get(capabilities))
        .route("/v1/{route}", post(call))
        .with_state(provider)
}
