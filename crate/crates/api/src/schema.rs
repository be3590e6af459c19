//! Published JSON schemas for every payload the service and the provider
//! protocol exchange. `docs/schema/<name>.json` holds the rendered copies.

use racelens_core::batch::BatchReport;
use racelens_core::eval::{AccuracyReport, DetectionDataset, DetectionReport, KeypointReport};
use racelens_core::inference::protocol::{
    CapabilitiesResponse, DetectionsResponse, EmbeddingResponse, KeypointsResponse, PatchesResponse,
    ProbabilitiesResponse, ProviderErrorBody, ProviderRequest, WheelsResponse,
};
use racelens_core::model::{FeedbackRecord, PhotoRecord};
use racelens_core::store::{ExportManifest, OnlineMetrics, PhotoQuery, RaceEventSummary};
use schemars::{schema_for, Schema};

use crate::types::*;

/// `(file stem, schema)` pairs in a fixed order.
pub fn published() -> Vec<(&'static str, Schema)> {
    vec![
        ("error", schema_for!(ErrorBody)),
        ("health", schema_for!(Health)),
        ("create_event_request", schema_for!(CreateEventRequest)),
        ("event_summary", schema_for!(RaceEventSummary)),
        ("event_list", schema_for!(EventList)),
        ("add_photos_request", schema_for!(AddPhotosRequest)),
        ("add_photos_response", schema_for!(AddPhotosResponse)),
        ("process_request", schema_for!(ProcessRequest)),
        ("job_accepted", schema_for!(JobAccepted)),
        ("job_status", schema_for!(JobStatus)),
        ("photo_query", schema_for!(PhotoQuery)),
        ("photo_record", schema_for!(PhotoRecord)),
        ("photo_page", schema_for!(PhotoPage)),
        ("overlay", schema_for!(Overlay)),
        ("feedback_request", schema_for!(FeedbackRequest)),
        ("feedback_response", schema_for!(FeedbackResponse)),
        ("feedback_record", schema_for!(FeedbackRecord)),
        ("online_metrics", schema_for!(OnlineMetrics)),
        ("teams_response", schema_for!(TeamsResponse)),
        ("batch_report", schema_for!(BatchReport)),
        ("export_manifest", schema_for!(ExportManifest)),
        ("detection_dataset", schema_for!(DetectionDataset)),
        ("detection_report", schema_for!(DetectionReport)),
        ("accuracy_report", schema_for!(AccuracyReport)),
        ("keypoint_report", schema_for!(KeypointReport)),
        ("provider_request", schema_for!(ProviderRequest)),
        ("provider_capabilities", schema_for!(CapabilitiesResponse)),
        ("provider_detections", schema_for!(DetectionsResponse)),
        ("provider_patches", schema_for!(PatchesResponse)),
        ("provider_probabilities", schema_for!(ProbabilitiesResponse)),
        ("provider_embedding", schema_for!(EmbeddingResponse)),
        ("provider_wheels", schema_for!(WheelsResponse)),
        ("provider_keypoints", schema_for!(KeypointsResponse)),
        ("provider_error", schema_for!(ProviderErrorBody)),
    ]
}

/// Pretty JSON text of a schema, newline-terminated.
pub fn render(schema: &Schema) -> String {
    let mut text = serde_json::to_string_pretty(schema).expect("schema serializes");
    text.push('\n');
    text
}
