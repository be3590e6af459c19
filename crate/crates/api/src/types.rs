//! Request and response bodies of the HTTP API.

use chrono::{DateTime, NaiveDate, Utc};
use racelens_core::batch::BatchReport;
use racelens_core::measure::MeasurementKind;
use racelens_core::model::{
    BoundingBox, FeedbackReason, FeedbackRecord, Orientation, PhotoRecord, PhotoStatus, Point, WheelKeypoints,
};
use racelens_core::store::{Page, RaceEventSummary};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ErrorBody {
    pub error: String,
    pub status: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Health {
    pub status: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CreateEventRequest {
    pub event_id: String,
    pub name: String,
    #[serde(default)]
    pub series: String,
    #[serde(default)]
    pub date: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct EventList {
    pub events: Vec<RaceEventSummary>,
}

/// One photo to register by location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PhotoSource {
    pub uri: String,
    /// Defaults to the file stem of `uri`.
    #[serde(default)]
    pub photo_id: Option<String>,
    /// Read from the image (or its scene sidecar) when omitted.
    #[serde(default)]
    pub width_px: Option<u32>,
    #[serde(default)]
    pub height_px: Option<u32>,
    #[serde(default)]
    pub captured_at: Option<DateTime<Utc>>,
}

/// JSON form of photo ingestion. `uris` is shorthand for sources with only a
/// uri.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct AddPhotosRequest {
    pub uris: Vec<String>,
    pub photos: Vec<PhotoSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct AddPhotosResponse {
    pub event_id: String,
    /// Every accepted photo id, in request order.
    pub photo_ids: Vec<String>,
    /// How many of them were new.
    pub created: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessRequest {
    /// Reprocess photos that already finished.
    pub force: bool,
    /// Worker threads; the service default when absent.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct JobAccepted {
    pub job_id: String,
    pub event_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct JobStatus {
    pub job_id: String,
    pub event_id: String,
    pub state: JobState,
    pub done: usize,
    pub total: usize,
    pub started_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<BatchReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub type PhotoPage = Page<PhotoRecord>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct OverlayLine {
    pub kind: MeasurementKind,
    pub start: Point,
    pub end: Point,
    pub length_mm: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct OverlayWheel {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub keypoints: WheelKeypoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct OverlayCar {
    pub car_index: usize,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub number: Option<String>,
    pub team: Option<String>,
    pub manufacturer: Option<String>,
    pub orientation: Option<Orientation>,
    pub wheels: Vec<OverlayWheel>,
    pub lines: Vec<OverlayLine>,
}

/// Everything the UI draws over a photo, in photo pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Overlay {
    pub photo_id: String,
    pub width_px: u32,
    pub height_px: u32,
    pub status: PhotoStatus,
    pub cars: Vec<OverlayCar>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub reason: FeedbackReason,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FeedbackResponse {
    pub record: FeedbackRecord,
    /// False when an identical (photo, reason) record already existed.
    pub created: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TeamEntry {
    pub team_id: String,
    pub reference_count: usize,
    pub finalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TeamsResponse {
    pub event_id: String,
    pub teams: Vec<TeamEntry>,
}
