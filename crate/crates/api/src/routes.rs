use std::path::Path as FsPath;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::Json;
use chrono::Utc;
use racelens_core::batch::{process_event, BatchOptions};
use racelens_core::inference::photo_dimensions;
use racelens_core::model::{FeedbackRecord, PhotoRecord};
use racelens_core::store::{OnlineMetrics, PhotoQuery, RaceEvent, RaceEventSummary};
use tracing::info;

use crate::error::ApiError;
use crate::types::*;
use crate::AppState;

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f).await?
}

fn body<T>(r: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    r.map(|Json(v)| v).map_err(|e| ApiError::BadRequest(e.body_text()))
}

pub async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

pub async fn create_event(
    State(state): State<AppState>,
    req: Result<Json<CreateEventRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<RaceEventSummary>)> {
    let req = body(req)?;
    if req.event_id.is_empty() || req.event_id.contains(['/', '\\']) {
        return Err(ApiError::BadRequest(format!("invalid event id {:?}", req.event_id)));
    }
    let summary = blocking(move || {
        state.store.create_event(&RaceEvent {
            event_id: req.event_id.clone(),
            name: req.name,
            series: req.series,
            date: req.date,
            created_at: Utc::now(),
        })?;
        Ok(state.store.event_summary(&req.event_id)?)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(summary)))
}

pub async fn list_events(State(state): State<AppState>) -> ApiResult<Json<EventList>> {
    blocking(move || {
        let events = state
            .store
            .events()?
            .iter()
            .map(|e| state.store.event_summary(&e.event_id))
            .collect::<Result<_, _>>()?;
        Ok(Json(EventList { events }))
    })
    .await
}

pub async fn get_event(State(state): State<AppState>, Path(event_id): Path<String>) -> ApiResult<Json<RaceEventSummary>> {
    blocking(move || Ok(Json(state.store.event_summary(&event_id)?))).await
}

fn stem(uri: &str) -> String {
    FsPath::new(uri)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn photo_from_source(event_id: &str, src: PhotoSource) -> ApiResult<PhotoRecord> {
    let photo_id = src.photo_id.unwrap_or_else(|| stem(&src.uri));
    if photo_id.is_empty() {
        return Err(ApiError::BadRequest(format!("cannot derive a photo id from {:?}", src.uri)));
    }
    let (w, h) = match (src.width_px, src.height_px) {
        (Some(w), Some(h)) => (w, h),
        _ => photo_dimensions(&src.uri).map_err(|e| ApiError::BadRequest(e.to_string()))?,
    };
    let mut rec = PhotoRecord::pending(photo_id, event_id, src.uri, w, h).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    rec.captured_at = src.captured_at;
    Ok(rec)
}

async fn save_uploads(state: &AppState, event_id: &str, mut form: Multipart) -> ApiResult<Vec<PhotoSource>> {
    let dir = state.upload_dir.join(event_id);
    tokio::fs::create_dir_all(&dir)
        .await
        .map_err(|e| ApiError::Internal(format!("{}: {e}", dir.display())))?;
    let mut sources = Vec::new();
    while let Some(field) = form.next_field().await.map_err(|e| ApiError::BadRequest(e.body_text()))? {
        let Some(name) = field.file_name().map(|n| FsPath::new(n).file_name().unwrap_or_default().to_string_lossy().into_owned())
        else {
            continue;
        };
        if name.is_empty() || name.starts_with('.') {
            return Err(ApiError::BadRequest(format!("invalid file name {name:?}")));
        }
        let bytes = field.bytes().await.map_err(|e| ApiError::BadRequest(e.body_text()))?;
        let path = dir.join(&name);
        tokio::fs::write(&path, &bytes)
            .await
            .map_err(|e| ApiError::Internal(format!("{}: {e}", path.display())))?;
        sources.push(PhotoSource {
            uri: path.to_string_lossy().into_owned(),
            photo_id: None,
            width_px: None,
            height_px: None,
            captured_at: None,
        });
    }
    Ok(sources)
}

pub async fn add_photos(
    State(state): State<AppState>,
    Path(event_id): Path<String>,
    req: Request,
) -> ApiResult<(StatusCode, Json<AddPhotosResponse>)> {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    {
        let (st, id) = (state.clone(), event_id.clone());
        if blocking(move || Ok(st.store.event(&id)?)).await?.is_none() {
            return Err(ApiError::NotFound(format!("unknown event {event_id}")));
        }
    }
    let sources = if is_multipart {
        let form = Multipart::from_request(req, &state)
            .await
            .map_err(|e| ApiError::BadRequest(e.body_text()))?;
        save_uploads(&state, &event_id, form).await?
    } else {
        let req = body(Json::<AddPhotosRequest>::from_request(req, &state).await)?;
        req.uris
            .into_iter()
            .map(|uri| PhotoSource {
                uri,
                photo_id: None,
                width_px: None,
                height_px: None,
                captured_at: None,
            })
            .chain(req.photos)
            .collect()
    };
    if sources.is_empty() {
        return Err(ApiError::BadRequest("no photos given".into()));
    }
    let response = blocking(move || {
        let records = sources
            .into_iter()
            .map(|s| photo_from_source(&event_id, s))
            .collect::<ApiResult<Vec<_>>>()?;
        let mut created = 0;
        for r in &records {
            created += usize::from(state.store.add_photo(r)?);
        }
        Ok(AddPhotosResponse {
            event_id,
            photo_ids: records.into_iter().map(|r| r.photo_id).collect(),
            created,
        })
    })
    .await?;
    Ok((StatusCode::ACCEPTED, Json(response)))
}

pub async fn start_processing(
    State(state): State<AppState>,
    Path(event_id): Path<String>,
    req: Option<Json<ProcessRequest>>,
) -> ApiResult<(StatusCode, Json<JobAccepted>)> {
    let req = req.map(|Json(r)| r).unwrap_or_default();
    {
        let (st, id) = (state.clone(), event_id.clone());
        if blocking(move || Ok(st.store.event(&id)?)).await?.is_none() {
            return Err(ApiError::NotFound(format!("unknown event {event_id}")));
        }
    }
    let provider = state.provider.clone();
    blocking(move || provider.check_available().map_err(|e| ApiError::Unavailable(e.to_string()))).await?;

    let job_id = state
        .jobs
        .start(&event_id)
        .ok_or_else(|| ApiError::Conflict(format!("a processing job is already running for {event_id}")))?;
    info!(%job_id, %event_id, "processing started");
    let accepted = JobAccepted {
        job_id: job_id.clone(),
        event_id: event_id.clone(),
    };
    tokio::task::spawn_blocking(move || {
        let jobs = state.jobs.clone();
        let progress = |p: racelens_core::batch::BatchProgress| jobs.progress(&job_id, p.done, p.total);
        let options = BatchOptions {
            workers: req.workers.unwrap_or(state.workers).max(1),
            force: req.force,
            progress: Some(&progress),
        };
        let result = process_event(
            &state.store,
            &event_id,
            state.provider.as_ref(),
            &state.pipeline,
            &state.roster,
            &options,
        )
        .map_err(|e| e.to_string());
        state.jobs.finish(&job_id, result);
    });
    Ok((StatusCode::ACCEPTED, Json(accepted)))
}

pub async fn get_job(State(state): State<AppState>, Path(job_id): Path<String>) -> ApiResult<Json<JobStatus>> {
    state
        .jobs
        .get(&job_id)
        .map(Json)
        .ok_or_else(|| ApiError::NotFound(format!("unknown job {job_id}")))
}

pub async fn query_photos(
    State(state): State<AppState>,
    Path(event_id): Path<String>,
    query: Result<Query<PhotoQuery>, QueryRejection>,
) -> ApiResult<Json<PhotoPage>> {
    let Query(query) = query.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    blocking(move || Ok(Json(state.store.query(&event_id, &query)?))).await
}

async fn load_photo(state: &AppState, photo_id: String) -> ApiResult<PhotoRecord> {
    let st = state.clone();
    blocking(move || {
        st.store
            .photo(&photo_id)?
            .ok_or_else(|| ApiError::NotFound(format!("unknown photo {photo_id}")))
    })
    .await
}

pub async fn get_photo(State(state): State<AppState>, Path(photo_id): Path<String>) -> ApiResult<Json<PhotoRecord>> {
    load_photo(&state, photo_id).await.map(Json)
}

pub fn overlay_of(photo: &PhotoRecord) -> Overlay {
    let cars = photo
        .annotations
        .iter()
        .enumerate()
        .map(|(i, a)| OverlayCar {
            car_index: i,
            bbox: a.car_box,
            number: a.number.clone(),
            team: a.team_assignment.clone(),
            manufacturer: a.manufacturer.clone(),
            orientation: a.orientation,
            wheels: a
                .wheels
                .iter()
                .map(|w| OverlayWheel {
                    bbox: w.wheel_box,
                    keypoints: w.keypoints,
                })
                .collect(),
            lines: a
                .measurements
                .iter()
                .map(|m| OverlayLine {
                    kind: m.kind,
                    start: m.endpoints[0],
                    end: m.endpoints[1],
                    length_mm: m.length_mm,
                    label: format!("{:.0} mm", m.length_mm),
                })
                .collect(),
        })
        .collect();
    Overlay {
        photo_id: photo.photo_id.clone(),
        width_px: photo.width_px,
        height_px: photo.height_px,
        status: photo.status,
        cars,
    }
}

pub async fn get_overlay(State(state): State<AppState>, Path(photo_id): Path<String>) -> ApiResult<Json<Overlay>> {
    Ok(Json(overlay_of(&load_photo(&state, photo_id).await?)))
}

pub async fn submit_feedback(
    State(state): State<AppState>,
    Path(photo_id): Path<String>,
    req: Result<Json<FeedbackRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<FeedbackResponse>)> {
    let req = body(req)?;
    let (record, created) = blocking(move || {
        let record = FeedbackRecord::new(photo_id, req.reason, req.note);
        Ok(state.store.submit_feedback(&record)?)
    })
    .await?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(FeedbackResponse { record, created })))
}

pub async fn get_metrics(State(state): State<AppState>, Path(event_id): Path<String>) -> ApiResult<Json<OnlineMetrics>> {
    blocking(move || Ok(Json(state.store.online_metrics(&event_id)?))).await
}

pub async fn get_teams(State(state): State<AppState>, Path(event_id): Path<String>) -> ApiResult<Json<TeamsResponse>> {
    blocking(move || {
        if state.store.event(&event_id)?.is_none() {
            return Err(ApiError::NotFound(format!("unknown event {event_id}")));
        }
        let teams = state
            .store
            .teams(&event_id)?
            .map(|s| {
                s.teams
                    .into_iter()
                    .map(|t| TeamEntry {
                        team_id: t.team_id,
                        reference_count: t.reference_count,
                        finalized: t.finalized,
                    })
                    .collect()
            })
            .unwrap_or_default();
        Ok(Json(TeamsResponse { event_id, teams }))
    })
    .await
}

pub async fn fallback() -> ApiError {
    ApiError::NotFound("no such route".into())
}
