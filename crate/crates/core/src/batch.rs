//! Event-level processing: run the pipeline over every pending photo, persist
//! the results, then rebuild team centroids from the stored embeddings.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use parking_lot::Mutex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::config::PipelineConfig;
use crate::inference::{InferenceError, InferenceProvider};
use crate::model::{NumberRoster, PhotoRecord, PhotoStatus};
use crate::pipeline::Pipeline;
use crate::store::{EventStore, StoreError, StoredEmbedding};
use crate::team::{TeamCentroidStore, TeamError, TeamSnapshot};

#[derive(Debug, thiserror::Error)]
pub enum BatchError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Team(#[from] TeamError),
    #[error("failed to start worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, schemars::JsonSchema)]
pub struct BatchReport {
    pub event_id: String,
    /// Photos the run looked at.
    pub total: usize,
    pub processed: usize,
    pub no_car: usize,
    pub failed: usize,
    /// Photos left pending because the provider was unavailable.
    pub left_pending: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider_error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchProgress {
    pub done: usize,
    pub total: usize,
}

pub struct BatchOptions<'a> {
    pub workers: usize,
    pub force: bool,
    pub progress: Option<&'a (dyn Fn(BatchProgress) + Sync)>,
}

impl Default for BatchOptions<'_> {
    fn default() -> Self {
        Self {
            workers: 1,
            force: false,
            progress: None,
        }
    }
}

enum PhotoResult {
    Done(PhotoStatus),
    Skipped,
    Unavailable(InferenceError),
}

fn process_one(
    store: &EventStore,
    pipeline: &Pipeline<'_>,
    photo_id: &str,
    force: bool,
) -> Result<PhotoResult, StoreError> {
    let _guard = store.lock_photo(photo_id);
    let Some(current) = store.photo(photo_id)? else {
        return Ok(PhotoResult::Skipped);
    };
    if current.status != PhotoStatus::Pending && !force {
        return Ok(PhotoResult::Skipped);
    }
    let outcome = match pipeline.process_photo(&current, force) {
        Ok(o) => o,
        Err(e) => return Ok(PhotoResult::Unavailable(e)),
    };
    let stale: Vec<&str> = current
        .annotations
        .iter()
        .filter_map(|a| a.embedding_ref.as_deref())
        .filter(|r| !outcome.embeddings.iter().any(|(n, _)| n == r))
        .collect();
    for r in stale {
        store
            .documents()
            .delete(&format!("embeddings.{}", current.event_id), r)?;
    }
    for (i, ((r, e), reading)) in outcome.embeddings.iter().zip(&outcome.readings).enumerate() {
        let car_index = r
            .rsplit_once('#')
            .and_then(|(_, n)| n.parse().ok())
            .unwrap_or(i);
        store.put_embedding(
            &current.event_id,
            &StoredEmbedding {
                embedding_ref: r.clone(),
                photo_id: photo_id.into(),
                car_index,
                embedding: e.clone(),
                number: reading.clone(),
            },
        )?;
    }
    store.put_photo(&outcome.record)?;
    Ok(PhotoResult::Done(outcome.record.status))
}

/// Processes the pending photos of an event (all photos with `force`) and
/// then reassigns teams over the whole event.
pub fn process_event(
    store: &EventStore,
    event_id: &str,
    provider: &dyn InferenceProvider,
    config: &PipelineConfig,
    roster: &NumberRoster,
    options: &BatchOptions<'_>,
) -> Result<BatchReport, BatchError> {
    if store.event(event_id)?.is_none() {
        return Err(StoreError::UnknownEvent(event_id.into()).into());
    }
    let ids: Vec<String> = store
        .photos(event_id)?
        .into_iter()
        .filter(|p| options.force || p.status == PhotoStatus::Pending)
        .map(|p| p.photo_id)
        .collect();

    let teams = TeamCentroidStore::new(config.embedding_dim, config.team);
    let pipeline = Pipeline::new(provider, config, roster, config.stages.team.then_some(&teams));
    let report = Mutex::new(BatchReport {
        event_id: event_id.into(),
        total: ids.len(),
        ..Default::default()
    });
    let stop = AtomicBool::new(false);
    let done = AtomicUsize::new(0);

    let run = |id: &String| {
        if stop.load(Ordering::Relaxed) {
            report.lock().left_pending += 1;
            return;
        }
        let result = process_one(store, &pipeline, id, options.force);
        let mut r = report.lock();
        match result {
            Ok(PhotoResult::Done(PhotoStatus::Processed)) => r.processed += 1,
            Ok(PhotoResult::Done(PhotoStatus::NoCar)) => r.no_car += 1,
            Ok(PhotoResult::Done(_)) => r.failed += 1,
            Ok(PhotoResult::Skipped) => {}
            Ok(PhotoResult::Unavailable(e)) => {
                r.left_pending += 1;
                if r.provider_error.is_none() {
                    warn!(error = %e, "provider unavailable; stopping");
                    r.provider_error = Some(e.to_string());
                }
                stop.store(true, Ordering::Relaxed);
            }
            Err(e) => r.errors.push(format!("{id}: {e}")),
        }
        drop(r);
        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
        if let Some(p) = options.progress {
            p(BatchProgress { done: n, total: ids.len() });
        }
    };

    if options.workers <= 1 {
        ids.iter().for_each(run);
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.workers)
            .build()
            .map_err(|e| BatchError::Pool(e.to_string()))?;
        pool.install(|| ids.par_iter().for_each(run));
    }

    if config.stages.team {
        reassign_event(store, event_id, config)?;
    }
    let report = report.into_inner();
    info!(
        event_id,
        processed = report.processed,
        no_car = report.no_car,
        failed = report.failed,
        left_pending = report.left_pending,
        "event processed"
    );
    Ok(report)
}

/// Rebuilds the team centroids of an event from its stored embeddings and
/// re-runs assignment for every car. References are added in embedding-ref
/// order, so the result does not depend on processing order.
pub fn reassign_event(store: &EventStore, event_id: &str, config: &PipelineConfig) -> Result<TeamSnapshot, BatchError> {
    let embeddings = store.embeddings(event_id)?;
    let teams = TeamCentroidStore::new(config.embedding_dim, config.team);
    for e in &embeddings {
        if let Some(reading) = e.number.as_ref().filter(|r| config.team.is_reference(r)) {
            teams.add_reference(&reading.number, &e.embedding.vector)?;
        }
    }
    let by_ref: BTreeMap<&str, &StoredEmbedding> =
        embeddings.iter().map(|e| (e.embedding_ref.as_str(), e)).collect();

    for photo in store.photos(event_id)? {
        if photo.annotations.iter().all(|a| a.embedding_ref.is_none()) {
            continue;
        }
        let _guard = store.lock_photo(&photo.photo_id);
        let Some(mut current): Option<PhotoRecord> = store.photo(&photo.photo_id)? else {
            continue;
        };
        let mut changed = false;
        for ann in &mut current.annotations {
            let Some(e) = ann.embedding_ref.as_deref().and_then(|r| by_ref.get(r)) else {
                continue;
            };
            let team = match e.number.as_ref().filter(|r| config.team.is_reference(r)) {
                Some(r) => Some(r.number.clone()),
                None => teams.assign(&e.embedding.vector)?,
            };
            if ann.team_assignment != team {
                ann.team_assignment = team;
                changed = true;
            }
        }
        if changed {
            store.put_photo(&current)?;
        }
    }
    let snapshot = teams.snapshot();
    store.save_teams(event_id, &snapshot)?;
    Ok(snapshot)
}
