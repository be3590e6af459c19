use std::collections::{BTreeMap, BTreeSet};
use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, Utc};
use parking_lot::{Mutex, MutexGuard};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{DocumentStore, StoreError, TypedStore};
use crate::eval::{DetectionDataset, GroundTruthBox};
use crate::inference::sidecar::sidecar_path;
use crate::model::{CarAnnotation, Embedding, FeedbackReason, FeedbackRecord, Orientation, PhotoRecord, PhotoStatus};
use crate::number::NumberReading;
use crate::team::TeamSnapshot;

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;
const LOCK_STRIPES: usize = 64;

const EVENTS: &str = "events";
const PHOTO_INDEX: &str = "photo_index";
const TEAMS: &str = "teams";

fn photos_of(event: &str) -> String {
    format!("photos.{event}")
}

fn embeddings_of(event: &str) -> String {
    format!("embeddings.{event}")
}

fn feedback_of(event: &str) -> String {
    format!("feedback.{event}")
}

fn feedback_id(photo_id: &str, reason: FeedbackReason) -> String {
    format!("{photo_id}~{}", reason.as_str())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RaceEvent {
    pub event_id: String,
    pub name: String,
    #[serde(default)]
    pub series: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<NaiveDate>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
pub struct StatusCounts {
    pub pending: usize,
    pub processed: usize,
    pub no_car: usize,
    pub failed: usize,
    pub total: usize,
}

impl StatusCounts {
    pub fn add(&mut self, status: PhotoStatus) {
        match status {
            PhotoStatus::Pending => self.pending += 1,
            PhotoStatus::Processed => self.processed += 1,
            PhotoStatus::NoCar => self.no_car += 1,
            PhotoStatus::Failed => self.failed += 1,
        }
        self.total += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RaceEventSummary {
    #[serde(flatten)]
    pub event: RaceEvent,
    pub photo_counts: StatusCounts,
    pub feedback_count: usize,
}

/// An embedding kept for reassignment, keyed by its `embedding_ref`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct StoredEmbedding {
    pub embedding_ref: String,
    pub photo_id: String,
    pub car_index: usize,
    pub embedding: Embedding,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub number: Option<NumberReading>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct PhotoQuery {
    pub number: Option<String>,
    pub team: Option<String>,
    pub orientation: Option<Orientation>,
    pub manufacturer: Option<String>,
    pub status: Option<PhotoStatus>,
    /// 1-based.
    pub page: Option<usize>,
    pub page_size: Option<usize>,
}

impl PhotoQuery {
    fn has_car_filter(&self) -> bool {
        self.number.is_some() || self.team.is_some() || self.orientation.is_some() || self.manufacturer.is_some()
    }

    /// All car-level filters hold for this one car.
    pub fn matches_car(&self, car: &CarAnnotation) -> bool {
        fn eq(filter: &Option<String>, value: &Option<String>) -> bool {
            filter.as_ref().is_none_or(|f| value.as_ref() == Some(f))
        }
        eq(&self.number, &car.number)
            && eq(&self.team, &car.team_assignment)
            && eq(&self.manufacturer, &car.manufacturer)
            && self.orientation.is_none_or(|o| car.orientation == Some(o))
    }

    pub fn matches(&self, photo: &PhotoRecord) -> bool {
        if self.status.is_some_and(|s| s != photo.status) {
            return false;
        }
        !self.has_car_filter() || photo.annotations.iter().any(|c| self.matches_car(c))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Page<T> {
    pub items: Vec<T>,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub total_pages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct OnlineMetrics {
    pub event_id: String,
    pub processed: usize,
    pub no_car: usize,
    pub pending: usize,
    pub failed: usize,
    pub feedback_records: usize,
    /// Photos counted in the denominator that carry at least one feedback.
    pub feedback_photos: usize,
    /// `no_car / (processed + no_car)`; absent when nothing was processed.
    pub na_photo_fraction: Option<f64>,
    /// `feedback_photos / (processed + no_car)`; absent when nothing was processed.
    pub feedback_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ExportItem {
    pub photo_id: String,
    pub event_id: String,
    /// Path of the copied image relative to the export root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    pub reasons: Vec<FeedbackReason>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
pub struct ExportManifest {
    pub items: Vec<ExportItem>,
}

/// Domain operations over a [`DocumentStore`].
///
/// Layout: `events`, `photo_index` (photo id -> event id), `photos.<event>`,
/// `embeddings.<event>`, `feedback.<event>` and `teams` (one snapshot per
/// event).
#[derive(Clone)]
pub struct EventStore {
    docs: Arc<dyn DocumentStore>,
    locks: Arc<Vec<Mutex<()>>>,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    event_id: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl EventStore {
    pub fn new(docs: Arc<dyn DocumentStore>) -> Self {
        Self {
            docs,
            locks: Arc::new((0..LOCK_STRIPES).map(|_| Mutex::new(())).collect()),
        }
    }

    pub fn documents(&self) -> &Arc<dyn DocumentStore> {
        &self.docs
    }

    /// Serializes writers of one photo.
    pub fn lock_photo(&self, photo_id: &str) -> MutexGuard<'_, ()> {
        let mut h = DefaultHasher::new();
        photo_id.hash(&mut h);
        self.locks[(h.finish() as usize) % LOCK_STRIPES].lock()
    }

    pub fn create_event(&self, event: &RaceEvent) -> Result<(), StoreError> {
        if event.event_id.is_empty() {
            return Err(StoreError::Invalid("empty event id".into()));
        }
        if self.event(&event.event_id)?.is_some() {
            return Err(StoreError::Conflict(format!("event {} exists", event.event_id)));
        }
        self.docs.put_doc(EVENTS, &event.event_id, event)
    }

    /// Creates the event unless it already exists.
    pub fn ensure_event(&self, event_id: &str, name: &str) -> Result<RaceEvent, StoreError> {
        if let Some(e) = self.event(event_id)? {
            return Ok(e);
        }
        let event = RaceEvent {
            event_id: event_id.into(),
            name: name.into(),
            series: String::new(),
            date: None,
            created_at: Utc::now(),
        };
        self.docs.put_doc(EVENTS, event_id, &event)?;
        Ok(event)
    }

    pub fn event(&self, event_id: &str) -> Result<Option<RaceEvent>, StoreError> {
        self.docs.get_doc(EVENTS, event_id)
    }

    fn require_event(&self, event_id: &str) -> Result<RaceEvent, StoreError> {
        self.event(event_id)?
            .ok_or_else(|| StoreError::UnknownEvent(event_id.into()))
    }

    pub fn events(&self) -> Result<Vec<RaceEvent>, StoreError> {
        self.docs.list_docs(EVENTS)
    }

    pub fn event_summary(&self, event_id: &str) -> Result<RaceEventSummary, StoreError> {
        let event = self.require_event(event_id)?;
        let mut counts = StatusCounts::default();
        for p in self.photos(event_id)? {
            counts.add(p.status);
        }
        let feedback_count = self.docs.list(&feedback_of(event_id))?.len();
        Ok(RaceEventSummary {
            event,
            photo_counts: counts,
            feedback_count,
        })
    }

    /// Registers a photo. Returns false, leaving the stored record alone, when
    /// the photo id is already known.
    pub fn add_photo(&self, photo: &PhotoRecord) -> Result<bool, StoreError> {
        self.require_event(&photo.event_id)?;
        photo.validate().map_err(|e| StoreError::Invalid(e.to_string()))?;
        let _guard = self.lock_photo(&photo.photo_id);
        if let Some(entry) = self.docs.get_doc::<IndexEntry>(PHOTO_INDEX, &photo.photo_id)? {
            if entry.event_id != photo.event_id {
                return Err(StoreError::Conflict(format!(
                    "photo {} belongs to event {}",
                    photo.photo_id, entry.event_id
                )));
            }
            if self.docs.get(&photos_of(&photo.event_id), &photo.photo_id)?.is_some() {
                return Ok(false);
            }
        }
        self.docs.put_doc(&photos_of(&photo.event_id), &photo.photo_id, photo)?;
        self.docs.put_doc(
            PHOTO_INDEX,
            &photo.photo_id,
            &IndexEntry {
                event_id: photo.event_id.clone(),
            },
        )?;
        Ok(true)
    }

    pub fn photo(&self, photo_id: &str) -> Result<Option<PhotoRecord>, StoreError> {
        let Some(entry) = self.docs.get_doc::<IndexEntry>(PHOTO_INDEX, photo_id)? else {
            return Ok(None);
        };
        self.docs.get_doc(&photos_of(&entry.event_id), photo_id)
    }

    /// Replaces a stored photo. Callers hold [`Self::lock_photo`] when they
    /// read-modify-write.
    pub fn put_photo(&self, photo: &PhotoRecord) -> Result<(), StoreError> {
        match self.docs.get_doc::<IndexEntry>(PHOTO_INDEX, &photo.photo_id)? {
            Some(e) if e.event_id == photo.event_id => {
                self.docs.put_doc(&photos_of(&photo.event_id), &photo.photo_id, photo)
            }
            _ => Err(StoreError::UnknownPhoto(photo.photo_id.clone())),
        }
    }

    /// All photos of an event, ordered by photo id.
    pub fn photos(&self, event_id: &str) -> Result<Vec<PhotoRecord>, StoreError> {
        self.docs.list_docs(&photos_of(event_id))
    }

    pub fn query(&self, event_id: &str, q: &PhotoQuery) -> Result<Page<PhotoRecord>, StoreError> {
        self.require_event(event_id)?;
        let page = q.page.unwrap_or(1);
        let page_size = q.page_size.unwrap_or(DEFAULT_PAGE_SIZE);
        if page == 0 {
            return Err(StoreError::Invalid("page is 1-based".into()));
        }
        if page_size == 0 || page_size > MAX_PAGE_SIZE {
            return Err(StoreError::Invalid(format!("page_size must be in 1..={MAX_PAGE_SIZE}")));
        }
        let matching: Vec<PhotoRecord> = self.photos(event_id)?.into_iter().filter(|p| q.matches(p)).collect();
        let total = matching.len();
        let items = matching
            .into_iter()
            .skip((page - 1).saturating_mul(page_size))
            .take(page_size)
            .collect();
        Ok(Page {
            items,
            page,
            page_size,
            total,
            total_pages: total.div_ceil(page_size),
        })
    }

    pub fn put_embedding(&self, event_id: &str, e: &StoredEmbedding) -> Result<(), StoreError> {
        self.docs.put_doc(&embeddings_of(event_id), &e.embedding_ref, e)
    }

    pub fn embeddings(&self, event_id: &str) -> Result<Vec<StoredEmbedding>, StoreError> {
        self.docs.list_docs(&embeddings_of(event_id))
    }

    pub fn save_teams(&self, event_id: &str, snapshot: &TeamSnapshot) -> Result<(), StoreError> {
        self.docs.put_doc(TEAMS, event_id, snapshot)
    }

    pub fn teams(&self, event_id: &str) -> Result<Option<TeamSnapshot>, StoreError> {
        self.docs.get_doc(TEAMS, event_id)
    }

    pub fn feedback(&self, event_id: &str) -> Result<Vec<FeedbackRecord>, StoreError> {
        self.docs.list_docs(&feedback_of(event_id))
    }

    /// Stores feedback once per (photo, reason). Returns the stored record and
    /// whether it was new.
    pub fn submit_feedback(&self, record: &FeedbackRecord) -> Result<(FeedbackRecord, bool), StoreError> {
        let entry = self
            .docs
            .get_doc::<IndexEntry>(PHOTO_INDEX, &record.photo_id)?
            .ok_or_else(|| StoreError::UnknownPhoto(record.photo_id.clone()))?;
        let collection = feedback_of(&entry.event_id);
        let id = feedback_id(&record.photo_id, record.reason);
        let _guard = self.lock_photo(&record.photo_id);
        if let Some(existing) = self.docs.get_doc::<FeedbackRecord>(&collection, &id)? {
            return Ok((existing, false));
        }
        let mut stored = record.clone();
        stored.exported_to_testset = false;
        self.docs.put_doc(&collection, &id, &stored)?;
        Ok((stored, true))
    }

    pub fn online_metrics(&self, event_id: &str) -> Result<OnlineMetrics, StoreError> {
        self.require_event(event_id)?;
        let photos = self.photos(event_id)?;
        let mut counts = StatusCounts::default();
        let mut done = BTreeSet::new();
        for p in &photos {
            counts.add(p.status);
            if matches!(p.status, PhotoStatus::Processed | PhotoStatus::NoCar) {
                done.insert(p.photo_id.as_str());
            }
        }
        let feedback = self.feedback(event_id)?;
        let feedback_photos = feedback
            .iter()
            .map(|f| f.photo_id.as_str())
            .filter(|id| done.contains(id))
            .collect::<BTreeSet<_>>()
            .len();
        let denom = counts.processed + counts.no_car;
        let frac = |n: usize| (denom > 0).then(|| n as f64 / denom as f64);
        Ok(OnlineMetrics {
            event_id: event_id.into(),
            processed: counts.processed,
            no_car: counts.no_car,
            pending: counts.pending,
            failed: counts.failed,
            feedback_records: feedback.len(),
            feedback_photos,
            na_photo_fraction: frac(counts.no_car),
            feedback_fraction: frac(feedback_photos),
        })
    }

    /// Exports photos with not-yet-exported feedback into `dest` as an
    /// evaluation dataset (`images/`, `annotations.json`, `manifest.json`) and
    /// marks their feedback exported. Files already in `dest` are extended, and
    /// the returned manifest lists only this run's items.
    pub fn export_feedback(&self, event_id: Option<&str>, dest: &Path) -> Result<ExportManifest, StoreError> {
        let events: Vec<String> = match event_id {
            Some(e) => vec![self.require_event(e)?.event_id],
            None => self.events()?.into_iter().map(|e| e.event_id).collect(),
        };
        let images_dir = dest.join("images");
        std::fs::create_dir_all(&images_dir).map_err(io_err(&images_dir))?;

        let annotations_path = dest.join("annotations.json");
        let manifest_path = dest.join("manifest.json");
        let mut dataset: DetectionDataset = read_json_or_default(&annotations_path)?;
        let mut all_items: ExportManifest = read_json_or_default(&manifest_path)?;

        let mut run = ExportManifest::default();
        for event in events {
            let collection = feedback_of(&event);
            let mut pending: BTreeMap<String, Vec<FeedbackRecord>> = BTreeMap::new();
            for f in self.feedback(&event)?.into_iter().filter(|f| !f.exported_to_testset) {
                pending.entry(f.photo_id.clone()).or_default().push(f);
            }
            for (photo_id, records) in pending {
                let Some(photo) = self.photo(&photo_id)? else {
                    continue;
                };
                let image = copy_image(&photo, &images_dir)?;
                if !dataset.images.contains(&photo_id) {
                    dataset.images.push(photo_id.clone());
                    dataset.annotations.extend(photo.annotations.iter().map(|c| GroundTruthBox {
                        image_id: photo_id.clone(),
                        class_label: "car".into(),
                        bbox: c.car_box,
                    }));
                }
                run.items.push(ExportItem {
                    photo_id: photo_id.clone(),
                    event_id: event.clone(),
                    image,
                    reasons: records.iter().map(|r| r.reason).collect(),
                });
                for mut r in records {
                    r.exported_to_testset = true;
                    self.docs.put_doc(&collection, &feedback_id(&r.photo_id, r.reason), &r)?;
                }
            }
        }
        all_items.items.extend(run.items.iter().cloned());
        write_json(&annotations_path, &dataset)?;
        write_json(&manifest_path, &all_items)?;
        Ok(run)
    }
}

fn read_json_or_default<T: Default + serde::de::DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    match std::fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| StoreError::Invalid(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(T::default()),
        Err(e) => Err(io_err(path)(e)),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let text = serde_json::to_string_pretty(value).expect("export serializes");
    std::fs::write(path, text).map_err(io_err(path))
}

/// Copies the photo (and its scene sidecar when present). Returns the image
/// path relative to the export root, or `None` when the file is missing.
fn copy_image(photo: &PhotoRecord, images_dir: &Path) -> Result<Option<String>, StoreError> {
    let src = PathBuf::from(&photo.uri);
    let sidecar = sidecar_path(&photo.uri);
    if sidecar.is_file() {
        let to = images_dir.join(format!("{}.{}", photo.photo_id, crate::inference::sidecar::SIDECAR_EXTENSION));
        std::fs::copy(&sidecar, &to).map_err(io_err(&to))?;
    }
    if !src.is_file() {
        return Ok(None);
    }
    let name = match src.extension() {
        Some(ext) => format!("{}.{}", photo.photo_id, ext.to_string_lossy()),
        None => photo.photo_id.clone(),
    };
    let to = images_dir.join(&name);
    std::fs::copy(&src, &to).map_err(io_err(&to))?;
    Ok(Some(format!("images/{name}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BoundingBox;
    use crate::store::MemoryStore;

    fn store_with(event: &str, photos: &[(&str, PhotoStatus)]) -> EventStore {
        let s = EventStore::new(Arc::new(MemoryStore::new()));
        s.ensure_event(event, "race").unwrap();
        for (id, status) in photos {
            let mut p = PhotoRecord::pending(*id, event, format!("/nowhere/{id}.png"), 100, 100).unwrap();
            s.add_photo(&p).unwrap();
            p.status = *status;
            if *status == PhotoStatus::Processed {
                p.annotations.push(CarAnnotation::new(BoundingBox::new(1.0, 1.0, 50.0, 50.0).unwrap(), 1.0));
            }
            s.put_photo(&p).unwrap();
        }
        s
    }

    #[test]
    fn metrics_hundred_photos() {
        let mut photos: Vec<(String, PhotoStatus)> =
            (0..99).map(|i| (format!("p{i:03}"), PhotoStatus::Processed)).collect();
        photos.push(("p099".into(), PhotoStatus::NoCar));
        let refs: Vec<(&str, PhotoStatus)> = photos.iter().map(|(a, b)| (a.as_str(), *b)).collect();
        let s = store_with("e", &refs);
        s.submit_feedback(&FeedbackRecord::new("p005", FeedbackReason::WrongNumber, "")).unwrap();
        let m = s.online_metrics("e").unwrap();
        assert_eq!(m.na_photo_fraction, Some(0.01));
        assert_eq!(m.feedback_fraction, Some(0.01));
    }

    #[test]
    fn metrics_zero_and_empty() {
        let s = store_with("e", &[("a", PhotoStatus::Processed)]);
        let m = s.online_metrics("e").unwrap();
        assert_eq!((m.na_photo_fraction, m.feedback_fraction), (Some(0.0), Some(0.0)));
        let s = store_with("e", &[("a", PhotoStatus::Pending)]);
        let m = s.online_metrics("e").unwrap();
        assert_eq!((m.na_photo_fraction, m.feedback_fraction), (None, None));
        assert!(matches!(s.online_metrics("nope"), Err(StoreError::UnknownEvent(_))));
    }

    #[test]
    fn feedback_idempotent_and_checked() {
        let s = store_with("e", &[("a", PhotoStatus::Processed)]);
        let (_, new) = s.submit_feedback(&FeedbackRecord::new("a", FeedbackReason::WrongTeam, "x")).unwrap();
        assert!(new);
        let (_, new) = s.submit_feedback(&FeedbackRecord::new("a", FeedbackReason::WrongTeam, "y")).unwrap();
        assert!(!new);
        assert_eq!(s.feedback("e").unwrap().len(), 1);
        s.submit_feedback(&FeedbackRecord::new("a", FeedbackReason::Other, "")).unwrap();
        assert_eq!(s.feedback("e").unwrap().len(), 2);
        assert_eq!(s.online_metrics("e").unwrap().feedback_photos, 1);
        assert!(matches!(
            s.submit_feedback(&FeedbackRecord::new("zz", FeedbackReason::Other, "")),
            Err(StoreError::UnknownPhoto(_))
        ));
    }

    #[test]
    fn add_photo_is_idempotent() {
        let s = store_with("e", &[("a", PhotoStatus::Processed)]);
        let again = PhotoRecord::pending("a", "e", "x.png", 10, 10).unwrap();
        assert!(!s.add_photo(&again).unwrap());
        assert_eq!(s.photo("a").unwrap().unwrap().status, PhotoStatus::Processed);
        s.ensure_event("f", "other").unwrap();
        let elsewhere = PhotoRecord::pending("a", "f", "x.png", 10, 10).unwrap();
        assert!(matches!(s.add_photo(&elsewhere), Err(StoreError::Conflict(_))));
    }

    #[test]
    fn pagination_bounds() {
        let ids: Vec<String> = (0..7).map(|i| format!("p{i}")).collect();
        let photos: Vec<(&str, PhotoStatus)> = ids.iter().map(|i| (i.as_str(), PhotoStatus::Processed)).collect();
        let s = store_with("e", &photos);
        let q = |page, size| PhotoQuery { page: Some(page), page_size: Some(size), ..Default::default() };
        let p = s.query("e", &q(3, 3)).unwrap();
        assert_eq!((p.items.len(), p.total, p.total_pages), (1, 7, 3));
        assert!(s.query("e", &q(4, 3)).unwrap().items.is_empty());
        assert!(s.query("e", &q(0, 3)).is_err());
        assert!(s.query("e", &q(1, 501)).is_err());
    }

    #[test]
    fn car_filters_apply_to_one_car() {
        let s = store_with("e", &[]);
        let mut p = PhotoRecord::pending("x", "e", "x.png", 100, 100).unwrap();
        s.add_photo(&p).unwrap();
        let mut a = CarAnnotation::new(BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap(), 1.0);
        a.number = Some("43".into());
        a.orientation = Some(Orientation::Left);
        let mut b = a.clone();
        b.number = Some("11".into());
        b.orientation = Some(Orientation::FrontRight);
        p.annotations = vec![a, b];
        p.status = PhotoStatus::Processed;
        s.put_photo(&p).unwrap();
        let q = |n: &str, o| PhotoQuery { number: Some(n.into()), orientation: Some(o), ..Default::default() };
        assert_eq!(s.query("e", &q("43", Orientation::Left)).unwrap().total, 1);
        assert_eq!(s.query("e", &q("43", Orientation::FrontRight)).unwrap().total, 0);
    }

    #[test]
    fn export_is_incremental() {
        let s = store_with("e", &[("a", PhotoStatus::Processed), ("b", PhotoStatus::Processed)]);
        s.submit_feedback(&FeedbackRecord::new("a", FeedbackReason::WrongNumber, "")).unwrap();
        s.submit_feedback(&FeedbackRecord::new("b", FeedbackReason::MissedCar, "")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = s.export_feedback(Some("e"), dir.path()).unwrap();
        assert_eq!(m.items.len(), 2);
        assert!(s.feedback("e").unwrap().iter().all(|f| f.exported_to_testset));
        let again = s.export_feedback(None, dir.path()).unwrap();
        assert!(again.items.is_empty());
        let ds: DetectionDataset =
            serde_json::from_slice(&std::fs::read(dir.path().join("annotations.json")).unwrap()).unwrap();
        assert_eq!(ds.images, vec!["a".to_string(), "b".to_string()]);
        assert_eq!(ds.annotations.len(), 2);
    }
}
