//! Per-photo enrichment: cars, then per car number, manufacturer,
//! orientation, team embedding and wheel measurements.

use tracing::{debug, warn};

use crate::config::{ManufacturerSource, PipelineConfig};
use crate::inference::{argmax, Gateway, ImageRegion, InferenceError, InferenceProvider, PhotoRef};
use crate::measure::{measure_car, WheelObservation};
use crate::model::{
    BoundingBox, CarAnnotation, Detection, DetectionClass, Embedding, ModelError, NumberRoster,
    Orientation, PhotoRecord, PhotoStatus, WheelAnnotation,
};
use crate::number::{assemble_number, find_digit_patches, DigitPatch, NumberReading};
use crate::team::TeamCentroidStore;

/// Region of `photo` around `bbox`, grown by `pad_fraction` per side and
/// clipped to the photo.
pub fn crop(photo: &PhotoRef, bbox: &BoundingBox, pad_fraction: f64) -> Result<ImageRegion, ModelError> {
    bbox.validate_within(photo.width_px as f64, photo.height_px as f64)?;
    Ok(ImageRegion::around(photo.clone(), bbox, pad_fraction))
}

/// Highest-scoring number region; ties go to the larger box, then the
/// leftmost one.
pub fn select_primary_number_region(detections: &[Detection]) -> Option<&Detection> {
    detections
        .iter()
        .filter(|d| d.class_label == DetectionClass::NumberPlateRegion)
        .min_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(b.bbox.area().total_cmp(&a.bbox.area()))
                .then(a.bbox.x_min.total_cmp(&b.bbox.x_min))
        })
}

/// Result of processing one photo.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessOutcome {
    pub record: PhotoRecord,
    /// `(embedding_ref, embedding)` for every car that was encoded.
    pub embeddings: Vec<(String, Embedding)>,
    /// Number readings alongside each embedding, for later reassignment.
    pub readings: Vec<Option<NumberReading>>,
}

pub struct Pipeline<'a> {
    gateway: Gateway<'a>,
    config: &'a PipelineConfig,
    roster: &'a NumberRoster,
    teams: Option<&'a TeamCentroidStore>,
}

/// Ignores a failed optional stage unless the provider is unavailable.
fn optional<T>(stage: &str, photo_id: &str, r: Result<T, InferenceError>) -> Result<Option<T>, InferenceError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_unavailable() => Err(e),
        Err(e) => {
            warn!(photo_id, stage, error = %e, "stage failed");
            Ok(None)
        }
    }
}

pub fn embedding_ref(photo_id: &str, car_index: usize) -> String {
    format!("{photo_id}#{car_index}")
}

impl<'a> Pipeline<'a> {
    pub fn new(
        provider: &'a dyn InferenceProvider,
        config: &'a PipelineConfig,
        roster: &'a NumberRoster,
        teams: Option<&'a TeamCentroidStore>,
    ) -> Self {
        Self {
            gateway: Gateway::new(provider, config.embedding_dim),
            config,
            roster,
            teams,
        }
    }

    pub fn gateway(&self) -> Gateway<'a> {
        self.gateway
    }

    /// Enriches a pending photo.
    ///
    /// Records that are not pending come back unchanged unless `force` is
    /// set. An unavailable provider yields an error and the caller keeps the
    /// photo pending; a car detector failure of any other kind marks the photo
    /// failed.
    pub fn process_photo(&self, photo: &PhotoRecord, force: bool) -> Result<ProcessOutcome, InferenceError> {
        let mut record = photo.clone();
        let unchanged = |record| ProcessOutcome {
            record,
            embeddings: Vec::new(),
            readings: Vec::new(),
        };
        if photo.status != PhotoStatus::Pending && !force {
            return Ok(unchanged(record));
        }
        record.annotations.clear();
        if let Err(e) = photo.validate() {
            warn!(photo_id = %photo.photo_id, error = %e, "invalid photo record");
            record.status = PhotoStatus::Failed;
            return Ok(unchanged(record));
        }

        let full = ImageRegion::full(PhotoRef::from(photo));
        let cars = match self.gateway.detect_cars(&full) {
            Ok(c) => c,
            Err(e) if e.is_unavailable() => return Err(e),
            Err(e) => {
                warn!(photo_id = %photo.photo_id, error = %e, "car detection failed");
                record.status = PhotoStatus::Failed;
                return Ok(unchanged(record));
            }
        };
        let cars: Vec<&Detection> = cars
            .iter()
            .filter(|d| d.score >= self.config.car_threshold)
            .collect();

        let mut embeddings = Vec::new();
        let mut readings = Vec::new();
        let mut pending_team = Vec::new();
        for (i, det) in cars.iter().enumerate() {
            let (ann, emb, reading) = self.analyze_car(&full.photo, det, i)?;
            if let Some(e) = emb {
                pending_team.push((record.annotations.len(), e.clone(), reading.clone()));
                embeddings.push((embedding_ref(&photo.photo_id, i), e));
                readings.push(reading);
            }
            record.annotations.push(ann);
        }

        // Team observations only after every fallible stage succeeded, so a
        // retried photo never contributes references twice.
        if let Some(teams) = self.teams {
            for (idx, emb, reading) in pending_team {
                match teams.observe(&emb, reading.as_ref()) {
                    Ok(t) => record.annotations[idx].team_assignment = t,
                    Err(e) => warn!(photo_id = %photo.photo_id, error = %e, "team observation failed"),
                }
            }
        }

        record.status = if record.annotations.is_empty() {
            PhotoStatus::NoCar
        } else {
            PhotoStatus::Processed
        };
        Ok(ProcessOutcome {
            record,
            embeddings,
            readings,
        })
    }

    fn analyze_car(
        &self,
        photo: &PhotoRef,
        det: &Detection,
        index: usize,
    ) -> Result<(CarAnnotation, Option<Embedding>, Option<NumberReading>), InferenceError> {
        let stages = &self.config.stages;
        let id = photo.photo_id.as_str();
        let mut ann = CarAnnotation::new(det.bbox, det.score);
        let car = ImageRegion::around(photo.clone(), &det.bbox, self.config.pad_fraction);

        let needs_attrs = stages.number
            || (stages.manufacturer && self.config.manufacturer_source == ManufacturerSource::BrandMark);
        let attrs: Vec<Detection> = if needs_attrs {
            optional("attributes", id, self.gateway.detect_attributes(&car))?
                .unwrap_or_default()
                .into_iter()
                .filter(|d| d.score >= self.config.attribute_threshold)
                .collect()
        } else {
            Vec::new()
        };

        let mut reading = None;
        if stages.number {
            if let Some(region) = select_primary_number_region(&attrs) {
                reading = optional("number", id, self.read_number(&car.sub_region(&region.bbox, 0.0)))?.flatten();
            }
            if let Some(r) = &reading {
                ann.number = Some(r.number.clone());
                ann.number_confidence = Some(r.confidence);
                ann.off_roster = r.off_roster();
            }
        }

        if stages.manufacturer {
            let mark = attrs
                .iter()
                .find(|d| d.class_label == DetectionClass::ManufacturerMark);
            let source = match (self.config.manufacturer_source, mark) {
                (ManufacturerSource::BrandMark, Some(m)) => car.sub_region(&m.bbox, 0.0),
                _ => car.clone(),
            };
            let labels = &self.config.manufacturers;
            let probs = optional("manufacturer", id, self.gateway.classify_manufacturer(&source, labels.len()))?;
            ann.manufacturer = probs.and_then(|p| argmax(&p)).map(|i| labels[i].clone());
        }

        if stages.orientation {
            let probs = optional("orientation", id, self.gateway.classify_orientation(&car))?;
            ann.orientation = probs.and_then(|p| argmax(&p)).and_then(Orientation::from_index);
        }

        let mut embedding = None;
        if stages.team {
            embedding = optional("embedding", id, self.gateway.encode_embedding(&car))?;
            if embedding.is_some() {
                ann.embedding_ref = Some(embedding_ref(id, index));
            }
        }

        if stages.measurement {
            if let Some(o) = ann.orientation.filter(|o| self.config.measurement.eligible_orientations.contains(o)) {
                self.measure(&car, o, &mut ann)?;
            }
        }
        Ok((ann, embedding, reading))
    }

    fn read_number(&self, region: &ImageRegion) -> Result<Option<NumberReading>, InferenceError> {
        let candidates = self.gateway.propose_digit_patches(region)?;
        let boxes = find_digit_patches(&candidates, region.width(), region.height());
        let mut patches = Vec::with_capacity(boxes.len());
        for b in boxes {
            let probs = self.gateway.classify_digit(&region.sub_region(&b, 0.0))?;
            let patch = DigitPatch::new(b, probs).map_err(|e| InferenceError::InvalidResponse(e.to_string()))?;
            patches.push(patch);
        }
        Ok(assemble_number(&patches, self.roster, self.config.min_digit_confidence))
    }

    fn measure(&self, car: &ImageRegion, orientation: Orientation, ann: &mut CarAnnotation) -> Result<(), InferenceError> {
        let id = car.photo.photo_id.as_str();
        let Some(wheels) = optional("wheels", id, self.gateway.detect_wheels(car))? else {
            return Ok(());
        };
        let mut observations = Vec::new();
        for w in wheels.iter().filter(|w| w.score >= self.config.wheel_threshold) {
            let wheel_crop = car.sub_region(&w.bbox, self.config.wheel_pad_fraction);
            let Some(kp) = optional("keypoints", id, self.gateway.predict_wheel_keypoints(&wheel_crop))? else {
                continue;
            };
            let obs = WheelObservation {
                wheel_box: car.box_to_parent(&w.bbox),
                crop: wheel_crop.rect,
                keypoints: kp,
            };
            ann.wheels.push(WheelAnnotation {
                wheel_box: obs.wheel_box,
                keypoints: obs.keypoints_in_photo(),
            });
            observations.push(obs);
        }
        match measure_car(&observations, orientation, &self.config.measurement) {
            Ok(m) => ann.measurements = m,
            Err(e) => debug!(photo_id = id, error = %e, "no measurement"),
        }
        Ok(())
    }
}
