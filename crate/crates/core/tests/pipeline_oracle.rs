use std::collections::BTreeMap;
use std::sync::Arc;

use racelens_core::batch::{process_event, BatchOptions};
use racelens_core::config::PipelineConfig;
use racelens_core::inference::sidecar::{NoiseControls, SceneSidecar};
use racelens_core::inference::{all_capabilities, Capability, PatchSource, SyntheticProvider, SyntheticSettings};
use racelens_core::measure::MeasurementKind;
use racelens_core::model::{NumberRoster, PhotoRecord, PhotoStatus};
use racelens_core::pipeline::Pipeline;
use racelens_core::store::{EventStore, MemoryStore};
use racelens_core::synth::{generate, SynthConfig, SyntheticEvent};

fn provider_for(ev: &SyntheticEvent, settings: SyntheticSettings) -> SyntheticProvider {
    let p = SyntheticProvider::new(settings);
    for s in &ev.scenes {
        p.insert_scene(s.clone());
    }
    p
}

fn ingest(ev: &SyntheticEvent) -> EventStore {
    let store = EventStore::new(Arc::new(MemoryStore::new()));
    store.ensure_event(&ev.manifest.config.event_id, "synthetic").unwrap();
    for s in &ev.scenes {
        let rec = PhotoRecord::pending(&s.photo_id, &ev.manifest.config.event_id, format!("/synthetic/{}.png", s.photo_id), s.width_px, s.height_px).unwrap();
        store.add_photo(&rec).unwrap();
    }
    store
}

/// Pairs each stored annotation with the sidecar car it came from. With zero
/// noise the pipeline keeps every car, in detector order (all scores equal,
/// stable sort), which is sidecar order.
fn compare(ev: &SyntheticEvent, store: &EventStore) -> BTreeMap<&'static str, (usize, usize)> {
    let mut tally: BTreeMap<&'static str, (usize, usize)> = BTreeMap::new();
    let mut count = |field: &'static str, ok: bool| {
        let e = tally.entry(field).or_default();
        e.0 += usize::from(ok);
        e.1 += 1;
    };
    let scenes: BTreeMap<&str, &SceneSidecar> = ev.scenes.iter().map(|s| (s.photo_id.as_str(), s)).collect();
    for photo in store.photos(&ev.manifest.config.event_id).unwrap() {
        let scene = scenes[photo.photo_id.as_str()];
        count("status", photo.status == if scene.cars.is_empty() { PhotoStatus::NoCar } else { PhotoStatus::Processed });
        count("car_count", photo.annotations.len() == scene.cars.len());
        for (ann, car) in photo.annotations.iter().zip(&scene.cars) {
            count("car_box", ann.car_box == car.car_box);
            count("number", ann.number.as_deref() == car.visible_number());
            count("manufacturer", ann.manufacturer.as_deref() == Some(car.manufacturer.as_str()));
            count("orientation", ann.orientation == Some(car.orientation));
            count("team", ann.team_assignment.as_deref() == Some(car.team.as_str()));
            if let Some(truth) = car.truth {
                let center = ann.measurements.iter().find(|m| m.kind == MeasurementKind::CenterLine);
                count(
                    "center_line",
                    center.is_some_and(|m| (m.length_mm - truth.center_line_mm).abs() <= 0.005 * truth.center_line_mm),
                );
                let ground = ann.measurements.iter().find(|m| m.kind == MeasurementKind::GroundLine);
                count(
                    "ground_line",
                    match (ground, truth.ground_line_mm) {
                        (Some(m), Some(t)) => (m.length_mm - t).abs() <= 0.005 * t,
                        (None, None) => true,
                        _ => false,
                    },
                );
            } else {
                count("no_measurement", ann.measurements.is_empty());
            }
        }
    }
    tally
}

fn config_for(ev: &SyntheticEvent) -> PipelineConfig {
    PipelineConfig {
        manufacturers: ev.manifest.config.manufacturers.clone(),
        ..Default::default()
    }
}

#[test]
fn zero_noise_event_matches_sidecars_exactly() {
    let ev = generate(&SynthConfig { photos: 300, seed: 11, ..Default::default() }).unwrap();
    let store = ingest(&ev);
    let provider = provider_for(&ev, SyntheticSettings::default());
    let config = config_for(&ev);
    let report = process_event(&store, "synthetic", &provider, &config, &ev.roster, &BatchOptions::default()).unwrap();
    assert_eq!(report.processed + report.no_car, 300);
    assert_eq!(report.no_car, 3);

    let tally = compare(&ev, &store);
    for (field, (ok, total)) in &tally {
        assert_eq!(ok, total, "{field}: {ok}/{total}");
    }
    assert!(tally["center_line"].1 > 50);
    assert!(tally["ground_line"].1 > 50);

    let metrics = store.online_metrics("synthetic").unwrap();
    assert_eq!(metrics.na_photo_fraction, Some(0.01));
}

#[test]
fn worker_count_does_not_change_results() {
    let ev = generate(&SynthConfig { photos: 80, seed: 2, ..Default::default() }).unwrap();
    let config = config_for(&ev);
    let provider = provider_for(&ev, SyntheticSettings::default());
    let one = ingest(&ev);
    process_event(&one, "synthetic", &provider, &config, &ev.roster, &BatchOptions::default()).unwrap();
    let four = ingest(&ev);
    let opts = BatchOptions { workers: 4, ..Default::default() };
    process_event(&four, "synthetic", &provider, &config, &ev.roster, &opts).unwrap();
    assert_eq!(one.photos("synthetic").unwrap(), four.photos("synthetic").unwrap());
    assert_eq!(one.teams("synthetic").unwrap(), four.teams("synthetic").unwrap());
}

#[test]
fn processing_is_idempotent_and_resumable() {
    let ev = generate(&SynthConfig { photos: 40, seed: 3, ..Default::default() }).unwrap();
    let config = config_for(&ev);
    let provider = provider_for(&ev, SyntheticSettings::default());
    let store = ingest(&ev);

    let roster = &ev.roster;
    let pipeline = Pipeline::new(&provider, &config, roster, None);
    let first = store.photo("p00000").unwrap().unwrap();
    let done = pipeline.process_photo(&first, false).unwrap().record;
    assert_ne!(done.status, PhotoStatus::Pending);
    assert_eq!(pipeline.process_photo(&done, false).unwrap().record, done);

    // Half the photos finished earlier; the batch completes only the rest.
    for p in store.photos("synthetic").unwrap().into_iter().take(20) {
        let out = pipeline.process_photo(&p, false).unwrap();
        store.put_photo(&out.record).unwrap();
    }
    let report = process_event(&store, "synthetic", &provider, &config, roster, &BatchOptions::default()).unwrap();
    assert_eq!(report.total, 20);
    let again = process_event(&store, "synthetic", &provider, &config, roster, &BatchOptions::default()).unwrap();
    assert_eq!(again.total, 0);
}

#[test]
fn unavailable_provider_leaves_photos_pending() {
    let ev = generate(&SynthConfig { photos: 10, no_car_fraction: 0.0, ..Default::default() }).unwrap();
    let config = config_for(&ev);
    let mut caps = all_capabilities();
    caps.remove(&Capability::CarDetector);
    let provider = provider_for(&ev, SyntheticSettings { capabilities: caps, ..Default::default() });
    let store = ingest(&ev);
    let report = process_event(&store, "synthetic", &provider, &config, &ev.roster, &BatchOptions::default()).unwrap();
    assert_eq!(report.left_pending, 10);
    assert!(report.provider_error.is_some());
    assert!(store.photos("synthetic").unwrap().iter().all(|p| p.status == PhotoStatus::Pending));

    // A missing downstream capability also keeps the photo pending.
    let mut caps = all_capabilities();
    caps.remove(&Capability::WheelKeypoints);
    let provider = provider_for(&ev, SyntheticSettings { capabilities: caps, ..Default::default() });
    let pipeline = Pipeline::new(&provider, &config, &ev.roster, None);
    let side = ev.scenes.iter().find(|s| s.cars.iter().any(|c| c.orientation.is_side_view())).unwrap();
    let photo = store.photo(&side.photo_id).unwrap().unwrap();
    assert!(pipeline.process_photo(&photo, false).unwrap_err().is_unavailable());
}

#[test]
fn unreadable_photo_is_failed() {
    let provider = SyntheticProvider::new(SyntheticSettings::default());
    let config = PipelineConfig::default();
    let roster = NumberRoster::new(["1"]);
    let pipeline = Pipeline::new(&provider, &config, &roster, None);
    let photo = PhotoRecord::pending("ghost", "e", "/does/not/exist.png", 100, 100).unwrap();
    assert_eq!(pipeline.process_photo(&photo, false).unwrap().record.status, PhotoStatus::Failed);
}

#[test]
fn disabling_stages_keeps_upstream_outputs() {
    let ev = generate(&SynthConfig {
        photos: 30,
        seed: 8,
        noise: NoiseControls { seed: 1, score_jitter: 0.2, dropout_probability: 0.1, embedding_noise: 0.05, keypoint_noise: 1.0 },
        ..Default::default()
    })
    .unwrap();
    let provider = provider_for(&ev, SyntheticSettings::default());
    let full = config_for(&ev);
    let mut reduced = full.clone();
    reduced.stages.orientation = false;
    reduced.stages.team = false;
    reduced.stages.measurement = false;
    for scene in &ev.scenes {
        let rec = PhotoRecord::pending(&scene.photo_id, "e", "x.png", scene.width_px, scene.height_px).unwrap();
        let a = Pipeline::new(&provider, &full, &ev.roster, None).process_photo(&rec, false).unwrap().record;
        let b = Pipeline::new(&provider, &reduced, &ev.roster, None).process_photo(&rec, false).unwrap().record;
        assert_eq!(a.status, b.status);
        for (x, y) in a.annotations.iter().zip(&b.annotations) {
            assert_eq!((x.car_box, x.car_score), (y.car_box, y.car_score));
            assert_eq!((&x.number, x.number_confidence), (&y.number, y.number_confidence));
            assert_eq!(x.manufacturer, y.manufacturer);
            assert!(y.orientation.is_none() && y.embedding_ref.is_none() && y.measurements.is_empty());
        }
    }
}

#[test]
fn dropout_rate_matches_within_three_sigma() {
    let p = 0.2;
    let ev = generate(&SynthConfig {
        photos: 400,
        seed: 5,
        hidden_number_fraction: 0.0,
        no_car_fraction: 0.0,
        noise: NoiseControls { seed: 77, dropout_probability: p, ..Default::default() },
        ..Default::default()
    })
    .unwrap();
    let provider = provider_for(&ev, SyntheticSettings::default());
    let config = config_for(&ev);
    let pipeline = Pipeline::new(&provider, &config, &ev.roster, None);

    let total_cars: usize = ev.scenes.iter().map(|s| s.cars.len()).sum();
    let (mut detected, mut with_number) = (0usize, 0usize);
    for s in &ev.scenes {
        let rec = PhotoRecord::pending(&s.photo_id, "e", "x.png", s.width_px, s.height_px).unwrap();
        let out = pipeline.process_photo(&rec, false).unwrap().record;
        detected += out.annotations.len();
        with_number += out.annotations.iter().filter(|a| a.number.is_some()).count();
    }
    let within = |missing: usize, n: usize| {
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        (missing as f64 - n as f64 * p).abs() <= 3.0 * sigma
    };
    assert!(within(total_cars - detected, total_cars), "cars missing {} of {}", total_cars - detected, total_cars);
    assert!(within(detected - with_number, detected), "numbers missing {} of {}", detected - with_number, detected);
}

#[test]
fn pixel_segmentation_reads_rendered_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let mut ev = generate(&SynthConfig { photos: 12, seed: 21, no_car_fraction: 0.0, ..Default::default() }).unwrap();
    ev.write(dir.path(), true).unwrap();
    let provider = SyntheticProvider::new(SyntheticSettings { patch_source: PatchSource::Pixels, ..Default::default() });
    let config = config_for(&ev);
    let pipeline = Pipeline::new(&provider, &config, &ev.roster, None);
    let mut checked = 0;
    for s in &ev.scenes {
        let uri = dir.path().join(format!("{}.png", s.photo_id));
        let rec = PhotoRecord::pending(&s.photo_id, "e", uri.to_string_lossy(), s.width_px, s.height_px).unwrap();
        let out = pipeline.process_photo(&rec, false).unwrap().record;
        for (ann, car) in out.annotations.iter().zip(&s.cars) {
            assert_eq!(ann.number.as_deref(), car.visible_number(), "{}", s.photo_id);
            checked += 1;
        }
    }
    assert!(checked > 12);
}
