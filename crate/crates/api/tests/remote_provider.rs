mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use common::spawn;
use racelens_api::provider_router;
use racelens_core::config::PipelineConfig;
use racelens_core::inference::protocol::{CapabilitiesResponse, ProbabilitiesResponse};
use racelens_core::inference::sidecar::NoiseControls;
use racelens_core::inference::{
    all_capabilities, Capability, ImageRegion, InferenceError, InferenceProvider, PhotoRef, RemoteProvider,
    RemoteSettings, SyntheticProvider, SyntheticSettings,
};
use racelens_core::model::{PhotoRecord, PhotoStatus};
use racelens_core::pipeline::Pipeline;
use racelens_core::synth::{generate, SynthConfig};

fn remote(base: &str) -> RemoteProvider {
    RemoteProvider::new(RemoteSettings {
        endpoint: base.into(),
        timeout_ms: 5_000,
        retries: 2,
        send_image_bytes: false,
    })
    .unwrap()
}

#[test]
fn remote_results_equal_local_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut ev = generate(&SynthConfig {
        photos: 40,
        seed: 9,
        noise: NoiseControls { seed: 3, score_jitter: 0.1, dropout_probability: 0.1, embedding_noise: 0.05, keypoint_noise: 1.5 },
        ..Default::default()
    })
    .unwrap();
    ev.write(dir.path(), false).unwrap();
    let settings = SyntheticSettings { manufacturers: ev.manifest.config.manufacturers.clone(), ..Default::default() };
    let local = SyntheticProvider::new(settings.clone());
    let base = spawn(provider_router(Arc::new(SyntheticProvider::new(settings))));
    let remote = remote(&base);
    assert_eq!(remote.capabilities(), all_capabilities());
    assert_eq!(remote.metadata(), local.metadata());

    let config = PipelineConfig { manufacturers: ev.manifest.config.manufacturers.clone(), ..Default::default() };
    let a = Pipeline::new(&local, &config, &ev.roster, None);
    let b = Pipeline::new(&remote, &config, &ev.roster, None);
    for s in &ev.scenes {
        let uri = dir.path().join(format!("{}.png", s.photo_id));
        let photo = PhotoRecord::pending(&s.photo_id, "e", uri.to_string_lossy(), s.width_px, s.height_px).unwrap();
        let x = a.process_photo(&photo, false).unwrap();
        let y = b.process_photo(&photo, false).unwrap();
        assert_eq!(x.record, y.record, "{}", s.photo_id);
        assert_eq!(x.embeddings, y.embeddings);
    }
}

#[test]
fn missing_capability_maps_to_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    let mut ev = generate(&SynthConfig { photos: 3, no_car_fraction: 0.0, ..Default::default() }).unwrap();
    ev.write(dir.path(), false).unwrap();
    let mut caps = all_capabilities();
    caps.remove(&Capability::EmbeddingEncoder);
    let base = spawn(provider_router(Arc::new(SyntheticProvider::new(SyntheticSettings {
        capabilities: caps,
        ..Default::default()
    }))));
    let remote = remote(&base);
    assert!(!remote.capabilities().contains(&Capability::EmbeddingEncoder));

    let s = &ev.scenes[0];
    let uri = dir.path().join(format!("{}.png", s.photo_id));
    let region = ImageRegion::full(PhotoRef {
        photo_id: s.photo_id.clone(),
        uri: uri.to_string_lossy().into_owned(),
        width_px: s.width_px,
        height_px: s.height_px,
    });
    assert_eq!(
        remote.encode_embedding(&region).unwrap_err(),
        InferenceError::ProviderUnavailable(Capability::EmbeddingEncoder)
    );
    let config = PipelineConfig::default();
    let photo = PhotoRecord::pending(&s.photo_id, "e", uri.to_string_lossy(), s.width_px, s.height_px).unwrap();
    let err = Pipeline::new(&remote, &config, &ev.roster, None).process_photo(&photo, false).unwrap_err();
    assert!(err.is_unavailable());

    let missing = ImageRegion::full(PhotoRef {
        photo_id: "ghost".into(),
        uri: "/nowhere/ghost.png".into(),
        width_px: 10,
        height_px: 10,
    });
    assert!(matches!(remote.detect_cars(&missing), Err(InferenceError::UnreadableImage { .. })));
}

#[test]
fn server_errors_are_retried() {
    let calls = Arc::new(AtomicUsize::new(0));
    let counter = calls.clone();
    let app = Router::new()
        .route(
            "/v1/capabilities",
            get(|| async {
                Json(CapabilitiesResponse {
                    capabilities: vec![Capability::OrientationClassifier],
                    metadata: SyntheticProvider::new(SyntheticSettings::default()).metadata(),
                })
            }),
        )
        .route(
            "/v1/orientation_classifier",
            post(move || {
                let n = counter.fetch_add(1, Ordering::SeqCst);
                async move {
                    if n < 2 {
                        Err(StatusCode::INTERNAL_SERVER_ERROR)
                    } else {
                        Ok(Json(ProbabilitiesResponse { probabilities: vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0] }))
                    }
                }
            }),
        );
    let base = spawn(app);
    let remote = remote(&base);
    let region = ImageRegion::full(PhotoRef { photo_id: "x".into(), uri: "x.png".into(), width_px: 8, height_px: 8 });
    assert_eq!(remote.classify_orientation(&region).unwrap()[1], 1.0);
    assert_eq!(calls.load(Ordering::SeqCst), 3);

    // With retries exhausted the server counts as unreachable.
    calls.store(0, Ordering::SeqCst);
    let stingy = RemoteProvider::new(RemoteSettings { endpoint: base, retries: 1, ..Default::default() }).unwrap();
    let err = stingy.classify_orientation(&region).unwrap_err();
    assert!(matches!(err, InferenceError::Unreachable(_)), "{err:?}");
}

#[test]
fn unreachable_endpoint_leaves_photo_pending() {
    let remote = RemoteProvider::new(RemoteSettings {
        endpoint: "http://127.0.0.1:1".into(),
        timeout_ms: 300,
        retries: 0,
        ..Default::default()
    })
    .unwrap();
    assert!(remote.check_available().unwrap_err().is_unavailable());
    assert!(remote.capabilities().is_empty());
    let config = PipelineConfig::default();
    let roster = Default::default();
    let photo = PhotoRecord::pending("p", "e", "p.png", 10, 10).unwrap();
    let out = Pipeline::new(&remote, &config, &roster, None).process_photo(&photo, false);
    match out {
        Err(e) => assert!(e.is_unavailable()),
        Ok(o) => assert_eq!(o.record.status, PhotoStatus::Pending),
    }
}
