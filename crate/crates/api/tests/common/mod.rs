#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use axum::Router;
use parking_lot::{Condvar, Mutex};
use racelens_core::inference::{
    CapabilitySet, ImageRegion, InferenceError, InferenceProvider, ProviderMetadata, WheelDetection,
};
use racelens_core::model::{Detection, Embedding, WheelKeypoints};
use racelens_core::number::PatchCandidate;
use serde_json::Value;

pub fn schema_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/schema")
}

/// Validates `instance` against the published schema `name`.
pub fn assert_valid(name: &str, instance: &Value) {
    let path = schema_dir().join(format!("{name}.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}\n{instance}");
}

/// Serves `app` on an ephemeral port from a background runtime.
pub fn spawn(app: Router) -> String {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || rt.block_on(async { axum::serve(listener, app).await.unwrap() }));
    format!("http://{addr}")
}

/// Provider whose car detector blocks until [`Gate::open`] is called.
pub struct Gate<P> {
    inner: P,
    open: Mutex<bool>,
    cv: Condvar,
}

impl<P> Gate<P> {
    pub fn new(inner: P) -> Arc<Self> {
        Arc::new(Self {
            inner,
            open: Mutex::new(false),
            cv: Condvar::new(),
        })
    }

    pub fn open(&self) {
        *self.open.lock() = true;
        self.cv.notify_all();
    }
}

impl<P: InferenceProvider> InferenceProvider for Gate<P> {
    fn capabilities(&self) -> CapabilitySet {
        self.inner.capabilities()
    }
    fn metadata(&self) -> ProviderMetadata {
        self.inner.metadata()
    }
    fn detect_cars(&self, photo: &ImageRegion) -> Result<Vec<Detection>, InferenceError> {
        let mut open = self.open.lock();
        while !*open {
            self.cv.wait(&mut open);
        }
        drop(open);
        self.inner.detect_cars(photo)
    }
    fn detect_attributes(&self, crop: &ImageRegion) -> Result<Vec<Detection>, InferenceError> {
        self.inner.detect_attributes(crop)
    }
    fn propose_digit_patches(&self, region: &ImageRegion) -> Result<Vec<PatchCandidate>, InferenceError> {
        self.inner.propose_digit_patches(region)
    }
    fn classify_digit(&self, patch: &ImageRegion) -> Result<Vec<f64>, InferenceError> {
        self.inner.classify_digit(patch)
    }
    fn classify_manufacturer(&self, crop: &ImageRegion) -> Result<Vec<f64>, InferenceError> {
        self.inner.classify_manufacturer(crop)
    }
    fn classify_orientation(&self, crop: &ImageRegion) -> Result<Vec<f64>, InferenceError> {
        self.inner.classify_orientation(crop)
    }
    fn encode_embedding(&self, crop: &ImageRegion) -> Result<Embedding, InferenceError> {
        self.inner.encode_embedding(crop)
    }
    fn detect_wheels(&self, crop: &ImageRegion) -> Result<Vec<WheelDetection>, InferenceError> {
        self.inner.detect_wheels(crop)
    }
    fn predict_wheel_keypoints(&self, crop: &ImageRegion) -> Result<WheelKeypoints, InferenceError> {
        self.inner.predict_wheel_keypoints(crop)
    }
}
