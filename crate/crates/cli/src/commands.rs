use std::io::Write;
use std::path::{Path, PathBuf};

use racelens_api::AppState;
use racelens_core::anchors::kmeans_anchors;
use racelens_core::batch::{process_event, BatchOptions};
use racelens_core::config::{Config, ProviderConfig, StoreConfig};
use racelens_core::eval::{
    accuracy_table, evaluate_detections, keypoint_ap_ar, split_dataset, DetectionDataset, GroundTruthBox,
    KeypointGroundTruth, KeypointPrediction, LabelPair, PredictedBox, SplitFractions,
};
use racelens_core::inference::photo_dimensions;
use racelens_core::inference::sidecar::SIDECAR_EXTENSION;
use racelens_core::model::{BoundingBox, FeedbackReason, FeedbackRecord, NumberRoster, PhotoRecord};
use racelens_core::store::{open_store, EventStore};
use racelens_core::synth::{generate, SynthConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::error::CliError;

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

pub fn run(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::SynthGen(a) => synth_gen(a, seed),
        Command::Process(a) => process(a, &config(&cli.config, &cli.store, cli.seed)?),
        Command::Feedback(a) => feedback(a, &config(&cli.config, &cli.store, cli.seed)?),
        Command::Metrics(a) => {
            let store = open(&config(&cli.config, &cli.store, cli.seed)?)?;
            emit(&store.online_metrics(&a.event)?, None)
        }
        Command::ExportFeedback(a) => {
            let store = open(&config(&cli.config, &cli.store, cli.seed)?)?;
            let event = if a.all { None } else { a.event.as_deref() };
            emit(&store.export_feedback(event, &a.out)?, None)
        }
        Command::EvaluateDetections(a) => evaluate_detections_cmd(a),
        Command::EvaluateClassification(a) => {
            let pairs: Vec<LabelPair> = read_json(&a.pairs)?;
            let report = accuracy_table(&pairs, &a.classes)?;
            emit(&report, a.gate.report.as_deref())?;
            gate("accuracy", report.overall, a.gate.gate)
        }
        Command::EvaluateKeypoints(a) => {
            let preds: Vec<KeypointPrediction> = read_json(&a.predictions)?;
            let gt: Vec<KeypointGroundTruth> = read_json(&a.ground_truth)?;
            let report = keypoint_ap_ar(&preds, &gt, &[], a.falloff)?;
            emit(&report, a.gate.report.as_deref())?;
            match a.gate_metric {
                KeypointMetric::Ap => gate("keypoint AP", report.ap, a.gate.gate),
                KeypointMetric::Ar => gate("keypoint AR", report.ar, a.gate.gate),
            }
        }
        Command::Split(a) => split(a, seed),
        Command::Anchors(a) => {
            let boxes = read_shapes(&a.labels)?;
            let set = kmeans_anchors(&boxes, a.k, a.distance.into(), seed).map_err(|e| CliError::Data(e.to_string()))?;
            emit(&set, a.out.as_deref())
        }
        Command::Serve(a) => serve(a, config(&cli.config, &cli.store, cli.seed)?),
    }
}

fn config(path: &Option<PathBuf>, store: &Option<PathBuf>, seed: Option<u64>) -> Result<Config, CliError> {
    let mut config = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    config.apply_process_env()?;
    if let Some(dir) = store {
        config.store = StoreConfig::File { path: dir.clone(), fsync: true };
    }
    if let (Some(s), ProviderConfig::Synthetic { seed, .. }) = (seed, &mut config.provider) {
        *seed = s;
    }
    Ok(config)
}

fn open(config: &Config) -> Result<EventStore, CliError> {
    Ok(EventStore::new(open_store(&config.store)?))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::file(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::file(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::file(path, e))
}

/// Writes `value` to `path`, or pretty JSON on stdout.
fn emit<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => write_json(p, value),
        None => {
            let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Data(e.to_string())),
                _ => Ok(()),
            }
        }
    }
}

fn gate(metric: &'static str, value: f64, threshold: Option<f64>) -> Result<(), CliError> {
    match threshold {
        Some(g) if value < g => Err(CliError::Gate { metric, value, gate: g }),
        _ => Ok(()),
    }
}

fn synth_gen(a: SynthGenArgs, seed: u64) -> Result<(), CliError> {
    let config = SynthConfig {
        event_id: a.event_id,
        photos: a.photos,
        teams: a.teams,
        seed,
        no_car_fraction: a.no_car_fraction,
        feedback_fraction: a.feedback_fraction,
        hidden_number_fraction: a.hidden_number_fraction,
        hidden_ground_fraction: a.hidden_ground_fraction,
        max_cars_per_photo: a.max_cars,
        noise: racelens_core::inference::sidecar::NoiseControls {
            seed,
            score_jitter: a.score_jitter,
            dropout_probability: a.dropout,
            embedding_noise: a.embedding_noise,
            keypoint_noise: a.keypoint_noise,
        },
        ..Default::default()
    };
    let mut event = generate(&config).map_err(|e| CliError::Usage(e.to_string()))?;
    event.write(&a.out, !a.no_render).map_err(|e| CliError::Data(e.to_string()))?;
    tracing::info!(photos = event.scenes.len(), out = %a.out.display(), "synthetic event written");
    Ok(())
}

/// Photo id and URI for each image in `dir`, plus sidecars without an image.
fn discover(dir: &Path) -> Result<Vec<(String, PathBuf)>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::file(dir, e))?;
    let suffix = format!(".{SIDECAR_EXTENSION}");
    let mut images = std::collections::BTreeMap::new();
    let mut sidecars = std::collections::BTreeSet::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::file(dir, e))?.path();
        if !path.is_file() {
            continue;
        }
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(&suffix) {
            sidecars.insert(stem.to_string());
            continue;
        }
        let ext = path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase());
        if ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            images.insert(stem, path);
        }
    }
    for stem in sidecars {
        images.entry(stem.clone()).or_insert_with(|| dir.join(format!("{stem}.png")));
    }
    Ok(images.into_iter().collect())
}

fn process(a: ProcessArgs, config: &Config) -> Result<(), CliError> {
    let dir = &a.dir;
    if !dir.is_dir() {
        return Err(CliError::file(dir, "not a directory"));
    }
    let event_id = match a.event {
        Some(e) => e,
        None => dir
            .canonicalize()
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .ok_or_else(|| CliError::Usage(format!("cannot derive an event id from {}", dir.display())))?,
    };
    let roster: NumberRoster = match a.roster.or_else(|| Some(dir.join("roster.json")).filter(|p| p.exists())) {
        Some(p) => read_json(&p)?,
        None => config.load_roster()?,
    };
    let store = open(config)?;
    store.ensure_event(&event_id, &event_id)?;
    let mut added = 0;
    for (photo_id, uri) in discover(dir)? {
        let uri = uri.to_string_lossy().into_owned();
        let (w, h) = photo_dimensions(&uri).map_err(|e| CliError::Data(format!("{photo_id}: {e}")))?;
        let photo = PhotoRecord::pending(&photo_id, &event_id, uri, w, h).map_err(|e| CliError::Data(e.to_string()))?;
        added += usize::from(store.add_photo(&photo)?);
    }
    tracing::info!(event = %event_id, added, "photos registered");

    let provider = config
        .provider
        .build(&config.pipeline.manufacturers)
        .map_err(|e| CliError::Provider(e.to_string()))?;
    let options = BatchOptions {
        workers: a.workers.unwrap_or(config.workers).max(1),
        force: a.force,
        progress: None,
    };
    let report = process_event(&store, &event_id, provider.as_ref(), &config.pipeline, &roster, &options)
        .map_err(|e| CliError::Data(e.to_string()))?;

    let out = a.out.unwrap_or_else(|| dir.join("records"));
    std::fs::create_dir_all(&out).map_err(|e| CliError::file(&out, e))?;
    for photo in store.photos(&event_id)? {
        write_json(&out.join(format!("{}.json", photo.photo_id)), &photo)?;
    }
    emit(&report, None)?;
    match report.provider_error {
        Some(e) => Err(CliError::Provider(e)),
        None => Ok(()),
    }
}

#[derive(Deserialize)]
struct FeedbackItem {
    photo_id: String,
    reason: FeedbackReason,
    #[serde(default)]
    note: String,
}

#[derive(Serialize)]
struct FeedbackOutcome {
    record: FeedbackRecord,
    created: bool,
}

fn feedback(a: FeedbackArgs, config: &Config) -> Result<(), CliError> {
    let items: Vec<FeedbackItem> = match &a.file {
        Some(p) => read_json(p)?,
        None => vec![FeedbackItem {
            photo_id: a.photo.clone().unwrap_or_default(),
            reason: a.reason.map(Into::into).unwrap_or(FeedbackReason::Other),
            note: a.note.clone(),
        }],
    };
    let store = open(config)?;
    let mut outcomes = Vec::with_capacity(items.len());
    for item in items {
        let (record, created) = store.submit_feedback(&FeedbackRecord::new(&item.photo_id, item.reason, item.note))?;
        outcomes.push(FeedbackOutcome { record, created });
    }
    if a.file.is_some() {
        emit(&outcomes, None)
    } else {
        emit(&outcomes[0], None)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GroundTruthFile {
    Dataset(DetectionDataset),
    Boxes(Vec<GroundTruthBox>),
}

fn evaluate_detections_cmd(a: EvalDetectionsArgs) -> Result<(), CliError> {
    let preds: Vec<PredictedBox> = read_json(&a.predictions)?;
    let gt = match read_json::<GroundTruthFile>(&a.ground_truth)? {
        GroundTruthFile::Dataset(d) => d.annotations,
        GroundTruthFile::Boxes(b) => b,
    };
    let report = evaluate_detections(&preds, &gt)?;
    emit(&report, a.gate.report.as_deref())?;
    match a.gate_metric {
        DetectionMetric::Map50 => gate("mAP@0.5", report.map_50, a.gate.gate),
        DetectionMetric::Map5095 => gate("mAP@0.5:0.95", report.map_50_95, a.gate.gate),
    }
}

fn split(a: SplitArgs, seed: u64) -> Result<(), CliError> {
    let items: Vec<serde_json::Value> = read_json(&a.input)?;
    let fractions = SplitFractions { train: a.train, val: a.val, test: a.test };
    let split = split_dataset(&items, fractions, seed).map_err(|e| CliError::Usage(e.to_string()))?;
    match a.out {
        None => emit(&split, None),
        Some(dir) => {
            std::fs::create_dir_all(&dir).map_err(|e| CliError::file(&dir, e))?;
            write_json(&dir.join("train.json"), &split.train)?;
            write_json(&dir.join("val.json"), &split.val)?;
            write_json(&dir.join("test.json"), &split.test)
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Shape {
    Pair([f64; 2]),
    Size { width: f64, height: f64 },
    Boxed {
        #[serde(alias = "bbox")]
        r#box: BoundingBox,
    },
}

fn read_shapes(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let shapes: Vec<Shape> = read_json(path)?;
    Ok(shapes
        .into_iter()
        .map(|s| match s {
            Shape::Pair([w, h]) => (w, h),
            Shape::Size { width, height } => (width, height),
            Shape::Boxed { r#box } => (r#box.width(), r#box.height()),
        })
        .collect())
}

fn serve(a: ServeArgs, mut config: Config) -> Result<(), CliError> {
    if let Some(h) = a.host {
        config.api.host = h;
    }
    if let Some(p) = a.port {
        config.api.port = p;
    }
    if let Some(w) = a.workers {
        config.workers = w;
    }
    let state = AppState::from_config(&config).map_err(|e| match e {
        racelens_api::ServeError::Provider(p) => CliError::Provider(p.to_string()),
        racelens_api::ServeError::Config(c) => CliError::Usage(c.to_string()),
        other => CliError::Data(other.to_string()),
    })?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Data(e.to_string()))?;
    runtime.block_on(async move {
        let addr = format!("{}:{}", config.api.host, config.api.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Usage(format!("cannot listen on {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::Data(e.to_string()))?;
        println!("listening on http://{local}");
        tracing::info!(%local, "serving");
        racelens_api::serve_on(listener, state)
            .await
            .map_err(|e| CliError::Data(e.to_string()))
    })
}
