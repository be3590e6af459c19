use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::sidecar::{sidecar_path, EmbeddingSpace, SceneSidecar, SyntheticCar, SyntheticWheel};
use super::{
    all_capabilities, load_region_gray, stream_seed, CapabilitySet, ImageRegion, InferenceError,
    InferenceProvider, ProviderMetadata, WheelDetection,
};
use crate::model::{BoundingBox, Detection, DetectionClass, Embedding, Keypoint, Point, WheelKeypoints};
use crate::number::{segment_digit_candidates, PatchCandidate, SegmentationParams};

/// Where digit patch candidates come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchSource {
    /// Glyph boxes listed in the sidecar.
    #[default]
    Sidecar,
    /// Contrast segmentation of the rendered image.
    Pixels,
}

#[derive(Debug, Clone)]
pub struct SyntheticSettings {
    /// Manufacturer labels in classifier output order.
    pub manufacturers: Vec<String>,
    pub patch_source: PatchSource,
    /// Mixed into every sidecar noise seed.
    pub seed: u64,
    pub capabilities: CapabilitySet,
}

impl Default for SyntheticSettings {
    fn default() -> Self {
        Self {
            manufacturers: crate::config::default_manufacturers(),
            patch_source: PatchSource::Sidecar,
            seed: 0,
            capabilities: all_capabilities(),
        }
    }
}

/// Provider that answers from scene sidecars.
///
/// With every noise control at zero it echoes the sidecar exactly. Noise is
/// drawn from RNG streams keyed by (seed, photo, region, output), so results
/// are a pure function of the request.
pub struct SyntheticProvider {
    settings: SyntheticSettings,
    scenes: RwLock<HashMap<String, Arc<SceneSidecar>>>,
    bases: Mutex<HashMap<(u64, usize), Arc<Vec<Vec<f64>>>>>,
}

fn rect_bytes(r: &BoundingBox) -> [u8; 32] {
    let mut out = [0u8; 32];
    for (i, v) in [r.x_min, r.y_min, r.x_max, r.y_max].iter().enumerate() {
        out[i * 8..(i + 1) * 8].copy_from_slice(&v.to_bits().to_le_bytes());
    }
    out
}

/// Region overlap score: share of the region covered, then IoU.
fn overlap_key(region: &BoundingBox, target: &BoundingBox) -> Option<(f64, f64)> {
    let inter = region.intersection_area(target);
    (inter > 0.0).then(|| (inter / region.area(), region.iou(target)))
}

/// Index of the box that best covers `region`.
fn best_by_overlap(region: &BoundingBox, boxes: impl Iterator<Item = BoundingBox>) -> Option<usize> {
    let mut best: Option<(usize, (f64, f64))> = None;
    for (i, b) in boxes.enumerate() {
        if let Some(k) = overlap_key(region, &b) {
            let better = match best {
                None => true,
                Some((_, bk)) => k.0 > bk.0 || (k.0 == bk.0 && k.1 > bk.1),
            };
            if better {
                best = Some((i, k));
            }
        }
    }
    best.map(|(i, _)| i)
}

fn one_hot(class: usize, classes: usize, jitter: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let top = if jitter > 0.0 {
        1.0 - jitter * rng.random::<f64>()
    } else {
        1.0
    };
    let rest = if classes > 1 { (1.0 - top) / (classes - 1) as f64 } else { 0.0 };
    (0..classes).map(|i| if i == class { top } else { rest }).collect()
}

/// Seeded orthonormal basis of `dim` vectors via Gram-Schmidt.
fn orthonormal_basis(seed: u64, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &[b"embedding-basis"]));
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

impl SyntheticProvider {
    pub fn new(settings: SyntheticSettings) -> Self {
        Self {
            settings,
            scenes: RwLock::new(HashMap::new()),
            bases: Mutex::new(HashMap::new()),
        }
    }

    pub fn settings(&self) -> &SyntheticSettings {
        &self.settings
    }

    /// Registers a scene in memory instead of reading it from disk.
    pub fn insert_scene(&self, scene: SceneSidecar) {
        self.scenes.write().insert(scene.photo_id.clone(), Arc::new(scene));
    }

    fn scene(&self, region: &ImageRegion) -> Result<Arc<SceneSidecar>, InferenceError> {
        if let Some(s) = self.scenes.read().get(&region.photo.photo_id) {
            return Ok(s.clone());
        }
        let path = sidecar_path(&region.photo.uri);
        let scene = SceneSidecar::load(&path).map_err(|e| InferenceError::UnreadableImage {
            uri: region.photo.uri.clone(),
            reason: e.to_string(),
        })?;
        let scene = Arc::new(scene);
        self.scenes
            .write()
            .insert(region.photo.photo_id.clone(), scene.clone());
        Ok(scene)
    }

    fn rng(&self, scene: &SceneSidecar, tag: &str, key: &[u8]) -> ChaCha8Rng {
        let seed = stream_seed(
            self.settings.seed ^ scene.noise.seed,
            &[scene.photo_id.as_bytes(), tag.as_bytes(), key],
        );
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn dropped(&self, scene: &SceneSidecar, tag: &str, index: usize) -> bool {
        let p = scene.noise.dropout_probability;
        if p <= 0.0 {
            return false;
        }
        self.rng(scene, tag, &index.to_le_bytes()).random::<f64>() < p
    }

    fn score(&self, scene: &SceneSidecar, tag: &str, index: usize) -> f64 {
        let j = scene.noise.score_jitter;
        if j <= 0.0 {
            return 1.0;
        }
        1.0 - j * self.rng(scene, tag, &index.to_le_bytes()).random::<f64>()
    }

    fn car<'s>(&self, scene: &'s SceneSidecar, region: &ImageRegion) -> Result<(usize, &'s SyntheticCar), InferenceError> {
        best_by_overlap(&region.rect, scene.cars.iter().map(|c| c.car_box))
            .map(|i| (i, &scene.cars[i]))
            .ok_or_else(|| InferenceError::InvalidResponse(format!("no synthetic car under region in {}", scene.photo_id)))
    }

    fn basis(&self, space: &EmbeddingSpace) -> Arc<Vec<Vec<f64>>> {
        self.bases
            .lock()
            .entry((space.seed, space.dim))
            .or_insert_with(|| Arc::new(orthonormal_basis(space.seed, space.dim)))
            .clone()
    }

    /// Noise-free embedding of a team slot.
    pub fn team_vector(&self, space: &EmbeddingSpace, slot: usize) -> Vec<f64> {
        let basis = self.basis(space);
        let d = space.inter_team_distance.clamp(0.0, 1.0);
        let (own, shared) = (d.sqrt(), (1.0 - d).sqrt());
        basis[slot + 1]
            .iter()
            .zip(&basis[0])
            .map(|(a, b)| own * a + shared * b)
            .collect()
    }
}

impl InferenceProvider for SyntheticProvider {
    fn capabilities(&self) -> CapabilitySet {
        self.settings.capabilities.clone()
    }

    fn metadata(&self) -> ProviderMetadata {
        ProviderMetadata {
            name: "synthetic".into(),
            detector_input: [512, 512],
            orientation_input: [200, 100],
            keypoint_input: [512, 512],
            embedding_dim: EmbeddingSpace::default().dim,
        }
    }

    fn detect_cars(&self, photo: &ImageRegion) -> Result<Vec<Detection>, InferenceError> {
        let scene = self.scene(photo)?;
        Ok(scene
            .cars
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.dropped(&scene, "car-drop", *i))
            .map(|(i, c)| {
                Detection::new(
                    photo.box_to_local(&c.car_box),
                    DetectionClass::Car,
                    self.score(&scene, "car-score", i),
                )
            })
            .collect())
    }

    fn detect_attributes(&self, crop: &ImageRegion) -> Result<Vec<Detection>, InferenceError> {
        let scene = self.scene(crop)?;
        let (i, car) = self.car(&scene, crop)?;
        let mut out = Vec::new();
        if let Some(region) = &car.number_region {
            if !self.dropped(&scene, "number-drop", i) {
                out.push(Detection::new(
                    crop.box_to_local(region),
                    DetectionClass::NumberPlateRegion,
                    self.score(&scene, "number-score", i),
                ));
            }
        }
        if let Some(mark) = &car.manufacturer_mark {
            if !self.dropped(&scene, "mark-drop", i) {
                out.push(Detection::new(
                    crop.box_to_local(mark),
                    DetectionClass::ManufacturerMark,
                    self.score(&scene, "mark-score", i),
                ));
            }
        }
        Ok(out)
    }

    fn propose_digit_patches(&self, region: &ImageRegion) -> Result<Vec<PatchCandidate>, InferenceError> {
        match self.settings.patch_source {
            PatchSource::Pixels => {
                let gray = load_region_gray(region)?;
                let dx = region.rect.x_min.floor().max(0.0) - region.rect.x_min;
                let dy = region.rect.y_min.floor().max(0.0) - region.rect.y_min;
                Ok(segment_digit_candidates(&gray, &SegmentationParams::default())
                    .into_iter()
                    .map(|mut c| {
                        c.bbox = c.bbox.translate(dx, dy);
                        c
                    })
                    .collect())
            }
            PatchSource::Sidecar => {
                let scene = self.scene(region)?;
                let (_, car) = self.car(&scene, region)?;
                let jitter = scene.noise.score_jitter;
                let mut rng = self.rng(&scene, "patches", &rect_bytes(&region.rect));
                let mut out = Vec::new();
                for g in &car.glyphs {
                    let local = region.box_to_local(&g.bbox);
                    if jitter > 0.0 {
                        let contrast = 1.0 - jitter * rng.random::<f64>();
                        out.push(PatchCandidate { bbox: local, contrast });
                        // A weaker, slightly shifted duplicate.
                        let shift = 1.0 + 2.0 * rng.random::<f64>();
                        out.push(PatchCandidate {
                            bbox: local.translate(shift, 0.0),
                            contrast: 0.5 * contrast,
                        });
                    } else {
                        out.push(PatchCandidate { bbox: local, contrast: 1.0 });
                    }
                }
                Ok(out)
            }
        }
    }

    fn classify_digit(&self, patch: &ImageRegion) -> Result<Vec<f64>, InferenceError> {
        let scene = self.scene(patch)?;
        let (_, car) = self.car(&scene, patch)?;
        let mut rng = self.rng(&scene, "digit", &rect_bytes(&patch.rect));
        match best_by_overlap(&patch.rect, car.glyphs.iter().map(|g| g.bbox)).map(|i| &car.glyphs[i]) {
            Some(g) => Ok(one_hot(g.digit as usize, 10, scene.noise.score_jitter, &mut rng)),
            None => Ok(vec![0.1; 10]),
        }
    }

    fn classify_manufacturer(&self, crop: &ImageRegion) -> Result<Vec<f64>, InferenceError> {
        let scene = self.scene(crop)?;
        let (_, car) = self.car(&scene, crop)?;
        let n = self.settings.manufacturers.len();
        let mut rng = self.rng(&scene, "manufacturer", &rect_bytes(&crop.rect));
        match self.settings.manufacturers.iter().position(|m| *m == car.manufacturer) {
            Some(i) => Ok(one_hot(i, n, scene.noise.score_jitter, &mut rng)),
            None => Ok(vec![1.0 / n as f64; n]),
        }
    }

    fn classify_orientation(&self, crop: &ImageRegion) -> Result<Vec<f64>, InferenceError> {
        let scene = self.scene(crop)?;
        let (_, car) = self.car(&scene, crop)?;
        let mut rng = self.rng(&scene, "orientation", &rect_bytes(&crop.rect));
        Ok(one_hot(car.orientation.index(), 8, scene.noise.score_jitter, &mut rng))
    }

    fn encode_embedding(&self, crop: &ImageRegion) -> Result<Embedding, InferenceError> {
        let scene = self.scene(crop)?;
        let (_, car) = self.car(&scene, crop)?;
        let space = scene.embedding_space;
        if car.team_slot + 1 >= space.dim {
            return Err(InferenceError::InvalidResponse("team slot exceeds embedding dim".into()));
        }
        let mut v = self.team_vector(&space, car.team_slot);
        let eps = scene.noise.embedding_noise;
        if eps > 0.0 {
            let mut rng = self.rng(&scene, "embedding", &rect_bytes(&crop.rect));
            let dir: Vec<f64> = (0..space.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mag = eps * rng.random::<f64>();
            v.iter_mut().zip(&dir).for_each(|(x, d)| *x += mag * d / norm);
        }
        Ok(Embedding::new(v, scene.photo_id.clone()))
    }

    fn detect_wheels(&self, crop: &ImageRegion) -> Result<Vec<WheelDetection>, InferenceError> {
        let scene = self.scene(crop)?;
        let (i, car) = self.car(&scene, crop)?;
        Ok(car
            .wheels
            .iter()
            .enumerate()
            .filter(|(w, _)| !self.dropped(&scene, "wheel-drop", i * 64 + w))
            .map(|(w, wheel)| WheelDetection {
                bbox: crop.box_to_local(&wheel.bbox()),
                score: self.score(&scene, "wheel-score", i * 64 + w),
            })
            .collect())
    }

    fn predict_wheel_keypoints(&self, crop: &ImageRegion) -> Result<WheelKeypoints, InferenceError> {
        let scene = self.scene(crop)?;
        let wheels: Vec<&SyntheticWheel> = scene.cars.iter().flat_map(|c| c.wheels.iter()).collect();
        let wheel = best_by_overlap(&crop.rect, wheels.iter().map(|w| w.bbox()))
            .map(|i| wheels[i])
            .ok_or_else(|| InferenceError::InvalidResponse("no synthetic wheel under region".into()))?;
        let sigma = scene.noise.keypoint_noise;
        let mut rng = self.rng(&scene, "keypoints", &rect_bytes(&crop.rect));
        let mut kp = |p: Point| {
            let p = if sigma > 0.0 {
                let nx: f64 = StandardNormal.sample(&mut rng);
                let ny: f64 = StandardNormal.sample(&mut rng);
                Point::new(p.x + sigma * nx, p.y + sigma * ny)
            } else {
                p
            };
            let l = crop.to_local(p);
            Keypoint::visible(l.x, l.y)
        };
        let (c, r) = (wheel.center, wheel.disk_radius);
        let top = kp(Point::new(c.x, c.y - r));
        let right = kp(Point::new(c.x + r, c.y));
        let bottom = kp(Point::new(c.x, c.y + r));
        let left = kp(Point::new(c.x - r, c.y));
        let center = kp(c);
        let ground_contact = if wheel.ground_visible {
            kp(wheel.ground_contact())
        } else {
            Keypoint {
                x: crop.width() / 2.0,
                y: 0.0,
                visible: false,
            }
        };
        Ok(WheelKeypoints {
            top,
            right,
            bottom,
            left,
            center,
            ground_contact,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::sidecar::{DigitGlyph, NoiseControls};
    use crate::inference::{Capability, Gateway, PhotoRef};
    use crate::model::Orientation;
    use crate::team::cosine_distance;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    fn car(x: f64, team: &str, slot: usize, orientation: Orientation) -> SyntheticCar {
        SyntheticCar {
            car_box: bx(x, 100.0, x + 400.0, 300.0),
            number: Some(team.into()),
            number_region: Some(bx(x + 100.0, 120.0, x + 180.0, 180.0)),
            glyphs: vec![
                DigitGlyph { bbox: bx(x + 105.0, 125.0, x + 130.0, 175.0), digit: team.as_bytes()[0] - b'0' },
                DigitGlyph { bbox: bx(x + 140.0, 125.0, x + 165.0, 175.0), digit: team.as_bytes()[1] - b'0' },
            ],
            manufacturer: "ford".into(),
            manufacturer_mark: Some(bx(x + 300.0, 200.0, x + 340.0, 220.0)),
            orientation,
            team: team.into(),
            team_slot: slot,
            color: [200, 0, 0],
            wheels: vec![],
            truth: None,
        }
    }

    fn scene(noise: NoiseControls) -> SceneSidecar {
        SceneSidecar {
            photo_id: "p1".into(),
            width_px: 1000,
            height_px: 400,
            cars: vec![car(20.0, "43", 0, Orientation::FrontRight), car(500.0, "11", 1, Orientation::Left)],
            noise,
            embedding_space: EmbeddingSpace { dim: 16, inter_team_distance: 0.6, seed: 5 },
        }
    }

    fn provider(noise: NoiseControls) -> SyntheticProvider {
        let p = SyntheticProvider::new(SyntheticSettings::default());
        p.insert_scene(scene(noise));
        p
    }

    fn photo() -> ImageRegion {
        ImageRegion::full(PhotoRef { photo_id: "p1".into(), uri: "missing/p1.png".into(), width_px: 1000, height_px: 400 })
    }

    #[test]
    fn zero_noise_echo() {
        let p = provider(NoiseControls::default());
        let g = Gateway::new(&p, 16);
        let cars = g.detect_cars(&photo()).unwrap();
        assert_eq!(cars.len(), 2);
        assert!(cars.iter().all(|d| d.score == 1.0));
        assert_eq!(cars[0].bbox, bx(20.0, 100.0, 420.0, 300.0));

        let crop = ImageRegion::around(photo().photo, &cars[0].bbox, 0.05);
        let attrs = g.detect_attributes(&crop).unwrap();
        let number = attrs.iter().find(|d| d.class_label == DetectionClass::NumberPlateRegion).unwrap();
        assert_eq!(crop.box_to_parent(&number.bbox), bx(120.0, 120.0, 200.0, 180.0));

        let region = crop.sub_region(&number.bbox, 0.0);
        let patches = g.propose_digit_patches(&region).unwrap();
        assert_eq!(patches.len(), 2);
        let digit = g.classify_digit(&region.sub_region(&patches[0].bbox, 0.0)).unwrap();
        assert_eq!(crate::inference::argmax(&digit), Some(4));
        assert!((digit.iter().sum::<f64>() - 1.0).abs() < 1e-6);

        let o = g.classify_orientation(&crop).unwrap();
        assert_eq!(Orientation::from_index(crate::inference::argmax(&o).unwrap()), Some(Orientation::FrontRight));
    }

    #[test]
    fn empty_scene_and_full_dropout() {
        let p = SyntheticProvider::new(SyntheticSettings::default());
        let mut s = scene(NoiseControls::default());
        s.cars.clear();
        p.insert_scene(s);
        assert!(p.detect_cars(&photo()).unwrap().is_empty());

        let p = provider(NoiseControls { dropout_probability: 1.0, ..Default::default() });
        assert!(p.detect_cars(&photo()).unwrap().is_empty());
    }

    #[test]
    fn jitter_bounds_and_determinism() {
        let noise = NoiseControls { seed: 9, score_jitter: 0.1, ..Default::default() };
        let a = provider(noise);
        let b = provider(noise);
        let crop = ImageRegion::around(photo().photo, &bx(20.0, 100.0, 420.0, 300.0), 0.0);
        let da = a.detect_attributes(&crop).unwrap();
        let db = b.detect_attributes(&crop).unwrap();
        assert_eq!(da, db);
        for d in &da {
            assert!((0.9..=1.0).contains(&d.score), "{}", d.score);
            assert_eq!(d.score.to_bits(), db.iter().find(|x| x.class_label == d.class_label).unwrap().score.to_bits());
        }
    }

    #[test]
    fn embeddings_follow_team_geometry() {
        let p = provider(NoiseControls::default());
        let c0 = ImageRegion::around(photo().photo, &bx(20.0, 100.0, 420.0, 300.0), 0.05);
        let c0b = ImageRegion::around(photo().photo, &bx(20.0, 100.0, 420.0, 300.0), 0.1);
        let c1 = ImageRegion::around(photo().photo, &bx(500.0, 100.0, 900.0, 300.0), 0.05);
        let e0 = p.encode_embedding(&c0).unwrap();
        assert_eq!(e0, p.encode_embedding(&c0b).unwrap());
        let e1 = p.encode_embedding(&c1).unwrap();
        let d = cosine_distance(&e0.vector, &e1.vector).unwrap();
        assert!((d - 0.6).abs() < 1e-12, "{d}");
        let norm: f64 = e0.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn embedding_noise_is_bounded() {
        let eps = 0.05;
        let p = provider(NoiseControls { embedding_noise: eps, seed: 3, ..Default::default() });
        let clean = p.team_vector(&scene(NoiseControls::default()).embedding_space, 0);
        for pad in [0.0, 0.01, 0.02, 0.03] {
            let c = ImageRegion::around(photo().photo, &bx(20.0, 100.0, 420.0, 300.0), pad);
            let v = p.encode_embedding(&c).unwrap().vector;
            let diff: f64 = v.iter().zip(&clean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(diff <= eps + 1e-12);
        }
    }

    #[test]
    fn undeclared_capability_is_unavailable() {
        let mut settings = SyntheticSettings::default();
        settings.capabilities.remove(&Capability::OrientationClassifier);
        let p = SyntheticProvider::new(settings);
        p.insert_scene(scene(NoiseControls::default()));
        let g = Gateway::new(&p, 16);
        assert_eq!(
            g.classify_orientation(&photo()),
            Err(InferenceError::ProviderUnavailable(Capability::OrientationClassifier))
        );
        assert!(g.detect_cars(&photo()).is_ok());
    }

    #[test]
    fn missing_sidecar_is_unreadable() {
        let p = SyntheticProvider::new(SyntheticSettings::default());
        let r = ImageRegion::full(PhotoRef { photo_id: "x".into(), uri: "/nonexistent/x.png".into(), width_px: 10, height_px: 10 });
        assert!(matches!(p.detect_cars(&r), Err(InferenceError::UnreadableImage { .. })));
    }

    #[test]
    fn basis_is_orthonormal() {
        let b = orthonormal_basis(1, 12);
        for i in 0..12 {
            for j in 0..12 {
                let dot: f64 = b[i].iter().zip(&b[j]).map(|(x, y)| x * y).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-12);
            }
        }
    }
}
