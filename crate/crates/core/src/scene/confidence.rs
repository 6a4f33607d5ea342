//! Recognizer simulator: per-camera, per-frame confidence fields standing in
//! for 2D segmentation/detection outputs.
//!
//! A pixel takes the label of the front-most body point projecting within
//! the bleed radius (at least one pixel), so bodies bleed their label onto
//! nearby pixels the way coarse detector masks do. That detection reports a
//! `Beta(8, 2)` confidence, moved to a uniformly random wrong label with
//! probability `rho`; the other entries are small fractions of it. Pixels
//! with no nearby body read `Beta(1, 20)` background noise. Spurious
//! detections are discs of high confidence on a random label, merged by
//! elementwise maximum.
//!
//! Every draw is keyed by `(seed, camera, frame, source)` so a field is a
//! pure function and can be re-queried anywhere without storing images.

use std::cell::OnceCell;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::Scene;
use crate::error::{Error, Result};
use crate::geometry::Rig;
use crate::label::Label;
use crate::seed::{mix, stream_rng};

pub const FIELD_FORMAT_VERSION: u32 = 1;

const TAG_SOURCE: u64 = 0x736f_7572_6365;
const TAG_BACKGROUND: u64 = 0x6261_636b;

/// A spurious detection: a disc in one camera image at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FalseDetection {
    pub camera: u16,
    pub frame: u32,
    pub center: [f64; 2],
    pub radius: f64,
    pub label: Label,
    pub confidence: f64,
}

/// The persisted description of every confidence field of a scene. Together
/// with the scene and rig it determines all field values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSet {
    pub format_version: u32,
    pub classes: usize,
    pub seed: u64,
    pub confusion_rate: f64,
    pub bleed_radius_px: f64,
    /// Sorted by `(frame, camera)`.
    pub false_detections: Vec<FalseDetection>,
}

impl FieldSet {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: FieldSet = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if set.format_version != FIELD_FORMAT_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported field format_version {}", set.format_version),
            ));
        }
        Ok(set)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    fn detections(&self, camera: usize, frame: u32) -> &[FalseDetection] {
        let key = (frame, camera as u16);
        let lo = self.false_detections.partition_point(|d| (d.frame, d.camera) < key);
        let hi = self.false_detections.partition_point(|d| (d.frame, d.camera) <= key);
        &self.false_detections[lo..hi]
    }
}

/// Draws the false detections of every camera and frame (Poisson count per
/// camera-frame, uniform centers, radius within ±50% of the nominal one).
pub fn simulate_confidence(scene: &Scene, rig: &Rig) -> FieldSet {
    let noise = &scene.spec().noise;
    let classes = scene.classes();
    let confidence = Beta::new(8.0, 2.0).expect("valid beta");
    let mut false_detections = Vec::new();
    if noise.false_detection_rate > 0.0 {
        let count = Poisson::new(noise.false_detection_rate).expect("positive rate");
        for frame in 0..scene.frames() {
            let mut rng = stream_rng(scene.spec().seed, "false-detections", u64::from(frame));
            for camera in rig.cameras() {
                let n = count.sample(&mut rng) as usize;
                for _ in 0..n {
                    let center = [
                        rng.random_range(0.0..f64::from(camera.width())),
                        rng.random_range(0.0..f64::from(camera.height())),
                    ];
                    let radius = noise.false_detection_radius_px * rng.random_range(0.5..1.5);
                    let label = Label::from_index(rng.random_range(0..classes));
                    false_detections.push(FalseDetection {
                        camera: camera.id() as u16,
                        frame,
                        center,
                        radius,
                        label,
                        confidence: confidence.sample(&mut rng),
                    });
                }
            }
        }
    }
    FieldSet {
        format_version: FIELD_FORMAT_VERSION,
        classes,
        seed: scene.spec().seed,
        confusion_rate: noise.confusion_rate,
        bleed_radius_px: noise.bleed_radius_px,
        false_detections,
    }
}

/// Binds a [`FieldSet`] to the scene and rig that generated it.
#[derive(Debug, Clone, Copy)]
pub struct SceneFields<'a> {
    pub set: &'a FieldSet,
    pub scene: &'a Scene,
    pub rig: &'a Rig,
}

impl<'a> SceneFields<'a> {
    pub fn new(set: &'a FieldSet, scene: &'a Scene, rig: &'a Rig) -> Self {
        SceneFields { set, scene, rig }
    }

    /// The fields of one frame. Each camera's source index is built on its
    /// first query.
    pub fn frame(&self, frame: u32) -> FrameFields<'a> {
        FrameFields {
            set: self.set,
            scene: self.scene,
            rig: self.rig,
            frame,
            radius: self.set.bleed_radius_px.max(1.0),
            positions: self.scene.positions(frame),
            cameras: (0..self.rig.len()).map(|_| OnceCell::new()).collect(),
            confidence: Beta::new(8.0, 2.0).expect("valid beta"),
            background: Beta::new(1.0, 20.0).expect("valid beta"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Source {
    pixel: Vector2<f64>,
    depth: f64,
    point: u32,
    label: Label,
}

/// Sources bucketed by square cells of the bleed radius; `starts[k]..starts[k + 1]`
/// indexes the sources of cell `k` (row-major), each cell sorted front to
/// back (depth, then point id).
#[derive(Debug, Clone)]
struct SourceIndex {
    cell: f64,
    columns: i64,
    rows: i64,
    starts: Vec<u32>,
    sources: Vec<Source>,
}

impl SourceIndex {
    fn new(sources: Vec<Source>, cell: f64, width: u32, height: u32) -> Self {
        let columns = (f64::from(width) / cell).floor() as i64 + 1;
        let rows = (f64::from(height) / cell).floor() as i64 + 1;
        let key = |s: &Source| {
            let cx = ((s.pixel.x / cell).floor() as i64).clamp(0, columns - 1);
            let cy = ((s.pixel.y / cell).floor() as i64).clamp(0, rows - 1);
            (cy * columns + cx) as usize
        };
        let mut keyed: Vec<(usize, Source)> = sources.into_iter().map(|s| (key(&s), s)).collect();
        keyed.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then(a.1.depth.total_cmp(&b.1.depth))
                .then(a.1.point.cmp(&b.1.point))
        });
        let mut starts = vec![0u32; (rows * columns) as usize + 1];
        for (k, _) in &keyed {
            starts[k + 1] += 1;
        }
        for k in 1..starts.len() {
            starts[k] += starts[k - 1];
        }
        SourceIndex {
            cell,
            columns,
            rows,
            starts,
            sources: keyed.into_iter().map(|(_, s)| s).collect(),
        }
    }

    /// Front-most source within `radius` of `pixel` (ties to the lowest
    /// point id).
    fn front_most(&self, pixel: &Vector2<f64>, radius: f64) -> Option<&Source> {
        let cx = (pixel.x / self.cell).floor() as i64;
        let cy = (pixel.y / self.cell).floor() as i64;
        let lo_x = (cx - 1).max(0);
        let hi_x = (cx + 1).min(self.columns - 1);
        let mut best: Option<&Source> = None;
        for row in (cy - 1).max(0)..=(cy + 1).min(self.rows - 1) {
            for col in lo_x..=hi_x {
                let k = (row * self.columns + col) as usize;
                let cell = &self.sources[self.starts[k] as usize..self.starts[k + 1] as usize];
                // Front-to-back order: the first source in range is the cell's best.
                if let Some(s) = cell.iter().find(|s| (s.pixel - pixel).norm_squared() <= radius * radius) {
                    if best.is_none_or(|b| (s.depth, s.point) < (b.depth, b.point)) {
                        best = Some(s);
                    }
                }
            }
        }
        best
    }
}

/// All confidence fields of one frame.
#[derive(Debug, Clone)]
pub struct FrameFields<'a> {
    set: &'a FieldSet,
    scene: &'a Scene,
    rig: &'a Rig,
    frame: u32,
    radius: f64,
    positions: Vec<Vector3<f64>>,
    cameras: Vec<OnceCell<SourceIndex>>,
    confidence: Beta<f64>,
    background: Beta<f64>,
}

impl<'a> FrameFields<'a> {
    fn sources(&self, camera: usize) -> &SourceIndex {
        self.cameras[camera].get_or_init(|| {
            let cam = self.rig.camera(camera);
            let mut sources = Vec::new();
            for (i, x) in self.positions.iter().enumerate() {
                let Ok(pixel) = cam.project(x) else { continue };
                if cam.in_bounds(&pixel) {
                    sources.push(Source {
                        pixel,
                        depth: cam.depth(x),
                        point: i as u32,
                        label: self.scene.label_of(i),
                    });
                }
            }
            SourceIndex::new(sources, self.radius, cam.width(), cam.height())
        })
    }

    pub fn frame(&self) -> u32 {
        self.frame
    }

    pub fn classes(&self) -> usize {
        self.set.classes
    }

    pub fn field(&self, camera: usize) -> ConfidenceField<'_> {
        ConfidenceField {
            frames: self,
            camera,
        }
    }

    /// Writes the confidence vector of `camera` at `pixel` into `out`
    /// (length = number of classes).
    pub fn query_into(&self, camera: usize, pixel: &Vector2<f64>, out: &mut [f64]) {
        let n = self.set.classes;
        debug_assert_eq!(out.len(), n);
        let seed = self.set.seed;
        let (cam, frame) = (camera as u64, u64::from(self.frame));
        match self.sources(camera).front_most(pixel, self.radius) {
            Some(source) => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, TAG_SOURCE, cam, frame, u64::from(source.point)]));
                let conf = self.confidence.sample(&mut rng);
                let truth = source.label.index();
                let confused = rng.random::<f64>() < self.set.confusion_rate;
                let label = if confused && n > 1 {
                    let k = rng.random_range(0..n - 1);
                    if k >= truth { k + 1 } else { k }
                } else {
                    truth
                };
                for (k, v) in out.iter_mut().enumerate() {
                    *v = conf * self.background.sample(&mut rng);
                    if k == label {
                        *v = conf;
                    }
                }
            }
            None => {
                let key = mix(&[
                    seed,
                    TAG_BACKGROUND,
                    cam,
                    frame,
                    pixel.x.floor() as i64 as u64,
                    pixel.y.floor() as i64 as u64,
                ]);
                let mut rng = ChaCha8Rng::seed_from_u64(key);
                for v in out.iter_mut() {
                    *v = self.background.sample(&mut rng);
                }
            }
        }
        for d in self.set.detections(camera, self.frame) {
            let center = Vector2::new(d.center[0], d.center[1]);
            if (pixel - center).norm() <= d.radius {
                let v = &mut out[d.label.index()];
                *v = v.max(d.confidence);
            }
        }
    }

    pub fn query(&self, camera: usize, pixel: &Vector2<f64>) -> Vec<f64> {
        let mut out = vec![0.0; self.set.classes];
        self.query_into(camera, pixel, &mut out);
        out
    }
}

/// One camera's confidence field at one frame.
#[derive(Debug, Clone, Copy)]
pub struct ConfidenceField<'a> {
    frames: &'a FrameFields<'a>,
    camera: usize,
}

impl ConfidenceField<'_> {
    pub fn camera(&self) -> usize {
        self.camera
    }

    pub fn frame(&self) -> u32 {
        self.frames.frame
    }

    pub fn query(&self, pixel: &Vector2<f64>) -> Vec<f64> {
        self.frames.query(self.camera, pixel)
    }
}
