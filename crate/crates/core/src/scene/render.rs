//! Projection of scene points into every camera, with inter-body occlusion
//! and pixel noise.

use nalgebra::Vector2;
use rand_distr::{Distribution, StandardNormal};

use super::Scene;
use crate::geometry::{Observation, Rig};
use crate::seed::stream_rng;

/// Pixel radius within which a nearer point of another body hides a point.
pub const OCCLUSION_RADIUS_PX: f64 = 1.0;

/// One observation tagged with its correspondence (track) id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackObservation {
    pub track: u32,
    pub observation: Observation,
}

/// All observations of one frame, sorted by `(track, camera)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameObservations {
    pub frame: u32,
    pub entries: Vec<TrackObservation>,
}

impl FrameObservations {
    pub fn new(frame: u32, mut entries: Vec<TrackObservation>) -> Self {
        entries.sort_by_key(|e| (e.track, e.observation.camera));
        FrameObservations { frame, entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Observations grouped by track id, in increasing id order.
    pub fn groups(&self) -> impl Iterator<Item = (u32, Vec<Observation>)> + '_ {
        self.entries
            .chunk_by(|a, b| a.track == b.track)
            .map(|chunk| (chunk[0].track, chunk.iter().map(|e| e.observation).collect()))
    }

    /// Observations of one track (empty if absent).
    pub fn track(&self, track: u32) -> Vec<Observation> {
        let start = self.entries.partition_point(|e| e.track < track);
        self.entries[start..]
            .iter()
            .take_while(|e| e.track == track)
            .map(|e| e.observation)
            .collect()
    }
}

/// Exact (noise-free) camera visibility of every point in every frame,
/// as bitsets over camera ids.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    frames: u32,
    points: usize,
    cameras: usize,
    words: usize,
    bits: Vec<u64>,
}

impl GroundTruth {
    pub fn new(frames: u32, points: usize, cameras: usize) -> Self {
        let words = cameras.div_ceil(64);
        GroundTruth {
            frames,
            points,
            cameras,
            words,
            bits: vec![0; frames as usize * points * words],
        }
    }

    pub fn frames(&self) -> u32 {
        self.frames
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn cameras(&self) -> usize {
        self.cameras
    }

    fn offset(&self, frame: u32, point: usize) -> usize {
        (frame as usize * self.points + point) * self.words
    }

    pub fn set_visible(&mut self, frame: u32, point: usize, camera: usize) {
        let o = self.offset(frame, point);
        self.bits[o + camera / 64] |= 1 << (camera % 64);
    }

    pub fn is_visible(&self, frame: u32, point: usize, camera: usize) -> bool {
        let o = self.offset(frame, point);
        self.bits[o + camera / 64] & (1 << (camera % 64)) != 0
    }

    pub fn view_count(&self, frame: u32, point: usize) -> usize {
        let o = self.offset(frame, point);
        self.bits[o..o + self.words].iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn visible_cameras(&self, frame: u32, point: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.cameras).filter(move |&c| self.is_visible(frame, point, c))
    }

    /// Maximal frame intervals `[start, end]` during which `point` is seen by
    /// at least `min_views` cameras.
    pub fn visible_intervals(&self, point: usize, min_views: usize) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        let mut start = None;
        for t in 0..self.frames {
            let seen = self.view_count(t, point) >= min_views;
            match (seen, start) {
                (true, None) => start = Some(t),
                (false, Some(s)) => {
                    out.push((s, t - 1));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((s, self.frames - 1));
        }
        out
    }
}

/// Every frame's observations plus the exact visibility record.
#[derive(Debug, Clone)]
pub struct Rendering {
    pub frames: Vec<FrameObservations>,
    pub truth: GroundTruth,
}

pub fn render_observations(scene: &Scene, rig: &Rig) -> Rendering {
    let mut truth = GroundTruth::new(scene.frames(), scene.point_count(), rig.len());
    let frames = (0..scene.frames())
        .map(|t| render_frame(scene, rig, t, &mut truth))
        .collect();
    Rendering { frames, truth }
}

struct Projected {
    point: u32,
    body: u32,
    pixel: Vector2<f64>,
    depth: f64,
}

/// Renders one frame: projects every point into every camera, drops points
/// behind a camera, outside the image, or within one pixel of a nearer point
/// of a different body, and adds Gaussian pixel noise. Geometric visibility
/// is recorded in `truth`.
pub fn render_frame(scene: &Scene, rig: &Rig, frame: u32, truth: &mut GroundTruth) -> FrameObservations {
    let positions = scene.positions(frame);
    let sigma = scene.spec().noise.obs_sigma_px;
    let mut rng = stream_rng(scene.spec().seed, "render", u64::from(frame));
    let multi_body = scene.bodies().len() > 1;
    let mut index = PixelIndex::default();
    let mut entries = Vec::new();
    for camera in rig.cameras() {
        let mut projected = Vec::new();
        for (i, x) in positions.iter().enumerate() {
            let Ok(pixel) = camera.project(x) else { continue };
            if camera.in_bounds(&pixel) {
                projected.push(Projected {
                    point: i as u32,
                    body: scene.body_of(i) as u32,
                    pixel,
                    depth: camera.depth(x),
                });
            }
        }
        if multi_body {
            index.build(camera.width(), camera.height(), projected.iter().map(|p| p.pixel));
        }
        for p in &projected {
            if multi_body && index.occluded(&projected, p) {
                continue;
            }
            truth.set_visible(frame, p.point as usize, camera.id());
            let noise = if sigma > 0.0 {
                let nx: f64 = StandardNormal.sample(&mut rng);
                let ny: f64 = StandardNormal.sample(&mut rng);
                Vector2::new(nx, ny) * sigma
            } else {
                Vector2::zeros()
            };
            entries.push(TrackObservation {
                track: p.point,
                observation: Observation {
                    camera: camera.id(),
                    pixel: p.pixel + noise,
                    frame,
                },
            });
        }
    }
    FrameObservations::new(frame, entries)
}

/// Per-pixel linked buckets over projected points, reused across cameras.
#[derive(Default)]
struct PixelIndex {
    width: usize,
    height: usize,
    head: Vec<u32>,
    next: Vec<u32>,
    touched: Vec<usize>,
}

const NONE: u32 = u32::MAX;

impl PixelIndex {
    fn build(&mut self, width: u32, height: u32, pixels: impl Iterator<Item = Vector2<f64>>) {
        let (w, h) = (width as usize, height as usize);
        if self.width != w || self.height != h {
            self.width = w;
            self.height = h;
            self.head = vec![NONE; w * h];
        } else {
            for &c in &self.touched {
                self.head[c] = NONE;
            }
        }
        self.touched.clear();
        self.next.clear();
        for (i, p) in pixels.enumerate() {
            let c = self.cell(p.x as usize, p.y as usize);
            self.next.push(self.head[c]);
            self.head[c] = i as u32;
            self.touched.push(c);
        }
    }

    fn cell(&self, x: usize, y: usize) -> usize {
        y.min(self.height - 1) * self.width + x.min(self.width - 1)
    }

    fn occluded(&self, all: &[Projected], p: &Projected) -> bool {
        let (cx, cy) = (p.pixel.x as isize, p.pixel.y as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (x, y) = (cx + dx, cy + dy);
                if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
                    continue;
                }
                let mut j = self.head[self.cell(x as usize, y as usize)];
                while j != NONE {
                    let q = &all[j as usize];
                    if q.body != p.body
                        && q.depth < p.depth
                        && (q.pixel - p.pixel).norm() <= OCCLUSION_RADIUS_PX
                    {
                        return true;
                    }
                    j = self.next[j as usize];
                }
            }
        }
        false
    }
}
