//! 3D semantic maps: per-frame view pooling of 2D confidences across the
//! cameras that see a trajectory, averaged over its lifespan.

use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rig;
use crate::label::Label;
use crate::reconstruct::Trajectory;
use crate::scene::{FrameFields, SceneFields};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolParams {
    /// Minimum visibility for a camera to be a pooling candidate.
    pub eps_v: f64,
    pub min_candidates: usize,
}

impl Default for PoolParams {
    fn default() -> Self {
        PoolParams {
            eps_v: 0.3,
            min_candidates: 1,
        }
    }
}

impl PoolParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_v > 0.0 && self.eps_v < 1.0) {
            return Err(Error::invalid("pool.eps_v", "must be in (0, 1)"));
        }
        if self.min_candidates < 1 {
            return Err(Error::invalid("pool.min_candidates", "must be at least 1"));
        }
        Ok(())
    }
}

/// How per-camera confidences are combined within a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMethod {
    /// Visibility-weighted medoid ([`view_pool`]).
    View,
    /// Visibility-weighted mean over every observing camera ([`average_pool`]).
    Average,
}

impl PoolMethod {
    pub fn name(self) -> &'static str {
        match self {
            PoolMethod::View => "view_pool",
            PoolMethod::Average => "average_pool",
        }
    }
}

/// One camera's confidence vector and visibility for a point.
#[derive(Debug, Clone, Copy)]
pub struct View<'a> {
    pub camera: usize,
    pub confidence: &'a [f64],
    pub visibility: f64,
}

/// No camera qualified for pooling at this frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoView;

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Pooling cost of candidate `c`, summed in camera order so the value does
/// not depend on input order.
fn exact_cost(views: &[View], order: &[usize], c: usize) -> f64 {
    order
        .iter()
        .map(|&j| views[j].visibility * squared_distance(views[c].confidence, views[j].confidence))
        .sum()
}

/// Weighted medoid over the candidate subset: the candidate `c` minimizing
/// `sum_j V_j |L_c - L_j|^2` over all views `j`, ties to the lowest camera id.
/// Returns an index into `views`.
pub fn weighted_medoid(views: &[View], is_candidate: impl Fn(&View) -> bool) -> Option<usize> {
    let n = views.first()?.confidence.len();
    // Closed form: W |L_c|^2 - 2 L_c . S + Q, then exact re-scoring of the
    // near-minimal candidates.
    let mut w = 0.0;
    let mut s = vec![0.0; n];
    let mut q = 0.0;
    for v in views {
        w += v.visibility;
        let mut norm = 0.0;
        for (acc, x) in s.iter_mut().zip(v.confidence) {
            *acc += v.visibility * x;
            norm += x * x;
        }
        q += v.visibility * norm;
    }
    let fast: Vec<(usize, f64)> = views
        .iter()
        .enumerate()
        .filter(|(_, v)| is_candidate(v))
        .map(|(i, v)| {
            let norm: f64 = v.confidence.iter().map(|x| x * x).sum();
            let dot: f64 = v.confidence.iter().zip(&s).map(|(x, y)| x * y).sum();
            (i, w * norm - 2.0 * dot + q)
        })
        .collect();
    let min = fast.iter().map(|(_, c)| *c).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    let tolerance = 1e-9 * (q.abs() + w * s.iter().map(|x| x.abs()).sum::<f64>() + 1.0);
    let mut order: Vec<usize> = (0..views.len()).collect();
    order.sort_by_key(|&i| views[i].camera);
    let mut best: Option<(f64, usize, usize)> = None;
    for &(i, c) in &fast {
        if c > min + tolerance {
            continue;
        }
        let cost = exact_cost(views, &order, i);
        let key = (cost, views[i].camera);
        if best.is_none_or(|(bc, bcam, _)| key < (bc, bcam)) {
            best = Some((cost, views[i].camera, i));
        }
    }
    best.map(|(_, _, i)| i)
}

/// View pooling: restricts candidates to cameras with `V > eps_v` and returns
/// the index (into `views`) of the weighted medoid.
pub fn view_pool(views: &[View], params: &PoolParams) -> std::result::Result<usize, NoView> {
    let candidates = views.iter().filter(|v| v.visibility > params.eps_v).count();
    if candidates == 0 || candidates < params.min_candidates {
        return Err(NoView);
    }
    weighted_medoid(views, |v| v.visibility > params.eps_v).ok_or(NoView)
}

/// Visibility-weighted mean of every view, written to `out`.
pub fn average_pool(views: &[View], out: &mut [f64]) -> std::result::Result<(), NoView> {
    let w: f64 = views.iter().map(|v| v.visibility).sum();
    if !(w > 0.0) {
        return Err(NoView);
    }
    out.fill(0.0);
    for v in views {
        for (o, x) in out.iter_mut().zip(v.confidence) {
            *o += v.visibility * x;
        }
    }
    for o in out.iter_mut() {
        *o /= w;
    }
    Ok(())
}

/// Per-frame confidence queries.
pub trait FrameConfidence {
    fn classes(&self) -> usize;
    fn query_into(&self, camera: usize, pixel: &Vector2<f64>, out: &mut [f64]);
}

/// A source of per-frame confidence fields.
pub trait ConfidenceSource {
    fn classes(&self) -> usize;
    fn frame(&self, frame: u32) -> Box<dyn FrameConfidence + '_>;
}

impl FrameConfidence for FrameFields<'_> {
    fn classes(&self) -> usize {
        FrameFields::classes(self)
    }

    fn query_into(&self, camera: usize, pixel: &Vector2<f64>, out: &mut [f64]) {
        FrameFields::query_into(self, camera, pixel, out);
    }
}

impl ConfidenceSource for SceneFields<'_> {
    fn classes(&self) -> usize {
        self.set.classes
    }

    fn frame(&self, frame: u32) -> Box<dyn FrameConfidence + '_> {
        Box::new(SceneFields::frame(self, frame))
    }
}

/// Reusable buffers for pooling trajectory-frames.
#[derive(Debug, Default)]
pub struct PoolScratch {
    /// Per queued trajectory, the start of its views (plus a final end).
    offsets: Vec<usize>,
    cameras: Vec<usize>,
    visibility: Vec<f64>,
    pixels: Vec<Vector2<f64>>,
    order: Vec<usize>,
    values: Vec<f64>,
    pooled: Vec<f64>,
}

impl PoolScratch {
    fn clear(&mut self) {
        self.offsets.clear();
        self.offsets.push(0);
        self.cameras.clear();
        self.visibility.clear();
        self.pixels.clear();
    }

    /// Queues the usable views of `traj` at `frame`.
    fn queue(&mut self, traj: &Trajectory, frame: u32, rig: &Rig, cameras: Option<&[bool]>) {
        if let Some(point) = traj.point(frame) {
            for &(c, v) in traj.visibility_at(frame) {
                let c = usize::from(c);
                if cameras.is_some_and(|mask| !mask[c]) || v <= 0.0 {
                    continue;
                }
                let camera = rig.camera(c);
                let Ok(pixel) = camera.project(point) else { continue };
                if !camera.in_bounds(&pixel) {
                    continue;
                }
                self.cameras.push(c);
                self.visibility.push(f64::from(v));
                self.pixels.push(pixel);
            }
        }
        self.offsets.push(self.cameras.len());
    }

    /// Answers every queued view, camera by camera so each camera's field
    /// stays hot in cache. Queries are pure, so the order does not matter.
    fn query(&mut self, fields: &dyn FrameConfidence) {
        let n = fields.classes();
        self.values.clear();
        self.values.resize(self.cameras.len() * n, 0.0);
        self.order.clear();
        self.order.extend(0..self.cameras.len());
        let cameras = &self.cameras;
        self.order.sort_by_key(|&q| cameras[q]);
        for &q in &self.order {
            fields.query_into(self.cameras[q], &self.pixels[q], &mut self.values[q * n..(q + 1) * n]);
        }
    }

    /// Pools the `k`-th queued trajectory.
    fn pool(&mut self, k: usize, n: usize, method: PoolMethod, params: &PoolParams) -> Option<&[f64]> {
        let (lo, hi) = (self.offsets[k], self.offsets[k + 1]);
        let views: Vec<View> = (lo..hi)
            .map(|q| View {
                camera: self.cameras[q],
                confidence: &self.values[q * n..(q + 1) * n],
                visibility: self.visibility[q],
            })
            .collect();
        self.pooled.resize(n, 0.0);
        match method {
            PoolMethod::View => {
                let i = view_pool(&views, params).ok()?;
                self.pooled.copy_from_slice(views[i].confidence);
            }
            PoolMethod::Average => average_pool(&views, &mut self.pooled).ok()?,
        }
        Some(&self.pooled)
    }
}

/// Pools the confidences of `traj` at `frame` (alive there). `cameras`, when
/// given, restricts pooling to the marked cameras. Returns the pooled vector
/// (borrowed from `scratch`) or `None` when no view qualifies.
#[allow(clippy::too_many_arguments)]
pub fn pool_frame<'s>(
    traj: &Trajectory,
    frame: u32,
    fields: &dyn FrameConfidence,
    rig: &Rig,
    method: PoolMethod,
    params: &PoolParams,
    cameras: Option<&[bool]>,
    scratch: &'s mut PoolScratch,
) -> Option<&'s [f64]> {
    scratch.clear();
    scratch.queue(traj, frame, rig, cameras);
    scratch.query(fields);
    scratch.pool(0, fields.classes(), method, params)
}

/// Walks frames in order and calls `visit(trajectory index, frame, pooled)`
/// for every trajectory-frame that pools to a vector. Fields are built once
/// per frame.
#[allow(clippy::too_many_arguments)]
pub fn for_each_pooled(
    trajectories: &[Trajectory],
    source: &dyn ConfidenceSource,
    rig: &Rig,
    method: PoolMethod,
    params: &PoolParams,
    cameras: Option<&[bool]>,
    frames: Option<std::ops::Range<u32>>,
    visit: impl FnMut(usize, u32, &[f64]),
) {
    for_each_pooled_where(trajectories, source, rig, method, params, cameras, frames, |_, _| true, visit);
}

/// [`for_each_pooled`] restricted to the trajectory-frames accepted by
/// `keep(trajectory index, frame)`; rejected ones are never queried.
#[allow(clippy::too_many_arguments)]
pub fn for_each_pooled_where(
    trajectories: &[Trajectory],
    source: &dyn ConfidenceSource,
    rig: &Rig,
    method: PoolMethod,
    params: &PoolParams,
    cameras: Option<&[bool]>,
    frames: Option<std::ops::Range<u32>>,
    keep: impl Fn(usize, u32) -> bool,
    mut visit: impl FnMut(usize, u32, &[f64]),
) {
    let Some(end) = trajectories.iter().map(|t| t.frames().end).max() else {
        return;
    };
    let start = trajectories.iter().map(|t| t.emerge).min().unwrap_or(0);
    let range = frames.unwrap_or(start..end);
    let n = source.classes();
    let mut scratch = PoolScratch::default();
    for t in range {
        let alive: Vec<usize> = (0..trajectories.len()).filter(|&i| trajectories[i].alive(t) && keep(i, t)).collect();
        if alive.is_empty() {
            continue;
        }
        let fields = source.frame(t);
        scratch.clear();
        for &i in &alive {
            scratch.queue(&trajectories[i], t, rig, cameras);
        }
        scratch.query(fields.as_ref());
        for (k, &i) in alive.iter().enumerate() {
            if let Some(v) = scratch.pool(k, n, method, params) {
                visit(i, t, v);
            }
        }
    }
}

/// A trajectory's 3D semantic map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticMap {
    pub values: Vec<f64>,
    /// Frames that contributed; zero means no frame had a usable view and
    /// `values` is all zeros.
    pub pooled_frames: u32,
}

impl SemanticMap {
    pub fn is_empty(&self) -> bool {
        self.pooled_frames == 0
    }

    pub fn argmax(&self) -> Label {
        argmax_label(&self.values)
    }
}

/// Index of the largest entry as a label; ties go to the lowest label.
pub fn argmax_label(values: &[f64]) -> Label {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    Label::from_index(best)
}

/// Semantic maps of every trajectory: pooled vectors averaged over the frames
/// that produced one.
pub fn build_semantic_maps(
    trajectories: &[Trajectory],
    source: &dyn ConfidenceSource,
    rig: &Rig,
    method: PoolMethod,
    params: &PoolParams,
    cameras: Option<&[bool]>,
) -> Vec<SemanticMap> {
    let n = source.classes();
    let mut maps: Vec<SemanticMap> = trajectories
        .iter()
        .map(|_| SemanticMap {
            values: vec![0.0; n],
            pooled_frames: 0,
        })
        .collect();
    for_each_pooled(trajectories, source, rig, method, params, cameras, None, |i, _, v| {
        let m = &mut maps[i];
        for (a, x) in m.values.iter_mut().zip(v) {
            *a += x;
        }
        m.pooled_frames += 1;
    });
    for m in &mut maps {
        if m.pooled_frames > 0 {
            let k = f64::from(m.pooled_frames);
            for a in &mut m.values {
                *a /= k;
            }
        }
    }
    maps
}

/// Semantic map of a single trajectory.
pub fn build_semantic_map(
    traj: &Trajectory,
    source: &dyn ConfidenceSource,
    rig: &Rig,
    params: &PoolParams,
) -> SemanticMap {
    build_semantic_maps(std::slice::from_ref(traj), source, rig, PoolMethod::View, params, None)
        .pop()
        .expect("one map")
}

/// CSV: `trajectory_id, l1..lN, argmax, pooled_frames`.
pub fn write_semantic_csv(path: &Path, trajectories: &[Trajectory], maps: &[SemanticMap]) -> Result<()> {
    let n = maps.first().map_or(0, |m| m.values.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["trajectory_id".to_string()];
    header.extend((1..=n).map(|k| format!("l{k}")));
    header.push("argmax".into());
    header.push("pooled_frames".into());
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for (t, m) in trajectories.iter().zip(maps) {
        let mut row = vec![t.id.to_string()];
        row.extend(m.values.iter().map(|v| v.to_string()));
        row.push(m.argmax().to_string());
        row.push(m.pooled_frames.to_string());
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a semantic-map CSV back as `(trajectory_id, map)` rows.
pub fn read_semantic_csv(path: &Path) -> Result<Vec<(u32, SemanticMap)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let width = r.headers().map_err(|e| Error::csv(path, e))?.len();
    if width < 4 {
        return Err(Error::format(path, "semantic CSV needs at least one class column"));
    }
    let n = width - 3;
    let mut out = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let bad = |what: &str| Error::format(path, format!("row {}: bad {what}", line + 1));
        let id: u32 = record[0].parse().map_err(|_| bad("trajectory_id"))?;
        let values = (1..=n)
            .map(|k| record[k].parse::<f64>().map_err(|_| bad("confidence")))
            .collect::<Result<Vec<_>>>()?;
        let pooled_frames = record[n + 2].parse().map_err(|_| bad("pooled_frames"))?;
        out.push((id, SemanticMap { values, pooled_frames }));
    }
    Ok(out)
}
