//! Trajectory stream reconstruction: per-frame triangulation, tracking by
//! correspondence id, visibility update and termination.

pub mod io;

use std::collections::HashMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Degenerate, Observation, RansacParams, Rig};
use crate::scene::FrameObservations;
use crate::seed::mix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerParams {
    /// Visibility kernel width in pixels.
    pub sigma: f64,
    /// Visibility threshold: a camera counts as seeing the point when
    /// `V > eps_s`.
    pub eps_s: f64,
    /// Termination bound on the mean inlier reprojection error (pixels).
    pub max_reproj: f64,
    pub min_views: usize,
    /// Fraction of usable views that must agree with the triangulated point.
    pub min_inlier_fraction: f64,
    pub ransac: RansacParams,
}

impl Default for TrackerParams {
    fn default() -> Self {
        TrackerParams {
            sigma: 2.0,
            eps_s: 0.3,
            max_reproj: 2.0,
            min_views: 2,
            min_inlier_fraction: 0.5,
            ransac: RansacParams::default(),
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("tracker.sigma", "must be positive"));
        }
        if !(self.eps_s > 0.0 && self.eps_s < 1.0) {
            return Err(Error::invalid("tracker.eps_s", "must be in (0, 1)"));
        }
        if !(self.max_reproj > 0.0 && self.max_reproj.is_finite()) {
            return Err(Error::invalid("tracker.max_reproj", "must be positive"));
        }
        if self.min_views < 2 {
            return Err(Error::invalid("tracker.min_views", "must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.min_inlier_fraction) {
            return Err(Error::invalid("tracker.min_inlier_fraction", "must be in [0, 1]"));
        }
        let r = &self.ransac;
        if !(r.threshold_px > 0.0) || !(r.min_angle_deg >= 0.0) || !(r.confidence > 0.0 && r.confidence < 1.0) {
            return Err(Error::invalid(
                "tracker.ransac",
                "threshold must be positive, min angle non-negative, confidence in (0, 1)",
            ));
        }
        if r.max_iterations == 0 {
            return Err(Error::invalid("tracker.ransac.max_iterations", "must be positive"));
        }
        Ok(())
    }
}

/// Sparse per-frame visibility: `(camera, V)` pairs sorted by camera.
pub type Visibility = Vec<(u16, f32)>;

/// A 3D point track over the contiguous frame range `[emerge, dissolve]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: u32,
    /// Correspondence id of the observations it was built from.
    pub source: u32,
    pub emerge: u32,
    pub points: Vec<Vector3<f64>>,
    pub visibility: Vec<Visibility>,
    /// Mean inlier reprojection error per frame (pixels).
    pub reprojection: Vec<f32>,
}

impl Trajectory {
    pub fn new(id: u32, source: u32, emerge: u32) -> Self {
        Trajectory {
            id,
            source,
            emerge,
            points: Vec::new(),
            visibility: Vec::new(),
            reprojection: Vec::new(),
        }
    }

    pub fn push(&mut self, point: Vector3<f64>, visibility: Visibility, reprojection: f32) {
        self.points.push(point);
        self.visibility.push(visibility);
        self.reprojection.push(reprojection);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Last frame (`T_d`). Only meaningful for non-empty trajectories.
    pub fn dissolve(&self) -> u32 {
        self.emerge + self.points.len() as u32 - 1
    }

    pub fn alive(&self, frame: u32) -> bool {
        frame >= self.emerge && ((frame - self.emerge) as usize) < self.points.len()
    }

    pub fn point(&self, frame: u32) -> Option<&Vector3<f64>> {
        self.alive(frame).then(|| &self.points[(frame - self.emerge) as usize])
    }

    pub fn visibility_at(&self, frame: u32) -> &[(u16, f32)] {
        if self.alive(frame) {
            &self.visibility[(frame - self.emerge) as usize]
        } else {
            &[]
        }
    }

    pub fn frames(&self) -> std::ops::Range<u32> {
        self.emerge..self.emerge + self.points.len() as u32
    }

    /// Frames shared with `other`.
    pub fn overlap(&self, other: &Trajectory) -> std::ops::Range<u32> {
        let start = self.emerge.max(other.emerge);
        let end = self.frames().end.min(other.frames().end);
        start..end.max(start)
    }

    /// Number of cameras with `V > eps` at `frame`.
    pub fn visible_count(&self, frame: u32, eps: f64) -> usize {
        self.visibility_at(frame).iter().filter(|(_, v)| f64::from(*v) > eps).count()
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.points.is_empty() {
            return Err(format!("trajectory {} is empty", self.id));
        }
        if self.visibility.len() != self.points.len() || self.reprojection.len() != self.points.len() {
            return Err(format!("trajectory {} has ragged per-frame data", self.id));
        }
        if self.points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(format!("trajectory {} has a non-finite point", self.id));
        }
        for vis in &self.visibility {
            if vis.iter().any(|(_, v)| !(0.0..=1.0).contains(v)) {
                return Err(format!("trajectory {} has visibility outside [0, 1]", self.id));
            }
            if vis.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(format!("trajectory {} has unsorted visibility", self.id));
            }
        }
        Ok(())
    }
}

/// A triangulated point ready to start or extend a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedPoint {
    pub point: Vector3<f64>,
    pub visibility: Visibility,
    pub reprojection: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DissolveReason {
    /// Fewer than `min_views` usable cameras.
    TooFewViews,
    /// Triangulation failed (no consensus or narrow baseline).
    Degenerate,
    /// The point no longer reprojects consistently: mean inlier error above
    /// `max_reproj`, or too few usable views agree with it.
    Reprojection,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Extended,
    Dissolved(DissolveReason),
}

/// Visibility of `point` in every camera that observed it.
pub fn visibility_map(rig: &Rig, point: &Vector3<f64>, observations: &[Observation], sigma: f64) -> Visibility {
    let mut vis: Visibility = observations
        .iter()
        .map(|o| {
            let v = geometry::visibility(rig.camera(o.camera), point, &o.pixel, sigma);
            (o.camera as u16, v as f32)
        })
        .filter(|(_, v)| *v > 0.0)
        .collect();
    vis.sort_by_key(|(c, _)| *c);
    vis.dedup_by_key(|(c, _)| *c);
    vis
}

/// Triangulates `observations` and applies the acceptance rules shared by
/// seeding and tracking.
fn accept(
    rig: &Rig,
    observations: &[Observation],
    params: &TrackerParams,
    stream: u64,
) -> std::result::Result<TrackedPoint, DissolveReason> {
    let ransac = params.ransac.with_stream(stream);
    let tri = geometry::triangulate(rig, observations, &ransac).map_err(|e| match e {
        Degenerate::TooFewViews | Degenerate::NarrowBaseline => DissolveReason::Degenerate,
    })?;
    let reprojection = tri.mean_inlier_residual();
    if reprojection > params.max_reproj
        || (tri.inliers.len() as f64) < params.min_inlier_fraction * observations.len() as f64
    {
        return Err(DissolveReason::Reprojection);
    }
    let visibility = visibility_map(rig, &tri.point, observations, params.sigma);
    if visibility.iter().filter(|(_, v)| f64::from(*v) > params.eps_s).count() < params.min_views {
        return Err(DissolveReason::TooFewViews);
    }
    Ok(TrackedPoint {
        point: tri.point,
        visibility,
        reprojection,
    })
}

fn distinct_cameras(observations: &[Observation]) -> usize {
    let mut cams: Vec<usize> = observations.iter().map(|o| o.camera).collect();
    cams.sort_unstable();
    cams.dedup();
    cams.len()
}

/// Triangulates one point per correspondence group of `frame` for which
/// `wanted(id)` holds. Returns the seeds (by id) and the number of groups
/// skipped as degenerate or under-observed.
pub fn seed_points(
    frame: &FrameObservations,
    rig: &Rig,
    params: &TrackerParams,
    mut wanted: impl FnMut(u32) -> bool,
) -> (Vec<(u32, TrackedPoint)>, usize) {
    let mut seeds = Vec::new();
    let mut skipped = 0;
    for (id, group) in frame.groups() {
        if !wanted(id) {
            continue;
        }
        if distinct_cameras(&group) < params.min_views {
            skipped += 1;
            continue;
        }
        match accept(rig, &group, params, mix(&[u64::from(id), u64::from(frame.frame)])) {
            Ok(p) => seeds.push((id, p)),
            Err(_) => skipped += 1,
        }
    }
    (seeds, skipped)
}

/// Extends `traj` into the next frame using the observations of its
/// correspondence id there (`next`). Only cameras that saw the point at the
/// current frame (`V > eps_s`) are used for triangulation; visibility is then
/// recomputed from the new point for every observing camera.
pub fn track_step(traj: &mut Trajectory, next: &[Observation], rig: &Rig, params: &TrackerParams) -> StepOutcome {
    let t = traj.dissolve();
    let usable_cams: Vec<u16> = traj
        .visibility_at(t)
        .iter()
        .filter(|(_, v)| f64::from(*v) > params.eps_s)
        .map(|(c, _)| *c)
        .collect();
    let usable: Vec<Observation> = next
        .iter()
        .filter(|o| usable_cams.binary_search(&(o.camera as u16)).is_ok())
        .copied()
        .collect();
    if distinct_cameras(&usable) < params.min_views {
        return StepOutcome::Dissolved(DissolveReason::TooFewViews);
    }
    let stream = mix(&[u64::from(traj.source), u64::from(t + 1)]);
    match accept(rig, &usable, params, stream) {
        Ok(p) => {
            let visibility = visibility_map(rig, &p.point, next, params.sigma);
            if visibility.iter().filter(|(_, v)| f64::from(*v) > params.eps_s).count() < params.min_views {
                return StepOutcome::Dissolved(DissolveReason::TooFewViews);
            }
            traj.push(p.point, visibility, p.reprojection as f32);
            StepOutcome::Extended
        }
        Err(reason) => StepOutcome::Dissolved(reason),
    }
}

/// Counters collected while building a stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamStats {
    pub seeded: usize,
    pub skipped_seeds: usize,
    pub dissolved_too_few_views: usize,
    pub dissolved_degenerate: usize,
    pub dissolved_reprojection: usize,
    /// Trajectories discarded for living a single frame.
    pub discarded_short: usize,
}

/// Builds the trajectory stream from frames delivered in order.
///
/// Frame 0 seeds every correspondence; at later frames live trajectories are
/// extended first, then every id without a live trajectory (new, or just
/// dissolved) is re-seeded. Trajectories living at least two frames are
/// returned, ordered by id (ids are assigned in creation order).
pub fn build_stream<I>(frames: I, rig: &Rig, params: &TrackerParams) -> Result<(Vec<Trajectory>, StreamStats)>
where
    I: IntoIterator<Item = Result<FrameObservations>>,
{
    params.validate()?;
    let mut stats = StreamStats::default();
    let mut live: HashMap<u32, Trajectory> = HashMap::new();
    let mut done = Vec::new();
    let mut next_id = 0u32;
    let finish = |traj: Trajectory, done: &mut Vec<Trajectory>, stats: &mut StreamStats| {
        if traj.len() >= 2 {
            done.push(traj);
        } else {
            stats.discarded_short += 1;
        }
    };
    for (expected, frame) in frames.into_iter().enumerate() {
        let frame = frame?;
        if frame.frame as usize != expected {
            return Err(Error::invalid(
                "observations",
                format!("frame {} delivered out of order", frame.frame),
            ));
        }
        // Extend live trajectories in source order for determinism.
        let mut sources: Vec<u32> = live.keys().copied().collect();
        sources.sort_unstable();
        for source in sources {
            let next = frame.track(source);
            let traj = live.get_mut(&source).expect("live source");
            if let StepOutcome::Dissolved(reason) = track_step(traj, &next, rig, params) {
                match reason {
                    DissolveReason::TooFewViews => stats.dissolved_too_few_views += 1,
                    DissolveReason::Degenerate => stats.dissolved_degenerate += 1,
                    DissolveReason::Reprojection => stats.dissolved_reprojection += 1,
                }
                let traj = live.remove(&source).expect("live source");
                finish(traj, &mut done, &mut stats);
            }
        }
        let (seeds, skipped) = seed_points(&frame, rig, params, |id| !live.contains_key(&id));
        stats.skipped_seeds += skipped;
        for (source, p) in seeds {
            let mut traj = Trajectory::new(next_id, source, frame.frame);
            next_id += 1;
            traj.push(p.point, p.visibility, p.reprojection as f32);
            live.insert(source, traj);
            stats.seeded += 1;
        }
    }
    for (_, traj) in live {
        finish(traj, &mut done, &mut stats);
    }
    done.sort_by_key(|t| t.id);
    Ok((done, stats))
}
