//! Long-range trajectory affinity from local rigid motion.
//!
//! Each trajectory gets a frame-to-frame rigid transform estimated by RANSAC
//! over its ε-neighbors; a second trajectory is affine to it when that
//! transform also predicts its motion. Affinity is
//! `exp(-(e / tau)^2)` with `e` the worst prediction residual over the
//! shared lifetime, evaluated only for ε_a-neighbors that survive a seeded
//! dropout.

pub mod io;

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reconstruct::Trajectory;
use crate::seed::{mix, unit};

const TAG_DROPOUT: u64 = 0x6472_6f70;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AffinityParams {
    /// Error scale of the affinity kernel (meters).
    pub tau: f64,
    /// Neighborhood radius for transform estimation (meters).
    pub eps: f64,
    /// Neighborhood radius for affinity evaluation (meters).
    pub eps_a: f64,
    /// Probability of dropping each candidate pair before evaluation.
    pub dropout: f64,
    pub seed: u64,
    /// RANSAC inlier bound on the rigid prediction residual (meters).
    pub inlier_tol: f64,
    /// Minimum shared lifetime, in frames, for two trajectories to interact.
    pub overlap_min: u32,
    /// At most this many nearest ε-neighbors feed the transform estimate.
    pub max_neighbors: usize,
    pub ransac_iterations: usize,
    pub ransac_confidence: f64,
}

impl Default for AffinityParams {
    fn default() -> Self {
        AffinityParams {
            tau: 0.02,
            eps: 0.05,
            eps_a: 0.30,
            dropout: 0.5,
            seed: 0,
            inlier_tol: 0.01,
            overlap_min: 2,
            max_neighbors: 64,
            ransac_iterations: 200,
            ransac_confidence: 0.999,
        }
    }
}

impl AffinityParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("affinity.tau", self.tau),
            ("affinity.eps", self.eps),
            ("affinity.eps_a", self.eps_a),
            ("affinity.inlier_tol", self.inlier_tol),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(field, "must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("affinity.dropout", "must be in [0, 1)"));
        }
        if self.overlap_min < 2 {
            return Err(Error::invalid("affinity.overlap_min", "must be at least 2 frames"));
        }
        if self.max_neighbors < 3 {
            return Err(Error::invalid("affinity.max_neighbors", "must be at least 3"));
        }
        if self.ransac_iterations == 0 || !(self.ransac_confidence > 0.0 && self.ransac_confidence < 1.0) {
            return Err(Error::invalid(
                "affinity.ransac_iterations",
                "need positive iterations and confidence in (0, 1)",
            ));
        }
        Ok(())
    }
}

/// A rotation and translation acting as `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    /// Angle of `self.rotation^T other.rotation` in radians.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        let r = self.rotation.transpose() * other.rotation;
        ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

/// Fewer than three usable neighbors, or every sample was rank-deficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Underdetermined;

/// Nearest rotation (Frobenius) to `m`.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let d = (u * v_t).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t
}

/// Rotation best mapping each `from[k]` onto `to[k]` (orthogonal Procrustes,
/// vectors already centered).
fn procrustes<'a>(pairs: impl Iterator<Item = (&'a Vector3<f64>, &'a Vector3<f64>)>) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for (a, b) in pairs {
        m += b * a.transpose();
    }
    nearest_rotation(&m)
}

/// Ratio of smallest to largest singular value below which a minimal sample's
/// displacement matrix is treated as rank-deficient.
const MIN_CONDITION: f64 = 1e-3;
/// Refit rounds after RANSAC.
const REFINE_ROUNDS: usize = 5;
/// Median of the chi distribution with three degrees of freedom: the median
/// norm of isotropic 3D Gaussian noise in units of its per-axis sigma.
const CHI3_MEDIAN: f64 = 1.5382;
/// Refit inlier bound in estimated noise sigmas (keeps ~99.9% of inliers).
const NOISE_MULTIPLE: f64 = 4.0;
/// The noise-matched bound never drops below this fraction of `inlier_tol`.
const MIN_TOL_FRACTION: f64 = 0.01;

/// Max distance between two trajectories over the frames they share, or
/// `None` when they share fewer than `overlap_min` frames.
fn max_distance(a: &Trajectory, b: &Trajectory, overlap_min: u32, stop_at: f64) -> Option<f64> {
    let s = a.overlap(b);
    if s.end - s.start < overlap_min {
        return None;
    }
    let mut worst: f64 = 0.0;
    for t in s {
        let d = (a.point(t).expect("alive") - b.point(t).expect("alive")).norm();
        worst = worst.max(d);
        if worst >= stop_at {
            break;
        }
    }
    Some(worst)
}

/// Trajectories `j != i` sharing at least `overlap_min` frames with `i` and
/// staying closer than `radius` throughout.
pub fn neighbors(trajectories: &[Trajectory], i: usize, radius: f64, overlap_min: u32) -> Vec<usize> {
    let a = &trajectories[i];
    (0..trajectories.len())
        .filter(|&j| j != i)
        .filter(|&j| max_distance(a, &trajectories[j], overlap_min, radius).is_some_and(|d| d < radius))
        .collect()
}

/// Per-frame uniform grids over trajectory positions for radius queries.
pub struct NeighborIndex<'a> {
    trajectories: &'a [Trajectory],
    radius: f64,
    start: u32,
    /// Per frame, every trajectory alive there.
    frames: Vec<Grid>,
    /// Per frame, only the trajectories emerging there.
    births: Vec<Grid>,
}

type Grid = HashMap<(i64, i64, i64), Vec<u32>>;

impl<'a> NeighborIndex<'a> {
    pub fn new(trajectories: &'a [Trajectory], radius: f64) -> Self {
        let start = trajectories.iter().map(|t| t.emerge).min().unwrap_or(0);
        let end = trajectories.iter().map(|t| t.frames().end).max().unwrap_or(0);
        let mut frames: Vec<Grid> = vec![HashMap::new(); (end - start) as usize];
        let mut births: Vec<Grid> = vec![HashMap::new(); (end - start) as usize];
        for (i, traj) in trajectories.iter().enumerate() {
            for (t, p) in traj.frames().zip(&traj.points) {
                frames[(t - start) as usize].entry(cell(p, radius)).or_default().push(i as u32);
            }
            if let Some(p) = traj.points.first() {
                births[(traj.emerge - start) as usize].entry(cell(p, radius)).or_default().push(i as u32);
            }
        }
        NeighborIndex {
            trajectories,
            radius,
            start,
            frames,
            births,
        }
    }

    fn near(grid: &Grid, p: &Vector3<f64>, radius: f64, mut visit: impl FnMut(usize)) {
        let (x, y, z) = cell(p, radius);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = grid.get(&(x + dx, y + dy, z + dz)) {
                        for &j in list {
                            visit(j as usize);
                        }
                    }
                }
            }
        }
    }

    /// Same result as [`neighbors`] with this index's radius, plus the max
    /// distance of each neighbor, sorted by trajectory index.
    pub fn query(&self, i: usize, overlap_min: u32) -> Vec<(usize, f64)> {
        self.query_where(i, overlap_min, |_| true)
    }

    /// [`NeighborIndex::query`] restricted to trajectories accepted by
    /// `keep`, which is applied before the (costlier) distance test.
    pub fn query_where(&self, i: usize, overlap_min: u32, mut keep: impl FnMut(usize) -> bool) -> Vec<(usize, f64)> {
        let a = &self.trajectories[i];
        let mut candidates = Vec::new();
        // Any neighbor is within the radius at the first shared frame, which
        // is either i's emergence or the neighbor's.
        for t in a.frames() {
            let p = a.point(t).expect("alive");
            // Each neighbor is visited at exactly one frame, so no dedup is needed.
            let k = (t - self.start) as usize;
            let grid = if t == a.emerge { &self.frames[k] } else { &self.births[k] };
            Self::near(grid, p, self.radius, |j| {
                let b = &self.trajectories[j];
                if j != i && (b.point(t).expect("alive") - p).norm() < self.radius {
                    candidates.push(j);
                }
            });
        }
        candidates.sort_unstable();
        candidates
            .into_iter()
            .filter(|&j| keep(j))
            .filter_map(|j| {
                let d = max_distance(a, &self.trajectories[j], overlap_min, self.radius)?;
                (d < self.radius).then_some((j, d))
            })
            .collect()
    }
}

fn cell(p: &Vector3<f64>, size: f64) -> (i64, i64, i64) {
    (
        (p.x / size).floor() as i64,
        (p.y / size).floor() as i64,
        (p.z / size).floor() as i64,
    )
}

/// RANSAC estimate of the rigid motion of trajectory `i` from frame `t - 1`
/// to `t`, using the given neighbor indices (those alive at both frames).
///
/// Minimal samples of three neighbors give the rotation from their
/// displacement vectors relative to the anchor, projected onto SO(3), and the
/// translation that predicts the anchor exactly. The best consensus is
/// refined by orthogonal Procrustes over the inliers and the anchor, with
/// the translation fit through their centroids.
pub fn local_transform_from(
    trajectories: &[Trajectory],
    i: usize,
    t: u32,
    neighbor_ids: &[usize],
    params: &AffinityParams,
) -> std::result::Result<RigidTransform, Underdetermined> {
    let anchor = &trajectories[i];
    let (Some(a0), Some(a1)) = (t.checked_sub(1).and_then(|s| anchor.point(s)), anchor.point(t)) else {
        return Err(Underdetermined);
    };
    let pairs: Vec<(Vector3<f64>, Vector3<f64>)> = neighbor_ids
        .iter()
        .filter_map(|&j| {
            let b = &trajectories[j];
            Some((*b.point(t - 1)?, *b.point(t)?))
        })
        .collect();
    let m = pairs.len();
    if m < 3 {
        return Err(Underdetermined);
    }
    let d0: Vec<Vector3<f64>> = pairs.iter().map(|(p, _)| p - a0).collect();
    let d1: Vec<Vector3<f64>> = pairs.iter().map(|(_, q)| q - a1).collect();
    let score = |rt: &RigidTransform| -> (usize, f64) {
        let mut count = 0;
        let mut total = 0.0;
        for (p, q) in &pairs {
            let r = (q - rt.apply(p)).norm();
            if r < params.inlier_tol {
                count += 1;
                total += r;
            }
        }
        (count, total)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[params.seed, u64::from(anchor.id), u64::from(t)]));
    let mut best: Option<(RigidTransform, usize, f64)> = None;
    let mut needed = params.ransac_iterations;
    let mut iteration = 0;
    while iteration < needed.min(params.ransac_iterations) {
        iteration += 1;
        let s = rand::seq::index::sample(&mut rng, m, 3);
        let (j0, j1, j2) = (s.index(0), s.index(1), s.index(2));
        let m0 = Matrix3::from_columns(&[d0[j0], d0[j1], d0[j2]]);
        let sv = m0.singular_values();
        if !(sv.min() > MIN_CONDITION * sv.max()) {
            continue;
        }
        let rotation = procrustes([j0, j1, j2].iter().map(|&k| (&d0[k], &d1[k])));
        let model = RigidTransform {
            rotation,
            translation: a1 - rotation * a0,
        };
        let (count, total) = score(&model);
        if best.as_ref().is_none_or(|(_, bc, bt)| count > *bc || (count == *bc && total < *bt)) {
            let w = count as f64 / m as f64;
            needed = adaptive_iterations(params.ransac_confidence, w * w * w, params.ransac_iterations);
            best = Some((model, count, total));
        }
    }
    let Some((model, count, _)) = best else {
        return Err(Underdetermined);
    };
    if count == 0 {
        return Ok(model);
    }

    // Refine on the consensus plus the anchor, then re-select inliers at a
    // threshold matched to the observed noise and refit until the set is
    // stable. Contaminating neighbors whose motion differs from the anchor's
    // by less than `inlier_tol` but clearly more than the noise drop out.
    let mut tol = params.inlier_tol;
    let mut current = model;
    let mut selected: Vec<bool> = pairs.iter().map(|(p, q)| (q - model.apply(p)).norm() < tol).collect();
    for _ in 0..REFINE_ROUNDS {
        let refined = fit_rigid(
            std::iter::once((a0, a1)).chain(pairs.iter().zip(&selected).filter(|(_, &s)| s).map(|((p, q), _)| (p, q))),
        );
        let residuals: Vec<f64> = pairs.iter().map(|(p, q)| (q - refined.apply(p)).norm()).collect();
        let mut inlying: Vec<f64> = residuals.iter().copied().filter(|&r| r < tol).collect();
        if inlying.len() < 3 {
            break;
        }
        inlying.sort_by(f64::total_cmp);
        let sigma = inlying[inlying.len() / 2] / CHI3_MEDIAN;
        tol = (NOISE_MULTIPLE * sigma).clamp(params.inlier_tol * MIN_TOL_FRACTION, params.inlier_tol);
        let next: Vec<bool> = residuals.iter().map(|&r| r < tol).collect();
        current = refined;
        if next == selected {
            break;
        }
        selected = next;
    }
    Ok(current)
}

/// Least-squares rigid motion (orthogonal Procrustes with the translation
/// through the centroids).
fn fit_rigid<'a>(pairs: impl Iterator<Item = (&'a Vector3<f64>, &'a Vector3<f64>)> + Clone) -> RigidTransform {
    let k = pairs.clone().count() as f64;
    let c0 = pairs.clone().map(|(p, _)| p).sum::<Vector3<f64>>() / k;
    let c1 = pairs.clone().map(|(_, q)| q).sum::<Vector3<f64>>() / k;
    let centered: Vec<(Vector3<f64>, Vector3<f64>)> = pairs.map(|(p, q)| (p - c0, q - c1)).collect();
    let rotation = procrustes(centered.iter().map(|(p, q)| (p, q)));
    RigidTransform {
        rotation,
        translation: c1 - rotation * c0,
    }
}

fn adaptive_iterations(confidence: f64, sample_success: f64, cap: usize) -> usize {
    if sample_success >= 1.0 {
        return 1;
    }
    if sample_success <= 0.0 {
        return cap;
    }
    let n = (1.0 - confidence).ln() / (1.0 - sample_success).ln();
    if n.is_finite() { (n.ceil() as usize).clamp(1, cap) } else { cap }
}

/// The `max_neighbors` nearest of the ε-neighbors of `i` (by max distance,
/// ties by index).
fn capped(mut found: Vec<(usize, f64)>, cap: usize) -> Vec<usize> {
    if found.len() > cap {
        found.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        found.truncate(cap);
    }
    let mut ids: Vec<usize> = found.into_iter().map(|(j, _)| j).collect();
    ids.sort_unstable();
    ids
}

/// Local transform of trajectory `i` between frames `t - 1` and `t` from its
/// ε-neighbors (capped at the `max_neighbors` nearest).
pub fn local_transform(
    trajectories: &[Trajectory],
    i: usize,
    t: u32,
    params: &AffinityParams,
) -> std::result::Result<RigidTransform, Underdetermined> {
    let found: Vec<(usize, f64)> = neighbors(trajectories, i, params.eps, params.overlap_min)
        .into_iter()
        .map(|j| {
            let d = max_distance(&trajectories[i], &trajectories[j], params.overlap_min, f64::INFINITY)
                .expect("neighbor overlap");
            (j, d)
        })
        .collect();
    local_transform_from(trajectories, i, t, &capped(found, params.max_neighbors), params)
}

/// Frame-to-frame transforms of one trajectory: entry `k` maps frame
/// `emerge + k` to `emerge + k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSeries {
    pub emerge: u32,
    pub steps: Vec<Option<RigidTransform>>,
}

impl TransformSeries {
    /// Transform from `t - 1` to `t`, if estimated.
    pub fn at(&self, t: u32) -> Option<&RigidTransform> {
        let k = t.checked_sub(self.emerge + 1)? as usize;
        self.steps.get(k)?.as_ref()
    }
}

/// Transform series of every trajectory.
pub fn estimate_transforms(trajectories: &[Trajectory], params: &AffinityParams) -> Vec<TransformSeries> {
    let index = NeighborIndex::new(trajectories, params.eps);
    (0..trajectories.len())
        .map(|i| {
            let traj = &trajectories[i];
            let ids = capped(index.query(i, params.overlap_min), params.max_neighbors);
            let steps = (traj.emerge + 1..traj.frames().end)
                .map(|t| local_transform_from(trajectories, i, t, &ids, params).ok())
                .collect();
            TransformSeries {
                emerge: traj.emerge,
                steps,
            }
        })
        .collect()
}

/// Worst rigid-prediction residual of trajectory `j` under `i`'s transforms
/// over consecutive shared frames; `+inf` when no transform applies.
pub fn reconstruction_error(trajectories: &[Trajectory], i: usize, j: usize, transforms: &TransformSeries) -> f64 {
    capped_error(&trajectories[i], &trajectories[j], transforms, f64::INFINITY)
}

/// [`reconstruction_error`] that may stop early, returning infinity, once the
/// error reaches `stop_at`.
fn capped_error(a: &Trajectory, b: &Trajectory, transforms: &TransformSeries, stop_at: f64) -> f64 {
    let s = a.overlap(b);
    if s.end <= s.start + 1 {
        return f64::INFINITY;
    }
    // Steps s.start+1..s.end of `a`'s series and points s.start..s.end of `b`.
    let first = (s.start + 1 - transforms.emerge - 1) as usize;
    let steps = &transforms.steps[first..first + (s.end - s.start - 1) as usize];
    let points = &b.points[(s.start - b.emerge) as usize..(s.end - b.emerge) as usize];
    let mut worst = f64::NEG_INFINITY;
    for (rt, w) in steps.iter().zip(points.windows(2)) {
        let Some(rt) = rt else { continue };
        let e = (w[1] - rt.apply(&w[0])).norm();
        worst = worst.max(e);
        if worst >= stop_at {
            return f64::INFINITY;
        }
    }
    if worst == f64::NEG_INFINITY { f64::INFINITY } else { worst }
}

/// Affinity kernel `exp(-(e / tau)^2)`; zero for infinite error.
pub fn affinity_weight(error: f64, tau: f64) -> f64 {
    if error.is_finite() { (-(error / tau).powi(2)).exp() } else { 0.0 }
}

/// Symmetric weight of a pair: the larger of the two directed affinities.
pub fn pair_affinity(
    trajectories: &[Trajectory],
    transforms: &[TransformSeries],
    i: usize,
    j: usize,
    tau: f64,
) -> f64 {
    // Past 11 tau the weight exp(-121) is below the smallest positive f32, so
    // the stored weight is zero whether or not the scan finishes.
    let stop_at = 11.0 * tau;
    let (a, b) = (&trajectories[i], &trajectories[j]);
    let eij = capped_error(a, b, &transforms[i], stop_at);
    let eji = capped_error(b, a, &transforms[j], stop_at);
    affinity_weight(eij, tau).max(affinity_weight(eji, tau))
}

/// Whether dropout removes the pair of trajectory ids `(a, b)`.
pub fn dropped(seed: u64, dropout: f64, a: u32, b: u32) -> bool {
    let (lo, hi) = (a.min(b), a.max(b));
    unit(&[seed, TAG_DROPOUT, u64::from(lo), u64::from(hi)]) < dropout
}

/// Sparse symmetric affinity graph over trajectory indices, stored in
/// compressed rows (both directions present). Weights are held at `f32`
/// precision so a graph read back from disk is identical.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    pub params: AffinityParams,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
}

impl AffinityGraph {
    /// Builds a graph from undirected edges `(i, j, w)` with `i != j`;
    /// duplicate pairs keep the last weight. Zero weights are dropped.
    pub fn from_edges(nodes: usize, edges: &[(usize, usize, f64)], params: AffinityParams) -> Result<Self> {
        let mut kept: Vec<(u32, u32, f64)> = Vec::with_capacity(edges.len());
        for &(i, j, w) in edges {
            if i == j || i >= nodes || j >= nodes {
                return Err(Error::invalid("graph", format!("bad edge ({i}, {j})")));
            }
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::invalid("graph", format!("weight {w} outside [0, 1]")));
            }
            let w = f64::from(w as f32);
            if w > 0.0 {
                kept.push((i as u32, j as u32, w));
            }
        }
        // Bucket both directions by source (counting sort), then order each
        // row by target; a repeated pair keeps its last weight.
        let mut offsets = vec![0usize; nodes + 1];
        for &(i, j, _) in &kept {
            offsets[i as usize + 1] += 1;
            offsets[j as usize + 1] += 1;
        }
        for k in 0..nodes {
            offsets[k + 1] += offsets[k];
        }
        let mut fill = offsets.clone();
        let mut slots = vec![(0u32, 0usize, 0.0f64); offsets[nodes]];
        for (order, &(i, j, w)) in kept.iter().enumerate() {
            for (from, to) in [(i, j), (j, i)] {
                slots[fill[from as usize]] = (to, order, w);
                fill[from as usize] += 1;
            }
        }
        let mut targets = Vec::with_capacity(slots.len());
        let mut weights = Vec::with_capacity(slots.len());
        let mut compact = vec![0usize; nodes + 1];
        for k in 0..nodes {
            let row = &mut slots[offsets[k]..offsets[k + 1]];
            row.sort_unstable_by_key(|&(to, order, _)| (to, order));
            for (n, &(to, _, w)) in row.iter().enumerate() {
                if row.get(n + 1).is_some_and(|next| next.0 == to) {
                    continue;
                }
                targets.push(to);
                weights.push(w);
            }
            compact[k + 1] = targets.len();
        }
        Ok(AffinityGraph {
            params,
            offsets: compact,
            targets,
            weights,
        })
    }

    pub fn empty(nodes: usize, params: AffinityParams) -> Self {
        AffinityGraph {
            params,
            offsets: vec![0; nodes + 1],
            targets: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    /// `(neighbor, weight)` pairs of node `i`, sorted by neighbor.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.targets[r.clone()].iter().zip(&self.weights[r]).map(|(&j, &w)| (j as usize, w))
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let r = self.offsets[i]..self.offsets[i + 1];
        let k = self.targets[r.clone()].binary_search(&(j as u32)).ok()?;
        Some(self.weights[r.start + k])
    }

    /// Undirected edges `(i, j, w)` with `i < j`, in order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nodes()).flat_map(move |i| self.neighbors(i).filter(move |(j, _)| *j > i).map(move |(j, w)| (i, j, w)))
    }
}

/// Counters from graph construction. Dropout is decided per pair before the
/// full lifetime distance test (it does not depend on distance), so
/// `candidate_pairs` counts pairs within ε_a at their first shared frame, a
/// superset of the ε_a-neighbors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffinityStats {
    /// Unordered pairs within ε_a at their first shared frame.
    pub candidate_pairs: usize,
    /// Candidates removed by dropout.
    pub dropped_pairs: usize,
    /// Surviving candidates that are ε_a-neighbors and were weighted.
    pub evaluated_pairs: usize,
    pub edges: usize,
    pub transforms: usize,
    pub underdetermined: usize,
}

/// Builds the affinity graph: local transforms for every trajectory, then
/// symmetric weights for every ε_a-neighbor pair that survives dropout.
pub fn build_affinity(trajectories: &[Trajectory], params: &AffinityParams) -> Result<(AffinityGraph, AffinityStats)> {
    params.validate()?;
    let transforms = estimate_transforms(trajectories, params);
    let mut stats = AffinityStats::default();
    for s in &transforms {
        for step in &s.steps {
            match step {
                Some(_) => stats.transforms += 1,
                None => stats.underdetermined += 1,
            }
        }
    }
    let index = NeighborIndex::new(trajectories, params.eps_a);
    let mut edges = Vec::new();
    for i in 0..trajectories.len() {
        let keep = |j: usize| {
            if j <= i {
                return false;
            }
            stats.candidate_pairs += 1;
            let drop = dropped(params.seed, params.dropout, trajectories[i].id, trajectories[j].id);
            stats.dropped_pairs += usize::from(drop);
            !drop
        };
        for (j, _) in index.query_where(i, params.overlap_min, keep) {
            stats.evaluated_pairs += 1;
            let w = pair_affinity(trajectories, &transforms, i, j, params.tau);
            if w > 0.0 {
                edges.push((i, j, w));
            }
        }
    }
    let graph = AffinityGraph::from_edges(trajectories.len(), &edges, *params)?;
    stats.edges = graph.edge_count();
    Ok((graph, stats))
}

/// Random rotation (uniform axis, angle up to `max_angle`).
pub fn random_rotation(rng: &mut impl Rng, max_angle: f64) -> Matrix3<f64> {
    let axis = loop {
        let v = Vector3::from([(); 3].map(|_| rng.random_range(-1.0..=1.0)));
        let n: f64 = v.norm();
        if n > 1e-3 && n <= 1.0 {
            break v / n;
        }
    };
    let angle = rng.random_range(-max_angle..=max_angle);
    *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_unchecked(axis), angle).matrix()
}
