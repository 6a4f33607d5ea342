//! Pinhole cameras, rigs and multi-view triangulation.
//!
//! A camera maps a world point `X` to pixels through `P = K R [I | -C]`.
//! World units are meters, image units are pixels, and the camera frame has
//! `x` right, `y` down and `z` along the optical axis.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix2x3, Matrix3, Matrix3x4, Matrix4, SymmetricEigen, Vector2, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROTATION_TOL: f64 = 1e-9;

/// Returned by [`Camera::project`] when the point is at or behind the image
/// plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Behind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    id: usize,
    intrinsics: Intrinsics,
    rotation: Matrix3<f64>,
    center: Vector3<f64>,
    width: u32,
    height: u32,
}

impl Camera {
    pub fn new(
        id: usize,
        intrinsics: Intrinsics,
        rotation: Matrix3<f64>,
        center: Vector3<f64>,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let field = format!("cameras[{id}]");
        check_rotation(&rotation).map_err(|m| Error::invalid(format!("{field}.rotation"), m))?;
        if !(intrinsics.fx > 0.0 && intrinsics.fy > 0.0) {
            return Err(Error::invalid(
                format!("{field}.fx"),
                "focal lengths must be strictly positive",
            ));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("{field}.width"), "image size must be non-zero"));
        }
        let inside = (0.0..f64::from(width)).contains(&intrinsics.cx)
            && (0.0..f64::from(height)).contains(&intrinsics.cy);
        if !inside {
            return Err(Error::invalid(
                format!("{field}.cx"),
                "principal point must lie inside the image",
            ));
        }
        if !center.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!("{field}.center"), "center must be finite"));
        }
        Ok(Camera {
            id,
            intrinsics,
            rotation,
            center,
            width,
            height,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn center(&self) -> &Vector3<f64> {
        &self.center
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn calibration(&self) -> Matrix3<f64> {
        let k = &self.intrinsics;
        Matrix3::new(k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0)
    }

    /// `P = K R [I | -C]`.
    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        let mut extrinsic = Matrix3x4::zeros();
        extrinsic.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        extrinsic
            .fixed_view_mut::<3, 1>(0, 3)
            .copy_from(&(-self.rotation * self.center));
        self.calibration() * extrinsic
    }

    /// Point in the camera frame.
    pub fn to_camera(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * (point - self.center)
    }

    pub fn project(&self, point: &Vector3<f64>) -> Result<Vector2<f64>, Behind> {
        let p = self.to_camera(point);
        if p.z <= 0.0 {
            return Err(Behind);
        }
        let k = &self.intrinsics;
        Ok(Vector2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
    }

    /// Depth of the point along the optical axis (may be negative).
    pub fn depth(&self, point: &Vector3<f64>) -> f64 {
        self.rotation.row(2).dot(&(point - self.center).transpose())
    }

    pub fn in_bounds(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x < f64::from(self.width)
            && pixel.y < f64::from(self.height)
    }

    /// Unit viewing ray through `pixel`, in world coordinates.
    pub fn ray(&self, pixel: &Vector2<f64>) -> Vector3<f64> {
        let n = self.normalized(pixel);
        (self.rotation.transpose() * Vector3::new(n.x, n.y, 1.0)).normalize()
    }

    /// Pixel mapped through `K^-1`.
    fn normalized(&self, pixel: &Vector2<f64>) -> Vector2<f64> {
        let k = &self.intrinsics;
        Vector2::new((pixel.x - k.cx) / k.fx, (pixel.y - k.cy) / k.fy)
    }

    /// Reprojection residual norm against a measured pixel, or `None` when the
    /// point is behind the camera.
    pub fn residual(&self, point: &Vector3<f64>, pixel: &Vector2<f64>) -> Option<f64> {
        self.project(point).ok().map(|p| (p - pixel).norm())
    }

    /// Jacobian of the projection with respect to the world point.
    fn projection_jacobian(&self, point: &Vector3<f64>) -> Option<(Vector2<f64>, Matrix2x3<f64>)> {
        let p = self.to_camera(point);
        if p.z <= 0.0 {
            return None;
        }
        let k = &self.intrinsics;
        let iz = 1.0 / p.z;
        let pixel = Vector2::new(k.fx * p.x * iz + k.cx, k.fy * p.y * iz + k.cy);
        let d = Matrix2x3::new(
            k.fx * iz,
            0.0,
            -k.fx * p.x * iz * iz,
            0.0,
            k.fy * iz,
            -k.fy * p.y * iz * iz,
        );
        Some((pixel, d * self.rotation))
    }
}

fn check_rotation(r: &Matrix3<f64>) -> std::result::Result<(), String> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err("rotation must be finite".into());
    }
    let ortho = (r * r.transpose() - Matrix3::identity()).abs().max();
    if ortho > ROTATION_TOL {
        return Err(format!("rotation is not orthonormal (|R R^T - I| = {ortho:e})"));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > ROTATION_TOL {
        return Err(format!("rotation determinant is {det}, expected +1"));
    }
    Ok(())
}

/// Validates a 3x3 rotation matrix to `1e-9`.
pub fn is_rotation(r: &Matrix3<f64>) -> bool {
    check_rotation(r).is_ok()
}

/// Rotation whose rows are the camera axes of a camera at `center` looking at
/// `target`, with `up` mapped to image "up" (negative `y`).
pub fn look_at(center: &Vector3<f64>, target: &Vector3<f64>, up: &Vector3<f64>) -> Matrix3<f64> {
    let forward = (target - center).normalize();
    let right = forward.cross(up).normalize();
    let down = forward.cross(&right);
    Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()])
}

/// Visibility probability `exp(-(r / sigma)^2)` of `point` in `camera`, where
/// `r` is the reprojection residual against the measured `pixel`.
///
/// Zero when the point is behind the camera or projects outside the image.
pub fn visibility(camera: &Camera, point: &Vector3<f64>, pixel: &Vector2<f64>, sigma: f64) -> f64 {
    debug_assert!(sigma > 0.0);
    match camera.project(point) {
        Ok(p) if camera.in_bounds(&p) => {
            let r = (p - pixel).norm() / sigma;
            (-r * r).exp()
        }
        _ => 0.0,
    }
}

#[derive(Debug, Clone)]
pub struct Rig {
    cameras: Vec<Camera>,
    frame_rate: f64,
}

impl Rig {
    pub fn new(cameras: Vec<Camera>, frame_rate: f64) -> Result<Self> {
        if cameras.len() < 2 {
            return Err(Error::invalid("cameras", "a rig needs at least 2 cameras"));
        }
        if u16::try_from(cameras.len()).is_err() {
            return Err(Error::invalid("cameras", "at most 65535 cameras are supported"));
        }
        for (i, c) in cameras.iter().enumerate() {
            if c.id != i {
                return Err(Error::invalid(
                    format!("cameras[{i}].id"),
                    format!("camera ids must be contiguous from 0 (found {})", c.id),
                ));
            }
        }
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(Error::invalid("frame_rate", "frame rate must be positive"));
        }
        Ok(Rig {
            cameras,
            frame_rate,
        })
    }

    pub fn cameras(&self) -> &[Camera] {
        &self.cameras
    }

    pub fn camera(&self, id: usize) -> &Camera {
        &self.cameras[id]
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: RigFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        file.into_rig()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&RigFile::from_rig(self)).expect("rig serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

pub const RIG_FORMAT_VERSION: u32 = 1;

/// On-disk rig document.
///
/// ```json
/// { "format_version": 1, "frame_rate": 30.0,
///   "cameras": [ { "id": 0, "fx": 800.0, "fy": 800.0, "cx": 640.0, "cy": 512.0,
///                  "rotation": [r00, r01, r02, r10, ..., r22],
///                  "center": [x, y, z], "width": 1280, "height": 1024 } ] }
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigFile {
    pub format_version: u32,
    pub frame_rate: f64,
    pub cameras: Vec<CameraRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub id: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major.
    pub rotation: [f64; 9],
    pub center: [f64; 3],
    pub width: u32,
    pub height: u32,
}

impl RigFile {
    pub fn from_rig(rig: &Rig) -> Self {
        let cameras = rig
            .cameras
            .iter()
            .map(|c| {
                let r = &c.rotation;
                CameraRecord {
                    id: c.id,
                    fx: c.intrinsics.fx,
                    fy: c.intrinsics.fy,
                    cx: c.intrinsics.cx,
                    cy: c.intrinsics.cy,
                    rotation: [
                        r[(0, 0)],
                        r[(0, 1)],
                        r[(0, 2)],
                        r[(1, 0)],
                        r[(1, 1)],
                        r[(1, 2)],
                        r[(2, 0)],
                        r[(2, 1)],
                        r[(2, 2)],
                    ],
                    center: [c.center.x, c.center.y, c.center.z],
                    width: c.width,
                    height: c.height,
                }
            })
            .collect();
        RigFile {
            format_version: RIG_FORMAT_VERSION,
            frame_rate: rig.frame_rate,
            cameras,
        }
    }

    pub fn into_rig(self) -> Result<Rig> {
        if self.format_version != RIG_FORMAT_VERSION {
            return Err(Error::invalid(
                "format_version",
                format!("unsupported rig format {}", self.format_version),
            ));
        }
        let cameras = self
            .cameras
            .into_iter()
            .map(|c| {
                Camera::new(
                    c.id,
                    Intrinsics {
                        fx: c.fx,
                        fy: c.fy,
                        cx: c.cx,
                        cy: c.cy,
                    },
                    Matrix3::from_row_slice(&c.rotation),
                    Vector3::from(c.center),
                    c.width,
                    c.height,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Rig::new(cameras, self.frame_rate)
    }
}

/// One measured pixel of a 3D point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub camera: usize,
    pub pixel: Vector2<f64>,
    pub frame: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacParams {
    /// Inlier reprojection threshold in pixels.
    pub threshold_px: f64,
    /// Minimum triangulation angle in degrees.
    pub min_angle_deg: f64,
    pub confidence: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            threshold_px: 2.0,
            min_angle_deg: 1.0,
            confidence: 0.999,
            max_iterations: 500,
            seed: 0,
        }
    }
}

impl RansacParams {
    /// Same parameters on an independent random stream.
    pub fn with_stream(&self, stream: u64) -> Self {
        RansacParams {
            seed: crate::seed::mix(&[self.seed, stream]),
            ..*self
        }
    }
}

/// Returned when no well-conditioned point can be triangulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degenerate {
    /// Fewer than two observations from distinct cameras, or fewer than two
    /// inliers.
    TooFewViews,
    /// All observing rays are within the minimum triangulation angle.
    NarrowBaseline,
}

#[derive(Debug, Clone)]
pub struct Triangulation {
    pub point: Vector3<f64>,
    /// Indices into the input observations.
    pub inliers: Vec<usize>,
    /// Residual of every input observation at `point` (`inf` when behind).
    pub residuals: Vec<f64>,
}

impl Triangulation {
    pub fn mean_inlier_residual(&self) -> f64 {
        let sum: f64 = self.inliers.iter().map(|&i| self.residuals[i]).sum();
        sum / self.inliers.len() as f64
    }
}

/// Linear triangulation in normalized image coordinates.
///
/// Each view contributes `x P3 - P1` and `y P3 - P2` (unit-normalized rows of
/// `R [I | -C]`); the point is the eigenvector of `A^T A` with the smallest
/// eigenvalue.
pub fn triangulate_linear<'a>(
    rig: &Rig,
    observations: impl IntoIterator<Item = &'a Observation>,
) -> Option<Vector3<f64>> {
    let mut ata = Matrix4::<f64>::zeros();
    let mut views = 0;
    for obs in observations {
        let cam = rig.camera(obs.camera);
        let n = cam.normalized(&obs.pixel);
        let r = &cam.rotation;
        let tr = -(r * cam.center);
        let row3 = Vector4::new(r[(2, 0)], r[(2, 1)], r[(2, 2)], tr.z);
        let row1 = Vector4::new(r[(0, 0)], r[(0, 1)], r[(0, 2)], tr.x);
        let row2 = Vector4::new(r[(1, 0)], r[(1, 1)], r[(1, 2)], tr.y);
        for a in [row3 * n.x - row1, row3 * n.y - row2] {
            let norm = a.norm();
            if norm > 0.0 {
                let a = a / norm;
                ata += a * a.transpose();
            }
        }
        views += 1;
    }
    if views < 2 {
        return None;
    }
    let eig = SymmetricEigen::new(ata);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let h = eig.eigenvectors.column(imin);
    if h[3].abs() < 1e-12 * h.norm() {
        return None;
    }
    let p = Vector3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]);
    p.iter().all(|v| v.is_finite()).then_some(p)
}

const REFINE_MAX_ITERATIONS: usize = 20;
const REFINE_MIN_STEP: f64 = 1e-10;

/// Gauss-Newton refinement of reprojection error over `views`.
pub fn refine_point(rig: &Rig, observations: &[Observation], views: &[usize], start: Vector3<f64>) -> Vector3<f64> {
    let cost = |x: &Vector3<f64>| -> f64 {
        views
            .iter()
            .map(|&i| {
                let o = &observations[i];
                match rig.camera(o.camera).project(x) {
                    Ok(p) => (p - o.pixel).norm_squared(),
                    Err(Behind) => f64::INFINITY,
                }
            })
            .sum()
    };
    let mut x = start;
    let mut current = cost(&x);
    for _ in 0..REFINE_MAX_ITERATIONS {
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for &i in views {
            let o = &observations[i];
            let Some((pixel, j)) = rig.camera(o.camera).projection_jacobian(&x) else {
                return x;
            };
            let r = pixel - o.pixel;
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
        let Some(step) = jtj.cholesky().map(|c| c.solve(&(-jtr))) else {
            break;
        };
        let candidate = x + step;
        let next = cost(&candidate);
        if !(next <= current) {
            break;
        }
        x = candidate;
        current = next;
        if step.norm() < REFINE_MIN_STEP {
            break;
        }
    }
    x
}

fn residuals_at(rig: &Rig, observations: &[Observation], point: &Vector3<f64>) -> Vec<f64> {
    observations
        .iter()
        .map(|o| rig.camera(o.camera).residual(point, &o.pixel).unwrap_or(f64::INFINITY))
        .collect()
}

fn inliers_of(residuals: &[f64], threshold: f64) -> Vec<usize> {
    residuals
        .iter()
        .enumerate()
        .filter(|(_, r)| **r < threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Largest angle (radians) between the first inlier ray and any other.
fn spread_angle(rig: &Rig, observations: &[Observation], views: &[usize]) -> f64 {
    let Some((&first, rest)) = views.split_first() else {
        return 0.0;
    };
    let o = &observations[first];
    let reference = rig.camera(o.camera).ray(&o.pixel);
    rest.iter()
        .map(|&i| {
            let o = &observations[i];
            let d = rig.camera(o.camera).ray(&o.pixel);
            reference.dot(&d).clamp(-1.0, 1.0).acos()
        })
        .fold(0.0, f64::max)
}

fn total_inlier_residual(residuals: &[f64], inliers: &[usize]) -> f64 {
    inliers.iter().map(|&i| residuals[i]).sum()
}

/// Robust triangulation of one point from two or more views.
///
/// Two-view linear hypotheses are scored by their reprojection inliers
/// (`residual < threshold_px`); the best consensus is re-triangulated
/// linearly on all inliers and refined by Gauss-Newton. Refinement is kept
/// only if it does not lose inliers.
pub fn triangulate(rig: &Rig, observations: &[Observation], params: &RansacParams) -> Result<Triangulation, Degenerate> {
    let n = observations.len();
    if n < 2 {
        return Err(Degenerate::TooFewViews);
    }
    let first_cam = observations[0].camera;
    if observations.iter().all(|o| o.camera == first_cam) {
        return Err(Degenerate::TooFewViews);
    }
    let min_angle = params.min_angle_deg.to_radians();
    let threshold = params.threshold_px;

    // All views agree: this is already the maximal consensus.
    let mut best: Option<(Vector3<f64>, Vec<usize>, f64)> = None;
    if let Some(x) = triangulate_linear(rig, observations) {
        let res = residuals_at(rig, observations, &x);
        let inliers = inliers_of(&res, threshold);
        if inliers.len() == n {
            let total = total_inlier_residual(&res, &inliers);
            best = Some((x, inliers, total));
        }
    }

    if best.is_none() {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut needed = params.max_iterations;
        let mut iteration = 0;
        while iteration < needed.min(params.max_iterations) {
            iteration += 1;
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            let (oa, ob) = (&observations[a], &observations[b]);
            if oa.camera == ob.camera {
                continue;
            }
            let angle = rig
                .camera(oa.camera)
                .ray(&oa.pixel)
                .dot(&rig.camera(ob.camera).ray(&ob.pixel))
                .clamp(-1.0, 1.0)
                .acos();
            if angle < min_angle {
                continue;
            }
            let Some(x) = triangulate_linear(rig, [oa, ob]) else {
                continue;
            };
            let res = residuals_at(rig, observations, &x);
            let inliers = inliers_of(&res, threshold);
            if inliers.len() < 2 {
                continue;
            }
            let total = total_inlier_residual(&res, &inliers);
            let better = match &best {
                None => true,
                Some((_, bi, bt)) => inliers.len() > bi.len() || (inliers.len() == bi.len() && total < *bt),
            };
            if better {
                let w = inliers.len() as f64 / n as f64;
                needed = adaptive_iterations(params.confidence, w * w, params.max_iterations);
                best = Some((x, inliers, total));
            }
        }
    }

    let Some((hypothesis, inliers, _)) = best else {
        return Err(Degenerate::TooFewViews);
    };
    if spread_angle(rig, observations, &inliers) < min_angle {
        return Err(Degenerate::NarrowBaseline);
    }
    // Re-fit on the consensus; fall back to the hypothesis if that sheds views.
    let refit = triangulate_linear(rig, inliers.iter().map(|&i| &observations[i]))
        .map(|x| {
            let res = residuals_at(rig, observations, &x);
            let inl = inliers_of(&res, threshold);
            (x, inl, res)
        })
        .filter(|(_, inl, _)| inl.len() >= inliers.len());
    let (base_point, base_inliers, base_res) = refit.unwrap_or_else(|| {
        let res = residuals_at(rig, observations, &hypothesis);
        (hypothesis, inliers_of(&res, threshold), res)
    });
    if base_inliers.len() < 2 {
        return Err(Degenerate::TooFewViews);
    }

    let refined = refine_point(rig, observations, &base_inliers, base_point);
    let refined_res = residuals_at(rig, observations, &refined);
    let refined_inliers = inliers_of(&refined_res, threshold);
    let result = if refined_inliers.len() >= base_inliers.len() {
        Triangulation {
            point: refined,
            inliers: refined_inliers,
            residuals: refined_res,
        }
    } else {
        Triangulation {
            point: base_point,
            inliers: base_inliers,
            residuals: base_res,
        }
    };
    Ok(result)
}

/// Number of RANSAC draws needed to hit an all-inlier minimal sample with
/// probability `confidence`, given the per-sample success probability.
pub(crate) fn adaptive_iterations(confidence: f64, sample_success: f64, cap: usize) -> usize {
    if sample_success >= 1.0 {
        return 1;
    }
    if sample_success <= 0.0 {
        return cap;
    }
    let k = (1.0 - confidence).ln() / (1.0 - sample_success).ln();
    if k.is_finite() {
        (k.ceil() as usize).clamp(1, cap)
    } else {
        cap
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn axis_camera() -> Camera {
        Camera::new(
            0,
            Intrinsics {
                fx: 1000.0,
                fy: 1000.0,
                cx: 640.0,
                cy: 512.0,
            },
            Matrix3::identity(),
            Vector3::zeros(),
            1280,
            1024,
        )
        .unwrap()
    }

    /// Five cameras on a 2 m circle looking at the origin.
    fn ring_rig(count: usize) -> Rig {
        let cams = (0..count)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / count as f64;
                let c = Vector3::new(2.0 * a.cos(), 2.0 * a.sin(), 0.3 * (i % 2) as f64);
                Camera::new(
                    i,
                    Intrinsics {
                        fx: 900.0,
                        fy: 900.0,
                        cx: 640.0,
                        cy: 512.0,
                    },
                    look_at(&c, &Vector3::zeros(), &Vector3::z()),
                    c,
                    1280,
                    1024,
                )
                .unwrap()
            })
            .collect();
        Rig::new(cams, 30.0).unwrap()
    }

    fn observe(rig: &Rig, x: &Vector3<f64>) -> Vec<Observation> {
        rig.cameras()
            .iter()
            .map(|c| Observation {
                camera: c.id(),
                pixel: c.project(x).unwrap(),
                frame: 0,
            })
            .collect()
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let p = axis_camera().project(&Vector3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(p, Vector2::new(640.0, 512.0));
    }

    #[test]
    fn off_axis_projection_matches_hand_computation() {
        let p = axis_camera().project(&Vector3::new(0.2, 0.0, 2.0)).unwrap();
        // u = f X / Z + cx
        let u = 1000.0 * 0.2 / 2.0 + 640.0;
        assert_abs_diff_eq!(p.x, u, epsilon = 1e-12);
        assert_abs_diff_eq!(p.x, 740.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 512.0, epsilon = 1e-12);
    }

    #[test]
    fn negative_depth_is_behind() {
        assert_eq!(axis_camera().project(&Vector3::new(0.0, 0.0, -1.0)), Err(Behind));
        assert_eq!(axis_camera().project(&Vector3::new(0.3, 0.1, 0.0)), Err(Behind));
    }

    #[test]
    fn visibility_kernel_values() {
        let cam = axis_camera();
        let x = Vector3::new(0.0, 0.0, 2.0);
        let exact = Vector2::new(640.0, 512.0);
        assert_eq!(visibility(&cam, &x, &exact, 2.0), 1.0);
        let off = Vector2::new(642.0, 512.0);
        assert_abs_diff_eq!(visibility(&cam, &x, &off, 2.0), (-1.0f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(visibility(&cam, &x, &off, 2.0), 0.36788, epsilon = 1e-5);
        assert_eq!(visibility(&cam, &Vector3::new(0.0, 0.0, -2.0), &exact, 2.0), 0.0);
        // in front but outside the image
        assert_eq!(visibility(&cam, &Vector3::new(5.0, 0.0, 1.0), &exact, 2.0), 0.0);
    }

    #[test]
    fn rejects_invalid_cameras() {
        let k = Intrinsics {
            fx: 1000.0,
            fy: 1000.0,
            cx: 640.0,
            cy: 512.0,
        };
        let mut bad = Matrix3::identity();
        bad[(0, 0)] = -1.0;
        assert!(Camera::new(0, k, bad, Vector3::zeros(), 1280, 1024).is_err());
        let skew = Matrix3::new(1.0, 1e-6, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Camera::new(0, k, skew, Vector3::zeros(), 1280, 1024).is_err());
        let k_bad = Intrinsics { fx: 0.0, ..k };
        assert!(Camera::new(0, k_bad, Matrix3::identity(), Vector3::zeros(), 1280, 1024).is_err());
        let k_out = Intrinsics { cx: 2000.0, ..k };
        assert!(Camera::new(0, k_out, Matrix3::identity(), Vector3::zeros(), 1280, 1024).is_err());
    }

    #[test]
    fn rig_requires_two_contiguous_cameras() {
        assert!(Rig::new(vec![axis_camera()], 30.0).is_err());
        let mut second = axis_camera();
        second.id = 2;
        assert!(Rig::new(vec![axis_camera(), second], 30.0).is_err());
    }

    #[test]
    fn noiseless_round_trip() {
        let rig = ring_rig(5);
        let x = Vector3::new(0.12, -0.3, 0.25);
        let t = triangulate(&rig, &observe(&rig, &x), &RansacParams::default()).unwrap();
        assert!((t.point - x).norm() < 1e-6);
        assert_eq!(t.inliers, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn planted_outliers_are_rejected() {
        let rig = ring_rig(7);
        let x = Vector3::new(-0.05, 0.1, 0.2);
        let mut obs = observe(&rig, &x);
        obs[2].pixel.x += 50.0;
        obs[5].pixel.y -= 50.0;
        let t = triangulate(&rig, &obs, &RansacParams::default()).unwrap();
        assert_eq!(t.inliers, vec![0, 1, 3, 4, 6]);
        assert!((t.point - x).norm() < 1e-6);
    }

    #[test]
    fn parallel_rays_are_degenerate() {
        let k = Intrinsics {
            fx: 1000.0,
            fy: 1000.0,
            cx: 640.0,
            cy: 512.0,
        };
        let a = Camera::new(0, k, Matrix3::identity(), Vector3::zeros(), 1280, 1024).unwrap();
        let b = Camera::new(1, k, Matrix3::identity(), Vector3::new(0.5, 0.0, 0.0), 1280, 1024).unwrap();
        let rig = Rig::new(vec![a, b], 30.0).unwrap();
        let obs = [0, 1].map(|c| Observation {
            camera: c,
            pixel: Vector2::new(640.0, 512.0),
            frame: 0,
        });
        assert!(triangulate(&rig, &obs, &RansacParams::default()).is_err());
    }

    #[test]
    fn single_view_is_degenerate() {
        let rig = ring_rig(3);
        let obs = observe(&rig, &Vector3::zeros());
        assert_eq!(
            triangulate(&rig, &obs[..1], &RansacParams::default()).unwrap_err(),
            Degenerate::TooFewViews
        );
    }

    #[test]
    fn projection_matrix_agrees_with_project() {
        let rig = ring_rig(4);
        let x = Vector3::new(0.3, 0.2, -0.1);
        for c in rig.cameras() {
            let h = c.projection_matrix() * x.push(1.0);
            let p = c.project(&x).unwrap();
            assert_abs_diff_eq!(h.x / h.z, p.x, epsilon = 1e-9);
            assert_abs_diff_eq!(h.y / h.z, p.y, epsilon = 1e-9);
        }
    }

    #[test]
    fn rig_json_round_trip() {
        let rig = ring_rig(4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rig.json");
        rig.save(&path).unwrap();
        let back = Rig::load(&path).unwrap();
        assert_eq!(back.cameras(), rig.cameras());
        assert_eq!(back.frame_rate(), 30.0);
    }
}
