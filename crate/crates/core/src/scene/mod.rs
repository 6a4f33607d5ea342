//! Synthetic ground truth: rigid bodies moving inside a cylindrical rig.
//!
//! A [`SceneSpec`] is the JSON-facing description; [`Scene::new`] validates
//! it and materializes body points and per-frame poses. Rendering and the
//! recognizer simulator live in [`render`] and [`confidence`].

pub mod confidence;
pub mod io;
pub mod render;

use std::f64::consts::TAU;

use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Camera, Intrinsics, Rig};
use crate::label::Label;
use crate::seed::stream_rng;

pub use confidence::{simulate_confidence, ConfidenceField, FalseDetection, FieldSet, FrameFields, SceneFields};
pub use render::{render_frame, render_observations, FrameObservations, GroundTruth, Rendering, TrackObservation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    /// Number of semantic classes `N`.
    pub classes: usize,
    /// Number of frames `T`.
    pub frames: u32,
    pub bodies: Vec<BodySpec>,
    #[serde(default)]
    pub rig: RigLayout,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodySpec {
    pub label: u16,
    pub shape: Shape,
    pub motion: Motion,
}

/// Body point cloud, in the body frame (meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Points(Vec<[f64; 3]>),
    /// `count` points uniform in an axis-aligned box.
    Box { half_extents: [f64; 3], count: usize },
    /// `count` points uniform in an axis-aligned ellipsoid.
    Ellipsoid { radii: [f64; 3], count: usize },
    /// Regular lattice with `counts` points per axis spanning the box.
    Grid { half_extents: [f64; 3], counts: [usize; 3] },
}

/// Body-to-world pose over time. Rotations are rotation vectors (axis times
/// angle, radians); rates are per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    Constant {
        position: [f64; 3],
        #[serde(default)]
        rotation: [f64; 3],
        #[serde(default)]
        velocity: [f64; 3],
        #[serde(default)]
        angular_velocity: [f64; 3],
    },
    /// Sinusoidal sway about a rest pose: `offset = amplitude * sin(2 pi t / period + phase)`.
    Oscillating {
        position: [f64; 3],
        #[serde(default)]
        rotation: [f64; 3],
        #[serde(default)]
        amplitude: [f64; 3],
        #[serde(default)]
        angular_amplitude: [f64; 3],
        period: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Circles the vertical axis through `center` at `radius`, turning with
    /// the orbit.
    Orbit {
        center: [f64; 3],
        radius: f64,
        angular_speed: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        rotation: [f64; 3],
    },
    /// One explicit pose per frame.
    Poses(Vec<PoseSpec>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    /// Row-major 3x3 rotation.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

/// Cylindrical rig layout. The cylinder axis is the world `z` axis and the
/// floor is `z = 0`; every camera looks at the axis midpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigLayout {
    pub radius: f64,
    pub cylinder_height: f64,
    pub row_heights: Vec<f64>,
    pub cameras_per_row: Vec<usize>,
    pub focal_px: f64,
    pub width: u32,
    pub height: u32,
    pub frame_rate: f64,
}

impl Default for RigLayout {
    fn default() -> Self {
        RigLayout {
            radius: 1.5,
            cylinder_height: 2.5,
            row_heights: vec![0.6, 1.9],
            cameras_per_row: vec![35, 34],
            focal_px: 800.0,
            width: 1280,
            height: 1024,
            frame_rate: 30.0,
        }
    }
}

impl RigLayout {
    pub fn axis_midpoint(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.cylinder_height / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Gaussian pixel noise per coordinate.
    pub obs_sigma_px: f64,
    /// Probability `rho` that a detection reports a wrong label.
    pub confusion_rate: f64,
    /// Mean number of spurious detections per camera and frame.
    pub false_detection_rate: f64,
    pub false_detection_radius_px: f64,
    /// Distance from a projected body point within which its label is
    /// reported (isotropic).
    pub bleed_radius_px: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            obs_sigma_px: 0.5,
            confusion_rate: 0.3,
            false_detection_rate: 2.0,
            false_detection_radius_px: 60.0,
            bleed_radius_px: 6.0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 1 || self.classes > usize::from(u16::MAX) {
            return Err(Error::invalid("classes", "must be in 1..=65535"));
        }
        if self.frames < 2 {
            return Err(Error::invalid("frames", "a scene needs at least 2 frames"));
        }
        if self.bodies.is_empty() {
            return Err(Error::invalid("bodies", "at least one body is required"));
        }
        for (i, body) in self.bodies.iter().enumerate() {
            if body.label < 1 || usize::from(body.label) > self.classes {
                return Err(Error::invalid(
                    format!("bodies[{i}].label"),
                    format!("must be in 1..={}", self.classes),
                ));
            }
            match &body.motion {
                Motion::Poses(p) if p.len() != self.frames as usize => {
                    return Err(Error::invalid(
                        format!("bodies[{i}].motion.poses"),
                        format!("expected {} poses, found {}", self.frames, p.len()),
                    ));
                }
                Motion::Poses(p) => {
                    for (t, pose) in p.iter().enumerate() {
                        if !geometry::is_rotation(&Matrix3::from_row_slice(&pose.rotation)) {
                            return Err(Error::invalid(
                                format!("bodies[{i}].motion.poses[{t}].rotation"),
                                "not a rotation matrix",
                            ));
                        }
                    }
                }
                Motion::Oscillating { period, .. } if !(*period > 0.0) => {
                    return Err(Error::invalid(format!("bodies[{i}].motion.period"), "must be positive"));
                }
                Motion::Orbit { radius, .. } if !(*radius >= 0.0) => {
                    return Err(Error::invalid(format!("bodies[{i}].motion.radius"), "must be non-negative"));
                }
                _ => {}
            }
        }
        let layout = &self.rig;
        let positive = [
            ("rig.radius", layout.radius),
            ("rig.cylinder_height", layout.cylinder_height),
            ("rig.focal_px", layout.focal_px),
            ("rig.frame_rate", layout.frame_rate),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(field, "must be positive"));
            }
        }
        if layout.row_heights.is_empty() || layout.row_heights.len() != layout.cameras_per_row.len() {
            return Err(Error::invalid(
                "rig.row_heights",
                "need one height per camera row (and at least one row)",
            ));
        }
        if let Some(h) = layout.row_heights.iter().find(|h| !(**h > 0.0)) {
            return Err(Error::invalid("rig.row_heights", format!("heights must be positive (found {h})")));
        }
        if layout.cameras_per_row.iter().sum::<usize>() < 2 {
            return Err(Error::invalid("rig.cameras_per_row", "a rig needs at least 2 cameras"));
        }
        if layout.width == 0 || layout.height == 0 {
            return Err(Error::invalid("rig.width", "image size must be non-zero"));
        }
        let noise = &self.noise;
        if !(0.0..1.0).contains(&noise.confusion_rate) && noise.confusion_rate != 1.0 {
            return Err(Error::invalid("noise.confusion_rate", "must be in [0, 1]"));
        }
        let non_negative = [
            ("noise.obs_sigma_px", noise.obs_sigma_px),
            ("noise.false_detection_rate", noise.false_detection_rate),
            ("noise.false_detection_radius_px", noise.false_detection_radius_px),
            ("noise.bleed_radius_px", noise.bleed_radius_px),
        ];
        for (field, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(field, "must be non-negative"));
            }
        }
        Ok(())
    }
}

fn rotation_from_vector(v: &[f64; 3]) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(Vector3::from(*v))
}

impl Motion {
    fn pose(&self, t: u32) -> Isometry3<f64> {
        let tf = f64::from(t);
        match self {
            Motion::Constant {
                position,
                rotation,
                velocity,
                angular_velocity,
            } => {
                let r = rotation_from_vector(&angular_velocity.map(|w| w * tf)) * rotation_from_vector(rotation);
                let p = Vector3::from(*position) + Vector3::from(*velocity) * tf;
                Isometry3::from_parts(Translation3::from(p), r)
            }
            Motion::Oscillating {
                position,
                rotation,
                amplitude,
                angular_amplitude,
                period,
                phase,
            } => {
                let s = (TAU * tf / period + phase).sin();
                let r = rotation_from_vector(&angular_amplitude.map(|w| w * s)) * rotation_from_vector(rotation);
                let p = Vector3::from(*position) + Vector3::from(*amplitude) * s;
                Isometry3::from_parts(Translation3::from(p), r)
            }
            Motion::Orbit {
                center,
                radius,
                angular_speed,
                phase,
                rotation,
            } => {
                let a = angular_speed * tf + phase;
                let p = Vector3::from(*center) + Vector3::new(radius * a.cos(), radius * a.sin(), 0.0);
                let r = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), a) * rotation_from_vector(rotation);
                Isometry3::from_parts(Translation3::from(p), r)
            }
            Motion::Poses(poses) => {
                let pose = &poses[t as usize];
                let r = Rotation3::from_matrix_unchecked(Matrix3::from_row_slice(&pose.rotation));
                Isometry3::from_parts(
                    Translation3::from(Vector3::from(pose.translation)),
                    UnitQuaternion::from_rotation_matrix(&r),
                )
            }
        }
    }
}

impl Shape {
    fn sample(&self, rng: &mut impl Rng) -> Vec<Vector3<f64>> {
        match self {
            Shape::Points(points) => points.iter().map(|p| Vector3::from(*p)).collect(),
            Shape::Box { half_extents, count } => (0..*count)
                .map(|_| Vector3::from(half_extents.map(|h| rng.random_range(-1.0..=1.0) * h)))
                .collect(),
            Shape::Ellipsoid { radii, count } => {
                let mut points = Vec::with_capacity(*count);
                while points.len() < *count {
                    let u = Vector3::from([(); 3].map(|_| rng.random_range(-1.0..=1.0)));
                    if u.norm_squared() <= 1.0 {
                        points.push(u.component_mul(&Vector3::from(*radii)));
                    }
                }
                points
            }
            Shape::Grid { half_extents, counts } => {
                let axis = |k: usize| -> Vec<f64> {
                    let n = counts[k];
                    if n <= 1 {
                        vec![0.0]
                    } else {
                        (0..n)
                            .map(|i| -half_extents[k] + 2.0 * half_extents[k] * i as f64 / (n - 1) as f64)
                            .collect()
                    }
                };
                let (xs, ys, zs) = (axis(0), axis(1), axis(2));
                let mut points = Vec::with_capacity(xs.len() * ys.len() * zs.len());
                for &x in &xs {
                    for &y in &ys {
                        for &z in &zs {
                            points.push(Vector3::new(x, y, z));
                        }
                    }
                }
                points
            }
        }
    }
}

/// Whether the cloud spans three dimensions (has four non-coplanar points).
fn spans_volume(points: &[Vector3<f64>]) -> bool {
    if points.len() < 4 {
        return false;
    }
    let mean = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let cov = points
        .iter()
        .map(|p| (p - mean) * (p - mean).transpose())
        .sum::<Matrix3<f64>>();
    let eig = cov.symmetric_eigenvalues();
    let max = eig.max();
    max > 0.0 && eig.min() > 1e-12 * max
}

/// A labeled point cloud with one body-to-world pose per frame.
#[derive(Debug, Clone)]
pub struct RigidBody {
    pub label: Label,
    pub points: Vec<Vector3<f64>>,
    pub poses: Vec<Isometry3<f64>>,
}

/// A validated, materialized scene. Points are numbered globally, body by
/// body, and that number is the correspondence (track) id.
#[derive(Debug, Clone)]
pub struct Scene {
    spec: SceneSpec,
    bodies: Vec<RigidBody>,
    offsets: Vec<usize>,
    point_body: Vec<u32>,
}

impl Scene {
    pub fn new(spec: SceneSpec) -> Result<Self> {
        spec.validate()?;
        let mut bodies = Vec::with_capacity(spec.bodies.len());
        for (i, b) in spec.bodies.iter().enumerate() {
            let mut rng = stream_rng(spec.seed, "body", i as u64);
            let points = b.shape.sample(&mut rng);
            if !spans_volume(&points) {
                return Err(Error::invalid(
                    format!("bodies[{i}].shape"),
                    "needs at least 4 non-coplanar points",
                ));
            }
            let poses = (0..spec.frames).map(|t| b.motion.pose(t)).collect();
            bodies.push(RigidBody {
                label: Label::new(b.label),
                points,
                poses,
            });
        }
        let mut offsets = Vec::with_capacity(bodies.len() + 1);
        let mut point_body = Vec::new();
        offsets.push(0);
        for (i, b) in bodies.iter().enumerate() {
            point_body.extend(std::iter::repeat_n(i as u32, b.points.len()));
            offsets.push(point_body.len());
        }
        if u32::try_from(point_body.len()).is_err() {
            return Err(Error::invalid("bodies", "too many points"));
        }
        Ok(Scene {
            spec,
            bodies,
            offsets,
            point_body,
        })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn bodies(&self) -> &[RigidBody] {
        &self.bodies
    }

    pub fn frames(&self) -> u32 {
        self.spec.frames
    }

    pub fn classes(&self) -> usize {
        self.spec.classes
    }

    pub fn point_count(&self) -> usize {
        self.point_body.len()
    }

    pub fn body_of(&self, point: usize) -> usize {
        self.point_body[point] as usize
    }

    pub fn label_of(&self, point: usize) -> Label {
        self.bodies[self.body_of(point)].label
    }

    pub fn world_point(&self, point: usize, frame: u32) -> Vector3<f64> {
        let b = self.body_of(point);
        let body = &self.bodies[b];
        body.poses[frame as usize]
            .transform_point(&body.points[point - self.offsets[b]].into())
            .coords
    }

    /// World positions of every point at `frame`, indexed by point id.
    pub fn positions(&self, frame: u32) -> Vec<Vector3<f64>> {
        let mut out = Vec::with_capacity(self.point_count());
        for body in &self.bodies {
            let pose = &body.poses[frame as usize];
            out.extend(body.points.iter().map(|p| pose.transform_point(&(*p).into()).coords));
        }
        out
    }
}

/// Builds the cylindrical rig: cameras evenly spaced per row (rows offset by
/// half a step), all aimed at the cylinder axis midpoint.
pub fn build_rig(layout: &RigLayout) -> Result<Rig> {
    let target = layout.axis_midpoint();
    let mut cameras = Vec::new();
    for (row, (&height, &count)) in layout.row_heights.iter().zip(&layout.cameras_per_row).enumerate() {
        for k in 0..count {
            let step = TAU / count as f64;
            let angle = step * k as f64 + if row % 2 == 1 { step / 2.0 } else { 0.0 };
            let center = Vector3::new(layout.radius * angle.cos(), layout.radius * angle.sin(), height);
            let rotation = geometry::look_at(&center, &target, &Vector3::z());
            let intrinsics = Intrinsics {
                fx: layout.focal_px,
                fy: layout.focal_px,
                cx: f64::from(layout.width) / 2.0,
                cy: f64::from(layout.height) / 2.0,
            };
            cameras.push(Camera::new(
                cameras.len(),
                intrinsics,
                rotation,
                center,
                layout.width,
                layout.height,
            )?);
        }
    }
    Rig::new(cameras, layout.frame_rate)
}
