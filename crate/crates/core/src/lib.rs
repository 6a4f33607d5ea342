//! Dense semantic trajectory reconstruction for large multi-camera rigs.
//!
//! The crate covers the whole loop on synthetic data:
//!
//! - [`geometry`]: pinhole cameras, rigs, projection, visibility and RANSAC
//!   triangulation.
//! - [`scene`]: ground-truth rigid bodies, a cylindrical rig, occlusion-aware
//!   observations and simulated per-view recognizer confidences.
//! - [`reconstruct`]: triangulate, track and terminate point trajectories.
//! - [`semantic`]: view-pooled per-trajectory semantic maps.
//! - [`affinity`]: local rigid transforms and rigid-prediction affinity.
//! - [`inference`]: joint labeling by alpha-expansion over [`maxflow`] cuts.
//! - [`eval`]: temporal consistency, affinity effectiveness, predictive
//!   validity and ground-truth accuracy.
//! - [`pipeline`]: configuration, derived seeds and content-addressed runs.

pub mod affinity;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod inference;
pub mod label;
pub mod maxflow;
pub mod pipeline;
pub mod reconstruct;
pub mod scene;
pub mod seed;
pub mod semantic;

pub use error::{Error, Result};
pub use label::Label;
