//! Builds the rigid-motion affinity graph for two bodies that touch but move
//! differently: trajectories on the same body predict each other's motion
//! (weight near 1), trajectories on different bodies do not (weight near 0),
//! even where the bodies are within a few centimeters of each other.
//!
//! Run with `cargo run --example rigid_affinity`.

use semtraj::affinity::{build_affinity, estimate_transforms, AffinityParams};
use semtraj::reconstruct::Trajectory;
use semtraj::scene::{BodySpec, Motion, NoiseSpec, RigLayout, Scene, SceneSpec, Shape};

fn spec() -> SceneSpec {
    SceneSpec {
        classes: 2,
        frames: 12,
        bodies: vec![
            BodySpec {
                label: 1,
                shape: Shape::Box {
                    half_extents: [0.15, 0.1, 0.3],
                    count: 700,
                },
                motion: Motion::Oscillating {
                    position: [0.0, 0.0, 1.25],
                    rotation: [0.0; 3],
                    amplitude: [0.06, 0.0, 0.0],
                    angular_amplitude: [0.0, 0.0, 0.1],
                    period: 8.0,
                    phase: 0.0,
                },
            },
            BodySpec {
                label: 2,
                shape: Shape::Box {
                    half_extents: [0.1, 0.05, 0.1],
                    count: 300,
                },
                motion: Motion::Oscillating {
                    position: [0.0, -0.16, 1.3],
                    rotation: [0.0; 3],
                    amplitude: [0.0, 0.0, 0.05],
                    angular_amplitude: [0.0; 3],
                    period: 6.0,
                    phase: 1.0,
                },
            },
        ],
        rig: RigLayout::default(),
        noise: NoiseSpec::default(),
        seed: 4,
    }
}

fn main() -> anyhow::Result<()> {
    let scene = Scene::new(spec())?;
    // Exact trajectories straight from the scene, one per point.
    let trajectories: Vec<Trajectory> = (0..scene.point_count())
        .map(|p| {
            let mut t = Trajectory::new(p as u32, p as u32, 0);
            for f in 0..scene.frames() {
                t.push(scene.world_point(p, f), Vec::new(), 0.0);
            }
            t
        })
        .collect();

    let params = AffinityParams::default();
    let transforms = estimate_transforms(&trajectories, &params);
    let estimated = transforms.iter().flat_map(|s| &s.steps).filter(|s| s.is_some()).count();
    println!("{estimated} local transforms estimated");

    let (graph, stats) = build_affinity(&trajectories, &params)?;
    println!("{stats:?}");
    let (mut same, mut cross) = (Vec::new(), Vec::new());
    for (i, j, w) in graph.edges() {
        if scene.body_of(i) == scene.body_of(j) {
            same.push(w);
        } else {
            cross.push(w);
        }
    }
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    println!("same-body edges: {} (min weight {:.4})", same.len(), min(&same));
    println!("cross-body edges: {} (max weight {:.2e})", cross.len(), max(&cross));
    Ok(())
}
