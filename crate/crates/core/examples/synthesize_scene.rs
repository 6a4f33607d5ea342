//! Builds a two-body scene, renders its multi-camera observation stream and
//! simulates the recognizer's confidence fields, then reports what the
//! cameras see and how noisy the recognizer is.
//!
//! Run with `cargo run --example synthesize_scene`.

use semtraj::scene::{
    build_rig, render_observations, simulate_confidence, BodySpec, Motion, NoiseSpec, RigLayout, Scene, SceneFields,
    SceneSpec, Shape,
};
use semtraj::semantic::argmax_label;

fn spec() -> SceneSpec {
    SceneSpec {
        classes: 4,
        frames: 10,
        bodies: vec![
            BodySpec {
                label: 1,
                shape: Shape::Ellipsoid {
                    radii: [0.2, 0.15, 0.5],
                    count: 600,
                },
                motion: Motion::Oscillating {
                    position: [0.0, 0.0, 1.25],
                    rotation: [0.0; 3],
                    amplitude: [0.08, 0.0, 0.0],
                    angular_amplitude: [0.0, 0.0, 0.1],
                    period: 10.0,
                    phase: 0.0,
                },
            },
            BodySpec {
                label: 3,
                shape: Shape::Box {
                    half_extents: [0.12, 0.08, 0.08],
                    count: 300,
                },
                motion: Motion::Constant {
                    position: [0.0, -0.3, 1.3],
                    rotation: [0.0; 3],
                    velocity: [0.0, 0.0, 0.01],
                    angular_velocity: [0.0; 3],
                },
            },
        ],
        rig: RigLayout::default(),
        noise: NoiseSpec::default(),
        seed: 11,
    }
}

fn main() -> anyhow::Result<()> {
    let scene = Scene::new(spec())?;
    let rig = build_rig(&scene.spec().rig)?;
    let rendering = render_observations(&scene, &rig);
    let observations: usize = rendering.frames.iter().map(|f| f.len()).sum();
    println!(
        "{} points on {} bodies, {} frames, {} observations",
        scene.point_count(),
        scene.bodies().len(),
        scene.frames(),
        observations
    );

    let views: Vec<usize> = (0..scene.point_count()).map(|p| rendering.truth.view_count(0, p)).collect();
    let mean = views.iter().sum::<usize>() as f64 / views.len() as f64;
    println!(
        "frame 0: each point is seen by {} to {} cameras (mean {mean:.1})",
        views.iter().min().unwrap_or(&0),
        views.iter().max().unwrap_or(&0)
    );

    let set = simulate_confidence(&scene, &rig);
    println!("{} spurious detections over all cameras and frames", set.false_detections.len());

    // How often does a camera's argmax agree with the point's true label?
    let fields = SceneFields::new(&set, &scene, &rig);
    let frame = fields.frame(0);
    let (mut agree, mut total) = (0usize, 0usize);
    for p in 0..scene.point_count() {
        let x = scene.world_point(p, 0);
        for c in rendering.truth.visible_cameras(0, p) {
            let pixel = rig.camera(c).project(&x).expect("visible points are in front");
            agree += usize::from(argmax_label(&frame.query(c, &pixel)) == scene.label_of(p));
            total += 1;
        }
    }
    println!(
        "single-view recognition agrees with the truth in {:.1}% of {total} visible views",
        100.0 * agree as f64 / total as f64
    );
    Ok(())
}
