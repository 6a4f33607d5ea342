//! Projects a point into the default 69-camera rig, corrupts the pixels, adds
//! two gross outliers and recovers the point with RANSAC triangulation.
//!
//! Run with `cargo run --example triangulate`.

use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use semtraj::geometry::{triangulate, visibility, Observation, RansacParams};
use semtraj::scene::{build_rig, RigLayout};

fn main() -> anyhow::Result<()> {
    let layout = RigLayout::default();
    let rig = build_rig(&layout)?;
    println!(
        "rig: {} cameras on a {:.1} m cylinder, {} x {} px, f = {} px",
        rig.len(),
        layout.radius,
        layout.width,
        layout.height,
        layout.focal_px
    );

    let truth = Vector3::new(0.12, -0.05, 1.3);
    let noise = Normal::new(0.0, 0.5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut observations = Vec::new();
    for camera in rig.cameras() {
        let Ok(pixel) = camera.project(&truth) else { continue };
        if !camera.in_bounds(&pixel) {
            continue;
        }
        let jitter = Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng));
        observations.push(Observation {
            camera: camera.id(),
            pixel: pixel + jitter,
            frame: 0,
        });
    }
    // Two mismatched detections far from the true projection.
    observations[3].pixel += Vector2::new(40.0, -25.0);
    observations[11].pixel += Vector2::new(-60.0, 10.0);

    let fit = triangulate(&rig, &observations, &RansacParams::default())
        .map_err(|e| anyhow::anyhow!("triangulation failed: {e:?}"))?;
    println!(
        "{} observations, {} inliers, mean inlier residual {:.3} px",
        observations.len(),
        fit.inliers.len(),
        fit.mean_inlier_residual()
    );
    println!("recovered {:?}", fit.point.as_slice());
    println!("error {:.3} mm", (fit.point - truth).norm() * 1e3);

    // Visibility weights exp(-(r / sigma)^2) from the reprojection residuals.
    let mut weights: Vec<(usize, f64)> = observations
        .iter()
        .map(|o| (o.camera, visibility(rig.camera(o.camera), &fit.point, &o.pixel, 2.0)))
        .collect();
    weights.sort_by(|a, b| a.1.total_cmp(&b.1));
    println!("least visible cameras (id, V): {:?}", &weights[..3]);
    Ok(())
}
