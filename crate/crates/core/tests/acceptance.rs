//! Acceptance checks for the whole system, one PASS/FAIL line per criterion.
//!
//! Run all of them with `cargo test --release --test acceptance`, or a subset
//! by number: `cargo test --release --test acceptance -- 3 5`. The process
//! exits non-zero when any selected criterion fails. The standard-scene
//! criteria (8, 9, 10) share one set of ten pipeline runs and take tens of
//! minutes on a single core.

use std::cell::OnceCell;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use semtraj::affinity::{
    build_affinity, estimate_transforms, local_transform, random_rotation, AffinityGraph,
    AffinityParams, RigidTransform,
};
use semtraj::eval::{
    affinity_effectiveness, temporal_consistency, truth_bodies, EffectivenessParams, MetricReport, TemporalParams,
};
use semtraj::geometry::{look_at, triangulate, Camera, Intrinsics, Observation, RansacParams, Rig};
use semtraj::inference::{alpha_expansion, energy, DataTerms, EnergyParams};
use semtraj::pipeline::{run_pipeline, summarize, ExperimentConfig, RunSummary};
use semtraj::reconstruct::{build_stream, Trajectory, TrackerParams};
use semtraj::scene::{
    build_rig, render_observations, simulate_confidence, BodySpec, Motion, NoiseSpec, RigLayout, Scene, SceneFields,
    SceneSpec, Shape,
};
use semtraj::semantic::{view_pool, weighted_medoid, PoolMethod, PoolParams, SemanticMap, View};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let standard = StandardRuns::default();
    let checks: [(&str, &dyn Fn() -> Outcome); 10] = [
        ("geometry round trip", &geometry_round_trip),
        ("tracking termination", &tracking_termination),
        ("view pooling selection", &view_pooling_selection),
        ("temporal consistency trend", &temporal_consistency_trend),
        ("planted transform recovery", &planted_transform_recovery),
        ("affinity separation", &affinity_separation),
        ("expansion optimality", &expansion_optimality),
        ("end-to-end correction", &|| end_to_end_correction(&standard)),
        ("predictive validity trend", &|| predictive_validity_trend(&standard)),
        ("determinism", &|| determinism(&standard)),
    ];
    let mut failed = Vec::new();
    for (k, (name, check)) in checks.iter().enumerate() {
        let number = k + 1;
        if !selected.is_empty() && !selected.contains(&number) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {number:>2} {verdict} {name}: {} [{:.1} s]",
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
        if !outcome.pass {
            failed.push(number);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// 1. Triangulation round trip on the default rig.

fn geometry_round_trip() -> Outcome {
    let start = Instant::now();
    let rig = build_rig(&RigLayout::default()).expect("default rig");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = Normal::new(0.0, 0.5).expect("sigma");
    let mut worst_exact: f64 = 0.0;
    let mut noisy_errors = Vec::with_capacity(1000);
    for _ in 0..1000 {
        let (r, a) = (0.5 * rng.random::<f64>().sqrt(), rng.random_range(0.0..std::f64::consts::TAU));
        let truth = Vector3::new(r * a.cos(), r * a.sin(), rng.random_range(0.75..1.75));
        let exact = project_all(&rig, &truth, |_| Vector2::zeros());
        let noisy = project_all(&rig, &truth, |_| Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng)));
        let params = RansacParams::default();
        let (Ok(a), Ok(b)) = (triangulate(&rig, &exact, &params), triangulate(&rig, &noisy, &params)) else {
            return Outcome::new(false, format!("triangulation failed at {truth:?}"));
        };
        worst_exact = worst_exact.max((a.point - truth).norm());
        noisy_errors.push((b.point - truth).norm());
    }
    let elapsed = start.elapsed();
    let median = median(&mut noisy_errors);
    Outcome::new(
        worst_exact <= 1e-6 && median < 2e-3 && elapsed < Duration::from_secs(10),
        format!(
            "max noiseless error {worst_exact:.2e} m (<= 1e-6), median error at 0.5 px {:.3} mm (< 2), {:.2} s (< 10)",
            median * 1e3,
            elapsed.as_secs_f64()
        ),
    )
}

fn project_all(rig: &Rig, point: &Vector3<f64>, mut jitter: impl FnMut(usize) -> Vector2<f64>) -> Vec<Observation> {
    rig.cameras()
        .iter()
        .filter_map(|c| {
            let pixel = c.project(point).ok().filter(|p| c.in_bounds(p))?;
            Some(Observation {
                camera: c.id(),
                pixel: pixel + jitter(c.id()),
                frame: 0,
            })
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

// ---------------------------------------------------------------------------
// 2. Trajectories terminate exactly when their point stops being trackable.

/// Four cameras on a narrow arc facing a plate, so that a small body passing
/// behind the plate is hidden from all of them at once.
fn arc_rig() -> Rig {
    let target = Vector3::new(0.0, 0.0, 1.25);
    let cameras = (0..4)
        .map(|k| {
            let angle = (-90.0 + 3.0 * (k as f64 - 1.5)).to_radians();
            let center = Vector3::new(1.5 * angle.cos(), 1.5 * angle.sin(), 1.25);
            let intrinsics = Intrinsics {
                fx: 800.0,
                fy: 800.0,
                cx: 640.0,
                cy: 512.0,
            };
            Camera::new(k, intrinsics, look_at(&center, &target, &Vector3::z()), center, 1280, 1024).expect("camera")
        })
        .collect();
    Rig::new(cameras, 30.0).expect("rig")
}

fn occlusion_scene(seed: u64) -> SceneSpec {
    let frames = 150;
    SceneSpec {
        classes: 2,
        frames,
        bodies: vec![
            // 200 points on a two-layer 1.8 x 1.8 cm plate, 2 mm apart.
            BodySpec {
                label: 1,
                shape: Shape::Grid {
                    half_extents: [0.009, 0.001, 0.009],
                    counts: [10, 2, 10],
                },
                motion: Motion::Constant {
                    position: [0.0, 0.0, 1.25],
                    rotation: [0.0; 3],
                    velocity: [0.0; 3],
                    angular_velocity: [0.0; 3],
                },
            },
            // 200 points on a 1 cm cube sliding behind it.
            BodySpec {
                label: 2,
                shape: Shape::Box {
                    half_extents: [0.005; 3],
                    count: 200,
                },
                motion: Motion::Constant {
                    position: [-0.05, 0.05, 1.25],
                    rotation: [0.0; 3],
                    velocity: [0.1 / f64::from(frames), 0.0, 0.0],
                    angular_velocity: [0.0; 3],
                },
            },
        ],
        rig: RigLayout::default(),
        noise: NoiseSpec::default(),
        seed,
    }
}

fn tracking_termination() -> Outcome {
    let rig = arc_rig();
    let scene = Scene::new(occlusion_scene(5)).expect("scene");
    let rendering = render_observations(&scene, &rig);
    let params = TrackerParams::default();
    let (trajectories, _) =
        build_stream(rendering.frames.iter().cloned().map(Ok), &rig, &params).expect("reconstruction");
    let mut bad_frames = 0;
    let mut frames = 0;
    let mut matched = 0;
    for traj in &trajectories {
        for t in traj.frames() {
            frames += 1;
            let k = (t - traj.emerge) as usize;
            if f64::from(traj.reprojection[k]) > params.max_reproj || traj.visible_count(t, params.eps_s) < 2 {
                bad_frames += 1;
            }
        }
        let (first, last) = (traj.emerge, traj.dissolve() - 1);
        let intervals = rendering.truth.visible_intervals(traj.source as usize, params.min_views);
        if intervals.iter().any(|&(s, e)| s.abs_diff(first) <= 1 && e.abs_diff(last) <= 1) {
            matched += 1;
        }
    }
    let occluded = trajectories.iter().filter(|t| t.len() < 150).count();
    let rate = matched as f64 / trajectories.len().max(1) as f64;
    Outcome::new(
        bad_frames == 0 && rate >= 0.95 && occluded > 0,
        format!(
            "{bad_frames} of {frames} trajectory frames break the 2 px / 2 camera rule; \
             {matched} of {} fragments ({:.1}%, >= 95%) match a visibility interval within 1 frame; \
             {occluded} fragments cut by occlusion",
            trajectories.len(),
            rate * 100.0
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. View pooling picks the weighted medoid, independent of scale.

fn view_pooling_selection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = PoolParams::default();
    let (mut mismatches, mut scale_changes, mut checked) = (0, 0, 0);
    for _ in 0..10_000 {
        let views_n = rng.random_range(3..=20);
        let classes = rng.random_range(2..=6);
        let cameras = pick_cameras(&mut rng, views_n);
        let values: Vec<Vec<f64>> = (0..views_n).map(|_| (0..classes).map(|_| rng.random()).collect()).collect();
        let mut vis: Vec<f64> = (0..views_n).map(|_| rng.random()).collect();
        vis[0] = rng.random_range(0.5..1.0); // at least one candidate
        let views: Vec<View> = (0..views_n)
            .map(|k| View {
                camera: cameras[k],
                confidence: &values[k],
                visibility: vis[k],
            })
            .collect();
        let chosen = view_pool(&views, &params).expect("a candidate exists");
        checked += 1;
        if chosen != brute_force_medoid(&views, params.eps_v) {
            mismatches += 1;
        }
        // Rescale every visibility; the candidate set stays the one defined
        // by the original visibilities.
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let scaled: Vec<View> = views
            .iter()
            .map(|v| View {
                visibility: v.visibility * scale,
                ..*v
            })
            .collect();
        let candidate: Vec<bool> = views.iter().map(|v| v.visibility > params.eps_v).collect();
        let rescaled = weighted_medoid(&scaled, |v| {
            let k = scaled.iter().position(|s| s.camera == v.camera).expect("own view");
            candidate[k]
        });
        if rescaled != Some(chosen) {
            scale_changes += 1;
        }
    }
    Outcome::new(
        mismatches == 0 && scale_changes == 0,
        format!(
            "{mismatches} of {checked} instances differ from the brute-force weighted-median argmin; \
             {scale_changes} change camera under positive rescaling"
        ),
    )
}

fn pick_cameras(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..69).collect();
    for k in 0..n {
        let j = rng.random_range(k..all.len());
        all.swap(k, j);
    }
    all.truncate(n);
    all
}

/// Candidate minimizing `sum_j V_j |L_c - L_j|^2`, ties to the lowest camera.
fn brute_force_medoid(views: &[View], eps_v: f64) -> usize {
    let mut best: Option<(f64, usize, usize)> = None;
    for (c, vc) in views.iter().enumerate() {
        if vc.visibility <= eps_v {
            continue;
        }
        let mut by_camera: Vec<&View> = views.iter().collect();
        by_camera.sort_by_key(|v| v.camera);
        let cost: f64 = by_camera
            .iter()
            .map(|vj| {
                let d: f64 = vc.confidence.iter().zip(vj.confidence).map(|(a, b)| (a - b) * (a - b)).sum();
                vj.visibility * d
            })
            .sum();
        if best.is_none_or(|(bc, bcam, _)| (cost, vc.camera) < (bc, bcam)) {
            best = Some((cost, vc.camera, c));
        }
    }
    best.expect("candidate").2
}

// ---------------------------------------------------------------------------
// 4. Temporal consistency of view pooling versus average pooling.

fn temporal_scene(seed: u64) -> SceneSpec {
    SceneSpec {
        classes: 4,
        frames: 211,
        bodies: vec![
            BodySpec {
                label: 1,
                shape: Shape::Ellipsoid {
                    radii: [0.2, 0.15, 0.5],
                    count: 150,
                },
                motion: Motion::Oscillating {
                    position: [0.0, 0.0, 1.25],
                    rotation: [0.0; 3],
                    amplitude: [0.08, 0.0, 0.0],
                    angular_amplitude: [0.0, 0.0, 0.1],
                    period: 90.0,
                    phase: 0.0,
                },
            },
            BodySpec {
                label: 3,
                shape: Shape::Box {
                    half_extents: [0.12, 0.08, 0.08],
                    count: 100,
                },
                motion: Motion::Oscillating {
                    position: [0.0, -0.12, 1.3],
                    rotation: [0.0; 3],
                    amplitude: [0.0, 0.0, 0.06],
                    angular_amplitude: [0.0; 3],
                    period: 70.0,
                    phase: 1.0,
                },
            },
        ],
        rig: RigLayout::default(),
        noise: NoiseSpec {
            confusion_rate: 0.3,
            ..NoiseSpec::default()
        },
        seed,
    }
}

/// Temporal-consistency report of one seeded scene, pooled both ways.
fn temporal_report(seed: u64) -> MetricReport {
    let scene = Scene::new(temporal_scene(seed)).expect("scene");
    let rig = build_rig(&scene.spec().rig).expect("rig");
    let rendering = render_observations(&scene, &rig);
    let tracker = TrackerParams::default();
    let (trajectories, _) = build_stream(rendering.frames.into_iter().map(Ok), &rig, &tracker).expect("tracks");
    let set = simulate_confidence(&scene, &rig);
    let fields = SceneFields::new(&set, &scene, &rig);
    temporal_consistency(
        &trajectories,
        &fields,
        &rig,
        &PoolParams::default(),
        &[PoolMethod::View, PoolMethod::Average],
        &TemporalParams::default(),
    )
}

fn temporal_consistency_trend() -> Outcome {
    let start = Instant::now();
    assert!(NoiseSpec::default().false_detection_rate > 0.0, "false detections are on");
    let mut sums: BTreeMap<(String, u64), (f64, usize)> = BTreeMap::new();
    for seed in 0..20 {
        let report = temporal_report(seed);
        for p in &report.series {
            if p.n > 0 {
                let e = sums.entry((p.method.clone(), (p.condition * 1000.0).round() as u64)).or_default();
                e.0 += p.mean;
                e.1 += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let mean = |method: &str, lag: u64| sums.get(&(method.to_string(), lag * 1000)).map(|(s, n)| s / *n as f64);
    let mut pass = elapsed < Duration::from_secs(120);
    let mut cells = Vec::new();
    for lag in 1..=7u64 {
        match (mean("view_pool", lag), mean("average_pool", lag)) {
            (Some(v), Some(a)) => {
                pass &= v - a >= 0.2;
                cells.push(format!("{lag}s {v:.3}/{a:.3}"));
            }
            _ => {
                pass = false;
                cells.push(format!("{lag}s no data"));
            }
        }
    }
    Outcome::new(
        pass,
        format!(
            "mean NC view/average by lag: {} (need view - average >= 0.2 everywhere); {:.1} s (< 120)",
            cells.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. Local RANSAC transforms recover a planted rigid motion.

fn planted_transform_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 1e-3).expect("sigma");
    let params = AffinityParams {
        eps: 1.0,
        ..AffinityParams::default()
    };
    let (mut recovered, mut worst_angle, mut worst_shift) = (0, 0.0f64, 0.0f64);
    let trials = 1000;
    for trial in 0..trials {
        let planted = small_motion(&mut rng);
        let mut other = small_motion(&mut rng);
        // The contaminating motion is an independent draw with an extra offset.
        other.translation += Vector3::from([(); 3].map(|_| rng.random_range(0.02..0.05)));
        let anchor = Vector3::from([(); 3].map(|_| rng.random_range(-0.01..0.01)));
        let mut trajectories = vec![noisy_pair(&mut rng, &noise, 0, anchor, &planted)];
        for k in 1..=64u32 {
            // Neighbors fill the anchor's eps-neighborhood uniformly.
            let p = anchor + ball(&mut rng, 0.99 * params.eps);
            let motion = if k <= 19 { &other } else { &planted };
            trajectories.push(noisy_pair(&mut rng, &noise, k, p, motion));
        }
        match local_transform(&trajectories, 0, 1, &params) {
            Ok(fit) => {
                let (angle, shift) = (fit.rotation_angle_to(&planted), (fit.translation - planted.translation).norm());
                worst_angle = worst_angle.max(angle);
                worst_shift = worst_shift.max(shift);
                if angle <= 1e-3 && shift <= 1e-3 {
                    recovered += 1;
                }
            }
            Err(_) => eprintln!("trial {trial}: underdetermined"),
        }
    }
    let rate = f64::from(recovered) / f64::from(trials);
    Outcome::new(
        rate >= 0.99,
        format!(
            "{recovered} of {trials} recovered ({:.1}%, >= 99%) within 1e-3 rad / 1e-3 m; \
             worst {worst_angle:.2e} rad, {worst_shift:.2e} m (1 mm noise, 19 of 64 neighbors contaminated)",
            rate * 100.0
        ),
    )
}

fn small_motion(rng: &mut impl Rng) -> RigidTransform {
    RigidTransform {
        rotation: random_rotation(rng, 0.2),
        translation: Vector3::from([(); 3].map(|_| rng.random_range(-0.03..0.03))),
    }
}

fn ball(rng: &mut impl Rng, radius: f64) -> Vector3<f64> {
    loop {
        let v = Vector3::from([(); 3].map(|_| rng.random_range(-radius..radius)));
        if v.norm() <= radius {
            return v;
        }
    }
}

fn noisy_pair(
    rng: &mut impl Rng,
    noise: &Normal<f64>,
    id: u32,
    p: Vector3<f64>,
    motion: &RigidTransform,
) -> Trajectory {
    let mut jitter = || Vector3::from([(); 3].map(|_| noise.sample(rng)));
    let mut t = Trajectory::new(id, id, 0);
    t.push(p + jitter(), Vec::new(), 0.0);
    t.push(motion.apply(&p) + jitter(), Vec::new(), 0.0);
    t
}

// ---------------------------------------------------------------------------
// 6. Rigid affinity separates bodies, and beats the distance baseline at
//    long range.

fn bars_scene(seed: u64) -> SceneSpec {
    // Two 1 m bars 3 cm apart, each with its own oscillation.
    let bar = |label, y, amplitude, angular_amplitude, period, phase| BodySpec {
        label,
        shape: Shape::Box {
            half_extents: [0.5, 0.1, 0.15],
            count: 1500,
        },
        motion: Motion::Oscillating {
            position: [0.0, y, 1.25],
            rotation: [0.0; 3],
            amplitude,
            angular_amplitude,
            period,
            phase,
        },
    };
    SceneSpec {
        classes: 2,
        frames: 12,
        bodies: vec![
            bar(1, 0.115, [0.06, 0.0, 0.02], [0.0, 0.0, 0.08], 10.0, 0.0),
            bar(2, -0.115, [0.0, 0.04, 0.06], [0.06, 0.0, 0.0], 8.0, 1.0),
        ],
        rig: RigLayout::default(),
        noise: NoiseSpec {
            obs_sigma_px: 0.0,
            ..NoiseSpec::default()
        },
        seed,
    }
}

struct SeparationRun {
    same_min: f64,
    cross_max: f64,
    same_edges: usize,
    cross_edges: usize,
    effectiveness: MetricReport,
}

fn separation_run(seed: u64) -> SeparationRun {
    let scene = Scene::new(bars_scene(seed)).expect("scene");
    let rig = build_rig(&scene.spec().rig).expect("rig");
    let rendering = render_observations(&scene, &rig);
    let tracker = TrackerParams::default();
    let (trajectories, _) = build_stream(rendering.frames.into_iter().map(Ok), &rig, &tracker).expect("tracks");
    let params = AffinityParams {
        seed,
        ..AffinityParams::default()
    };
    let (graph, _) = build_affinity(&trajectories, &params).expect("graph");
    let bodies = truth_bodies(&trajectories, &scene);
    let (mut same_min, mut cross_max, mut same_edges, mut cross_edges) = (f64::INFINITY, 0.0f64, 0, 0);
    for (i, j, w) in graph.edges() {
        if bodies[i] == bodies[j] {
            same_min = same_min.min(w);
            same_edges += 1;
        } else {
            cross_max = cross_max.max(w);
            cross_edges += 1;
        }
    }
    let transforms = estimate_transforms(&trajectories, &params);
    let eff = EffectivenessParams {
        edges: vec![0.6, 0.7, 0.8, 0.9, 1.0],
        seed,
        ..EffectivenessParams::default()
    };
    SeparationRun {
        same_min,
        cross_max,
        same_edges,
        cross_edges,
        effectiveness: affinity_effectiveness(&trajectories, &transforms, &bodies, params.tau, &eff),
    }
}

fn affinity_separation() -> Outcome {
    let (mut same_min, mut cross_max, mut same_edges, mut cross_edges) = (f64::INFINITY, 0.0f64, 0, 0);
    // Mismatches and samples per bin, pooled over seeds.
    let mut bins: BTreeMap<(u64, String), (f64, usize)> = BTreeMap::new();
    for seed in 0..10 {
        let run = separation_run(seed);
        same_min = same_min.min(run.same_min);
        cross_max = cross_max.max(run.cross_max);
        same_edges += run.same_edges;
        cross_edges += run.cross_edges;
        for p in &run.effectiveness.series {
            let e = bins.entry(((p.condition * 1000.0).round() as u64, p.method.clone())).or_default();
            e.0 += p.mean * p.n as f64;
            e.1 += p.n;
        }
    }
    let mut pass = same_min > 0.9 && cross_max < 0.01 && same_edges > 0 && cross_edges > 0;
    let mut cells = Vec::new();
    for center in [650u64, 750, 850, 950] {
        let rate = |m: &str| bins.get(&(center, m.to_string())).filter(|e| e.1 > 0).map(|e| e.0 / e.1 as f64);
        match (rate("rigid_affinity"), rate("eps_neighbors")) {
            (Some(r), Some(b)) => {
                pass &= r < b;
                cells.push(format!("{:.2} m {r:.3}/{b:.3}", center as f64 / 1000.0));
            }
            _ => {
                pass = false;
                cells.push(format!("{:.2} m empty", center as f64 / 1000.0));
            }
        }
    }
    Outcome::new(
        pass,
        format!(
            "min same-body weight {same_min:.4} (> 0.9) over {same_edges} edges, max cross-body weight \
             {cross_max:.2e} (< 0.01) over {cross_edges} edges; mismatch rigid/baseline by bin: {}",
            cells.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. Alpha-expansion stays within the factor-two bound of the optimum.

fn expansion_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut within_2, mut within_105, mut monotone) = (0, 0, 0);
    let mut worst: f64 = 1.0;
    let instances = 200;
    for _ in 0..instances {
        let n = rng.random_range(2..=12);
        let classes = rng.random_range(2..=4);
        let maps: Vec<SemanticMap> = (0..n)
            .map(|_| SemanticMap {
                values: (0..classes).map(|_| rng.random()).collect(),
                pooled_frames: 1,
            })
            .collect();
        let density = rng.random_range(0.2..0.9);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(density) {
                    edges.push((i, j, rng.random::<f64>()));
                }
            }
        }
        let graph = AffinityGraph::from_edges(n, &edges, AffinityParams::default()).expect("graph");
        let params = EnergyParams {
            lambda: rng.random_range(0.1..3.0),
            ..EnergyParams::default()
        };
        let result = alpha_expansion(&maps, &graph, &params, None).expect("expansion");
        let data = DataTerms::new(&maps).expect("data");
        let optimum = brute_force_energy(&data, &graph, &params);
        let found = energy(&result.labeling, &data, &graph, &params);
        let slack = 1e-9 * (1.0 + optimum);
        if found <= 2.0 * optimum + slack {
            within_2 += 1;
        }
        if found <= 1.05 * optimum + slack {
            within_105 += 1;
        }
        if optimum > 0.0 {
            worst = worst.max(found / optimum);
        }
        if result.trace.windows(2).all(|w| w[1].energy <= w[0].energy) {
            monotone += 1;
        }
    }
    let share = f64::from(within_105) / f64::from(instances);
    Outcome::new(
        within_2 == instances && share >= 0.9 && monotone == instances,
        format!(
            "{within_2} of {instances} within 2x of the brute-force optimum, {within_105} ({:.1}%, >= 90%) \
             within 1.05x, worst ratio {worst:.4}; {monotone} of {instances} traces non-increasing",
            share * 100.0
        ),
    )
}

/// Exact minimum energy by depth-first enumeration with pruning (every term
/// is non-negative, so a partial sum bounds the total from below).
fn brute_force_energy(data: &DataTerms, graph: &AffinityGraph, params: &EnergyParams) -> f64 {
    let n = data.preferred.len();
    let mut earlier: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, j, w) in graph.edges() {
        let (a, b) = (i.min(j), i.max(j));
        earlier[b].push((a, w));
    }
    let mut labels = vec![semtraj::Label::from_index(0); n];
    let mut best = f64::INFINITY;
    fn go(
        k: usize,
        partial: f64,
        labels: &mut Vec<semtraj::Label>,
        best: &mut f64,
        data: &DataTerms,
        earlier: &[Vec<(usize, f64)>],
        lambda: f64,
    ) {
        if partial >= *best {
            return;
        }
        if k == labels.len() {
            *best = partial;
            return;
        }
        for c in 0..data.classes {
            let l = semtraj::Label::from_index(c);
            let pair: f64 = earlier[k].iter().filter(|&&(j, _)| labels[j] != l).map(|&(_, w)| w).sum();
            labels[k] = l;
            go(k + 1, partial + data.cost(k, l) + lambda * pair, labels, best, data, earlier, lambda);
        }
    }
    go(0, 0.0, &mut labels, &mut best, data, &earlier, params.lambda);
    best
}

// ---------------------------------------------------------------------------
// 8-10. Standard noisy scene, ten seeds.

fn standard_config() -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/standard.json");
    ExperimentConfig::load(&path).expect("standard config")
}

struct StandardRun {
    dir: PathBuf,
    summary: RunSummary,
    elapsed: Duration,
    predictive: MetricReport,
}

#[derive(Default)]
struct StandardRuns {
    root: OnceCell<tempfile::TempDir>,
    runs: OnceCell<Vec<StandardRun>>,
}

impl StandardRuns {
    fn root(&self) -> &Path {
        self.root.get_or_init(|| tempfile::tempdir().expect("temp dir")).path()
    }

    fn get(&self) -> &[StandardRun] {
        self.runs.get_or_init(|| {
            (0..10)
                .map(|seed| {
                    let mut cfg = standard_config();
                    cfg.seed = seed;
                    let dir = self.root().join(format!("seed-{seed}"));
                    let start = Instant::now();
                    run_pipeline(&cfg, &dir, None).expect("pipeline");
                    let elapsed = start.elapsed();
                    let summary = summarize(&dir).expect("summary");
                    let predictive =
                        MetricReport::read_json(&dir.join("reports/predictive-validity.json")).expect("report");
                    eprintln!(
                        "standard seed {seed}: argmax {:.4}, inferred {:.4}, {:.0} s",
                        summary.argmax_accuracy,
                        summary.inferred_accuracy,
                        elapsed.as_secs_f64()
                    );
                    StandardRun {
                        dir,
                        summary,
                        elapsed,
                        predictive,
                    }
                })
                .collect()
        })
    }
}

fn end_to_end_correction(standard: &StandardRuns) -> Outcome {
    let runs = standard.get();
    let gains: Vec<f64> = runs.iter().map(|r| r.summary.inferred_accuracy - r.summary.argmax_accuracy).collect();
    let accs: Vec<f64> = runs.iter().map(|r| r.summary.inferred_accuracy).collect();
    let slowest = runs.iter().map(|r| r.elapsed).max().unwrap_or_default();
    let min_gain = gains.iter().copied().fold(f64::INFINITY, f64::min);
    let min_acc = accs.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let trajectories = runs.iter().map(|r| r.summary.trajectories).min().unwrap_or(0);
    Outcome::new(
        min_gain >= 0.05 && min_acc >= 0.9 && slowest < Duration::from_secs(300),
        format!(
            "every seed: gain >= {:.1} pp (>= 5, mean {:.1}), inferred accuracy >= {:.2}% (>= 90, mean {:.2}%); \
             >= {trajectories} trajectories per run, slowest full run {:.0} s (< 300)",
            min_gain * 100.0,
            mean(&gains) * 100.0,
            min_acc * 100.0,
            mean(&accs) * 100.0,
            slowest.as_secs_f64()
        ),
    )
}

fn predictive_validity_trend(standard: &StandardRuns) -> Outcome {
    let runs = standard.get();
    let sizes = [1usize, 5, 10, 20, 40];
    let mean = |method: &str, size: usize| -> Option<f64> {
        let values: Vec<f64> = runs
            .iter()
            .filter_map(|r| r.predictive.point(method, size as f64).filter(|p| p.n > 0).map(|p| p.mean))
            .collect();
        (values.len() == runs.len()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    };
    let (Some(view), Some(average)): (Option<Vec<f64>>, Option<Vec<f64>>) = (
        sizes.iter().map(|&s| mean("view_pool", s)).collect(),
        sizes.iter().map(|&s| mean("average_pool", s)).collect(),
    ) else {
        return Outcome::new(false, "predictive report missing sizes");
    };
    let non_decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0]);
    let view_wins = sizes.iter().zip(view.iter().zip(&average)).filter(|(s, _)| **s >= 10).all(|(_, (v, a))| v >= a);
    let at_20 = view[3];
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    Outcome::new(
        non_decreasing(&view) && non_decreasing(&average) && view_wins && at_20 > 0.6,
        format!(
            "mean agreement over sizes {sizes:?}: view [{}], average [{}]; non-decreasing {}/{}; \
             view >= average at >= 10 cameras: {view_wins}; view at 20 cameras {at_20:.3} (> 0.6)",
            fmt(&view),
            fmt(&average),
            non_decreasing(&view),
            non_decreasing(&average)
        ),
    )
}

fn determinism(standard: &StandardRuns) -> Outcome {
    let first = &standard.get()[0];
    let mut cfg = standard_config();
    cfg.seed = 0;
    let again = standard.root().join("seed-0-again");
    run_pipeline(&cfg, &again, None).expect("pipeline");
    let mut differing = Vec::new();
    let mut compared = 0;
    for file in files_under(&first.dir) {
        let rel = file.strip_prefix(&first.dir).expect("under run dir");
        if rel == Path::new("manifest.json") {
            continue; // holds wall-clock timings; its digests are compared below
        }
        compared += 1;
        if std::fs::read(&file).ok() != std::fs::read(again.join(rel)).ok() {
            differing.push(rel.display().to_string());
        }
    }
    let digests = |dir: &Path| -> Vec<(String, String, BTreeMap<String, String>)> {
        let text = std::fs::read_to_string(dir.join("manifest.json")).expect("manifest");
        let m: semtraj::pipeline::RunManifest = serde_json::from_str(&text).expect("manifest json");
        m.stages.into_iter().map(|s| (s.name, s.key, s.outputs.into_iter().collect())).collect()
    };
    if digests(&first.dir) != digests(&again) {
        differing.push("manifest digests".into());
    }
    // Smaller scenarios: recomputed reports must be identical.
    let temporal_same = temporal_report(0) == temporal_report(0);
    let separation_same = separation_run(1).effectiveness == separation_run(1).effectiveness;
    Outcome::new(
        differing.is_empty() && temporal_same && separation_same,
        format!(
            "standard seed 0 rerun: {compared} artifacts compared, differing {differing:?}; \
             temporal report identical: {temporal_same}; effectiveness report identical: {separation_same}"
        ),
    )
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("read dir").flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}
