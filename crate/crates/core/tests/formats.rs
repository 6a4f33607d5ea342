//! Every on-disk format written by a small end-to-end run reads back to the
//! values that were written (at the stored precision).

use std::path::Path;

use semtraj::affinity::io::{read_graph, read_graph_header, write_graph};
use semtraj::affinity::{build_affinity, AffinityParams};
use semtraj::geometry::Rig;
use semtraj::inference::{infer, read_labeling_csv, write_labeling_csv, EnergyParams};
use semtraj::pipeline::ExperimentConfig;
use semtraj::reconstruct::io::{read_trajectories, read_trajectories_json, write_trajectories, write_trajectories_json};
use semtraj::reconstruct::{build_stream, Trajectory, TrackerParams};
use semtraj::scene::io::{ObservationReader, ObservationWriter};
use semtraj::scene::{
    build_rig, render_observations, simulate_confidence, BodySpec, FieldSet, Motion, NoiseSpec, RigLayout, Scene,
    SceneFields, SceneSpec, Shape,
};
use semtraj::semantic::{build_semantic_maps, read_semantic_csv, write_semantic_csv, PoolMethod, PoolParams};

fn spec() -> SceneSpec {
    SceneSpec {
        classes: 3,
        frames: 5,
        bodies: vec![
            BodySpec {
                label: 1,
                shape: Shape::Box {
                    half_extents: [0.1, 0.08, 0.2],
                    count: 120,
                },
                motion: Motion::Constant {
                    position: [0.0, 0.05, 1.25],
                    rotation: [0.0; 3],
                    velocity: [0.004, 0.0, 0.0],
                    angular_velocity: [0.0, 0.0, 0.01],
                },
            },
            BodySpec {
                label: 3,
                shape: Shape::Ellipsoid {
                    radii: [0.06, 0.06, 0.1],
                    count: 80,
                },
                motion: Motion::Constant {
                    position: [0.0, -0.12, 1.3],
                    rotation: [0.0; 3],
                    velocity: [0.0, 0.0, 0.004],
                    angular_velocity: [0.0; 3],
                },
            },
        ],
        rig: RigLayout::default(),
        noise: NoiseSpec::default(),
        seed: 11,
    }
}

fn same_at_f32(a: &[Trajectory], b: &[Trajectory]) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert_eq!((x.id, x.source, x.emerge, x.len()), (y.id, y.source, y.emerge, y.len()));
        for (p, q) in x.points.iter().zip(&y.points) {
            assert_eq!(p.map(|c| c as f32 as f64), *q);
        }
        assert_eq!(x.visibility, y.visibility);
        assert_eq!(x.reprojection, y.reprojection);
    }
}

#[test]
fn artifacts_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let at = |name: &str| dir.path().join(name);
    let scene = Scene::new(spec()).unwrap();
    let rig = build_rig(&scene.spec().rig).unwrap();

    rig.save(&at("rig.json")).unwrap();
    let back = Rig::load(&at("rig.json")).unwrap();
    assert_eq!(back.len(), rig.len());
    for (a, b) in rig.cameras().iter().zip(back.cameras()) {
        assert_eq!(a.projection_matrix(), b.projection_matrix());
    }

    let rendering = render_observations(&scene, &rig);
    let mut writer = ObservationWriter::create(&at("obs.bin"), rig.len()).unwrap();
    for f in &rendering.frames {
        writer.write_frame(f).unwrap();
    }
    let header = writer.finish().unwrap();
    let total: usize = rendering.frames.iter().map(|f| f.len()).sum();
    assert_eq!(header.records, total as u64);
    let frames: Vec<_> = ObservationReader::open(&at("obs.bin")).unwrap().collect::<Result<_, _>>().unwrap();
    assert_eq!(frames.len(), rendering.frames.len());
    for (a, b) in rendering.frames.iter().zip(&frames) {
        assert_eq!(a.frame, b.frame);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert_eq!(x.track, y.track);
            assert_eq!(x.observation.camera, y.observation.camera);
            assert_eq!(x.observation.pixel.map(|c| c as f32 as f64), y.observation.pixel);
        }
    }

    let set = simulate_confidence(&scene, &rig);
    set.save(&at("fields.json")).unwrap();
    assert_eq!(FieldSet::load(&at("fields.json")).unwrap(), set);

    let (trajectories, _) = build_stream(frames.into_iter().map(Ok), &rig, &TrackerParams::default()).unwrap();
    assert!(!trajectories.is_empty());
    write_trajectories(&at("traj.bin"), &trajectories).unwrap();
    let stored = read_trajectories(&at("traj.bin")).unwrap();
    same_at_f32(&trajectories, &stored);
    write_trajectories_json(&at("traj.json"), &stored).unwrap();
    assert_eq!(read_trajectories_json(&at("traj.json")).unwrap(), stored);

    let fields = SceneFields::new(&set, &scene, &rig);
    let maps = build_semantic_maps(&stored, &fields, &rig, PoolMethod::View, &PoolParams::default(), None);
    write_semantic_csv(&at("semantic.csv"), &stored, &maps).unwrap();
    let read: Vec<_> = read_semantic_csv(&at("semantic.csv")).unwrap();
    assert_eq!(read.len(), maps.len());
    for ((id, m), (t, orig)) in read.iter().zip(stored.iter().zip(&maps)) {
        assert_eq!(*id, t.id);
        assert_eq!(m, orig, "semantic maps round-trip exactly");
    }

    let (graph, _) = build_affinity(&stored, &AffinityParams::default()).unwrap();
    write_graph(&at("graph.bin"), &graph, &stored).unwrap();
    assert_eq!(read_graph_header(&at("graph.bin")).unwrap().edges, graph.edge_count());
    assert_eq!(read_graph(&at("graph.bin"), &stored).unwrap(), graph);

    let inference = infer(&stored, &maps, &graph, &EnergyParams::default()).unwrap();
    write_labeling_csv(&at("labeling.csv"), &inference, &maps).unwrap();
    let rows = read_labeling_csv(&at("labeling.csv")).unwrap();
    assert_eq!(rows.len(), stored.len());
    for ((id, argmax, label), row) in rows.iter().zip(&inference.rows) {
        assert_eq!((*id, *argmax, *label), (row.trajectory_id, row.argmax, row.label));
    }
}

#[test]
fn config_round_trips_through_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    let mut cfg = ExperimentConfig::new(spec());
    cfg.energy.lambda = 0.7;
    cfg.seed = 9;
    cfg.save(&path).unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap(), cfg);
}

#[test]
fn standard_config_is_valid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/standard.json");
    let cfg = ExperimentConfig::load(&path).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.scene.bodies.len(), 2);
    assert_eq!(cfg.scene.classes, 4);
    assert_eq!(cfg.scene.noise.confusion_rate, 0.3);
}
