//! Reproducible runs: synth → reconstruct → semantics → affinity → infer →
//! eval, each stage persisting its artifacts under one run directory.
//!
//! A stage's cache key is the digest of its name, its parameters and the
//! digests of its input files. A stage re-runs only when its key changes or
//! one of its recorded outputs is missing or altered on disk.

pub mod config;
pub mod manifest;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use config::{EvaluationConfig, ExperimentConfig, OUTPUT_ENV};
pub use manifest::{bytes_digest, file_digest, RunManifest, StageRecord, StageStatus, MANIFEST_FILE};

use crate::affinity::io::{read_graph, write_graph};
use crate::affinity::{build_affinity, estimate_transforms, AffinityGraph};
use crate::error::{Error, Result};
use crate::eval::{
    accuracy_report, add_projection_proxy, affinity_effectiveness, ground_truth_accuracy, predictive_validity,
    temporal_consistency, truth_bodies, truth_labels, write_summary_json, MetricReport, ReportMetadata,
};
use crate::geometry::Rig;
use crate::inference::{infer, read_labeling_csv, write_labeling_csv, write_trace_csv, Labeling};
use crate::label::Label;
use crate::reconstruct::io::{read_trajectories, write_trajectories};
use crate::reconstruct::{build_stream, Trajectory};
use crate::scene::io::{ObservationReader, ObservationWriter};
use crate::scene::{build_rig, render_frame, simulate_confidence, FieldSet, GroundTruth, Scene, SceneFields, SceneSpec};
use crate::semantic::{build_semantic_maps, read_semantic_csv, write_semantic_csv, PoolMethod, SemanticMap};

/// Stage names in execution order.
pub const STAGES: [&str; 6] = ["synth", "reconstruct", "semantics", "affinity", "infer", "eval"];

/// Artifact file names inside a run directory.
pub mod files {
    pub const CONFIG: &str = "config.json";
    pub const SCENE: &str = "scene.json";
    pub const RIG: &str = "rig.json";
    pub const OBSERVATIONS: &str = "observations.bin";
    pub const OBSERVATIONS_HEADER: &str = "observations.json";
    pub const FIELDS: &str = "fields.json";
    pub const TRAJECTORIES: &str = "trajectories.bin";
    pub const RECONSTRUCT_STATS: &str = "reconstruct.json";
    pub const SEMANTIC: &str = "semantic.csv";
    pub const GRAPH: &str = "graph.bin";
    pub const GRAPH_HEADER: &str = "graph.json";
    pub const AFFINITY_STATS: &str = "affinity.json";
    pub const LABELING: &str = "labeling.csv";
    pub const TRACE: &str = "trace.csv";
    pub const INFERENCE: &str = "inference.json";
    pub const REPORTS: &str = "reports";
    pub const SUMMARY: &str = "reports/summary.json";
}

/// Evaluation protocols addressable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    Temporal,
    Effectiveness,
    Predictive,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Accuracy, Metric::Temporal, Metric::Effectiveness, Metric::Predictive];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "ground-truth-accuracy",
            Metric::Temporal => "temporal-consistency",
            Metric::Effectiveness => "affinity-effectiveness",
            Metric::Predictive => "predictive-validity",
        }
    }

    fn enabled(self, cfg: &EvaluationConfig) -> bool {
        match self {
            Metric::Accuracy => cfg.accuracy,
            Metric::Temporal => cfg.temporal.is_some(),
            Metric::Effectiveness => cfg.effectiveness.is_some(),
            Metric::Predictive => cfg.predictive.is_some(),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Metric::ALL.iter().map(|m| m.name()).collect();
            Error::invalid("metric", format!("unknown metric {s:?}; valid names: {}", names.join(", ")))
        })
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Headline numbers of a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub trajectories: usize,
    pub edges: usize,
    pub argmax_accuracy: f64,
    pub inferred_accuracy: f64,
    pub initial_energy: f64,
    pub energy: f64,
    pub changed: usize,
    /// True when inference kept every argmax label.
    pub equals_argmax: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl RunOutcome {
    /// Stages that executed (not served from cache).
    pub fn ran(&self) -> Vec<&str> {
        self.manifest
            .stages
            .iter()
            .filter(|s| s.status == StageStatus::Ran)
            .map(|s| s.name.as_str())
            .collect()
    }

    /// Artifact paths recorded in the manifest.
    pub fn artifacts(&self) -> Vec<PathBuf> {
        self.manifest
            .stages
            .iter()
            .flat_map(|s| s.outputs.keys().map(|k| self.dir.join(k)))
            .collect()
    }
}

/// Resolved config plus the directory a run writes into.
struct Run<'a> {
    dir: &'a Path,
    cfg: ExperimentConfig,
}

impl Run<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn scene(&self) -> Result<Scene> {
        let path = self.path(files::SCENE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let spec: SceneSpec = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        Scene::new(spec)
    }

    fn rig(&self) -> Result<Rig> {
        Rig::load(&self.path(files::RIG))
    }

    fn fields(&self) -> Result<FieldSet> {
        FieldSet::load(&self.path(files::FIELDS))
    }

    fn trajectories(&self) -> Result<Vec<Trajectory>> {
        read_trajectories(&self.path(files::TRAJECTORIES))
    }

    fn maps(&self, trajectories: &[Trajectory]) -> Result<Vec<SemanticMap>> {
        let path = self.path(files::SEMANTIC);
        let rows = read_semantic_csv(&path)?;
        if rows.len() != trajectories.len() || rows.iter().zip(trajectories).any(|((id, _), t)| *id != t.id) {
            return Err(Error::format(path, "semantic maps are not aligned with the trajectory file"));
        }
        Ok(rows.into_iter().map(|(_, m)| m).collect())
    }

    fn graph(&self, trajectories: &[Trajectory]) -> Result<AffinityGraph> {
        read_graph(&self.path(files::GRAPH), trajectories)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(&path, e))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    fn metadata(&self, params: serde_json::Value) -> Result<ReportMetadata> {
        Ok(ReportMetadata {
            seed: self.cfg.seed,
            scene_hash: file_digest(&self.path(files::SCENE))?,
            params,
        })
    }
}

struct Stage {
    name: &'static str,
    params: serde_json::Value,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

fn stages(cfg: &ExperimentConfig) -> Vec<Stage> {
    let strings = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let mut reports: Vec<String> = Vec::new();
    for m in Metric::ALL.into_iter().filter(|m| m.enabled(&cfg.evaluation)) {
        reports.push(format!("{}/{}.csv", files::REPORTS, m.name()));
        reports.push(format!("{}/{}.json", files::REPORTS, m.name()));
    }
    reports.push(files::SUMMARY.to_string());
    vec![
        Stage {
            name: "synth",
            params: json!({ "scene": cfg.scene }),
            inputs: vec![],
            outputs: strings(&[files::SCENE, files::RIG, files::OBSERVATIONS, files::OBSERVATIONS_HEADER, files::FIELDS]),
        },
        Stage {
            name: "reconstruct",
            params: json!({ "tracker": cfg.tracker }),
            inputs: strings(&[files::RIG, files::OBSERVATIONS, files::OBSERVATIONS_HEADER]),
            outputs: strings(&[files::TRAJECTORIES, files::RECONSTRUCT_STATS]),
        },
        Stage {
            name: "semantics",
            params: json!({ "pool": cfg.pool, "method": cfg.pool_method, "cameras": cfg.camera_mask() }),
            inputs: strings(&[files::SCENE, files::RIG, files::FIELDS, files::TRAJECTORIES]),
            outputs: strings(&[files::SEMANTIC]),
        },
        Stage {
            name: "affinity",
            params: json!({ "affinity": cfg.affinity }),
            inputs: strings(&[files::TRAJECTORIES]),
            outputs: strings(&[files::GRAPH, files::GRAPH_HEADER, files::AFFINITY_STATS]),
        },
        Stage {
            name: "infer",
            params: json!({ "energy": cfg.energy }),
            inputs: strings(&[files::TRAJECTORIES, files::SEMANTIC, files::GRAPH, files::GRAPH_HEADER]),
            outputs: strings(&[files::LABELING, files::TRACE, files::INFERENCE]),
        },
        Stage {
            name: "eval",
            params: json!({
                "evaluation": cfg.evaluation,
                "pool": cfg.pool,
                "affinity": cfg.affinity,
                "energy": cfg.energy,
                "seed": cfg.seed,
            }),
            inputs: strings(&[
                files::SCENE,
                files::RIG,
                files::FIELDS,
                files::TRAJECTORIES,
                files::SEMANTIC,
                files::GRAPH,
                files::GRAPH_HEADER,
                files::LABELING,
            ]),
            outputs: reports,
        },
    ]
}

fn run_stage(run: &Run, name: &str) -> Result<()> {
    match name {
        "synth" => synth(run),
        "reconstruct" => reconstruct(run),
        "semantics" => semantics(run),
        "affinity" => affinity(run),
        "infer" => inference(run),
        "eval" => evaluate(run),
        other => unreachable!("unknown stage {other}"),
    }
}

fn synth(run: &Run) -> Result<()> {
    let scene = Scene::new(run.cfg.scene.clone())?;
    let rig = build_rig(&run.cfg.scene.rig)?;
    run.write_json(files::SCENE, scene.spec())?;
    rig.save(&run.path(files::RIG))?;
    let mut truth = GroundTruth::new(scene.frames(), scene.point_count(), rig.len());
    let mut writer = ObservationWriter::create(&run.path(files::OBSERVATIONS), rig.len())?;
    for t in 0..scene.frames() {
        writer.write_frame(&render_frame(&scene, &rig, t, &mut truth))?;
    }
    writer.finish()?;
    simulate_confidence(&scene, &rig).save(&run.path(files::FIELDS))
}

fn reconstruct(run: &Run) -> Result<()> {
    let rig = run.rig()?;
    let reader = ObservationReader::open(&run.path(files::OBSERVATIONS))?;
    let (trajectories, stats) = build_stream(reader, &rig, &run.cfg.tracker)?;
    write_trajectories(&run.path(files::TRAJECTORIES), &trajectories)?;
    run.write_json(files::RECONSTRUCT_STATS, &stats)
}

fn semantics(run: &Run) -> Result<()> {
    let (scene, rig, set, trajectories) = (run.scene()?, run.rig()?, run.fields()?, run.trajectories()?);
    let fields = SceneFields::new(&set, &scene, &rig);
    let mask = run.cfg.camera_mask();
    let maps = build_semantic_maps(&trajectories, &fields, &rig, run.cfg.pool_method, &run.cfg.pool, mask.as_deref());
    write_semantic_csv(&run.path(files::SEMANTIC), &trajectories, &maps)
}

fn affinity(run: &Run) -> Result<()> {
    let trajectories = run.trajectories()?;
    let (graph, stats) = build_affinity(&trajectories, &run.cfg.affinity)?;
    write_graph(&run.path(files::GRAPH), &graph, &trajectories)?;
    run.write_json(files::AFFINITY_STATS, &stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct InferenceRecord {
    initial_energy: f64,
    energy: f64,
    changed: usize,
    sweeps: usize,
}

fn inference(run: &Run) -> Result<()> {
    let trajectories = run.trajectories()?;
    let maps = run.maps(&trajectories)?;
    let graph = run.graph(&trajectories)?;
    let out = infer(&trajectories, &maps, &graph, &run.cfg.energy)?;
    write_labeling_csv(&run.path(files::LABELING), &out, &maps)?;
    write_trace_csv(&run.path(files::TRACE), &out.trace)?;
    run.write_json(
        files::INFERENCE,
        &InferenceRecord {
            initial_energy: out.initial_energy,
            energy: out.energy,
            changed: out.changed(),
            sweeps: out.trace.last().map_or(0, |t| t.sweep),
        },
    )
}

fn evaluate(run: &Run) -> Result<()> {
    let reports_dir = run.path(files::REPORTS);
    std::fs::create_dir_all(&reports_dir).map_err(|e| Error::io(&reports_dir, e))?;
    let mut all = Vec::new();
    for m in Metric::ALL.into_iter().filter(|m| m.enabled(&run.cfg.evaluation)) {
        let report = compute_metric(run, m)?;
        write_report(run.dir, &report, m)?;
        all.push(report);
    }
    write_summary_json(&run.path(files::SUMMARY), &all)
}

fn write_report(dir: &Path, report: &MetricReport, metric: Metric) -> Result<()> {
    let reports = dir.join(files::REPORTS);
    std::fs::create_dir_all(&reports).map_err(|e| Error::io(&reports, e))?;
    report.write_csv(&reports.join(format!("{}.csv", metric.name())))?;
    report.write_json(&reports.join(format!("{}.json", metric.name())))
}

fn labels_by_id(path: &Path, trajectories: &[Trajectory]) -> Result<(Labeling, Labeling)> {
    let rows = read_labeling_csv(path)?;
    if rows.len() != trajectories.len() || rows.iter().zip(trajectories).any(|(r, t)| r.0 != t.id) {
        return Err(Error::format(path, "labeling is not aligned with the trajectory file"));
    }
    let argmax = Labeling(rows.iter().map(|r| r.1).collect());
    let inferred = Labeling(rows.iter().map(|r| r.2).collect());
    Ok((argmax, inferred))
}

fn compute_metric(run: &Run, metric: Metric) -> Result<MetricReport> {
    let cfg = &run.cfg;
    let eval = &cfg.evaluation;
    let both = [PoolMethod::View, PoolMethod::Average];
    let mut report = match metric {
        Metric::Accuracy => {
            let (scene, trajectories) = (run.scene()?, run.trajectories()?);
            let (argmax, inferred) = labels_by_id(&run.path(files::LABELING), &trajectories)?;
            let truth = truth_labels(&trajectories, &scene);
            let a = ground_truth_accuracy(&argmax.0, &truth, scene.classes())?;
            let b = ground_truth_accuracy(&inferred.0, &truth, scene.classes())?;
            let mut r = accuracy_report(&a, &b);
            r.metadata = run.metadata(json!({ "energy": cfg.energy }))?;
            r
        }
        Metric::Temporal => {
            let params = eval.temporal.clone().unwrap_or_default();
            let (scene, rig, set, trajectories) = (run.scene()?, run.rig()?, run.fields()?, run.trajectories()?);
            let fields = SceneFields::new(&set, &scene, &rig);
            let mut r = temporal_consistency(&trajectories, &fields, &rig, &cfg.pool, &both, &params);
            r.metadata = run.metadata(json!({ "temporal": params, "pool": cfg.pool }))?;
            r
        }
        Metric::Effectiveness => {
            let params = eval.effectiveness.clone().unwrap_or_default();
            let (scene, rig, set, trajectories) = (run.scene()?, run.rig()?, run.fields()?, run.trajectories()?);
            let fields = SceneFields::new(&set, &scene, &rig);
            let transforms = estimate_transforms(&trajectories, &cfg.affinity);
            let bodies = truth_bodies(&trajectories, &scene);
            let tau = cfg.affinity.tau;
            let mut r = affinity_effectiveness(&trajectories, &transforms, &bodies, tau, &params);
            add_projection_proxy(&mut r, &trajectories, &transforms, tau, &params, &fields, &rig, cfg.pool.eps_v);
            r.metadata = run.metadata(json!({ "effectiveness": params, "affinity": cfg.affinity }))?;
            r
        }
        Metric::Predictive => {
            let params = eval.predictive.clone().unwrap_or_default();
            let (scene, rig, set, trajectories) = (run.scene()?, run.rig()?, run.fields()?, run.trajectories()?);
            let fields = SceneFields::new(&set, &scene, &rig);
            let graph = run.graph(&trajectories)?;
            let mut r =
                predictive_validity(&trajectories, &fields, &rig, &graph, &cfg.pool, &cfg.energy, &both, &params)?;
            r.metadata = run.metadata(json!({ "predictive": params, "pool": cfg.pool, "energy": cfg.energy }))?;
            r
        }
    };
    report.name = metric.name().to_string();
    Ok(report)
}

fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.output = None;
    let bytes = serde_json::to_vec(&c).map_err(|e| Error::json("config", e))?;
    Ok(bytes_digest(&bytes))
}

fn stage_key(stage: &Stage, inputs: &BTreeMap<String, String>) -> Result<String> {
    let doc = json!({ "stage": stage.name, "params": stage.params, "inputs": inputs });
    let bytes = serde_json::to_vec(&doc).map_err(|e| Error::json(stage.name, e))?;
    Ok(bytes_digest(&bytes))
}

fn outputs_intact(dir: &Path, record: &StageRecord, expected: &[String]) -> bool {
    record.outputs.len() == expected.len()
        && expected.iter().all(|rel| {
            record
                .outputs
                .get(rel)
                .is_some_and(|d| file_digest(&dir.join(rel)).is_ok_and(|actual| &actual == d))
        })
}

/// Runs every stage up to and including `until` (all stages when `None`)
/// into `dir`, reusing cached stages. On failure the manifest names the
/// failing stage and the error is [`Error::Stage`].
pub fn run_pipeline(cfg: &ExperimentConfig, dir: &Path, until: Option<&str>) -> Result<RunOutcome> {
    cfg.validate()?;
    if let Some(u) = until {
        if !STAGES.contains(&u) {
            return Err(Error::invalid("stage", format!("unknown stage {u:?}; valid: {}", STAGES.join(", "))));
        }
    }
    let cfg = cfg.resolved();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let previous = RunManifest::load(&manifest_path).ok();
    let mut manifest = RunManifest::new(config_hash(&cfg)?);
    let mut stored = cfg.clone();
    stored.output = None;
    stored.save(&dir.join(files::CONFIG))?;
    let run = Run { dir, cfg };
    for stage in stages(&run.cfg) {
        let started = Instant::now();
        let mut inputs = BTreeMap::new();
        for rel in &stage.inputs {
            inputs.insert(rel.clone(), file_digest(&dir.join(rel)).map_err(|e| stage_error(stage.name, e))?);
        }
        let key = stage_key(&stage, &inputs)?;
        let cached = previous
            .as_ref()
            .and_then(|p| p.stage(stage.name))
            .filter(|r| r.key == key && r.status != StageStatus::Failed && outputs_intact(dir, r, &stage.outputs));
        let record = if let Some(r) = cached {
            StageRecord {
                status: StageStatus::Cached,
                wall_seconds: started.elapsed().as_secs_f64(),
                ..r.clone()
            }
        } else {
            let result = run_stage(&run, stage.name).and_then(|()| {
                stage
                    .outputs
                    .iter()
                    .map(|rel| Ok((rel.clone(), file_digest(&dir.join(rel))?)))
                    .collect::<Result<BTreeMap<_, _>>>()
            });
            match result {
                Ok(outputs) => StageRecord {
                    name: stage.name.into(),
                    key,
                    status: StageStatus::Ran,
                    inputs,
                    outputs,
                    wall_seconds: started.elapsed().as_secs_f64(),
                    error: None,
                },
                Err(e) => {
                    manifest.stages.push(StageRecord {
                        name: stage.name.into(),
                        key,
                        status: StageStatus::Failed,
                        inputs,
                        outputs: BTreeMap::new(),
                        wall_seconds: started.elapsed().as_secs_f64(),
                        error: Some(e.to_string()),
                    });
                    manifest.failed_stage = Some(stage.name.into());
                    manifest.save(&manifest_path)?;
                    return Err(stage_error(stage.name, e));
                }
            }
        };
        manifest.stages.push(record);
        if until == Some(stage.name) {
            break;
        }
    }
    manifest.save(&manifest_path)?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        manifest,
    })
}

fn stage_error(stage: &str, e: Error) -> Error {
    Error::Stage {
        stage: stage.to_string(),
        source: Box::new(e),
    }
}

/// Reads the stored config of a run directory.
pub fn load_run_config(dir: &Path) -> Result<ExperimentConfig> {
    let path = dir.join(files::CONFIG);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    ExperimentConfig::from_json(&text, &path)
}

/// Recomputes one metric on a finished run and writes its CSV and JSON into
/// the run's report directory.
pub fn evaluate_metric(dir: &Path, metric: Metric) -> Result<MetricReport> {
    let cfg = load_run_config(dir)?;
    let run = Run { dir, cfg };
    let report = compute_metric(&run, metric)?;
    write_report(dir, &report, metric)?;
    Ok(report)
}

/// Headline numbers read back from a run's artifacts.
pub fn summarize(dir: &Path) -> Result<RunSummary> {
    let cfg = load_run_config(dir)?;
    let run = Run { dir, cfg };
    let (scene, trajectories) = (run.scene()?, run.trajectories()?);
    let (argmax, inferred) = labels_by_id(&run.path(files::LABELING), &trajectories)?;
    let truth: Vec<Label> = truth_labels(&trajectories, &scene);
    let a = ground_truth_accuracy(&argmax.0, &truth, scene.classes())?;
    let b = ground_truth_accuracy(&inferred.0, &truth, scene.classes())?;
    let path = run.path(files::INFERENCE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let record: InferenceRecord = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    let header = crate::affinity::io::read_graph_header(&run.path(files::GRAPH))?;
    Ok(RunSummary {
        trajectories: trajectories.len(),
        edges: header.edges,
        argmax_accuracy: a.overall,
        inferred_accuracy: b.overall,
        initial_energy: record.initial_energy,
        energy: record.energy,
        changed: record.changed,
        equals_argmax: argmax == inferred,
    })
}
