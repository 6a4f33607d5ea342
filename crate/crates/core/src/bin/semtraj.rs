//! Command-line entry points for each pipeline stage and full runs.
//!
//! Exit codes: 0 success, 1 validation error (bad config, flag or metric
//! name), 2 runtime failure (a stage failed; the manifest names it).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use semtraj::error::Error;
use semtraj::pipeline::{evaluate_metric, run_pipeline, summarize, ExperimentConfig, Metric, RunSummary};

#[derive(Parser)]
#[command(name = "semtraj", version, about = "Dense 3D semantic trajectories from multi-camera recognition")]
struct Cli {
    /// Print a machine-readable JSON outcome instead of the summary line.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the scene, rig, observation stream and confidence fields.
    Synth(StageArgs),
    /// Triangulate and track observations into trajectories (runs synth if needed).
    Reconstruct(StageArgs),
    /// Pool confidences into per-trajectory semantic maps (runs upstream stages if needed).
    Semantics(StageArgs),
    /// Build the rigid-motion affinity graph (runs upstream stages if needed).
    Affinity(StageArgs),
    /// Infer trajectory labels by alpha-expansion (runs upstream stages if needed).
    Infer(StageArgs),
    /// Recompute one metric on a finished run directory and write its CSV.
    Eval(EvalArgs),
    /// Run every stage, reusing cached results.
    Run(StageArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Experiment config (JSON).
    config: PathBuf,
    /// Output directory [default: $SEMTRAJ_OUT, else the config's `output`,
    /// else runs/<config name>]. With --seeds, one sub-directory per seed.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Smoothness weight lambda (unitless, >= 0) [default: from config, 1.0].
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Affinity error scale tau in meters [default: from config, 0.02].
    #[arg(long, allow_negative_numbers = true)]
    tau: Option<f64>,
    /// Probability of dropping each candidate affinity pair, in [0, 1) [default: from config, 0.5].
    #[arg(long, allow_negative_numbers = true)]
    dropout: Option<f64>,
    /// Pool semantics from a seeded subset of this many cameras [default: all].
    #[arg(long)]
    cameras: Option<usize>,
    /// Inclusive master-seed range `a..b`; writes <out>/seed-<s> per seed [default: config seed].
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<(u64, u64)>,
}

#[derive(Args)]
struct EvalArgs {
    /// Run directory produced by `run`.
    run_dir: PathBuf,
    /// ground-truth-accuracy | temporal-consistency | affinity-effectiveness | predictive-validity
    metric: String,
}

fn parse_seeds(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s.split_once("..").ok_or("expected a..b")?;
    let a: u64 = a.trim().parse().map_err(|e| format!("bad start: {e}"))?;
    let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|e| format!("bad end: {e}"))?;
    if b < a {
        return Err("range end precedes start".into());
    }
    Ok((a, b))
}

#[derive(Serialize)]
struct Outcome {
    exit_code: u8,
    summary: String,
    artifacts: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    runs: Vec<RunSummary>,
}

/// Errors split into validation (exit 1) and runtime (exit 2).
enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            e @ Error::Stage { .. } => Failure::Runtime(e.into()),
            e if e.is_validation() => Failure::Validation(e.into()),
            e => Failure::Runtime(e.into()),
        }
    }
}

fn load_config(args: &StageArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(v) = args.lambda {
        cfg.energy.lambda = v;
    }
    if let Some(v) = args.tau {
        cfg.affinity.tau = v;
    }
    if let Some(v) = args.dropout {
        cfg.affinity.dropout = v;
    }
    if args.cameras.is_some() {
        cfg.cameras = args.cameras;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output_root(args: &StageArgs, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(out) = &args.out {
        return out.clone();
    }
    let stem = args.config.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
    cfg.output_dir(&Path::new("runs").join(stem))
}

fn stage(args: &StageArgs, until: &str) -> Result<Outcome, Failure> {
    let cfg = load_config(args)?;
    let root = output_root(args, &cfg);
    let runs: Vec<(ExperimentConfig, PathBuf)> = match args.seeds {
        None => vec![(cfg.clone(), root)],
        Some((a, b)) => (a..=b)
            .map(|s| {
                let mut c = cfg.clone();
                c.seed = s;
                (c, root.join(format!("seed-{s}")))
            })
            .collect(),
    };
    let mut artifacts = Vec::new();
    let mut summaries = Vec::new();
    let mut lines = Vec::new();
    for (c, dir) in &runs {
        let outcome = run_pipeline(c, dir, Some(until))?;
        artifacts.extend(outcome.artifacts());
        let ran = outcome.ran();
        let mut line = format!(
            "{}: {} ({} ran, {} cached)",
            dir.display(),
            until,
            ran.len(),
            outcome.manifest.stages.len() - ran.len()
        );
        if until == "infer" || until == "eval" {
            let s = summarize(dir).map_err(|e| Failure::Runtime(e.into()))?;
            line += &format!(
                "; accuracy {:.4} argmax -> {:.4} inferred; energy {:.3} -> {:.3}; {} of {} changed",
                s.argmax_accuracy, s.inferred_accuracy, s.initial_energy, s.energy, s.changed, s.trajectories
            );
            if s.equals_argmax {
                line += "; inference output equals argmax labels";
            }
            summaries.push(s);
        }
        lines.push(line);
    }
    Ok(Outcome {
        exit_code: 0,
        summary: lines.join("\n"),
        artifacts,
        runs: summaries,
    })
}

fn eval(args: &EvalArgs) -> Result<Outcome, Failure> {
    let metric: Metric = args.metric.parse()?;
    let report = evaluate_metric(&args.run_dir, metric).map_err(|e| match e {
        e if e.is_validation() => Failure::Validation(e.into()),
        e => Failure::Runtime(e.into()),
    })?;
    let csv = args.run_dir.join("reports").join(format!("{}.csv", metric.name()));
    let json = csv.with_extension("json");
    Ok(Outcome {
        exit_code: 0,
        summary: format!("{}: {} rows written to {}", metric, report.series.len(), csv.display()),
        artifacts: vec![csv, json],
        runs: Vec::new(),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not errors; bad usage is a validation error.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => stage(a, "synth"),
        Command::Reconstruct(a) => stage(a, "reconstruct"),
        Command::Semantics(a) => stage(a, "semantics"),
        Command::Affinity(a) => stage(a, "affinity"),
        Command::Infer(a) => stage(a, "infer"),
        Command::Run(a) => stage(a, "eval"),
        Command::Eval(a) => eval(a),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(Failure::Validation(e)) => Outcome {
            exit_code: 1,
            summary: format!("error: {e:#}"),
            artifacts: Vec::new(),
            runs: Vec::new(),
        },
        Err(Failure::Runtime(e)) => Outcome {
            exit_code: 2,
            summary: format!("error: {e:#}"),
            artifacts: Vec::new(),
            runs: Vec::new(),
        },
    };
    if cli.json {
        match serde_json::to_string_pretty(&outcome).context("serializing outcome") {
            Ok(text) => println!("{text}"),
            Err(e) => eprintln!("{e:#}"),
        }
    } else if outcome.exit_code == 0 {
        println!("{}", outcome.summary);
    } else {
        eprintln!("{}", outcome.summary);
    }
    ExitCode::from(outcome.exit_code)
}
