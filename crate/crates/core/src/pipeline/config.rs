//! Experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::affinity::AffinityParams;
use crate::error::{Error, Result};
use crate::eval::{EffectivenessParams, PredictiveParams, TemporalParams};
use crate::inference::EnergyParams;
use crate::reconstruct::TrackerParams;
use crate::scene::SceneSpec;
use crate::seed::derive_seed;
use crate::semantic::{PoolMethod, PoolParams};

/// Environment variable that overrides the output directory.
pub const OUTPUT_ENV: &str = "SEMTRAJ_OUT";

/// Which evaluation protocols the `eval` stage runs. A protocol set to
/// `null` is skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub accuracy: bool,
    pub temporal: Option<TemporalParams>,
    pub effectiveness: Option<EffectivenessParams>,
    pub predictive: Option<PredictiveParams>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            accuracy: true,
            temporal: Some(TemporalParams::default()),
            effectiveness: Some(EffectivenessParams::default()),
            predictive: None,
        }
    }
}

/// A complete experiment. Stage seeds (`scene.seed`, `tracker.ransac.seed`,
/// `affinity.seed` and the evaluation seeds) are derived from the master
/// `seed` by [`ExperimentConfig::resolved`]; values written for them in the
/// file are replaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub scene: SceneSpec,
    #[serde(default)]
    pub tracker: TrackerParams,
    #[serde(default)]
    pub pool: PoolParams,
    #[serde(default = "default_method")]
    pub pool_method: PoolMethod,
    #[serde(default)]
    pub affinity: AffinityParams,
    #[serde(default)]
    pub energy: EnergyParams,
    /// Restrict semantic pooling to a seeded subset of this many cameras.
    #[serde(default)]
    pub cameras: Option<usize>,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    /// Output directory; `SEMTRAJ_OUT` overrides it.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_method() -> PoolMethod {
    PoolMethod::View
}

impl ExperimentConfig {
    /// A config around `scene` with every other setting at its default.
    pub fn new(scene: SceneSpec) -> Self {
        ExperimentConfig {
            seed: 0,
            scene,
            tracker: TrackerParams::default(),
            pool: PoolParams::default(),
            pool_method: PoolMethod::View,
            affinity: AffinityParams::default(),
            energy: EnergyParams::default(),
            cameras: None,
            evaluation: EvaluationConfig::default(),
            output: None,
        }
    }

    /// Parses a config; errors name the offending field path.
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path.is_empty() || path == "." {
                Error::json(origin, inner)
            } else {
                Error::invalid(path, inner.to_string())
            }
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_json(&text, path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate().map_err(|e| prefix("scene", e))?;
        self.tracker.validate()?;
        self.pool.validate()?;
        self.affinity.validate()?;
        self.energy.validate()?;
        let cameras: usize = self.scene.rig.cameras_per_row.iter().sum();
        if let Some(k) = self.cameras {
            if k == 0 || k > cameras {
                return Err(Error::invalid("cameras", format!("must be in 1..={cameras}")));
            }
        }
        if let Some(p) = &self.evaluation.predictive {
            if p.trials == 0 {
                return Err(Error::invalid("evaluation.predictive.trials", "must be at least 1"));
            }
            if let Some(&bad) = p.sizes.iter().find(|&&s| s == 0 || s >= cameras) {
                return Err(Error::invalid(
                    "evaluation.predictive.sizes",
                    format!("size {bad} must be in 1..{cameras}"),
                ));
            }
        }
        if let Some(e) = &self.evaluation.effectiveness {
            if e.edges.len() < 2 || e.edges.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::invalid("evaluation.effectiveness.edges", "need increasing bin edges"));
            }
        }
        if let Some(t) = &self.evaluation.temporal {
            if t.lags.contains(&0) {
                return Err(Error::invalid("evaluation.temporal.lags", "lags must be positive"));
            }
        }
        Ok(())
    }

    /// Copy with every stage seed derived from the master seed.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        let m = self.seed;
        c.scene.seed = derive_seed(m, "synth", 0);
        c.tracker.ransac.seed = derive_seed(m, "reconstruct", 0);
        c.affinity.seed = derive_seed(m, "affinity", 0);
        if let Some(e) = &mut c.evaluation.effectiveness {
            e.seed = derive_seed(m, "eval-effectiveness", 0);
        }
        if let Some(p) = &mut c.evaluation.predictive {
            p.seed = derive_seed(m, "eval-predictive", 0);
        }
        c
    }

    /// Output directory: `SEMTRAJ_OUT` if set, else `output`, else
    /// `fallback`.
    pub fn output_dir(&self, fallback: &Path) -> PathBuf {
        match std::env::var_os(OUTPUT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output.clone().unwrap_or_else(|| fallback.to_path_buf()),
        }
    }

    /// Seeded camera subset mask for semantic pooling, if restricted.
    pub fn camera_mask(&self) -> Option<Vec<bool>> {
        use rand::seq::SliceRandom;
        let k = self.cameras?;
        let n: usize = self.scene.rig.cameras_per_row.iter().sum();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut crate::seed::stream_rng(self.seed, "cameras", k as u64));
        let mut mask = vec![false; n];
        for &c in &order[..k.min(n)] {
            mask[c] = true;
        }
        Some(mask)
    }
}

fn prefix(scope: &str, e: Error) -> Error {
    match e {
        Error::Invalid { field, message } => Error::invalid(format!("{scope}.{field}"), message),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "scene": {
            "classes": 2,
            "frames": 3,
            "bodies": [{"label": 1, "shape": {"box": {"half_extents": [0.1, 0.1, 0.1], "count": 20}},
                        "motion": {"constant": {"position": [0, 0, 1.25]}}}]
        }
    }"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL, Path::new("c.json")).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.energy.lambda, 1.0);
        assert_eq!(cfg.pool_method, PoolMethod::View);
        assert!(cfg.evaluation.accuracy);
    }

    #[test]
    fn missing_bodies_is_named() {
        let text = r#"{"scene": {"classes": 2, "frames": 3}}"#;
        let e = ExperimentConfig::from_json(text, Path::new("c.json")).unwrap_err();
        assert!(e.is_validation());
        let msg = e.to_string();
        assert!(msg.contains("bodies") && msg.contains("scene"), "{msg}");
    }

    #[test]
    fn nested_errors_carry_their_path() {
        let text = MINIMAL.replace("\"frames\": 3", "\"frames\": 3, \"noise\": {\"confusion_rate\": \"high\"}");
        let msg = ExperimentConfig::from_json(&text, Path::new("c.json")).unwrap_err().to_string();
        assert!(msg.contains("scene.noise.confusion_rate"), "{msg}");
        let mut cfg = ExperimentConfig::from_json(MINIMAL, Path::new("c.json")).unwrap();
        cfg.scene.noise.confusion_rate = 2.0;
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("scene.noise.confusion_rate"), "{msg}");
    }

    #[test]
    fn seeds_derive_from_master() {
        let mut cfg = ExperimentConfig::from_json(MINIMAL, Path::new("c.json")).unwrap();
        let a = cfg.resolved();
        assert_eq!(a.scene.seed, derive_seed(0, "synth", 0));
        cfg.seed = 1;
        let b = cfg.resolved();
        assert_ne!(a.scene.seed, b.scene.seed);
        assert_ne!(a.affinity.seed, b.affinity.seed);
    }

    #[test]
    fn camera_subsets_are_seeded() {
        let mut cfg = ExperimentConfig::from_json(MINIMAL, Path::new("c.json")).unwrap();
        cfg.cameras = Some(5);
        let m = cfg.camera_mask().unwrap();
        assert_eq!(m.iter().filter(|&&x| x).count(), 5);
        assert_eq!(cfg.camera_mask().unwrap(), m);
        cfg.cameras = Some(500);
        assert!(cfg.validate().is_err());
    }
}
