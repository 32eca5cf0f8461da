use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::estimators::{CeParams, GridProposal};
use crate::fit::{FitConfig, SyntheticDatasetSpec};
use crate::policy::MixedPolicyParams;
use crate::presets::{self, Preset};
use crate::sa::SaConfig;
use crate::scenario::Scene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSettings {
    /// Samples per estimate.
    pub n: usize,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self { n: 100_000 }
    }
}

/// Cross-entropy settings; the initial parameters come from the nominal
/// policy's action moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CeSettings {
    pub elite_fraction: f64,
    pub max_iters: usize,
    pub smoothing: f64,
    pub samples_per_iter: usize,
}

impl Default for CeSettings {
    fn default() -> Self {
        Self { elite_fraction: 0.1, max_iters: 30, smoothing: 0.7, samples_per_iter: 2000 }
    }
}

impl CeSettings {
    pub fn params(&self, nominal: &GridProposal) -> Result<CeParams> {
        let p = CeParams {
            elite_fraction: self.elite_fraction,
            max_iters: self.max_iters,
            smoothing: self.smoothing,
            samples_per_iter: self.samples_per_iter,
            ..CeParams::from_nominal(nominal)?
        };
        p.validate()?;
        Ok(p)
    }
}

/// Everything a command needs besides its input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scene: Scene,
    pub nominal: MixedPolicyParams,
    pub estimator: EstimatorSettings,
    /// `sa.seed` is always replaced by the run seed.
    pub sa: SaConfig,
    pub ce: CeSettings,
    pub fit: FitConfig,
    pub synth: SyntheticDatasetSpec,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn from_preset(p: Preset) -> Self {
        Self {
            scene: p.scene,
            nominal: p.nominal,
            estimator: EstimatorSettings::default(),
            sa: SaConfig::default(),
            ce: CeSettings::default(),
            fit: FitConfig::default(),
            synth: SyntheticDatasetSpec::default(),
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "toy" => Ok(Self::from_preset(presets::toy())),
            "rigged" => Ok(Self::from_preset(presets::rigged())),
            _ => Err(Error::Config(format!("unknown preset {name:?} (expected toy or rigged)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.nominal.validate(self.scene.lambda_max)?;
        if self.estimator.n == 0 {
            return Err(Error::Config("estimator.n must be >= 1".into()));
        }
        self.sa.validate()?;
        self.fit.validate()?;
        self.synth.validate(&self.fit)?;
        Ok(())
    }

    /// Start from `base`, overlay the JSON file, then the dotted `key=value`
    /// overrides.
    pub fn resolve(base: RunConfig, file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut v = serde_json::to_value(&base).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let file_v: Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            merge(&mut v, file_v);
        }
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        let mut cfg: RunConfig = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        cfg.sa.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_preset(presets::toy())
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Apply `a.b.c=value`; the value is parsed as JSON, falling back to a string.
pub fn apply_override(v: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = v;
    for key in path.split('.') {
        slot = match slot {
            Value::Object(m) => m.get_mut(key),
            Value::Array(a) => key.parse::<usize>().ok().and_then(move |i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::Config(format!("unknown config key {path:?}")))?;
    }
    *slot = value;
    Ok(())
}
