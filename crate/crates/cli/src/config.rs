//! JSON run configuration and `--override key=value` handling.

use std::path::{Path, PathBuf};

use lglstm::dataio::SynthParams;
use lglstm::network::ModelConfig;
use lglstm::training::{GradCheckOptions, SgdConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainSection,
    pub data: DataSection,
    pub io: IoSection,
    pub gradcheck: GradCheckOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Seeds parameter initialization; shuffling uses `seed + 1`.
    pub seed: u64,
    /// Print training-set metrics every this many epochs.
    pub eval_every: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let sgd = SgdConfig::default();
        Self {
            lr: sgd.lr,
            momentum: sgd.momentum,
            weight_decay: sgd.weight_decay,
            batch_size: sgd.batch_size,
            epochs: 1,
            seed: 0,
            eval_every: None,
        }
    }
}

impl TrainSection {
    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
        }
    }
}

/// Where samples come from. Commands that read data use `dir` when it is
/// set and generate `synth` in memory otherwise; `synth` writes `synth`
/// into `dir`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub synth: Option<SynthParams>,
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub checkpoint_in: Option<PathBuf>,
    pub checkpoint_out: Option<PathBuf>,
    pub pred_dir: Option<PathBuf>,
    /// Loss trace written by `train`, one `step,loss` row per optimizer step.
    pub loss_csv: Option<PathBuf>,
    /// Checkpoints compared side by side by `eval`.
    pub variants: Vec<Variant>,
}

/// A named checkpoint plus the model keys that differ from `model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    pub checkpoint: PathBuf,
    #[serde(default)]
    pub model: serde_json::Map<String, Value>,
}

impl Variant {
    pub fn model_config(&self, base: &ModelConfig) -> Result<ModelConfig, CliError> {
        let mut v = serde_json::to_value(base).map_err(|e| CliError::Config(e.to_string()))?;
        let obj = v.as_object_mut().expect("model config serializes to an object");
        for (k, val) in &self.model {
            obj.insert(k.clone(), val.clone());
        }
        let cfg: ModelConfig = serde_json::from_value(v)
            .map_err(|e| CliError::Config(format!("variant `{}`: {e}", self.name)))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Sets `path` (dot separated) in `root` to `value`. The value is parsed as
/// JSON and taken as a plain string when that fails.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("override `{spec}` has an empty key")));
    }
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        if !node.is_object() {
            return Err(CliError::Config(format!("override `{spec}`: `{key}` is not inside an object")));
        }
        node = node
            .as_object_mut()
            .expect("checked above")
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
    }
    match node.as_object_mut() {
        Some(obj) => {
            obj.insert(keys[keys.len() - 1].to_string(), value);
            Ok(())
        }
        None => Err(CliError::Config(format!("override `{spec}` does not address an object key"))),
    }
}

impl RunConfig {
    pub fn from_value(value: Value) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.model.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text, overrides)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
