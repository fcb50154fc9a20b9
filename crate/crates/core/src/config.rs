//! Run configuration: one JSON document, validated before any work starts.
//!
//! Command-line flags override the file. Generation seeds are derived from
//! the run seed when the configuration is resolved, so the written copy shows
//! the values actually used.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Attribute, DarkModel, GenConfig};
use crate::error::{Error, Result};
use crate::losses::{CorrelationLossRegistry, LossWeights};
use crate::mutual::train::{TrainMode, TrainOptions};

pub const RESOLVED_CONFIG_FILE: &str = "config.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Existing training set; otherwise `<out>/data/train/night`, otherwise generated.
    pub train_dir: Option<PathBuf>,
    /// Existing evaluation set; otherwise `<out>/data/eval/night`, otherwise generated.
    pub eval_dir: Option<PathBuf>,
    pub train: GenConfig,
    pub eval: GenConfig,
    pub dark_model: DarkModel,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_dir: None,
            eval_dir: None,
            train: GenConfig::default(),
            eval: GenConfig {
                num_sequences: 20,
                frames_per_sequence: 100,
                name_prefix: "eval".into(),
                ..GenConfig::default()
            },
            dark_model: DarkModel::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Tracking repetitions for the frame rate; the median is reported.
    pub timing_runs: usize,
    /// Restrict evaluation to sequences carrying any of these attributes.
    pub attributes: Option<Vec<Attribute>>,
    /// Run the teacher behind the oracle enhancer.
    pub teacher_enhancer: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            timing_runs: 3,
            attributes: None,
            teacher_enhancer: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: TrainMode,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Teacher for the distillation modes; defaults to `<out>/checkpoints/teacher.ckpt`.
    pub teacher_checkpoint: Option<PathBuf>,
    pub data: DataConfig,
    pub loss: LossWeights,
    pub train: TrainOptions,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::StudentsMutual,
            seed: 1,
            out_dir: PathBuf::from("runs/mlkd"),
            teacher_checkpoint: None,
            data: DataConfig::default(),
            loss: LossWeights::default(),
            train: TrainOptions::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Values given on the command line; each one that is set replaces the file's.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub mode: Option<TrainMode>,
    pub attributes: Option<Vec<Attribute>>,
}

impl RunConfig {
    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(source, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(m) = o.mode {
            self.mode = m;
        }
        if let Some(a) = &o.attributes {
            self.eval.attributes = Some(a.clone());
        }
        self
    }

    /// Derives the generation seeds from the run seed and validates everything.
    pub fn resolve(mut self, registry: &CorrelationLossRegistry) -> Result<Self> {
        self.data.train.seed = self.seed.wrapping_mul(2);
        self.data.eval.seed = self.seed.wrapping_mul(2).wrapping_add(1);
        self.data.dark_model.seed = self.seed;
        self.validate(registry)?;
        Ok(self)
    }

    pub fn validate(&self, registry: &CorrelationLossRegistry) -> Result<()> {
        let prefix = |field: &str, e: Error| match e {
            Error::Config { field: f, msg } => Error::config(format!("{field}.{f}"), msg),
            other => other,
        };
        self.data.train.validate().map_err(|e| prefix("data.train", e))?;
        self.data.eval.validate().map_err(|e| prefix("data.eval", e))?;
        self.data.dark_model.validate().map_err(|e| prefix("data", e))?;
        if self.data.train.name_prefix == self.data.eval.name_prefix {
            return Err(Error::config("data.eval.name_prefix", "must differ from data.train.name_prefix"));
        }
        self.loss.validate()?;
        self.train.validate(registry)?;
        if self.eval.timing_runs == 0 {
            return Err(Error::config("eval.timing_runs", "must be >= 1"));
        }
        if self.eval.attributes.as_ref().is_some_and(Vec::is_empty) {
            return Err(Error::config("eval.attributes", "must name at least one attribute"));
        }
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::config("out_dir", "must not be empty"));
        }
        Ok(())
    }

    /// Writes the resolved configuration to `<dir>/config.json`.
    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(RESOLVED_CONFIG_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.out_dir.join("checkpoints")
    }

    pub fn teacher_path(&self) -> PathBuf {
        self.teacher_checkpoint
            .clone()
            .unwrap_or_else(|| self.checkpoint_dir().join("teacher.ckpt"))
    }
}
