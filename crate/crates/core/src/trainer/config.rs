use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::learner::{preset, AlgorithmPreset, DatasetProfile, PresetName, MAX_GRAD_NORM};
use crate::model::ModelConfig;
use crate::optim::{OptimizerKind, OptimizerSpec};
use crate::schedule::ScheduleSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Finetune,
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pretrain" => Ok(Phase::Pretrain),
            "finetune" => Ok(Phase::Finetune),
            other => Err(Error::config(format!("unknown phase {other:?}"))),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Pretrain => "pretrain",
            Phase::Finetune => "finetune",
        })
    }
}

/// Everything a training run reads. Unset optional fields fall back to the
/// phase defaults through the accessor methods.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub phase: Phase,
    pub preset: PresetName,
    pub alpha: Option<ScheduleSpec>,
    pub beta: Option<ScheduleSpec>,
    pub profile: DatasetProfile,
    pub train_path: Option<PathBuf>,
    pub val_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    /// `vocab_size` is replaced by the size of the vocabulary actually built.
    pub model: ModelConfig,
    pub vocab_cap: usize,
    pub optimizer: Option<OptimizerKind>,
    pub learning_rate: Option<f64>,
    pub eval_every: Option<u64>,
    pub max_iterations: u64,
    pub seed: u64,
    pub max_grad_norm: f64,
    pub batch_size: usize,
    /// Beam used for validation decoding while fine-tuning (1 is greedy).
    pub val_beam: usize,
    pub test_beam: usize,
    pub checkpoint: PathBuf,
    pub init_checkpoint: Option<PathBuf>,
    pub records: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            phase: Phase::Pretrain,
            preset: PresetName::Mle,
            alpha: None,
            beta: None,
            profile: DatasetProfile::default(),
            train_path: None,
            val_path: None,
            test_path: None,
            model: ModelConfig::default(),
            vocab_cap: 5000,
            optimizer: None,
            learning_rate: None,
            eval_every: None,
            max_iterations: 10_000,
            seed: 1,
            max_grad_norm: MAX_GRAD_NORM,
            batch_size: 1,
            val_beam: 1,
            test_beam: 8,
            checkpoint: PathBuf::from("model.ckpt"),
            init_checkpoint: None,
            records: None,
        }
    }
}

impl TrainConfig {
    pub fn pretrain() -> Self {
        TrainConfig::default()
    }

    pub fn finetune(preset: PresetName) -> Self {
        TrainConfig {
            phase: Phase::Finetune,
            preset,
            ..TrainConfig::default()
        }
    }

    pub fn eval_every(&self) -> u64 {
        self.eval_every.unwrap_or(match self.phase {
            Phase::Pretrain => 1000,
            Phase::Finetune => 10,
        })
    }

    pub fn optimizer_spec(&self) -> OptimizerSpec {
        let kind = self.optimizer.unwrap_or(match self.phase {
            Phase::Pretrain => OptimizerKind::Adagrad,
            Phase::Finetune => OptimizerKind::Adam,
        });
        let spec = match kind {
            OptimizerKind::Adagrad => OptimizerSpec::adagrad(),
            OptimizerKind::Adam => OptimizerSpec::adam(),
        };
        match self.learning_rate {
            Some(lr) => spec.with_learning_rate(lr),
            None => spec,
        }
    }

    /// The preset with any α/β overrides applied.
    pub fn algorithm(&self) -> AlgorithmPreset {
        let mut p = preset(self.preset, self.profile);
        if let Some(a) = self.alpha {
            p = p.with_alpha(a);
        }
        if let Some(b) = self.beta {
            p = p.with_beta(b);
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_every() < 1 {
            return Err(Error::config("eval_every must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.val_beam < 1 || self.test_beam < 1 {
            return Err(Error::config("beam sizes must be at least 1"));
        }
        if self.max_grad_norm.is_nan() || self.max_grad_norm <= 0.0 {
            return Err(Error::config("max_grad_norm must be positive"));
        }
        self.optimizer_spec().validate()?;
        self.algorithm().validate()
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::config(format!("{key}: cannot parse {v:?}")))
        }
        let v = value.trim();
        match key.trim() {
            "phase" => self.phase = v.parse()?,
            "preset" => self.preset = v.parse()?,
            "alpha" => self.alpha = Some(v.parse()?),
            "beta" => self.beta = Some(v.parse()?),
            "profile" => self.profile = v.parse()?,
            "train" => self.train_path = Some(v.into()),
            "val" => self.val_path = Some(v.into()),
            "test" => self.test_path = Some(v.into()),
            "hidden_dim" => {
                self.model.hidden_dim = num(key, v)?;
                self.model.attn_dim = 2 * self.model.hidden_dim;
            }
            "emb_dim" => self.model.emb_dim = num(key, v)?,
            "attn_dim" => self.model.attn_dim = num(key, v)?,
            "max_len" => self.model.max_len = num(key, v)?,
            "vocab_cap" => self.vocab_cap = num(key, v)?,
            "optimizer" => self.optimizer = Some(v.parse()?),
            "learning_rate" => self.learning_rate = Some(num(key, v)?),
            "eval_every" => self.eval_every = Some(num(key, v)?),
            "max_iterations" => self.max_iterations = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "max_grad_norm" => self.max_grad_norm = num(key, v)?,
            "batch_size" => self.batch_size = num(key, v)?,
            "val_beam" => self.val_beam = num(key, v)?,
            "test_beam" => self.test_beam = num(key, v)?,
            "checkpoint" => self.checkpoint = v.into(),
            "init_checkpoint" => self.init_checkpoint = Some(v.into()),
            "records" => self.records = Some(v.into()),
            other => return Err(Error::config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }
}
