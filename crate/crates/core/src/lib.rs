//! Sequence-to-sequence training laboratory.
//!
//! A pointer-generator encoder-decoder trained with a single online-learning
//! step parameterised by two schedule rates: α picks the decoder input
//! (ground truth vs. the model's own decoded token) and β picks the loss
//! target. Maximum likelihood, REINFORCE and its ground-truth-input /
//! sampled-output variants, and DAgger (scheduled sampling) are presets of
//! that step. Alongside it: a tape-based autodiff engine, greedy / sampling /
//! beam decoders, ROUGE and BLEU metrics, and the pre-train → fine-tune →
//! evaluate pipeline with schedule sweeps.

pub mod corpus;
pub mod decoding;
pub mod diffcore;
pub mod error;
pub mod gradcheck;
pub mod learner;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod schedule;
pub mod trainer;

pub use corpus::{EncodedExample, SentencePair, Vocabulary};
pub use diffcore::{Array, Gradients, ParamId, Tape};
pub use error::{Error, Result};
pub use learner::{AlgorithmPreset, DatasetProfile, DecodeMode, PresetName, RewardMode, StepTrace};
pub use metrics::MetricReport;
pub use model::{ModelConfig, ParameterStore};
pub use optim::{Optimizer, OptimizerKind, OptimizerSpec};
pub use schedule::{ScheduleKind, ScheduleSpec};
pub use trainer::{RunRecord, TrainConfig};
