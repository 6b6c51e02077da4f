//! The unified online-learning step.
//!
//! At every target position two coins decide whether the decoder is fed the
//! ground-truth token or its own decoded token (rate α), and whether the
//! log-likelihood term is taken on the ground truth or on the decoded token
//! (rate β). The summed log-likelihood is weighted by a trajectory reward and
//! ascended. MLE, REINFORCE (and its GTI/SO/SIO variants) and DAgger are all
//! points in this (α, β, decode, reward) space; see [`preset_by_name`].

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{EncodedExample, START, STOP};
use crate::decoding::{argmax_token, sample_token};
use crate::diffcore::{clip_gradients, Gradients, NodeId, Tape};
use crate::error::{Error, Result};
use crate::metrics::reward_rouge2;
use crate::model::{self, ParameterStore};
use crate::optim::Optimizer;
use crate::schedule::ScheduleSpec;

/// Global gradient-norm ceiling used in every phase.
pub const MAX_GRAD_NORM: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    /// Draw from the step distribution.
    Sample,
    /// Take the argmax.
    Greedy,
}

impl DecodeMode {
    fn pick<R: Rng + ?Sized>(&self, dist: &[f64], rng: &mut R) -> usize {
        match self {
            DecodeMode::Sample => sample_token(dist, rng),
            DecodeMode::Greedy => argmax_token(dist),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardMode {
    /// r = 1; the loss targets are the ground truth.
    Unit,
    /// ROUGE-2 F1 minus the mean over the cohort of sampled rollouts.
    Rouge2Baseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PresetName {
    Mle,
    Reinforce,
    ReinforceGti,
    ReinforceSo,
    ReinforceSio,
    Dagger,
    DaggerStar,
}

impl PresetName {
    pub const ALL: [PresetName; 7] = [
        PresetName::Mle,
        PresetName::Reinforce,
        PresetName::ReinforceGti,
        PresetName::ReinforceSo,
        PresetName::ReinforceSio,
        PresetName::Dagger,
        PresetName::DaggerStar,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PresetName::Mle => "MLE",
            PresetName::Reinforce => "REINFORCE",
            PresetName::ReinforceGti => "REINFORCE-GTI",
            PresetName::ReinforceSo => "REINFORCE-SO",
            PresetName::ReinforceSio => "REINFORCE-SIO",
            PresetName::Dagger => "DAGGER",
            PresetName::DaggerStar => "DAGGER*",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == upper)
            .ok_or_else(|| Error::config(format!("unknown preset {s:?}")))
    }
}

/// Which dataset's tuned DAGGER* rate to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DatasetProfile {
    #[default]
    Quora,
    Twitter,
}

impl FromStr for DatasetProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "quora" => Ok(DatasetProfile::Quora),
            "twitter" => Ok(DatasetProfile::Twitter),
            other => Err(Error::config(format!("unknown dataset profile {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlgorithmPreset {
    pub name: PresetName,
    pub alpha: ScheduleSpec,
    pub beta: ScheduleSpec,
    pub decode: DecodeMode,
    pub reward: RewardMode,
    pub n_samples: usize,
}

/// Exponential α decay used by DAGGER and REINFORCE-SIO.
pub const ALPHA_DECAY_K: f64 = 0.9999;
/// Inverse-sigmoid β decay used by REINFORCE-SO and REINFORCE-SIO.
pub const BETA_DECAY_K: f64 = 3000.0;
/// Cohort size for the ROUGE-2 baseline.
pub const BASELINE_SAMPLES: usize = 4;

pub fn preset(name: PresetName, profile: DatasetProfile) -> AlgorithmPreset {
    let c = ScheduleSpec::constant;
    let alpha_decay = ScheduleSpec::exp_decay(ALPHA_DECAY_K);
    let beta_decay = ScheduleSpec::inv_sigmoid(BETA_DECAY_K);
    let rl = |alpha, beta| AlgorithmPreset {
        name,
        alpha,
        beta,
        decode: DecodeMode::Sample,
        reward: RewardMode::Rouge2Baseline,
        n_samples: BASELINE_SAMPLES,
    };
    let il = |alpha, decode| AlgorithmPreset {
        name,
        alpha,
        beta: c(1.0),
        decode,
        reward: RewardMode::Unit,
        n_samples: 1,
    };
    match name {
        PresetName::Mle => il(c(1.0), DecodeMode::Sample),
        PresetName::Reinforce => rl(c(0.0), c(0.0)),
        PresetName::ReinforceGti => rl(c(1.0), c(0.0)),
        PresetName::ReinforceSo => rl(c(1.0), beta_decay),
        PresetName::ReinforceSio => rl(alpha_decay, beta_decay),
        PresetName::Dagger => il(alpha_decay, DecodeMode::Greedy),
        PresetName::DaggerStar => {
            let a = match profile {
                DatasetProfile::Quora => 0.5,
                DatasetProfile::Twitter => 0.2,
            };
            il(c(a), DecodeMode::Greedy)
        }
    }
}

pub fn preset_by_name(name: &str, profile: DatasetProfile) -> Result<AlgorithmPreset> {
    Ok(preset(name.parse()?, profile))
}

impl AlgorithmPreset {
    pub fn with_alpha(mut self, alpha: ScheduleSpec) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_beta(mut self, beta: ScheduleSpec) -> Self {
        self.beta = beta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.alpha.validate()?;
        self.beta.validate()?;
        if self.n_samples == 0 {
            return Err(Error::config("preset needs at least one sample"));
        }
        Ok(())
    }
}

/// Separate random streams for the α/β coins and for sampling-mode decoding.
///
/// The decode stream of `RolloutRng::new(seed)` is exactly
/// `ChaCha8Rng::seed_from_u64(seed)`, so a rollout with α = β = 0 draws the
/// same tokens as [`crate::decoding::sample_decode`] under that seed.
pub struct RolloutRng {
    pub coins: ChaCha8Rng,
    pub decode: ChaCha8Rng,
}

impl RolloutRng {
    pub fn new(seed: u64) -> Self {
        let mut coins = ChaCha8Rng::seed_from_u64(seed);
        coins.set_stream(1);
        RolloutRng {
            coins,
            decode: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream `index` of a step seed; sample `n` of a cohort uses index `n`.
    pub fn for_sample(step_seed: u64, index: usize) -> Self {
        let mut coins = ChaCha8Rng::seed_from_u64(step_seed);
        coins.set_stream(2 * index as u64 + 1);
        let mut decode = ChaCha8Rng::seed_from_u64(step_seed);
        decode.set_stream(2 * index as u64);
        RolloutRng { coins, decode }
    }
}

/// Per-step record of one rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    /// Decoder input at each step (START first).
    pub inputs: Vec<usize>,
    /// Decoded token ŷ_t at each step.
    pub decoded: Vec<usize>,
    /// Loss target ỹ_t at each step.
    pub targets: Vec<usize>,
    /// log π(ỹ_t | h_t), floored.
    pub log_probs: Vec<f64>,
}

impl StepTrace {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_probs.iter().sum()
    }

    /// Loss-target sequence cut at (and excluding) the first STOP.
    pub fn reward_tokens(&self) -> &[usize] {
        let end = self
            .targets
            .iter()
            .position(|&t| t == STOP)
            .unwrap_or(self.targets.len());
        &self.targets[..end]
    }
}

/// Unrolls the decoder on `tape` and returns the trace plus the node holding
/// Σ_t log π(ỹ_t | h_t).
pub fn rollout_on_tape(
    tape: &mut Tape<'_>,
    config: &model::ModelConfig,
    example: &EncodedExample,
    alpha: f64,
    beta: f64,
    decode: DecodeMode,
    rng: &mut RolloutRng,
) -> Result<(StepTrace, NodeId)> {
    if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&beta) {
        return Err(Error::contract(format!(
            "schedule rates must lie in [0,1], got alpha={alpha} beta={beta}"
        )));
    }
    let truth = &example.tgt_ext_ids;
    let enc = model::encode_nodes(tape, config, &example.src_ids)?;
    let mut state = enc.init;
    let mut trace = StepTrace {
        inputs: Vec::with_capacity(truth.len()),
        decoded: Vec::with_capacity(truth.len()),
        targets: Vec::with_capacity(truth.len()),
        log_probs: Vec::with_capacity(truth.len()),
    };
    let mut total: Option<NodeId> = None;
    for t in 0..truth.len() {
        let p1: f64 = rng.coins.gen();
        let p2: f64 = rng.coins.gen();
        let input = if t == 0 {
            START
        } else if p1 < alpha {
            truth[t - 1]
        } else {
            trace.decoded[t - 1]
        };
        let step = model::step_nodes(tape, config, &state, input, &enc, &example.src_ext_ids)?;
        let decoded = decode.pick(tape.value(step.dist).data(), &mut rng.decode);
        let target = if p2 < beta { truth[t] } else { decoded };
        let lp = model::log_prob_node(tape, step.dist, target)?;
        trace.inputs.push(input);
        trace.decoded.push(decoded);
        trace.targets.push(target);
        trace.log_probs.push(tape.value(lp).item());
        total = Some(match total {
            None => lp,
            Some(acc) => tape.add(acc, lp)?,
        });
        state = step.state;
    }
    let total = total.ok_or_else(|| Error::contract("rollout: empty target"))?;
    Ok((trace, total))
}

/// One rollout of the online-learning loop, values only.
pub fn rollout(
    params: &ParameterStore,
    example: &EncodedExample,
    alpha: f64,
    beta: f64,
    decode: DecodeMode,
    rng: &mut RolloutRng,
) -> Result<StepTrace> {
    let mut tape = Tape::new(params.values());
    rollout_on_tape(&mut tape, params.config(), example, alpha, beta, decode, rng).map(|r| r.0)
}

/// Rewards of `scores` after subtracting their mean.
pub fn centered_rewards(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::contract("baseline reward needs a non-empty cohort"));
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(scores.iter().map(|s| s - mean).collect())
}

/// Reward of `trace`; in baseline mode `cohort` must contain it.
pub fn compute_reward(
    trace: &StepTrace,
    example: &EncodedExample,
    mode: RewardMode,
    cohort: &[StepTrace],
) -> Result<f64> {
    match mode {
        RewardMode::Unit => Ok(1.0),
        RewardMode::Rouge2Baseline => {
            if cohort.is_empty() {
                return Err(Error::contract("baseline reward needs a non-empty cohort"));
            }
            let reference = example.reference_ids();
            let mean = cohort
                .iter()
                .map(|c| reward_rouge2(c.reward_tokens(), reference))
                .sum::<f64>()
                / cohort.len() as f64;
            Ok(reward_rouge2(trace.reward_tokens(), reference) - mean)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub iteration: u64,
    pub preset: PresetName,
    pub alpha: f64,
    pub beta: f64,
    /// Mean negative log-likelihood of the loss targets over the rollouts.
    pub loss: f64,
    /// Mean ROUGE-2 of the rollouts (1 for unit-reward presets).
    pub mean_reward: f64,
    /// Reward actually multiplied into each rollout's gradient.
    pub rewards: Vec<f64>,
    pub grad_norm: f64,
}

impl StepDiagnostics {
    pub const CSV_HEADER: &'static str = "iter,preset,alpha,beta,loss,mean_reward";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            self.iteration, self.preset, self.alpha, self.beta, self.loss, self.mean_reward
        )
    }
}

/// Runs one rollout on a fresh tape over `params`.
fn rollout_tape<'p>(
    params: &'p ParameterStore,
    example: &EncodedExample,
    alpha: f64,
    beta: f64,
    decode: DecodeMode,
    rng: &mut RolloutRng,
) -> Result<(StepTrace, Tape<'p>, NodeId)> {
    let mut tape = Tape::new(params.values());
    let (trace, total) = rollout_on_tape(&mut tape, params.config(), example, alpha, beta, decode, rng)?;
    Ok((trace, tape, total))
}

/// Clips and applies a gradient. An exactly-zero gradient is a no-op, so
/// optimizer moments are left untouched as well.
pub fn apply_gradients(
    params: &mut ParameterStore,
    optimizer: &mut Optimizer,
    grads: Gradients,
    max_grad_norm: f64,
) -> Result<f64> {
    let norm = grads.global_norm();
    if grads.is_zero() {
        return Ok(0.0);
    }
    let grads = clip_gradients(grads, max_grad_norm)?;
    optimizer.step(params.values_mut(), &grads)?;
    Ok(norm)
}

/// Gradient of the descent objective `−r · Σ_t log π(ỹ_t | h_t)` for one
/// example, averaged over the cohort in baseline mode. `rng` supplies one
/// step seed; cohort member `n` uses stream `n` of it.
pub fn step_gradients(
    params: &ParameterStore,
    example: &EncodedExample,
    preset: &AlgorithmPreset,
    iteration: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(Gradients, StepDiagnostics)> {
    let alpha = preset.alpha.rate(iteration)?;
    let beta = preset.beta.rate(iteration)?;
    let step_seed: u64 = rng.gen();
    let (grads, loss, mean_reward, rewards) = match preset.reward {
        RewardMode::Unit => {
            let mut r = RolloutRng::for_sample(step_seed, 0);
            let (trace, mut tape, total) = rollout_tape(params, example, alpha, beta, preset.decode, &mut r)?;
            let objective = tape.affine(total, -1.0, 0.0);
            let grads = tape.backward(objective)?;
            (grads, -trace.log_likelihood(), 1.0, vec![1.0])
        }
        RewardMode::Rouge2Baseline => {
            let n = preset.n_samples;
            let mut rollouts = Vec::with_capacity(n);
            for i in 0..n {
                let mut r = RolloutRng::for_sample(step_seed, i);
                rollouts.push(rollout_tape(params, example, alpha, beta, preset.decode, &mut r)?);
            }
            let reference = example.reference_ids();
            let scores: Vec<f64> = rollouts
                .iter()
                .map(|(t, _, _)| reward_rouge2(t.reward_tokens(), reference))
                .collect();
            let rewards = centered_rewards(&scores)?;
            let mut grads = Gradients::zeros_like(params.values());
            let mut loss = 0.0;
            for ((trace, mut tape, total), &r) in rollouts.into_iter().zip(&rewards) {
                loss -= trace.log_likelihood();
                if r == 0.0 {
                    continue;
                }
                let objective = tape.affine(total, -r, 0.0);
                grads.add_scaled(&tape.backward(objective)?, 1.0 / n as f64);
            }
            let mean_score = scores.iter().sum::<f64>() / n as f64;
            (grads, loss / n as f64, mean_score, rewards)
        }
    };
    let diag = StepDiagnostics {
        iteration,
        preset: preset.name,
        alpha,
        beta,
        loss,
        mean_reward,
        rewards,
        grad_norm: grads.global_norm(),
    };
    Ok((grads, diag))
}

/// One online-learning update on a single example: rollout(s), reward
/// weighting, clipping, optimizer step.
pub fn train_step(
    params: &mut ParameterStore,
    optimizer: &mut Optimizer,
    example: &EncodedExample,
    preset: &AlgorithmPreset,
    iteration: u64,
    rng: &mut ChaCha8Rng,
    max_grad_norm: f64,
) -> Result<StepDiagnostics> {
    let (grads, diag) = step_gradients(params, example, preset, iteration, rng)?;
    apply_gradients(params, optimizer, grads, max_grad_norm)?;
    Ok(diag)
}

/// Replays a recorded trace with its inputs and loss targets held fixed and
/// returns Σ_t log π(ỹ_t | h_t). Used to differentiate the objective
/// numerically.
pub fn replay_log_likelihood(params: &ParameterStore, example: &EncodedExample, trace: &StepTrace) -> Result<f64> {
    let config = params.config();
    let mut tape = Tape::new(params.values());
    let enc = model::encode_nodes(&mut tape, config, &example.src_ids)?;
    let mut state = enc.init;
    let mut total = 0.0;
    for (&input, &target) in trace.inputs.iter().zip(&trace.targets) {
        let step = model::step_nodes(&mut tape, config, &state, input, &enc, &example.src_ext_ids)?;
        let lp = model::log_prob_node(&mut tape, step.dist, target)?;
        total += tape.value(lp).item();
        state = step.state;
    }
    Ok(total)
}

/// Teacher-forced negative log-likelihood `−Σ_t log π(y_t | y_<t, x)`, built
/// directly from the model without the schedule machinery.
pub fn teacher_forcing_nll_on_tape(
    tape: &mut Tape<'_>,
    config: &model::ModelConfig,
    example: &EncodedExample,
) -> Result<NodeId> {
    let truth = &example.tgt_ext_ids;
    let enc = model::encode_nodes(tape, config, &example.src_ids)?;
    let mut state = enc.init;
    let mut total: Option<NodeId> = None;
    for (t, &target) in truth.iter().enumerate() {
        let input = if t == 0 { START } else { truth[t - 1] };
        let step = model::step_nodes(tape, config, &state, input, &enc, &example.src_ext_ids)?;
        let lp = model::log_prob_node(tape, step.dist, target)?;
        total = Some(match total {
            None => lp,
            Some(acc) => tape.add(acc, lp)?,
        });
        state = step.state;
    }
    let total = total.ok_or_else(|| Error::contract("teacher forcing: empty target"))?;
    Ok(tape.neg(total))
}

pub fn teacher_forcing_nll(params: &ParameterStore, example: &EncodedExample) -> Result<f64> {
    let mut tape = Tape::new(params.values());
    let nll = teacher_forcing_nll_on_tape(&mut tape, params.config(), example)?;
    Ok(tape.value(nll).item())
}

/// Plain cross-entropy update under teacher forcing.
pub fn supervised_step(
    params: &mut ParameterStore,
    optimizer: &mut Optimizer,
    example: &EncodedExample,
    max_grad_norm: f64,
) -> Result<f64> {
    let (grads, nll) = {
        let mut tape = Tape::new(params.values());
        let nll = teacher_forcing_nll_on_tape(&mut tape, params.config(), example)?;
        (tape.backward(nll)?, tape.value(nll).item())
    };
    apply_gradients(params, optimizer, grads, max_grad_norm)?;
    Ok(nll)
}
