//! Pre-training, fine-tuning, evaluation and sweeps.

mod config;
pub mod sweep;
pub mod synth;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{build_vocab, decode_tokens, encode, load_pairs, EncodedExample, SentencePair, Vocabulary};
use crate::decoding::{decode_all, Decoder};
use crate::diffcore::Gradients;
use crate::error::{Error, Result};
use crate::learner::{apply_gradients, preset, step_gradients, teacher_forcing_nll, AlgorithmPreset, PresetName};
use crate::metrics::{evaluate_corpus, MetricReport};
use crate::model::ParameterStore;
use crate::optim::Optimizer;

pub use config::{Phase, TrainConfig};
pub use sweep::{parse_grid, sweep, sweep_csv, GridPoint, SweepRow, SWEEP_HEADER};
pub use synth::{synth_corpus, synth_with_table, SynonymTable, SynthTask};

/// One validation point of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub iteration: u64,
    /// Mean training loss since the previous record; absent at iteration 0.
    pub train_loss: Option<f64>,
    pub val_loss: f64,
    /// Validation metrics; only computed while fine-tuning.
    pub val_report: Option<MetricReport>,
    /// Seconds since the run started.
    pub wall_clock: f64,
}

impl RunRecord {
    pub const CSV_HEADER: &'static str = "iteration,train_loss,val_loss,rouge1,rouge2,bleu2,avg,wall_clock";

    pub fn csv_row(&self) -> String {
        format!("{},{:.3}", self.csv_row_without_clock(), self.wall_clock)
    }

    /// Row without the timing column, for run-to-run comparisons.
    pub fn csv_row_without_clock(&self) -> String {
        let train = self.train_loss.map(|l| format!("{l:.6}")).unwrap_or_default();
        let report = self
            .val_report
            .map(|r| r.csv_row())
            .unwrap_or_else(|| ",,,".to_string());
        format!("{},{},{:.6},{}", self.iteration, train, self.val_loss, report)
    }
}

pub fn records_csv(records: &[RunRecord]) -> String {
    let mut s = format!("{}\n", RunRecord::CSV_HEADER);
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Result of a training run: the best parameters seen and the trajectory.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub params: ParameterStore,
    pub vocab: Vocabulary,
    pub records: Vec<RunRecord>,
    pub best_iteration: u64,
}

/// Where the vocabulary of `checkpoint` is stored.
pub fn vocab_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".vocab");
    PathBuf::from(s)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Saves parameters and their vocabulary side by side.
pub fn save_model(checkpoint: &Path, params: &ParameterStore, vocab: &Vocabulary) -> Result<()> {
    params.save(checkpoint)?;
    vocab.save(vocab_path(checkpoint))
}

pub fn load_model(checkpoint: &Path) -> Result<(ParameterStore, Vocabulary)> {
    let params = ParameterStore::load(checkpoint)?;
    let vocab = Vocabulary::load(vocab_path(checkpoint))?;
    if vocab.size() != params.config().vocab_size {
        return Err(Error::Format(format!(
            "vocabulary has {} entries but the checkpoint expects {}",
            vocab.size(),
            params.config().vocab_size
        )));
    }
    Ok((params, vocab))
}

fn encode_all(pairs: &[SentencePair], vocab: &Vocabulary, max_len: usize) -> Vec<EncodedExample> {
    pairs.iter().map(|p| encode(p, vocab, max_len)).collect()
}

/// Mean teacher-forcing loss per example.
pub fn validation_loss(params: &ParameterStore, examples: &[EncodedExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::contract("validation set is empty"));
    }
    let losses: Vec<f64> = examples
        .par_iter()
        .map(|ex| teacher_forcing_nll(params, ex))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Detokenized outputs for each source.
pub fn generate(
    params: &ParameterStore,
    vocab: &Vocabulary,
    sources: &[Vec<String>],
    beam: usize,
) -> Result<Vec<Vec<String>>> {
    let max_len = params.config().max_len;
    let examples: Vec<EncodedExample> = sources
        .iter()
        .map(|s| {
            let pair = SentencePair {
                source: s.clone(),
                target: Vec::new(),
            };
            encode(&pair, vocab, max_len)
        })
        .collect();
    let decoded = decode_all(params, &examples, Decoder::from_beam(beam), max_len)?;
    decoded
        .iter()
        .zip(&examples)
        .map(|(ids, ex)| decode_tokens(ids, vocab, &ex.src_oovs))
        .collect()
}

/// Scores detokenized outputs against the pair targets.
pub fn score_outputs(outputs: &[Vec<String>], pairs: &[SentencePair]) -> Result<MetricReport> {
    let refs: Vec<&[String]> = pairs.iter().map(|p| p.target.as_slice()).collect();
    evaluate_corpus(outputs, &refs)
}

pub fn evaluate_params(
    params: &ParameterStore,
    vocab: &Vocabulary,
    pairs: &[SentencePair],
    beam: usize,
) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::contract("evaluate: no test pairs"));
    }
    let sources: Vec<Vec<String>> = pairs.iter().map(|p| p.source.clone()).collect();
    let outputs = generate(params, vocab, &sources, beam)?;
    score_outputs(&outputs, pairs)
}

/// Beam-decodes every test source with the stored model.
pub fn evaluate(checkpoint: &Path, pairs: &[SentencePair], beam: usize) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::contract("evaluate: no test pairs"));
    }
    let (params, vocab) = load_model(checkpoint)?;
    evaluate_params(&params, &vocab, pairs, beam)
}

struct Validation {
    loss: f64,
    report: Option<MetricReport>,
    /// Larger is better.
    score: f64,
}

/// The shared online-learning loop. `validate` runs at iteration 0, every
/// `eval_every` iterations, and after the last iteration.
fn run_loop(
    config: &TrainConfig,
    algorithm: &AlgorithmPreset,
    mut params: ParameterStore,
    vocab: Vocabulary,
    train: &[EncodedExample],
    validate: &dyn Fn(&ParameterStore) -> Result<Validation>,
) -> Result<RunOutcome> {
    config.validate()?;
    algorithm.validate()?;
    if train.is_empty() && config.max_iterations > 0 {
        return Err(Error::contract("training set is empty"));
    }
    let start = Instant::now();
    let mut optimizer = Optimizer::new(config.optimizer_spec(), params.values())?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut step_rng = ChaCha8Rng::seed_from_u64(config.seed);
    step_rng.set_stream(1);

    let first = validate(&params)?;
    let mut records = vec![RunRecord {
        iteration: 0,
        train_loss: None,
        val_loss: first.loss,
        val_report: first.report,
        wall_clock: start.elapsed().as_secs_f64(),
    }];
    let mut best = params.clone();
    let mut best_score = first.score;
    let mut best_iteration = 0;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();
    let (mut loss_sum, mut loss_count) = (0.0, 0usize);
    let eval_every = config.eval_every();
    for iteration in 1..=config.max_iterations {
        let schedule_iter = iteration - 1;
        let mut grads: Option<Gradients> = None;
        for _ in 0..config.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut order_rng);
                cursor = 0;
            }
            let ex = &train[order[cursor]];
            cursor += 1;
            let (g, diag) = step_gradients(&params, ex, algorithm, schedule_iter, &mut step_rng)?;
            loss_sum += diag.loss;
            loss_count += 1;
            grads = Some(match grads {
                None => g,
                Some(mut acc) => {
                    acc.add_scaled(&g, 1.0);
                    acc
                }
            });
        }
        let mut grads = grads.expect("batch_size >= 1");
        if config.batch_size > 1 {
            grads.scale(1.0 / config.batch_size as f64);
        }
        apply_gradients(&mut params, &mut optimizer, grads, config.max_grad_norm)?;

        if iteration % eval_every == 0 || iteration == config.max_iterations {
            let v = validate(&params)?;
            records.push(RunRecord {
                iteration,
                train_loss: Some(loss_sum / loss_count.max(1) as f64),
                val_loss: v.loss,
                val_report: v.report,
                wall_clock: start.elapsed().as_secs_f64(),
            });
            loss_sum = 0.0;
            loss_count = 0;
            if v.score > best_score {
                best_score = v.score;
                best = params.clone();
                best_iteration = iteration;
            }
        }
    }
    Ok(RunOutcome {
        params: best,
        vocab,
        records,
        best_iteration,
    })
}

/// MLE pre-training from fresh parameters. The vocabulary is built from
/// `train`; the best checkpoint has the lowest validation loss.
pub fn pretrain_on(config: &TrainConfig, train: &[SentencePair], val: &[SentencePair]) -> Result<RunOutcome> {
    let vocab = build_vocab(train, config.vocab_cap)?;
    let mut model = config.model;
    model.vocab_size = vocab.size();
    let params = ParameterStore::init(model, config.seed)?;
    let train_ex = encode_all(train, &vocab, model.max_len);
    let val_ex = encode_all(val, &vocab, model.max_len);
    let validate = |p: &ParameterStore| -> Result<Validation> {
        let loss = validation_loss(p, &val_ex)?;
        Ok(Validation {
            loss,
            report: None,
            score: -loss,
        })
    };
    let mle = preset(PresetName::Mle, config.profile);
    run_loop(config, &mle, params, vocab, &train_ex, &validate)
}

/// Fine-tunes `init` with the configured preset. The schedule iteration
/// restarts at 0; the best checkpoint has the highest validation average.
pub fn finetune_on(
    config: &TrainConfig,
    init: &ParameterStore,
    vocab: &Vocabulary,
    train: &[SentencePair],
    val: &[SentencePair],
) -> Result<RunOutcome> {
    let max_len = init.config().max_len;
    let train_ex = encode_all(train, vocab, max_len);
    let val_ex = encode_all(val, vocab, max_len);
    let validate = |p: &ParameterStore| -> Result<Validation> {
        let loss = validation_loss(p, &val_ex)?;
        let report = evaluate_params(p, vocab, val, config.val_beam)?;
        Ok(Validation {
            loss,
            report: Some(report),
            score: report.avg,
        })
    };
    run_loop(
        config,
        &config.algorithm(),
        init.clone(),
        vocab.clone(),
        &train_ex,
        &validate,
    )
}

fn load_split(path: Option<&PathBuf>, what: &str) -> Result<Vec<SentencePair>> {
    let path = path.ok_or_else(|| Error::config(format!("no {what} data path configured")))?;
    Ok(load_pairs(path, None)?.pairs)
}

fn finish(config: &TrainConfig, outcome: &RunOutcome) -> Result<PathBuf> {
    save_model(&config.checkpoint, &outcome.params, &outcome.vocab)?;
    if let Some(path) = &config.records {
        write_text(path, &records_csv(&outcome.records))?;
    }
    Ok(config.checkpoint.clone())
}

/// File-based pre-training; returns the checkpoint path.
pub fn pretrain(config: &TrainConfig) -> Result<PathBuf> {
    let train = load_split(config.train_path.as_ref(), "training")?;
    let val = load_split(config.val_path.as_ref(), "validation")?;
    let outcome = pretrain_on(config, &train, &val)?;
    finish(config, &outcome)
}

/// Loads the initial checkpoint a fine-tuning run starts from.
pub fn load_init_checkpoint(config: &TrainConfig) -> Result<(ParameterStore, Vocabulary)> {
    let path = config
        .init_checkpoint
        .as_ref()
        .ok_or_else(|| Error::config("fine-tuning needs init_checkpoint"))?;
    if !path.is_file() {
        return Err(Error::config(format!(
            "pre-trained checkpoint {} does not exist",
            path.display()
        )));
    }
    load_model(path)
}

/// File-based fine-tuning; returns the checkpoint path.
pub fn finetune(config: &TrainConfig) -> Result<PathBuf> {
    let (init, vocab) = load_init_checkpoint(config)?;
    let train = load_split(config.train_path.as_ref(), "training")?;
    let val = load_split(config.val_path.as_ref(), "validation")?;
    let outcome = finetune_on(config, &init, &vocab, &train, &val)?;
    finish(config, &outcome)
}
