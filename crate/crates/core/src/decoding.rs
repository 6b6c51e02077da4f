//! Test-time generation: greedy, ancestral sampling, and beam search.
//!
//! Decoders are written against [`StepModel`] so they can run on the
//! pointer-generator ([`PointerScorer`]) or on hand-built distribution tables
//! in tests. PAD and START are never emitted.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;

use crate::corpus::{EncodedExample, PAD, START, STOP};
use crate::error::{Error, Result};
use crate::model::{self, DecoderState, EncoderStates, ParameterStore, LOG_EPS};

/// An autoregressive next-token distribution.
pub trait StepModel {
    type State: Clone;

    fn initial_state(&self) -> Self::State;

    /// Distribution over the (extended) vocabulary after feeding `input`.
    fn step(&self, state: &Self::State, input: usize) -> Result<(Self::State, Vec<f64>)>;
}

/// The pointer-generator bound to one encoded source sentence.
pub struct PointerScorer<'a> {
    params: &'a ParameterStore,
    src_ext_ids: &'a [usize],
    enc: EncoderStates,
}

impl<'a> PointerScorer<'a> {
    pub fn new(params: &'a ParameterStore, example: &'a EncodedExample) -> Result<Self> {
        let enc = model::encode_source(params, &example.src_ids)?;
        Ok(PointerScorer {
            params,
            src_ext_ids: &example.src_ext_ids,
            enc,
        })
    }
}

impl StepModel for PointerScorer<'_> {
    type State = DecoderState;

    fn initial_state(&self) -> DecoderState {
        self.enc.init.clone()
    }

    fn step(&self, state: &DecoderState, input: usize) -> Result<(DecoderState, Vec<f64>)> {
        let out = model::decoder_step(self.params, state, input, &self.enc, self.src_ext_ids)?;
        Ok((out.state, out.dist))
    }
}

fn emittable(id: usize) -> bool {
    id != PAD && id != START
}

/// Highest-probability emittable id; ties go to the lowest id.
pub fn argmax_token(dist: &[f64]) -> usize {
    let mut best = None;
    for (id, &p) in dist.iter().enumerate() {
        if !emittable(id) {
            continue;
        }
        match best {
            Some((_, bp)) if p <= bp => {}
            _ => best = Some((id, p)),
        }
    }
    best.map(|b| b.0).unwrap_or(STOP)
}

/// Inverse-CDF draw over emittable ids.
pub fn sample_token<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    let total: f64 = dist
        .iter()
        .enumerate()
        .filter(|(id, _)| emittable(*id))
        .map(|(_, p)| p)
        .sum();
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = STOP;
    for (id, &p) in dist.iter().enumerate() {
        if !emittable(id) || p <= 0.0 {
            continue;
        }
        acc += p;
        last = id;
        if u < acc {
            return id;
        }
    }
    last
}

fn run_decoder<M: StepModel>(model: &M, max_len: usize, mut pick: impl FnMut(&[f64]) -> usize) -> Result<Vec<usize>> {
    let mut state = model.initial_state();
    let mut input = START;
    let mut out = Vec::new();
    for _ in 0..max_len {
        let (next, dist) = model.step(&state, input)?;
        let tok = pick(&dist);
        if tok == STOP {
            break;
        }
        out.push(tok);
        state = next;
        input = tok;
    }
    Ok(out)
}

/// Feeds back its own argmax. Output excludes STOP.
pub fn greedy_decode<M: StepModel>(model: &M, max_len: usize) -> Result<Vec<usize>> {
    run_decoder(model, max_len, argmax_token)
}

/// Ancestral sampling. Output excludes STOP.
pub fn sample_decode<M: StepModel, R: Rng + ?Sized>(model: &M, max_len: usize, rng: &mut R) -> Result<Vec<usize>> {
    run_decoder(model, max_len, |d| sample_token(d, rng))
}

#[derive(Clone, Debug)]
pub struct Hypothesis<S> {
    /// Emitted ids, including a final STOP when finished.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub state: S,
    pub finished: bool,
}

impl<S> Hypothesis<S> {
    /// Tokens without the closing STOP.
    pub fn output(&self) -> &[usize] {
        match self.tokens.split_last() {
            Some((&STOP, rest)) => rest,
            _ => &self.tokens,
        }
    }

    fn ranking_score(&self, length_normalize: bool) -> f64 {
        if length_normalize && !self.tokens.is_empty() {
            self.log_prob / self.tokens.len() as f64
        } else {
            self.log_prob
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamConfig {
    pub beam: usize,
    pub max_len: usize,
    /// Rank finished hypotheses by mean rather than summed log-probability.
    pub length_normalize: bool,
}

impl BeamConfig {
    pub fn new(beam: usize, max_len: usize) -> Self {
        BeamConfig {
            beam,
            max_len,
            length_normalize: false,
        }
    }
}

/// Beam search over summed `log(p + ε)`, returning the best hypothesis.
pub fn beam_search_hypothesis<M: StepModel>(model: &M, config: BeamConfig) -> Result<Hypothesis<M::State>> {
    if config.beam < 1 {
        return Err(Error::config("beam size must be at least 1"));
    }
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: model.initial_state(),
        finished: false,
    }];
    let mut finished: Vec<Hypothesis<M::State>> = Vec::new();

    for _ in 0..config.max_len {
        if live.is_empty() || finished.len() >= config.beam {
            break;
        }
        // (score, token, parent)
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        let mut next_states = Vec::with_capacity(live.len());
        for (parent, hyp) in live.iter().enumerate() {
            let input = hyp.tokens.last().copied().unwrap_or(START);
            let (state, dist) = model.step(&hyp.state, input)?;
            for (id, &p) in dist.iter().enumerate() {
                if emittable(id) {
                    candidates.push((hyp.log_prob + (p + LOG_EPS).ln(), id, parent));
                }
            }
            next_states.push(state);
        }
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        candidates.truncate(config.beam);
        let mut next_live = Vec::with_capacity(config.beam);
        for (score, id, parent) in candidates {
            let mut tokens = live[parent].tokens.clone();
            tokens.push(id);
            let hyp = Hypothesis {
                tokens,
                log_prob: score,
                state: next_states[parent].clone(),
                finished: id == STOP,
            };
            if hyp.finished {
                finished.push(hyp);
            } else {
                next_live.push(hyp);
            }
        }
        live = next_live;
    }

    let pool = if finished.is_empty() { live } else { finished };
    let norm = config.length_normalize;
    pool.into_iter()
        .reduce(|best, h| {
            if h.ranking_score(norm) > best.ranking_score(norm) {
                h
            } else {
                best
            }
        })
        .ok_or_else(|| Error::contract("beam search produced no hypotheses"))
}

/// Beam search; output excludes STOP.
pub fn beam_search<M: StepModel>(model: &M, beam: usize, max_len: usize) -> Result<Vec<usize>> {
    beam_search_hypothesis(model, BeamConfig::new(beam, max_len)).map(|h| h.output().to_vec())
}

/// Test-time decoding strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decoder {
    Greedy,
    Beam(usize),
}

impl Decoder {
    /// Beam 1 is the greedy decoder.
    pub fn from_beam(beam: usize) -> Self {
        if beam <= 1 {
            Decoder::Greedy
        } else {
            Decoder::Beam(beam)
        }
    }

    pub fn decode(&self, params: &ParameterStore, example: &EncodedExample, max_len: usize) -> Result<Vec<usize>> {
        let scorer = PointerScorer::new(params, example)?;
        match *self {
            Decoder::Greedy => greedy_decode(&scorer, max_len),
            Decoder::Beam(b) => beam_search(&scorer, b, max_len),
        }
    }
}

/// Decodes every example over a frozen snapshot, in parallel; output order
/// matches input order.
pub fn decode_all(
    params: &ParameterStore,
    examples: &[EncodedExample],
    decoder: Decoder,
    max_len: usize,
) -> Result<Vec<Vec<usize>>> {
    examples
        .par_iter()
        .map(|ex| decoder.decode(params, ex, max_len))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Fixed distribution per step index.
    struct Table(Vec<Vec<f64>>);

    impl StepModel for Table {
        type State = usize;

        fn initial_state(&self) -> usize {
            0
        }

        fn step(&self, t: &usize, _input: usize) -> Result<(usize, Vec<f64>)> {
            let row = self.0[(*t).min(self.0.len() - 1)].clone();
            Ok((t + 1, row))
        }
    }

    fn point_mass(v: usize, seq: &[usize]) -> Table {
        let mut rows: Vec<Vec<f64>> = seq
            .iter()
            .map(|&id| {
                let mut r = vec![0.0; v];
                r[id] = 1.0;
                r
            })
            .collect();
        let mut stop = vec![0.0; v];
        stop[STOP] = 1.0;
        rows.push(stop);
        Table(rows)
    }

    #[test]
    fn point_mass_is_reproduced_by_every_decoder() {
        let m = point_mass(8, &[4, 6, 5, 7]);
        assert_eq!(greedy_decode(&m, 20).unwrap(), vec![4, 6, 5, 7]);
        assert_eq!(beam_search(&m, 8, 20).unwrap(), vec![4, 6, 5, 7]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_decode(&m, 20, &mut rng).unwrap(), vec![4, 6, 5, 7]);
    }

    #[test]
    fn immediate_stop_gives_empty_output() {
        let m = point_mass(6, &[]);
        assert!(greedy_decode(&m, 20).unwrap().is_empty());
        assert!(beam_search(&m, 3, 20).unwrap().is_empty());
    }

    #[test]
    fn uniform_step_never_emits_pad() {
        // PAD (0) and START (2) are masked, so the lowest emittable id wins.
        let m = Table(vec![vec![0.125; 8]]);
        let out = greedy_decode(&m, 1).unwrap();
        assert_eq!(out, vec![1]);
    }

    #[test]
    fn max_len_bounds_output() {
        let m = Table(vec![vec![0.0, 0.0, 0.0, 0.1, 0.9]]);
        assert_eq!(greedy_decode(&m, 3).unwrap(), vec![4, 4, 4]);
        assert_eq!(beam_search(&m, 1, 3).unwrap(), vec![4, 4, 4]);
        // Beam 2 keeps the STOP at step one, and finished hypotheses win.
        assert!(beam_search(&m, 2, 3).unwrap().is_empty());
    }

    #[test]
    fn sampling_follows_inverse_cdf() {
        // mass 0.5 on STOP (id 3) then 0.5 on id 4; draws below 0.5 hit STOP first.
        let dist = vec![0.0, 0.0, 0.0, 0.5, 0.5];
        let mut seed = 0;
        loop {
            let mut probe = ChaCha8Rng::seed_from_u64(seed);
            if probe.gen::<f64>() >= 0.5 {
                break;
            }
            seed += 1;
        }
        let m = Table(vec![dist]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = sample_decode(&m, 1, &mut rng).unwrap();
        assert_eq!(out, vec![4]);
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(
            sample_decode(&m, 5, &mut a).unwrap(),
            sample_decode(&m, 5, &mut b).unwrap()
        );
    }

    #[test]
    fn zero_beam_is_config_error() {
        let m = point_mass(6, &[4]);
        assert!(matches!(beam_search(&m, 0, 5), Err(Error::Config(_))));
    }

    #[test]
    fn decoder_from_beam_one_is_greedy() {
        assert_eq!(Decoder::from_beam(1), Decoder::Greedy);
        assert_eq!(Decoder::from_beam(8), Decoder::Beam(8));
    }
}
