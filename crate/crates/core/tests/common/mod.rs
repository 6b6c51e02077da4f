//! Independent oracles and random instances shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seqlearn::corpus::{EncodedExample, PAD, START, STOP};
use seqlearn::decoding::StepModel;
use seqlearn::model::LOG_EPS;
use seqlearn::{ModelConfig, ParameterStore, Result};

// ---------------------------------------------------------------- n-grams

fn grams<T: Clone>(tokens: &[T], n: usize) -> Vec<Vec<T>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i + n <= tokens.len() {
        out.push(tokens[i..i + n].to_vec());
        i += 1;
    }
    out
}

fn count<T: PartialEq>(list: &[Vec<T>], g: &[T]) -> usize {
    list.iter().filter(|x| x.as_slice() == g).count()
}

/// (clipped matches, candidate n-grams, reference n-grams) by linear scans.
pub fn brute_overlap<T: Clone + PartialEq>(cand: &[T], refr: &[T], n: usize) -> (usize, usize, usize) {
    let cg = grams(cand, n);
    let rg = grams(refr, n);
    let mut seen: Vec<Vec<T>> = Vec::new();
    let mut matched = 0;
    for g in &cg {
        if seen.contains(g) {
            continue;
        }
        seen.push(g.clone());
        matched += count(&cg, g).min(count(&rg, g));
    }
    (matched, cg.len(), rg.len())
}

/// (precision, recall, f1), each 0 when undefined.
pub fn brute_rouge<T: Clone + PartialEq>(cand: &[T], refr: &[T], n: usize) -> (f64, f64, f64) {
    let (m, c, r) = brute_overlap(cand, refr, n);
    let p = if c == 0 { 0.0 } else { m as f64 / c as f64 };
    let rc = if r == 0 { 0.0 } else { m as f64 / r as f64 };
    let f = if p + rc == 0.0 { 0.0 } else { 2.0 * p * rc / (p + rc) };
    (p, rc, f)
}

/// Corpus BLEU over unigrams and bigrams with the standard brevity penalty.
pub fn brute_bleu2<T: Clone + PartialEq>(cands: &[Vec<T>], refs: &[Vec<T>]) -> f64 {
    let (mut m1, mut t1, mut m2, mut t2, mut c, mut r) = (0, 0, 0, 0, 0, 0);
    for (cand, refr) in cands.iter().zip(refs) {
        let (a, b, _) = brute_overlap(cand, refr, 1);
        let (x, y, _) = brute_overlap(cand, refr, 2);
        m1 += a;
        t1 += b;
        m2 += x;
        t2 += y;
        c += cand.len();
        r += refr.len();
    }
    if m1 == 0 || m2 == 0 {
        return 0.0;
    }
    let p1 = m1 as f64 / t1 as f64;
    let p2 = m2 as f64 / t2 as f64;
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * (p1 * p2).sqrt()
}

pub fn random_corpus(rng: &mut ChaCha8Rng, size: usize, alphabet: u8, max_len: usize) -> (Vec<Vec<u8>>, Vec<Vec<u8>>) {
    let sent = |rng: &mut ChaCha8Rng| -> Vec<u8> {
        let len = rng.gen_range(0..=max_len);
        (0..len).map(|_| rng.gen_range(0..alphabet)).collect()
    };
    let mut cands = Vec::with_capacity(size);
    let mut refs = Vec::with_capacity(size);
    for _ in 0..size {
        cands.push(sent(rng));
        refs.push(sent(rng));
    }
    (cands, refs)
}

// ------------------------------------------------------------- decoding

/// A model whose next-token distribution is an arbitrary function of the
/// emitted prefix.
pub struct PrefixModel<F: Fn(&[usize]) -> Vec<f64>>(pub F);

impl<F: Fn(&[usize]) -> Vec<f64>> StepModel for PrefixModel<F> {
    type State = Vec<usize>;

    fn initial_state(&self) -> Vec<usize> {
        Vec::new()
    }

    fn step(&self, prefix: &Vec<usize>, input: usize) -> Result<(Vec<usize>, Vec<f64>)> {
        let mut next = prefix.clone();
        if input != START {
            next.push(input);
        }
        let dist = (self.0)(&next);
        Ok((next, dist))
    }
}

/// Seeded random distributions over `v` ids, keyed by the prefix.
pub fn random_prefix_model(v: usize, seed: u64) -> PrefixModel<impl Fn(&[usize]) -> Vec<f64>> {
    PrefixModel(move |prefix: &[usize]| {
        let key = prefix.iter().fold(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15), |h, &t| {
            h.wrapping_mul(1_000_003).wrapping_add(t as u64 + 1)
        });
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let w: Vec<f64> = (0..v).map(|_| rng.gen::<f64>().powi(3) + 1e-3).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    })
}

fn emittable(id: usize) -> bool {
    id != PAD && id != START
}

/// Best STOP-terminated sequence of at most `max_len` tokens by summed
/// `ln(p + ε)`, found by enumerating every sequence. Returns the tokens
/// including STOP and the score.
pub fn exhaustive_best<M: StepModel>(model: &M, max_len: usize) -> (Vec<usize>, f64) {
    fn walk<M: StepModel>(
        model: &M,
        state: &M::State,
        input: usize,
        prefix: &mut Vec<usize>,
        score: f64,
        left: usize,
        best: &mut Option<(Vec<usize>, f64)>,
    ) {
        if left == 0 {
            return;
        }
        let (next, dist) = model.step(state, input).unwrap();
        for (id, &p) in dist.iter().enumerate() {
            if !emittable(id) {
                continue;
            }
            let s = score + (p + LOG_EPS).ln();
            prefix.push(id);
            if id == STOP {
                if best.as_ref().is_none_or(|b| s > b.1) {
                    *best = Some((prefix.clone(), s));
                }
            } else {
                walk(model, &next, id, prefix, s, left - 1, best);
            }
            prefix.pop();
        }
    }
    let mut best = None;
    walk(
        model,
        &model.initial_state(),
        START,
        &mut Vec::new(),
        0.0,
        max_len,
        &mut best,
    );
    best.expect("STOP is always emittable")
}

/// Re-scores `tokens` by stepping the model.
pub fn rescore<M: StepModel>(model: &M, tokens: &[usize]) -> f64 {
    let mut state = model.initial_state();
    let mut input = START;
    let mut total = 0.0;
    for &t in tokens {
        let (next, dist) = model.step(&state, input).unwrap();
        total += (dist[t] + LOG_EPS).ln();
        state = next;
        input = t;
    }
    total
}

// -------------------------------------------------------------- models

/// A random pointer-generator over `vocab` ids and an example whose source
/// holds up to two out-of-vocabulary words.
pub fn random_instance(seed: u64, vocab: usize, hidden: usize, emb: usize) -> (ParameterStore, EncodedExample) {
    let cfg = ModelConfig::new(hidden, emb, vocab, 20);
    let params = ParameterStore::init(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let oov_slots = rng.gen_range(0..=2usize);
    let src_len = rng.gen_range(2..=8);
    let mut src_ids = Vec::new();
    let mut src_ext_ids = Vec::new();
    // OOV ids are numbered by first occurrence, as the encoder does.
    let mut seen: Vec<usize> = Vec::new();
    for _ in 0..src_len {
        if oov_slots > 0 && rng.gen_bool(0.25) {
            let slot = rng.gen_range(0..oov_slots);
            let k = match seen.iter().position(|&s| s == slot) {
                Some(k) => k,
                None => {
                    seen.push(slot);
                    seen.len() - 1
                }
            };
            src_ids.push(seqlearn::corpus::UNK);
            src_ext_ids.push(vocab + k);
        } else {
            let id = rng.gen_range(4..vocab);
            src_ids.push(id);
            src_ext_ids.push(id);
        }
    }
    let n_oov = seen.len();
    let tgt_len = rng.gen_range(1..=6);
    let mut tgt_ext_ids: Vec<usize> = (0..tgt_len)
        .map(|_| {
            if n_oov > 0 && rng.gen_bool(0.2) {
                vocab + rng.gen_range(0..n_oov)
            } else {
                rng.gen_range(4..vocab)
            }
        })
        .collect();
    tgt_ext_ids.push(STOP);
    let tgt_ids = tgt_ext_ids
        .iter()
        .map(|&t| if t >= vocab { seqlearn::corpus::UNK } else { t })
        .collect();
    let example = EncodedExample {
        src_ids,
        src_ext_ids,
        src_oovs: (0..n_oov).map(|k| format!("oov{k}")).collect(),
        tgt_ids,
        tgt_ext_ids,
        base_size: vocab,
    };
    (params, example)
}

/// Multiplies every weight, sharpening the otherwise near-uniform outputs of
/// a freshly initialised model.
pub fn sharpen(params: &mut ParameterStore, factor: f64) {
    for p in params.values_mut() {
        p.data_mut().iter_mut().for_each(|x| *x *= factor);
    }
}
