//! Synthetic paraphrase corpora over the words `w0 .. w{n-1}`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::SentencePair;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthTask {
    Substitution,
    Copy,
    Reverse,
}

impl FromStr for SynthTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "substitution" | "subst" => Ok(SynthTask::Substitution),
            "copy" => Ok(SynthTask::Copy),
            "reverse" => Ok(SynthTask::Reverse),
            other => Err(Error::config(format!("unknown synthetic task {other:?}"))),
        }
    }
}

impl fmt::Display for SynthTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthTask::Substitution => "substitution",
            SynthTask::Copy => "copy",
            SynthTask::Reverse => "reverse",
        })
    }
}

/// Word-level rewrite table. Bijective on the word ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynonymTable {
    map: Vec<usize>,
}

impl SynonymTable {
    pub fn identity(vocab_size: usize) -> Self {
        SynonymTable {
            map: (0..vocab_size).collect(),
        }
    }

    /// A random half of the words is permuted among itself; the other half
    /// maps to itself.
    pub fn random<R: Rng + ?Sized>(vocab_size: usize, rng: &mut R) -> Self {
        let mut ids: Vec<usize> = (0..vocab_size).collect();
        ids.shuffle(rng);
        let half = &ids[..vocab_size / 2];
        let mut image = half.to_vec();
        image.shuffle(rng);
        let mut map: Vec<usize> = (0..vocab_size).collect();
        for (&from, &to) in half.iter().zip(&image) {
            map[from] = to;
        }
        SynonymTable { map }
    }

    pub fn get(&self, word: usize) -> usize {
        self.map[word]
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn word(i: usize) -> String {
    format!("w{i}")
}

fn check_sizes(vocab_size: usize, max_len: usize) -> Result<()> {
    if vocab_size < 8 {
        return Err(Error::config(format!("synthetic vocab_size {vocab_size} is below 8")));
    }
    if max_len == 0 || max_len > 20 {
        return Err(Error::config(format!("synthetic max_len {max_len} must lie in 1..=20")));
    }
    Ok(())
}

/// Draws `n_pairs` sources of length uniform in `[ceil(max_len/2), max_len]`
/// and rewrites each through `table`. Reverse additionally flips the target.
pub fn synth_with_table(
    table: &SynonymTable,
    reverse: bool,
    n_pairs: usize,
    max_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<SentencePair>> {
    check_sizes(table.len(), max_len)?;
    let min_len = max_len.div_ceil(2);
    let mut pairs = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let len = rng.gen_range(min_len..=max_len);
        let src: Vec<usize> = (0..len).map(|_| rng.gen_range(0..table.len())).collect();
        let mut tgt: Vec<usize> = src.iter().map(|&w| table.get(w)).collect();
        if reverse {
            tgt.reverse();
        }
        pairs.push(SentencePair {
            source: src.into_iter().map(word).collect(),
            target: tgt.into_iter().map(word).collect(),
        });
    }
    Ok(pairs)
}

pub fn synth_corpus(
    task: SynthTask,
    vocab_size: usize,
    n_pairs: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<SentencePair>> {
    check_sizes(vocab_size, max_len)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = match task {
        SynthTask::Substitution => SynonymTable::random(vocab_size, &mut rng),
        SynthTask::Copy | SynthTask::Reverse => SynonymTable::identity(vocab_size),
    };
    synth_with_table(&table, task == SynthTask::Reverse, n_pairs, max_len, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copy_pairs_are_identical() {
        for p in synth_corpus(SynthTask::Copy, 20, 50, 10, 3).unwrap() {
            assert_eq!(p.source, p.target);
            assert!((5..=10).contains(&p.source.len()));
        }
    }

    #[test]
    fn reverse_flips() {
        for p in synth_corpus(SynthTask::Reverse, 20, 50, 7, 3).unwrap() {
            let mut s = p.source.clone();
            s.reverse();
            assert_eq!(s, p.target);
        }
    }

    #[test]
    fn identity_table_degenerates_to_copy() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pairs = synth_with_table(&SynonymTable::identity(30), false, 40, 10, &mut rng).unwrap();
        assert!(pairs.iter().all(|p| p.source == p.target));
    }

    #[test]
    fn substitution_table_is_a_half_bijection() {
        let t = SynonymTable::random(50, &mut ChaCha8Rng::seed_from_u64(9));
        let mut image: Vec<usize> = (0..50).map(|i| t.get(i)).collect();
        image.sort_unstable();
        assert_eq!(image, (0..50).collect::<Vec<_>>());
        let moved = (0..50).filter(|&i| t.get(i) != i).count();
        assert!(moved <= 25);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_corpus(SynthTask::Substitution, 50, 100, 10, 7).unwrap();
        let b = synth_corpus(SynthTask::Substitution, 50, 100, 10, 7).unwrap();
        let c = synth_corpus(SynthTask::Substitution, 50, 100, 10, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_sizes() {
        assert!(matches!(
            synth_corpus(SynthTask::Copy, 7, 1, 5, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            synth_corpus(SynthTask::Copy, 8, 1, 21, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            synth_corpus(SynthTask::Copy, 8, 1, 0, 0),
            Err(Error::Config(_))
        ));
    }
}
