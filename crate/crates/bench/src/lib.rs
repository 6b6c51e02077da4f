//! Fixtures shared by the benchmarks.

use seqlearn::corpus::{build_vocab, encode, EncodedExample, Vocabulary};
use seqlearn::trainer::{synth_corpus, SynthTask};
use seqlearn::{ModelConfig, ParameterStore};

pub struct Fixture {
    pub params: ParameterStore,
    pub vocab: Vocabulary,
    pub examples: Vec<EncodedExample>,
}

/// A randomly initialised model over a synthetic substitution corpus.
pub fn fixture(hidden: usize, emb: usize, n_examples: usize) -> Fixture {
    let pairs = synth_corpus(SynthTask::Substitution, 50, n_examples, 10, 7).expect("valid sizes");
    let vocab = build_vocab(&pairs, 5000).expect("non-empty corpus");
    let config = ModelConfig::new(hidden, emb, vocab.size(), 20);
    let params = ParameterStore::init(config, 7).expect("valid config");
    let examples = pairs.iter().map(|p| encode(p, &vocab, 20)).collect();
    Fixture {
        params,
        vocab,
        examples,
    }
}
