use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seqlearn::corpus::START;
use seqlearn::decoding::{beam_search, greedy_decode, PointerScorer};
use seqlearn::learner::{preset, train_step, MAX_GRAD_NORM};
use seqlearn::model::{decoder_step, encode_source};
use seqlearn::{DatasetProfile, Optimizer, OptimizerSpec, PresetName};
use seqlearn_bench::fixture;

fn decoding(c: &mut Criterion) {
    let f = fixture(32, 16, 16);
    let ex = &f.examples[0];
    let enc = encode_source(&f.params, &ex.src_ids).unwrap();

    c.bench_function("decoder_step h32", |b| {
        b.iter(|| decoder_step(&f.params, &enc.init, START, &enc, &ex.src_ext_ids).unwrap())
    });
    c.bench_function("greedy h32", |b| {
        let scorer = PointerScorer::new(&f.params, ex).unwrap();
        b.iter(|| greedy_decode(black_box(&scorer), 20).unwrap())
    });
    c.bench_function("beam8 h32", |b| {
        let scorer = PointerScorer::new(&f.params, ex).unwrap();
        b.iter(|| beam_search(black_box(&scorer), 8, 20).unwrap())
    });
}

fn training(c: &mut Criterion) {
    let f = fixture(32, 16, 16);
    for name in [PresetName::Mle, PresetName::Reinforce, PresetName::DaggerStar] {
        let algo = preset(name, DatasetProfile::Quora);
        let spec = match name {
            PresetName::Mle => OptimizerSpec::adagrad(),
            _ => OptimizerSpec::adam(),
        };
        c.bench_function(&format!("train_step {name} h32"), |b| {
            let mut params = f.params.clone();
            let mut opt = Optimizer::new(spec, params.values()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let mut i = 0u64;
            b.iter(|| {
                let ex = &f.examples[i as usize % f.examples.len()];
                i += 1;
                train_step(&mut params, &mut opt, ex, &algo, i, &mut rng, MAX_GRAD_NORM).unwrap()
            })
        });
    }
}

criterion_group!(benches, decoding, training);
criterion_main!(benches);
