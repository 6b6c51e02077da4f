mod common;

use common::{exhaustive_best, random_instance, random_prefix_model, rescore, sharpen, PrefixModel};
use seqlearn::corpus::STOP;
use seqlearn::decoding::{beam_search, beam_search_hypothesis, greedy_decode, BeamConfig, PointerScorer};

#[test]
fn beam_one_is_greedy_on_random_pointer_models() {
    for seed in 0..100 {
        let (mut params, ex) = random_instance(seed, 9 + (seed as usize % 7), 6, 4);
        sharpen(&mut params, 8.0);
        let m = PointerScorer::new(&params, &ex).unwrap();
        assert_eq!(
            greedy_decode(&m, 12).unwrap(),
            beam_search(&m, 1, 12).unwrap(),
            "seed {seed}"
        );
    }
}

#[test]
fn beam_one_is_greedy_on_random_tables() {
    for seed in 0..100 {
        let m = random_prefix_model(7, seed);
        assert_eq!(
            greedy_decode(&m, 8).unwrap(),
            beam_search(&m, 1, 8).unwrap(),
            "seed {seed}"
        );
    }
}

#[test]
fn saturated_beam_matches_enumeration() {
    for v in [4usize, 5] {
        for max_len in 1..=4 {
            for seed in 0..40 {
                let m = random_prefix_model(v, seed * 31 + max_len as u64);
                let (want, score) = exhaustive_best(&m, max_len);
                let beam = v.pow(max_len as u32);
                let got = beam_search_hypothesis(&m, BeamConfig::new(beam, max_len)).unwrap();
                assert_eq!(got.tokens, want, "v {v} max_len {max_len} seed {seed}");
                assert!((got.log_prob - score).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn saturated_beam_matches_enumeration_on_pointer_models() {
    for seed in 0..30 {
        let (mut params, mut ex) = random_instance(seed, 5, 6, 4);
        // |V| = 5: keep the source in-vocabulary.
        ex.src_ext_ids = ex.src_ids.clone();
        ex.src_oovs.clear();
        sharpen(&mut params, 6.0);
        let m = PointerScorer::new(&params, &ex).unwrap();
        for max_len in 1..=4 {
            let (want, score) = exhaustive_best(&m, max_len);
            let got = beam_search_hypothesis(&m, BeamConfig::new(5usize.pow(max_len as u32), max_len)).unwrap();
            assert_eq!(got.tokens, want, "seed {seed} max_len {max_len}");
            assert!((got.log_prob - score).abs() <= 1e-9);
        }
    }
}

#[test]
fn stored_score_matches_rescoring() {
    for seed in 0..20 {
        let (mut params, ex) = random_instance(seed, 11, 6, 4);
        sharpen(&mut params, 5.0);
        let m = PointerScorer::new(&params, &ex).unwrap();
        for beam in 1..=8 {
            let h = beam_search_hypothesis(&m, BeamConfig::new(beam, 10)).unwrap();
            assert!(
                (h.log_prob - rescore(&m, &h.tokens)).abs() <= 1e-9,
                "seed {seed} beam {beam}"
            );
        }
    }
}

#[test]
fn saturated_beam_dominates_every_width() {
    for seed in 0..200 {
        let m = random_prefix_model(6, seed);
        let (_, best) = exhaustive_best(&m, 4);
        for beam in 1..=8 {
            let h = beam_search_hypothesis(&m, BeamConfig::new(beam, 4)).unwrap();
            if h.finished {
                assert!(h.log_prob <= best + 1e-12, "seed {seed} beam {beam}");
            }
        }
    }
}

/// Beam 2 keeps both continuations of token 5 and prunes token 4, whose
/// three-way split hides a certain STOP; beam 1 follows token 4.
fn wide_beam_trap() -> PrefixModel<impl Fn(&[usize]) -> Vec<f64>> {
    PrefixModel(|prefix: &[usize]| {
        let mut d = vec![0.0; 11];
        match prefix {
            [] => {
                d[4] = 0.51;
                d[5] = 0.49;
            }
            [4] => {
                d[6] = 1.0 / 3.0;
                d[7] = 1.0 / 3.0;
                d[8] = 1.0 / 3.0;
            }
            [5] => {
                d[9] = 0.5;
                d[10] = 0.5;
            }
            [5, _] => {
                d[STOP] = 0.5;
                d[4] = 0.5;
            }
            _ => d[STOP] = 1.0,
        }
        d
    })
}

#[test]
fn beam_width_is_not_monotone() {
    let m = wide_beam_trap();
    let one = beam_search_hypothesis(&m, BeamConfig::new(1, 3)).unwrap();
    let two = beam_search_hypothesis(&m, BeamConfig::new(2, 3)).unwrap();
    assert_eq!(one.tokens, vec![4, 6, STOP]);
    assert_eq!(two.tokens, vec![5, 9, STOP]);
    assert!(one.log_prob > two.log_prob);
    let (want, _) = exhaustive_best(&m, 3);
    assert_eq!(want, one.tokens);
}

/// Token 4 looks best at step one but every continuation after it is
/// diluted; token 5 leads to a near-certain continuation.
fn garden_path() -> PrefixModel<impl Fn(&[usize]) -> Vec<f64>> {
    PrefixModel(|prefix: &[usize]| {
        let mut d = vec![0.0; 6];
        match prefix {
            [] => {
                d[4] = 0.6;
                d[5] = 0.4;
            }
            [4] => {
                d[4] = 0.5;
                d[5] = 0.5;
            }
            [5] => d[5] = 1.0,
            _ => d[STOP] = 1.0,
        }
        d
    })
}

#[test]
fn garden_path_beam_two_beats_greedy() {
    let m = garden_path();
    assert_eq!(greedy_decode(&m, 3).unwrap(), vec![4, 4]);
    let (want, score) = exhaustive_best(&m, 3);
    assert_eq!(want, vec![5, 5, STOP]);
    let h = beam_search_hypothesis(&m, BeamConfig::new(2, 3)).unwrap();
    assert_eq!(h.tokens, want);
    assert!((h.log_prob - score).abs() <= 1e-9);
    assert!((score - 0.4f64.ln()).abs() < 1e-9);
}
