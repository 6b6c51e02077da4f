mod common;

use common::{brute_bleu2, brute_rouge, random_corpus};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqlearn::metrics::{bleu2, evaluate_corpus, rouge_n};

#[test]
fn rouge_matches_brute_force_on_random_corpora() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..50 {
        let (cands, refs) = random_corpus(&mut rng, 30, 5, 9);
        for (c, r) in cands.iter().zip(&refs) {
            for n in 1..=2 {
                let got = rouge_n(c, r, n);
                let (p, rc, f) = brute_rouge(c, r, n);
                assert!((got.precision - p).abs() <= 1e-9);
                assert!((got.recall - rc).abs() <= 1e-9);
                assert!((got.f1 - f).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn bleu_and_report_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..50 {
        let (cands, refs) = random_corpus(&mut rng, 25, 6, 10);
        let want = brute_bleu2(&cands, &refs);
        assert!((bleu2(&cands, &refs).unwrap() - want).abs() <= 1e-9);

        let report = evaluate_corpus(&cands, &refs).unwrap();
        let n = cands.len() as f64;
        let r1: f64 = cands
            .iter()
            .zip(&refs)
            .map(|(c, r)| brute_rouge(c, r, 1).2)
            .sum::<f64>()
            / n;
        let r2: f64 = cands
            .iter()
            .zip(&refs)
            .map(|(c, r)| brute_rouge(c, r, 2).2)
            .sum::<f64>()
            / n;
        assert!((report.rouge1 - 100.0 * r1).abs() <= 1e-9);
        assert!((report.rouge2 - 100.0 * r2).abs() <= 1e-9);
        assert!((report.bleu2 - 100.0 * want).abs() <= 1e-9);
        assert!((report.avg - (report.rouge1 + report.rouge2 + report.bleu2) / 3.0).abs() <= 1e-12);
    }
}

#[test]
fn hand_cases() {
    let abc = ["a", "b", "c"];
    let abd = ["a", "b", "d"];
    assert_eq!(rouge_n(&abc, &abd, 2).f1, 0.5);
    assert!((rouge_n(&abc, &abd, 1).f1 - 2.0 / 3.0).abs() < 1e-15);
    // p1 = 2/3, p2 = 1/2, equal lengths
    let b = bleu2(&[abc], &[abd]).unwrap();
    assert!((b - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    // clipping: "the the the" against "the cat"
    let r = rouge_n(&["the", "the", "the"], &["the", "cat"], 1);
    assert!((r.precision - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(r.recall, 0.5);
}
