mod oracles;

use enercurate_core::linalg::Matrix;
use enercurate_core::model::{CandidateAnswerSet, PreferencePair};
use enercurate_core::rlhf::{
    build_preference_pairs, lora_forward, loss_from_margins, reorder, rm_loss_gradient,
    select_gold, LinearFeatureScorer, LoraLayer,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pair(q: &str, chosen: &str, rejected: &str) -> PreferencePair {
    PreferencePair {
        question_id: q.into(),
        prompt: q.into(),
        chosen: chosen.into(),
        rejected: rejected.into(),
        pair_rank: 1,
    }
}

#[test]
fn large_positive_margin_loss_is_tiny() {
    let loss = loss_from_margins(&[20.0f64; 8]).unwrap();
    let expected = oracles::logistic_loss(20.0);
    assert!((loss - expected).abs() / expected < 1e-6);
    assert!((loss - 2.061e-9).abs() < 1e-12);
}

#[test]
fn equal_scores_give_half_feature_difference_gradient() {
    let scorer = LinearFeatureScorer::<f64>::zeros(32, 5);
    let pairs = vec![
        pair(
            "what is droop",
            "droop links frequency and power",
            "it is a setting",
        ),
        pair(
            "why store energy",
            "to shift solar output to the evening peak",
            "batteries",
        ),
        pair(
            "define lmp",
            "marginal cost of serving load at a node",
            "a price",
        ),
    ];
    let grad = rm_loss_gradient(&pairs, &scorer).unwrap();
    let n = pairs.len() as f64;
    let mut expected = vec![0.0; scorer.feature_count()];
    for p in &pairs {
        let plus = scorer.features(&p.prompt, &p.chosen);
        let minus = scorer.features(&p.prompt, &p.rejected);
        for (e, (a, b)) in expected.iter_mut().zip(plus.iter().zip(&minus)) {
            *e -= 0.5 * (a - b) / n;
        }
    }
    for (g, e) in grad.iter().zip(&expected) {
        assert!((g - e).abs() < 1e-12);
    }
}

#[test]
fn ten_thousand_questions_give_ten_thousand_gold_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let sets: Vec<CandidateAnswerSet> = (0..10_000)
        .map(|i| {
            let raw = CandidateAnswerSet {
                question_id: format!("q{i}"),
                question: format!("question {i}"),
                candidates: (0..5).map(|c| format!("answer {i}.{c}")).collect(),
                scores: None,
            };
            let scores: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..10.0)).collect();
            reorder(&raw, &scores)
        })
        .collect();
    let gold = select_gold(&sets, 1).unwrap();
    assert_eq!(gold.len(), 10_000);
    for (row, set) in gold.iter().zip(&sets) {
        let best = set
            .scores
            .as_ref()
            .unwrap()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(row.score, best);
        assert_eq!(row.rank, 1);
    }
    assert_eq!(select_gold(&sets[..3], 5).unwrap().len(), 15);
}

#[test]
fn empty_ranked_input_gives_no_pairs() {
    assert!(build_preference_pairs(&[]).unwrap().is_empty());
}

#[test]
fn four_by_three_lora_matches_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let mut draw = |r: usize, c: usize| -> Vec<Vec<f64>> {
        (0..r)
            .map(|_| (0..c).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    };
    let (w0, a, b) = (draw(4, 3), draw(4, 2), draw(2, 3));
    let x: Vec<f64> = draw(1, 3).remove(0);
    let m = |v: &[Vec<f64>]| Matrix::from_fn(v.len(), v[0].len(), |i, j| v[i][j]);
    let layer = LoraLayer::new(m(&w0), m(&a), m(&b)).unwrap();
    let h = lora_forward(&layer, &x).unwrap();
    let expected = oracles::dense_forward(&w0, &a, &b, &x);
    for (got, want) in h.iter().zip(&expected) {
        assert!((got - want).abs() < 1e-12);
    }
}
