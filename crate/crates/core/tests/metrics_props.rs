use std::time::Instant;

use polyprompt::gateway::TokenSource;
use polyprompt::metrics::{
    acc_mean, acc_var, consistency, len_var, metric_vector, normalize, overall_score, Answer, EvalMatrix, EvalRecord, MetricVector,
    OverallScoreConfig,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A grid kept as plain nested vectors: `answers[q][l]`, `tokens[q][l]`, `gold[q]`.
#[derive(Debug, Clone)]
struct Grid {
    gold: Vec<String>,
    answers: Vec<Vec<Option<String>>>,
    tokens: Vec<Vec<u64>>,
}

const LANGS: [&str; 4] = ["en", "zh", "es", "fr"];

fn random_grid(rng: &mut ChaCha8Rng) -> Grid {
    let nq = rng.random_range(1..=6);
    let nl = rng.random_range(2..=4);
    let pool = ["A", "B", "C"];
    let gold = (0..nq).map(|_| pool[rng.random_range(0..3)].to_string()).collect();
    let answers = (0..nq)
        .map(|_| (0..nl).map(|_| if rng.random_bool(0.15) { None } else { Some(pool[rng.random_range(0..3)].to_string()) }).collect())
        .collect();
    let tokens = (0..nq).map(|_| (0..nl).map(|_| rng.random_range(0..600)).collect()).collect();
    Grid { gold, answers, tokens }
}

fn records(g: &Grid, rng: &mut ChaCha8Rng) -> Vec<EvalRecord> {
    let mut out = Vec::new();
    for (q, row) in g.answers.iter().enumerate() {
        for (l, a) in row.iter().enumerate() {
            out.push(EvalRecord {
                prompt_id: "p".into(),
                model_id: "m".into(),
                benchmark_id: "b".into(),
                question_id: format!("q{q}"),
                language: LANGS[l].into(),
                extracted_answer: Answer::from(a.clone()),
                correct: a.as_deref() == Some(g.gold[q].as_str()),
                token_length: g.tokens[q][l],
                token_source: TokenSource::Provider,
                response_ref: String::new(),
            });
        }
    }
    out.shuffle(rng);
    out
}

/// Population variance as the mean squared pairwise half-difference.
fn pairwise_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mut s = 0.0;
    for a in xs {
        for b in xs {
            s += (a - b) * (a - b);
        }
    }
    s / (2.0 * n * n)
}

fn oracle(g: &Grid) -> [f64; 4] {
    let nq = g.answers.len();
    let nl = g.answers[0].len();
    let mut correct = 0usize;
    let mut per_lang = vec![0usize; nl];
    let mut agree = 0usize;
    let mut len_sum = vec![0u64; nl];
    for q in 0..nq {
        let mut same = true;
        for l in 0..nl {
            let a = &g.answers[q][l];
            if a.as_deref() == Some(g.gold[q].as_str()) {
                correct += 1;
                per_lang[l] += 1;
            }
            if a.is_none() || *a != g.answers[q][0] {
                same = false;
            }
            len_sum[l] += g.tokens[q][l];
        }
        if same {
            agree += 1;
        }
    }
    let accs: Vec<f64> = per_lang.iter().map(|c| *c as f64 / nq as f64).collect();
    let lens: Vec<f64> = len_sum.iter().map(|s| *s as f64 / nq as f64).collect();
    [
        correct as f64 / (nq * nl) as f64,
        pairwise_variance(&accs),
        agree as f64 / nq as f64,
        pairwise_variance(&lens),
    ]
}

#[test]
fn metrics_match_brute_force_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..200 {
        let g = random_grid(&mut rng);
        let m = EvalMatrix::from_records(records(&g, &mut rng)).unwrap();
        let got = metric_vector::<f64>(&m).unwrap().to_array();
        let want = oracle(&g);
        for d in 0..4 {
            let tol = 1e-12 * want[d].abs().max(1.0);
            assert!((got[d] - want[d]).abs() <= tol, "matrix {i} metric {d}: {} vs {}", got[d], want[d]);
        }
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn overall_spot_checks() {
    let cfg = OverallScoreConfig::default();
    assert_eq!(overall_score(&MetricVector::new(1.0, 0.0, 1.0, 0.0), &cfg).unwrap(), 1.0);
    assert_eq!(overall_score(&MetricVector::new(0.0, 1.0, 0.0, 1.0), &cfg).unwrap(), 0.0);
    assert_eq!(overall_score(&MetricVector::splat(0.5), &cfg).unwrap(), 0.5);
}

#[test]
fn single_language_variances_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = Grid { gold: vec!["A".into()], answers: vec![vec![Some("A".into())]], tokens: vec![vec![3]] };
    let m = EvalMatrix::from_records(records(&g, &mut rng)).unwrap();
    assert_eq!(acc_mean::<f64>(&m).unwrap(), 1.0);
    assert_eq!(consistency::<f64>(&m).unwrap(), 1.0);
    assert!(acc_var::<f64>(&m).is_err());
    assert!(len_var::<f64>(&m).is_err());
}

fn grid_strategy() -> impl Strategy<Value = u64> {
    any::<u64>()
}

proptest! {
    #[test]
    fn metric_ranges_and_order_invariance(seed in grid_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_grid(&mut rng);
        let a = metric_vector::<f64>(&EvalMatrix::from_records(records(&g, &mut rng)).unwrap()).unwrap();
        let b = metric_vector::<f64>(&EvalMatrix::from_records(records(&g, &mut rng)).unwrap()).unwrap();
        // Record order changes the language order, so sums may round differently.
        for (x, y) in a.to_array().into_iter().zip(b.to_array()) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
        prop_assert!((0.0..=1.0).contains(&a.acc_mean));
        prop_assert!((0.0..=0.25).contains(&a.acc_var));
        prop_assert!((0.0..=1.0).contains(&a.consistency));
        prop_assert!(a.len_var >= 0.0);
    }

    #[test]
    fn normalized_population_in_unit_box(
        pop in prop::collection::vec(prop::array::uniform4(-50.0f64..50.0), 1..30)
    ) {
        let vectors: Vec<MetricVector<f64>> = pop.iter().map(|a| MetricVector::from_array(*a)).collect();
        let (ctx, normed) = normalize(&vectors).unwrap();
        let cfg = OverallScoreConfig::default();
        for v in &normed {
            for x in v.to_array() {
                prop_assert!((0.0..=1.0).contains(&x));
            }
            let s = overall_score(v, &cfg).unwrap();
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&s));
        }
        prop_assert_eq!(ctx.population_size, vectors.len());
    }

    #[test]
    fn overall_monotone_in_each_metric(base in prop::array::uniform4(0.0f64..1.0), d in 0usize..4, bump in 0.001f64..0.5) {
        let cfg = OverallScoreConfig::default();
        let lo = MetricVector::from_array(base);
        let mut up = base;
        up[d] += bump;
        let hi = MetricVector::from_array(up);
        let (a, b) = (overall_score(&lo, &cfg).unwrap(), overall_score(&hi, &cfg).unwrap());
        if cfg.invert[d] {
            prop_assert!(b < a);
        } else {
            prop_assert!(b > a);
        }
    }
}
