use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use polyprompt::stats::{ols_regress, pca_2d, spearman, DesignMatrix, StatsError};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const PLANTED: [f64; 5] = [1.5, -0.8, 0.6, 0.0, 0.0];

fn planted_data(seed: u64, n: usize, sigma: f64) -> (DesignMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..PLANTED.len()).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let y = rows.iter().map(|r| 0.25 + r.iter().zip(PLANTED).map(|(x, b)| x * b).sum::<f64>() + noise.sample(&mut rng)).collect();
    let names = (0..PLANTED.len()).map(|j| format!("x{j}")).collect();
    (DesignMatrix::new(names, rows).unwrap(), y)
}

#[test]
fn planted_coefficients_recovered() {
    let start = Instant::now();
    let (mut null_pass, mut null_total) = (0, 0);
    for rep in 0..100 {
        let (x, y) = planted_data(rep, 200, 0.01);
        let fit = ols_regress(&x, &y).unwrap();
        for (c, b) in fit.coefficients.iter().zip(PLANTED) {
            if b != 0.0 {
                assert!(((c.estimate - b) / b).abs() <= 0.025, "rep {rep} {}: {} vs {b}", c.name, c.estimate);
            } else {
                null_total += 1;
                if c.p_value > 0.05 {
                    null_pass += 1;
                }
            }
        }
    }
    let share = null_pass as f64 / null_total as f64;
    assert!(share >= 0.9, "planted-zero p > 0.05 share {share}");
    assert!(start.elapsed().as_secs_f64() < 30.0);
}

/// Normal-equations solution with the textbook covariance, as an oracle.
fn normal_equations(x: &DesignMatrix<f64>, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.n_rows();
    let p = x.n_cols() + 1;
    let xm = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { x.rows[i][j - 1] });
    let yv = DVector::from_column_slice(y);
    let xtx_inv = (xm.transpose() * &xm).try_inverse().unwrap();
    let beta = &xtx_inv * xm.transpose() * &yv;
    let resid = &yv - &xm * &beta;
    let s2 = resid.norm_squared() / (n - p) as f64;
    let se = (0..p).map(|j| (s2 * xtx_inv[(j, j)]).sqrt()).collect();
    (beta.iter().copied().collect(), se)
}

#[test]
fn qr_matches_normal_equations() {
    for seed in 0..10 {
        let (x, y) = planted_data(seed, 40, 0.3);
        let fit = ols_regress(&x, &y).unwrap();
        let (beta, se) = normal_equations(&x, &y);
        let got: Vec<_> = std::iter::once(&fit.intercept).chain(&fit.coefficients).collect();
        for (j, c) in got.iter().enumerate() {
            assert!((c.estimate - beta[j]).abs() < 1e-9, "beta {j}");
            assert!((c.std_error - se[j]).abs() < 1e-9, "se {j}");
        }
    }
}

#[test]
fn collinear_column_is_named() {
    let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64, (i * i) as f64]).collect();
    let x = DesignMatrix::new(vec!["a".into(), "b".into(), "c".into()], rows).unwrap();
    let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
    assert_eq!(ols_regress(&x, &y).unwrap_err(), StatsError::RankDeficient { column: "b".into() });
}

#[test]
fn pca_rank_one_and_isotropic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dir = [0.6, -0.8, 0.0];
    let rank1: Vec<Vec<f64>> = (0..500)
        .map(|_| {
            let t: f64 = rng.random_range(-5.0..5.0);
            dir.iter().map(|d| 1.0 + t * d).collect()
        })
        .collect();
    let r = pca_2d(&rank1).unwrap();
    assert!(r.explained_variance_ratio[0] >= 0.999, "{:?}", r.explained_variance_ratio);

    let normal = Normal::new(0.0, 1.0).unwrap();
    let iso: Vec<Vec<f64>> = (0..10_000).map(|_| vec![normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let r = pca_2d(&iso).unwrap();
    for ratio in &r.explained_variance_ratio {
        assert!((ratio - 0.5).abs() <= 0.05, "{:?}", r.explained_variance_ratio);
    }
}

#[test]
fn pca_zero_variance_rejected() {
    let same = vec![vec![1.0, 2.0]; 5];
    assert_eq!(pca_2d(&same).unwrap_err(), StatsError::ZeroVariance);
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Rank by counting, with ties at the mean position.
fn count_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|x| {
            let below = xs.iter().filter(|y| *y < x).count() as f64;
            let equal = xs.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

proptest! {
    #[test]
    fn spearman_matches_rank_pearson(pairs in prop::collection::vec((0u8..8, 0u8..8), 3..40)) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let s = spearman(&a, &b).unwrap();
        let constant = a.iter().all(|x| *x == a[0]) || b.iter().all(|x| *x == b[0]);
        prop_assert_eq!(s.constant_input, constant);
        if !constant {
            let want = pearson(&count_ranks(&a), &count_ranks(&b));
            prop_assert!((s.rho - want).abs() < 1e-12);
        }
    }

    #[test]
    fn pca_ratios_are_a_partial_distribution(seed in any::<u64>(), d in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let r = pca_2d(&rows).unwrap();
        let [a, b] = [r.explained_variance_ratio[0], r.explained_variance_ratio[1]];
        prop_assert!(a >= b && b >= 0.0 && a + b <= 1.0 + 1e-12);
        prop_assert!(r.components.iter().all(|c| (c.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9));
    }
}
