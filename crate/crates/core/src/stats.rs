//! Regression, rank correlation, PCA, and population comparison tables.
//!
//! Inputs are generic over [`Real`]; the linear algebra runs in `f64`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::{ComponentCategory, Corpus, CorpusError, SystemPrompt};
use crate::metrics::MetricVector;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("need more rows than parameters: n = {n}, parameters = {p}")]
    TooFewRows { n: usize, p: usize },
    #[error("column {column:?} is linearly dependent on the columns before it (including the intercept)")]
    RankDeficient { column: String },
    #[error("row {row} has {found} values, expected {expected}")]
    Ragged { row: usize, found: usize, expected: usize },
    #[error("non-finite value in column {column:?}")]
    NonFinite { column: String },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("data has zero variance")]
    ZeroVariance,
    #[error("empty population")]
    EmptyPopulation,
    #[error("{0}")]
    Corpus(String),
}

impl From<CorpusError> for StatsError {
    fn from(e: CorpusError) -> Self {
        StatsError::Corpus(e.to_string())
    }
}

/// Named feature columns over rows (one row per prompt).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DesignMatrix<T> {
    pub names: Vec<String>,
    pub rows: Vec<Vec<T>>,
}

impl<T: Real> DesignMatrix<T> {
    pub fn new(names: Vec<String>, rows: Vec<Vec<T>>) -> Result<Self, StatsError> {
        for (i, r) in rows.iter().enumerate() {
            if r.len() != names.len() {
                return Err(StatsError::Ragged { row: i, found: r.len(), expected: names.len() });
            }
            if let Some(j) = r.iter().position(|x| !x.is_finite()) {
                return Err(StatsError::NonFinite { column: names[j].clone() });
            }
        }
        Ok(Self { names, rows })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn with_column(mut self, name: impl Into<String>, values: &[T]) -> Result<Self, StatsError> {
        if values.len() != self.rows.len() {
            return Err(StatsError::LengthMismatch(values.len(), self.rows.len()));
        }
        let name = name.into();
        if !values.iter().all(|x| x.is_finite()) {
            return Err(StatsError::NonFinite { column: name });
        }
        self.names.push(name);
        for (r, v) in self.rows.iter_mut().zip(values) {
            r.push(*v);
        }
        Ok(self)
    }

    /// One 0/1 column per distinct label except the first seen (the baseline).
    pub fn with_indicators(mut self, prefix: &str, labels: &[String]) -> Result<Self, StatsError> {
        let mut levels: Vec<&String> = Vec::new();
        for l in labels {
            if !levels.contains(&l) {
                levels.push(l);
            }
        }
        for level in levels.into_iter().skip(1) {
            let col: Vec<T> = labels.iter().map(|l| if l == level { T::one() } else { T::zero() }).collect();
            self = self.with_column(format!("{prefix}{level}"), &col)?;
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureEncoding {
    /// 0/1 per category plus the number of components.
    #[default]
    Presence,
    /// Component count per category.
    Counts,
}

/// Per-category composition features of each prompt.
pub fn category_design<T: Real>(
    prompts: &[SystemPrompt],
    corpus: &Corpus,
    encoding: FeatureEncoding,
) -> Result<DesignMatrix<T>, StatsError> {
    let mut names: Vec<String> = ComponentCategory::ALL.iter().map(|c| c.label().to_string()).collect();
    if encoding == FeatureEncoding::Presence {
        names.push("num_components".into());
    }
    let mut rows = Vec::with_capacity(prompts.len());
    for p in prompts {
        let mut counts = [0usize; 10];
        for c in corpus.resolve(p)? {
            counts[c.category.index()] += 1;
        }
        let mut row: Vec<T> = match encoding {
            FeatureEncoding::Presence => counts.iter().map(|&c| if c > 0 { T::one() } else { T::zero() }).collect(),
            FeatureEncoding::Counts => counts.iter().map(|&c| T::of_usize(c)).collect(),
        };
        if encoding == FeatureEncoding::Presence {
            row.push(T::of_usize(p.len()));
        }
        rows.push(row);
    }
    DesignMatrix::new(names, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub intercept: Coefficient,
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
    pub n: usize,
    pub df: usize,
}

impl RegressionResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

/// Significance marker at the 0.05 / 0.01 / 0.001 levels.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

fn to_f64<T: Real>(xs: &[T]) -> Vec<f64> {
    xs.iter().map(|x| x.to_f64_lossy()).collect()
}

/// Ordinary least squares with an intercept, classical standard errors, and
/// two-sided t-test p-values.
pub fn ols_regress<T: Real>(x: &DesignMatrix<T>, y: &[T]) -> Result<RegressionResult, StatsError> {
    let n = x.n_rows();
    let p = x.n_cols() + 1;
    if y.len() != n {
        return Err(StatsError::LengthMismatch(y.len(), n));
    }
    if n <= p {
        return Err(StatsError::TooFewRows { n, p });
    }
    let y = DVector::from_vec(to_f64(y));
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite { column: format!("y[{i}]") });
    }
    let xm = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { x.rows[i][j - 1].to_f64_lossy() });

    let qr = xm.clone().qr();
    let r = qr.r();
    for j in 0..p {
        let scale = xm.column(j).norm().max(1.0);
        if r[(j, j)].abs() <= 1e-10 * scale {
            let column = if j == 0 { "(intercept)".to_string() } else { x.names[j - 1].clone() };
            return Err(StatsError::RankDeficient { column });
        }
    }
    let qty = qr.q().transpose() * &y;
    let beta = r.solve_upper_triangular(&qty).ok_or(StatsError::RankDeficient { column: "(unknown)".into() })?;
    let fitted = &xm * &beta;
    let resid = &y - fitted;
    let df = n - p;
    let ssr = resid.norm_squared();
    let y_mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let r_squared = if sst > 0.0 { (1.0 - ssr / sst).max(0.0) } else { 0.0 };
    let sigma2 = ssr / df as f64;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(StatsError::RankDeficient { column: "(unknown)".into() })?;
    let cov_unscaled = &r_inv * r_inv.transpose();
    let t_dist = StudentsT::new(0.0, 1.0, df as f64).expect("df > 0");
    let coef = |j: usize, name: String| {
        let estimate = beta[j];
        let std_error = (sigma2 * cov_unscaled[(j, j)]).max(0.0).sqrt();
        let (t, p_value) = if std_error > 0.0 {
            let t = estimate / std_error;
            (t, (2.0 * (1.0 - t_dist.cdf(t.abs()))).clamp(0.0, 1.0))
        } else if estimate.abs() <= 1e-12 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(estimate), 0.0)
        };
        Coefficient { name, estimate, std_error, t, p_value }
    };
    Ok(RegressionResult {
        intercept: coef(0, "(intercept)".into()),
        coefficients: (1..p).map(|j| coef(j, x.names[j - 1].clone())).collect(),
        r_squared,
        n,
        df,
    })
}

/// `target,feature,coefficient,std_error,t,p_value,stars` rows, intercept last.
pub fn regression_csv(results: &[(String, RegressionResult)]) -> String {
    let mut out = String::from("target,feature,coefficient,std_error,t,p_value,stars\n");
    for (target, r) in results {
        for c in r.coefficients.iter().chain(std::iter::once(&r.intercept)) {
            let _ = writeln!(
                out,
                "{target},{},{},{},{},{},{}",
                c.name, c.estimate, c.std_error, c.t, c.p_value, stars(c.p_value)
            );
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    pub mean: Vec<f64>,
    /// Unit-norm principal directions, largest variance first.
    pub components: Vec<Vec<f64>>,
    pub explained_variance_ratio: Vec<f64>,
    pub points: Vec<[f64; 2]>,
}

/// Projects rows onto their top two principal components. Each component's
/// first non-negligible loading is made positive.
pub fn pca_2d<T: Real>(rows: &[Vec<T>]) -> Result<PcaResult, StatsError> {
    let n = rows.len();
    if n < 3 {
        return Err(StatsError::TooFew { need: 3, got: n });
    }
    let d = rows[0].len();
    if d < 2 {
        return Err(StatsError::TooFew { need: 2, got: d });
    }
    if let Some(i) = rows.iter().position(|r| r.len() != d) {
        return Err(StatsError::Ragged { row: i, found: rows[i].len(), expected: d });
    }
    let mut x = DMatrix::from_fn(n, d, |i, j| rows[i][j].to_f64_lossy());
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite { column: "(pca input)".into() });
    }
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
    for j in 0..d {
        x.column_mut(j).add_scalar_mut(-mean[j]);
    }
    let cov = (x.transpose() * &x) / (n as f64 - 1.0);
    let total = cov.trace();
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if total <= f64::EPSILON * scale.max(1.0) * scale.max(1.0) {
        return Err(StatsError::ZeroVariance);
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = Vec::with_capacity(2);
    let mut ratios = Vec::with_capacity(2);
    for &k in order.iter().take(2) {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        if let Some(first) = v.iter().find(|a| a.abs() > 1e-12) {
            if *first < 0.0 {
                v.iter_mut().for_each(|a| *a = -*a);
            }
        }
        ratios.push((eig.eigenvalues[k] / total).max(0.0));
        components.push(v);
    }
    let points = (0..n)
        .map(|i| {
            let row = x.row(i);
            let proj = |c: &Vec<f64>| row.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            [proj(&components[0]), proj(&components[1])]
        })
        .collect();
    Ok(PcaResult { mean, components, explained_variance_ratio: ratios, points })
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    /// One of the inputs was constant; `rho` is reported as 0.
    pub constant_input: bool,
}

pub fn spearman<T: Real>(xs: &[T], ys: &[T]) -> Result<Spearman, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(StatsError::TooFew { need: 3, got: xs.len() });
    }
    let rx = average_ranks(&to_f64(xs));
    let ry = average_ranks(&to_f64(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Spearman { rho: 0.0, constant_input: true });
    }
    Ok(Spearman { rho: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0), constant_input: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: String,
    pub random_mean: f64,
    pub optimized_mean: f64,
    pub delta: f64,
    /// Maximum for accuracy and consistency, minimum for the variances.
    pub random_best: f64,
    pub optimized_best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<MetricComparison>,
    /// Share of optimized prompts whose acc_mean beats every random prompt.
    pub exceed_random_best_acc: f64,
    pub n_random: usize,
    pub n_optimized: usize,
}

pub fn compare_populations<T: Real>(
    random: &[MetricVector<T>],
    optimized: &[MetricVector<T>],
) -> Result<ComparisonTable, StatsError> {
    if random.is_empty() || optimized.is_empty() {
        return Err(StatsError::EmptyPopulation);
    }
    let col = |pop: &[MetricVector<T>], d: usize| -> Vec<f64> { pop.iter().map(|v| v.to_array()[d].to_f64_lossy()).collect() };
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let higher_better = [true, false, true, false];
    let rows = (0..4)
        .map(|d| {
            let (r, o) = (col(random, d), col(optimized, d));
            let best = |xs: &[f64]| {
                if higher_better[d] {
                    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                } else {
                    xs.iter().copied().fold(f64::INFINITY, f64::min)
                }
            };
            MetricComparison {
                metric: MetricVector::<f64>::NAMES[d].to_string(),
                random_mean: mean(&r),
                optimized_mean: mean(&o),
                delta: mean(&o) - mean(&r),
                random_best: best(&r),
                optimized_best: best(&o),
            }
        })
        .collect();
    let best_random = col(random, 0).into_iter().fold(f64::NEG_INFINITY, f64::max);
    let o = col(optimized, 0);
    let exceed = o.iter().filter(|&&a| a > best_random).count() as f64 / o.len() as f64;
    Ok(ComparisonTable { rows, exceed_random_best_acc: exceed, n_random: random.len(), n_optimized: optimized.len() })
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,random_mean,optimized_mean,delta,random_best,optimized_best,exceed_random_best_acc\n");
        for r in &self.rows {
            let exceed = if r.metric == "acc_mean" { self.exceed_random_best_acc.to_string() } else { String::new() };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{exceed}",
                r.metric, r.random_mean, r.optimized_mean, r.delta, r.random_best, r.optimized_best
            );
        }
        out
    }
}

/// One line of the optimized-versus-random results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsRow {
    pub model: String,
    pub benchmark: String,
    pub setting: String,
    pub metrics: MetricVector<f64>,
}

pub const RESULTS_HEADER: &str = "Model,Benchmark,Setting,Acc_mean,Acc_var,Consistency,Output_tokens_var";

/// Lays rows out per model: each benchmark with its settings, then one `Mean`
/// row per setting averaging that setting's benchmarks without weighting.
/// Models, benchmarks and settings keep their first-seen order.
pub fn with_mean_rows(rows: &[ResultsRow]) -> Vec<ResultsRow> {
    fn first_seen<'a>(items: impl Iterator<Item = &'a String>) -> Vec<&'a String> {
        let mut out: Vec<&String> = Vec::new();
        for x in items {
            if !out.contains(&x) {
                out.push(x);
            }
        }
        out
    }
    let mut out = Vec::new();
    for model in first_seen(rows.iter().map(|r| &r.model)) {
        let mine: Vec<&ResultsRow> = rows.iter().filter(|r| &r.model == model).collect();
        let settings = first_seen(mine.iter().map(|r| &r.setting));
        for bench in first_seen(mine.iter().map(|r| &r.benchmark)) {
            for setting in &settings {
                out.extend(mine.iter().filter(|r| &r.benchmark == bench && &r.setting == *setting).map(|r| (*r).clone()));
            }
        }
        for setting in settings {
            let vs: Vec<MetricVector<f64>> = mine.iter().filter(|r| &r.setting == setting).map(|r| r.metrics).collect();
            out.push(ResultsRow {
                model: model.clone(),
                benchmark: "Mean".into(),
                setting: setting.clone(),
                metrics: MetricVector::mean_of(&vs).expect("non-empty group"),
            });
        }
    }
    out
}

pub fn results_csv(rows: &[ResultsRow]) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for r in rows {
        let m = r.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{:.4},{:.6},{:.4},{:.2}",
            r.model, r.benchmark, r.setting, m.acc_mean, m.acc_var, m.consistency, m.len_var
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ols_exact_line() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 3.0 + 2.0 * i as f64 + if i % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let d = DesignMatrix::new(vec!["x".into()], x).unwrap();
        let r = ols_regress(&d, &y).unwrap();
        assert_abs_diff_eq!(r.coefficients[0].estimate, 2.0, epsilon = 0.05);
        assert_abs_diff_eq!(r.intercept.estimate, 3.0, epsilon = 0.2);
        assert!(r.coefficients[0].p_value < 1e-6);
        assert_eq!(r.df, 8);
    }

    #[test]
    fn ols_constant_target() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let d = DesignMatrix::new(vec!["a".into(), "b".into()], x).unwrap();
        let r = ols_regress(&d, &[4.0; 10]).unwrap();
        assert_eq!(r.r_squared, 0.0);
        for c in &r.coefficients {
            assert!(c.estimate.abs() < 1e-9);
        }
    }

    #[test]
    fn ols_rank_errors() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, i as f64]).collect();
        let d = DesignMatrix::new(vec!["a".into(), "a_copy".into()], x).unwrap();
        assert_eq!(ols_regress(&d, &[1.0; 8]), Err(StatsError::RankDeficient { column: "a_copy".into() }));
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, 5.0]).collect();
        let d = DesignMatrix::new(vec!["a".into(), "const".into()], x).unwrap();
        assert_eq!(ols_regress(&d, &[1.0; 8]), Err(StatsError::RankDeficient { column: "const".into() }));
        let d = DesignMatrix::new(vec!["a".into()], vec![vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(ols_regress(&d, &[1.0, 2.0]), Err(StatsError::TooFewRows { .. })));
    }

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(0.0004), "***");
        assert_eq!(stars(0.004), "**");
        assert_eq!(stars(0.04), "*");
        assert_eq!(stars(0.5), "");
    }

    #[test]
    fn pca_line_and_sign() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| (0..9).map(|j| (i as f64) * (j as f64 - 2.0)).collect()).collect();
        let p = pca_2d(&rows).unwrap();
        assert!(p.explained_variance_ratio[0] > 0.999);
        assert!(p.explained_variance_ratio[1] < 1e-9);
        let first = p.components[0].iter().find(|a| a.abs() > 1e-12).unwrap();
        assert!(*first > 0.0);
        assert!(matches!(pca_2d(&vec![vec![1.0, 1.0]; 5]), Err(StatsError::ZeroVariance)));
        assert!(pca_2d(&vec![vec![1.0, 2.0]; 2]).is_err());
    }

    #[test]
    fn spearman_basics() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&xs, &[10.0, 20.0, 30.0, 40.0]).unwrap().rho, 1.0);
        assert_eq!(spearman(&xs, &[4.0, 3.0, 2.0, 1.0]).unwrap().rho, -1.0);
        let c = spearman(&xs, &[1.0; 4]).unwrap();
        assert_eq!((c.rho, c.constant_input), (0.0, true));
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn comparison_shift() {
        let random: Vec<MetricVector<f64>> = (0..10).map(|i| MetricVector::new(0.4 + 0.01 * i as f64, 0.01, 0.5, 100.0)).collect();
        let same = compare_populations(&random, &random).unwrap();
        assert!(same.rows.iter().all(|r| r.delta == 0.0));
        let shifted: Vec<_> = random.iter().map(|v| MetricVector { acc_mean: v.acc_mean + 0.1, ..*v }).collect();
        let t = compare_populations(&random, &shifted).unwrap();
        assert_abs_diff_eq!(t.rows[0].delta, 0.1, epsilon = 1e-12);
        // Random best is 0.49 and the shifted minimum is 0.50.
        assert_eq!(t.exceed_random_best_acc, 1.0);
        assert!(compare_populations(&random, &[]).is_err());
    }

    #[test]
    fn results_table_has_mean_rows() {
        let row = |b: &str, acc: f64| ResultsRow {
            model: "m".into(),
            benchmark: b.into(),
            setting: "Random".into(),
            metrics: MetricVector::new(acc, 0.0, 0.5, 10.0),
        };
        let rows = with_mean_rows(&[row("MMLU", 0.5), row("MATH500", 0.7)]);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].benchmark, "Mean");
        assert_abs_diff_eq!(rows[2].metrics.acc_mean, 0.6, epsilon = 1e-12);
        let csv = results_csv(&rows);
        assert!(csv.starts_with(RESULTS_HEADER));

        let opt = |b: &str, acc: f64| ResultsRow { setting: "Optimized".into(), ..row(b, acc) };
        let rows = with_mean_rows(&[row("MMLU", 0.5), row("MATH500", 0.7), opt("MMLU", 0.6), opt("MATH500", 0.8)]);
        let layout: Vec<(&str, &str)> = rows.iter().map(|r| (r.benchmark.as_str(), r.setting.as_str())).collect();
        assert_eq!(
            layout,
            [
                ("MMLU", "Random"),
                ("MMLU", "Optimized"),
                ("MATH500", "Random"),
                ("MATH500", "Optimized"),
                ("Mean", "Random"),
                ("Mean", "Optimized"),
            ]
        );
        assert_abs_diff_eq!(rows[5].metrics.acc_mean, 0.7, epsilon = 1e-12);
    }
}
