//! Sample metrics: kernel MMD, paired MSE and the HSIC independence test.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("column count mismatch: {0} vs {1}")]
    Columns(usize, usize),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    Shape((usize, usize), (usize, usize)),
    #[error("row count mismatch: {0} vs {1}")]
    Rows(usize, usize),
    #[error("bandwidth must be positive and finite, got {0}")]
    Bandwidth(f64),
}

/// RBF kernel `exp(-|a-b|^2 / (2 sigma^2))` with a fixed or data-driven
/// bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum KernelSpec {
    /// Median of the pairwise distances; zero falls back to 1.
    #[default]
    MedianHeuristic,
    Fixed(f64),
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn rows(m: ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len();
    let mid = n / 2;
    let (_, hi, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let hi = *hi;
    if n % 2 == 1 {
        hi
    } else {
        let lo = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// Median of the distances over distinct pairs, 1.0 if that is zero.
pub fn median_bandwidth(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(sq_dist(&points[i], &points[j]).sqrt());
        }
    }
    let m = median(d);
    if m > 0.0 && m.is_finite() { m } else { 1.0 }
}

fn resolve(kernel: KernelSpec, points: impl FnOnce() -> Vec<Vec<f64>>) -> Result<f64, MetricsError> {
    match kernel {
        KernelSpec::Fixed(s) if s > 0.0 && s.is_finite() => Ok(s),
        KernelSpec::Fixed(s) => Err(MetricsError::Bandwidth(s)),
        KernelSpec::MedianHeuristic => Ok(median_bandwidth(&points())),
    }
}

fn precedes(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> bool {
    let key = a.nrows().cmp(&b.nrows());
    key.then_with(|| {
        a.iter()
            .zip(b.iter())
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    })
    .is_lt()
}

/// Squared MMD estimate with every `i == j` pair removed from all three
/// kernel means. For the cross term the excluded pairs are `(i, i)` for
/// `i < min(m, n)`. May be negative; see [`mmd_report`].
pub fn mmd_rbf(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, kernel: KernelSpec) -> Result<f64, MetricsError> {
    let (m, n) = (x.nrows(), y.nrows());
    for got in [m, n] {
        if got < 2 {
            return Err(MetricsError::TooFewRows { needed: 2, got });
        }
    }
    if x.ncols() != y.ncols() {
        return Err(MetricsError::Columns(x.ncols(), y.ncols()));
    }
    // canonical argument order so the summation order, and hence the
    // result, is exactly symmetric
    let (x, y) = if precedes(y, x) {
        (y, x)
    } else {
        (x, y)
    };
    let (m, n) = (x.nrows(), y.nrows());
    let xs = rows(x);
    let ys = rows(y);
    let sigma = resolve(kernel, || xs.iter().chain(&ys).cloned().collect())?;
    let gamma = 1.0 / (2.0 * sigma * sigma);
    let k = |a: &[f64], b: &[f64]| (-gamma * sq_dist(a, b)).exp();

    let within = |s: &[Vec<f64>]| {
        let mut total = 0.0;
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                total += k(&s[i], &s[j]);
            }
        }
        2.0 * total / (s.len() * (s.len() - 1)) as f64
    };
    // pairs (i, j) and (j, i) are summed together in the same order as the
    // within-sample loops, so identical samples cancel exactly
    let common = m.min(n);
    let mut cross = 0.0;
    for i in 0..common {
        for j in i + 1..common {
            cross += k(&xs[i], &ys[j]) + k(&xs[j], &ys[i]);
        }
    }
    for (i, a) in xs.iter().enumerate() {
        for (j, b) in ys.iter().enumerate() {
            if i.max(j) >= common {
                cross += k(a, b);
            }
        }
    }
    let cross = cross / (m * n - m.min(n)) as f64;
    Ok(within(&xs) + within(&ys) - 2.0 * cross)
}

/// [`mmd_rbf`] clamped at zero for reporting.
pub fn mmd_report(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, kernel: KernelSpec) -> Result<f64, MetricsError> {
    mmd_rbf(x, y, kernel).map(|v| v.max(0.0))
}

pub fn mse_paired(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64, MetricsError> {
    if a.dim() != b.dim() {
        return Err(MetricsError::Shape(a.dim(), b.dim()));
    }
    if a.is_empty() {
        return Err(MetricsError::TooFewRows { needed: 1, got: 0 });
    }
    let total: f64 = a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum();
    Ok(total / a.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HsicMethod {
    Gamma,
    Permutation,
    /// A constant input; nothing to test.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsicResult {
    /// Biased statistic scaled by `m` (the gamma null's support).
    pub statistic: f64,
    pub p_value: f64,
    pub method: HsicMethod,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsicOptions {
    pub permutations: usize,
    /// Skip the gamma approximation and always permute.
    pub force_permutation: bool,
    /// Seed for the permutation stream.
    pub seed: u64,
}

impl Default for HsicOptions {
    fn default() -> Self {
        Self { permutations: 500, force_permutation: false, seed: 0 }
    }
}

pub const HSIC_MIN_ROWS: usize = 20;

fn gram(points: &[Vec<f64>]) -> Array2<f64> {
    let sigma = median_bandwidth(points);
    let gamma = 1.0 / (2.0 * sigma * sigma);
    let n = points.len();
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        k[[i, i]] = 1.0;
        for j in i + 1..n {
            let v = (-gamma * sq_dist(&points[i], &points[j])).exp();
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

fn center(k: &Array2<f64>) -> Array2<f64> {
    let row_means = k.mean_axis(Axis(1)).expect("nonempty");
    let col_means = k.mean_axis(Axis(0)).expect("nonempty");
    let grand = k.mean().expect("nonempty");
    Array2::from_shape_fn(k.dim(), |(i, j)| k[[i, j]] - row_means[i] - col_means[j] + grand)
}

fn has_constant_column(m: ArrayView2<'_, f64>) -> bool {
    m.columns().into_iter().any(|c| c.iter().all(|&v| v == c[0]))
}

fn offdiag_mean(k: &Array2<f64>) -> f64 {
    let n = k.nrows();
    (k.sum() - k.diag().sum()) / (n * (n - 1)) as f64
}

/// Kernel independence test between paired samples `x` and `y` with RBF
/// kernels (median heuristic per variable). The null is approximated by a
/// gamma distribution matched to its first two moments; when those moments
/// are unusable a permutation test is run instead.
pub fn hsic_test(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, opts: HsicOptions) -> Result<HsicResult, MetricsError> {
    let m = x.nrows();
    if m != y.nrows() {
        return Err(MetricsError::Rows(m, y.nrows()));
    }
    if m < HSIC_MIN_ROWS {
        return Err(MetricsError::TooFewRows { needed: HSIC_MIN_ROWS, got: m });
    }
    if has_constant_column(x) || has_constant_column(y) {
        log::warn!("HSIC input has a constant column; reporting p = 1");
        return Ok(HsicResult { statistic: 0.0, p_value: 1.0, method: HsicMethod::Degenerate });
    }
    let k = gram(&rows(x));
    let l = gram(&rows(y));
    let kc = center(&k);
    let lc = center(&l);
    let mf = m as f64;
    let statistic = (&kc * &lc).sum() / mf;

    if !opts.force_permutation {
        let mut v = (&kc * &lc).mapv(|a| (a / 6.0).powi(2));
        v.diag_mut().fill(0.0);
        let var = 72.0 * (mf - 4.0) * (mf - 5.0) / (mf * (mf - 1.0) * (mf - 2.0) * (mf - 3.0))
            * (v.sum() / (mf * (mf - 1.0)));
        let mu_x = offdiag_mean(&k);
        let mu_y = offdiag_mean(&l);
        let mean = (1.0 + mu_x * mu_y - mu_x - mu_y) / mf;
        let shape = mean * mean / var;
        let scale = var * mf / mean;
        if shape.is_finite() && scale.is_finite() && shape > 0.0 && scale > 0.0 {
            if let Ok(dist) = Gamma::new(shape, 1.0 / scale) {
                let p = (1.0 - dist.cdf(statistic)).clamp(0.0, 1.0);
                return Ok(HsicResult { statistic, p_value: p, method: HsicMethod::Gamma });
            }
        }
        log::debug!("HSIC gamma moments degenerate (shape {shape}, scale {scale}); permuting");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut perm: Vec<usize> = (0..m).collect();
    let mut exceed = 0usize;
    for _ in 0..opts.permutations {
        perm.shuffle(&mut rng);
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                s += kc[[i, j]] * lc[[perm[i], perm[j]]];
            }
        }
        if s / mf >= statistic {
            exceed += 1;
        }
    }
    let p = (exceed + 1) as f64 / (opts.permutations + 1) as f64;
    Ok(HsicResult { statistic, p_value: p, method: HsicMethod::Permutation })
}

/// [`hsic_test`] with default options.
pub fn hsic_pvalue(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<HsicResult, MetricsError> {
    hsic_test(x, y, HsicOptions::default())
}
