//! Regressors for the additive-noise baseline and their cross-validated
//! selection.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{AdamConfig, AdamState, Mlp, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressorKind {
    Ridge,
    Knn,
    Mlp,
}

impl RegressorKind {
    pub const MENU: [RegressorKind; 3] = [RegressorKind::Ridge, RegressorKind::Knn, RegressorKind::Mlp];

    pub fn as_str(self) -> &'static str {
        match self {
            RegressorKind::Ridge => "ridge",
            RegressorKind::Knn => "knn",
            RegressorKind::Mlp => "mlp",
        }
    }
}

impl std::str::FromStr for RegressorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ridge" | "linear" => Ok(RegressorKind::Ridge),
            "knn" => Ok(RegressorKind::Knn),
            "mlp" => Ok(RegressorKind::Mlp),
            other => Err(format!("unknown regressor '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorSettings {
    pub ridge_lambda: f64,
    pub knn_k: usize,
    pub mlp_hidden: Vec<usize>,
    pub mlp_epochs: usize,
    pub mlp_batch_size: usize,
    pub mlp_learning_rate: f64,
}

impl Default for RegressorSettings {
    fn default() -> Self {
        Self {
            ridge_lambda: 1e-6,
            knn_k: 10,
            mlp_hidden: vec![32, 32],
            mlp_epochs: 150,
            mlp_batch_size: 64,
            mlp_learning_rate: 3e-3,
        }
    }
}

/// Per-column affine standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_default();
        let std = x
            .std_axis(Axis(0), 0.0)
            .iter()
            .map(|&s| if s > 1e-12 && s.is_finite() { s } else { 1.0 })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        Array2::from_shape_fn(x.dim(), |(r, c)| (x[[r, c]] - self.mean[c]) / self.std[c])
    }

    pub fn invert(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        Array2::from_shape_fn(x.dim(), |(r, c)| x[[r, c]] * self.std[c] + self.mean[c])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Regressor {
    Constant { value: Vec<f64> },
    /// `y = x W + b`, `W` stored `p x d` row-major.
    Ridge { weights: Vec<f64>, bias: Vec<f64>, inputs: usize },
    Knn { k: usize, scaler: Standardizer, train_x: Array2<f64>, train_y: Array2<f64> },
    Mlp { net: Mlp, x_scaler: Standardizer, y_scaler: Standardizer },
}

impl Regressor {
    pub fn kind(&self) -> Option<RegressorKind> {
        match self {
            Regressor::Constant { .. } => None,
            Regressor::Ridge { .. } => Some(RegressorKind::Ridge),
            Regressor::Knn { .. } => Some(RegressorKind::Knn),
            Regressor::Mlp { .. } => Some(RegressorKind::Mlp),
        }
    }

    pub fn label(&self) -> &'static str {
        self.kind().map_or("constant", RegressorKind::as_str)
    }

    pub fn fit<R: Rng + ?Sized>(
        kind: RegressorKind,
        x: ArrayView2<'_, f64>,
        y: ArrayView2<'_, f64>,
        settings: &RegressorSettings,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if y.std_axis(Axis(0), 0.0).iter().all(|&s| s == 0.0) {
            let value = y.row(0).to_vec();
            return Ok(Regressor::Constant { value });
        }
        match kind {
            RegressorKind::Ridge => Ok(fit_ridge(x, y, settings.ridge_lambda)),
            RegressorKind::Knn => {
                let scaler = Standardizer::fit(x);
                Ok(Regressor::Knn {
                    k: settings.knn_k.clamp(1, x.nrows()),
                    train_x: scaler.apply(x),
                    scaler,
                    train_y: y.to_owned(),
                })
            }
            RegressorKind::Mlp => fit_mlp(x, y, settings, rng),
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let n = x.nrows();
        match self {
            Regressor::Constant { value } => Array2::from_shape_fn((n, value.len()), |(_, c)| value[c]),
            Regressor::Ridge { weights, bias, inputs } => {
                let d = bias.len();
                let mut out = Array2::zeros((n, d));
                for r in 0..n {
                    for c in 0..d {
                        let mut v = bias[c];
                        for j in 0..*inputs {
                            v += x[[r, j]] * weights[j * d + c];
                        }
                        out[[r, c]] = v;
                    }
                }
                out
            }
            Regressor::Knn { k, scaler, train_x, train_y } => {
                let q = scaler.apply(x);
                let mut out = Array2::zeros((n, train_y.ncols()));
                let mut dist: Vec<(f64, usize)> = Vec::with_capacity(train_x.nrows());
                for r in 0..n {
                    dist.clear();
                    for (i, t) in train_x.outer_iter().enumerate() {
                        let d: f64 = t.iter().zip(q.row(r)).map(|(a, b)| (a - b) * (a - b)).sum();
                        dist.push((d, i));
                    }
                    dist.select_nth_unstable_by(*k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    let mut row = Array1::zeros(train_y.ncols());
                    for &(_, i) in &dist[..*k] {
                        row += &train_y.row(i);
                    }
                    out.row_mut(r).assign(&(row / *k as f64));
                }
                out
            }
            Regressor::Mlp { net, x_scaler, y_scaler } => {
                let z = net.forward(x_scaler.apply(x).view()).expect("input width fixed at fit");
                y_scaler.invert(z.view())
            }
        }
    }
}

fn fit_ridge(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, lambda: f64) -> Regressor {
    let (n, p) = x.dim();
    let d = y.ncols();
    // centered normal equations; the intercept is not penalized
    let xm = x.mean_axis(Axis(0)).expect("nonempty");
    let ym = y.mean_axis(Axis(0)).expect("nonempty");
    let xc = DMatrix::from_fn(n, p, |r, c| x[[r, c]] - xm[c]);
    let scale = (xc.transpose() * &xc).diagonal().max().max(1.0);
    let gram = xc.transpose() * &xc + DMatrix::identity(p, p) * (lambda * scale);
    let chol = gram.clone().cholesky();
    let mut weights = vec![0.0; p * d];
    for c in 0..d {
        let yc = DVector::from_fn(n, |r, _| y[[r, c]] - ym[c]);
        let rhs = xc.transpose() * yc;
        let beta = match &chol {
            Some(ch) => ch.solve(&rhs),
            None => gram.clone().pseudo_inverse(1e-12).map(|pinv| pinv * &rhs).unwrap_or_else(|_| DVector::zeros(p)),
        };
        for j in 0..p {
            weights[j * d + c] = beta[j];
        }
    }
    let bias = (0..d).map(|c| ym[c] - (0..p).map(|j| xm[j] * weights[j * d + c]).sum::<f64>()).collect();
    Regressor::Ridge { weights, bias, inputs: p }
}

fn fit_mlp<R: Rng + ?Sized>(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    settings: &RegressorSettings,
    rng: &mut R,
) -> Result<Regressor, NnError> {
    let x_scaler = Standardizer::fit(x);
    let y_scaler = Standardizer::fit(y);
    let xs = x_scaler.apply(x);
    let ys = y_scaler.apply(y);
    let mut sizes = vec![x.ncols()];
    sizes.extend(&settings.mlp_hidden);
    sizes.push(y.ncols());
    let mut net = Mlp::new(&sizes, rng)?;
    let mut adam = AdamState::new(net.num_params(), AdamConfig::with_lr(settings.mlp_learning_rate));
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    for _ in 0..settings.mlp_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(settings.mlp_batch_size.max(1)) {
            let bx = xs.select(Axis(0), chunk);
            let by = ys.select(Axis(0), chunk);
            let trace = net.forward_trace(bx.view())?;
            let upstream = (&trace.output - &by).mapv(|v| 2.0 * v / chunk.len() as f64);
            let grad = net.backward(&trace, upstream.view())?;
            adam.step(net.params_mut(), &grad.params)?;
        }
    }
    Ok(Regressor::Mlp { net, x_scaler, y_scaler })
}

pub fn rmse(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    let total: f64 = a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum();
    (total / a.len().max(1) as f64).sqrt()
}

/// K-fold cross-validated RMSE of each candidate, in menu order.
pub fn cross_validate<R: Rng + ?Sized>(
    menu: &[RegressorKind],
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    folds: usize,
    settings: &RegressorSettings,
    rng: &mut R,
) -> Result<Vec<(RegressorKind, f64)>, NnError> {
    let n = x.nrows();
    let folds = folds.clamp(2, n.max(2));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut scores = vec![];
    for &kind in menu {
        let mut sq = 0.0;
        let mut count = 0usize;
        for f in 0..folds {
            let test: Vec<usize> = idx.iter().copied().skip(f).step_by(folds).collect();
            let train: Vec<usize> = idx.iter().enumerate().filter(|(i, _)| i % folds != f).map(|(_, &v)| v).collect();
            let model = Regressor::fit(kind, x.select(Axis(0), &train).view(), y.select(Axis(0), &train).view(), settings, rng)?;
            let pred = model.predict(x.select(Axis(0), &test).view());
            let truth = y.select(Axis(0), &test);
            sq += pred.iter().zip(truth.iter()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
            count += truth.len();
        }
        scores.push((kind, (sq / count as f64).sqrt()));
    }
    Ok(scores)
}

/// Earliest menu entry whose score is within `tolerance` (relative) of the
/// best, so a simpler model wins near-ties.
pub fn select(scores: &[(RegressorKind, f64)], tolerance: f64) -> RegressorKind {
    let best = scores.iter().map(|s| s.1).filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    scores
        .iter()
        .find(|s| s.1.is_finite() && s.1 <= best * (1.0 + tolerance))
        .map(|s| s.0)
        .unwrap_or(scores[0].0)
}
