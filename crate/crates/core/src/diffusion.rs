//! Per-node conditional diffusion models: linear noise schedule, epsilon
//! regression training, and the deterministic implicit encoder/decoder pair.
//!
//! The noise network sees `[z_t | parent values | t/T]` and predicts the
//! Gaussian component of `z_t`. Encoding and decoding never draw randomness;
//! both are pure functions of the value, the parents, and the weights.

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{AdamConfig, AdamState, Mlp, NnError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("schedule needs T >= 1, got {0}")]
    ZeroSteps(usize),
    #[error("schedule bounds must satisfy 0 < beta_min <= beta_max < 1, got [{min}, {max}]")]
    BetaRange { min: f64, max: f64 },
    #[error("node {node}: {what} has {got} columns, expected {expected}")]
    Columns { node: usize, what: &'static str, expected: usize, got: usize },
    #[error("node {node}: value and parent rows differ ({values} vs {parents})")]
    Rows { node: usize, values: usize, parents: usize },
    #[error("node {node}: training needs at least one epoch, one row and batch size >= 1")]
    EmptyTraining { node: usize },
    #[error("node {node}: non-finite loss in epoch {epoch}")]
    NonFiniteLoss { node: usize, epoch: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Linear beta schedule with cumulative products `alpha_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    /// `alphas[t]` for `t = 0..=T`, with `alphas[0] = 1`.
    alphas: Vec<f64>,
}

impl NoiseSchedule {
    /// `beta_t = (beta_max - beta_min) (t - 1) / (T - 1) + beta_min`; for
    /// `T = 1` the single step uses `beta_min`.
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self, DiffusionError> {
        if steps == 0 {
            return Err(DiffusionError::ZeroSteps(steps));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(DiffusionError::BetaRange { min: beta_min, max: beta_max });
        }
        let betas: Vec<f64> = if steps == 1 {
            vec![beta_min]
        } else {
            (1..=steps)
                .map(|t| (beta_max - beta_min) * (t - 1) as f64 / (steps - 1) as f64 + beta_min)
                .collect()
        };
        Ok(Self::from_betas(betas))
    }

    fn from_betas(betas: Vec<f64>) -> Self {
        let mut alphas = Vec::with_capacity(betas.len() + 1);
        alphas.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alphas.push(acc);
        }
        Self { betas, alphas }
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `beta_t` for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// `alpha_t` for `t` in `0..=T`.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }
}

/// Anything that predicts the noise component at diffusion step `t`.
pub trait NoisePredictor {
    fn predict(&self, z: ArrayView2<'_, f64>, parents: ArrayView2<'_, f64>, t: usize) -> Array2<f64>;
}

/// `epsilon = 0` everywhere; makes encode/decode pure rescalings.
pub struct ZeroPredictor;

impl NoisePredictor for ZeroPredictor {
    fn predict(&self, z: ArrayView2<'_, f64>, _parents: ArrayView2<'_, f64>, _t: usize) -> Array2<f64> {
        Array2::zeros(z.raw_dim())
    }
}

/// `eps = W pa + b`, independent of the noisy value and of `t`. `W` is
/// `dim x parent_dim`. Encoding and decoding with it are exact inverses.
#[derive(Debug, Clone, PartialEq)]
pub struct ParentAffine {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ParentAffine {
    /// Entries of `W` and `b` uniform on `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(dim: usize, parent_dim: usize, scale: f64, rng: &mut R) -> Self {
        Self {
            weights: Array2::from_shape_fn((dim, parent_dim), |_| rng.random_range(-scale..=scale)),
            bias: Array1::from_shape_fn(dim, |_| rng.random_range(-scale..=scale)),
        }
    }
}

impl NoisePredictor for ParentAffine {
    fn predict(&self, _z: ArrayView2<'_, f64>, parents: ArrayView2<'_, f64>, _t: usize) -> Array2<f64> {
        parents.dot(&self.weights.t()) + &self.bias
    }
}

/// Forward implicit recursion from `Z^0 = x` to `Z^T`:
/// `Z^{t+1} = sqrt(a_{t+1}/a_t) Z^t + eps(Z^t, pa, t) (sqrt(1-a_{t+1}) - sqrt(a_{t+1}(1-a_t)/a_t))`.
pub fn ddim_encode<P: NoisePredictor + ?Sized>(
    schedule: &NoiseSchedule,
    predictor: &P,
    x: ArrayView2<'_, f64>,
    parents: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let mut z = x.to_owned();
    for t in 0..schedule.steps() {
        let (a_t, a_next) = (schedule.alpha(t), schedule.alpha(t + 1));
        let keep = (a_next / a_t).sqrt();
        let mix = (1.0 - a_next).sqrt() - (a_next * (1.0 - a_t) / a_t).sqrt();
        let eps = predictor.predict(z.view(), parents, t);
        z.zip_mut_with(&eps, |zv, &e| *zv = keep * *zv + mix * e);
    }
    z
}

/// Reverse implicit recursion from `X^T = z` to `X^0`:
/// `X^{t-1} = sqrt(a_{t-1}/a_t) X^t - eps(X^t, pa, t) (sqrt(a_{t-1}(1-a_t)/a_t) - sqrt(1-a_{t-1}))`.
pub fn ddim_decode<P: NoisePredictor + ?Sized>(
    schedule: &NoiseSchedule,
    predictor: &P,
    z: ArrayView2<'_, f64>,
    parents: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let mut x = z.to_owned();
    for t in (1..=schedule.steps()).rev() {
        let (a_prev, a_t) = (schedule.alpha(t - 1), schedule.alpha(t));
        let keep = (a_prev / a_t).sqrt();
        let mix = (a_prev * (1.0 - a_t) / a_t).sqrt() - (1.0 - a_prev).sqrt();
        let eps = predictor.predict(x.view(), parents, t);
        x.zip_mut_with(&eps, |xv, &e| *xv = keep * *xv - mix * e);
    }
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            beta_min: 1e-4,
            beta_max: 0.1,
            hidden: vec![128, 256, 256],
            epochs: 500,
            batch_size: 64,
            learning_rate: 1e-4,
        }
    }
}

impl DiffusionConfig {
    pub fn schedule(&self) -> Result<NoiseSchedule, DiffusionError> {
        NoiseSchedule::linear(self.steps, self.beta_min, self.beta_max)
    }
}

/// Noise network and schedule for one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionNodeModel {
    pub node: usize,
    pub dim: usize,
    pub parent_dim: usize,
    pub net: Mlp,
    pub schedule: NoiseSchedule,
}

impl DiffusionNodeModel {
    /// Fresh model with randomly initialized network of the configured width.
    pub fn new<R: Rng + ?Sized>(
        node: usize,
        dim: usize,
        parent_dim: usize,
        config: &DiffusionConfig,
        rng: &mut R,
    ) -> Result<Self, DiffusionError> {
        let mut sizes = vec![dim + parent_dim + 1];
        sizes.extend(&config.hidden);
        sizes.push(dim);
        let net = Mlp::new(&sizes, rng)?;
        Ok(Self { node, dim, parent_dim, net, schedule: config.schedule()? })
    }

    /// Wraps an existing network; its input must be `dim + parent_dim + 1`
    /// wide and its output `dim` wide.
    pub fn with_net(
        node: usize,
        dim: usize,
        parent_dim: usize,
        net: Mlp,
        schedule: NoiseSchedule,
    ) -> Result<Self, DiffusionError> {
        if net.input_dim() != dim + parent_dim + 1 {
            return Err(DiffusionError::Columns {
                node,
                what: "network input",
                expected: dim + parent_dim + 1,
                got: net.input_dim(),
            });
        }
        if net.output_dim() != dim {
            return Err(DiffusionError::Columns {
                node,
                what: "network output",
                expected: dim,
                got: net.output_dim(),
            });
        }
        Ok(Self { node, dim, parent_dim, net, schedule })
    }

    fn check(&self, values: ArrayView2<'_, f64>, parents: ArrayView2<'_, f64>) -> Result<(), DiffusionError> {
        if values.ncols() != self.dim {
            return Err(DiffusionError::Columns {
                node: self.node,
                what: "value",
                expected: self.dim,
                got: values.ncols(),
            });
        }
        if parents.ncols() != self.parent_dim {
            return Err(DiffusionError::Columns {
                node: self.node,
                what: "parent",
                expected: self.parent_dim,
                got: parents.ncols(),
            });
        }
        if values.nrows() != parents.nrows() {
            return Err(DiffusionError::Rows {
                node: self.node,
                values: values.nrows(),
                parents: parents.nrows(),
            });
        }
        Ok(())
    }

    fn net_input(&self, z: ArrayView2<'_, f64>, parents: ArrayView2<'_, f64>, t: usize) -> Array2<f64> {
        let n = z.nrows();
        let mut input = Array2::zeros((n, self.dim + self.parent_dim + 1));
        input.slice_mut(s![.., ..self.dim]).assign(&z);
        input.slice_mut(s![.., self.dim..self.dim + self.parent_dim]).assign(&parents);
        input.column_mut(self.dim + self.parent_dim).fill(t as f64 / self.schedule.steps() as f64);
        input
    }

    pub fn encode(&self, x: ArrayView2<'_, f64>, parents: ArrayView2<'_, f64>) -> Result<Array2<f64>, DiffusionError> {
        self.check(x, parents)?;
        Ok(ddim_encode(&self.schedule, self, x, parents))
    }

    pub fn decode(&self, z: ArrayView2<'_, f64>, parents: ArrayView2<'_, f64>) -> Result<Array2<f64>, DiffusionError> {
        self.check(z, parents)?;
        Ok(ddim_decode(&self.schedule, self, z, parents))
    }

    /// Epsilon regression. Each epoch is one pass over a fresh shuffle; every
    /// sample in a batch draws its own `t` and Gaussian noise. Returns the
    /// mean per-sample squared error of each epoch.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        values: ArrayView2<'_, f64>,
        parents: ArrayView2<'_, f64>,
        epochs: usize,
        batch_size: usize,
        learning_rate: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>, DiffusionError> {
        self.check(values, parents)?;
        let n = values.nrows();
        if epochs == 0 || n == 0 || batch_size == 0 {
            return Err(DiffusionError::EmptyTraining { node: self.node });
        }
        let steps = self.schedule.steps();
        let width = self.dim + self.parent_dim + 1;
        let mut adam = AdamState::new(self.net.num_params(), AdamConfig::with_lr(learning_rate));
        let mut order: Vec<usize> = (0..n).collect();
        let mut losses = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            order.shuffle(rng);
            let mut total = 0.0;
            for chunk in order.chunks(batch_size) {
                let b = chunk.len();
                let mut input = Array2::zeros((b, width));
                let mut noise = Array2::zeros((b, self.dim));
                for (r, &i) in chunk.iter().enumerate() {
                    let t = rng.random_range(1..=steps);
                    let a = self.schedule.alpha(t);
                    let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
                    for j in 0..self.dim {
                        let e: f64 = rng.sample(StandardNormal);
                        noise[[r, j]] = e;
                        input[[r, j]] = sa * values[[i, j]] + sn * e;
                    }
                    for j in 0..self.parent_dim {
                        input[[r, self.dim + j]] = parents[[i, j]];
                    }
                    input[[r, width - 1]] = t as f64 / steps as f64;
                }
                let trace = self.net.forward_trace(input.view())?;
                let diff = &trace.output - &noise;
                total += diff.iter().map(|d| d * d).sum::<f64>();
                let upstream = diff.mapv(|d| 2.0 * d / b as f64);
                let grad = self.net.backward(&trace, upstream.view())?;
                adam.step(self.net.params_mut(), &grad.params)?;
            }
            let loss = total / n as f64;
            if !loss.is_finite() {
                return Err(DiffusionError::NonFiniteLoss { node: self.node, epoch });
            }
            losses.push(loss);
        }
        Ok(losses)
    }
}

impl NoisePredictor for DiffusionNodeModel {
    fn predict(&self, z: ArrayView2<'_, f64>, parents: ArrayView2<'_, f64>, t: usize) -> Array2<f64> {
        let input = self.net_input(z, parents, t);
        self.net.forward(input.view()).expect("input width fixed at construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_schedule_endpoints() {
        let s = NoiseSchedule::linear(100, 1e-4, 0.1).unwrap();
        assert_abs_diff_eq!(s.beta(1), 1e-4, epsilon = 1e-18);
        assert_abs_diff_eq!(s.beta(100), 0.1, epsilon = 1e-15);
        assert_eq!(s.alpha(0), 1.0);
    }

    #[test]
    fn single_step_schedule() {
        let s = NoiseSchedule::linear(1, 0.1, 0.5).unwrap();
        assert_eq!(s.betas(), &[0.1]);
        assert_abs_diff_eq!(s.alpha(1), 0.9, epsilon = 1e-15);
    }

    #[test]
    fn alphas_match_brute_force_product() {
        let s = NoiseSchedule::linear(100, 1e-4, 0.1).unwrap();
        for t in 0..=100 {
            let mut prod = 1.0;
            for i in 1..=t {
                let beta = (0.1 - 1e-4) * (i - 1) as f64 / 99.0 + 1e-4;
                prod *= 1.0 - beta;
            }
            assert_abs_diff_eq!(s.alpha(t), prod, epsilon = 1e-12);
        }
        let a = s.alphas();
        assert!(a.windows(2).all(|w| w[1] < w[0]));
        assert!(a[100] > 0.0 && a[100] < 1.0);
        assert!(s.betas().windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn invalid_schedules_rejected() {
        assert!(NoiseSchedule::linear(0, 1e-4, 0.1).is_err());
        assert!(NoiseSchedule::linear(10, 0.2, 0.1).is_err());
        assert!(NoiseSchedule::linear(10, 0.0, 0.1).is_err());
        assert!(NoiseSchedule::linear(10, 0.1, 1.0).is_err());
    }

    #[test]
    fn zero_predictor_encode_telescopes() {
        let s = NoiseSchedule::linear(100, 1e-4, 0.1).unwrap();
        let x = array![[2.0, -1.0], [0.5, 3.0]];
        let pa = Array2::<f64>::zeros((2, 0));
        let z = ddim_encode(&s, &ZeroPredictor, x.view(), pa.view());
        let expected = x.mapv(|v| v * s.alpha(100).sqrt());
        for (a, b) in z.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let back = ddim_decode(&s, &ZeroPredictor, z.view(), pa.view());
        for (a, b) in back.iter().zip(x.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn single_step_encode() {
        let s = NoiseSchedule::linear(1, 0.1, 0.1).unwrap();
        let z = ddim_encode(&s, &ZeroPredictor, array![[2.0]].view(), Array2::zeros((1, 0)).view());
        assert_abs_diff_eq!(z[[0, 0]], 0.9f64.sqrt() * 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z[[0, 0]], 1.897367, epsilon = 1e-6);
    }

    #[test]
    fn parent_affine_predictor_round_trips() {
        let s = NoiseSchedule::linear(100, 1e-4, 0.1).unwrap();
        let p = ParentAffine { weights: array![[0.7, -1.2]], bias: array![0.3] };
        let x = array![[1.5], [-0.2], [4.0]];
        let pa = array![[0.1, 0.2], [-1.0, 2.0], [3.0, 0.0]];
        let z = ddim_encode(&s, &p, x.view(), pa.view());
        let back = ddim_decode(&s, &p, z.view(), pa.view());
        for (a, b) in back.iter().zip(x.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_network_matches_zero_predictor() {
        let cfg = DiffusionConfig { hidden: vec![4], ..DiffusionConfig::default() };
        let net = Mlp::zeros(&[3, 4, 1]).unwrap();
        let m = DiffusionNodeModel::with_net(1, 1, 1, net, cfg.schedule().unwrap()).unwrap();
        let x = array![[0.7], [-2.0]];
        let pa = array![[1.0], [5.0]];
        let z = m.encode(x.view(), pa.view()).unwrap();
        let back = m.decode(z.view(), pa.view()).unwrap();
        for (a, b) in back.iter().zip(x.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        assert_eq!(m.encode(x.view(), pa.view()).unwrap(), z);
    }

    #[test]
    fn shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = DiffusionConfig { hidden: vec![4], ..DiffusionConfig::default() };
        let m = DiffusionNodeModel::new(0, 2, 1, &cfg, &mut rng).unwrap();
        assert!(m.encode(array![[1.0]].view(), array![[1.0]].view()).is_err());
        assert!(m.decode(array![[1.0, 2.0]].view(), array![[1.0], [2.0]].view()).is_err());
        assert!(DiffusionNodeModel::with_net(0, 1, 1, Mlp::zeros(&[3, 2]).unwrap(), cfg.schedule().unwrap()).is_err());
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 256;
        let pa = Array2::from_shape_fn((n, 1), |_| rng.sample::<f64, _>(StandardNormal));
        let x = Array2::from_shape_fn((n, 1), |(i, _)| pa[[i, 0]].sin() + 0.1 * rng.sample::<f64, _>(StandardNormal));
        let cfg = DiffusionConfig { hidden: vec![32, 32], steps: 20, ..DiffusionConfig::default() };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let mut m = DiffusionNodeModel::new(1, 1, 1, &cfg, &mut rng).unwrap();
            let losses = m.train(x.view(), pa.view(), 30, 32, 1e-3, &mut rng).unwrap();
            (m, losses)
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert!(la.last().unwrap() < &la[0]);
    }

    #[test]
    fn training_rejects_empty_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = DiffusionConfig { hidden: vec![4], ..DiffusionConfig::default() };
        let mut m = DiffusionNodeModel::new(0, 1, 0, &cfg, &mut rng).unwrap();
        let x = Array2::<f64>::zeros((4, 1));
        let pa = Array2::<f64>::zeros((4, 0));
        assert!(matches!(
            m.train(x.view(), pa.view(), 0, 2, 1e-3, &mut rng),
            Err(DiffusionError::EmptyTraining { .. })
        ));
    }
    /// `eps = a z + b` for every step.
    struct ValueAffine(f64, f64);

    impl NoisePredictor for ValueAffine {
        fn predict(&self, z: ArrayView2<'_, f64>, _parents: ArrayView2<'_, f64>, _t: usize) -> Array2<f64> {
            z.mapv(|v| self.0 * v + self.1)
        }
    }

    #[test]
    fn value_affine_round_trip_matches_scalar_composition() {
        // Each explicit step is affine in its input, so the whole round trip is
        // an affine map x -> gain x + shift built from the step coefficients.
        // It is not the identity: the decoder evaluates eps at the later state.
        let s = NoiseSchedule::linear(100, 1e-4, 0.1).unwrap();
        let (a, b) = (0.5, 0.3);
        let (mut gain, mut shift) = (1.0f64, 0.0f64);
        let al = |t: usize| -> f64 {
            let mut p = 1.0;
            for i in 1..=t {
                p *= 1.0 - ((0.1 - 1e-4) * (i - 1) as f64 / 99.0 + 1e-4);
            }
            p
        };
        for t in 0..100 {
            let c1 = (al(t + 1) / al(t)).sqrt();
            let c2 = (1.0 - al(t + 1)).sqrt() - (al(t + 1) * (1.0 - al(t)) / al(t)).sqrt();
            gain *= c1 + a * c2;
            shift = (c1 + a * c2) * shift + b * c2;
        }
        for t in (1..=100).rev() {
            let k = (al(t - 1) / al(t)).sqrt();
            let m = (al(t - 1) * (1.0 - al(t)) / al(t)).sqrt() - (1.0 - al(t - 1)).sqrt();
            gain *= k - a * m;
            shift = (k - a * m) * shift - b * m;
        }
        let x = array![[1.0], [-2.0], [0.25]];
        let pa = Array2::<f64>::zeros((3, 0));
        let p = ValueAffine(a, b);
        let back = ddim_decode(&s, &p, ddim_encode(&s, &p, x.view(), pa.view()).view(), pa.view());
        for (r, v) in back.iter().zip(x.iter()) {
            assert_abs_diff_eq!(*r, gain * v + shift, epsilon = 1e-10);
        }
        assert!((back[[0, 0]] - 1.0).abs() > 1e-4);
    }
}
