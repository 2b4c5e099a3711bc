//! Dense MLP with SiLU hidden activations, exact reverse-mode gradients, and
//! Adam.
//!
//! Parameters live in one flat buffer, layer by layer from input to output;
//! each layer stores its weight matrix row-major as `out x in` followed by
//! its bias vector. Gradients use the same layout, so the optimizer only
//! ever sees two slices.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("an MLP needs at least an input and an output layer, got sizes {0:?}")]
    BadLayout(Vec<usize>),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("parameter buffer has {got} values, layout needs {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error("non-finite gradient at parameter {index}")]
    NonFiniteGradient { index: usize },
    #[error("non-finite parameter at index {index}")]
    NonFiniteParameter { index: usize },
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn silu_scalar(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
fn silu_derivative(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Elementwise `x * sigmoid(x)`.
pub fn silu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| silu_scalar(v)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Cached activations from a batched forward pass.
pub struct ForwardTrace {
    /// Input to each layer (`inputs[0]` is the network input).
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

/// Gradients for one input/upstream pair, or summed over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub params: Vec<f64>,
    pub input: Array2<f64>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    fn check_layout(sizes: &[usize]) -> Result<(), NnError> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(NnError::BadLayout(sizes.to_vec()));
        }
        Ok(())
    }

    /// All parameters zero.
    pub fn zeros(sizes: &[usize]) -> Result<Self, NnError> {
        Self::check_layout(sizes)?;
        Ok(Self { sizes: sizes.to_vec(), params: vec![0.0; param_count(sizes)] })
    }

    /// Default initialization: weights and biases uniform on
    /// `[-sqrt(1/fan_in), sqrt(1/fan_in)]`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self, NnError> {
        let mut net = Self::zeros(sizes)?;
        let mut offset = 0;
        for w in sizes.windows(2) {
            let bound = (1.0 / w[0] as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let n = w[0] * w[1] + w[1];
            for p in &mut net.params[offset..offset + n] {
                *p = dist.sample(rng);
            }
            offset += n;
        }
        Ok(net)
    }

    /// Every weight and bias drawn uniformly from `[lo, hi]`.
    pub fn uniform<R: Rng + ?Sized>(
        sizes: &[usize],
        lo: f64,
        hi: f64,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut net = Self::zeros(sizes)?;
        let dist = Uniform::new_inclusive(lo, hi).expect("valid range");
        for p in &mut net.params {
            *p = dist.sample(rng);
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self, NnError> {
        Self::check_layout(sizes)?;
        let expected = param_count(sizes);
        if params.len() != expected {
            return Err(NnError::ParamCount { expected, got: params.len() });
        }
        if let Some(index) = params.iter().position(|p| !p.is_finite()) {
            return Err(NnError::NonFiniteParameter { index });
        }
        Ok(Self { sizes: sizes.to_vec(), params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    fn layer_offset(&self, layer: usize) -> usize {
        param_count(&self.sizes[..=layer])
    }

    /// Weight (`out x in`) and bias views of one layer.
    pub fn layer(&self, layer: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
        let off = self.layer_offset(layer);
        let w = ArrayView2::from_shape((n_out, n_in), &self.params[off..off + n_in * n_out])
            .expect("layout checked at construction");
        let b = ArrayView1::from(&self.params[off + n_in * n_out..off + n_in * n_out + n_out]);
        (w, b)
    }

    fn layer_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
        let off = self.layer_offset(layer);
        let (w, rest) = self.params[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
        (w, rest)
    }

    /// Overwrites one layer's weights (row-major `out x in`) and bias.
    pub fn set_layer(&mut self, layer: usize, weights: &[f64], bias: &[f64]) -> Result<(), NnError> {
        let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
        if weights.len() != n_in * n_out {
            return Err(NnError::Shape { expected: n_in * n_out, got: weights.len() });
        }
        if bias.len() != n_out {
            return Err(NnError::Shape { expected: n_out, got: bias.len() });
        }
        let (w, b) = self.layer_mut(layer);
        w.copy_from_slice(weights);
        b.copy_from_slice(bias);
        Ok(())
    }

    pub fn apply(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        if input.len() != self.input_dim() {
            return Err(NnError::Shape { expected: self.input_dim(), got: input.len() });
        }
        let mut a = input.to_vec();
        let last = self.num_layers() - 1;
        for l in 0..self.num_layers() {
            let (w, b) = self.layer(l);
            let mut z: Vec<f64> = b.to_vec();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = w.row(o);
                *zo += row.iter().zip(&a).map(|(wi, ai)| wi * ai).sum::<f64>();
            }
            if l != last {
                z.iter_mut().for_each(|v| *v = silu_scalar(*v));
            }
            a = z;
        }
        Ok(a)
    }

    /// Batched forward pass: rows are samples.
    pub fn forward(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>, NnError> {
        if input.ncols() != self.input_dim() {
            return Err(NnError::Shape { expected: self.input_dim(), got: input.ncols() });
        }
        let last = self.num_layers() - 1;
        let mut a: Array2<f64> = input.to_owned();
        for l in 0..self.num_layers() {
            let (w, b) = self.layer(l);
            let mut z = a.dot(&w.t());
            z += &b;
            if l != last {
                z.mapv_inplace(silu_scalar);
            }
            a = z;
        }
        Ok(a)
    }

    /// Forward pass that keeps what the backward pass needs.
    pub fn forward_trace(&self, input: ArrayView2<'_, f64>) -> Result<ForwardTrace, NnError> {
        if input.ncols() != self.input_dim() {
            return Err(NnError::Shape { expected: self.input_dim(), got: input.ncols() });
        }
        let last = self.num_layers() - 1;
        let mut inputs = Vec::with_capacity(self.num_layers());
        let mut pre = Vec::with_capacity(last);
        let mut a: Array2<f64> = input.to_owned();
        for l in 0..self.num_layers() {
            let (w, b) = self.layer(l);
            let mut z = a.dot(&w.t());
            z += &b;
            inputs.push(a);
            if l != last {
                let act = z.mapv(silu_scalar);
                pre.push(z);
                a = act;
            } else {
                a = z;
            }
        }
        Ok(ForwardTrace { inputs, pre, output: a })
    }

    /// Reverse pass for `sum_rows(output * upstream)`; parameter gradients
    /// are summed over the batch.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        upstream: ArrayView2<'_, f64>,
    ) -> Result<MlpGrad, NnError> {
        if upstream.dim() != trace.output.dim() {
            return Err(NnError::Shape {
                expected: trace.output.len(),
                got: upstream.len(),
            });
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut delta: Array2<f64> = upstream.to_owned();
        for l in (0..self.num_layers()).rev() {
            let (w, _) = self.layer(l);
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.layer_offset(l);
            let dw = delta.t().dot(&trace.inputs[l]);
            grads[off..off + n_in * n_out]
                .iter_mut()
                .zip(dw.iter())
                .for_each(|(g, v)| *g = *v);
            let db = delta.sum_axis(Axis(0));
            grads[off + n_in * n_out..off + n_in * n_out + n_out].copy_from_slice(db.as_slice().unwrap());
            let mut next = delta.dot(&w);
            if l > 0 {
                ndarray::Zip::from(&mut next)
                    .and(&trace.pre[l - 1])
                    .for_each(|d, &z| *d *= silu_derivative(z));
            }
            delta = next;
        }
        Ok(MlpGrad { params: grads, input: delta })
    }

    /// Gradients of `output . upstream_grad` for a single input.
    pub fn grad(&self, input: &[f64], upstream: &[f64]) -> Result<MlpGrad, NnError> {
        if input.len() != self.input_dim() {
            return Err(NnError::Shape { expected: self.input_dim(), got: input.len() });
        }
        if upstream.len() != self.output_dim() {
            return Err(NnError::Shape { expected: self.output_dim(), got: upstream.len() });
        }
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row");
        let u = ArrayView2::from_shape((1, upstream.len()), upstream).expect("row");
        let trace = self.forward_trace(x)?;
        self.backward(&trace, u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self { learning_rate, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step_count: u64,
    m: Array1<f64>,
    v: Array1<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            step_count: 0,
            m: Array1::zeros(num_params),
            v: Array1::zeros(num_params),
        }
    }

    /// Bias-corrected Adam update. Rejects non-finite gradients before
    /// touching any state.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != self.m.len() {
            return Err(NnError::Shape { expected: self.m.len(), got: params.len() });
        }
        if grads.len() != params.len() {
            return Err(NnError::Shape { expected: params.len(), got: grads.len() });
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient { index });
        }
        self.step_count += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}
