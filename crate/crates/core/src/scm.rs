//! Ground-truth structural causal models.
//!
//! Every node has an exogenous noise vector of the node's own dimension,
//! drawn i.i.d. standard normal. A node's value is `raw / scale` where `raw`
//! is the mechanism applied to the (already scaled) parent values and the
//! noise, and `scale` is a per-dimension divisor frozen at construction so
//! that each coordinate has roughly unit variance. Scaling never shifts the
//! mean, which keeps the hand-written equations inside their domains (some
//! take square roots of parent values).
//!
//! Mechanisms are evaluated row by row with plain loops so that re-evaluating
//! a recorded `(parents, noise)` pair reproduces the stored value bit for bit.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{random_dag, CausalGraph, GraphError, GraphKind};
use crate::intervention::{self, InterventionError, Interventions};
use crate::nn::{Mlp, NnError};

pub const SCM_SCHEMA_VERSION: u32 = 1;

/// Monte Carlo sample size for calibration and normalization.
pub const CALIBRATION_SAMPLES: usize = 10_000;
/// Noise grid size for the nonadditive variance decomposition.
pub const NOISE_GRID: usize = 200;
pub const CALIBRATION_ATTEMPTS: usize = 20;
pub const RATIO_BOUNDS: (f64, f64) = (0.05, 0.5);
const RATIO_TARGET: f64 = 0.2;
/// Fresh weight draws tried per node before giving up.
const WEIGHT_ATTEMPTS: usize = 10;

#[derive(Debug, Error)]
pub enum ScmError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Intervention(#[from] InterventionError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("expected {expected} equations, got {got}")]
    EquationCount { expected: usize, got: usize },
    #[error("node {node}: {reason}")]
    BadMechanism { node: usize, reason: String },
    #[error("no hand-written equations for the {0} graph")]
    NoFixedEquations(GraphKind),
    #[error("node {node}: noise/signal variance ratio {ratio} not calibrated into [0.05, 0.5]")]
    Calibration { node: usize, ratio: f64 },
    #[error("factual sample is missing the noise record for node {node}")]
    MissingNoise { node: usize },
    #[error("factual sample has {got} values for node {node}, expected {expected}")]
    FactualShape { node: usize, expected: usize, got: usize },
    #[error("unsupported SCM schema version {0}")]
    SchemaVersion(u32),
}

/// Structural equation class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemKind {
    /// Nonlinear function of the parents plus noise.
    Nlin,
    /// Noise enters nonadditively.
    Nadd,
}

impl SemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SemKind::Nlin => "nlin",
            SemKind::Nadd => "nadd",
        }
    }
}

impl std::str::FromStr for SemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nlin" => Ok(SemKind::Nlin),
            "nadd" => Ok(SemKind::Nadd),
            other => Err(format!("unknown SEM kind '{other}' (expected nlin or nadd)")),
        }
    }
}

impl std::fmt::Display for SemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mechanism {
    /// `X = U`.
    Root,
    /// One of the hand-written small-graph equations (scalar nodes).
    Table { graph: GraphKind, sem: SemKind, node: usize },
    /// `X = net(pa) + noise_scale * U`.
    NeuralAdditive { net: Mlp, noise_scale: f64 },
    /// `X = net([pa, noise_scale * U])`.
    NeuralNonAdditive { net: Mlp, noise_scale: f64 },
    /// `X = W pa + b + noise_scale * U` with `W` row-major `dim x parent_dim`.
    Linear { weights: Vec<f64>, bias: Vec<f64>, noise_scale: f64 },
    /// Scalar node with one scalar parent: `X = sum_k c_k pa^k + noise_scale * U`.
    Polynomial { coefficients: Vec<f64>, noise_scale: f64 },
}

impl Mechanism {
    pub fn is_additive(&self) -> bool {
        !matches!(self, Mechanism::NeuralNonAdditive { .. } | Mechanism::Table { sem: SemKind::Nadd, .. })
    }

    /// Raw (pre-scaling) output for one row.
    fn eval(&self, parents: &[f64], noise: &[f64], out: &mut [f64]) {
        match self {
            Mechanism::Root => out.copy_from_slice(noise),
            Mechanism::Table { graph, sem, node } => {
                out[0] = table_equation(*graph, *sem, *node, parents, noise[0]);
            }
            Mechanism::NeuralAdditive { net, noise_scale } => {
                let f = net.apply(parents).expect("width checked at construction");
                for ((o, fv), u) in out.iter_mut().zip(f).zip(noise) {
                    *o = fv + noise_scale * u;
                }
            }
            Mechanism::NeuralNonAdditive { net, noise_scale } => {
                let mut input = Vec::with_capacity(parents.len() + noise.len());
                input.extend_from_slice(parents);
                input.extend(noise.iter().map(|u| noise_scale * u));
                let f = net.apply(&input).expect("width checked at construction");
                out.copy_from_slice(&f);
            }
            Mechanism::Linear { weights, bias, noise_scale } => {
                let p = parents.len();
                for (r, o) in out.iter_mut().enumerate() {
                    let dot: f64 = weights[r * p..(r + 1) * p].iter().zip(parents).map(|(w, x)| w * x).sum();
                    *o = dot + bias[r] + noise_scale * noise[r];
                }
            }
            Mechanism::Polynomial { coefficients, noise_scale } => {
                out[0] = polynomial(coefficients, parents[0]) + noise_scale * noise[0];
            }
        }
    }

    /// Parent-only part `f1(pa)` of an additive mechanism.
    fn signal(&self, parents: &[f64], out: &mut [f64]) -> bool {
        match self {
            Mechanism::NeuralAdditive { net, .. } => {
                out.copy_from_slice(&net.apply(parents).expect("width checked"));
                true
            }
            Mechanism::Linear { weights, bias, .. } => {
                let zeros = vec![0.0; out.len()];
                let lin = Mechanism::Linear { weights: weights.clone(), bias: bias.clone(), noise_scale: 0.0 };
                lin.eval(parents, &zeros, out);
                true
            }
            Mechanism::Polynomial { coefficients, .. } => {
                out[0] = polynomial(coefficients, parents[0]);
                true
            }
            _ => false,
        }
    }

    fn noise_scale(&self) -> Option<f64> {
        match self {
            Mechanism::NeuralAdditive { noise_scale, .. }
            | Mechanism::NeuralNonAdditive { noise_scale, .. }
            | Mechanism::Linear { noise_scale, .. }
            | Mechanism::Polynomial { noise_scale, .. } => Some(*noise_scale),
            _ => None,
        }
    }

    fn set_noise_scale(&mut self, value: f64) {
        match self {
            Mechanism::NeuralAdditive { noise_scale, .. }
            | Mechanism::NeuralNonAdditive { noise_scale, .. }
            | Mechanism::Linear { noise_scale, .. }
            | Mechanism::Polynomial { noise_scale, .. } => *noise_scale = value,
            _ => {}
        }
    }
}

fn polynomial(coefficients: &[f64], x: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// The hand-written equations, before normalization. `node` is 0-based and
/// `pa` lists parent values in ascending parent index.
pub fn table_equation(graph: GraphKind, sem: SemKind, node: usize, pa: &[f64], u: f64) -> f64 {
    use GraphKind::*;
    use SemKind::*;
    match (graph, sem, node) {
        (Chain, Nlin, 1) => (pa[0] / 2.0).exp() + u / 4.0,
        (Chain, Nlin, 2) => (pa[0] - 5.0).powi(3) / 15.0 + u,
        (Chain, Nadd, 1) => 1.0 / ((u + pa[0]).powi(2) + 0.5),
        (Chain, Nadd, 2) => (pa[0] + u.abs()).sqrt() / (0.1 + pa[0]),
        (Triangle, Nlin, 1) => 2.0 * pa[0].powi(2) + u,
        (Triangle, Nlin, 2) => 20.0 / (1.0 + (-pa[1].powi(2) + pa[0]).exp()) + u,
        (Triangle, Nadd, 1) => pa[0] / ((u + pa[0]).powi(2) + 1.0) + u / 4.0,
        (Triangle, Nadd, 2) => (u.abs() + 0.3) * (-pa[0] + pa[1] / 2.0 + u.abs() / 5.0).powi(2),
        (Diamond, Nlin, 1) => pa[0].powi(2) + u / 2.0,
        (Diamond, Nlin, 2) => pa[1].powi(2) - 2.0 * sigmoid(pa[0]) + u / 2.0,
        (Diamond, Nlin, 3) => pa[1] / ((pa[0] + 2.0).abs() + pa[1] + 0.5) + u / 10.0,
        (Diamond, Nadd, 1) => pa[0].abs().sqrt() * (u.abs() + 0.1) / 2.0 + pa[0].abs() + u / 5.0,
        (Diamond, Nadd, 2) => 1.0 / (1.0 + (u.abs() + 0.5) * (-pa[1] + pa[0]).exp()),
        (Diamond, Nadd, 3) => (pa[1] + pa[0] + u / 4.0 - 7.0).powi(2) - 20.0,
        (Y, Nlin, 2) => 4.0 / (1.0 + (-pa[0] - pa[1]).exp()) - pa[1].powi(2) + u / 2.0,
        (Y, Nlin, 3) => 20.0 / (1.0 + (pa[0].powi(2) / 2.0 - pa[0]).exp()) + u,
        (Y, Nadd, 2) => (pa[0] - 2.0 * pa[1] - 2.0) * (u.abs() + 0.2),
        (Y, Nadd, 3) => ((pa[0]).cos() + u / 2.0).powi(2),
        _ => panic!("no equation for {graph} {sem} node {}", node + 1),
    }
}

fn has_table_equation(graph: GraphKind, node: usize, is_root: bool) -> bool {
    !is_root
        && match graph {
            GraphKind::Chain | GraphKind::Triangle => node == 1 || node == 2,
            GraphKind::Diamond => (1..=3).contains(&node),
            GraphKind::Y => node == 2 || node == 3,
            _ => false,
        }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralEquation {
    pub mechanism: Mechanism,
    /// Per-dimension divisor applied to the raw mechanism output.
    pub scale: Vec<f64>,
}

/// Values and exogenous noises for a single unit.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedSample {
    pub values: Vec<Vec<f64>>,
    pub noises: Vec<Vec<f64>>,
}

/// Rows of full samples with their recorded noises; both matrices share the
/// graph's column layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedData {
    pub values: Array2<f64>,
    pub noises: Array2<f64>,
}

impl TracedData {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn sample(&self, graph: &CausalGraph, row: usize) -> TracedSample {
        let split = |m: &Array2<f64>| -> Vec<Vec<f64>> {
            (0..graph.num_nodes())
                .map(|i| graph.columns(i).map(|c| m[[row, c]]).collect())
                .collect()
        };
        TracedSample { values: split(&self.values), noises: split(&self.noises) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmMeta {
    pub graph_kind: Option<GraphKind>,
    pub sem_kind: Option<SemKind>,
    /// Calibrated noise/signal ratio per node where one was measured.
    pub calibrated_ratio: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthScm {
    pub schema_version: u32,
    pub graph: CausalGraph,
    pub equations: Vec<StructuralEquation>,
    pub meta: ScmMeta,
}

impl GroundTruthScm {
    pub fn new(graph: CausalGraph, equations: Vec<StructuralEquation>) -> Result<Self, ScmError> {
        let meta = ScmMeta {
            graph_kind: None,
            sem_kind: None,
            calibrated_ratio: vec![None; graph.num_nodes()],
        };
        let scm = Self { schema_version: SCM_SCHEMA_VERSION, graph, equations, meta };
        scm.validate()?;
        Ok(scm)
    }

    /// Checks that every node has one equation whose shapes match the graph.
    pub fn validate(&self) -> Result<(), ScmError> {
        if self.schema_version != SCM_SCHEMA_VERSION {
            return Err(ScmError::SchemaVersion(self.schema_version));
        }
        let k = self.graph.num_nodes();
        if self.equations.len() != k {
            return Err(ScmError::EquationCount { expected: k, got: self.equations.len() });
        }
        for (i, eq) in self.equations.iter().enumerate() {
            let d = self.graph.dim(i);
            let p = self.graph.parent_dim(i);
            let bad = |reason: String| ScmError::BadMechanism { node: i + 1, reason };
            if eq.scale.len() != d || eq.scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(bad(format!("scale must be {d} positive finite values")));
            }
            match &eq.mechanism {
                Mechanism::Root => {
                    if p != 0 {
                        return Err(bad("identity mechanism on a node with parents".into()));
                    }
                }
                Mechanism::Table { graph, node, .. } => {
                    if *node != i || d != 1 || !has_table_equation(*graph, i, p == 0) {
                        return Err(bad(format!("no {graph} table equation for this node")));
                    }
                }
                Mechanism::NeuralAdditive { net, .. } => {
                    if net.input_dim() != p || net.output_dim() != d || p == 0 {
                        return Err(bad("additive network shape mismatch".into()));
                    }
                }
                Mechanism::NeuralNonAdditive { net, .. } => {
                    if net.input_dim() != p + d || net.output_dim() != d || p == 0 {
                        return Err(bad("nonadditive network shape mismatch".into()));
                    }
                }
                Mechanism::Linear { weights, bias, .. } => {
                    if weights.len() != d * p || bias.len() != d {
                        return Err(bad("linear mechanism shape mismatch".into()));
                    }
                }
                Mechanism::Polynomial { .. } => {
                    if d != 1 || p != 1 {
                        return Err(bad("polynomial mechanism needs a scalar node with one scalar parent".into()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    /// Value of `node` for one row given its parents' values and its noise.
    pub fn eval_node(&self, node: usize, parents: &[f64], noise: &[f64]) -> Vec<f64> {
        let eq = &self.equations[node];
        let mut out = vec![0.0; self.graph.dim(node)];
        eq.mechanism.eval(parents, noise, &mut out);
        for (o, s) in out.iter_mut().zip(&eq.scale) {
            *o /= s;
        }
        out
    }

    fn gather_parents(&self, node: usize, row: ArrayView1<'_, f64>, buf: &mut Vec<f64>) {
        buf.clear();
        for &p in self.graph.parents(node) {
            buf.extend(self.graph.columns(p).map(|c| row[c]));
        }
    }

    /// Standard normal noise for `n` rows, drawn node by node in topological
    /// order.
    pub fn draw_noise<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        let mut noise = Array2::zeros((n, self.graph.total_dim()));
        for &node in self.graph.topological_order() {
            for r in 0..n {
                for c in self.graph.columns(node) {
                    noise[[r, c]] = rng.sample(StandardNormal);
                }
            }
        }
        noise
    }

    /// Pushes recorded noises through the equations, honoring interventions.
    pub fn evaluate(&self, noises: ArrayView2<'_, f64>, interventions: &Interventions) -> Result<Array2<f64>, ScmError> {
        intervention::validate(&self.graph, interventions)?;
        let n = noises.nrows();
        let mut values = Array2::zeros((n, self.graph.total_dim()));
        let mut pa = Vec::new();
        for &node in self.graph.topological_order() {
            let cols = self.graph.columns(node);
            if let Some(gamma) = interventions.get(&node) {
                for r in 0..n {
                    for (c, g) in cols.clone().zip(gamma) {
                        values[[r, c]] = *g;
                    }
                }
                continue;
            }
            for r in 0..n {
                self.gather_parents(node, values.row(r), &mut pa);
                let u: Vec<f64> = cols.clone().map(|c| noises[[r, c]]).collect();
                let x = self.eval_node(node, &pa, &u);
                for (c, v) in cols.clone().zip(x) {
                    values[[r, c]] = v;
                }
            }
        }
        Ok(values)
    }

    pub fn sample_observational<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> TracedData {
        self.sample_interventional(&Interventions::new(), n, rng)
            .expect("empty intervention set is always valid")
    }

    /// Intervened nodes are fixed; everything else uses fresh noise. Noise is
    /// still drawn (and recorded) for intervened nodes so the random stream
    /// does not depend on the intervention set.
    pub fn sample_interventional<R: Rng + ?Sized>(
        &self,
        interventions: &Interventions,
        n: usize,
        rng: &mut R,
    ) -> Result<TracedData, ScmError> {
        intervention::validate(&self.graph, interventions)?;
        let noises = self.draw_noise(n, rng);
        let values = self.evaluate(noises.view(), interventions)?;
        Ok(TracedData { values, noises })
    }

    /// Abduction is exact here: the recorded noises are reused, intervened
    /// nodes take their forced values, non-descendants keep their factual
    /// values, and descendants are recomputed in topological order.
    pub fn true_counterfactual(
        &self,
        factual: &TracedSample,
        interventions: &Interventions,
    ) -> Result<Vec<Vec<f64>>, ScmError> {
        intervention::validate(&self.graph, interventions)?;
        let k = self.graph.num_nodes();
        if factual.values.len() != k {
            return Err(ScmError::FactualShape { node: factual.values.len() + 1, expected: k, got: 0 });
        }
        for i in 0..k {
            let d = self.graph.dim(i);
            if factual.values[i].len() != d {
                return Err(ScmError::FactualShape { node: i + 1, expected: d, got: factual.values[i].len() });
            }
        }
        let affected = intervention::affected_nodes(&self.graph, interventions)?;
        let mut out = factual.values.clone();
        for &node in self.graph.topological_order() {
            if let Some(gamma) = interventions.get(&node) {
                out[node] = gamma.clone();
            } else if affected.contains(&node) {
                let u = factual
                    .noises
                    .get(node)
                    .filter(|u| u.len() == self.graph.dim(node))
                    .ok_or(ScmError::MissingNoise { node: node + 1 })?;
                let pa: Vec<f64> = self.graph.parents(node).iter().flat_map(|&p| out[p].clone()).collect();
                out[node] = self.eval_node(node, &pa, u);
            }
        }
        Ok(out)
    }

    /// Row-wise counterfactuals for a batch of traced factual samples.
    pub fn counterfactual_batch(
        &self,
        values: ArrayView2<'_, f64>,
        noises: ArrayView2<'_, f64>,
        interventions: &Interventions,
    ) -> Result<Array2<f64>, ScmError> {
        intervention::validate(&self.graph, interventions)?;
        let affected = intervention::affected_nodes(&self.graph, interventions)?;
        let mut out = values.to_owned();
        let mut pa = Vec::new();
        for &node in self.graph.topological_order() {
            let cols = self.graph.columns(node);
            if let Some(gamma) = interventions.get(&node) {
                for r in 0..out.nrows() {
                    for (c, g) in cols.clone().zip(gamma) {
                        out[[r, c]] = *g;
                    }
                }
            } else if affected.contains(&node) {
                for r in 0..out.nrows() {
                    self.gather_parents(node, out.row(r), &mut pa);
                    let u: Vec<f64> = cols.clone().map(|c| noises[[r, c]]).collect();
                    let x = self.eval_node(node, &pa, &u);
                    for (c, v) in cols.clone().zip(x) {
                        out[[r, c]] = v;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Hand-written small-graph equations, normalized with a fixed-seed
    /// Monte Carlo estimate so repeated calls give the same SCM.
    pub fn fixed(kind: GraphKind, sem: SemKind) -> Result<Self, ScmError> {
        let mut scm = Self::fixed_unnormalized(kind, sem)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_7ab1e);
        scm.normalize(&mut rng);
        Ok(scm)
    }

    /// Hand-written equations with every scale set to 1.
    pub fn fixed_unnormalized(kind: GraphKind, sem: SemKind) -> Result<Self, ScmError> {
        let graph = match kind {
            GraphKind::Chain => CausalGraph::chain(1),
            GraphKind::Triangle => CausalGraph::triangle(1),
            GraphKind::Diamond => CausalGraph::diamond(1),
            GraphKind::Y => CausalGraph::y(1),
            other => return Err(ScmError::NoFixedEquations(other)),
        };
        let equations = (0..graph.num_nodes())
            .map(|i| StructuralEquation {
                mechanism: if graph.is_root(i) {
                    Mechanism::Root
                } else {
                    Mechanism::Table { graph: kind, sem, node: i }
                },
                scale: vec![1.0],
            })
            .collect();
        let mut scm = Self::new(graph, equations)?;
        scm.meta.graph_kind = Some(kind);
        scm.meta.sem_kind = Some(sem);
        Ok(scm)
    }

    /// Sets each non-root scale to the sample standard deviation of the raw
    /// output, in topological order so downstream nodes see scaled parents.
    /// Roots keep scale 1 since their noise is already standard normal.
    pub fn normalize<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for eq in &mut self.equations {
            eq.scale.iter_mut().for_each(|s| *s = 1.0);
        }
        let order = self.graph.topological_order().to_vec();
        let noise = self.draw_noise(CALIBRATION_SAMPLES, rng);
        let mut values = Array2::zeros((CALIBRATION_SAMPLES, self.graph.total_dim()));
        let mut pa = Vec::new();
        for node in order {
            let cols = self.graph.columns(node);
            for r in 0..CALIBRATION_SAMPLES {
                self.gather_parents(node, values.row(r), &mut pa);
                let u: Vec<f64> = cols.clone().map(|c| noise[[r, c]]).collect();
                let x = self.eval_node(node, &pa, &u);
                for (c, v) in cols.clone().zip(x) {
                    values[[r, c]] = v;
                }
            }
            if self.graph.is_root(node) {
                continue;
            }
            let scale: Vec<f64> = cols
                .clone()
                .map(|c| {
                    let sd = sample_variance(values.column(c).iter().copied()).sqrt();
                    if sd.is_finite() && sd > 1e-12 { sd } else { 1.0 }
                })
                .collect();
            for (c, s) in cols.zip(&scale) {
                values.column_mut(c).mapv_inplace(|v| v / s);
            }
            self.equations[node].scale = scale;
        }
    }

    /// Random neural mechanisms on one of the benchmark graphs. Ladder and
    /// random graphs use 3-dimensional nodes; the small graphs use scalars.
    pub fn benchmark<R: Rng + ?Sized>(kind: GraphKind, sem: SemKind, rng: &mut R) -> Result<Self, ScmError> {
        let graph = match kind {
            GraphKind::Chain => CausalGraph::chain(1),
            GraphKind::Triangle => CausalGraph::triangle(1),
            GraphKind::Diamond => CausalGraph::diamond(1),
            GraphKind::Y => CausalGraph::y(1),
            GraphKind::Ladder => CausalGraph::ladder(3),
            GraphKind::Random => random_dag(10, 0.3, 3, rng)?,
        };
        let mut scm = Self::random_neural(graph, sem, rng)?;
        scm.meta.graph_kind = Some(kind);
        Ok(scm)
    }

    /// One-hidden-layer (16 SiLU units) mechanisms with weights uniform on
    /// `[-1, 1]`, noise strength calibrated so the noise/signal variance
    /// ratio lies in `[0.05, 0.5]`, then every node normalized.
    pub fn random_neural<R: Rng + ?Sized>(graph: CausalGraph, sem: SemKind, rng: &mut R) -> Result<Self, ScmError> {
        let k = graph.num_nodes();
        let mut equations: Vec<StructuralEquation> = (0..k)
            .map(|i| StructuralEquation { mechanism: Mechanism::Root, scale: vec![1.0; graph.dim(i)] })
            .collect();
        let mut ratios = vec![None; k];
        // calibration pool of scaled node values, filled in topological order
        let mut pool = Array2::zeros((CALIBRATION_SAMPLES, graph.total_dim()));
        for &node in graph.topological_order() {
            let d = graph.dim(node);
            let cols = graph.columns(node);
            if !graph.is_root(node) {
                let p = graph.parent_dim(node);
                let parents = gather_columns(&graph, node, pool.view());
                let mut calibrated = None;
                let mut last_ratio = f64::NAN;
                for _ in 0..WEIGHT_ATTEMPTS {
                    let mut mechanism = match sem {
                        SemKind::Nlin => Mechanism::NeuralAdditive {
                            net: Mlp::uniform(&[p, 16, d], -1.0, 1.0, rng)?,
                            noise_scale: 1.0,
                        },
                        SemKind::Nadd => Mechanism::NeuralNonAdditive {
                            net: Mlp::uniform(&[p + d, 16, d], -1.0, 1.0, rng)?,
                            noise_scale: 1.0,
                        },
                    };
                    match calibrate(&mut mechanism, parents.view(), d, rng) {
                        Ok(ratio) => {
                            calibrated = Some((mechanism, ratio));
                            break;
                        }
                        Err(ratio) => last_ratio = ratio,
                    }
                }
                let (mechanism, ratio) =
                    calibrated.ok_or(ScmError::Calibration { node: node + 1, ratio: last_ratio })?;
                equations[node].mechanism = mechanism;
                ratios[node] = Some(ratio);
            }
            // fill the pool for this node with fresh noise and unit scale,
            // then normalize
            let eq = &equations[node];
            let mut raw = Array2::zeros((CALIBRATION_SAMPLES, d));
            let mut pa = Vec::new();
            let mut out = vec![0.0; d];
            for r in 0..CALIBRATION_SAMPLES {
                pa.clear();
                for &q in graph.parents(node) {
                    pa.extend(graph.columns(q).map(|c| pool[[r, c]]));
                }
                let u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                eq.mechanism.eval(&pa, &u, &mut out);
                raw.row_mut(r).iter_mut().zip(&out).for_each(|(a, b)| *a = *b);
            }
            let scale: Vec<f64> = if graph.is_root(node) {
                vec![1.0; d]
            } else {
                (0..d)
                    .map(|j| {
                        let sd = sample_variance(raw.column(j).iter().copied()).sqrt();
                        if sd.is_finite() && sd > 1e-12 { sd } else { 1.0 }
                    })
                    .collect()
            };
            for (j, c) in cols.enumerate() {
                for r in 0..CALIBRATION_SAMPLES {
                    pool[[r, c]] = raw[[r, j]] / scale[j];
                }
            }
            equations[node].scale = scale;
        }
        let mut scm = Self::new(graph, equations)?;
        scm.meta.sem_kind = Some(sem);
        scm.meta.calibrated_ratio = ratios;
        Ok(scm)
    }

    /// Monte Carlo noise/signal variance ratio of a non-root node's raw
    /// mechanism, using `n` parent rows drawn from this SCM.
    pub fn noise_signal_ratio<R: Rng + ?Sized>(&self, node: usize, n: usize, rng: &mut R) -> Option<f64> {
        if self.graph.is_root(node) {
            return None;
        }
        let data = self.sample_observational(n, rng);
        let parents = gather_columns(&self.graph, node, data.values.view());
        Some(noise_signal_ratio(&self.equations[node].mechanism, parents.view(), self.graph.dim(node), rng))
    }

    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> Result<Self, ScmLoadError> {
        let scm: Self = serde_json::from_str(text)?;
        scm.validate()?;
        Ok(scm)
    }
}

#[derive(Debug, Error)]
pub enum ScmLoadError {
    #[error("malformed SCM file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] ScmError),
}

/// Concatenated parent columns of `node`.
pub fn gather_columns(graph: &CausalGraph, node: usize, data: ArrayView2<'_, f64>) -> Array2<f64> {
    let cols: Vec<usize> = graph.parents(node).iter().flat_map(|&p| graph.columns(p)).collect();
    select_columns(data, &cols)
}

pub fn select_columns(data: ArrayView2<'_, f64>, cols: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((data.nrows(), cols.len()));
    for (j, &c) in cols.iter().enumerate() {
        out.column_mut(j).assign(&data.column(c));
    }
    out
}

fn sample_variance(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn trace_variance(rows: &Array2<f64>) -> f64 {
    (0..rows.ncols()).map(|j| sample_variance(rows.column(j).iter().copied())).sum()
}

/// Additive mechanisms: `Var[noise part] / Var[f1(pa)]` (traces over output
/// dimensions). Nonadditive: `Var_U E[f | U] / E_U Var[f | U]` on a grid of
/// noise values, each paired with a disjoint block of parent rows.
pub fn noise_signal_ratio<R: Rng + ?Sized>(
    mechanism: &Mechanism,
    parents: ArrayView2<'_, f64>,
    dim: usize,
    rng: &mut R,
) -> f64 {
    let n = parents.nrows();
    if mechanism.is_additive() {
        let mut signal = Array2::zeros((n, dim));
        let mut out = vec![0.0; dim];
        for r in 0..n {
            let pa = parents.row(r).to_vec();
            if !mechanism.signal(&pa, &mut out) {
                return f64::NAN;
            }
            signal.row_mut(r).iter_mut().zip(&out).for_each(|(a, b)| *a = *b);
        }
        let s = mechanism.noise_scale().unwrap_or(1.0);
        let noise = Array2::from_shape_fn((n, dim), |_| s * rng.sample::<f64, _>(StandardNormal));
        trace_variance(&noise) / trace_variance(&signal)
    } else {
        let per = (n / NOISE_GRID).max(2);
        let mut cond_means = Array2::zeros((NOISE_GRID, dim));
        let mut mean_cond_var = 0.0;
        let mut out = vec![0.0; dim];
        for g in 0..NOISE_GRID {
            let u: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let mut block = Array2::zeros((per, dim));
            for b in 0..per {
                let r = (g * per + b) % n;
                mechanism.eval(&parents.row(r).to_vec(), &u, &mut out);
                block.row_mut(b).iter_mut().zip(&out).for_each(|(a, v)| *a = *v);
            }
            for j in 0..dim {
                cond_means[[g, j]] = block.column(j).mean().unwrap();
            }
            mean_cond_var += trace_variance(&block);
        }
        mean_cond_var /= NOISE_GRID as f64;
        trace_variance(&cond_means) / mean_cond_var
    }
}

/// Rescales the noise path until the ratio lands in bounds. Returns the
/// final ratio, or the last estimate on failure.
fn calibrate<R: Rng + ?Sized>(
    mechanism: &mut Mechanism,
    parents: ArrayView2<'_, f64>,
    dim: usize,
    rng: &mut R,
) -> Result<f64, f64> {
    let mut ratio = f64::NAN;
    for _ in 0..CALIBRATION_ATTEMPTS {
        ratio = noise_signal_ratio(mechanism, parents, dim, rng);
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(ratio);
        }
        if (RATIO_BOUNDS.0..=RATIO_BOUNDS.1).contains(&ratio) {
            return Ok(ratio);
        }
        let s = mechanism.noise_scale().expect("neural mechanisms carry a noise scale");
        mechanism.set_noise_scale(s * (RATIO_TARGET / ratio).sqrt());
    }
    Err(ratio)
}

/// Nodes whose values may change under the intervention set, including the
/// intervened nodes themselves.
pub fn touched_nodes(graph: &CausalGraph, interventions: &Interventions) -> Result<BTreeSet<usize>, ScmError> {
    let mut out = intervention::affected_nodes(graph, interventions)?;
    out.extend(interventions.keys().copied());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// X1 = U1, X2 = 2 X1 + U2.
    fn linear_pair() -> GroundTruthScm {
        let g = CausalGraph::from_edges(vec![1, 1], &[(0, 1)]).unwrap();
        GroundTruthScm::new(
            g,
            vec![
                StructuralEquation { mechanism: Mechanism::Root, scale: vec![1.0] },
                StructuralEquation {
                    mechanism: Mechanism::Linear { weights: vec![2.0], bias: vec![0.0], noise_scale: 1.0 },
                    scale: vec![1.0],
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn single_root_values_are_noise() {
        let g = CausalGraph::from_edges(vec![1], &[]).unwrap();
        let scm = GroundTruthScm::new(g, vec![StructuralEquation { mechanism: Mechanism::Root, scale: vec![1.0] }]).unwrap();
        let data = scm.sample_observational(3, &mut rng(1));
        assert_eq!(data.values, data.noises);
    }

    #[test]
    fn recorded_noise_reproduces_values_bit_exactly() {
        for (kind, sem) in [(GraphKind::Diamond, SemKind::Nlin), (GraphKind::Y, SemKind::Nadd)] {
            let scm = GroundTruthScm::fixed(kind, sem).unwrap();
            let data = scm.sample_observational(200, &mut rng(2));
            let again = scm.evaluate(data.noises.view(), &Interventions::new()).unwrap();
            assert_eq!(again, data.values);
            for r in 0..5 {
                let s = data.sample(scm.graph(), r);
                for i in 0..4 {
                    let pa: Vec<f64> = scm.graph().parents(i).iter().flat_map(|&p| s.values[p].clone()).collect();
                    if !scm.graph().is_root(i) {
                        assert_eq!(scm.eval_node(i, &pa, &s.noises[i]), s.values[i]);
                    }
                }
            }
        }
        let scm = GroundTruthScm::benchmark(GraphKind::Ladder, SemKind::Nadd, &mut rng(3)).unwrap();
        let data = scm.sample_observational(50, &mut rng(4));
        assert_eq!(scm.evaluate(data.noises.view(), &Interventions::new()).unwrap(), data.values);
    }

    #[test]
    fn intervention_fixes_column() {
        let scm = GroundTruthScm::fixed(GraphKind::Chain, SemKind::Nlin).unwrap();
        let iv = Interventions::from([(0, vec![0.7])]);
        let data = scm.sample_interventional(&iv, 100, &mut rng(5)).unwrap();
        assert!(data.values.column(0).iter().all(|&v| v == 0.7));
        let bad = Interventions::from([(0, vec![0.7, 1.0])]);
        assert!(scm.sample_interventional(&bad, 10, &mut rng(5)).is_err());
    }

    #[test]
    fn unnormalized_chain_interventional_mean() {
        // E[exp(0/2) + U2/4] = 1
        let scm = GroundTruthScm::fixed_unnormalized(GraphKind::Chain, SemKind::Nlin).unwrap();
        let iv = Interventions::from([(0, vec![0.0])]);
        let n = 20_000;
        let data = scm.sample_interventional(&iv, n, &mut rng(6)).unwrap();
        let col: Vec<f64> = data.values.column(1).to_vec();
        let mean = col.iter().sum::<f64>() / n as f64;
        let se = (sample_variance(col.iter().copied()) / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn sink_intervention_leaves_other_nodes_alone() {
        let scm = GroundTruthScm::fixed(GraphKind::Chain, SemKind::Nlin).unwrap();
        let obs = scm.sample_observational(100, &mut rng(7));
        let int = scm.sample_interventional(&Interventions::from([(2, vec![3.0])]), 100, &mut rng(7)).unwrap();
        // same stream, so upstream columns coincide exactly
        assert_eq!(obs.values.column(0), int.values.column(0));
        assert_eq!(obs.values.column(1), int.values.column(1));
    }

    #[test]
    fn chain_counterfactual_closed_form() {
        let scm = GroundTruthScm::fixed_unnormalized(GraphKind::Chain, SemKind::Nlin).unwrap();
        let x2 = (0.0f64 / 2.0).exp() + 1.0 / 4.0;
        assert_abs_diff_eq!(x2, 1.25, epsilon = 1e-15);
        let factual = TracedSample {
            values: vec![vec![0.0], vec![x2], vec![(x2 - 5.0).powi(3) / 15.0]],
            noises: vec![vec![0.0], vec![1.0], vec![0.0]],
        };
        let cf = scm.true_counterfactual(&factual, &Interventions::from([(0, vec![2.0])])).unwrap();
        assert_abs_diff_eq!(cf[1][0], 1f64.exp() + 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(cf[1][0], 2.9683, epsilon = 1e-4);
    }

    #[test]
    fn linear_counterfactual_closed_form() {
        let scm = linear_pair();
        let factual = TracedSample { values: vec![vec![1.0], vec![2.5]], noises: vec![vec![1.0], vec![0.5]] };
        let cf = scm.true_counterfactual(&factual, &Interventions::from([(0, vec![0.0])])).unwrap();
        assert_eq!(cf, vec![vec![0.0], vec![0.5]]);
    }

    #[test]
    fn empty_and_identity_interventions_return_factual() {
        let scm = GroundTruthScm::fixed(GraphKind::Diamond, SemKind::Nadd).unwrap();
        let data = scm.sample_observational(20, &mut rng(8));
        for r in 0..20 {
            let f = data.sample(scm.graph(), r);
            assert_eq!(scm.true_counterfactual(&f, &Interventions::new()).unwrap(), f.values);
            let same = Interventions::from([(1, f.values[1].clone())]);
            assert_eq!(scm.true_counterfactual(&f, &same).unwrap(), f.values);
        }
    }

    #[test]
    fn counterfactual_of_counterfactual_is_involution() {
        let scm = GroundTruthScm::fixed(GraphKind::Triangle, SemKind::Nlin).unwrap();
        let data = scm.sample_observational(20, &mut rng(9));
        for r in 0..20 {
            let f = data.sample(scm.graph(), r);
            let cf = scm.true_counterfactual(&f, &Interventions::from([(0, vec![1.5])])).unwrap();
            let cf_sample = TracedSample { values: cf, noises: f.noises.clone() };
            let back = scm.true_counterfactual(&cf_sample, &Interventions::from([(0, f.values[0].clone())])).unwrap();
            assert_eq!(back, f.values);
        }
    }

    #[test]
    fn additive_counterfactual_differences_equal_noise_differences() {
        let scm = GroundTruthScm::fixed_unnormalized(GraphKind::Chain, SemKind::Nlin).unwrap();
        let data = scm.sample_observational(30, &mut rng(10));
        let iv = Interventions::from([(0, vec![0.4])]);
        for r in 1..30 {
            let a = data.sample(scm.graph(), r - 1);
            let b = data.sample(scm.graph(), r);
            let ca = scm.true_counterfactual(&a, &iv).unwrap();
            let cb = scm.true_counterfactual(&b, &iv).unwrap();
            // X2 = exp(X1/2) + U2/4
            assert_abs_diff_eq!(ca[1][0] - cb[1][0], (a.noises[1][0] - b.noises[1][0]) / 4.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn missing_noise_is_error() {
        let scm = linear_pair();
        let f = TracedSample { values: vec![vec![1.0], vec![2.5]], noises: vec![vec![1.0]] };
        assert!(matches!(
            scm.true_counterfactual(&f, &Interventions::from([(0, vec![0.0])])),
            Err(ScmError::MissingNoise { node: 2 })
        ));
    }

    #[test]
    fn batch_counterfactual_matches_single() {
        let scm = GroundTruthScm::fixed(GraphKind::Y, SemKind::Nlin).unwrap();
        let data = scm.sample_observational(25, &mut rng(11));
        let iv = Interventions::from([(1, vec![-0.3])]);
        let batch = scm.counterfactual_batch(data.values.view(), data.noises.view(), &iv).unwrap();
        for r in 0..25 {
            let single = scm.true_counterfactual(&data.sample(scm.graph(), r), &iv).unwrap();
            let flat: Vec<f64> = single.into_iter().flatten().collect();
            assert_eq!(batch.row(r).to_vec(), flat);
        }
    }

    #[test]
    fn table_equation_spot_checks() {
        assert_abs_diff_eq!(table_equation(GraphKind::Chain, SemKind::Nlin, 1, &[0.0], 1.0), 1.25, epsilon = 1e-15);
        let x1 = 0.3;
        let x2 = -1.2;
        let u = 0.5;
        assert_abs_diff_eq!(
            table_equation(GraphKind::Triangle, SemKind::Nlin, 2, &[x1, x2], u),
            20.0 / (1.0 + (-x2 * x2 + x1).exp()) + u,
            epsilon = 1e-12
        );
        let x3 = 0.8;
        assert_abs_diff_eq!(
            table_equation(GraphKind::Y, SemKind::Nadd, 3, &[x3], u),
            (x3.cos() + u / 2.0).powi(2),
            epsilon = 1e-15
        );
    }

    #[test]
    fn fixed_scms_have_unit_variance() {
        for kind in [GraphKind::Chain, GraphKind::Triangle, GraphKind::Diamond, GraphKind::Y] {
            for sem in [SemKind::Nlin, SemKind::Nadd] {
                let scm = GroundTruthScm::fixed(kind, sem).unwrap();
                assert_eq!(scm, GroundTruthScm::fixed(kind, sem).unwrap());
                let data = scm.sample_observational(10_000, &mut rng(12));
                for c in 0..scm.graph().total_dim() {
                    let v = sample_variance(data.values.column(c).iter().copied());
                    assert!((0.8..=1.2).contains(&v), "{kind} {sem} column {c}: var {v}");
                }
                // roots are untouched: X = U
                for r in scm.graph().roots() {
                    assert_eq!(data.values.column(r), data.noises.column(r));
                }
            }
        }
        assert!(GroundTruthScm::fixed(GraphKind::Ladder, SemKind::Nlin).is_err());
    }

    #[test]
    fn benchmark_scms_calibrated_and_normalized() {
        let cases = [
            (GraphKind::Chain, SemKind::Nlin),
            (GraphKind::Triangle, SemKind::Nadd),
            (GraphKind::Ladder, SemKind::Nlin),
            (GraphKind::Ladder, SemKind::Nadd),
            (GraphKind::Random, SemKind::Nlin),
            (GraphKind::Random, SemKind::Nadd),
        ];
        for (i, (kind, sem)) in cases.into_iter().enumerate() {
            let scm = GroundTruthScm::benchmark(kind, sem, &mut rng(100 + i as u64)).unwrap();
            let g = scm.graph();
            if matches!(kind, GraphKind::Ladder | GraphKind::Random) {
                assert!(g.dims().iter().all(|&d| d == 3));
            }
            let mut check = rng(999);
            for node in 0..g.num_nodes() {
                match &scm.equations[node].mechanism {
                    Mechanism::Root => assert!(g.is_root(node)),
                    Mechanism::NeuralAdditive { net, .. } | Mechanism::NeuralNonAdditive { net, .. } => {
                        assert_eq!(net.sizes()[1], 16);
                        assert!(net.params().iter().all(|w| (-1.0..=1.0).contains(w)));
                        let ratio = scm.noise_signal_ratio(node, CALIBRATION_SAMPLES, &mut check).unwrap();
                        // an independent re-estimate; allow Monte Carlo slack at the edges
                        assert!((0.04..=0.6).contains(&ratio), "{kind} {sem} node {node}: ratio {ratio}");
                        let stored = scm.meta.calibrated_ratio[node].unwrap();
                        assert!((RATIO_BOUNDS.0..=RATIO_BOUNDS.1).contains(&stored));
                    }
                    other => panic!("unexpected mechanism {other:?}"),
                }
            }
            let data = scm.sample_observational(10_000, &mut check);
            for c in 0..g.total_dim() {
                let v = sample_variance(data.values.column(c).iter().copied());
                assert!((0.8..=1.2).contains(&v), "{kind} {sem} column {c}: var {v}");
            }
        }
    }

    #[test]
    fn json_round_trip_and_validation() {
        let scm = GroundTruthScm::benchmark(GraphKind::Chain, SemKind::Nadd, &mut rng(13)).unwrap();
        let back = GroundTruthScm::from_json(&scm.to_json().unwrap()).unwrap();
        assert_eq!(scm, back);
        let mut broken = scm.clone();
        broken.equations.pop();
        assert!(GroundTruthScm::from_json(&serde_json::to_string(&broken).unwrap()).is_err());
        let mut version = scm;
        version.schema_version = 99;
        assert!(matches!(
            GroundTruthScm::from_json(&serde_json::to_string(&version).unwrap()),
            Err(ScmLoadError::Invalid(ScmError::SchemaVersion(99)))
        ));
    }
}
