//! Observational, interventional and counterfactual evaluation of a fitted
//! model against the ground-truth SCM, and the multi-seed benchmark driver.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::DiffusionConfig;
use crate::engine::{AnmConfig, AnmModel, CausalQueryModel, DcmModel, EngineError, Factual};
use crate::graph::{CausalGraph, GraphKind};
use crate::intervention::Interventions;
use crate::metrics::{mmd_report, mse_paired, KernelSpec, MetricsError};
use crate::scm::{select_columns, GroundTruthScm, ScmError, SemKind};
use crate::seed;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error("model and oracle graphs differ")]
    GraphMismatch,
    #[error("need at least 2 intervention values, got {0}")]
    TooFewGammas(usize),
    #[error("benchmark needs at least one seed")]
    NoSeeds,
    #[error("intervention node {0} is out of range")]
    BadNode(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub num_gammas: usize,
    pub samples_per_gamma: usize,
    pub observational_samples: usize,
    pub kernel: KernelSpec,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { num_gammas: 20, samples_per_gamma: 100, observational_samples: 1000, kernel: KernelSpec::MedianHeuristic }
    }
}

/// Scores for one intervened node, one entry per intervention value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeScores {
    pub node: usize,
    /// Columns that entered the metric.
    pub columns: Vec<usize>,
    pub gammas: Vec<Vec<f64>>,
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    /// Mean over every intervention value of every evaluated node; `None`
    /// when no node could be evaluated.
    pub value: Option<f64>,
    pub per_node: Vec<NodeScores>,
}

impl QueryScore {
    fn from_nodes(per_node: Vec<NodeScores>) -> Self {
        let all: Vec<f64> = per_node.iter().flat_map(|n| n.deltas.iter().copied()).collect();
        let value = (!all.is_empty()).then(|| all.iter().sum::<f64>() / all.len() as f64);
        Self { value, per_node }
    }
}

/// Linear-interpolation quantile of unsorted data (`q` in `[0, 1]`).
pub fn quantile(values: ArrayView1<'_, f64>, q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// `num` intervention values for `node`, evenly spaced in quantile level
/// from 10% to 90%; each dimension uses its own marginal quantiles.
pub fn gamma_grid(graph: &CausalGraph, data: ArrayView2<'_, f64>, node: usize, num: usize) -> Vec<Vec<f64>> {
    let denom = (num.max(2) - 1) as f64;
    (0..num)
        .map(|j| {
            let level = 0.1 + 0.8 * j as f64 / denom;
            graph.columns(node).map(|c| quantile(data.column(c), level)).collect()
        })
        .collect()
}

/// Default intervention targets: `X2, X3` on the ladder, three random
/// non-sink nodes on random graphs, every non-sink node otherwise.
pub fn auto_intervention_nodes(kind: Option<GraphKind>, graph: &CausalGraph, seed_value: u64) -> Vec<usize> {
    let non_sink: Vec<usize> = (0..graph.num_nodes()).filter(|&i| !graph.is_sink(i)).collect();
    match kind {
        Some(GraphKind::Ladder) => vec![1, 2],
        Some(GraphKind::Random) => {
            let mut rng = seed::stream(seed_value, "intervention-nodes", 0);
            let k = non_sink.len().min(3);
            let mut picked: Vec<usize> = sample_indices(&mut rng, non_sink.len(), k).into_iter().map(|i| non_sink[i]).collect();
            picked.sort_unstable();
            picked
        }
        _ => non_sink,
    }
}

fn check_graphs(model: &dyn CausalQueryModel, oracle: &GroundTruthScm) -> Result<(), EvalError> {
    if model.graph() != oracle.graph() {
        return Err(EvalError::GraphMismatch);
    }
    Ok(())
}

fn descendant_columns(graph: &CausalGraph, node: usize) -> Result<Vec<usize>, EvalError> {
    let desc = graph.descendants(node).map_err(|_| EvalError::BadNode(node + 1))?;
    Ok(graph.columns_of(&desc))
}

/// MMD between model and oracle samples on the non-root columns. `None` for
/// graphs without non-root nodes.
pub fn eval_observational(
    model: &dyn CausalQueryModel,
    oracle: &GroundTruthScm,
    settings: &EvalSettings,
    seed_value: u64,
) -> Result<Option<f64>, EvalError> {
    check_graphs(model, oracle)?;
    let graph = oracle.graph();
    let non_roots: BTreeSet<usize> = graph.non_roots().into_iter().collect();
    if non_roots.is_empty() {
        return Ok(None);
    }
    let cols = graph.columns_of(&non_roots);
    let n = settings.observational_samples;
    let mut model_rng = seed::stream(seed_value, "eval-obs-model", 0);
    let mut oracle_rng = seed::stream(seed_value, "eval-obs-oracle", 0);
    let fitted = model.sample(&Interventions::new(), n, &mut model_rng)?;
    let truth = oracle.sample_observational(n, &mut oracle_rng).values;
    let a = select_columns(fitted.view(), &cols);
    let b = select_columns(truth.view(), &cols);
    Ok(Some(mmd_report(a.view(), b.view(), settings.kernel)?))
}

fn grids_for(
    graph: &CausalGraph,
    train: ArrayView2<'_, f64>,
    nodes: &[usize],
    settings: &EvalSettings,
) -> Result<Vec<(usize, Vec<usize>, Vec<Vec<f64>>)>, EvalError> {
    if settings.num_gammas < 2 {
        return Err(EvalError::TooFewGammas(settings.num_gammas));
    }
    let mut out = vec![];
    for &node in nodes {
        if node >= graph.num_nodes() {
            return Err(EvalError::BadNode(node + 1));
        }
        let cols = descendant_columns(graph, node)?;
        if cols.is_empty() {
            log::warn!("node {} has no descendants; skipped", node + 1);
            continue;
        }
        out.push((node, cols, gamma_grid(graph, train, node, settings.num_gammas)));
    }
    Ok(out)
}

fn stream_index(node: usize, j: usize) -> u64 {
    (node as u64) << 32 | j as u64
}

/// Mean MMD between model and oracle interventional samples, restricted to
/// the intervened node's descendants.
pub fn eval_interventional(
    model: &dyn CausalQueryModel,
    oracle: &GroundTruthScm,
    train: ArrayView2<'_, f64>,
    nodes: &[usize],
    settings: &EvalSettings,
    seed_value: u64,
) -> Result<QueryScore, EvalError> {
    check_graphs(model, oracle)?;
    let mut per_node = vec![];
    for (node, columns, gammas) in grids_for(oracle.graph(), train, nodes, settings)? {
        let mut deltas = vec![];
        for (j, gamma) in gammas.iter().enumerate() {
            let iv = Interventions::from([(node, gamma.clone())]);
            let mut model_rng = seed::stream(seed_value, "eval-int-model", stream_index(node, j));
            let mut oracle_rng = seed::stream(seed_value, "eval-int-oracle", stream_index(node, j));
            let fitted = model.sample(&iv, settings.samples_per_gamma, &mut model_rng)?;
            let truth = oracle.sample_interventional(&iv, settings.samples_per_gamma, &mut oracle_rng)?.values;
            let a = select_columns(fitted.view(), &columns);
            let b = select_columns(truth.view(), &columns);
            deltas.push(mmd_report(a.view(), b.view(), settings.kernel)?);
        }
        per_node.push(NodeScores { node, columns, gammas, deltas });
    }
    Ok(QueryScore::from_nodes(per_node))
}

/// Mean squared counterfactual error over the intervened node's
/// descendants, on fresh traced factual samples from the oracle.
pub fn eval_counterfactual(
    model: &dyn CausalQueryModel,
    oracle: &GroundTruthScm,
    train: ArrayView2<'_, f64>,
    nodes: &[usize],
    settings: &EvalSettings,
    seed_value: u64,
) -> Result<QueryScore, EvalError> {
    check_graphs(model, oracle)?;
    let mut per_node = vec![];
    for (node, columns, gammas) in grids_for(oracle.graph(), train, nodes, settings)? {
        let mut deltas = vec![];
        for (j, gamma) in gammas.iter().enumerate() {
            let iv = Interventions::from([(node, gamma.clone())]);
            let mut rng = seed::stream(seed_value, "eval-cf-factual", stream_index(node, j));
            let factual = oracle.sample_observational(settings.samples_per_gamma, &mut rng);
            let traced = Factual::traced(factual.values.view(), factual.noises.view());
            let estimate = model.counterfactual(traced, &iv)?;
            let truth = oracle.counterfactual_batch(factual.values.view(), factual.noises.view(), &iv)?;
            let a = select_columns(estimate.view(), &columns);
            let b = select_columns(truth.view(), &columns);
            deltas.push(mse_paired(a.view(), b.view())?);
        }
        per_node.push(NodeScores { node, columns, gammas, deltas });
    }
    Ok(QueryScore::from_nodes(per_node))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dcm,
    Anm,
    Oracle,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Dcm => "dcm",
            ModelKind::Anm => "anm",
            ModelKind::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dcm" => Ok(ModelKind::Dcm),
            "anm" => Ok(ModelKind::Anm),
            "oracle" => Ok(ModelKind::Oracle),
            other => Err(format!("unknown model '{other}' (expected dcm, anm or oracle)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ObsMmd,
    IntMmd,
    CfMse,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::ObsMmd, Metric::IntMmd, Metric::CfMse];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::ObsMmd => "obs_mmd",
            Metric::IntMmd => "int_mmd",
            Metric::CfMse => "cf_mse",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterventionNodes {
    Auto,
    /// 0-based node indices.
    List(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub graph_kind: GraphKind,
    pub sem_kind: SemKind,
    pub n_train: usize,
    pub seeds: Vec<u64>,
    pub intervention_nodes: InterventionNodes,
    pub eval: EvalSettings,
    pub models: Vec<ModelKind>,
    pub dcm: DiffusionConfig,
    pub anm: AnmConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            graph_kind: GraphKind::Chain,
            sem_kind: SemKind::Nlin,
            n_train: 2000,
            seeds: (0..5).collect(),
            intervention_nodes: InterventionNodes::Auto,
            eval: EvalSettings::default(),
            models: vec![ModelKind::Dcm, ModelKind::Anm],
            dcm: DiffusionConfig { epochs: 200, ..DiffusionConfig::default() },
            anm: AnmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub model: ModelKind,
    pub seed: u64,
    pub metric: Metric,
    pub value: Option<f64>,
    /// Set when the cell failed or the metric does not apply.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub model: ModelKind,
    pub metric: Metric,
    pub mean: Option<f64>,
    /// Sample standard deviation across seeds (0 for one seed).
    pub std: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub config: BenchmarkConfig,
    /// 1-based intervention nodes used for each seed.
    pub intervention_nodes: Vec<Vec<usize>>,
    pub cells: Vec<Cell>,
    pub summary: Vec<Summary>,
}

/// The SCM a benchmark seed runs against: hand-written equations on the small
/// graphs, random neural mechanisms on the ladder and random graphs.
pub fn benchmark_scm(kind: GraphKind, sem: SemKind, seed_value: u64) -> Result<GroundTruthScm, ScmError> {
    if kind.is_small() {
        GroundTruthScm::fixed(kind, sem)
    } else {
        GroundTruthScm::benchmark(kind, sem, &mut seed::stream(seed_value, "scm", 0))
    }
}

fn failed_cells(model: ModelKind, seed_value: u64, note: &str) -> Vec<Cell> {
    Metric::ALL
        .iter()
        .map(|&metric| Cell { model, seed: seed_value, metric, value: None, note: Some(note.to_string()) })
        .collect()
}

fn evaluate_model(
    model: &dyn CausalQueryModel,
    kind: ModelKind,
    oracle: &GroundTruthScm,
    train: ArrayView2<'_, f64>,
    nodes: &[usize],
    config: &BenchmarkConfig,
    seed_value: u64,
) -> Vec<Cell> {
    let cell = |metric, result: Result<Option<f64>, EvalError>| match result {
        Ok(Some(v)) => Cell { model: kind, seed: seed_value, metric, value: Some(v), note: None },
        Ok(None) => Cell { model: kind, seed: seed_value, metric, value: None, note: Some("not applicable".into()) },
        Err(e) => Cell { model: kind, seed: seed_value, metric, value: None, note: Some(e.to_string()) },
    };
    vec![
        cell(Metric::ObsMmd, eval_observational(model, oracle, &config.eval, seed_value)),
        cell(
            Metric::IntMmd,
            eval_interventional(model, oracle, train, nodes, &config.eval, seed_value).map(|s| s.value),
        ),
        cell(
            Metric::CfMse,
            eval_counterfactual(model, oracle, train, nodes, &config.eval, seed_value).map(|s| s.value),
        ),
    ]
}

struct SeedRun {
    nodes: Vec<usize>,
    cells: Vec<Cell>,
}

fn run_seed(config: &BenchmarkConfig, seed_value: u64) -> SeedRun {
    let oracle = match benchmark_scm(config.graph_kind, config.sem_kind, seed_value) {
        Ok(s) => s,
        Err(e) => {
            let note = format!("SCM construction failed: {e}");
            let cells = config.models.iter().flat_map(|&m| failed_cells(m, seed_value, &note)).collect();
            return SeedRun { nodes: vec![], cells };
        }
    };
    let graph = oracle.graph();
    let nodes = match &config.intervention_nodes {
        InterventionNodes::Auto => auto_intervention_nodes(Some(config.graph_kind), graph, seed_value),
        InterventionNodes::List(v) => v.clone(),
    };
    let train = oracle.sample_observational(config.n_train, &mut seed::stream(seed_value, "train-data", 0)).values;
    let mut cells = vec![];
    for &kind in &config.models {
        let started = std::time::Instant::now();
        let fitted: Result<Box<dyn CausalQueryModel>, EngineError> = match kind {
            ModelKind::Dcm => DcmModel::fit(graph, train.view(), &config.dcm, seed::child_seed(seed_value, "dcm", 0))
                .map(|m| Box::new(m) as Box<dyn CausalQueryModel>),
            ModelKind::Anm => AnmModel::fit(graph, train.view(), &config.anm, seed::child_seed(seed_value, "anm", 0))
                .map(|m| Box::new(m) as Box<dyn CausalQueryModel>),
            ModelKind::Oracle => Ok(Box::new(oracle.clone())),
        };
        match fitted {
            Ok(model) => cells.extend(evaluate_model(model.as_ref(), kind, &oracle, train.view(), &nodes, config, seed_value)),
            Err(e) => cells.extend(failed_cells(kind, seed_value, &format!("fit failed: {e}"))),
        }
        log::info!("seed {seed_value} {}: {:.1?}", kind.as_str(), started.elapsed());
    }
    SeedRun { nodes, cells }
}

/// Mean and sample standard deviation; `None` for an empty slice.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, std))
}

/// Runs every configured model on every seed. Seeds run in parallel on the
/// current rayon pool; failures are recorded per cell and do not stop the
/// run. The report is a pure function of the configuration.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport, EvalError> {
    if config.seeds.is_empty() {
        return Err(EvalError::NoSeeds);
    }
    if config.eval.num_gammas < 2 {
        return Err(EvalError::TooFewGammas(config.eval.num_gammas));
    }
    let runs: Vec<SeedRun> = config.seeds.par_iter().map(|&s| run_seed(config, s)).collect();
    let intervention_nodes = runs.iter().map(|r| r.nodes.iter().map(|n| n + 1).collect()).collect();
    let cells: Vec<Cell> = runs.into_iter().flat_map(|r| r.cells).collect();
    let mut summary = vec![];
    for &model in &config.models {
        for metric in Metric::ALL {
            let values: Vec<f64> =
                cells.iter().filter(|c| c.model == model && c.metric == metric).filter_map(|c| c.value).collect();
            let ms = mean_std(&values);
            summary.push(Summary { model, metric, mean: ms.map(|m| m.0), std: ms.map(|m| m.1), count: values.len() });
        }
    }
    Ok(BenchmarkReport { schema_version: REPORT_SCHEMA_VERSION, config: config.clone(), intervention_nodes, cells, summary })
}

impl BenchmarkReport {
    pub fn summary_for(&self, model: ModelKind, metric: Metric) -> Option<&Summary> {
        self.summary.iter().find(|s| s.model == model && s.metric == metric)
    }

    pub fn values(&self, model: ModelKind, metric: Metric) -> Vec<f64> {
        self.cells.iter().filter(|c| c.model == model && c.metric == metric).filter_map(|c| c.value).collect()
    }

    /// One row per (metric, model): mean and std across seeds, optionally
    /// multiplied by 100.
    pub fn to_csv(&self, times_100: bool) -> String {
        let k = if times_100 { 100.0 } else { 1.0 };
        let fmt = |v: Option<f64>| v.map(|x| format!("{}", x * k)).unwrap_or_default();
        let mut out = String::from("graph,sem,metric,model,mean,std,seeds,scale\n");
        for metric in Metric::ALL {
            for &model in &self.config.models {
                if let Some(s) = self.summary_for(model, metric) {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{}",
                        self.config.graph_kind,
                        self.config.sem_kind,
                        metric.as_str(),
                        model.as_str(),
                        fmt(s.mean),
                        fmt(s.std),
                        s.count,
                        if times_100 { "1e-2" } else { "1" }
                    );
                }
            }
        }
        out
    }
}
