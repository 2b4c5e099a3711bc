//! Causal models behind one query interface: the diffusion model, the
//! additive-noise baseline and the ground-truth oracle.

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::DiffusionError;
use crate::graph::CausalGraph;
use crate::intervention::{self, InterventionError, Interventions};
use crate::nn::NnError;
use crate::scm::{GroundTruthScm, ScmError};
use crate::seed::StreamRng;

mod anm;
mod dcm;
pub mod regress;

pub use anm::{AnmConfig, AnmModel};
pub use dcm::DcmModel;
pub use regress::RegressorKind;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Intervention(#[from] InterventionError),
    #[error("node {node}: {source}")]
    Diffusion { node: usize, source: DiffusionError },
    #[error("node {node}: {source}")]
    Regression { node: usize, source: NnError },
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error("data has {got} columns, graph needs {expected}")]
    Columns { expected: usize, got: usize },
    #[error("need at least {needed} training rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("data contains non-finite values")]
    NonFinite,
    #[error("counterfactual queries need the recorded noise for the oracle")]
    MissingNoise,
    #[error("unsupported model schema version {0}")]
    SchemaVersion(u32),
}

/// Factual observations, one unit per row. Noises are only read by the
/// oracle.
#[derive(Debug, Clone, Copy)]
pub struct Factual<'a> {
    pub values: ArrayView2<'a, f64>,
    pub noises: Option<ArrayView2<'a, f64>>,
}

impl<'a> Factual<'a> {
    pub fn values(values: ArrayView2<'a, f64>) -> Self {
        Self { values, noises: None }
    }

    pub fn traced(values: ArrayView2<'a, f64>, noises: ArrayView2<'a, f64>) -> Self {
        Self { values, noises: Some(noises) }
    }
}

pub trait CausalQueryModel: Sync {
    fn name(&self) -> &str;

    fn graph(&self) -> &CausalGraph;

    /// `n` rows from the (intervened) model distribution. Intervened columns
    /// hold the forced values exactly.
    fn sample(&self, interventions: &Interventions, n: usize, rng: &mut StreamRng) -> Result<Array2<f64>, EngineError>;

    /// Row-wise counterfactuals. Intervened columns hold the forced values,
    /// columns outside the intervened nodes' descendants equal the factual.
    fn counterfactual(&self, factual: Factual<'_>, interventions: &Interventions) -> Result<Array2<f64>, EngineError>;
}

pub(crate) fn check_data(graph: &CausalGraph, data: ArrayView2<'_, f64>) -> Result<(), EngineError> {
    if data.ncols() != graph.total_dim() {
        return Err(EngineError::Columns { expected: graph.total_dim(), got: data.ncols() });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(EngineError::NonFinite);
    }
    Ok(())
}

pub(crate) fn node_block(graph: &CausalGraph, data: ArrayView2<'_, f64>, node: usize) -> Array2<f64> {
    let c = graph.columns(node);
    data.slice(s![.., c.start..c.end]).to_owned()
}

pub(crate) fn parent_block(graph: &CausalGraph, data: ArrayView2<'_, f64>, node: usize) -> Array2<f64> {
    crate::scm::gather_columns(graph, node, data)
}

pub(crate) fn write_block(graph: &CausalGraph, out: &mut Array2<f64>, node: usize, block: ArrayView2<'_, f64>) {
    let c = graph.columns(node);
    out.slice_mut(s![.., c.start..c.end]).assign(&block);
}

/// Ancestral pass: intervened nodes are filled with their forced value,
/// every other node by `fill(node, parent_values)` in topological order.
pub(crate) fn generate<F>(
    graph: &CausalGraph,
    interventions: &Interventions,
    n: usize,
    mut fill: F,
) -> Result<Array2<f64>, EngineError>
where
    F: FnMut(usize, ArrayView2<'_, f64>) -> Result<Array2<f64>, EngineError>,
{
    intervention::validate(graph, interventions)?;
    let mut out = Array2::zeros((n, graph.total_dim()));
    for &node in graph.topological_order() {
        if let Some(gamma) = interventions.get(&node) {
            for (j, c) in graph.columns(node).enumerate() {
                out.column_mut(c).fill(gamma[j]);
            }
            continue;
        }
        let pa = parent_block(graph, out.view(), node);
        let block = fill(node, pa.view())?;
        write_block(graph, &mut out, node, block.view());
    }
    Ok(out)
}

/// Abduction-action-prediction pass. `predict(node, x_factual, pa_factual,
/// pa_counterfactual)` is called for each affected node in topological order.
pub(crate) fn counterfactual_pass<F>(
    graph: &CausalGraph,
    factual: ArrayView2<'_, f64>,
    interventions: &Interventions,
    mut predict: F,
) -> Result<Array2<f64>, EngineError>
where
    F: FnMut(usize, ArrayView2<'_, f64>, ArrayView2<'_, f64>, ArrayView2<'_, f64>) -> Result<Array2<f64>, EngineError>,
{
    check_data(graph, factual)?;
    intervention::validate(graph, interventions)?;
    let affected = intervention::affected_nodes(graph, interventions)?;
    let mut out = factual.to_owned();
    for &node in graph.topological_order() {
        if let Some(gamma) = interventions.get(&node) {
            for (j, c) in graph.columns(node).enumerate() {
                out.column_mut(c).fill(gamma[j]);
            }
        } else if affected.contains(&node) {
            let x = node_block(graph, factual, node);
            let pa_f = parent_block(graph, factual, node);
            let pa_cf = parent_block(graph, out.view(), node);
            let block = predict(node, x.view(), pa_f.view(), pa_cf.view())?;
            write_block(graph, &mut out, node, block.view());
        }
    }
    Ok(out)
}

impl CausalQueryModel for GroundTruthScm {
    fn name(&self) -> &str {
        "oracle"
    }

    fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    fn sample(&self, interventions: &Interventions, n: usize, rng: &mut StreamRng) -> Result<Array2<f64>, EngineError> {
        Ok(self.sample_interventional(interventions, n, rng)?.values)
    }

    fn counterfactual(&self, factual: Factual<'_>, interventions: &Interventions) -> Result<Array2<f64>, EngineError> {
        let noises = factual.noises.ok_or(EngineError::MissingNoise)?;
        check_data(&self.graph, factual.values)?;
        if noises.dim() != factual.values.dim() {
            return Err(EngineError::Columns { expected: factual.values.ncols(), got: noises.ncols() });
        }
        Ok(self.counterfactual_batch(factual.values, noises, interventions)?)
    }
}

/// A fitted model as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub model: SavedModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SavedModel {
    Dcm(DcmModel),
    Anm(AnmModel),
}

impl SavedModel {
    pub fn as_query(&self) -> &dyn CausalQueryModel {
        match self {
            SavedModel::Dcm(m) => m,
            SavedModel::Anm(m) => m,
        }
    }
}

impl ModelFile {
    pub fn new(model: SavedModel) -> Self {
        Self { schema_version: MODEL_SCHEMA_VERSION, model }
    }

    pub fn check_version(&self) -> Result<(), EngineError> {
        if self.schema_version == MODEL_SCHEMA_VERSION {
            Ok(())
        } else {
            Err(EngineError::SchemaVersion(self.schema_version))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphKind;
    use crate::scm::SemKind;
    use rand::SeedableRng;

    #[test]
    fn oracle_is_its_own_counterfactual_reference() {
        let scm = GroundTruthScm::fixed(GraphKind::Triangle, SemKind::Nadd).unwrap();
        let mut rng = StreamRng::seed_from_u64(1);
        let data = scm.sample_observational(30, &mut rng);
        let iv = Interventions::from([(0, vec![0.3])]);
        let got = scm.counterfactual(Factual::traced(data.values.view(), data.noises.view()), &iv).unwrap();
        let want = scm.counterfactual_batch(data.values.view(), data.noises.view(), &iv).unwrap();
        assert_eq!(got, want);
        assert!(matches!(
            scm.counterfactual(Factual::values(data.values.view()), &iv),
            Err(EngineError::MissingNoise)
        ));
    }

    #[test]
    fn passes_visit_nodes_in_topological_order() {
        let g = CausalGraph::diamond(1);
        let mut seen = vec![];
        generate(&g, &Interventions::from([(1, vec![2.0])]), 3, |node, pa| {
            seen.push(node);
            assert_eq!(pa.ncols(), g.parent_dim(node));
            Ok(Array2::from_elem((3, 1), node as f64))
        })
        .unwrap();
        assert_eq!(seen, vec![0, 2, 3]);

        let data = Array2::from_shape_fn((2, 4), |(r, c)| (r * 4 + c) as f64);
        let mut seen = vec![];
        let cf = counterfactual_pass(&g, data.view(), &Interventions::from([(2, vec![9.0])]), |node, x, _, pa_cf| {
            seen.push(node);
            // parent x3 already holds the forced value
            assert_eq!(pa_cf[[0, 1]], 9.0);
            Ok(x.to_owned())
        })
        .unwrap();
        assert_eq!(seen, vec![3]);
        assert_eq!(cf.column(2).to_vec(), vec![9.0, 9.0]);
        assert_eq!(cf.column(0), data.column(0));
    }
}
