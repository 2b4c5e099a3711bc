use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_data, counterfactual_pass, generate, node_block, parent_block, CausalQueryModel, EngineError, Factual};
use crate::diffusion::{DiffusionConfig, DiffusionNodeModel};
use crate::graph::CausalGraph;
use crate::intervention::Interventions;
use crate::seed::{self, StreamRng};

/// One conditional diffusion model per non-root node; roots are resampled
/// from their training columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcmModel {
    pub graph: CausalGraph,
    pub config: DiffusionConfig,
    pub node_models: Vec<Option<DiffusionNodeModel>>,
    pub root_empiricals: Vec<Option<Array2<f64>>>,
    /// Per-epoch training loss of each non-root node.
    pub losses: Vec<Vec<f64>>,
}

impl DcmModel {
    /// Trains every non-root node independently. Node `i` initializes from
    /// the `dcm-init` stream and trains on the `dcm-train` stream, both
    /// indexed by `i`, so the result does not depend on thread scheduling.
    pub fn fit(
        graph: &CausalGraph,
        data: ArrayView2<'_, f64>,
        config: &DiffusionConfig,
        seed: u64,
    ) -> Result<Self, EngineError> {
        check_data(graph, data)?;
        if data.nrows() < 2 {
            return Err(EngineError::TooFewRows { needed: 2, got: data.nrows() });
        }
        let fitted: Vec<(Option<DiffusionNodeModel>, Vec<f64>)> = (0..graph.num_nodes())
            .into_par_iter()
            .map(|node| {
                if graph.is_root(node) {
                    return Ok((None, vec![]));
                }
                let err = |source| EngineError::Diffusion { node: node + 1, source };
                let mut init = seed::stream(seed, "dcm-init", node as u64);
                let mut model = DiffusionNodeModel::new(node, graph.dim(node), graph.parent_dim(node), config, &mut init)
                    .map_err(err)?;
                let x = node_block(graph, data, node);
                let pa = parent_block(graph, data, node);
                let mut rng = seed::stream(seed, "dcm-train", node as u64);
                let losses = model
                    .train(x.view(), pa.view(), config.epochs, config.batch_size, config.learning_rate, &mut rng)
                    .map_err(err)?;
                log::debug!("node {} final loss {:.5}", node + 1, losses.last().copied().unwrap_or(f64::NAN));
                Ok((Some(model), losses))
            })
            .collect::<Result<_, EngineError>>()?;
        let root_empiricals = (0..graph.num_nodes())
            .map(|node| graph.is_root(node).then(|| node_block(graph, data, node)))
            .collect();
        let (node_models, losses) = fitted.into_iter().unzip();
        Ok(Self { graph: graph.clone(), config: config.clone(), node_models, root_empiricals, losses })
    }

    fn node_model(&self, node: usize) -> &DiffusionNodeModel {
        self.node_models[node].as_ref().expect("non-root nodes have a model")
    }

    /// Latent codes of the factual values, one block per non-root node.
    pub fn encode(&self, data: ArrayView2<'_, f64>, node: usize) -> Result<Array2<f64>, EngineError> {
        check_data(&self.graph, data)?;
        let x = node_block(&self.graph, data, node);
        let pa = parent_block(&self.graph, data, node);
        self.node_model(node)
            .encode(x.view(), pa.view())
            .map_err(|source| EngineError::Diffusion { node: node + 1, source })
    }
}

impl CausalQueryModel for DcmModel {
    fn name(&self) -> &str {
        "dcm"
    }

    fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    fn sample(&self, interventions: &Interventions, n: usize, rng: &mut StreamRng) -> Result<Array2<f64>, EngineError> {
        generate(&self.graph, interventions, n, |node, pa| {
            if let Some(emp) = &self.root_empiricals[node] {
                let mut block = Array2::zeros((n, emp.ncols()));
                for r in 0..n {
                    let i = rng.random_range(0..emp.nrows());
                    block.row_mut(r).assign(&emp.row(i));
                }
                return Ok(block);
            }
            let z = Array2::from_shape_fn((n, self.graph.dim(node)), |_| rng.sample(StandardNormal));
            self.node_model(node)
                .decode(z.view(), pa)
                .map_err(|source| EngineError::Diffusion { node: node + 1, source })
        })
    }

    fn counterfactual(&self, factual: Factual<'_>, interventions: &Interventions) -> Result<Array2<f64>, EngineError> {
        counterfactual_pass(&self.graph, factual.values, interventions, |node, x, pa_f, pa_cf| {
            let err = |source| EngineError::Diffusion { node: node + 1, source };
            let model = self.node_model(node);
            let z = model.encode(x, pa_f).map_err(err)?;
            model.decode(z.view(), pa_cf).map_err(err)
        })
    }
}
