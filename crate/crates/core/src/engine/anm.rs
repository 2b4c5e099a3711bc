use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::regress::{self, Regressor, RegressorKind, RegressorSettings};
use super::{check_data, counterfactual_pass, generate, node_block, parent_block, CausalQueryModel, EngineError, Factual};
use crate::graph::CausalGraph;
use crate::intervention::Interventions;
use crate::seed::{self, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnmConfig {
    /// Candidates, simplest first. A single entry skips cross-validation.
    pub menu: Vec<RegressorKind>,
    pub folds: usize,
    /// Relative RMSE slack within which an earlier menu entry is preferred.
    pub tie_tolerance: f64,
    pub settings: RegressorSettings,
}

impl Default for AnmConfig {
    fn default() -> Self {
        Self {
            menu: RegressorKind::MENU.to_vec(),
            folds: 5,
            tie_tolerance: 0.01,
            settings: RegressorSettings::default(),
        }
    }
}

/// `X_i = f_i(pa_i) + U_i` with a regressor per non-root node and its
/// training residuals as the noise distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnmModel {
    pub graph: CausalGraph,
    pub regressors: Vec<Option<Regressor>>,
    pub residuals: Vec<Option<Array2<f64>>>,
    pub root_empiricals: Vec<Option<Array2<f64>>>,
    /// Cross-validated RMSE per candidate, empty when not run.
    pub cv_scores: Vec<Vec<(RegressorKind, f64)>>,
}

impl AnmModel {
    pub fn fit(graph: &CausalGraph, data: ArrayView2<'_, f64>, config: &AnmConfig, seed: u64) -> Result<Self, EngineError> {
        check_data(graph, data)?;
        let needed = config.folds.max(2);
        if data.nrows() < needed {
            return Err(EngineError::TooFewRows { needed, got: data.nrows() });
        }
        type Fitted = (Option<Regressor>, Option<Array2<f64>>, Vec<(RegressorKind, f64)>);
        let fitted: Vec<Fitted> = (0..graph.num_nodes())
            .into_par_iter()
            .map(|node| {
                if graph.is_root(node) {
                    return Ok((None, None, vec![]));
                }
                let err = |source| EngineError::Regression { node: node + 1, source };
                let x = parent_block(graph, data, node);
                let y = node_block(graph, data, node);
                let (kind, scores) = if config.menu.len() == 1 {
                    (config.menu[0], vec![])
                } else {
                    let mut rng = seed::stream(seed, "anm-cv", node as u64);
                    let scores = regress::cross_validate(&config.menu, x.view(), y.view(), config.folds, &config.settings, &mut rng)
                        .map_err(err)?;
                    (regress::select(&scores, config.tie_tolerance), scores)
                };
                let mut rng = seed::stream(seed, "anm-fit", node as u64);
                let model = Regressor::fit(kind, x.view(), y.view(), &config.settings, &mut rng).map_err(err)?;
                let residual = &y - &model.predict(x.view());
                log::debug!("node {}: selected {}", node + 1, model.label());
                Ok((Some(model), Some(residual), scores))
            })
            .collect::<Result<_, EngineError>>()?;
        let mut regressors = vec![];
        let mut residuals = vec![];
        let mut cv_scores = vec![];
        for (m, r, s) in fitted {
            regressors.push(m);
            residuals.push(r);
            cv_scores.push(s);
        }
        let root_empiricals = (0..graph.num_nodes())
            .map(|node| graph.is_root(node).then(|| node_block(graph, data, node)))
            .collect();
        Ok(Self { graph: graph.clone(), regressors, residuals, root_empiricals, cv_scores })
    }

    /// A model with given regressors (e.g. the true mechanisms) and
    /// residuals computed from `data`.
    pub fn from_regressors(graph: &CausalGraph, data: ArrayView2<'_, f64>, regressors: Vec<Option<Regressor>>) -> Result<Self, EngineError> {
        check_data(graph, data)?;
        let residuals = regressors
            .iter()
            .enumerate()
            .map(|(node, m)| {
                m.as_ref().map(|m| &node_block(graph, data, node) - &m.predict(parent_block(graph, data, node).view()))
            })
            .collect();
        let root_empiricals = (0..graph.num_nodes())
            .map(|node| graph.is_root(node).then(|| node_block(graph, data, node)))
            .collect();
        Ok(Self {
            graph: graph.clone(),
            regressors,
            residuals,
            root_empiricals,
            cv_scores: vec![vec![]; graph.num_nodes()],
        })
    }

    pub fn regressor(&self, node: usize) -> Option<&Regressor> {
        self.regressors[node].as_ref()
    }
}

fn resample(pool: &Array2<f64>, n: usize, rng: &mut StreamRng) -> Array2<f64> {
    let mut out = Array2::zeros((n, pool.ncols()));
    for r in 0..n {
        out.row_mut(r).assign(&pool.row(rng.random_range(0..pool.nrows())));
    }
    out
}

impl CausalQueryModel for AnmModel {
    fn name(&self) -> &str {
        "anm"
    }

    fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    fn sample(&self, interventions: &Interventions, n: usize, rng: &mut StreamRng) -> Result<Array2<f64>, EngineError> {
        generate(&self.graph, interventions, n, |node, pa| {
            if let Some(emp) = &self.root_empiricals[node] {
                return Ok(resample(emp, n, rng));
            }
            let f = self.regressors[node].as_ref().expect("non-root nodes have a regressor").predict(pa);
            let u = resample(self.residuals[node].as_ref().expect("non-root residuals"), n, rng);
            Ok(f + u)
        })
    }

    fn counterfactual(&self, factual: Factual<'_>, interventions: &Interventions) -> Result<Array2<f64>, EngineError> {
        counterfactual_pass(&self.graph, factual.values, interventions, |node, x, pa_f, pa_cf| {
            let f = self.regressors[node].as_ref().expect("non-root nodes have a regressor");
            let u = &x - &f.predict(pa_f);
            Ok(f.predict(pa_cf) + u)
        })
    }
}
