//! Hard interventions `do(X_i := gamma_i)`.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::graph::{CausalGraph, GraphError};

/// Node index (0-based) to forced value.
pub type Interventions = BTreeMap<usize, Vec<f64>>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterventionError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("intervention on node {node} has {got} values, node dimension is {expected}")]
    Dim { node: usize, expected: usize, got: usize },
    #[error("intervention value for node {node} is not finite")]
    NonFinite { node: usize },
    #[error("malformed intervention '{0}', expected node=value[,value...]")]
    Malformed(String),
    #[error("unknown node '{0}'")]
    UnknownNode(String),
}

pub fn validate(graph: &CausalGraph, interventions: &Interventions) -> Result<(), InterventionError> {
    for (&node, values) in interventions {
        graph.check_node(node)?;
        let expected = graph.dim(node);
        if values.len() != expected {
            return Err(InterventionError::Dim { node: node + 1, expected, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(InterventionError::NonFinite { node: node + 1 });
        }
    }
    Ok(())
}

/// Nodes whose counterfactual value may differ from the factual one:
/// descendants of any intervened node that are not themselves intervened.
pub fn affected_nodes(
    graph: &CausalGraph,
    interventions: &Interventions,
) -> Result<BTreeSet<usize>, InterventionError> {
    let targets: BTreeSet<usize> = interventions.keys().copied().collect();
    let mut out = graph.descendants_of_set(&targets)?;
    out.retain(|n| !targets.contains(n));
    Ok(out)
}

/// Parses `node=value[,value...]` where `node` is a 1-based index or a node
/// name.
pub fn parse_one(graph: &CausalGraph, spec: &str) -> Result<(usize, Vec<f64>), InterventionError> {
    let (lhs, rhs) = spec
        .split_once('=')
        .ok_or_else(|| InterventionError::Malformed(spec.to_string()))?;
    let lhs = lhs.trim();
    let node = match lhs.parse::<usize>() {
        Ok(i) if i >= 1 && i <= graph.num_nodes() => i - 1,
        Ok(i) => {
            return Err(GraphError::InvalidNode { index: i, num_nodes: graph.num_nodes() }.into())
        }
        Err(_) => graph
            .names()
            .iter()
            .position(|n| n == lhs)
            .ok_or_else(|| InterventionError::UnknownNode(lhs.to_string()))?,
    };
    let values = rhs
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| InterventionError::Malformed(spec.to_string()))?;
    Ok((node, values))
}

pub fn parse(graph: &CausalGraph, specs: &[String]) -> Result<Interventions, InterventionError> {
    let mut out = Interventions::new();
    for spec in specs {
        let (node, values) = parse_one(graph, spec)?;
        out.insert(node, values);
    }
    validate(graph, &out)?;
    Ok(out)
}
