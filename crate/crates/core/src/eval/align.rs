//! Ground-truth comparison of estimates after hidden-label alignment.

use itertools::Itertools;
use nalgebra::DMatrix;
use pathfinding::kuhn_munkres::kuhn_munkres_min;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use super::diagnostics::oracle_chow_liu;
use crate::error::Result;
use crate::graphs::Graph;
use crate::model::{MixtureModel, Oracle};
use crate::pipeline::ComponentEstimate;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphMetrics {
    pub precision: f64,
    pub recall: f64,
    pub exact_match: bool,
}

pub fn graph_metrics(estimate: &Graph, truth: &Graph) -> GraphMetrics {
    let est = estimate.edges();
    let tru = truth.edges();
    let tp = est.iter().filter(|e| tru.contains(e)).count() as f64;
    let ratio = |den: usize| if den == 0 { 1.0 } else { tp / den as f64 };
    GraphMetrics {
        precision: ratio(est.len()),
        recall: ratio(tru.len()),
        exact_match: est == tru,
    }
}

fn edge_f1(a: &[(usize, usize)], b: &[(usize, usize)]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let common = a.iter().filter(|e| b.contains(e)).count() as f64;
    2.0 * common / (a.len() + b.len()) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// estimated component `h` corresponds to true component `permutation[h]`
    pub permutation: Vec<usize>,
    /// alignment came from assignment on the pairwise cost matrix rather than exhaustive search
    pub heuristic_alignment: bool,
    pub graph: Option<GraphMetrics>,
    pub tree_exact_match: Vec<bool>,
    pub tree_f1: Vec<f64>,
    pub max_marginal_error: f64,
    pub mean_marginal_error: f64,
    pub weight_l1_error: f64,
    pub pairs_evaluated: usize,
}

/// `cost[h][g]`: summed ℓ₂ error between estimated component `h` and true component `g`.
fn cost_matrix(est: &ComponentEstimate, truth: &[Vec<DMatrix<f64>>]) -> Vec<Vec<f64>> {
    let r = est.num_components();
    (0..r)
        .map(|h| {
            (0..r)
                .map(|g| {
                    est.marginals
                        .iter()
                        .zip(truth)
                        .map(|(m, t)| (m.table(h) - &t[g]).norm())
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Best relabelling by exhaustive search for `r <= 8`, assignment otherwise.
pub fn best_permutation(cost: &[Vec<f64>]) -> (Vec<usize>, bool) {
    let r = cost.len();
    if r <= 8 {
        let best = (0..r)
            .permutations(r)
            .min_by(|a, b| {
                let ca: f64 = a.iter().enumerate().map(|(h, &g)| cost[h][g]).sum();
                let cb: f64 = b.iter().enumerate().map(|(h, &g)| cost[h][g]).sum();
                ca.total_cmp(&cb)
            })
            .unwrap_or_default();
        return (best, false);
    }
    let scale = 1e9 / cost.iter().flatten().cloned().fold(1e-300, f64::max);
    let weights = Matrix::from_rows(
        cost.iter()
            .map(|row| row.iter().map(|&c| (c * scale).round() as i64).collect::<Vec<_>>()),
    )
    .expect("square cost matrix");
    (kuhn_munkres_min(&weights).1, true)
}

/// Align estimated components to the truth and score the estimate.
pub fn align_components(
    est: &ComponentEstimate,
    truth: &MixtureModel,
    graph_estimate: Option<&Graph>,
    cap: usize,
) -> Result<EvalReport> {
    let o = Oracle::new(truth, cap)?;
    let r = truth.num_components();
    let d = truth.alphabet_size();
    let true_tables: Vec<Vec<DMatrix<f64>>> = est
        .marginals
        .iter()
        .map(|m| {
            (0..r)
                .map(|g| DMatrix::from_row_slice(d, d, &o.component_marginal(g, &[m.a, m.b])))
                .collect()
        })
        .collect();
    let cost = cost_matrix(est, &true_tables);
    let (perm, heuristic) = best_permutation(&cost);

    let mut errors = Vec::new();
    for (m, t) in est.marginals.iter().zip(&true_tables) {
        for (h, &g) in perm.iter().enumerate() {
            errors.push((m.table(h) - &t[g]).norm());
        }
    }
    let max_err = errors.iter().cloned().fold(0.0, f64::max);
    let mean_err = if errors.is_empty() {
        0.0
    } else {
        errors.iter().sum::<f64>() / errors.len() as f64
    };
    let weight_err = perm
        .iter()
        .enumerate()
        .map(|(h, &g)| (est.weights[h] - truth.weights()[g]).abs())
        .sum();

    let mut tree_exact = Vec::with_capacity(r);
    let mut tree_f1 = Vec::with_capacity(r);
    for (h, &g) in perm.iter().enumerate() {
        let (t, _) = oracle_chow_liu(&o, est.isolated_node, g);
        tree_exact.push(t.edges == est.trees[h].edges);
        tree_f1.push(edge_f1(&t.edges, &est.trees[h].edges));
    }

    Ok(EvalReport {
        permutation: perm,
        heuristic_alignment: heuristic,
        graph: graph_estimate.map(|g| graph_metrics(g, &truth.union_graph())),
        tree_exact_match: tree_exact,
        tree_f1,
        max_marginal_error: max_err,
        mean_marginal_error: mean_err,
        weight_l1_error: weight_err,
        pairs_evaluated: est.marginals.len(),
    })
}
