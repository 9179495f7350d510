#![allow(dead_code)]

use mixgraph::graphs::Graph;
use mixgraph::model::{build_mixture, CliquePotential, ComponentModel, Family, GeneratorConfig, MixtureModel};

/// Potts coupling `j` on the shifted diagonal `b = a + shift (mod d)`.
pub fn potts(d: usize, j: f64, shift: usize) -> Vec<f64> {
    (0..d * d).map(|i| if (i / d + shift) % d == i % d { j } else { 0.0 }).collect()
}

pub fn potts_component(p: usize, d: usize, edges: &[(usize, usize)], field: &[f64], j: f64, shift: usize) -> ComponentModel {
    let mut pots: Vec<CliquePotential> = (0..p).map(|v| CliquePotential::from_log(vec![v], field.to_vec())).collect();
    for &(a, b) in edges {
        pots.push(CliquePotential::from_log(vec![a, b], potts(d, j, shift)));
    }
    ComponentModel::new(Graph::from_edges(p, edges.iter().copied()).unwrap(), pots, d).unwrap()
}

/// Two-component mixture over `p` nodes with node 0 isolated and the given component edge sets.
pub fn potts_mixture(p: usize, edges: [&[(usize, usize)]; 2], j: f64) -> MixtureModel {
    let comps = vec![
        potts_component(p, 3, edges[0], &[0.8, 0.0, -0.4], j, 0),
        potts_component(p, 3, edges[1], &[-0.4, 0.0, 0.8], j, 1),
    ];
    MixtureModel::new(comps, vec![0.45, 0.55], 0).unwrap()
}

pub fn tree_mixture(seed: u64) -> MixtureModel {
    let mut cfg = GeneratorConfig::new(8, 3, 2, Family::Tree, seed);
    cfg.eta = Some(2);
    build_mixture(&cfg).unwrap()
}
