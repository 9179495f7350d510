//! Mixtures of discrete graphical models.
//!
//! Each component is a positive Markov random field on `p` nodes with
//! alphabet `{0..d-1}`, parameterised by clique potentials. Potentials are
//! held in natural-parameter (log) form; the public surface and the JSON file
//! format use positive tables.

mod generate;
mod oracle;
mod sampling;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use generate::{build_mixture, separator_bound, witness_coverage, Family, GeneratorConfig};
pub use oracle::{
    exact_conditional_matrix, exact_joint, exact_prob_matrix, JointTable, Oracle,
    DEFAULT_ENUMERATION_CAP,
};
pub use sampling::{sample, SampleSet};

use crate::error::{Error, Result};
use crate::graphs::{union_graph, Graph};
use crate::util::checked_pow;

/// Potential on one clique, stored as natural parameters `Ψ_c(y_c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CliquePotential {
    clique: Vec<usize>,
    log_table: Vec<f64>,
}

impl CliquePotential {
    /// From natural parameters; the table is row-major over the sorted clique.
    pub fn from_log(clique: Vec<usize>, log_table: Vec<f64>) -> Self {
        CliquePotential { clique, log_table }
    }

    /// From a strictly positive table.
    pub fn from_table(clique: Vec<usize>, table: &[f64]) -> Result<Self> {
        if let Some(bad) = table.iter().find(|&&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidConfig(format!(
                "potential entry {bad} on clique {clique:?} is not strictly positive"
            )));
        }
        Ok(CliquePotential {
            clique,
            log_table: table.iter().map(|t| t.ln()).collect(),
        })
    }

    pub fn clique(&self) -> &[usize] {
        &self.clique
    }

    pub fn log_table(&self) -> &[f64] {
        &self.log_table
    }

    pub fn table(&self) -> Vec<f64> {
        self.log_table.iter().map(|l| l.exp()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentModel {
    graph: Graph,
    potentials: Vec<CliquePotential>,
    d: usize,
}

impl ComponentModel {
    pub fn new(graph: Graph, potentials: Vec<CliquePotential>, d: usize) -> Result<Self> {
        let p = graph.num_nodes();
        if p < 2 || d < 2 {
            return Err(Error::InvalidConfig(format!(
                "component needs p >= 2 and d >= 2, got p={p}, d={d}"
            )));
        }
        for pot in &potentials {
            let c = &pot.clique;
            if c.is_empty() || c.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidConfig(format!(
                    "clique {c:?} must be nonempty and strictly increasing"
                )));
            }
            if let Some(&x) = c.iter().find(|&&x| x >= p) {
                return Err(Error::OutOfRange(format!("clique node {x} with p={p}")));
            }
            for (i, &a) in c.iter().enumerate() {
                for &b in &c[i + 1..] {
                    if !graph.has_edge(a, b) {
                        return Err(Error::InvalidConfig(format!(
                            "clique {c:?} is not a clique of the component graph"
                        )));
                    }
                }
            }
            let expected = checked_pow(d, c.len())
                .ok_or_else(|| Error::InvalidConfig("clique table too large".into()))?;
            if pot.log_table.len() != expected {
                return Err(Error::InvalidConfig(format!(
                    "clique {c:?} table has {} entries, expected {expected}",
                    pot.log_table.len()
                )));
            }
            if pot.log_table.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
                return Err(Error::InvalidConfig(format!(
                    "clique {c:?} has non-finite potentials"
                )));
            }
        }
        Ok(ComponentModel {
            graph,
            potentials,
            d,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn potentials(&self) -> &[CliquePotential] {
        &self.potentials
    }

    pub fn alphabet_size(&self) -> usize {
        self.d
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    /// Unnormalised log-density `Σ_c Ψ_c(y_c)`.
    pub fn log_potential(&self, y: &[usize]) -> f64 {
        self.potentials
            .iter()
            .map(|pot| {
                let idx = pot.clique.iter().fold(0, |acc, &x| acc * self.d + y[x]);
                pot.log_table[idx]
            })
            .sum()
    }

    /// True when every clique has at most two nodes and the graph is a forest,
    /// so exact ancestral sampling applies.
    pub fn is_pairwise_forest(&self) -> bool {
        self.graph.is_forest() && self.potentials.iter().all(|p| p.clique.len() <= 2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureModel {
    p: usize,
    d: usize,
    components: Vec<ComponentModel>,
    weights: Vec<f64>,
    isolated_node: usize,
}

impl MixtureModel {
    pub fn new(
        components: Vec<ComponentModel>,
        weights: Vec<f64>,
        isolated_node: usize,
    ) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidConfig("mixture needs at least one component".into()))?;
        let (p, d) = (first.num_nodes(), first.d);
        if components.iter().any(|c| c.num_nodes() != p || c.d != d) {
            return Err(Error::InvalidConfig(
                "components must share node count and alphabet".into(),
            ));
        }
        let r = components.len();
        if weights.len() != r {
            return Err(Error::InvalidConfig(format!(
                "{} weights for {r} components",
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Assumption(
                "(A1) mixing weights must be strictly positive".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "mixing weights sum to {total}, expected 1"
            )));
        }
        if r > 1 && d <= r {
            return Err(Error::Assumption(format!(
                "(A1) alphabet size d={d} must exceed the component count r={r}"
            )));
        }
        if isolated_node >= p {
            return Err(Error::OutOfRange(format!("isolated node {isolated_node} with p={p}")));
        }
        if components.iter().any(|c| c.graph.degree(isolated_node) > 0) {
            return Err(Error::Assumption(format!(
                "(A7) node {isolated_node} is not isolated in every component graph"
            )));
        }
        Ok(MixtureModel {
            p,
            d,
            components,
            weights,
            isolated_node,
        })
    }

    /// Same as [`MixtureModel::new`] but without requiring the designated
    /// node to be isolated. Used to build adversarial instances.
    pub fn new_unchecked_isolation(
        components: Vec<ComponentModel>,
        weights: Vec<f64>,
        isolated_node: usize,
    ) -> Result<Self> {
        let mut stripped = components.clone();
        for c in &mut stripped {
            c.graph = Graph::empty(c.graph.num_nodes());
            c.potentials.clear();
        }
        let mut m = MixtureModel::new(stripped, weights, isolated_node)?;
        m.components = components;
        Ok(m)
    }

    pub fn num_nodes(&self) -> usize {
        self.p
    }

    pub fn alphabet_size(&self) -> usize {
        self.d
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[ComponentModel] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn isolated_node(&self) -> usize {
        self.isolated_node
    }

    pub fn union_graph(&self) -> Graph {
        let graphs: Vec<Graph> = self.components.iter().map(|c| c.graph.clone()).collect();
        union_graph(&graphs).expect("components share p")
    }

    /// Relabel hidden states: component `h` of the result is component `perm[h]` of `self`.
    pub fn permute_components(&self, perm: &[usize]) -> Result<Self> {
        let r = self.components.len();
        let mut seen = vec![false; r];
        if perm.len() != r || perm.iter().any(|&h| h >= r || std::mem::replace(&mut seen[h], true)) {
            return Err(Error::InvalidConfig(format!("{perm:?} is not a permutation of 0..{r}")));
        }
        Ok(MixtureModel {
            components: perm.iter().map(|&h| self.components[h].clone()).collect(),
            weights: perm.iter().map(|&h| self.weights[h]).collect(),
            ..self.clone()
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk model document.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    p: usize,
    d: usize,
    r: usize,
    weights: Vec<f64>,
    isolated_node: usize,
    components: Vec<ComponentFile>,
}

#[derive(Serialize, Deserialize)]
struct ComponentFile {
    edges: Vec<[usize; 2]>,
    potentials: Vec<PotentialFile>,
}

#[derive(Serialize, Deserialize)]
struct PotentialFile {
    clique: Vec<usize>,
    table: Vec<f64>,
}

impl From<&MixtureModel> for ModelFile {
    fn from(m: &MixtureModel) -> Self {
        ModelFile {
            p: m.p,
            d: m.d,
            r: m.components.len(),
            weights: m.weights.clone(),
            isolated_node: m.isolated_node,
            components: m
                .components
                .iter()
                .map(|c| ComponentFile {
                    edges: c.graph.edges().into_iter().map(|(a, b)| [a, b]).collect(),
                    potentials: c
                        .potentials
                        .iter()
                        .map(|pot| PotentialFile {
                            clique: pot.clique.clone(),
                            table: pot.table(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ModelFile> for MixtureModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.components.len() != f.r {
            return Err(Error::Parse(format!(
                "r={} but {} components listed",
                f.r,
                f.components.len()
            )));
        }
        let components = f
            .components
            .into_iter()
            .map(|c| {
                let graph = Graph::from_edges(f.p, c.edges.iter().map(|e| (e[0], e[1])))?;
                let potentials = c
                    .potentials
                    .into_iter()
                    .map(|pot| CliquePotential::from_table(pot.clique, &pot.table))
                    .collect::<Result<Vec<_>>>()?;
                ComponentModel::new(graph, potentials, f.d)
            })
            .collect::<Result<Vec<_>>>()?;
        MixtureModel::new(components, f.weights, f.isolated_node)
    }
}
