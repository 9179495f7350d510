//! Random benchmark instances.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CliquePotential, ComponentModel, MixtureModel, Oracle, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::graphs::Graph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// uniformly random spanning tree over `V \ {0}` per component
    Tree,
    /// random edges subject to a degree cap
    BoundedDegree,
    /// no edges
    Product,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tree" => Ok(Family::Tree),
            "bounded_degree" | "bounded-degree" => Ok(Family::BoundedDegree),
            "product" => Ok(Family::Product),
            other => Err(Error::InvalidConfig(format!("unknown family `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub p: usize,
    pub d: usize,
    pub r: usize,
    pub family: Family,
    pub max_degree: usize,
    /// natural parameters are drawn uniformly from `[lo, hi]`
    pub potential_strength: (f64, f64),
    pub seed: u64,
    /// separator bound used for certification; defaults to the true bound of the union graph
    pub eta: Option<usize>,
    pub max_retries: usize,
    pub enumeration_cap: usize,
    /// reject draws where some union edge has no witness for the spectral stage
    #[serde(default = "default_true")]
    pub require_witnesses: bool,
}

fn default_true() -> bool {
    true
}

impl GeneratorConfig {
    pub fn new(p: usize, d: usize, r: usize, family: Family, seed: u64) -> Self {
        GeneratorConfig {
            p,
            d,
            r,
            family,
            max_degree: 3,
            potential_strength: (-1.0, 1.0),
            seed,
            eta: None,
            max_retries: 100,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            require_witnesses: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 3 {
            return Err(Error::InvalidConfig(format!("p={} but at least 3 nodes are needed", self.p)));
        }
        if self.d < 2 || self.r < 1 {
            return Err(Error::InvalidConfig(format!("need d >= 2 and r >= 1, got d={}, r={}", self.d, self.r)));
        }
        if self.r > 1 && self.d <= self.r {
            return Err(Error::Assumption(format!(
                "(A1) alphabet size d={} must exceed the component count r={}",
                self.d, self.r
            )));
        }
        let (lo, hi) = self.potential_strength;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidConfig(format!("bad potential range [{lo}, {hi}]")));
        }
        if self.family == Family::BoundedDegree && self.max_degree == 0 {
            return Err(Error::InvalidConfig("max_degree must be positive".into()));
        }
        Ok(())
    }
}

/// Random spanning tree on `nodes` from a uniform Prüfer sequence.
fn random_tree<R: Rng>(p: usize, nodes: &[usize], rng: &mut R) -> Graph {
    let m = nodes.len();
    let mut g = Graph::empty(p);
    if m < 2 {
        return g;
    }
    if m == 2 {
        g.add_edge(nodes[0], nodes[1]).expect("valid edge");
        return g;
    }
    let seq: Vec<usize> = (0..m - 2).map(|_| rng.random_range(0..m)).collect();
    let mut degree = vec![1usize; m];
    for &x in &seq {
        degree[x] += 1;
    }
    for &x in &seq {
        let leaf = (0..m).find(|&i| degree[i] == 1).expect("leaf exists");
        g.add_edge(nodes[leaf], nodes[x]).expect("valid edge");
        degree[leaf] -= 1;
        degree[x] -= 1;
    }
    let rest: Vec<usize> = (0..m).filter(|&i| degree[i] == 1).collect();
    g.add_edge(nodes[rest[0]], nodes[rest[1]]).expect("valid edge");
    g
}

fn random_bounded_degree<R: Rng>(p: usize, nodes: &[usize], max_degree: usize, rng: &mut R) -> Graph {
    let mut pairs = Vec::new();
    for (i, &a) in nodes.iter().enumerate() {
        for &b in &nodes[i + 1..] {
            pairs.push((a, b));
        }
    }
    pairs.shuffle(rng);
    let mut g = Graph::empty(p);
    for (a, b) in pairs {
        if g.degree(a) < max_degree && g.degree(b) < max_degree && rng.random_bool(0.5) {
            g.add_edge(a, b).expect("valid edge");
        }
    }
    g
}

fn random_component<R: Rng>(cfg: &GeneratorConfig, rng: &mut R) -> Result<ComponentModel> {
    let nodes: Vec<usize> = (1..cfg.p).collect();
    let graph = match cfg.family {
        Family::Tree => random_tree(cfg.p, &nodes, rng),
        Family::BoundedDegree => random_bounded_degree(cfg.p, &nodes, cfg.max_degree, rng),
        Family::Product => Graph::empty(cfg.p),
    };
    let (lo, hi) = cfg.potential_strength;
    let mut draw = |len: usize| -> Vec<f64> {
        (0..len)
            .map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo })
            .collect()
    };
    let d = cfg.d;
    let mut potentials: Vec<CliquePotential> = (0..cfg.p)
        .map(|v| CliquePotential::from_log(vec![v], draw(d)))
        .collect();
    for (a, b) in graph.edges() {
        potentials.push(CliquePotential::from_log(vec![a, b], draw(d * d)));
    }
    ComponentModel::new(graph, potentials, d)
}

/// Largest minimum vertex separator over non-adjacent pairs of `g`.
pub fn separator_bound(g: &Graph) -> usize {
    let p = g.num_nodes();
    let mut eta = 0;
    for u in 0..p {
        for v in u + 1..p {
            if g.has_edge(u, v) {
                continue;
            }
            let cert = crate::graphs::min_vertex_separator(g, &[u], &[v], p)
                .expect("valid sides")
                .expect("cap p always suffices");
            eta = eta.max(cert.separator.len());
        }
    }
    eta
}

/// Every edge of `g` has a witness node whose separator from the edge fits in `cap`.
pub fn witness_coverage(g: &Graph, u_star: usize, cap: usize) -> Result<bool> {
    for (a, b) in g.edges() {
        if crate::pipeline::find_witness(g, &[a, b], u_star, cap, None)?.is_none() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Draw a random mixture and certify it against the exact oracle.
///
/// Node 0 is isolated in every component. A draw is accepted once its union
/// graph has separators within `eta` and a witness for every edge, and the
/// neighbour rank condition, the conditional full-rank condition and the
/// reference-node rank condition all clear `1e-8`.
pub fn build_mixture(cfg: &GeneratorConfig) -> Result<MixtureModel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for attempt in 0..cfg.max_retries.max(1) {
        let components = (0..cfg.r)
            .map(|_| random_component(cfg, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let raw: Vec<f64> = (0..cfg.r).map(|_| rng.random_range(0.5..1.5)).collect();
        let total: f64 = raw.iter().sum();
        let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let drift: f64 = 1.0 - weights.iter().sum::<f64>();
        weights[0] += drift;
        let m = MixtureModel::new(components, weights, 0)?;
        let needed = separator_bound(&m.union_graph());
        let eta = cfg.eta.unwrap_or(needed);
        if needed > eta {
            log::debug!("generator rejected draw {attempt}: separators need {needed} > eta={eta}");
            continue;
        }
        if cfg.require_witnesses && !witness_coverage(&m.union_graph(), 0, 2 * eta)? {
            log::debug!("generator rejected draw {attempt}: some union edge has no witness");
            continue;
        }
        let oracle = Oracle::new(&m, cfg.enumeration_cap)?;
        let margins = crate::eval::assumption_margins(&m, &oracle, eta);
        if margins.certified(1e-8) {
            log::debug!("generator accepted draw {attempt} (seed {})", cfg.seed);
            return Ok(m);
        }
        log::debug!("generator rejected draw {attempt}: {margins:?}");
    }
    Err(Error::RetryBudgetExhausted(cfg.max_retries))
}
