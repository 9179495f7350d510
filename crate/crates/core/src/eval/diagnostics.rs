//! Model-dependent assumption quantities evaluated on the exact oracle.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::info::phi_inverse;
use crate::empirical::singular_values;
use crate::error::Result;
use crate::graphs::Graph;
use crate::model::{MixtureModel, Oracle, DEFAULT_ENUMERATION_CAP};
use crate::pipeline::{chow_liu, mutual_information, tree_separation_margin, MutualInformationTable, SpanningTree};
use crate::util::{checked_pow, subsets_up_to};

/// Rank margins used both by the generator and by [`diagnostics`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionMargins {
    /// `min_{(u,v) ∈ G, |S| <= η} max_k σ_{r+1}(M_{u,v,{S;k}})`; `None` without edges
    pub rho_min: Option<f64>,
    /// `min σ_r(M_{(a,b)|H,{S;k}})` over `|S| <= 2η`
    pub sigma_r_conditional_min: Option<f64>,
    /// `min σ_r(M_{u*,v,{S;k}})` over `|S| <= 2η`
    pub rho1_min: Option<f64>,
}

impl AssumptionMargins {
    pub fn certified(&self, tol: f64) -> bool {
        self.rho_min.is_none_or(|x| x > tol)
            && self.sigma_r_conditional_min.is_none_or(|x| x > tol)
            && self.rho1_min.is_none_or(|x| x > tol)
    }
}

fn fold_min(values: impl Iterator<Item = f64>) -> Option<f64> {
    values.fold(None, |acc, x| Some(acc.map_or(x, |a: f64| a.min(x))))
}

fn fold_max(values: impl Iterator<Item = f64>) -> Option<f64> {
    values.fold(None, |acc, x| Some(acc.map_or(x, |a: f64| a.max(x))))
}

/// Blocks `M[i][j]` of a table over `[row nodes, col nodes, S]` for every `k` with mass.
fn blocks(table: &[f64], d: usize, nr: usize, nc: usize, s_len: usize) -> Vec<DMatrix<f64>> {
    let block = checked_pow(d, s_len).expect("block");
    (0..block)
        .filter_map(|k| {
            let m = DMatrix::from_fn(nr, nc, |i, j| table[(i * nc + j) * block + k]);
            (m.sum() > 0.0).then_some(m)
        })
        .collect()
}

/// `σ_r` via the `r×r` Gram matrix; exact enough for certification.
fn sigma_r_gram(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    gram.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min).max(0.0).sqrt()
}

pub(crate) fn rho_min(o: &Oracle, g: &Graph, eta: usize, r: usize) -> Option<f64> {
    let p = o.num_nodes();
    let d = o.alphabet_size();
    let per_edge: Vec<Option<f64>> = g
        .edges()
        .par_iter()
        .map(|&(u, v)| {
            let rest: Vec<usize> = (0..p).filter(|&x| x != u && x != v).collect();
            fold_min(subsets_up_to(&rest, eta).into_iter().map(|s| {
                let mut nodes = vec![u, v];
                nodes.extend_from_slice(&s);
                let table = o.marginal(&nodes);
                blocks(&table, d, d, d, s.len())
                    .iter()
                    .map(|b| singular_values(b).get(r).copied().unwrap_or(0.0))
                    .fold(0.0, f64::max)
            }))
        })
        .collect();
    fold_min(per_edge.into_iter().flatten())
}

struct ConditionalStats {
    sigma_r_min: Option<f64>,
    alpha_min: Option<f64>,
    alpha_max: Option<f64>,
}

/// Scan `M_{(a,b)|H,{S;k}}` over all pairs `a,b ≠ u*` and `|S| <= cap`.
fn conditional_stats(o: &Oracle, u_star: usize, cap: usize) -> ConditionalStats {
    let p = o.num_nodes();
    let d = o.alphabet_size();
    let r = o.num_components();
    let nodes: Vec<usize> = (0..p).filter(|&x| x != u_star).collect();
    let pairs: Vec<(usize, usize)> = nodes
        .iter()
        .flat_map(|&a| nodes.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
        .collect();
    let stats: Vec<(f64, f64, f64)> = pairs
        .par_iter()
        .flat_map_iter(|&(a, b)| {
            let rest: Vec<usize> = nodes.iter().copied().filter(|&x| x != a && x != b).collect();
            subsets_up_to(&rest, cap).into_iter().flat_map(move |s| {
                let mut group = vec![a, b];
                group.extend_from_slice(&s);
                let tables: Vec<Vec<f64>> = (0..r).map(|h| o.component_marginal(h, &group)).collect();
                let block = checked_pow(d, s.len()).expect("block");
                (0..block)
                    .filter_map(|k| {
                        let m = DMatrix::from_fn(d * d, r, |i, h| tables[h][i * block + k]);
                        let mut m = m;
                        for mut col in m.column_iter_mut() {
                            let mass = col.sum();
                            if !(mass > 0.0) {
                                return None;
                            }
                            col /= mass;
                        }
                        let sig = sigma_r_gram(&m);
                        let amax = (0..r).map(|j| m.column(j).norm()).fold(0.0, f64::max);
                        let mut amin = f64::INFINITY;
                        for i in 0..r {
                            for j in i + 1..r {
                                amin = amin.min((m.column(i) - m.column(j)).norm());
                            }
                        }
                        Some((sig, amin, amax))
                    })
                    .collect::<Vec<_>>()
            })
        })
        .collect();
    ConditionalStats {
        sigma_r_min: fold_min(stats.iter().map(|s| s.0)),
        alpha_min: fold_min(stats.iter().map(|s| s.1).filter(|x| x.is_finite())),
        alpha_max: fold_max(stats.iter().map(|s| s.2)),
    }
}

/// `min σ_r(M_{u*, W, {S;k}})` for single nodes `W = v` (`pair = false`) or pairs `W = (a,b)`.
fn reference_rank(o: &Oracle, u_star: usize, cap: usize, pair: bool) -> Option<f64> {
    let p = o.num_nodes();
    let d = o.alphabet_size();
    let r = o.num_components();
    let nodes: Vec<usize> = (0..p).filter(|&x| x != u_star).collect();
    let targets: Vec<Vec<usize>> = if pair {
        nodes
            .iter()
            .flat_map(|&a| nodes.iter().filter(move |&&b| b > a).map(move |&b| vec![a, b]))
            .collect()
    } else {
        nodes.iter().map(|&v| vec![v]).collect()
    };
    let values: Vec<Option<f64>> = targets
        .par_iter()
        .map(|w| {
            let rest: Vec<usize> = nodes.iter().copied().filter(|x| !w.contains(x)).collect();
            fold_min(subsets_up_to(&rest, cap).into_iter().filter_map(|s| {
                let mut group = vec![u_star];
                group.extend_from_slice(w);
                group.extend_from_slice(&s);
                let table = o.marginal(&group);
                let nc = checked_pow(d, w.len()).expect("cols");
                fold_min(
                    blocks(&table, d, d, nc, s.len())
                        .iter()
                        .map(|b| singular_values(b).get(r - 1).copied().unwrap_or(0.0)),
                )
            }))
        })
        .collect();
    fold_min(values.into_iter().flatten())
}

/// Exact pairwise mutual information of component `h` over `V \ {u*}` and its Chow-Liu tree.
pub fn oracle_chow_liu(o: &Oracle, u_star: usize, h: usize) -> (SpanningTree, MutualInformationTable) {
    let p = o.num_nodes();
    let d = o.alphabet_size();
    let nodes: Vec<usize> = (0..p).filter(|&x| x != u_star).collect();
    let mut mi = MutualInformationTable::new(nodes.clone());
    for (i, &a) in nodes.iter().enumerate() {
        for &b in &nodes[i + 1..] {
            let t = o.component_marginal(h, &[a, b]);
            mi.insert(a, b, mutual_information(&DMatrix::from_row_slice(d, d, &t)));
        }
    }
    (chow_liu(&mi, None), mi)
}

/// Neighbour rank margins and full-rank views needed to accept a generated model.
pub fn assumption_margins(m: &MixtureModel, o: &Oracle, eta: usize) -> AssumptionMargins {
    let r = m.num_components();
    let u_star = m.isolated_node();
    AssumptionMargins {
        rho_min: rho_min(o, &m.union_graph(), eta, r),
        sigma_r_conditional_min: conditional_stats(o, u_star, 2 * eta).sigma_r_min,
        rho1_min: reference_rank(o, u_star, 2 * eta, false),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    /// separator bound; defaults to the true bound of the union graph
    pub eta: Option<usize>,
    pub gamma: Option<usize>,
    pub zeta: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub enumeration_cap: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            eta: None,
            gamma: None,
            zeta: 0.0,
            delta: 0.05,
            epsilon: 0.1,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssumptionFlags {
    pub a1: bool,
    pub a3: bool,
    pub a6: bool,
    pub a7: bool,
    pub a10: bool,
}

/// `None` marks quantities that are undefined for the model (e.g. `α_min` at `r = 1`)
/// or infinite (`ϑ` without tree non-edges).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub p: usize,
    pub d: usize,
    pub r: usize,
    pub eta: usize,
    pub rho_min: Option<f64>,
    pub vartheta: Option<f64>,
    pub vartheta_per_component: Vec<Option<f64>>,
    pub alpha_min: Option<f64>,
    pub alpha_max: Option<f64>,
    pub alpha: Option<f64>,
    pub sigma_r_conditional_min: Option<f64>,
    pub kappa: Option<f64>,
    pub rho1_min: Option<f64>,
    pub rho2_min: Option<f64>,
    pub k_prime: Option<f64>,
    pub k: Option<f64>,
    pub n_rank: Option<f64>,
    pub n_spect: Option<f64>,
    pub epsilon0: Option<f64>,
    pub epsilon_tree: Option<f64>,
    pub n_tree: Option<f64>,
    pub delta2: usize,
    pub k_prime_tree: Option<f64>,
    pub k_tree: Option<f64>,
    pub beta_lower: Option<f64>,
    pub lambda_max_upper: Option<f64>,
    pub flags: AssumptionFlags,
    pub config: DiagnosticsConfig,
}

struct KInputs {
    p: f64,
    d: f64,
    r: f64,
    eta: f64,
    delta: f64,
    kappa: f64,
    alpha: f64,
    alpha_max: f64,
    rho1: f64,
    rho2: f64,
}

impl KInputs {
    /// `K′` with configuration count `c` (`(pd)^{2η}`, or `d^{2η}Δ₂^{2η}` on the tree path)
    /// and `lead_scale` applied to the first term.
    fn k_prime(&self, c: f64, lead_scale: f64) -> f64 {
        let KInputs { p, r, delta, kappa, alpha, alpha_max, rho1, rho2, .. } = *self;
        let log_term = 1.0 + (2.0 * (r * r * p * p * c / delta).ln()).sqrt();
        lead_scale * 1024.0 * kappa.powi(4) * std::f64::consts::E.sqrt() * alpha / (delta * rho1)
            * r.powi(5)
            * p * p
            * c
            * log_term
            + 48.0 * r.sqrt() / rho1 * kappa * kappa
            + 2.0 * alpha_max / rho2
    }

    fn k_from(&self, k_prime: f64) -> f64 {
        let KInputs { p, d, eta, delta, .. } = *self;
        k_prime * (1.0 + ((p.powf(2.0 * eta + 2.0) * d.powf(2.0 * eta) / delta).ln()).sqrt())
    }
}

/// Evaluate every assumption quantity on the exact oracle.
pub fn diagnostics(m: &MixtureModel, cfg: &DiagnosticsConfig) -> Result<DiagnosticsReport> {
    let o = Oracle::new(m, cfg.enumeration_cap)?;
    let p = m.num_nodes();
    let d = m.alphabet_size();
    let r = m.num_components();
    let u_star = m.isolated_node();
    let union = m.union_graph();
    let eta = cfg.eta.unwrap_or_else(|| crate::model::separator_bound(&union));

    let rho_min = rho_min(&o, &union, eta, r);
    let cond = conditional_stats(&o, u_star, 2 * eta);
    let rho1 = reference_rank(&o, u_star, 2 * eta, false);
    let rho2 = reference_rank(&o, u_star, 2 * eta, true);
    let reference = o.conditional_matrix(&[u_star], &[], &[])?;
    let sv = singular_values(&reference);
    let kappa = (sv[r - 1] > 0.0).then(|| sv[0] / sv[r - 1]);
    let alpha = match (cond.alpha_max, cond.alpha_min) {
        (Some(mx), Some(mn)) if mn > 0.0 => Some(mx / mn),
        _ => None,
    };

    let per_component: Vec<f64> = (0..r)
        .map(|h| {
            let (tree, mi) = oracle_chow_liu(&o, u_star, h);
            tree_separation_margin(&tree.edges, &mi)
        })
        .collect();
    let vartheta = per_component.iter().cloned().fold(f64::INFINITY, f64::min);
    let finite = |x: f64| x.is_finite().then_some(x);

    let delta2 = union
        .edges()
        .iter()
        .map(|&(a, b)| union.neighbors(a).union(union.neighbors(b)).count())
        .max()
        .unwrap_or(0);

    let (pf, df, rf, ef) = (p as f64, d as f64, r as f64, eta as f64);
    let inputs = match (kappa, alpha, cond.alpha_max, rho1, rho2) {
        (Some(kappa), Some(alpha), Some(alpha_max), Some(rho1), Some(rho2)) if rho1 > 0.0 && rho2 > 0.0 => {
            Some(KInputs {
                p: pf,
                d: df,
                r: rf,
                eta: ef,
                delta: cfg.delta,
                kappa,
                alpha,
                alpha_max,
                rho1,
                rho2,
            })
        }
        _ => None,
    };
    let c_full = (pf * df).powf(2.0 * ef);
    let c_tree = df.powf(2.0 * ef) * (delta2 as f64).powf(2.0 * ef);
    let k_prime = inputs.as_ref().map(|i| i.k_prime(c_full, 1.0));
    let k = inputs.as_ref().zip(k_prime).map(|(i, kp)| i.k_from(kp));
    let k_prime_tree = inputs.as_ref().map(|i| i.k_prime(c_tree, std::f64::consts::FRAC_1_SQRT_2));
    let k_tree = inputs.as_ref().zip(k_prime_tree).map(|(i, kp)| i.k_from(kp));

    let n_rank = rho_min.and_then(|rho| {
        let t = (rho - cfg.zeta) / 2.0;
        (t > 0.0).then(|| {
            let first = (2.0 * pf.ln() + (1.0 / cfg.delta).ln() + 2f64.ln()) / (t * t);
            let second = (2.0 / (rho - cfg.zeta - t)).powi(2);
            first.max(second)
        })
    });
    let epsilon0 = k_prime.map(|kp| 2.0 * kp * cfg.zeta);
    let n_spect_at = |eps: f64| -> Option<f64> {
        let k = k?;
        let e0 = epsilon0.unwrap_or(0.0);
        (eps > e0).then(|| 4.0 * k * k / ((eps - e0) * (eps - e0)))
    };
    let n_spect = n_spect_at(cfg.epsilon);
    let epsilon_tree = finite(vartheta).and_then(|v| phi_inverse(v / (12.0 * df)).ok());
    let n_tree = epsilon_tree.and_then(n_spect_at);

    let binom_r2 = rf * (rf - 1.0) / 2.0;
    let beta_lower = cond.alpha_min.filter(|_| r > 1).map(|amin| {
        amin * cfg.delta / (2.0 * (std::f64::consts::E * rf).sqrt() * binom_r2 * rf * pf * pf * c_full)
    });
    let lambda_max_upper = cond
        .alpha_max
        .map(|amax| amax / rf.sqrt() * (1.0 + (2.0 * (rf * rf * pf * pf * c_full / cfg.delta).ln()).sqrt()));

    let flags = AssumptionFlags {
        a1: m.weights().iter().all(|&w| w > 0.0) && (r == 1 || d > r),
        a3: rho_min.is_none_or(|x| x > 1e-8),
        a6: cond.sigma_r_min.is_none_or(|x| x > 1e-8) && sv[r - 1] > 1e-8,
        a7: union.degree(u_star) == 0,
        a10: vartheta > 0.0,
    };

    Ok(DiagnosticsReport {
        p,
        d,
        r,
        eta,
        rho_min,
        vartheta: finite(vartheta),
        vartheta_per_component: per_component.into_iter().map(finite).collect(),
        alpha_min: cond.alpha_min,
        alpha_max: cond.alpha_max,
        alpha,
        sigma_r_conditional_min: cond.sigma_r_min,
        kappa,
        rho1_min: rho1,
        rho2_min: rho2,
        k_prime,
        k,
        n_rank,
        n_spect,
        epsilon0,
        epsilon_tree,
        n_tree,
        delta2,
        k_prime_tree,
        k_tree,
        beta_lower,
        lambda_max_upper,
        flags,
        config: cfg.clone(),
    })
}
