//! Union-graph estimation by effective-rank tests over small conditioning sets.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::empirical::{singular_values, MarginalTable, StatsSource};
use crate::error::{Error, Result};
use crate::graphs::Graph;
use crate::util::{binomial, checked_pow, decode, subsets_up_to};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTestConfig {
    pub eta: usize,
    pub r: usize,
    pub xi: f64,
    /// path threshold for local separation; only affects the threshold through `zeta`
    pub gamma: Option<usize>,
    pub zeta: f64,
}

impl RankTestConfig {
    pub fn new(eta: usize, r: usize, xi: f64) -> Self {
        RankTestConfig {
            eta,
            r,
            xi,
            gamma: None,
            zeta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 1 {
            return Err(Error::InvalidConfig("r must be at least 1".into()));
        }
        if !(self.xi >= 0.0) || !self.xi.is_finite() {
            return Err(Error::InvalidConfig(format!("threshold xi={} must be finite and >= 0", self.xi)));
        }
        if !(self.zeta >= 0.0) {
            return Err(Error::InvalidConfig(format!("zeta={} must be >= 0", self.zeta)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonEdgeCertificate {
    pub u: usize,
    pub v: usize,
    pub separator: Vec<usize>,
    /// max over informative configurations `k` of the effective rank
    pub max_rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphEstimate {
    pub graph: Graph,
    pub certificates: Vec<NonEdgeCertificate>,
    /// edges kept only because every candidate set gave all-zero blocks
    pub insufficient_data: Vec<(usize, usize)>,
    pub tested_pairs: usize,
    pub svd_calls: u64,
    pub xi: f64,
}

impl GraphEstimate {
    pub fn certificate(&self, u: usize, v: usize) -> Option<&NonEdgeCertificate> {
        let (u, v) = (u.min(v), u.max(v));
        self.certificates.iter().find(|c| c.u == u && c.v == v)
    }
}

/// Separator blocks `M_{u,v,{S;k}}` for every `k`, skipping null configurations.
pub(crate) fn blocks(table: &MarginalTable, s_len: usize) -> Vec<DMatrix<f64>> {
    let d = table.d;
    let configs = checked_pow(d, s_len).expect("configs");
    (0..configs)
        .filter_map(|ki| {
            let k = decode(ki, d, s_len);
            let flat = table.slice_trailing(s_len, &k);
            if flat.iter().all(|&x| x == 0.0) {
                None
            } else {
                Some(DMatrix::from_fn(d, d, |i, j| flat[i * d + j]))
            }
        })
        .collect()
}

enum PairOutcome {
    NonEdge(Vec<usize>, usize),
    Edge,
    NoData,
}

fn test_pair(src: &StatsSource, u: usize, v: usize, cfg: &RankTestConfig) -> Result<(PairOutcome, u64)> {
    let rest: Vec<usize> = (0..src.num_nodes()).filter(|&x| x != u && x != v).collect();
    let mut svds = 0u64;
    let mut informative = false;
    for s in subsets_up_to(&rest, cfg.eta) {
        let mut nodes = vec![u, v];
        nodes.extend_from_slice(&s);
        let table = src.marginal_table(&nodes)?;
        let mut max_rank = 0;
        let mut any = false;
        for block in blocks(&table, s.len()) {
            any = true;
            svds += 1;
            let rank = singular_values(&block).iter().filter(|&&x| x > cfg.xi).count();
            max_rank = max_rank.max(rank);
            if max_rank > cfg.r {
                break;
            }
        }
        if !any {
            continue;
        }
        informative = true;
        if max_rank <= cfg.r {
            return Ok((PairOutcome::NonEdge(s, max_rank), svds));
        }
    }
    Ok((if informative { PairOutcome::Edge } else { PairOutcome::NoData }, svds))
}

fn all_pairs(p: usize) -> Vec<(usize, usize)> {
    (0..p).flat_map(|u| (u + 1..p).map(move |v| (u, v))).collect()
}

/// Declare `(u,v)` a non-edge when some `S` with `|S| <= eta` gives
/// `max_k rank_xi(M_{u,v,{S;k}}) <= r`; the first such `S` (by size, then
/// lexicographic) is kept as the certificate.
pub fn rank_test(src: &StatsSource, cfg: &RankTestConfig) -> Result<GraphEstimate> {
    cfg.validate()?;
    let p = src.num_nodes();
    let d = src.alphabet_size();
    if d <= cfg.r {
        log::warn!("alphabet size d={d} does not exceed r={}: the rank test is vacuous", cfg.r);
    }
    let pairs = all_pairs(p);
    let outcomes = pairs
        .par_iter()
        .map(|&(u, v)| test_pair(src, u, v, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut graph = Graph::empty(p);
    let mut certificates = Vec::new();
    let mut insufficient = Vec::new();
    let mut svd_calls = 0;
    for (&(u, v), (outcome, calls)) in pairs.iter().zip(outcomes) {
        svd_calls += calls;
        match outcome {
            PairOutcome::NonEdge(separator, max_rank) => certificates.push(NonEdgeCertificate {
                u,
                v,
                separator,
                max_rank,
            }),
            PairOutcome::Edge => graph.add_edge(u, v)?,
            PairOutcome::NoData => {
                graph.add_edge(u, v)?;
                insufficient.push((u, v));
            }
        }
    }
    Ok(GraphEstimate {
        graph,
        certificates,
        insufficient_data: insufficient,
        tested_pairs: pairs.len(),
        svd_calls,
        xi: cfg.xi,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum ThresholdPolicy {
    Oracle { rho_min: f64, zeta: f64 },
    Fixed { xi: f64 },
    Gap,
}

/// Pilot statistic per pair: `min_S max_k σ_{r+1}(M_{u,v,{S;k}})` over `|S| <= eta`.
pub fn pilot_statistics(src: &StatsSource, eta: usize, r: usize) -> Result<Vec<((usize, usize), f64)>> {
    let p = src.num_nodes();
    all_pairs(p)
        .par_iter()
        .map(|&(u, v)| {
            let rest: Vec<usize> = (0..p).filter(|&x| x != u && x != v).collect();
            let mut best = f64::INFINITY;
            for s in subsets_up_to(&rest, eta) {
                let mut nodes = vec![u, v];
                nodes.extend_from_slice(&s);
                let table = src.marginal_table(&nodes)?;
                let worst = blocks(&table, s.len())
                    .iter()
                    .map(|b| singular_values(b).get(r).copied().unwrap_or(0.0))
                    .fold(f64::NEG_INFINITY, f64::max);
                if worst.is_finite() {
                    best = best.min(worst);
                }
            }
            Ok(((u, v), if best.is_finite() { best } else { 0.0 }))
        })
        .collect()
}

/// Split pooled pilot statistics at their largest log-ratio gap.
///
/// Values are clamped below at `floor`, and `floor` itself is pooled so a
/// graph with no non-edges still yields a threshold under every edge.
pub fn gap_threshold(values: &[f64], floor: f64) -> Result<f64> {
    if !(floor > 0.0) {
        return Err(Error::InvalidConfig("gap floor must be positive".into()));
    }
    let mut pooled: Vec<f64> = values.iter().map(|&x| x.max(floor)).collect();
    pooled.push(floor);
    pooled.sort_by(f64::total_cmp);
    let mut best = (0.0, floor);
    for w in pooled.windows(2) {
        let gap = (w[1] / w[0]).ln();
        if gap > best.0 {
            best = (gap, (w[0] * w[1]).sqrt());
        }
    }
    Ok(best.1)
}

/// Default clamp for the gap policy: below any exact-arithmetic signal, or
/// a fraction of the sampling noise scale `1/√n`.
pub fn default_gap_floor(src: &StatsSource) -> f64 {
    match src.num_samples() {
        None => 1e-12,
        Some(n) => 0.25 / (n as f64).sqrt(),
    }
}

pub fn choose_threshold(policy: &ThresholdPolicy, src: Option<&StatsSource>, eta: usize, r: usize) -> Result<f64> {
    match *policy {
        ThresholdPolicy::Fixed { xi } => {
            if xi >= 0.0 && xi.is_finite() {
                Ok(xi)
            } else {
                Err(Error::InvalidConfig(format!("threshold xi={xi} must be finite and >= 0")))
            }
        }
        ThresholdPolicy::Oracle { rho_min, zeta } => {
            let xi = (rho_min - zeta) / 2.0;
            if xi > 0.0 {
                Ok(xi)
            } else {
                Err(Error::InfeasibleThreshold(format!(
                    "rho_min={rho_min} does not exceed zeta={zeta}"
                )))
            }
        }
        ThresholdPolicy::Gap => {
            let src = src.ok_or_else(|| Error::InvalidConfig("gap policy needs statistics".into()))?;
            let stats = pilot_statistics(src, eta, r)?;
            let values: Vec<f64> = stats.into_iter().map(|(_, t)| t).collect();
            gap_threshold(&values, default_gap_floor(src))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestBudget {
    pub pairs: u128,
    pub separator_sets: u128,
    pub svd_calls_upper_bound: u128,
}

pub fn test_budget(p: usize, eta: usize, d: usize) -> TestBudget {
    let pairs = binomial(p, 2);
    let separator_sets: u128 = (0..=eta).map(|s| binomial(p.saturating_sub(2), s)).sum();
    let configs = (d as u128).saturating_pow(eta as u32);
    TestBudget {
        pairs,
        separator_sets,
        svd_calls_upper_bound: pairs.saturating_mul(separator_sets).saturating_mul(configs),
    }
}
