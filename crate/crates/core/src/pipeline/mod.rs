//! From a union-graph estimate to per-component pairwise marginals and trees.

mod trees;

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use trees::{chow_liu, mutual_information, tree_separation_margin, MutualInformationTable, SpanningTree};

use crate::empirical::StatsSource;
use crate::error::{Error, Result};
use crate::graphs::{ball, min_vertex_separator, Graph};
use crate::spectral::{
    align_labels, global_weights, marginalize_separator, spect_decomp, AlignmentReport, Diagonalizer,
    RotationBasis, SpectralEstimate, SpectralOptions,
};
use crate::util::{checked_pow, decode, matrix_rows};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FindOptions {
    /// only estimate pairs that are edges of the graph estimate
    pub tree_fast_path: bool,
    /// separator size cap, normally `2η`
    pub separator_cap: usize,
    /// search separators inside the radius-γ balls around the pair
    pub gamma: Option<usize>,
    pub alignment_tol: f64,
    pub spectral: SpectralOptions,
}

impl FindOptions {
    pub fn new(eta: usize) -> Self {
        FindOptions {
            tree_fast_path: false,
            separator_cap: 2 * eta,
            gamma: None,
            alignment_tol: 1e-6,
            spectral: SpectralOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMarginal {
    pub a: usize,
    pub b: usize,
    pub witness: usize,
    pub separator: Vec<usize>,
    /// `tables[h][i][j] = P̂(Y_a=i, Y_b=j | H=h)`
    pub tables: Vec<Vec<Vec<f64>>>,
}

impl PairMarginal {
    pub fn table(&self, h: usize) -> DMatrix<f64> {
        matrix_rows::from_rows(&self.tables[h]).expect("square table")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissingPair {
    pub a: usize,
    pub b: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentEstimate {
    pub isolated_node: usize,
    pub weights: Vec<f64>,
    /// `P̂(Y_{u*} | H)`, one column per hidden state
    #[serde(with = "matrix_rows")]
    pub reference_conditional: DMatrix<f64>,
    pub trees: Vec<SpanningTree>,
    pub marginals: Vec<PairMarginal>,
    pub missing_pairs: Vec<MissingPair>,
    pub alignment: AlignmentReport,
    pub mutual_information: Vec<MutualInformationTable>,
    pub diagonalizer: Diagonalizer,
    pub rotation: RotationBasis,
}

impl ComponentEstimate {
    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn marginal(&self, a: usize, b: usize) -> Option<&PairMarginal> {
        let (a, b) = (a.min(b), a.max(b));
        self.marginals.iter().find(|m| m.a == a && m.b == b)
    }

    /// Relabel hidden states so that new state `h` is old state `perm[h]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<ComponentEstimate> {
        let r = self.num_components();
        let mut seen = vec![false; r];
        if perm.len() != r || perm.iter().any(|&g| g >= r || std::mem::replace(&mut seen[g], true)) {
            return Err(Error::InvalidConfig(format!("{perm:?} is not a permutation of 0..{r}")));
        }
        let cols = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), r, |i, h| m[(i, perm[h])]);
        let mut out = self.clone();
        out.weights = perm.iter().map(|&g| self.weights[g]).collect();
        out.reference_conditional = cols(&self.reference_conditional);
        out.alignment.reference = cols(&self.alignment.reference);
        out.trees = perm.iter().map(|&g| self.trees[g].clone()).collect();
        out.mutual_information = perm.iter().map(|&g| self.mutual_information[g].clone()).collect();
        for m in &mut out.marginals {
            m.tables = perm.iter().map(|&g| m.tables[g].clone()).collect();
        }
        out.diagonalizer.r = cols(&self.diagonalizer.r);
        out.diagonalizer.r_inv = DMatrix::from_fn(r, r, |h, j| self.diagonalizer.r_inv[(perm[h], j)]);
        Ok(out)
    }

    /// ϑ_h of the estimated tree under the estimated mutual information.
    pub fn separation_margin(&self, h: usize) -> f64 {
        tree_separation_margin(&self.trees[h].edges, &self.mutual_information[h])
    }
}

/// Smallest node usable as a witness for the target group, with its separator.
pub fn find_witness(
    g: &Graph,
    targets: &[usize],
    u_star: usize,
    cap: usize,
    gamma: Option<usize>,
) -> Result<Option<(usize, Vec<usize>)>> {
    let search = match gamma {
        None => g.clone(),
        Some(gm) => {
            let keep: BTreeSet<usize> = targets.iter().flat_map(|&t| ball(g, t, gm)).collect();
            g.restrict_edges(&keep)
        }
    };
    for c in 0..g.num_nodes() {
        if c == u_star || targets.contains(&c) || targets.iter().any(|&t| g.has_edge(t, c)) {
            continue;
        }
        if let Some(cert) = min_vertex_separator(&search, targets, &[c], cap)? {
            return Ok(Some((c, cert.separator)));
        }
    }
    Ok(None)
}

struct PairJob {
    a: usize,
    b: usize,
    witness: usize,
    separator: Vec<usize>,
}

fn isolated_reference(g: &Graph) -> Result<usize> {
    g.isolated_nodes().first().copied().ok_or(Error::NoIsolatedNode)
}

/// Estimate `P̂(Y_a, Y_b | H=h)` for every available pair, then a Chow-Liu tree per component.
pub fn find_components(
    src: &StatsSource,
    ghat: &Graph,
    r: usize,
    z: &RotationBasis,
    opts: &FindOptions,
) -> Result<ComponentEstimate> {
    let u_star = isolated_reference(ghat)?;
    let p = ghat.num_nodes();
    let d = src.alphabet_size();
    let nodes: Vec<usize> = (0..p).filter(|&x| x != u_star).collect();
    let pairs: Vec<(usize, usize)> = if opts.tree_fast_path {
        ghat.edges()
    } else {
        nodes
            .iter()
            .flat_map(|&a| nodes.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
            .collect()
    };

    let mut missing = Vec::new();
    let mut jobs = Vec::new();
    for &(a, b) in &pairs {
        match find_witness(ghat, &[a, b], u_star, opts.separator_cap, opts.gamma)? {
            Some((witness, separator)) => jobs.push(PairJob {
                a,
                b,
                witness,
                separator,
            }),
            None => missing.push(MissingPair {
                a,
                b,
                reason: "no witness".into(),
            }),
        }
    }

    // the first successful decomposition fixes the label order for all others
    let mut shared: Option<Diagonalizer> = None;
    let mut results: Vec<Option<Result<SpectralEstimate>>> = (0..jobs.len()).map(|_| None).collect();
    let mut start = jobs.len();
    for (i, job) in jobs.iter().enumerate() {
        let out = spect_decomp(src, u_star, job.witness, &[job.a, job.b], &job.separator, r, z, None, &opts.spectral);
        match out {
            Ok((est, dg)) => {
                shared = Some(dg);
                results[i] = Some(Ok(est));
                start = i + 1;
                break;
            }
            Err(e) => results[i] = Some(Err(e)),
        }
    }
    let dg = match shared {
        Some(dg) => dg,
        None => {
            if let Some(Some(Err(e))) = results.iter().find(|x| matches!(x, Some(Err(_)))) {
                return Err(Error::Spectral(format!("no pair could be decomposed: {e}")));
            }
            return Err(Error::AllPairsMissing);
        }
    };
    let rest: Vec<Result<SpectralEstimate>> = jobs[start..]
        .par_iter()
        .map(|job| {
            spect_decomp(src, u_star, job.witness, &[job.a, job.b], &job.separator, r, z, Some(&dg), &opts.spectral)
                .map(|(e, _)| e)
        })
        .collect();
    for (slot, res) in results[start..].iter_mut().zip(rest) {
        *slot = Some(res);
    }

    let mut done: Vec<(&PairJob, SpectralEstimate)> = Vec::new();
    for (job, res) in jobs.iter().zip(results) {
        match res.expect("every job ran") {
            Ok(est) => done.push((job, est)),
            Err(e) => missing.push(MissingPair {
                a: job.a,
                b: job.b,
                reason: e.to_string(),
            }),
        }
    }
    missing.sort_by_key(|m| (m.a, m.b));

    let estimates: Vec<&SpectralEstimate> = done.iter().map(|(_, e)| e).collect();
    let weights = global_weights(&estimates)?;
    let alignment = align_labels(&estimates, opts.alignment_tol)?;

    let mut marginals = Vec::with_capacity(done.len());
    for (job, est) in &done {
        let m = marginalize_separator(est, &weights)?;
        let tables = (0..r)
            .map(|h| (0..d).map(|i| (0..d).map(|j| m[(i * d + j, h)]).collect()).collect())
            .collect();
        marginals.push(PairMarginal {
            a: job.a,
            b: job.b,
            witness: job.witness,
            separator: job.separator.clone(),
            tables,
        });
    }

    let candidates = opts.tree_fast_path.then(|| ghat.edges());
    let mut tables = Vec::with_capacity(r);
    let mut trees = Vec::with_capacity(r);
    for h in 0..r {
        let mut mi = MutualInformationTable::new(nodes.clone());
        for m in &marginals {
            mi.insert(m.a, m.b, mutual_information(&m.table(h)));
        }
        trees.push(chow_liu(&mi, candidates.as_deref()));
        tables.push(mi);
    }

    Ok(ComponentEstimate {
        isolated_node: u_star,
        weights,
        reference_conditional: alignment.reference.clone(),
        trees,
        marginals,
        missing_pairs: missing,
        alignment,
        mutual_information: tables,
        diagonalizer: dg,
        rotation: z.clone(),
    })
}

/// Per-component graphs: drop edge `(a,b)` of `ghat` from `G_h` when, for some
/// context of the other neighbours of `a` (or of `b`), `P̂(Y_a | Y_b=k, ·, H=h)`
/// hardly depends on `k`.
pub fn estimate_component_graphs(
    est: &ComponentEstimate,
    src: &StatsSource,
    ghat: &Graph,
    threshold: f64,
    opts: &FindOptions,
    cap: usize,
) -> Result<Vec<Graph>> {
    let r = est.num_components();
    let d = src.alphabet_size();
    let u_star = est.isolated_node;
    let mut graphs = vec![ghat.clone(); r];
    for a in 0..ghat.num_nodes() {
        if a == u_star || ghat.degree(a) == 0 {
            continue;
        }
        let mut group: Vec<usize> = ghat.neighbors(a).iter().copied().collect();
        group.push(a);
        group.sort_unstable();
        let states = checked_pow(d, group.len()).filter(|&s| s <= cap).ok_or(Error::CapExceeded {
            states: (d as f64).powi(group.len() as i32),
            cap,
        })?;
        let Some((witness, separator)) = find_witness(ghat, &group, u_star, opts.separator_cap, opts.gamma)? else {
            log::debug!("no witness for the neighbourhood of {a}; keeping its edges");
            continue;
        };
        let (spec, _) = spect_decomp(
            src,
            u_star,
            witness,
            &group,
            &separator,
            r,
            &est.rotation,
            Some(&est.diagonalizer),
            &opts.spectral,
        )?;
        let joint = marginalize_separator(&spec, &est.weights)?;
        let pos_a = group.iter().position(|&x| x == a).expect("a in group");
        for &b in ghat.neighbors(a) {
            let pos_b = group.iter().position(|&x| x == b).expect("b in group");
            for (h, g) in graphs.iter_mut().enumerate() {
                let col: Vec<f64> = (0..states).map(|i| joint[(i, h)]).collect();
                if weakly_dependent(&col, d, group.len(), pos_a, pos_b, threshold) {
                    g.remove_edge(a, b);
                }
            }
        }
    }
    Ok(graphs)
}

/// True when some context `y` of the remaining coordinates has
/// `min_{k≠l} ‖P(a | b=k, y) − P(a | b=l, y)‖₁ < threshold`.
fn weakly_dependent(joint: &[f64], d: usize, len: usize, pos_a: usize, pos_b: usize, threshold: f64) -> bool {
    let others: Vec<usize> = (0..len).filter(|&i| i != pos_a && i != pos_b).collect();
    let contexts = checked_pow(d, others.len()).expect("contexts");
    for ci in 0..contexts {
        let ctx = decode(ci, d, others.len());
        let mut conditionals: Vec<Vec<f64>> = Vec::new();
        for k in 0..d {
            let mut digits = vec![0; len];
            for (&slot, &v) in others.iter().zip(&ctx) {
                digits[slot] = v;
            }
            digits[pos_b] = k;
            let row: Vec<f64> = (0..d)
                .map(|ya| {
                    digits[pos_a] = ya;
                    joint[digits.iter().fold(0, |acc, &x| acc * d + x)]
                })
                .collect();
            let mass: f64 = row.iter().sum();
            if mass > 0.0 {
                conditionals.push(row.iter().map(|x| x / mass).collect());
            }
        }
        for (i, x) in conditionals.iter().enumerate() {
            for y in &conditionals[i + 1..] {
                let l1: f64 = x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum();
                if l1 < threshold {
                    return true;
                }
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CliquePotential, ComponentModel, MixtureModel};
    use crate::spectral::random_rotation;

    fn product_mixture(p: usize) -> MixtureModel {
        let comps = (0..2)
            .map(|h| {
                let pots = (0..p)
                    .map(|v| {
                        let s = if h == 0 { 1.0 } else { -1.0 } * (0.5 + 0.1 * v as f64);
                        CliquePotential::from_log(vec![v], vec![s, 0.2 * v as f64, -s])
                    })
                    .collect();
                ComponentModel::new(Graph::empty(p), pots, 3).unwrap()
            })
            .collect();
        MixtureModel::new(comps, vec![0.45, 0.55], 0).unwrap()
    }

    #[test]
    fn product_mixture_uses_empty_separators() {
        let m = product_mixture(5);
        let src = StatsSource::exact(&m, 100_000).unwrap();
        let est = find_components(&src, &Graph::empty(5), 2, &random_rotation(2, 1), &FindOptions::new(0)).unwrap();
        assert_eq!(est.isolated_node, 0);
        assert!(est.missing_pairs.is_empty());
        assert_eq!(est.marginals.len(), 6);
        assert!(est.marginals.iter().all(|m| m.separator.is_empty()));
        assert!(est.alignment.consistent);
        let mut w = est.weights.clone();
        w.sort_by(f64::total_cmp);
        assert!((w[0] - 0.45).abs() < 1e-8);
    }

    #[test]
    fn complete_graph_has_no_witnesses() {
        let m = product_mixture(4);
        let src = StatsSource::exact(&m, 100_000).unwrap();
        let mut g = Graph::empty(4);
        for a in 1..4 {
            for b in a + 1..4 {
                g.add_edge(a, b).unwrap();
            }
        }
        let err = find_components(&src, &g, 2, &random_rotation(2, 1), &FindOptions::new(1)).unwrap_err();
        assert!(matches!(err, Error::AllPairsMissing));
    }

    #[test]
    fn requires_isolated_node() {
        let m = product_mixture(3);
        let src = StatsSource::exact(&m, 1000).unwrap();
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        assert!(matches!(
            find_components(&src, &g, 2, &random_rotation(2, 1), &FindOptions::new(1)),
            Err(Error::NoIsolatedNode)
        ));
    }

    #[test]
    fn weak_dependence_detection() {
        // independent a and b: every conditional equal
        let joint = vec![0.25; 4];
        assert!(weakly_dependent(&joint, 2, 2, 0, 1, 1e-9));
        let joint = vec![0.4, 0.1, 0.1, 0.4];
        assert!(!weakly_dependent(&joint, 2, 2, 0, 1, 1e-9));
    }
}
