//! Observable-operator decomposition conditioned on a separator.
//!
//! For each configuration `k` of the separator `S`, the triplet
//! `(u*, v, W)` yields operators `C_l = B_l A⁻¹` that share the eigenvectors
//! `R`. Because `u*` is isolated, `R` only depends on `u*` and the reference
//! projection basis, so capturing both once fixes one hidden-label order for
//! every later decomposition.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::empirical::{singular_values, sorted_svd, StatsSource};
use crate::error::{Error, Result};
use crate::util::{checked_pow, decode, matrix_rows};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationBasis {
    #[serde(with = "matrix_rows")]
    pub z: DMatrix<f64>,
    pub seed: u64,
}

/// Haar-distributed rotation `r×r` (QR of Gaussians, sign-fixed, determinant +1).
pub fn random_rotation(r: usize, seed: u64) -> RotationBasis {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(r, r, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let mut q = qr.q();
    let rr = qr.r();
    for j in 0..r {
        if rr[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if r > 0 && q.determinant() < 0.0 {
        q.column_mut(r - 1).neg_mut();
    }
    RotationBasis { z: q, seed }
}

/// Shared eigenbasis and reference projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagonalizer {
    #[serde(with = "matrix_rows")]
    pub u_ref: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub r: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub r_inv: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralOptions {
    /// `A` is singular when `σ_r(A) < singular_tol · σ_1(A)`
    pub singular_tol: f64,
    /// tolerated imaginary part relative to the spectral radius
    pub imag_tol: f64,
    /// minimum eigenvalue gap relative to the spectral radius
    pub gap_tol: f64,
    pub retries: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            singular_tol: 1e-10,
            imag_tol: 1e-6,
            gap_tol: 1e-6,
            retries: 5,
        }
    }
}

/// Estimates for one separator configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupEstimate {
    pub config: Vec<usize>,
    pub prob: f64,
    /// `P̂(Y_W | H, Y_S = k)`, one column per hidden state
    #[serde(with = "matrix_rows")]
    pub conditional: DMatrix<f64>,
    /// `π̂_{H | S = k}`
    pub weights: Vec<f64>,
    /// `P̂(Y_{u*} | H)` implied by this group
    #[serde(with = "matrix_rows")]
    pub reference: DMatrix<f64>,
    /// Frobenius distance removed by the simplex projection
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupFailure {
    pub config: Vec<usize>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub reference_node: usize,
    pub witness: usize,
    pub target: Vec<usize>,
    pub separator: Vec<usize>,
    pub groups: Vec<GroupEstimate>,
    pub failures: Vec<GroupFailure>,
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (j + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

fn project_columns(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let mut out = m.clone();
    for j in 0..m.ncols() {
        let col: Vec<f64> = m.column(j).iter().copied().collect();
        for (i, x) in project_simplex(&col).into_iter().enumerate() {
            out[(i, j)] = x;
        }
    }
    let residual = (&out - m).norm();
    (out, residual)
}

fn top_left(m: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let (u, _, _) = sorted_svd(m);
    u.columns(0, r).into_owned()
}

fn top_right(m: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let (_, _, v) = sorted_svd(m);
    v.columns(0, r).into_owned()
}

/// Moments of one `(u*, witness, target)` view at a fixed separator configuration.
struct View {
    /// `M_{u*, witness}`
    ref_wit: DMatrix<f64>,
    /// `M_{u*, witness, target = q}` for every target state `q`
    slices: Vec<DMatrix<f64>>,
    /// `M_{target, u*}`
    tgt_ref: DMatrix<f64>,
}

enum Outcome {
    Singular(String),
    Unstable(String),
}

fn eigen_basis(c1: &DMatrix<f64>, opts: &SpectralOptions) -> std::result::Result<DMatrix<f64>, String> {
    let r = c1.nrows();
    let eig = c1.complex_eigenvalues();
    let radius = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !(radius > 0.0) {
        return Err("operator has zero spectral radius".into());
    }
    if eig.iter().any(|z| z.im.abs() > opts.imag_tol * radius) {
        return Err("complex eigenvalues".into());
    }
    let mut values: Vec<f64> = eig.iter().map(|z| z.re).collect();
    values.sort_by(f64::total_cmp);
    if values.windows(2).any(|w| w[1] - w[0] < opts.gap_tol * radius) {
        return Err("eigenvalues too close".into());
    }
    let mut basis = DMatrix::zeros(r, r);
    for (j, &lambda) in values.iter().enumerate() {
        let shifted = c1 - DMatrix::identity(r, r) * lambda;
        let (_, _, v) = sorted_svd(&shifted);
        let mut vec = v.column(r - 1).into_owned();
        let pivot = vec.iter().cloned().fold(0.0, |acc: f64, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            vec.neg_mut();
        }
        basis.set_column(j, &vec);
    }
    Ok(basis)
}

impl View {
    /// Recover `P̂(Y_target | H)` columns, capturing the diagonalizer when absent.
    fn recover(
        &self,
        r: usize,
        z: &RotationBasis,
        shared: Option<&Diagonalizer>,
        opts: &SpectralOptions,
    ) -> std::result::Result<(DMatrix<f64>, Diagonalizer), Outcome> {
        let u_ref = match shared {
            Some(dg) => dg.u_ref.clone(),
            None => top_left(&self.ref_wit, r),
        };
        let v_wit = top_right(&self.ref_wit, r);
        let u_tgt = top_left(&self.tgt_ref, r);
        let a = u_ref.transpose() * &self.ref_wit * &v_wit;
        let sv = singular_values(&a);
        if !(sv[0] > 0.0) || sv[r - 1] < opts.singular_tol * sv[0] {
            return Err(Outcome::Singular(format!(
                "A is singular (sigma_r={:.3e}, sigma_1={:.3e})",
                sv[r - 1], sv[0]
            )));
        }
        let a_inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| Outcome::Singular("A is not invertible".into()))?;
        let operators = |zm: &DMatrix<f64>| -> Vec<DMatrix<f64>> {
            (0..r)
                .map(|l| {
                    let m_l = &u_tgt * zm.column(l);
                    let mut mix = DMatrix::zeros(self.ref_wit.nrows(), self.ref_wit.ncols());
                    for (q, slice) in self.slices.iter().enumerate() {
                        mix += slice * m_l[q];
                    }
                    u_ref.transpose() * mix * &v_wit * &a_inv
                })
                .collect()
        };

        let (dg, zm, ops) = match shared {
            Some(dg) => (dg.clone(), z.z.clone(), operators(&z.z)),
            None => {
                let mut last = String::new();
                let mut found = None;
                for attempt in 0..=opts.retries {
                    let zm = if attempt == 0 {
                        z.z.clone()
                    } else {
                        random_rotation(r, z.seed.wrapping_add(0x9E37_79B9 * attempt as u64)).z
                    };
                    let ops = operators(&zm);
                    match eigen_basis(&ops[0], opts) {
                        Ok(basis) => match basis.clone().try_inverse() {
                            Some(inv) => {
                                found = Some((
                                    Diagonalizer {
                                        u_ref: u_ref.clone(),
                                        r: basis,
                                        r_inv: inv,
                                    },
                                    zm,
                                    ops,
                                ));
                                break;
                            }
                            None => last = "eigenvector matrix is singular".into(),
                        },
                        Err(e) => last = e,
                    }
                    log::debug!("eigenbasis capture attempt {attempt} failed: {last}");
                }
                found.ok_or_else(|| Outcome::Unstable(format!("{last} after {} retries", opts.retries)))?
            }
        };

        let mut lambda = DMatrix::zeros(r, r);
        for (l, c) in ops.iter().enumerate() {
            let diag = &dg.r_inv * c * &dg.r;
            for j in 0..r {
                lambda[(l, j)] = diag[(j, j)];
            }
        }
        Ok((u_tgt * zm * lambda, dg))
    }
}

/// Run the decomposition with reference `u_star`, witness `v`, target group `w`
/// and separator `s`, returning the estimate and the diagonalizer in use.
#[allow(clippy::too_many_arguments)]
pub fn spect_decomp(
    src: &StatsSource,
    u_star: usize,
    v: usize,
    w: &[usize],
    s: &[usize],
    r: usize,
    z: &RotationBasis,
    shared: Option<&Diagonalizer>,
    opts: &SpectralOptions,
) -> Result<(SpectralEstimate, Diagonalizer)> {
    if r < 1 || z.z.nrows() != r {
        return Err(Error::InvalidConfig(format!("rotation must be {r}x{r}")));
    }
    let d = src.alphabet_size();
    if w.is_empty() {
        return Err(Error::InvalidConfig("target group is empty".into()));
    }
    let dw = checked_pow(d, w.len())
        .ok_or_else(|| Error::InvalidConfig("target group too large".into()))?;
    if d < r || dw < r {
        return Err(Error::Assumption(format!("need d >= r and d^|W| >= r, got d={d}, r={r}")));
    }
    let mut nodes = vec![u_star, v];
    nodes.extend_from_slice(w);
    nodes.extend_from_slice(s);
    let table = src.marginal_table(&nodes)?;

    let mut current = shared.cloned();
    let mut groups = Vec::new();
    let mut failures = Vec::new();
    let configs = checked_pow(d, s.len()).expect("configs");
    for ki in 0..configs {
        let k = decode(ki, d, s.len());
        let flat = table.slice_trailing(s.len(), &k);
        let prob: f64 = flat.iter().sum();
        if !(prob > 0.0) {
            continue;
        }
        let at = |i: usize, j: usize, q: usize| flat[(i * d + j) * dw + q];
        let m_uv = DMatrix::from_fn(d, d, |i, j| (0..dw).map(|q| at(i, j, q)).sum());
        let m_uw = DMatrix::from_fn(d, dw, |i, q| (0..d).map(|j| at(i, j, q)).sum());
        let m_vw = DMatrix::from_fn(d, dw, |j, q| (0..d).map(|i| at(i, j, q)).sum());
        let main = View {
            ref_wit: m_uv.clone(),
            slices: (0..dw).map(|q| DMatrix::from_fn(d, d, |i, j| at(i, j, q))).collect(),
            tgt_ref: m_uw.transpose(),
        };
        let fail = |reason: String| GroupFailure {
            config: k.clone(),
            reason,
        };
        let (m_w, dg) = match main.recover(r, z, current.as_ref(), opts) {
            Ok(x) => x,
            Err(Outcome::Singular(e)) => {
                failures.push(fail(e));
                continue;
            }
            Err(Outcome::Unstable(e)) => return Err(Error::Spectral(e)),
        };
        current.get_or_insert(dg.clone());
        let swapped = View {
            ref_wit: m_uw.clone(),
            slices: (0..d).map(|j| DMatrix::from_fn(d, dw, |i, q| at(i, j, q))).collect(),
            tgt_ref: m_uv.transpose(),
        };
        let (m_v, _) = match swapped.recover(r, z, Some(&dg), opts) {
            Ok(x) => x,
            Err(Outcome::Singular(e) | Outcome::Unstable(e)) => {
                failures.push(fail(format!("swapped view: {e}")));
                continue;
            }
        };
        let (m_w_proj, residual) = project_columns(&m_w);
        let (m_v_proj, _) = project_columns(&m_v);

        let pinv = |m: &DMatrix<f64>| m.clone().pseudo_inverse(1e-12).expect("non-negative eps");
        let core = pinv(&m_v_proj) * &m_vw * pinv(&m_w_proj.transpose());
        let raw: Vec<f64> = (0..r).map(|h| core[(h, h)] / prob).collect();
        let weights = project_simplex(&raw);

        let mut reference = &m_uv * pinv(&m_v_proj.transpose());
        for mut col in reference.column_iter_mut() {
            let total: f64 = col.sum();
            if total.abs() > 0.0 {
                col /= total;
            }
        }
        groups.push(GroupEstimate {
            config: k,
            prob,
            conditional: m_w_proj,
            weights,
            reference,
            residual,
        });
    }
    let dg = current.ok_or_else(|| {
        Error::Spectral(format!(
            "every separator configuration failed for target {w:?} (witness {v}, separator {s:?})"
        ))
    })?;
    if groups.is_empty() {
        return Err(Error::Spectral(format!(
            "every separator configuration failed for target {w:?} (witness {v}, separator {s:?})"
        )));
    }
    Ok((
        SpectralEstimate {
            reference_node: u_star,
            witness: v,
            target: w.to_vec(),
            separator: s.to_vec(),
            groups,
            failures,
        },
        dg,
    ))
}

/// `P̂(Y_W | H = h)` from per-configuration estimates via Bayes' rule.
pub fn marginalize_separator(est: &SpectralEstimate, global_weights: &[f64]) -> Result<DMatrix<f64>> {
    let first = est
        .groups
        .first()
        .ok_or_else(|| Error::Spectral("estimate has no groups".into()))?;
    if est.separator.is_empty() {
        return Ok(first.conditional.clone());
    }
    let r = first.conditional.ncols();
    if let Some(h) = (0..r).find(|&h| !(global_weights[h] >= 1e-9)) {
        return Err(Error::Spectral(format!(
            "mixing weight of hidden state {h} is below 1e-9"
        )));
    }
    let mut out = DMatrix::zeros(first.conditional.nrows(), r);
    for g in &est.groups {
        for (h, &w) in global_weights.iter().enumerate().take(r) {
            let scale = g.weights[h] * g.prob / w;
            let col = g.conditional.column(h) * scale;
            let mut dst = out.column_mut(h);
            dst += &col;
        }
    }
    for mut col in out.column_iter_mut() {
        let total = col.sum();
        if total > 0.0 {
            col /= total;
        }
    }
    Ok(out)
}

/// Global `π̂_H`: the first empty-separator group when available, else the
/// `P̂(Y_S=k)`-weighted average of the first estimate's groups.
pub fn global_weights(estimates: &[&SpectralEstimate]) -> Result<Vec<f64>> {
    if let Some(e) = estimates.iter().find(|e| e.separator.is_empty()) {
        return Ok(e.groups[0].weights.clone());
    }
    let e = estimates
        .first()
        .ok_or_else(|| Error::Spectral("no estimates to take mixing weights from".into()))?;
    let r = e.groups[0].weights.len();
    let total: f64 = e.groups.iter().map(|g| g.prob).sum();
    let avg: Vec<f64> = (0..r)
        .map(|h| e.groups.iter().map(|g| g.weights[h] * g.prob).sum::<f64>() / total)
        .collect();
    Ok(project_simplex(&avg))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub groups_checked: usize,
    pub max_discrepancy: f64,
    pub tolerance: f64,
    pub consistent: bool,
    /// `P̂(Y_{u*} | H)` from the first group
    #[serde(with = "matrix_rows")]
    pub reference: DMatrix<f64>,
}

/// Verify that every group implies the same `P̂(Y_{u*} | H)`.
pub fn align_labels(estimates: &[&SpectralEstimate], tolerance: f64) -> Result<AlignmentReport> {
    let mut groups = estimates.iter().flat_map(|e| e.groups.iter());
    let first = groups
        .next()
        .ok_or_else(|| Error::Spectral("nothing to align".into()))?;
    let mut max = 0.0f64;
    let mut count = 1;
    for g in groups {
        count += 1;
        for h in 0..first.reference.ncols() {
            let diff = (g.reference.column(h) - first.reference.column(h)).norm();
            max = max.max(diff);
        }
    }
    Ok(AlignmentReport {
        groups_checked: count,
        max_discrepancy: max,
        tolerance,
        consistent: max <= tolerance,
        reference: first.reference.clone(),
    })
}

/// Operator eigenvalues expected at exact statistics: `⟨m_l, M_{W|H} e_j⟩`.
pub fn expected_eigenvalues(conditional: &DMatrix<f64>, u_tgt: &DMatrix<f64>, z: &RotationBasis) -> DMatrix<f64> {
    z.z.transpose() * u_tgt.transpose() * conditional
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::Graph;
    use crate::model::{CliquePotential, ComponentModel, MixtureModel, Oracle};

    /// 3-node product mixture, r=2, d=3, with handcrafted conditionals.
    fn product_mixture() -> MixtureModel {
        let tables = [
            [[0.6, 0.3, 0.1], [0.1, 0.2, 0.7]],
            [[0.5, 0.4, 0.1], [0.2, 0.1, 0.7]],
            [[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]],
        ];
        let comps = (0..2)
            .map(|h| {
                let pots = (0..3)
                    .map(|v| CliquePotential::from_table(vec![v], &tables[v][h]).unwrap())
                    .collect();
                ComponentModel::new(Graph::empty(3), pots, 3).unwrap()
            })
            .collect();
        MixtureModel::new(comps, vec![0.3, 0.7], 0).unwrap()
    }

    fn best_perm_error(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
        let direct = (0..2).map(|h| (est.column(h) - truth.column(h)).norm()).fold(0.0, f64::max);
        let swapped = (0..2).map(|h| (est.column(h) - truth.column(1 - h)).norm()).fold(0.0, f64::max);
        direct.min(swapped)
    }

    #[test]
    fn rotation_is_orthogonal() {
        for r in 1..5 {
            let z = random_rotation(r, 3);
            let err = (z.z.transpose() * &z.z - DMatrix::identity(r, r)).norm();
            assert!(err <= 1e-10);
        }
        for seed in 0..8 {
            assert_eq!(random_rotation(1, seed).z[(0, 0)], 1.0);
            assert!((random_rotation(3, seed).z.determinant() - 1.0).abs() < 1e-10);
        }
        assert_ne!(random_rotation(3, 1), random_rotation(3, 2));
    }

    #[test]
    fn simplex_projection() {
        assert_eq!(project_simplex(&[0.2, 0.8]), vec![0.2, 0.8]);
        let x = project_simplex(&[1.5, -0.2, 0.1]);
        assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(x.iter().all(|&v| v >= 0.0));
        assert_eq!(x, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn product_mixture_recovery() {
        let m = product_mixture();
        let oracle = Oracle::new(&m, 1000).unwrap();
        let truth = oracle.conditional_matrix(&[2], &[], &[]).unwrap();
        let src = StatsSource::from_oracle(oracle);
        let z = random_rotation(2, 5);
        let (est, _) = spect_decomp(&src, 0, 1, &[2], &[], 2, &z, None, &SpectralOptions::default()).unwrap();
        let g = &est.groups[0];
        assert!(best_perm_error(&g.conditional, &truth) <= 1e-8);
        assert!(g.residual <= 1e-8);
        let mut w = g.weights.clone();
        w.sort_by(f64::total_cmp);
        assert!((w[0] - 0.3).abs() < 1e-8 && (w[1] - 0.7).abs() < 1e-8);
    }

    #[test]
    fn shared_diagonalizer_keeps_labels() {
        let m = product_mixture();
        let oracle = Oracle::new(&m, 1000).unwrap();
        let t1 = oracle.conditional_matrix(&[2], &[], &[]).unwrap();
        let t2 = oracle.conditional_matrix(&[1], &[], &[]).unwrap();
        let src = StatsSource::from_oracle(oracle);
        let z = random_rotation(2, 5);
        let opts = SpectralOptions::default();
        let (e1, dg) = spect_decomp(&src, 0, 1, &[2], &[], 2, &z, None, &opts).unwrap();
        let z2 = random_rotation(2, 77);
        let (e2, _) = spect_decomp(&src, 0, 2, &[1], &[], 2, &z2, Some(&dg), &opts).unwrap();
        // same permutation for both targets
        let swap = (e1.groups[0].conditional.column(0) - t1.column(0)).norm() > 1e-6;
        let pick = |h: usize| if swap { 1 - h } else { h };
        for h in 0..2 {
            assert!((e1.groups[0].conditional.column(h) - t1.column(pick(h))).norm() < 1e-8);
            assert!((e2.groups[0].conditional.column(h) - t2.column(pick(h))).norm() < 1e-8);
        }
        let report = align_labels(&[&e1, &e2], 1e-8).unwrap();
        assert!(report.consistent, "{report:?}");
    }

    #[test]
    fn single_component_returns_marginal() {
        let pots = (0..3)
            .map(|v| CliquePotential::from_table(vec![v], &[0.2, 0.3 + 0.1 * v as f64, 0.4]).unwrap())
            .collect();
        let c = ComponentModel::new(Graph::empty(3), pots, 3).unwrap();
        let m = MixtureModel::new(vec![c], vec![1.0], 0).unwrap();
        let oracle = Oracle::new(&m, 100).unwrap();
        let truth = oracle.marginal(&[2]);
        let src = StatsSource::from_oracle(oracle);
        let (est, _) = spect_decomp(&src, 0, 1, &[2], &[], 1, &random_rotation(1, 0), None, &SpectralOptions::default()).unwrap();
        for (a, b) in est.groups[0].conditional.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((est.groups[0].weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_witness_fails() {
        // witness node 1 has identical conditionals under both states
        let tables = [
            [[0.6, 0.3, 0.1], [0.1, 0.2, 0.7]],
            [[0.3, 0.3, 0.4], [0.3, 0.3, 0.4]],
            [[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]],
        ];
        let comps = (0..2)
            .map(|h| {
                let pots = (0..3)
                    .map(|v| CliquePotential::from_table(vec![v], &tables[v][h]).unwrap())
                    .collect();
                ComponentModel::new(Graph::empty(3), pots, 3).unwrap()
            })
            .collect();
        let m = MixtureModel::new(comps, vec![0.4, 0.6], 0).unwrap();
        let src = StatsSource::exact(&m, 1000).unwrap();
        let err = spect_decomp(&src, 0, 1, &[2], &[], 2, &random_rotation(2, 1), None, &SpectralOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::Spectral(_)));
    }

    #[test]
    fn marginalize_identities() {
        let m = product_mixture();
        let src = StatsSource::exact(&m, 1000).unwrap();
        let z = random_rotation(2, 5);
        let opts = SpectralOptions::default();
        let (e0, dg) = spect_decomp(&src, 0, 1, &[2], &[], 2, &z, None, &opts).unwrap();
        let pi = global_weights(&[&e0]).unwrap();
        assert_eq!(marginalize_separator(&e0, &pi).unwrap(), e0.groups[0].conditional);
        let (again, _) = spect_decomp(&src, 0, 1, &[2], &[], 2, &z, Some(&dg), &opts).unwrap();
        assert_eq!(again.groups[0].conditional, e0.groups[0].conditional);
    }

    #[test]
    fn marginalize_rejects_tiny_weights() {
        let est = SpectralEstimate {
            reference_node: 0,
            witness: 1,
            target: vec![2],
            separator: vec![3],
            groups: vec![GroupEstimate {
                config: vec![0],
                prob: 1.0,
                conditional: DMatrix::from_element(2, 2, 0.5),
                weights: vec![0.5, 0.5],
                reference: DMatrix::from_element(2, 2, 0.5),
                residual: 0.0,
            }],
            failures: vec![],
        };
        assert!(marginalize_separator(&est, &[1.0, 0.0]).is_err());
        let out = marginalize_separator(&est, &[0.5, 0.5]).unwrap();
        assert!((out.column(0).sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn r1_total_probability() {
        // r=1 with a nonempty separator reduces to Σ_k P(W|k)P(k) = P(W)
        let g = Graph::from_edges(4, [(1, 2), (2, 3)]).unwrap();
        let pots = vec![
            CliquePotential::from_log(vec![1, 2], vec![0.5, -0.2, 0.1, 0.9, 0.0, -0.4, 0.3, 0.2, -0.1]),
            CliquePotential::from_log(vec![2, 3], vec![-0.3, 0.6, 0.0, 0.2, 0.1, -0.8, 0.4, 0.0, 0.5]),
        ];
        let c = ComponentModel::new(g, pots, 3).unwrap();
        let m = MixtureModel::new(vec![c], vec![1.0], 0).unwrap();
        let oracle = Oracle::new(&m, 1000).unwrap();
        let truth = oracle.marginal(&[3]);
        let src = StatsSource::from_oracle(oracle);
        let (est, _) = spect_decomp(&src, 0, 1, &[3], &[2], 1, &random_rotation(1, 0), None, &SpectralOptions::default()).unwrap();
        let out = marginalize_separator(&est, &[1.0]).unwrap();
        for (a, b) in out.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn operator_eigenvalues_match_conditionals() {
        let m = product_mixture();
        let oracle = Oracle::new(&m, 1000).unwrap();
        let truth = oracle.conditional_matrix(&[2], &[], &[]).unwrap();
        let m_wu = DMatrix::from_fn(3, 3, |i, j| oracle.marginal(&[2, 0])[i * 3 + j]);
        let src = StatsSource::from_oracle(oracle);
        let z = random_rotation(2, 5);
        let (est, _) = spect_decomp(&src, 0, 1, &[2], &[], 2, &z, None, &SpectralOptions::default()).unwrap();
        let u_tgt = top_left(&m_wu, 2);
        let expected = expected_eigenvalues(&truth, &u_tgt, &z);
        let got = expected_eigenvalues(&est.groups[0].conditional, &u_tgt, &z);
        let mut e: Vec<f64> = expected.iter().copied().collect();
        let mut g: Vec<f64> = got.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        g.sort_by(f64::total_cmp);
        for (a, b) in e.iter().zip(&g) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
