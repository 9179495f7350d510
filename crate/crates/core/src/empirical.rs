//! Observed statistics, exact or empirical, and singular-value utilities.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{MixtureModel, Oracle, SampleSet};
use crate::util::checked_pow;

/// `M[i][j] = P(Y_rows = i, Y_cols = j, Y_S = k)`, with provenance.
///
/// Row and column node groups are flattened row-major (first node most significant).
#[derive(Clone, Debug, PartialEq)]
pub struct JointMatrix {
    data: DMatrix<f64>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    separator: Vec<usize>,
    config: Vec<usize>,
}

impl JointMatrix {
    pub fn new(
        data: DMatrix<f64>,
        rows: Vec<usize>,
        cols: Vec<usize>,
        separator: Vec<usize>,
        config: Vec<usize>,
    ) -> Self {
        JointMatrix {
            data,
            rows,
            cols,
            separator,
            config,
        }
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn separator(&self) -> &[usize] {
        &self.separator
    }

    pub fn config(&self) -> &[usize] {
        &self.config
    }

    /// Total mass, equal to `P(Y_S = k)`.
    pub fn mass(&self) -> f64 {
        self.data.sum()
    }
}

/// Backing source for all moment computations.
#[derive(Clone, Debug)]
pub enum StatsSource {
    Exact(Arc<Oracle>),
    Empirical(Arc<SampleSet>),
}

/// Flat probability table over a node list, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalTable {
    pub nodes: Vec<usize>,
    pub d: usize,
    pub probs: Vec<f64>,
}

impl MarginalTable {
    /// Entries of the table with the trailing `s_len` nodes fixed to configuration `k`,
    /// indexed by the leading nodes.
    pub fn slice_trailing(&self, s_len: usize, k: &[usize]) -> Vec<f64> {
        let block = checked_pow(self.d, s_len).expect("block size");
        let offset = k.iter().fold(0, |acc, &x| acc * self.d + x);
        let lead = self.probs.len() / block;
        (0..lead).map(|i| self.probs[i * block + offset]).collect()
    }
}

impl StatsSource {
    pub fn exact(m: &MixtureModel, cap: usize) -> Result<Self> {
        Ok(StatsSource::Exact(Arc::new(Oracle::new(m, cap)?)))
    }

    pub fn from_oracle(oracle: Oracle) -> Self {
        StatsSource::Exact(Arc::new(oracle))
    }

    pub fn empirical(samples: SampleSet) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        Ok(StatsSource::Empirical(Arc::new(samples)))
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, StatsSource::Exact(_))
    }

    pub fn num_nodes(&self) -> usize {
        match self {
            StatsSource::Exact(o) => o.num_nodes(),
            StatsSource::Empirical(s) => s.num_nodes(),
        }
    }

    pub fn alphabet_size(&self) -> usize {
        match self {
            StatsSource::Exact(o) => o.alphabet_size(),
            StatsSource::Empirical(s) => s.alphabet_size(),
        }
    }

    /// Sample count in empirical mode.
    pub fn num_samples(&self) -> Option<usize> {
        match self {
            StatsSource::Exact(_) => None,
            StatsSource::Empirical(s) => Some(s.len()),
        }
    }

    fn check_nodes(&self, nodes: &[usize]) -> Result<()> {
        let p = self.num_nodes();
        for (i, &x) in nodes.iter().enumerate() {
            if x >= p {
                return Err(Error::OutOfRange(format!("node {x} with p={p}")));
            }
            if nodes[..i].contains(&x) {
                return Err(Error::InvalidConfig(format!("node {x} repeated in {nodes:?}")));
            }
        }
        Ok(())
    }

    fn check_config(&self, s: &[usize], k: &[usize]) -> Result<()> {
        let d = self.alphabet_size();
        if s.len() != k.len() || k.iter().any(|&x| x >= d) {
            return Err(Error::OutOfRange(format!(
                "configuration {k:?} for separator {s:?} with d={d}"
            )));
        }
        Ok(())
    }

    /// Joint distribution of `nodes`, exact or empirical frequencies.
    pub fn marginal_table(&self, nodes: &[usize]) -> Result<MarginalTable> {
        self.check_nodes(nodes)?;
        let d = self.alphabet_size();
        let len = checked_pow(d, nodes.len()).ok_or(Error::CapExceeded {
            states: (d as f64).powi(nodes.len() as i32),
            cap: usize::MAX,
        })?;
        let probs = match self {
            StatsSource::Exact(o) => o.marginal(nodes),
            StatsSource::Empirical(s) => {
                let mut counts = vec![0u64; len];
                for row in s.rows() {
                    let idx = nodes.iter().fold(0, |acc, &x| acc * d + row[x] as usize);
                    counts[idx] += 1;
                }
                let n = s.len() as f64;
                counts.into_iter().map(|c| c as f64 / n).collect()
            }
        };
        Ok(MarginalTable {
            nodes: nodes.to_vec(),
            d,
            probs,
        })
    }

    /// `P(Y_rows = i, Y_cols = j, Y_S = k)` for node groups `rows` and `cols`.
    pub fn group_matrix(
        &self,
        rows: &[usize],
        cols: &[usize],
        s: &[usize],
        k: &[usize],
    ) -> Result<JointMatrix> {
        let mut nodes = rows.to_vec();
        nodes.extend_from_slice(cols);
        nodes.extend_from_slice(s);
        self.check_nodes(&nodes)?;
        self.check_config(s, k)?;
        let d = self.alphabet_size();
        let table = self.marginal_table(&nodes)?;
        let flat = table.slice_trailing(s.len(), k);
        let nr = checked_pow(d, rows.len()).expect("rows");
        let nc = checked_pow(d, cols.len()).expect("cols");
        let data = DMatrix::from_fn(nr, nc, |i, j| flat[i * nc + j]);
        Ok(JointMatrix::new(data, rows.to_vec(), cols.to_vec(), s.to_vec(), k.to_vec()))
    }

    /// `M̂[i][j] = P̂(Y_u=i, Y_v=j, Y_S=k)`.
    pub fn prob_matrix(&self, u: usize, v: usize, s: &[usize], k: &[usize]) -> Result<JointMatrix> {
        self.group_matrix(&[u], &[v], s, k)
    }

    /// `M[i][j] = P̂(Y_u=i, Y_v=j, Y_S=k, Y_w=q)`; `w` may be a node group with `q` flattened.
    pub fn prob_tensor_slice(
        &self,
        u: usize,
        v: usize,
        s: &[usize],
        k: &[usize],
        w: &[usize],
        q: usize,
    ) -> Result<JointMatrix> {
        let d = self.alphabet_size();
        let states = checked_pow(d, w.len()).expect("w states");
        if w.is_empty() || q >= states {
            return Err(Error::OutOfRange(format!("state {q} for node group {w:?}")));
        }
        let mut sk = w.to_vec();
        sk.extend_from_slice(s);
        let mut kk = crate::util::decode(q, d, w.len());
        kk.extend_from_slice(k);
        let m = self.group_matrix(&[u], &[v], &sk, &kk)?;
        Ok(JointMatrix::new(
            m.into_data(),
            vec![u],
            vec![v],
            s.to_vec(),
            k.to_vec(),
        ))
    }
}

/// Full singular spectrum in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().map(|s| s.max(0.0)).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Number of singular values strictly above `xi`.
pub fn effective_rank(m: &DMatrix<f64>, xi: f64) -> usize {
    singular_values(m).into_iter().filter(|&s| s > xi).count()
}

/// The `l`-th singular value (1-based), zero when `l` exceeds the spectrum length.
pub fn sigma(m: &DMatrix<f64>, l: usize) -> f64 {
    singular_values(m).get(l - 1).copied().unwrap_or(0.0)
}

/// Thin SVD with descending singular values: `(U, σ, V)` with `m = U diag(σ) Vᵀ`.
pub fn sorted_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let uu = DMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
    let vv = DMatrix::from_fn(v_t.ncols(), order.len(), |i, j| v_t[(order[j], i)]);
    let s = order.iter().map(|&j| svd.singular_values[j]).collect();
    (uu, s, vv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::Graph;
    use crate::model::{sample, CliquePotential, ComponentModel, DEFAULT_ENUMERATION_CAP};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn chain_model() -> MixtureModel {
        let g = Graph::from_edges(4, [(1, 2), (2, 3)]).unwrap();
        let mk = |s: f64| {
            ComponentModel::new(
                g.clone(),
                vec![
                    CliquePotential::from_log(vec![0], vec![s, 0.0, -s]),
                    CliquePotential::from_log(vec![1, 2], (0..9).map(|i| ((i * 7) % 5) as f64 * 0.3 * s).collect()),
                    CliquePotential::from_log(vec![2, 3], (0..9).map(|i| ((i * 3) % 4) as f64 * -0.4).collect()),
                ],
                3,
            )
            .unwrap()
        };
        MixtureModel::new(vec![mk(1.0), mk(-0.5)], vec![0.4, 0.6], 0).unwrap()
    }

    #[test]
    fn single_row_counts() {
        let s = SampleSet::new(3, 2, 0, vec![vec![1, 0, 1]]).unwrap();
        let src = StatsSource::empirical(s).unwrap();
        let m = src.prob_matrix(0, 1, &[2], &[1]).unwrap();
        assert_eq!(m.data()[(1, 0)], 1.0);
        assert_eq!(m.mass(), 1.0);
        let z = src.prob_matrix(0, 1, &[2], &[0]).unwrap();
        assert_eq!(z.mass(), 0.0);
    }

    #[test]
    fn empty_samples_rejected() {
        let s = SampleSet::new(3, 2, 0, vec![]).unwrap();
        assert!(matches!(StatsSource::empirical(s), Err(Error::EmptySamples)));
    }

    #[test]
    fn exact_mode_delegates() {
        let m = chain_model();
        let src = StatsSource::exact(&m, DEFAULT_ENUMERATION_CAP).unwrap();
        let a = src.prob_matrix(1, 3, &[2], &[1]).unwrap();
        let b = crate::model::exact_prob_matrix(&m, 1, 3, &[2], &[1]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tensor_slices_sum_to_matrix() {
        let m = chain_model();
        let src = StatsSource::exact(&m, DEFAULT_ENUMERATION_CAP).unwrap();
        let full = src.prob_matrix(0, 1, &[3], &[2]).unwrap();
        let mut acc = DMatrix::zeros(3, 3);
        for q in 0..3 {
            acc += src.prob_tensor_slice(0, 1, &[3], &[2], &[2], q).unwrap().data();
        }
        assert!((acc - full.data()).abs().max() < 1e-12);
        // pair-valued w
        let mut acc = DMatrix::zeros(3, 3);
        for q in 0..9 {
            acc += src.prob_tensor_slice(0, 1, &[], &[], &[2, 3], q).unwrap().data();
        }
        let full = src.prob_matrix(0, 1, &[], &[]).unwrap();
        assert!((acc - full.data()).abs().max() < 1e-12);
    }

    #[test]
    fn tensor_slice_matches_enumeration() {
        let m = chain_model();
        let o = Oracle::new(&m, 1000).unwrap();
        let joint = o.joint();
        let src = StatsSource::from_oracle(o);
        let slice = src.prob_tensor_slice(1, 3, &[0], &[2], &[2], 1).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut direct = 0.0;
                for y2 in 0..3 {
                    if y2 != 1 {
                        continue;
                    }
                    direct += joint.prob(&[2, i, y2, j]);
                }
                assert_abs_diff_eq!(slice.data()[(i, j)], direct, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn rejects_bad_indices() {
        let src = StatsSource::exact(&chain_model(), 1000).unwrap();
        assert!(src.prob_matrix(0, 4, &[], &[]).is_err());
        assert!(src.prob_matrix(0, 0, &[], &[]).is_err());
        assert!(src.prob_matrix(0, 1, &[2], &[3]).is_err());
        assert!(src.prob_matrix(0, 1, &[2], &[]).is_err());
    }

    #[test]
    fn effective_rank_examples() {
        assert_eq!(effective_rank(&DMatrix::identity(3, 3), 0.5), 3);
        assert_eq!(effective_rank(&DMatrix::zeros(3, 3), 1e-9), 0);
        // orthogonal factors with spectrum (1, 0.4, 1e-12)
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let u = DMatrix::from_row_slice(3, 3, &[c, -c, 0.0, c, c, 0.0, 0.0, 0.0, 1.0]);
        let v = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.4, 1e-12]));
        let m = &u * s * v.transpose();
        assert_eq!(effective_rank(&m, 0.1), 2);
    }

    #[test]
    fn singular_value_examples() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 3.0]));
        assert_eq!(singular_values(&d), vec![3.0, 1.0]);
        let x = nalgebra::DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let y = nalgebra::DVector::from_vec(vec![3.0, 4.0]);
        let sv = singular_values(&(&x * y.transpose()));
        assert_abs_diff_eq!(sv[0], 15.0, epsilon = 1e-12);
        assert!(sv[1] < 1e-12);
    }

    #[test]
    fn sorted_svd_reconstructs() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.2]);
        let (u, s, v) = sorted_svd(&m);
        assert!(s[0] >= s[1]);
        let back = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s)) * v.transpose();
        assert!((back - m).abs().max() < 1e-12);
    }

    #[test]
    fn permutation_equivariance_and_weyl() {
        let m = chain_model();
        let s = sample(&m, 3000, 4, DEFAULT_ENUMERATION_CAP).unwrap();
        let order: Vec<usize> = (0..s.len()).rev().collect();
        let a = StatsSource::empirical(s.clone()).unwrap();
        let b = StatsSource::empirical(s.permuted(&order)).unwrap();
        let ma = a.prob_matrix(1, 3, &[2], &[0]).unwrap();
        assert_eq!(ma, b.prob_matrix(1, 3, &[2], &[0]).unwrap());
        let exact = StatsSource::exact(&m, 1000).unwrap().prob_matrix(1, 3, &[2], &[0]).unwrap();
        let frob = (ma.data() - exact.data()).norm();
        for (x, y) in singular_values(ma.data()).iter().zip(singular_values(exact.data())) {
            assert!((x - y).abs() <= frob + 1e-15);
        }
    }

    proptest! {
        #[test]
        fn singular_values_match_gram_eigenvalues(entries in proptest::collection::vec(-3.0f64..3.0, 16)) {
            let m = DMatrix::from_row_slice(4, 4, &entries);
            let sv = singular_values(&m);
            let mut ev: Vec<f64> = (m.transpose() * &m).symmetric_eigenvalues().iter().map(|e| e.max(0.0).sqrt()).collect();
            ev.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in sv.iter().zip(&ev) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }

        #[test]
        fn effective_rank_monotone(entries in proptest::collection::vec(0.0f64..1.0, 9), lo in 0.0f64..1.0, hi in 0.0f64..1.0) {
            let m = DMatrix::from_row_slice(3, 3, &entries);
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            prop_assert!(effective_rank(&m, lo) >= effective_rank(&m, hi));
        }
    }
}
