//! Exact probabilities by full enumeration of `d^p` configurations.

use nalgebra::DMatrix;

use super::MixtureModel;
use crate::empirical::JointMatrix;
use crate::error::{Error, Result};
use crate::util::checked_pow;

pub const DEFAULT_ENUMERATION_CAP: usize = 10_000_000;

/// A probability vector over all `d^p` configurations, row-major with node 0
/// most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct JointTable {
    p: usize,
    d: usize,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn num_nodes(&self) -> usize {
        self.p
    }

    pub fn alphabet_size(&self) -> usize {
        self.d
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, y: &[usize]) -> f64 {
        self.probs[y.iter().fold(0, |acc, &x| acc * self.d + x)]
    }

    /// Marginal over `nodes` (in the given order), flattened row-major.
    pub fn marginal(&self, nodes: &[usize]) -> Vec<f64> {
        let d = self.d;
        let len = checked_pow(d, nodes.len()).expect("marginal size");
        let mut out = vec![0.0; len];
        let mut digits = vec![0usize; self.p];
        for &prob in &self.probs {
            let idx = nodes.iter().fold(0, |acc, &x| acc * d + digits[x]);
            out[idx] += prob;
            // odometer increment
            for j in (0..self.p).rev() {
                digits[j] += 1;
                if digits[j] < d {
                    break;
                }
                digits[j] = 0;
            }
        }
        out
    }
}

/// Per-component exact distributions `P(y | H = h)` plus the mixing weights.
#[derive(Clone, Debug)]
pub struct Oracle {
    p: usize,
    d: usize,
    weights: Vec<f64>,
    components: Vec<JointTable>,
}

impl Oracle {
    pub fn new(m: &MixtureModel, cap: usize) -> Result<Self> {
        let states = (m.d as f64).powi(m.p as i32);
        let n = checked_pow(m.d, m.p)
            .filter(|&n| n <= cap)
            .ok_or(Error::CapExceeded { states, cap })?;
        let components = m
            .components
            .iter()
            .map(|c| {
                let mut logp = Vec::with_capacity(n);
                let mut y = vec![0usize; m.p];
                for _ in 0..n {
                    logp.push(c.log_potential(&y));
                    for j in (0..m.p).rev() {
                        y[j] += 1;
                        if y[j] < m.d {
                            break;
                        }
                        y[j] = 0;
                    }
                }
                let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut probs: Vec<f64> = logp.iter().map(|l| (l - max).exp()).collect();
                let z: f64 = probs.iter().sum();
                probs.iter_mut().for_each(|q| *q /= z);
                JointTable {
                    p: m.p,
                    d: m.d,
                    probs,
                }
            })
            .collect();
        Ok(Oracle {
            p: m.p,
            d: m.d,
            weights: m.weights.clone(),
            components,
        })
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

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn component(&self, h: usize) -> &JointTable {
        &self.components[h]
    }

    pub fn joint(&self) -> JointTable {
        let mut probs = vec![0.0; self.components[0].probs.len()];
        for (w, c) in self.weights.iter().zip(&self.components) {
            for (acc, q) in probs.iter_mut().zip(&c.probs) {
                *acc += w * q;
            }
        }
        JointTable {
            p: self.p,
            d: self.d,
            probs,
        }
    }

    /// Mixture marginal over `nodes`.
    pub fn marginal(&self, nodes: &[usize]) -> Vec<f64> {
        let mut out: Option<Vec<f64>> = None;
        for (w, c) in self.weights.iter().zip(&self.components) {
            let m = c.marginal(nodes);
            match out.as_mut() {
                None => out = Some(m.iter().map(|q| w * q).collect()),
                Some(acc) => acc.iter_mut().zip(&m).for_each(|(a, q)| *a += w * q),
            }
        }
        out.expect("at least one component")
    }

    pub fn component_marginal(&self, h: usize, nodes: &[usize]) -> Vec<f64> {
        self.components[h].marginal(nodes)
    }

    fn check_nodes(&self, nodes: &[usize]) -> Result<()> {
        for (i, &x) in nodes.iter().enumerate() {
            if x >= self.p {
                return Err(Error::OutOfRange(format!("node {x} with p={}", self.p)));
            }
            if nodes[..i].contains(&x) {
                return Err(Error::InvalidConfig(format!("node {x} repeated")));
            }
        }
        Ok(())
    }

    fn check_config(&self, s: &[usize], k: &[usize]) -> Result<()> {
        if s.len() != k.len() || k.iter().any(|&v| v >= self.d) {
            return Err(Error::OutOfRange(format!(
                "configuration {k:?} for separator {s:?} with d={}",
                self.d
            )));
        }
        Ok(())
    }

    /// `M[i][j] = P(Y_u=i, Y_v=j, Y_S=k)`.
    pub fn prob_matrix(&self, u: usize, v: usize, s: &[usize], k: &[usize]) -> Result<JointMatrix> {
        let mut nodes = vec![u, v];
        nodes.extend_from_slice(s);
        self.check_nodes(&nodes)?;
        self.check_config(s, k)?;
        let table = self.marginal(&nodes);
        let d = self.d;
        let offset = k.iter().fold(0, |acc, &x| acc * d + x);
        let block = checked_pow(d, s.len()).expect("block size");
        let data = DMatrix::from_fn(d, d, |i, j| table[(i * d + j) * block + offset]);
        Ok(JointMatrix::new(data, vec![u], vec![v], s.to_vec(), k.to_vec()))
    }

    /// Column `h` is `P(Y_A = · | H = h, Y_S = k)`, rows flattened row-major over `A`.
    pub fn conditional_matrix(&self, a: &[usize], s: &[usize], k: &[usize]) -> Result<DMatrix<f64>> {
        let mut nodes = a.to_vec();
        nodes.extend_from_slice(s);
        self.check_nodes(&nodes)?;
        self.check_config(s, k)?;
        let d = self.d;
        let rows = checked_pow(d, a.len()).expect("rows");
        let block = checked_pow(d, s.len()).expect("block");
        let offset = k.iter().fold(0, |acc, &x| acc * d + x);
        let r = self.components.len();
        let mut out = DMatrix::zeros(rows, r);
        for h in 0..r {
            let table = self.component_marginal(h, &nodes);
            let col: Vec<f64> = (0..rows).map(|i| table[i * block + offset]).collect();
            let mass: f64 = col.iter().sum();
            if !(mass > 0.0) {
                return Err(Error::NullEvent(format!(
                    "P(Y_S={k:?} | H={h}) = 0 for S={s:?}"
                )));
            }
            for (i, q) in col.into_iter().enumerate() {
                out[(i, h)] = q / mass;
            }
        }
        Ok(out)
    }
}

pub fn exact_joint(m: &MixtureModel, cap: usize) -> Result<JointTable> {
    Ok(Oracle::new(m, cap)?.joint())
}

pub fn exact_prob_matrix(
    m: &MixtureModel,
    u: usize,
    v: usize,
    s: &[usize],
    k: &[usize],
) -> Result<JointMatrix> {
    Oracle::new(m, DEFAULT_ENUMERATION_CAP)?.prob_matrix(u, v, s, k)
}

pub fn exact_conditional_matrix(
    m: &MixtureModel,
    a: &[usize],
    s: &[usize],
    k: &[usize],
) -> Result<DMatrix<f64>> {
    Oracle::new(m, DEFAULT_ENUMERATION_CAP)?.conditional_matrix(a, s, k)
}
