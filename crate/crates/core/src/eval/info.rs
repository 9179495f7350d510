//! The φ function, the mutual-information perturbation bound and the
//! empirical concentration check.

use serde::{Deserialize, Serialize};

use crate::empirical::{singular_values, StatsSource};
use crate::error::{Error, Result};
use crate::model::{sample, MixtureModel, Oracle};

const INV_E: f64 = 1.0 / std::f64::consts::E;

/// `0` at `0`, `−x ln x` on `(0, 1/e)`, `1/e` otherwise.
pub fn phi(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < INV_E {
        -x * x.ln()
    } else {
        INV_E
    }
}

/// Inverse of `phi` on its increasing branch `[0, 1/e]`, by bisection.
pub fn phi_inverse(y: f64) -> Result<f64> {
    if !(0.0..=INV_E).contains(&y) {
        return Err(Error::OutOfRange(format!("phi_inverse({y}) needs y in [0, 1/e]")));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, INV_E);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `3 d φ(ε)`.
pub fn mi_perturbation_bound(epsilon: f64, d: usize) -> f64 {
    3.0 * d as f64 * phi(epsilon)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationResult {
    pub trials: usize,
    pub epsilon: f64,
    pub pass_rate: f64,
    /// largest observed `max_{l,k} |σ_l(M̂) − σ_l(M)|`
    pub worst_deviation: f64,
}

/// Fraction of sampled trials with `max_{l,k} |σ_l(M̂ⁿ_{u,v,{S;k}}) − σ_l(M_{u,v,{S;k}})| <= ε`
/// where `ε = (1 + √ln(1/δ)) / √n`.
#[allow(clippy::too_many_arguments)]
pub fn concentration_check(
    m: &MixtureModel,
    u: usize,
    v: usize,
    s: &[usize],
    n: usize,
    trials: usize,
    delta: f64,
    seed: u64,
) -> Result<ConcentrationResult> {
    if !(delta > 0.0 && delta <= 1.0) || n == 0 || trials == 0 {
        return Err(Error::InvalidConfig("need n >= 1, trials >= 1 and delta in (0, 1]".into()));
    }
    let epsilon = (1.0 + (1.0 / delta).ln().sqrt()) / (n as f64).sqrt();
    let exact = StatsSource::from_oracle(Oracle::new(m, crate::model::DEFAULT_ENUMERATION_CAP)?);
    let mut nodes = vec![u, v];
    nodes.extend_from_slice(s);
    let truth = exact.marginal_table(&nodes)?;
    let configs = crate::util::checked_pow(m.alphabet_size(), s.len()).expect("configs");
    let d = m.alphabet_size();
    let spectra = |table: &crate::empirical::MarginalTable| -> Vec<Vec<f64>> {
        (0..configs)
            .map(|ki| {
                let k = crate::util::decode(ki, d, s.len());
                let flat = table.slice_trailing(s.len(), &k);
                singular_values(&nalgebra::DMatrix::from_fn(d, d, |i, j| flat[i * d + j]))
            })
            .collect()
    };
    let exact_spectra = spectra(&truth);
    let mut passes = 0;
    let mut worst = 0.0f64;
    for t in 0..trials {
        let samples = sample(m, n, seed.wrapping_add(t as u64), crate::model::DEFAULT_ENUMERATION_CAP)?;
        let table = StatsSource::empirical(samples)?.marginal_table(&nodes)?;
        let dev = spectra(&table)
            .iter()
            .zip(&exact_spectra)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        worst = worst.max(dev);
        if dev <= epsilon {
            passes += 1;
        }
    }
    Ok(ConcentrationResult {
        trials,
        epsilon,
        pass_rate: passes as f64 / trials as f64,
        worst_deviation: worst,
    })
}
