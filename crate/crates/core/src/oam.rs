//! Two-point work measurement on Laguerre-Gaussian OAM modes with radial
//! index fixed to zero, `e_l = (|l| + 1) hbar omega`. Energies are in units
//! of `hbar omega` and `beta` in units of `1 / (hbar omega)`.
//!
//! Modes are indexed `l + l_max`, so a basis of cutoff `l_max` has
//! `2 l_max + 1` entries ordered from `-l_max` to `l_max`.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tpm::WorkDistribution;

/// Cutoff used when none is configured.
pub const DEFAULT_L_MAX: usize = 10;

/// Allowed defect of a column sum of a transition matrix.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// `(|l| + 2p + 1)`.
pub fn lg_energy(l: i64, p: u64) -> f64 {
    (l.unsigned_abs() + 2 * p + 1) as f64
}

fn basis_len(l_max: usize) -> usize {
    2 * l_max + 1
}

fn index_to_l(index: usize, l_max: usize) -> i64 {
    index as i64 - l_max as i64
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(invalid("beta", "inverse temperature must be positive and finite"));
    }
    Ok(())
}

/// Thermal populations over `-l_max..=l_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OamEnsemble {
    beta: f64,
    l_max: usize,
    probs: Vec<f64>,
    partition_value: f64,
}

impl OamEnsemble {
    pub fn thermal(beta: f64, l_max: usize) -> Result<Self> {
        check_beta(beta)?;
        // weights relative to the ground mode, so nothing underflows at large beta
        let rel: Vec<f64> = (0..basis_len(l_max))
            .map(|i| (-beta * index_to_l(i, l_max).unsigned_abs() as f64).exp())
            .collect();
        let rel_sum = partition_sum(&rel);
        let probs = rel.iter().map(|w| w / rel_sum).collect();
        Ok(Self { beta, l_max, probs, partition_value: (-beta).exp() * rel_sum })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// Populations indexed by `l + l_max`.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, l: i64) -> f64 {
        if l.unsigned_abs() as usize > self.l_max {
            return 0.0;
        }
        self.probs[(l + self.l_max as i64) as usize]
    }

    pub fn partition_value(&self) -> f64 {
        self.partition_value
    }

    pub fn free_energy(&self) -> f64 {
        -self.partition_value.ln() / self.beta
    }
}

/// Sum of a weight vector symmetric under `l -> -l`, pairing mirrored terms
/// from the small tail inwards so both halves round identically.
fn partition_sum(rel: &[f64]) -> f64 {
    let l_max = rel.len() / 2;
    let mut s = 0.0;
    for k in (1..=l_max).rev() {
        s += rel[l_max - k] + rel[l_max + k];
    }
    s + rel[l_max]
}

/// Direct partition sum and its `l_max -> infinity` limit
/// `e^{-beta} coth(beta / 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OamPartition {
    pub direct: f64,
    pub closed_form: f64,
}

pub fn oam_partition_function(beta: f64, l_max: usize) -> Result<OamPartition> {
    let ens = OamEnsemble::thermal(beta, l_max)?;
    let closed_form = (-beta).exp() / (0.5 * beta).tanh();
    Ok(OamPartition { direct: ens.partition_value(), closed_form })
}

/// One entry of a transition matrix as exchanged in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OamTransition {
    pub l_in: i64,
    pub l_out: i64,
    pub probability: f64,
}

/// Column-stochastic `p_{l'|l}` stored at `(l' + l_max, l + l_max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OamTransitions {
    l_max: usize,
    probs: DMatrix<f64>,
}

impl OamTransitions {
    pub fn new(l_max: usize, probs: DMatrix<f64>) -> Result<Self> {
        let n = basis_len(l_max);
        if probs.nrows() != n || probs.ncols() != n {
            return Err(invalid("transitions", format!("expected a {n}x{n} matrix for l_max = {l_max}")));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::ProcessValidity("transition probabilities must be finite and non-negative".into()));
        }
        for (j, col) in probs.column_iter().enumerate() {
            let s: f64 = col.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::ProcessValidity(format!(
                    "transitions out of l = {} sum to {s}, expected 1",
                    index_to_l(j, l_max)
                )));
            }
        }
        Ok(Self { l_max, probs })
    }

    pub fn identity(l_max: usize) -> Self {
        let n = basis_len(l_max);
        Self { l_max, probs: DMatrix::identity(n, n) }
    }

    /// `|U_{l' l}|^2` of a unitary acting on the truncated OAM basis.
    pub fn from_unitary(l_max: usize, u: &DMatrix<Complex<f64>>) -> Result<Self> {
        Self::new(l_max, u.map(|z| z.norm_sqr()))
    }

    /// Sparse JSON entries; unlisted pairs have probability zero.
    pub fn from_entries(l_max: usize, entries: &[OamTransition]) -> Result<Self> {
        let n = basis_len(l_max);
        let mut probs = DMatrix::zeros(n, n);
        for e in entries {
            if e.l_in.unsigned_abs() as usize > l_max || e.l_out.unsigned_abs() as usize > l_max {
                return Err(invalid("transitions", format!("entry {} -> {} outside |l| <= {l_max}", e.l_in, e.l_out)));
            }
            probs[((e.l_out + l_max as i64) as usize, (e.l_in + l_max as i64) as usize)] += e.probability;
        }
        Self::new(l_max, probs)
    }

    pub fn entries(&self) -> Vec<OamTransition> {
        let n = basis_len(self.l_max);
        let mut out = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let p = self.probs[(i, j)];
                if p != 0.0 {
                    out.push(OamTransition {
                        l_in: index_to_l(j, self.l_max),
                        l_out: index_to_l(i, self.l_max),
                        probability: p,
                    });
                }
            }
        }
        out
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn prob(&self, l_out: i64, l_in: i64) -> f64 {
        let m = self.l_max as i64;
        self.probs[((l_out + m) as usize, (l_in + m) as usize)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.probs
    }
}

/// `P(W) = sum p_l p_{l'|l} delta(W - (|l'| - |l|))` for a thermal input.
pub fn oam_work_distribution(beta: f64, l_max: usize, transitions: &OamTransitions) -> Result<WorkDistribution<f64>> {
    if transitions.l_max() != l_max {
        return Err(invalid("transitions", "cutoff differs from the ensemble cutoff"));
    }
    let ens = OamEnsemble::thermal(beta, l_max)?;
    let n = basis_len(l_max);
    let mut pairs = Vec::with_capacity(n * n);
    for j in 0..n {
        let l = index_to_l(j, l_max);
        for i in 0..n {
            let lp = index_to_l(i, l_max);
            let w = lg_energy(lp, 0) - lg_energy(l, 0);
            pairs.push((w, ens.probs()[j] * transitions.probs[(i, j)]));
        }
    }
    WorkDistribution::from_pairs(pairs, crate::tpm::default_grouping_tol())
}

/// Normalized `|a_l|^2`, the statistics a mode sorter records.
pub fn mode_sorter_histogram(amplitudes: &[Complex<f64>]) -> Result<Vec<f64>> {
    let weights: Vec<f64> = amplitudes.iter().map(|a| a.norm_sqr()).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::StateValidity("amplitude vector has no finite weight".into()));
    }
    Ok(weights.into_iter().map(|w| w / total).collect())
}
