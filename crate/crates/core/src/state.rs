//! Density matrices on the truncated Fock space.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::fock::TruncatedFockOperator;
use crate::linalg::{cmatmul, hermitian_eigen};
use crate::quench::check_beta;
use crate::scalar::{cabs, cplx, lit, to_f64, Real};

/// Trace and positivity tolerance.
pub const STATE_TOL: f64 = 1e-10;

/// Eigenvalues in `(-STATE_TOL, 0]` are raised to this before taking logs.
pub const CLAMP_FLOOR: f64 = 1e-37;

/// Hermitian, unit-trace, positive semidefinite matrix together with its
/// spectral decomposition.
#[derive(Debug, Clone)]
pub struct QuantumState<T: Real> {
    rho: DMatrix<Complex<T>>,
    eigenvalues: Vec<T>,
    /// `ln` of each eigenvalue; exact for thermal states, clamped otherwise.
    log_eigenvalues: Vec<T>,
    eigenvectors: DMatrix<Complex<T>>,
}

impl<T: Real> QuantumState<T> {
    /// Validates and decomposes an explicit density matrix.
    pub fn from_matrix(rho: DMatrix<Complex<T>>) -> Result<Self> {
        let d = rho.nrows();
        if rho.ncols() != d || d == 0 {
            return Err(Error::StateValidity("density matrix must be square and non-empty".into()));
        }
        let tol: T = lit(STATE_TOL);
        for i in 0..d {
            for j in 0..=i {
                if cabs(rho[(i, j)] - rho[(j, i)].conj()) > tol {
                    return Err(Error::StateValidity(format!("not Hermitian at ({i}, {j})")));
                }
            }
        }
        let trace = rho.trace().re;
        if (trace - T::one()).abs() > tol {
            return Err(Error::StateValidity(format!("trace {} differs from 1", to_f64(trace))));
        }
        let (values, vectors) = hermitian_eigen(rho.clone());
        let mut eigenvalues = Vec::with_capacity(d);
        let mut log_eigenvalues = Vec::with_capacity(d);
        for v in values {
            if v < -tol {
                return Err(Error::StateValidity(format!("negative eigenvalue {:e}", to_f64(v))));
            }
            let clamped = v.max(lit(CLAMP_FLOOR));
            eigenvalues.push(v.max(T::zero()));
            log_eigenvalues.push(clamped.ln());
        }
        Ok(Self { rho, eigenvalues, log_eigenvalues, eigenvectors: vectors })
    }

    /// `exp(-beta H) / Z` for a Hermitian `H`.
    pub fn thermal(h: &TruncatedFockOperator<T>, beta: T) -> Result<Self> {
        check_beta(beta)?;
        let (energies, vectors) = hermitian_eigen(h.entries().clone());
        let e_min = energies.iter().copied().fold(energies[0], |a, b| a.min(b));
        let shifted: Vec<T> = energies.iter().map(|&e| -(beta * (e - e_min))).collect();
        let log_sum = shifted.iter().fold(T::zero(), |acc, &s| acc + s.exp()).ln();
        let log_eigenvalues: Vec<T> = shifted.iter().map(|&s| s - log_sum).collect();
        let eigenvalues: Vec<T> = log_eigenvalues.iter().map(|&l| l.exp()).collect();
        let mut scaled = vectors.clone();
        for (j, &p) in eigenvalues.iter().enumerate() {
            let mut col = scaled.column_mut(j);
            col *= cplx(p, T::zero());
        }
        let rho = cmatmul(&scaled, &vectors.adjoint());
        Ok(Self { rho, eigenvalues, log_eigenvalues, eigenvectors: vectors })
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.rho
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn trace(&self) -> T {
        self.rho.trace().re
    }

    /// `Re tr(A rho)`.
    pub fn expectation(&self, op: &TruncatedFockOperator<T>) -> T {
        assert_eq!(op.dim(), self.dim(), "dimension mismatch in expectation value");
        let a = op.entries();
        let mut acc = T::zero();
        for i in 0..self.dim() {
            for k in 0..self.dim() {
                acc += (a[(i, k)] * self.rho[(k, i)]).re;
            }
        }
        acc
    }

    /// Von Neumann entropy `-tr rho ln rho`, with `0 ln 0 = 0`.
    pub fn entropy(&self) -> T {
        -self.neg_entropy()
    }

    fn neg_entropy(&self) -> T {
        self.eigenvalues
            .iter()
            .zip(&self.log_eigenvalues)
            .filter(|(p, _)| **p > T::zero())
            .fold(T::zero(), |acc, (&p, &l)| acc + p * l)
    }
}

/// Quantum relative entropy `S(rho || sigma) = tr rho ln rho - tr rho ln sigma`.
pub fn relative_entropy<T: Real>(rho: &QuantumState<T>, sigma: &QuantumState<T>) -> Result<T> {
    if rho.dim() != sigma.dim() {
        return Err(Error::StateValidity("states live on different truncations".into()));
    }
    let d = rho.dim();
    // tr(rho ln sigma) = sum_j ln(s_j) <w_j| rho |w_j>
    let w = &sigma.eigenvectors;
    let rw = cmatmul(&rho.rho, w);
    let mut cross = T::zero();
    for j in 0..d {
        let mut diag = T::zero();
        for i in 0..d {
            diag += (w[(i, j)].conj() * rw[(i, j)]).re;
        }
        if diag != T::zero() {
            cross += diag * sigma.log_eigenvalues[j];
        }
    }
    Ok(rho.neg_entropy() - cross)
}
