//! Truncated Fock-space operators and thermal populations.
//!
//! Row and column index of every matrix is the occupation number `n = 0..dim`.
//! `D(alpha)` and `S(r, theta)` are phase rotations `e^{i phi a^dag a}` of the
//! real operators `D(|alpha|)` and `S(r, 0)`, whose generators are real
//! antisymmetric and tridiagonal (per parity sector for `S`). Their
//! exponentials come from a real symmetric eigendecomposition, so the
//! truncated operators are exactly unitary up to rounding. Truncation still distorts the entries
//! near the upper edge, which is why the shift relations are only asserted on
//! a central block.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{cmatmul, exp_antisymmetric_tridiagonal};
use crate::scalar::{cabs, cis, cplx, from_usize, lit, to_f64, Real};

/// Smallest admissible truncation.
pub const MIN_DIM: usize = 2;

/// Unitarity tolerance on the central block.
pub const UNITARITY_TOL: f64 = 1e-10;

/// Complex square matrix on the lowest `dim` Fock states.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedFockOperator<T: Real> {
    entries: DMatrix<Complex<T>>,
}

impl<T: Real> TruncatedFockOperator<T> {
    pub fn from_matrix(entries: DMatrix<Complex<T>>) -> Result<Self> {
        let dim = entries.nrows();
        if entries.ncols() != dim {
            return Err(invalid(
                "entries",
                format!("matrix is {}x{}, expected square", dim, entries.ncols()),
            ));
        }
        check_dim(dim)?;
        Ok(Self { entries })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { entries: DMatrix::identity(dim, dim) })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex<T>> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<Complex<T>> {
        self.entries
    }

    /// Matrix element `<m| M |n>`.
    pub fn get(&self, m: usize, n: usize) -> Complex<T> {
        self.entries[(m, n)]
    }

    pub fn adjoint(&self) -> Self {
        Self { entries: self.entries.adjoint() }
    }

    /// Operator product `self * rhs`.
    pub fn compose(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch in operator product");
        Self { entries: cmatmul(&self.entries, &rhs.entries) }
    }

    /// `max |(M^dag M - 1)_{ij}|` over `i, j < block`.
    pub fn unitarity_deviation(&self, block: usize) -> T {
        let block = block.min(self.dim());
        let cols = self.entries.columns(0, block);
        let gram = cols.adjoint() * cols;
        let mut worst = T::zero();
        for i in 0..block {
            for j in 0..block {
                let target = if i == j { Complex::new(T::one(), T::zero()) } else { Complex::new(T::zero(), T::zero()) };
                worst = worst.max(cabs(gram[(i, j)] - target));
            }
        }
        worst
    }

    /// `max |M_{ij} - N_{ij}|` over `i, j < block`. Operators may differ in dimension.
    pub fn max_abs_diff_on_block(&self, other: &Self, block: usize) -> T {
        let block = block.min(self.dim()).min(other.dim());
        let mut worst = T::zero();
        for i in 0..block {
            for j in 0..block {
                worst = worst.max(cabs(self.entries[(i, j)] - other.entries[(i, j)]));
            }
        }
        worst
    }
}

impl<'a, T: Real> std::ops::Mul for &'a TruncatedFockOperator<T> {
    type Output = TruncatedFockOperator<T>;
    fn mul(self, rhs: Self) -> Self::Output {
        self.compose(rhs)
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < MIN_DIM {
        return Err(Error::InvalidDimension { dim, min: MIN_DIM });
    }
    Ok(())
}

/// Lowering `a` with `a[n-1, n] = sqrt(n)` and raising `a^dag`.
pub fn ladder_operators<T: Real>(
    dim: usize,
) -> Result<(TruncatedFockOperator<T>, TruncatedFockOperator<T>)> {
    check_dim(dim)?;
    let mut a = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = cplx(from_usize::<T>(n).sqrt(), T::zero());
    }
    let lowering = TruncatedFockOperator { entries: a };
    let raising = lowering.adjoint();
    Ok((lowering, raising))
}

/// `(R M R^dag)_{mn} = e^{i phi m} M_{mn} e^{-i phi n}` for `R = e^{i phi a^dag a}`.
fn phase_rotate<T: Real>(m: &DMatrix<T>, phi: T) -> DMatrix<Complex<T>> {
    let dim = m.nrows();
    if phi == T::zero() {
        return m.map(|x| cplx(x, T::zero()));
    }
    let ph: Vec<Complex<T>> = (0..dim).map(|k| cis(phi * from_usize::<T>(k))).collect();
    DMatrix::from_fn(dim, dim, |i, j| (ph[i] * ph[j].conj()).scale(m[(i, j)]))
}

/// `D(alpha) = exp(alpha a^dag - alpha^* a)` on `dim` Fock states.
pub fn displacement_operator<T: Real>(
    alpha: Complex<T>,
    dim: usize,
) -> Result<TruncatedFockOperator<T>> {
    check_dim(dim)?;
    if !(alpha.re.is_finite() && alpha.im.is_finite()) {
        return Err(invalid("alpha", "displacement must be finite"));
    }
    if alpha.re == T::zero() && alpha.im == T::zero() {
        return TruncatedFockOperator::identity(dim);
    }
    // D(alpha) = R(A) D(|alpha|) R(A)^dag, D(|alpha|) = exp(|alpha| (a^dag - a))
    let mag = cabs(alpha);
    let upper: Vec<T> = (1..dim).map(|n| -mag * from_usize::<T>(n).sqrt()).collect();
    let real = exp_antisymmetric_tridiagonal(&upper);
    let phase = alpha.im.atan2(alpha.re);
    Ok(TruncatedFockOperator { entries: phase_rotate(&real, phase) })
}

/// `S(r, theta) = exp{(r/2)(e^{-i theta} a^2 - e^{i theta} a^dag^2)}`.
///
/// The generator only couples occupation numbers of equal parity, so the
/// even and odd sectors are exponentiated separately and odd `m - n` entries
/// are exact zeros.
pub fn squeezing_operator<T: Real>(r: T, theta: T, dim: usize) -> Result<TruncatedFockOperator<T>> {
    check_dim(dim)?;
    if !r.is_finite() || !theta.is_finite() {
        return Err(invalid("r", "squeeze parameters must be finite"));
    }
    if r < T::zero() {
        return Err(invalid("r", "squeeze magnitude must be non-negative; fold the sign into theta"));
    }
    if r == T::zero() {
        return TruncatedFockOperator::identity(dim);
    }
    // S(r, theta) = R(theta/2) S(r, 0) R(theta/2)^dag; the generator of
    // S(r, 0) couples n to n +- 2 only, so each parity sector is tridiagonal
    let half = r * lit::<T>(0.5);
    let mut real = DMatrix::zeros(dim, dim);
    for parity in 0..2 {
        let idx: Vec<usize> = (parity..dim).step_by(2).collect();
        if idx.len() < 2 {
            if let Some(&k) = idx.first() {
                real[(k, k)] = T::one();
            }
            continue;
        }
        // <n-2| (r/2) a^2 |n> = (r/2) sqrt(n(n-1))
        let upper: Vec<T> = idx[1..]
            .iter()
            .map(|&n| half * (from_usize::<T>(n) * from_usize::<T>(n - 1)).sqrt())
            .collect();
        let block = exp_antisymmetric_tridiagonal(&upper);
        for (bi, &gi) in idx.iter().enumerate() {
            for (bj, &gj) in idx.iter().enumerate() {
                real[(gi, gj)] = block[(bi, bj)];
            }
        }
    }
    Ok(TruncatedFockOperator { entries: phase_rotate(&real, theta * lit(0.5)) })
}

/// Boltzmann weights of a discrete spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalPopulations<T: Real> {
    beta: T,
    probs: Vec<T>,
    partition_value: T,
    log_partition: T,
    tail_mass: Option<T>,
}

impl<T: Real> ThermalPopulations<T> {
    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    /// Truncated partition sum `sum_n exp(-beta e_n)`.
    pub fn partition_value(&self) -> T {
        self.partition_value
    }

    /// `ln Z`, finite even when `Z` itself under- or overflows.
    pub fn log_partition(&self) -> T {
        self.log_partition
    }

    /// Weight the untruncated spectrum would place beyond the last level,
    /// extrapolating the final gap geometrically. `None` when the last gap is
    /// not positive and no extrapolation is meaningful.
    pub fn tail_mass(&self) -> Option<T> {
        self.tail_mass
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// `p_n = exp(-beta e_n) / sum_k exp(-beta e_k)`.
pub fn thermal_populations<T: Real>(beta: T, spectrum: &[T]) -> Result<ThermalPopulations<T>> {
    if !beta.is_finite() || beta <= T::zero() {
        return Err(invalid("beta", format!("inverse temperature must be positive, got {}", to_f64(beta))));
    }
    if spectrum.is_empty() {
        return Err(invalid("spectrum", "spectrum is empty"));
    }
    if spectrum.iter().any(|e| !e.is_finite()) {
        return Err(invalid("spectrum", "spectrum contains non-finite energies"));
    }
    // shift by the lowest level so the largest weight is exactly 1
    let e_min = spectrum.iter().copied().fold(spectrum[0], |a, b| a.min(b));
    let weights: Vec<T> = spectrum.iter().map(|&e| (-(beta * (e - e_min))).exp()).collect();
    let sum = weights.iter().fold(T::zero(), |acc, &w| acc + w);
    let probs: Vec<T> = weights.iter().map(|&w| w / sum).collect();
    let log_partition = sum.ln() - beta * e_min;
    let tail_mass = match spectrum.len() {
        1 => None,
        d => {
            let gap = spectrum[d - 1] - spectrum[d - 2];
            if gap > T::zero() {
                let x = (-(beta * gap)).exp();
                Some(probs[d - 1] * x / (T::one() - x))
            } else {
                None
            }
        }
    };
    Ok(ThermalPopulations {
        beta,
        probs,
        partition_value: log_partition.exp(),
        log_partition,
        tail_mass,
    })
}

/// Doubling policy for the truncation dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    pub start_dim: usize,
    pub max_dim: usize,
    /// Largest accepted change of the observable between `d` and `2d`.
    pub tol: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self { start_dim: 64, max_dim: 1024, tol: 1e-9 }
    }
}

impl Truncation {
    pub fn fixed(dim: usize) -> Self {
        Self { start_dim: dim, max_dim: dim, tol: f64::INFINITY }
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.start_dim)?;
        if self.max_dim < self.start_dim {
            return Err(invalid("max_dim", "max_dim must be at least start_dim"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol", "convergence tolerance must be positive"));
        }
        Ok(())
    }
}

/// Value evaluated at the dimension where the doubling loop settled.
#[derive(Debug, Clone, PartialEq)]
pub struct Converged<R> {
    pub dim: usize,
    pub value: R,
    /// Change between the last two dimensions; zero for a fixed truncation.
    pub change: f64,
}

/// Evaluate at `start_dim, 2 start_dim, ...` until `distance` between
/// successive values drops below `tol`.
pub fn converge<R>(
    trunc: &Truncation,
    mut eval: impl FnMut(usize) -> Result<R>,
    distance: impl Fn(&R, &R) -> f64,
) -> Result<Converged<R>> {
    trunc.validate()?;
    let mut dim = trunc.start_dim;
    let mut prev = eval(dim)?;
    if trunc.max_dim == trunc.start_dim {
        return Ok(Converged { dim, value: prev, change: 0.0 });
    }
    let mut change = f64::INFINITY;
    while dim * 2 <= trunc.max_dim {
        let next = eval(dim * 2)?;
        change = distance(&prev, &next);
        dim *= 2;
        if change < trunc.tol {
            return Ok(Converged { dim, value: next, change });
        }
        prev = next;
    }
    Err(Error::Convergence { dim, max_dim: trunc.max_dim, change })
}
