//! Diagonalization of the driven and squeezed oscillator
//! `H = omega (a^dag a + 1/2) + eta a^dag + eta^* a + gamma a^dag^2 + gamma^* a^2`.
//!
//! `H = O^dag H_d O` with `O = D(alpha) S(r, theta)` and
//! `H_d = omega' (a^dag a + 1/2) + dC`. Requiring the linear and quadratic
//! terms of `O^dag H_d O` to reproduce those of `H` fixes
//!
//! * `r = artanh(2|gamma|/omega) / 2`, `delta = 1/cosh 2r`, `omega' = omega delta`
//! * `theta = Gamma + pi`
//! * `alpha = (eta cosh r - eta^* e^{i Gamma} sinh r) / omega'`
//! * `dC = -omega' |alpha|^2`
//!
//! [`PrintedRelations`] keeps the commonly quoted closed forms for comparison;
//! they coincide with the above whenever `eta = 0` or `gamma = 0`, up to the
//! sign convention of `alpha`, which no transition probability can see.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{displacement_operator, squeezing_operator, TruncatedFockOperator};
use crate::linalg::cmatmul;
use crate::scalar::{cabs, cplx, from_usize, lit, polar, to_f64, Real};

/// Largest accepted `|gamma| / omega`; the transformation diverges at 1/2.
pub const MAX_GAMMA_RATIO: f64 = 0.5 - 1e-6;

/// Hamiltonian parameters at one instant. Omitted fields deserialize to
/// the bare oscillator with `omega = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct QuenchSpec<T> {
    #[serde(default = "T::one")]
    pub omega: T,
    #[serde(default = "T::zero")]
    pub eta_mag: T,
    #[serde(default = "T::zero")]
    pub eta_phase: T,
    #[serde(default = "T::zero")]
    pub gamma_mag: T,
    #[serde(default = "T::zero")]
    pub gamma_phase: T,
}

impl<T: Real> QuenchSpec<T> {
    pub fn new(omega: T, eta_mag: T, eta_phase: T, gamma_mag: T, gamma_phase: T) -> Result<Self> {
        let spec = Self { omega, eta_mag, eta_phase, gamma_mag, gamma_phase };
        spec.validate()?;
        Ok(spec)
    }

    /// Undriven, unsqueezed oscillator.
    pub fn bare(omega: T) -> Self {
        Self { omega, eta_mag: T::zero(), eta_phase: T::zero(), gamma_mag: T::zero(), gamma_phase: T::zero() }
    }

    /// Real drive `eta`, no squeezing.
    pub fn driven(omega: T, eta: T) -> Self {
        Self { eta_mag: eta, ..Self::bare(omega) }
    }

    /// Real squeezing `gamma`, no drive.
    pub fn squeezed(omega: T, gamma: T) -> Self {
        Self { gamma_mag: gamma, ..Self::bare(omega) }
    }

    pub fn eta(&self) -> Complex<T> {
        polar(self.eta_mag, self.eta_phase)
    }

    pub fn gamma(&self) -> Complex<T> {
        polar(self.gamma_mag, self.gamma_phase)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.omega, self.eta_mag, self.eta_phase, self.gamma_mag, self.gamma_phase];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(invalid("spec", "all Hamiltonian parameters must be finite"));
        }
        if self.omega <= T::zero() {
            return Err(invalid("omega", "oscillator frequency must be positive"));
        }
        if self.eta_mag < T::zero() {
            return Err(invalid("eta_mag", "drive magnitude must be non-negative"));
        }
        if self.gamma_mag < T::zero() {
            return Err(invalid("gamma_mag", "squeezing magnitude must be non-negative"));
        }
        let ratio = to_f64(self.gamma_mag / self.omega);
        if ratio > MAX_GAMMA_RATIO {
            return Err(Error::NotDiagonalizable { ratio });
        }
        Ok(())
    }
}

/// Parameters of `O = D(alpha) S(r, theta)` and of the diagonal form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagonalizedHamiltonian<T> {
    spec: QuenchSpec<T>,
    omega: T,
    alpha: Complex<T>,
    r: T,
    theta: T,
}

impl<T: Real> DiagonalizedHamiltonian<T> {
    /// Parameters this diagonalization was computed from.
    pub fn spec(&self) -> &QuenchSpec<T> {
        &self.spec
    }

    pub fn omega(&self) -> T {
        self.omega
    }

    pub fn alpha(&self) -> Complex<T> {
        self.alpha
    }

    pub fn alpha_mag(&self) -> T {
        cabs(self.alpha)
    }

    /// Phase `A` of `alpha`, in `(-pi, pi]`.
    pub fn alpha_phase(&self) -> T {
        self.alpha.im.atan2(self.alpha.re)
    }

    pub fn r(&self) -> T {
        self.r
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    /// `1 / cosh 2r`.
    pub fn delta(&self) -> T {
        T::one() / (self.r + self.r).cosh()
    }

    pub fn omega_prime(&self) -> T {
        self.omega * self.delta()
    }

    /// Energy shift `-omega' |alpha|^2`.
    pub fn delta_c(&self) -> T {
        -self.omega_prime() * self.alpha.norm_sqr()
    }

    /// `E_n = omega' (n + 1/2) + dC`.
    pub fn energy(&self, n: usize) -> T {
        self.omega_prime() * (from_usize::<T>(n) + lit(0.5)) + self.delta_c()
    }

    /// `ln Z` of the untruncated spectrum.
    pub fn log_partition(&self, beta: T) -> T {
        let x = beta * self.omega_prime();
        -(beta * (self.omega_prime() * lit(0.5) + self.delta_c())) - ln_one_minus_exp(x)
    }

    pub fn displacement(&self, dim: usize) -> Result<TruncatedFockOperator<T>> {
        displacement_operator(self.alpha, dim)
    }

    pub fn squeeze(&self, dim: usize) -> Result<TruncatedFockOperator<T>> {
        squeezing_operator(self.r, self.theta, dim)
    }

    /// `O = D(alpha) S(r, theta)`; the energy eigenstates are `O^dag |n>`.
    pub fn transform(&self, dim: usize) -> Result<TruncatedFockOperator<T>> {
        Ok(self.displacement(dim)?.compose(&self.squeeze(dim)?))
    }
}

/// `ln(1 - e^{-x})` for `x > 0`.
fn ln_one_minus_exp<T: Real>(x: T) -> T {
    (-(-x).exp_m1()).ln()
}

/// Closed-form diagonalization of a validated spec.
pub fn diagonalize<T: Real>(spec: &QuenchSpec<T>) -> Result<DiagonalizedHamiltonian<T>> {
    spec.validate()?;
    let omega = spec.omega;
    let r = ((spec.gamma_mag + spec.gamma_mag) / omega).atanh() * lit(0.5);
    let omega_prime = omega / (r + r).cosh();
    let eta = spec.eta();
    let alpha = if spec.eta_mag == T::zero() {
        cplx(T::zero(), T::zero())
    } else if r == T::zero() {
        eta.unscale(omega)
    } else {
        let rot = polar(r.sinh(), spec.gamma_phase);
        (eta.scale(r.cosh()) - eta.conj() * rot).unscale(omega_prime)
    };
    Ok(DiagonalizedHamiltonian {
        spec: *spec,
        omega,
        alpha,
        r,
        theta: spec.gamma_phase + T::pi(),
    })
}

/// `E_n` for `n < n_max`.
pub fn spectrum<T: Real>(diag: &DiagonalizedHamiltonian<T>, n_max: usize) -> Result<Vec<T>> {
    if n_max < 1 {
        return Err(invalid("n_max", "need at least one level"));
    }
    Ok((0..n_max).map(|n| diag.energy(n)).collect())
}

/// Free-energy change of a sudden quench,
/// `dF = (w'_t - w'_0)/2 + (1/beta) ln[(1 - e^{-beta w'_t}) / (1 - e^{-beta w'_0})] + dC_t - dC_0`.
pub fn free_energy_change<T: Real>(
    beta: T,
    diag0: &DiagonalizedHamiltonian<T>,
    diag_tau: &DiagonalizedHamiltonian<T>,
) -> Result<T> {
    check_beta(beta)?;
    let zero_point = (diag_tau.omega_prime() - diag0.omega_prime()) * lit(0.5);
    let log_term = (ln_one_minus_exp(beta * diag_tau.omega_prime()) - ln_one_minus_exp(beta * diag0.omega_prime())) / beta;
    let shift = diag_tau.delta_c() - diag0.delta_c();
    Ok(zero_point + log_term + shift)
}

pub(crate) fn check_beta<T: Real>(beta: T) -> Result<()> {
    if !beta.is_finite() || beta <= T::zero() {
        return Err(invalid("beta", format!("inverse temperature must be positive, got {}", to_f64(beta))));
    }
    Ok(())
}

/// Matrix of `H` in the truncated Fock basis, built from `(eta, gamma)` directly.
pub fn hamiltonian_matrix<T: Real>(spec: &QuenchSpec<T>, dim: usize) -> Result<TruncatedFockOperator<T>> {
    spec.validate()?;
    let mut h = DMatrix::zeros(dim.max(1), dim.max(1));
    let eta = spec.eta();
    let gamma = spec.gamma();
    for n in 0..dim {
        let nf = from_usize::<T>(n);
        h[(n, n)] = cplx(spec.omega * (nf + lit(0.5)), T::zero());
        if n >= 1 {
            h[(n, n - 1)] = eta.scale(nf.sqrt());
            h[(n - 1, n)] = eta.conj().scale(nf.sqrt());
        }
        if n >= 2 {
            let amp = (nf * (nf - T::one())).sqrt();
            h[(n, n - 2)] = gamma.scale(amp);
            h[(n - 2, n)] = gamma.conj().scale(amp);
        }
    }
    TruncatedFockOperator::from_matrix(h)
}

/// `O^dag H_d O` on the truncated space.
pub fn rebuilt_hamiltonian<T: Real>(
    diag: &DiagonalizedHamiltonian<T>,
    dim: usize,
) -> Result<TruncatedFockOperator<T>> {
    let o = diag.transform(dim)?;
    let hd = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        dim,
        (0..dim).map(|n| cplx(diag.energy(n), T::zero())),
    ));
    let m = cmatmul(&cmatmul(&o.entries().adjoint(), &hd), o.entries());
    TruncatedFockOperator::from_matrix(m)
}

/// Closed forms for `|alpha|`, `A`, `theta` and `dC` as usually quoted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrintedRelations<T> {
    pub alpha_mag: T,
    /// Quadrant-aware two-argument arctangent.
    pub alpha_phase: T,
    pub theta: T,
    pub r: T,
    /// `-omega |alpha|^2`.
    pub delta_c: T,
}

pub fn printed_relations<T: Real>(spec: &QuenchSpec<T>) -> Result<PrintedRelations<T>> {
    spec.validate()?;
    let (w, e, l, g, gp) = (spec.omega, spec.eta_mag, spec.eta_phase, spec.gamma_mag, spec.gamma_phase);
    let four: T = lit(4.0);
    let two: T = lit(2.0);
    let radicand = four * g * g + w * w - four * g * w * (l - two * gp).cos();
    let alpha_mag = e / (w * w - four * g * g) * radicand.max(T::zero()).sqrt();
    let num = two * g * (l - gp).sin() - w * l.sin();
    let den = two * g * (l - gp).cos() - w * l.cos();
    Ok(PrintedRelations {
        alpha_mag,
        alpha_phase: num.atan2(den),
        theta: gp,
        r: (two * g / w).atanh() * lit(0.5),
        delta_c: -w * alpha_mag * alpha_mag,
    })
}
