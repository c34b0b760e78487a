//! Two-point measurement statistics of sudden quenches.
//!
//! For a sudden quench the evolution is the identity, so the conditional
//! probability of finding `E^tau_m` after `E^0_n` is
//! `p_{m|n} = |<m| D(alpha_tau) S(xi_tau) S^dag(xi_0) D^dag(alpha_0) |n>|^2`.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{converge, thermal_populations, Truncation, TruncatedFockOperator};
use crate::quench::{check_beta, diagonalize, free_energy_change, hamiltonian_matrix, spectrum, DiagonalizedHamiltonian, QuenchSpec};
use crate::scalar::{lit, to_f64, Real};
use crate::state::{relative_entropy, QuantumState};

/// Work values closer than this are merged (units of `hbar omega`).
pub const GROUPING_TOL: f64 = 1e-9;

/// Column-sum tolerance of `p_{m|n}` for `n < dim/2`.
pub const COLUMN_TOL: f64 = 1e-9;

/// Grouping tolerance for scalar type `T`: `GROUPING_TOL`, widened to stay
/// above rounding noise for `f32`.
pub fn default_grouping_tol<T: Real>() -> T {
    lit::<T>(GROUPING_TOL).max(T::default_epsilon() * lit(1e3))
}

/// One work value with its probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkAtom<T> {
    pub work: T,
    pub probability: T,
}

/// Discrete work distribution; atoms sorted by work and pairwise separated by
/// more than `grouping_tol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkDistribution<T> {
    atoms: Vec<WorkAtom<T>>,
    grouping_tol: T,
}

impl<T: Real> WorkDistribution<T> {
    /// Groups `(work, probability)` pairs by single linkage on the sorted
    /// work values; each group is represented by its probability-weighted
    /// mean work. Zero-probability pairs are dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (T, T)>, grouping_tol: T) -> Result<Self> {
        if !grouping_tol.is_finite() || grouping_tol < T::zero() {
            return Err(invalid("grouping_tol", "tolerance must be finite and non-negative"));
        }
        let mut raw: Vec<(T, T)> = Vec::new();
        for (w, p) in pairs {
            if !w.is_finite() || !p.is_finite() {
                return Err(invalid("atoms", "work values and probabilities must be finite"));
            }
            if p < T::zero() {
                return Err(invalid("atoms", format!("negative probability {:e}", to_f64(p))));
            }
            if p > T::zero() {
                raw.push((w, p));
            }
        }
        raw.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite work values"));
        let mut atoms: Vec<WorkAtom<T>> = Vec::new();
        let mut i = 0;
        while i < raw.len() {
            let mut j = i + 1;
            while j < raw.len() && raw[j].0 - raw[j - 1].0 <= grouping_tol {
                j += 1;
            }
            let group = &raw[i..j];
            let mass = group.iter().fold(T::zero(), |acc, g| acc + g.1);
            let moment = group.iter().fold(T::zero(), |acc, g| acc + g.0 * g.1);
            atoms.push(WorkAtom { work: moment / mass, probability: mass });
            i = j;
        }
        Ok(Self { atoms, grouping_tol })
    }

    /// Single atom at `work` with unit probability.
    pub fn delta(work: T) -> Self {
        Self { atoms: vec![WorkAtom { work, probability: T::one() }], grouping_tol: default_grouping_tol() }
    }

    pub fn atoms(&self) -> &[WorkAtom<T>] {
        &self.atoms
    }

    pub fn grouping_tol(&self) -> T {
        self.grouping_tol
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `sum p`.
    pub fn normalization(&self) -> T {
        self.atoms.iter().fold(T::zero(), |acc, a| acc + a.probability)
    }

    /// Copy with probabilities divided by their sum.
    pub fn renormalized(&self) -> Self {
        let total = self.normalization();
        let atoms = self
            .atoms
            .iter()
            .map(|a| WorkAtom { work: a.work, probability: a.probability / total })
            .collect();
        Self { atoms, grouping_tol: self.grouping_tol }
    }

    /// `sum p w^k`.
    pub fn moment(&self, k: i32) -> T {
        self.atoms.iter().fold(T::zero(), |acc, a| acc + a.probability * a.work.powi(k))
    }

    pub fn mean(&self) -> T {
        self.moment(1)
    }

    pub fn variance(&self) -> T {
        let m = self.mean();
        self.atoms.iter().fold(T::zero(), |acc, a| acc + a.probability * (a.work - m) * (a.work - m))
    }

    /// `sum p e^{-beta w}`.
    pub fn exp_average(&self, beta: T) -> T {
        self.atoms.iter().fold(T::zero(), |acc, a| acc + a.probability * (-(beta * a.work)).exp())
    }

    /// Probability of `W < threshold`.
    pub fn probability_below(&self, threshold: T) -> T {
        self.atoms
            .iter()
            .filter(|a| a.work < threshold)
            .fold(T::zero(), |acc, a| acc + a.probability)
    }

    /// Probability carried by the atom at `work`, if one lies within the
    /// grouping tolerance.
    pub fn probability_at(&self, work: T) -> T {
        self.atoms
            .iter()
            .filter(|a| (a.work - work).abs() <= self.grouping_tol)
            .fold(T::zero(), |acc, a| acc + a.probability)
    }

    /// Gaussian-broadened density on `grid`, for plotting only.
    pub fn broadened(&self, width: T, grid: &[T]) -> Result<Vec<T>> {
        if !(width > T::zero()) || !width.is_finite() {
            return Err(invalid("width", "broadening width must be positive"));
        }
        let norm = T::one() / (width * T::two_pi().sqrt());
        Ok(grid
            .iter()
            .map(|&x| {
                self.atoms.iter().fold(T::zero(), |acc, a| {
                    let z = (x - a.work) / width;
                    acc + a.probability * norm * (-(z * z) * lit(0.5)).exp()
                })
            })
            .collect())
    }

    /// Net probability differences `p - q` per matched work value, atoms
    /// being matched within the larger grouping tolerance.
    fn matched_differences(&self, other: &Self) -> Vec<T> {
        let tol = self.grouping_tol.max(other.grouping_tol);
        let mut pairs: Vec<(T, T)> = self.atoms.iter().map(|a| (a.work, a.probability)).collect();
        pairs.extend(other.atoms.iter().map(|a| (a.work, -a.probability)));
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite work values"));
        let mut out = Vec::new();
        let mut i = 0;
        while i < pairs.len() {
            let mut j = i + 1;
            while j < pairs.len() && pairs[j].0 - pairs[j - 1].0 <= tol {
                j += 1;
            }
            out.push(pairs[i..j].iter().fold(T::zero(), |acc, p| acc + p.1));
            i = j;
        }
        out
    }

    /// Total variation distance `(1/2) sum |p - q|`.
    pub fn total_variation(&self, other: &Self) -> T {
        self.matched_differences(other).into_iter().fold(T::zero(), |acc, d| acc + d.abs()) * lit(0.5)
    }

    /// Largest per-atom probability difference.
    pub fn max_atom_deviation(&self, other: &Self) -> T {
        self.matched_differences(other).into_iter().fold(T::zero(), |acc, d| acc.max(d.abs()))
    }
}

/// `c_{m,n}` and `p_{m|n} = |c_{m,n}|^2`.
#[derive(Debug, Clone)]
pub struct TransitionMatrix<T: Real> {
    amplitudes: DMatrix<Complex<T>>,
    probs: DMatrix<T>,
}

impl<T: Real> TransitionMatrix<T> {
    pub fn dim(&self) -> usize {
        self.probs.nrows()
    }

    pub fn amplitudes(&self) -> &DMatrix<Complex<T>> {
        &self.amplitudes
    }

    pub fn probabilities(&self) -> &DMatrix<T> {
        &self.probs
    }

    /// `p_{m|n}`.
    pub fn prob(&self, m: usize, n: usize) -> T {
        self.probs[(m, n)]
    }

    pub fn column_sum(&self, n: usize) -> T {
        self.probs.column(n).iter().fold(T::zero(), |acc, &p| acc + p)
    }
}

/// `U = D(alpha_tau) S(xi_tau) S^dag(xi_0) D^dag(alpha_0)` with equal
/// neighbouring factors cancelled exactly.
pub fn transition_amplitudes<T: Real>(
    diag0: &DiagonalizedHamiltonian<T>,
    diag_tau: &DiagonalizedHamiltonian<T>,
    dim: usize,
) -> Result<TruncatedFockOperator<T>> {
    let same_squeeze = diag0.r() == diag_tau.r() && (diag0.r() == T::zero() || diag0.theta() == diag_tau.theta());
    if same_squeeze {
        if diag0.alpha() == diag_tau.alpha() {
            return TruncatedFockOperator::identity(dim);
        }
        return Ok(diag_tau.displacement(dim)?.compose(&diag0.displacement(dim)?.adjoint()));
    }
    let middle = diag_tau.squeeze(dim)?.compose(&diag0.squeeze(dim)?.adjoint());
    let left = diag_tau.displacement(dim)?.compose(&middle);
    Ok(left.compose(&diag0.displacement(dim)?.adjoint()))
}

/// `p_{m|n}` on `dim` levels; columns `n < dim/2` must sum to one.
pub fn transition_matrix<T: Real>(
    diag0: &DiagonalizedHamiltonian<T>,
    diag_tau: &DiagonalizedHamiltonian<T>,
    dim: usize,
) -> Result<TransitionMatrix<T>> {
    let u = transition_amplitudes(diag0, diag_tau, dim)?.into_matrix();
    let probs = u.map(|c| c.norm_sqr());
    let tm = TransitionMatrix { amplitudes: u, probs };
    let tol: T = lit::<T>(COLUMN_TOL).max(T::default_epsilon() * lit(1e3));
    for n in 0..dim / 2 {
        let s = tm.column_sum(n);
        if (s - T::one()).abs() > tol {
            return Err(Error::ProcessValidity(format!("column {n} of p(m|n) sums to {}", to_f64(s))));
        }
    }
    Ok(tm)
}

/// Work atoms `W = E^tau_m - E^0_n` with weight `p^0_n p_{m|n}`.
pub fn work_distribution<T: Real>(
    beta: T,
    diag0: &DiagonalizedHamiltonian<T>,
    diag_tau: &DiagonalizedHamiltonian<T>,
    dim: usize,
) -> Result<WorkDistribution<T>> {
    check_beta(beta)?;
    let e0 = spectrum(diag0, dim)?;
    let et = spectrum(diag_tau, dim)?;
    let pops = thermal_populations(beta, &e0)?;
    let tm = transition_matrix(diag0, diag_tau, dim)?;
    let pairs = (0..dim).flat_map(|n| {
        let pn = pops.probs()[n];
        let et = &et;
        let e0n = e0[n];
        let tm = &tm;
        (0..dim).map(move |m| (et[m] - e0n, pn * tm.prob(m, n)))
    });
    WorkDistribution::from_pairs(pairs.collect::<Vec<_>>(), default_grouping_tol())
}

/// `<W>` from the distribution.
pub fn average_work<T: Real>(dist: &WorkDistribution<T>) -> T {
    dist.mean()
}

/// `<W> = tr(H_tau rho_0) - tr(H_0 rho_0)`, with both Hamiltonians and the
/// thermal state built from `(eta, gamma)` in the Fock basis.
pub fn trace_average_work<T: Real>(
    beta: T,
    diag0: &DiagonalizedHamiltonian<T>,
    diag_tau: &DiagonalizedHamiltonian<T>,
    dim: usize,
) -> Result<T> {
    let h0 = hamiltonian_matrix(diag0.spec(), dim)?;
    let ht = hamiltonian_matrix(diag_tau.spec(), dim)?;
    let rho = QuantumState::thermal(&h0, beta)?;
    Ok(rho.expectation(&ht) - rho.expectation(&h0))
}

/// `<e^{-beta W}>`.
pub fn jarzynski_average<T: Real>(dist: &WorkDistribution<T>, beta: T) -> T {
    dist.exp_average(beta)
}

/// Both sides of the Jarzynski equality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JarzynskiCheck<T> {
    /// `<e^{-beta W}>`.
    pub average: T,
    /// `e^{-beta dF}`.
    pub expected: T,
    /// `<e^{-beta (W - dF)}>`.
    pub ratio: T,
}

pub fn jarzynski_check<T: Real>(dist: &WorkDistribution<T>, beta: T, delta_f: T) -> JarzynskiCheck<T> {
    let average = dist.exp_average(beta);
    let expected = (-(beta * delta_f)).exp();
    let ratio = dist
        .atoms()
        .iter()
        .fold(T::zero(), |acc, a| acc + a.probability * (-(beta * (a.work - delta_f))).exp());
    JarzynskiCheck { average, expected, ratio }
}

/// Mean entropy production and the integral fluctuation theorem average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyProduction<T> {
    /// `beta (<W> - dF)`.
    pub sigma: T,
    /// `<e^{-sigma}>` with `sigma_{m,n} = beta (W_{m,n} - dF)`.
    pub ift: T,
}

pub fn entropy_production<T: Real>(dist: &WorkDistribution<T>, beta: T, delta_f: T) -> EntropyProduction<T> {
    EntropyProduction {
        sigma: beta * (dist.mean() - delta_f),
        ift: jarzynski_check(dist, beta, delta_f).ratio,
    }
}

/// `S(rho_tau || rho_tau^th)` with `rho_tau = rho_0^th` for a sudden quench;
/// both thermal states come from the Fock-basis Hamiltonians.
pub fn relative_entropy_production<T: Real>(
    beta: T,
    diag0: &DiagonalizedHamiltonian<T>,
    diag_tau: &DiagonalizedHamiltonian<T>,
    dim: usize,
) -> Result<T> {
    let h0 = hamiltonian_matrix(diag0.spec(), dim)?;
    let ht = hamiltonian_matrix(diag_tau.spec(), dim)?;
    let rho = QuantumState::thermal(&h0, beta)?;
    let sigma = QuantumState::thermal(&ht, beta)?;
    relative_entropy(&rho, &sigma)
}

/// Scalars and distribution of one quench at converged truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct QuenchAnalysis<T> {
    pub beta: T,
    pub initial: QuenchSpec<T>,
    #[serde(rename = "final")]
    pub final_spec: QuenchSpec<T>,
    pub dim: usize,
    pub convergence_change: f64,
    pub mean_work: T,
    pub trace_mean_work: T,
    pub delta_f: T,
    pub jarzynski_average: T,
    pub jarzynski_expected: T,
    pub jarzynski_ratio: T,
    pub sigma: T,
    pub ift: T,
    pub normalization: T,
    pub distribution: WorkDistribution<T>,
}

/// Distance used by the truncation loop: largest change among the
/// normalization, the mean work and `<e^{-beta W}>`.
pub fn distribution_change<T: Real>(beta: T, a: &WorkDistribution<T>, b: &WorkDistribution<T>) -> f64 {
    let d_norm = to_f64((a.normalization() - b.normalization()).abs());
    let d_mean = to_f64((a.mean() - b.mean()).abs());
    let d_jar = to_f64((a.exp_average(beta) - b.exp_average(beta)).abs());
    d_norm.max(d_mean).max(d_jar)
}

/// Work distribution with the truncation chosen by `trunc`, plus every
/// scalar the fluctuation-theorem checks need.
pub fn analyze_quench<T: Real>(
    beta: T,
    initial: &QuenchSpec<T>,
    final_spec: &QuenchSpec<T>,
    trunc: &Truncation,
) -> Result<QuenchAnalysis<T>> {
    check_beta(beta)?;
    let d0 = diagonalize(initial)?;
    let dt = diagonalize(final_spec)?;
    let conv = converge(
        trunc,
        |dim| work_distribution(beta, &d0, &dt, dim),
        |a, b| distribution_change(beta, a, b),
    )?;
    let dist = conv.value;
    let delta_f = free_energy_change(beta, &d0, &dt)?;
    let jar = jarzynski_check(&dist, beta, delta_f);
    let ep = entropy_production(&dist, beta, delta_f);
    Ok(QuenchAnalysis {
        beta,
        initial: *initial,
        final_spec: *final_spec,
        dim: conv.dim,
        convergence_change: conv.change,
        mean_work: dist.mean(),
        trace_mean_work: trace_average_work(beta, &d0, &dt, conv.dim)?,
        delta_f,
        jarzynski_average: jar.average,
        jarzynski_expected: jar.expected,
        jarzynski_ratio: jar.ratio,
        sigma: ep.sigma,
        ift: ep.ift,
        normalization: dist.normalization(),
        distribution: dist,
    })
}

/// Relative-entropy form of the entropy production with the truncation
/// chosen by `trunc`.
pub fn relative_entropy_production_converged<T: Real>(
    beta: T,
    initial: &QuenchSpec<T>,
    final_spec: &QuenchSpec<T>,
    trunc: &Truncation,
) -> Result<(usize, T)> {
    let d0 = diagonalize(initial)?;
    let dt = diagonalize(final_spec)?;
    let conv = converge(
        trunc,
        |dim| relative_entropy_production(beta, &d0, &dt, dim),
        |a, b| to_f64((*a - *b).abs()),
    )?;
    Ok((conv.dim, conv.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    type S = QuenchSpec<f64>;

    fn diag(spec: S) -> DiagonalizedHamiltonian<f64> {
        diagonalize(&spec).unwrap()
    }

    /// `exp(G)` by scaling and squaring of a Taylor series.
    fn taylor_expm(g: &DMatrix<Complex<f64>>) -> DMatrix<Complex<f64>> {
        let norm: f64 = g.iter().map(|z| z.norm()).sum();
        let mut s = 0;
        while norm / 2f64.powi(s) > 0.1 {
            s += 1;
        }
        let gs = g / Complex::new(2f64.powi(s), 0.0);
        let d = g.nrows();
        let mut term = DMatrix::<Complex<f64>>::identity(d, d);
        let mut sum = term.clone();
        for k in 1..30 {
            term = &term * &gs / Complex::new(k as f64, 0.0);
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    fn ladder(d: usize) -> DMatrix<Complex<f64>> {
        DMatrix::from_fn(d, d, |i, j| if j == i + 1 { Complex::new((j as f64).sqrt(), 0.0) } else { Complex::new(0.0, 0.0) })
    }

    #[test]
    fn identity_quench() {
        let d = diag(S::new(1.0, 0.3, 0.4, 0.2, 0.1).unwrap());
        let tm = transition_matrix(&d, &d, 16).unwrap();
        for m in 0..16 {
            for n in 0..16 {
                assert_eq!(tm.prob(m, n), if m == n { 1.0 } else { 0.0 });
            }
        }
        let dist = work_distribution(1.0, &d, &d, 16).unwrap();
        assert_eq!(dist.atoms(), &[WorkAtom { work: 0.0, probability: dist.normalization() }]);
        assert_abs_diff_eq!(dist.normalization(), 1.0, epsilon = 1e-15);
        assert_eq!(average_work(&dist), 0.0);
        assert_abs_diff_eq!(jarzynski_average(&dist, 1.0), 1.0, epsilon = 1e-15);
        let ep = entropy_production(&dist, 1.0, 0.0);
        assert_abs_diff_eq!(ep.sigma, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ep.ift, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(relative_entropy_production(1.0, &d, &d, 32).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(trace_average_work(1.0, &d, &d, 32).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn squeeze_quench_parity() {
        let tm = transition_matrix(&diag(S::squeezed(1.0, 0.3)), &diag(S::squeezed(1.0, 0.1)), 64).unwrap();
        for m in 0..64 {
            for n in 0..64 {
                if (m + n) % 2 == 1 {
                    assert_eq!(tm.prob(m, n), 0.0);
                }
            }
        }
    }

    #[test]
    fn displacement_vacuum_column_is_poisson() {
        let tm = transition_matrix(&diag(S::bare(1.0)), &diag(S::driven(1.0, 0.5)), 64).unwrap();
        let a2: f64 = 0.25;
        let mut fact = 1.0;
        for m in 0..20 {
            if m > 0 {
                fact *= m as f64;
            }
            assert_abs_diff_eq!(tm.prob(m, 0), a2.powi(m as i32) * (-a2).exp() / fact, epsilon = 1e-14);
        }
    }

    #[test]
    fn displacement_quench_has_zero_mean_work() {
        let d0 = diag(S::bare(1.0));
        let d1 = diag(S::driven(1.0, 0.3));
        let dist = work_distribution(1.0, &d0, &d1, 64).unwrap();
        assert_abs_diff_eq!(dist.mean(), 0.0, epsilon = 1e-12);
        // lattice with spacing 1 offset by dC = -0.09
        for a in dist.atoms() {
            let k = a.work + 0.09;
            assert_abs_diff_eq!(k, k.round(), epsilon = 1e-12);
        }
    }

    #[test]
    fn jarzynski_matches_explicit_enumeration_at_dim8() {
        let dim = 8;
        let beta = 0.8;
        let s0 = S::new(1.0, 0.2, 0.3, 0.1, -0.4).unwrap();
        let s1 = S::new(1.0, 0.1, -1.0, 0.15, 0.9).unwrap();
        let (d0, d1) = (diag(s0), diag(s1));
        let dist = work_distribution(beta, &d0, &d1, dim).unwrap();
        // oracle: operators from Taylor series, explicit (m, n) double sum
        let a = ladder(dim);
        let ad = a.adjoint();
        let disp = |al: Complex<f64>| taylor_expm(&(&ad * al - &a * al.conj()));
        let sq = |r: f64, th: f64| {
            let g = (&a * &a * Complex::from_polar(1.0, -th) - &ad * &ad * Complex::from_polar(1.0, th)) * Complex::new(r / 2.0, 0.0);
            taylor_expm(&g)
        };
        let u = disp(d1.alpha()) * sq(d1.r(), d1.theta()) * sq(d0.r(), d0.theta()).adjoint() * disp(d0.alpha()).adjoint();
        let z: f64 = (0..dim).map(|n| (-beta * d0.energy(n)).exp()).sum();
        let mut want = 0.0;
        for n in 0..dim {
            for m in 0..dim {
                let p = (-beta * d0.energy(n)).exp() / z * u[(m, n)].norm_sqr();
                want += p * (-beta * (d1.energy(m) - d0.energy(n))).exp();
            }
        }
        assert_abs_diff_eq!(jarzynski_average(&dist, beta), want, epsilon = 1e-12);
    }

    #[test]
    fn grouping_merges_close_values() {
        let d = WorkDistribution::from_pairs(vec![(1.0, 0.25), (1.0 + 5e-10, 0.25), (2.0, 0.5), (3.0, 0.0)], 1e-9).unwrap();
        assert_eq!(d.len(), 2);
        assert_abs_diff_eq!(d.atoms()[0].work, 1.0 + 2.5e-10, epsilon = 1e-15);
        assert_abs_diff_eq!(d.atoms()[0].probability, 0.5, epsilon = 1e-15);
        assert!(WorkDistribution::from_pairs(vec![(1.0, -0.1)], 1e-9).is_err());
    }

    #[test]
    fn broadening_integrates_to_one() {
        let d = WorkDistribution::from_pairs(vec![(0.0, 0.4), (1.0, 0.6)], 1e-9).unwrap();
        let grid: Vec<f64> = (0..4001).map(|k| -5.0 + k as f64 * 0.0025).collect();
        let dens = d.broadened(0.1, &grid).unwrap();
        let integral: f64 = dens.iter().sum::<f64>() * 0.0025;
        assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-9);
        assert!(d.broadened(0.0, &grid).is_err());
    }

    #[test]
    fn total_variation_of_shifted_mass() {
        let a = WorkDistribution::from_pairs(vec![(0.0, 0.5), (1.0, 0.5)], 1e-9).unwrap();
        let b = WorkDistribution::from_pairs(vec![(0.0, 0.4), (1.0, 0.6)], 1e-9).unwrap();
        assert_abs_diff_eq!(a.total_variation(&b), 0.1, epsilon = 1e-15);
        assert_eq!(a.total_variation(&a), 0.0);
    }

    #[test]
    fn relative_entropy_row3() {
        let d0 = diag(S::bare(1.0));
        let d1 = diag(S::squeezed(1.0, 0.3));
        let s = relative_entropy_production(0.5, &d0, &d1, 256).unwrap();
        let df = free_energy_change(0.5, &d0, &d1).unwrap();
        assert_abs_diff_eq!(s, 0.5 * (0.0 - df), epsilon = 1e-6);
        assert!((s - 0.225).abs() <= 0.5 * 0.01);
    }

    #[test]
    fn unsqueezing_quench_mean_work_closed_form() {
        // <W> = gamma sinh(2r) coth(beta omega' / 2) for gamma: 0.3 -> 0
        let (beta, gamma) = (0.5, 0.3);
        let d0 = diag(S::squeezed(1.0, gamma));
        let d1 = diag(S::bare(1.0));
        let want = gamma * (2.0 * d0.r()).sinh() / (0.5 * beta * d0.omega_prime()).tanh();
        assert_abs_diff_eq!(want, 1.1399601517738809, epsilon = 1e-12);
        let dist = work_distribution(beta, &d0, &d1, 256).unwrap();
        assert_abs_diff_eq!(dist.mean(), want, epsilon = 1e-8);
        assert_abs_diff_eq!(trace_average_work(beta, &d0, &d1, 256).unwrap(), want, epsilon = 1e-8);
        // the published 0.92 is this expression with omega in place of omega'
        assert_abs_diff_eq!(gamma * 0.75 / (0.5 * beta).tanh(), 0.9187, epsilon = 1e-4);
        assert!((dist.mean() - 0.92).abs() > 0.2);
        let df = free_energy_change(beta, &d0, &d1).unwrap();
        let ep = entropy_production(&dist, beta, df);
        assert_abs_diff_eq!(ep.sigma, 0.5 * (want - df), epsilon = 1e-8);
        assert_abs_diff_eq!(ep.sigma, 0.34309927386, epsilon = 1e-8);
        assert_abs_diff_eq!(relative_entropy_production(beta, &d0, &d1, 256).unwrap(), ep.sigma, epsilon = 1e-6);
    }

    #[test]
    fn f32_work_distribution() {
        let d0 = diagonalize(&QuenchSpec::<f32>::bare(1.0)).unwrap();
        let d1 = diagonalize(&QuenchSpec::<f32>::driven(1.0, 0.3)).unwrap();
        let dist = work_distribution(1.0f32, &d0, &d1, 32).unwrap();
        assert!((dist.normalization() - 1.0).abs() < 1e-5);
        assert!(dist.mean().abs() < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn fluctuation_theorem_properties(
            beta in prop::sample::select(vec![0.5f64, 1.0, 2.0]),
            e0 in 0.0f64..0.5, l0 in -3.0f64..3.0, g0 in 0.0f64..0.4, p0 in -3.0f64..3.0,
            e1 in 0.0f64..0.5, l1 in -3.0f64..3.0, g1 in 0.0f64..0.4, p1 in -3.0f64..3.0,
        ) {
            let s0 = S::new(1.0, e0, l0, g0, p0).unwrap();
            let s1 = S::new(1.0, e1, l1, g1, p1).unwrap();
            let fwd = analyze_quench(beta, &s0, &s1, &Truncation::default()).unwrap();
            let bwd = analyze_quench(beta, &s1, &s0, &Truncation::default()).unwrap();
            prop_assert!((fwd.normalization - 1.0).abs() <= 1e-9);
            prop_assert!((fwd.jarzynski_average - fwd.jarzynski_expected).abs() <= 1e-6);
            prop_assert!((bwd.jarzynski_average - bwd.jarzynski_expected).abs() <= 1e-6);
            prop_assert!(fwd.mean_work - fwd.delta_f >= -1e-9);
            prop_assert!((fwd.mean_work - fwd.trace_mean_work).abs() <= 1e-8);
            prop_assert!((fwd.ift - 1.0).abs() <= 1e-6);
            prop_assert_eq!(fwd.delta_f, -bwd.delta_f);
            let atoms = fwd.distribution.atoms();
            prop_assert!(atoms.windows(2).all(|w| w[1].work - w[0].work > GROUPING_TOL));
            prop_assert!(atoms.iter().all(|a| a.probability >= 0.0));
        }

        #[test]
        fn grouping_keeps_separation(raw in prop::collection::vec((-3.0f64..3.0, 0.0f64..1.0), 1..60)) {
            let tol = 1e-2;
            let d = WorkDistribution::from_pairs(raw.clone(), tol).unwrap();
            let total: f64 = raw.iter().map(|p| p.1).sum();
            prop_assert!((d.normalization() - total).abs() <= 1e-12);
            prop_assert!(d.atoms().windows(2).all(|w| w[1].work - w[0].work > tol));
        }
    }
}
