//! Interferometric measurement of the work characteristic function
//! `G(alpha) = sum_{m,n} p^0_n |c_{m,n}|^2 e^{i (E^tau_m - E^0_n) alpha}`
//! and reconstruction of `P(W)` from sampled traces.
//!
//! The upper arm applies the fractional Fourier transform of the initial
//! Hamiltonian before the process, the lower arm applies the process first
//! and then the transform of the final Hamiltonian. Their cross term at the
//! output carries `G`; a quarter-wave path difference selects `Im G`.
//!
//! Work frequencies `E^tau_m - E^0_n` are incommensurate once the two
//! spectra have different gaps, so `P(W)` is recovered by a non-negative fit
//! onto known candidate work values rather than a discrete inverse transform.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nnls::nnls;
use crate::quench::{check_beta, spectrum, DiagonalizedHamiltonian};
use crate::scalar::{cis, cplx, from_usize, lit, polar, to_f64, Real};
use crate::tpm::{default_grouping_tol, transition_matrix, WorkDistribution};
use crate::fock::thermal_populations;

/// Input modes lighter than this are not sent through the interferometer.
pub const MODE_CUTOFF: f64 = 1e-8;

/// Allowed column-norm defect of a process matrix.
pub const PROCESS_TOL: f64 = 1e-6;

/// Default number of uniform samples on `[0, 2 pi)`.
pub const DEFAULT_GRID_POINTS: usize = 1024;

/// Default constant offset `A` of the simulated intensities.
pub const DEFAULT_BACKGROUND: f64 = 1.0;

/// Largest accepted condition number of the fit's Gram matrix.
pub const MAX_CONDITION: f64 = 1e10;

/// Uniform grid of `points` angles on `[0, 2 pi)`.
pub fn default_alpha_grid<T: Real>(points: usize) -> Vec<T> {
    (0..points)
        .map(|k| T::two_pi() * from_usize::<T>(k) / from_usize::<T>(points))
        .collect()
}

/// Free-space lens geometry realising a fractional Fourier transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrftGeometry<T> {
    pub alpha: T,
    pub focal_length: T,
    /// `2 f sin^2(alpha / 2)`.
    pub z_alpha: T,
}

pub fn frft_geometry<T: Real>(alpha: T, focal_length: T) -> Result<FrftGeometry<T>> {
    if !alpha.is_finite() || alpha < T::zero() || alpha > T::two_pi() {
        return Err(invalid("alpha", "transform angle must lie in [0, 2 pi]"));
    }
    if !focal_length.is_finite() || focal_length <= T::zero() {
        return Err(invalid("focal_length", "focal length must be positive"));
    }
    let s = (alpha * lit(0.5)).sin();
    Ok(FrftGeometry { alpha, focal_length, z_alpha: lit::<T>(2.0) * focal_length * s * s })
}

/// Diagonal of `V_alpha`: `e^{-i alpha e_n}`.
pub fn frft_phase_action<T: Real>(spectrum: &[T], alpha: T) -> Vec<Complex<T>> {
    spectrum.iter().map(|&e| cis(-(alpha * e))).collect()
}

/// Path difference between the interferometer arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseOffset {
    /// Zero path difference: the output carries `Re G`.
    InPhase,
    /// Quarter-wave path difference: the output carries `Im G`.
    Quadrature,
}

impl PhaseOffset {
    fn phase<T: Real>(self) -> T {
        match self {
            PhaseOffset::InPhase => T::zero(),
            PhaseOffset::Quadrature => T::frac_pi_2(),
        }
    }
}

/// Output intensity for input mode `n` at transform angle `alpha`.
///
/// `coeffs[(m, n)] = c_{m,n}` is the process in the energy bases, `spectrum0`
/// and `spectrum_tau` are the spectra used by the transforms in the two arms.
pub fn interferometer_intensity<T: Real>(
    n: usize,
    coeffs: &DMatrix<Complex<T>>,
    spectrum0: &[T],
    spectrum_tau: &[T],
    alpha: T,
    offset: PhaseOffset,
    background: T,
) -> Result<T> {
    let dim = coeffs.nrows();
    if n >= coeffs.ncols() || spectrum0.len() <= n || spectrum_tau.len() < dim {
        return Err(invalid("coeffs", "mode index or spectra inconsistent with the process matrix"));
    }
    let col_norm = coeffs.column(n).iter().fold(T::zero(), |acc, c| acc + c.norm_sqr());
    if (col_norm - T::one()).abs() > lit(PROCESS_TOL) {
        return Err(Error::ProcessValidity(format!(
            "column {n} has squared norm {}, expected 1",
            to_f64(col_norm)
        )));
    }
    let input_phase = cis(-(alpha * spectrum0[n]));
    let out_phases = frft_phase_action(&spectrum_tau[..dim], alpha);
    let mut cross = cplx(T::zero(), T::zero());
    for m in 0..dim {
        let upper = coeffs[(m, n)] * input_phase;
        let lower = out_phases[m] * coeffs[(m, n)];
        cross += upper * lower.conj();
    }
    Ok(background + (cross * cis(-offset.phase::<T>())).re)
}

/// Characteristic function restricted to one input mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTrace<T> {
    pub mode: usize,
    /// Renormalized thermal weight over the kept modes.
    pub weight: T,
    /// `G_n(alpha) = sum_m |c_{m,n}|^2 e^{i (E^tau_m - E^0_n) alpha}`.
    pub values: Vec<Complex<T>>,
    /// `E^tau_m - E^0_n` for every output level `m` the process can reach
    /// from `n`; levels with an exactly vanishing amplitude (parity
    /// selection under pure squeezing) are left out.
    pub candidates: Vec<T>,
}

/// Samples of `G` on a grid of transform angles.
#[derive(Debug, Clone, PartialEq)]
pub struct CharFnTrace<T> {
    alphas: Vec<T>,
    values: Vec<Complex<T>>,
    background: T,
    modes: Vec<ModeTrace<T>>,
}

impl<T: Real> CharFnTrace<T> {
    pub fn new(alphas: Vec<T>, values: Vec<Complex<T>>, background: T) -> Result<Self> {
        if alphas.len() != values.len() || alphas.is_empty() {
            return Err(invalid("values", "need one non-empty sample per angle"));
        }
        Ok(Self { alphas, values, background, modes: Vec::new() })
    }

    /// Reassembles `G = (I_0 - A) + i (I_{pi/2} - A)` from the two outputs.
    pub fn from_intensities(alphas: Vec<T>, in_phase: &[T], quadrature: &[T], background: T) -> Result<Self> {
        if in_phase.len() != alphas.len() || quadrature.len() != alphas.len() {
            return Err(invalid("intensities", "need one intensity pair per angle"));
        }
        let values = in_phase
            .iter()
            .zip(quadrature)
            .map(|(&r, &i)| cplx(r - background, i - background))
            .collect();
        Self::new(alphas, values, background)
    }

    pub fn alphas(&self) -> &[T] {
        &self.alphas
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn background(&self) -> T {
        self.background
    }

    pub fn modes(&self) -> &[ModeTrace<T>] {
        &self.modes
    }

    /// `(A + Re G, A + Im G)` per sample.
    pub fn intensities(&self) -> (Vec<T>, Vec<T>) {
        self.values
            .iter()
            .map(|g| (self.background + g.re, self.background + g.im))
            .unzip()
    }

    /// Copy with `noise(k)` added to the in-phase and quadrature intensity of
    /// sample `k`; per-mode traces are dropped.
    pub fn with_intensity_noise(&self, mut noise: impl FnMut() -> (T, T)) -> Self {
        let values = self
            .values
            .iter()
            .map(|g| {
                let (a, b) = noise();
                cplx(g.re + a, g.im + b)
            })
            .collect();
        Self { alphas: self.alphas.clone(), values, background: self.background, modes: Vec::new() }
    }

    /// Independent `N(0, sigma^2)` noise on both intensities of every
    /// sample, drawn from a ChaCha8 stream keyed by `seed`.
    pub fn with_gaussian_noise(&self, sigma: T, seed: u64) -> Result<Self> {
        let normal = Normal::new(0.0, to_f64(sigma)).map_err(|e| invalid("sigma", e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(self.with_intensity_noise(|| (lit(normal.sample(&mut rng)), lit(normal.sample(&mut rng)))))
    }
}

/// `G(z) = sum p e^{i w z}` for a complex evaluation point; `z = i beta`
/// gives `<e^{-beta W}>`.
pub fn evaluate_charfn<T: Real>(dist: &WorkDistribution<T>, z: Complex<T>) -> Complex<T> {
    dist.atoms().iter().fold(cplx(T::zero(), T::zero()), |acc, a| {
        acc + polar(a.probability * (-(a.work * z.im)).exp(), a.work * z.re)
    })
}

/// Thermal characteristic function assembled from the per-mode traces of
/// every input mode heavier than [`MODE_CUTOFF`].
pub fn thermal_charfn<T: Real>(
    beta: T,
    diag0: &DiagonalizedHamiltonian<T>,
    diag_tau: &DiagonalizedHamiltonian<T>,
    dim: usize,
    alphas: &[T],
) -> Result<CharFnTrace<T>> {
    check_beta(beta)?;
    if alphas.is_empty() || alphas.iter().any(|a| !a.is_finite()) {
        return Err(invalid("alphas", "need a non-empty grid of finite angles"));
    }
    let e0 = spectrum(diag0, dim)?;
    let et = spectrum(diag_tau, dim)?;
    let pops = thermal_populations(beta, &e0)?;
    let tm = transition_matrix(diag0, diag_tau, dim)?;
    let cutoff: T = lit(MODE_CUTOFF);
    let kept: Vec<usize> = (0..dim).filter(|&n| pops.probs()[n] >= cutoff).collect();
    let kept_mass = kept.iter().fold(T::zero(), |acc, &n| acc + pops.probs()[n]);
    let modes: Vec<ModeTrace<T>> = kept
        .par_iter()
        .map(|&n| {
            let reachable: Vec<(T, T)> = (0..dim)
                .filter(|&m| tm.prob(m, n) != T::zero())
                .map(|m| (et[m] - e0[n], tm.prob(m, n)))
                .collect();
            let values = alphas
                .iter()
                .map(|&a| {
                    reachable
                        .iter()
                        .fold(cplx(T::zero(), T::zero()), |acc, &(w, p)| acc + cis(w * a).scale(p))
                })
                .collect();
            let candidates = reachable.into_iter().map(|(w, _)| w).collect();
            ModeTrace { mode: n, weight: pops.probs()[n] / kept_mass, values, candidates }
        })
        .collect();
    let values = (0..alphas.len())
        .into_par_iter()
        .map(|k| {
            modes
                .iter()
                .fold(cplx(T::zero(), T::zero()), |acc, md| acc + md.values[k].scale(md.weight))
        })
        .collect();
    Ok(CharFnTrace {
        alphas: alphas.to_vec(),
        values,
        background: lit(DEFAULT_BACKGROUND),
        modes,
    })
}

/// Reconstructed distribution and fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction<T> {
    pub distribution: WorkDistribution<T>,
    /// Euclidean residual of the stacked `[Re; Im]` system (summed in
    /// quadrature over modes for the per-mode fit).
    pub residual_norm: T,
    /// Largest Gram-matrix condition number among the fits.
    pub condition: T,
    /// Probability mass before renormalization.
    pub raw_mass: T,
}

struct Fit<T> {
    weights: Vec<T>,
    residual: T,
    condition: T,
}

/// Non-negative fit of `values` onto `e^{i w alpha}` for each candidate `w`.
fn fit_candidates<T: Real>(alphas: &[T], values: &[Complex<T>], candidates: &[T]) -> Result<Fit<T>> {
    let k = candidates.len();
    if k == 0 {
        return Err(invalid("candidate_works", "no candidate work values"));
    }
    if alphas.len() < 4 * k {
        return Err(invalid(
            "trace",
            format!("{} samples cannot resolve {} candidates; need at least 4x", alphas.len(), k),
        ));
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| candidates[a].partial_cmp(&candidates[b]).expect("finite candidates"));
    let closest = order
        .windows(2)
        .map(|w| (candidates[w[0]], candidates[w[1]]))
        .min_by(|a, b| (a.1 - a.0).partial_cmp(&(b.1 - b.0)).expect("finite gaps"));
    if let Some((lo, hi)) = closest {
        if hi - lo <= default_grouping_tol::<T>() {
            return Err(Error::Conditioning { first: to_f64(lo), second: to_f64(hi) });
        }
    }
    let s = alphas.len();
    let a = DMatrix::from_fn(2 * s, k, |row, j| {
        let phase = candidates[j] * alphas[row % s];
        if row < s { phase.cos() } else { phase.sin() }
    });
    let b = DVector::from_fn(2 * s, |row, _| if row < s { values[row].re } else { values[row - s].im });
    let gram = a.transpose() * &a;
    let eig = SymmetricEigen::new(gram).eigenvalues;
    let (lo, hi) = eig.iter().fold((T::max_value().unwrap_or(T::one()), T::zero()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let condition = if lo > T::zero() { hi / lo } else { T::max_value().unwrap_or(hi) };
    if !(to_f64(condition) <= MAX_CONDITION) {
        let (first, second) = closest.map(|(x, y)| (to_f64(x), to_f64(y))).unwrap_or((f64::NAN, f64::NAN));
        return Err(Error::Conditioning { first, second });
    }
    let sol = nnls(&a, &b)?;
    Ok(Fit { weights: sol.x.iter().copied().collect(), residual: sol.residual_norm, condition })
}

/// Fits the combined trace onto `candidate_works`.
pub fn reconstruct_work_distribution<T: Real>(
    trace: &CharFnTrace<T>,
    candidate_works: &[T],
) -> Result<Reconstruction<T>> {
    let fit = fit_candidates(trace.alphas(), trace.values(), candidate_works)?;
    let raw = WorkDistribution::from_pairs(
        candidate_works.iter().copied().zip(fit.weights.iter().copied()),
        default_grouping_tol(),
    )?;
    finish(raw, fit.residual, fit.condition)
}

/// Fits every per-mode trace onto its own candidates `E^tau_m - E^0_n` and
/// recombines with the thermal weights.
pub fn reconstruct_from_modes<T: Real>(trace: &CharFnTrace<T>) -> Result<Reconstruction<T>> {
    if trace.modes().is_empty() {
        return Err(invalid("trace", "trace carries no per-mode data"));
    }
    let fits: Vec<Result<(usize, Fit<T>)>> = trace
        .modes()
        .par_iter()
        .enumerate()
        .map(|(i, md)| fit_candidates(trace.alphas(), &md.values, &md.candidates).map(|f| (i, f)))
        .collect();
    let mut pairs = Vec::new();
    let mut residual_sq = T::zero();
    let mut condition = T::zero();
    for fit in fits {
        let (i, fit) = fit?;
        let md = &trace.modes()[i];
        residual_sq += fit.residual * fit.residual;
        condition = condition.max(fit.condition);
        pairs.extend(md.candidates.iter().zip(&fit.weights).map(|(&w, &x)| (w, md.weight * x)));
    }
    let raw = WorkDistribution::from_pairs(pairs, default_grouping_tol())?;
    finish(raw, residual_sq.sqrt(), condition)
}

fn finish<T: Real>(raw: WorkDistribution<T>, residual_norm: T, condition: T) -> Result<Reconstruction<T>> {
    let raw_mass = raw.normalization();
    if !(raw_mass > T::zero()) {
        return Err(Error::ProcessValidity("fit returned no probability mass".into()));
    }
    Ok(Reconstruction { distribution: raw.renormalized(), residual_norm, condition, raw_mass })
}

/// Periodogram estimate of the work frequencies present in a trace: local
/// maxima of the Hann-tapered amplitude `|sum_k h_k G(alpha_k) e^{-i w alpha_k}| / sum_k h_k`
/// above `threshold` on a uniform `w` grid from `w_min` to `w_max`.
///
/// A peak height approximates the probability of that work value once the
/// angle window is long against the spacing of neighbouring work values.
pub fn estimate_candidates<T: Real>(trace: &CharFnTrace<T>, w_min: T, w_max: T, step: T, threshold: T) -> Result<Vec<T>> {
    if !(step > T::zero()) || !(w_max > w_min) {
        return Err(invalid("step", "need a positive step and w_max > w_min"));
    }
    let count = to_f64((w_max - w_min) / step).floor() as usize + 1;
    let len = trace.alphas().len();
    let taper: Vec<T> = (0..len)
        .map(|k| {
            let x = T::two_pi() * from_usize::<T>(k) / from_usize::<T>(len);
            lit::<T>(0.5) * (T::one() - x.cos())
        })
        .collect();
    let norm = taper.iter().fold(T::zero(), |acc, &h| acc + h);
    let power: Vec<T> = (0..count)
        .into_par_iter()
        .map(|k| {
            let w = w_min + step * from_usize::<T>(k);
            let s = trace
                .alphas()
                .iter()
                .zip(trace.values())
                .zip(&taper)
                .fold(cplx(T::zero(), T::zero()), |acc, ((&a, &g), &h)| acc + g * cis(-(w * a)).scale(h));
            s.norm_sqr().sqrt() / norm
        })
        .collect();
    let mut peaks = Vec::new();
    for k in 0..count {
        let left = if k == 0 { T::zero() } else { power[k - 1] };
        let right = if k + 1 == count { T::zero() } else { power[k + 1] };
        if power[k] > threshold && power[k] >= left && power[k] > right {
            peaks.push(w_min + step * from_usize::<T>(k));
        }
    }
    Ok(peaks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quench::{diagonalize, QuenchSpec};
    use crate::tpm::{transition_matrix, work_distribution};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    type S = QuenchSpec<f64>;

    #[test]
    fn geometry_examples() {
        assert_abs_diff_eq!(frft_geometry(PI / 2.0, 1.0).unwrap().z_alpha, 1.0, epsilon = 1e-15);
        assert_eq!(frft_geometry(0.0, 1.0).unwrap().z_alpha, 0.0);
        assert_abs_diff_eq!(frft_geometry(PI, 0.25).unwrap().z_alpha, 0.5, epsilon = 1e-15);
        assert!(frft_geometry(7.0, 1.0).is_err());
        assert!(frft_geometry(1.0, 0.0).is_err());
    }

    #[test]
    fn phase_action_examples() {
        let spec: Vec<f64> = (0..6).map(|n| n as f64 + 0.5).collect();
        assert!(frft_phase_action(&spec, 0.0).iter().all(|&z| z == Complex::new(1.0, 0.0)));
        for z in frft_phase_action(&spec, 2.0 * PI) {
            assert_abs_diff_eq!(z.re, -1.0, epsilon = 1e-13);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn identity_process_intensity() {
        let c = DMatrix::<Complex<f64>>::identity(4, 4);
        let e: Vec<f64> = (0..4).map(|n| n as f64 + 0.5).collect();
        for alpha in [0.0, 0.3, 2.0] {
            let i = interferometer_intensity(1, &c, &e, &e, alpha, PhaseOffset::InPhase, 1.0).unwrap();
            assert_abs_diff_eq!(i, 2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn non_normalized_process_rejected() {
        let c = DMatrix::<Complex<f64>>::identity(3, 3) * Complex::new(0.9, 0.0);
        let e = [0.5, 1.5, 2.5];
        assert!(matches!(
            interferometer_intensity(0, &c, &e, &e, 0.1, PhaseOffset::InPhase, 1.0),
            Err(Error::ProcessValidity(_))
        ));
    }

    #[test]
    fn interferometer_matches_direct_sum_for_squeeze() {
        let dim = 32;
        let d0 = diagonalize(&S::bare(1.0)).unwrap();
        let d1 = diagonalize(&S::squeezed(1.0, 0.3)).unwrap();
        let tm = transition_matrix(&d0, &d1, dim).unwrap();
        let e0 = spectrum(&d0, dim).unwrap();
        let et = spectrum(&d1, dim).unwrap();
        for n in 0..4 {
            for alpha in [0.0, 0.37, 1.9, 4.4] {
                let direct: Complex<f64> = (0..dim)
                    .map(|m| Complex::from_polar(tm.prob(m, n), (et[m] - e0[n]) * alpha))
                    .sum();
                let re = interferometer_intensity(n, tm.amplitudes(), &e0, &et, alpha, PhaseOffset::InPhase, 1.0).unwrap();
                let im = interferometer_intensity(n, tm.amplitudes(), &e0, &et, alpha, PhaseOffset::Quadrature, 1.0).unwrap();
                assert_abs_diff_eq!(re - 1.0, direct.re, epsilon = 1e-12);
                assert_abs_diff_eq!(im - 1.0, direct.im, epsilon = 1e-12);
                if alpha == 0.0 {
                    assert_abs_diff_eq!(re, 2.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn thermal_trace_properties() {
        let d0 = diagonalize(&S::bare(1.0)).unwrap();
        let d1 = diagonalize(&S::new(1.0, 0.2, 0.5, 0.25, -0.3).unwrap()).unwrap();
        let mut alphas: Vec<f64> = (0..64).map(|k| k as f64 * 0.1).collect();
        alphas.extend(alphas.clone().iter().map(|a| -a));
        let trace = thermal_charfn(1.0, &d0, &d1, 64, &alphas).unwrap();
        assert_abs_diff_eq!(trace.values()[0].re, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(trace.values()[0].im, 0.0, epsilon = 1e-9);
        for k in 0..64 {
            let (g, gm) = (trace.values()[k], trace.values()[64 + k]);
            assert!((g - gm.conj()).norm() < 1e-12);
            assert!(g.norm() <= 1.0 + 1e-9);
        }
        let (i0, i90) = trace.intensities();
        let back = CharFnTrace::from_intensities(alphas.clone(), &i0, &i90, trace.background()).unwrap();
        for (a, b) in back.values().iter().zip(trace.values()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn identity_quench_trace_and_reconstruction() {
        let d = diagonalize(&S::squeezed(1.0, 0.2)).unwrap();
        let alphas = default_alpha_grid::<f64>(DEFAULT_GRID_POINTS);
        let trace = thermal_charfn(1.0, &d, &d, 32, &alphas).unwrap();
        assert!(trace.values().iter().all(|g| (g - Complex::new(1.0, 0.0)).norm() < 1e-12));
        let rec = reconstruct_work_distribution(&trace, &[0.0]).unwrap();
        assert_eq!(rec.distribution.len(), 1);
        assert_eq!(rec.distribution.atoms()[0].work, 0.0);
        assert_abs_diff_eq!(rec.distribution.atoms()[0].probability, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn imaginary_point_gives_jarzynski() {
        let beta = 0.7;
        let d0 = diagonalize(&S::bare(1.0)).unwrap();
        let d1 = diagonalize(&S::new(1.0, 0.3, 0.2, 0.2, 0.4).unwrap()).unwrap();
        let dist = work_distribution(beta, &d0, &d1, 128).unwrap();
        let g = evaluate_charfn(&dist, Complex::new(0.0, beta));
        // explicit sum oracle
        let want: f64 = dist.atoms().iter().map(|a| a.probability * (-beta * a.work).exp()).sum();
        assert_abs_diff_eq!(g.re, want, epsilon = 1e-14);
        assert_abs_diff_eq!(g.im, 0.0, epsilon = 1e-14);
        let df = crate::quench::free_energy_change(beta, &d0, &d1).unwrap();
        assert_abs_diff_eq!(g.re, (-beta * df).exp(), epsilon = 1e-9);
    }

    #[test]
    fn duplicate_candidates_rejected() {
        let alphas = default_alpha_grid::<f64>(64);
        let trace = CharFnTrace::new(alphas.clone(), vec![Complex::new(1.0, 0.0); 64], 1.0).unwrap();
        match reconstruct_work_distribution(&trace, &[0.0, 1.0, 1.0 + 1e-12]) {
            Err(Error::Conditioning { first, second }) => {
                assert_eq!(first, 1.0);
                assert_eq!(second, 1.0 + 1e-12);
            }
            other => panic!("expected conditioning error, got {other:?}"),
        }
        // resolvable in principle but ill-conditioned on this window
        assert!(matches!(
            reconstruct_work_distribution(&trace, &[0.0, 1e-6]),
            Err(Error::Conditioning { .. })
        ));
        assert!(reconstruct_work_distribution(&trace, &(0..20).map(|k| k as f64).collect::<Vec<_>>()).is_err());
    }

    #[test]
    fn periodogram_finds_displacement_lattice() {
        let d0 = diagonalize(&S::bare(1.0)).unwrap();
        let d1 = diagonalize(&S::driven(1.0, 0.5)).unwrap();
        // window long against the unit lattice spacing
        let alphas: Vec<f64> = (0..1024).map(|k| k as f64 * 0.05).collect();
        let trace = thermal_charfn(1.0, &d0, &d1, 64, &alphas).unwrap();
        let exact = work_distribution(1.0, &d0, &d1, 64).unwrap();
        let peaks = estimate_candidates(&trace, -4.0, 4.0, 0.01, 0.05).unwrap();
        for p in &peaks {
            assert!(exact.atoms().iter().any(|a| (a.work - p).abs() < 0.006), "spurious peak {p}");
        }
        for a in exact.atoms().iter().filter(|a| a.probability > 0.1) {
            assert!(peaks.iter().any(|p| (a.work - p).abs() < 0.006), "missed {}", a.work);
        }
    }

    fn lattice(shift: f64, k: i32) -> Vec<f64> {
        (-k..=k).map(|j| j as f64 + shift).collect()
    }

    #[test]
    fn displacement_reconstruction_matches_tpm() {
        let d0 = diagonalize(&S::bare(1.0)).unwrap();
        let d1 = diagonalize(&S::driven(1.0, 0.3)).unwrap();
        let alphas = default_alpha_grid::<f64>(DEFAULT_GRID_POINTS);
        let trace = thermal_charfn(1.0, &d0, &d1, 64, &alphas).unwrap();
        let exact = work_distribution(1.0, &d0, &d1, 64).unwrap();
        let rec = reconstruct_work_distribution(&trace, &lattice(-0.09, 40)).unwrap();
        assert!(rec.distribution.max_atom_deviation(&exact) < 1e-6);
        assert!(rec.residual_norm < 1e-6);
        let modes = reconstruct_from_modes(&trace).unwrap();
        assert!(modes.distribution.max_atom_deviation(&exact) < 1e-6);
    }

    #[test]
    fn squeeze_reconstruction_from_modes() {
        let beta = 0.5;
        let d0 = diagonalize(&S::bare(1.0)).unwrap();
        let d1 = diagonalize(&S::squeezed(1.0, 0.3)).unwrap();
        let alphas = default_alpha_grid::<f64>(DEFAULT_GRID_POINTS);
        let trace = thermal_charfn(beta, &d0, &d1, 128, &alphas).unwrap();
        let exact = work_distribution(beta, &d0, &d1, 128).unwrap();
        let rec = reconstruct_from_modes(&trace).unwrap();
        assert!(rec.distribution.max_atom_deviation(&exact) < 1e-6, "{}", rec.distribution.max_atom_deviation(&exact));
        assert!(rec.condition < MAX_CONDITION);
    }

    #[test]
    fn noisy_displacement_reconstruction() {
        let d0 = diagonalize(&S::bare(1.0)).unwrap();
        let d1 = diagonalize(&S::driven(1.0, 0.3)).unwrap();
        let alphas = default_alpha_grid::<f64>(DEFAULT_GRID_POINTS);
        let trace = thermal_charfn(1.0, &d0, &d1, 64, &alphas).unwrap();
        let exact = work_distribution(1.0, &d0, &d1, 64).unwrap();
        for seed in 0..5 {
            let noisy = trace.with_gaussian_noise(1e-3, seed).unwrap();
            let rec = reconstruct_work_distribution(&noisy, &lattice(-0.09, 40)).unwrap();
            let tv = rec.distribution.total_variation(&exact);
            assert!(tv < 1e-2, "seed {seed}: tv {tv}");
        }
    }
}
