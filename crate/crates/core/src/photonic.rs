//! Monte Carlo photonic Maxwell demon and a single-qubit GAD thermometer.
//!
//! Demon arms carry single-mode Bose-Einstein light. Each beam splitter
//! sends a photon to the click detector with probability `r`; the click
//! detector is a bucket detector after binomial efficiency thinning. The
//! photodiode signal is the transmitted photon number.
//!
//! Qubit basis: `|0> = |H>` is excited, `|1> = |V>` is ground.

use nalgebra::{Complex, Matrix2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Allowed defect of trace, hermiticity and positivity of a qubit state.
pub const QUBIT_TOL: f64 = 1e-10;

/// Bins of the conditional photon-number histograms; the last bin collects
/// every larger count.
pub const HISTOGRAM_BINS: usize = 64;

/// Trials handed to one rayon task.
const CHUNK: u64 = 1 << 14;

fn bose_einstein(n_bar: f64) -> Result<Geometric> {
    if !(n_bar >= 0.0) || !n_bar.is_finite() {
        return Err(invalid("n_bar", "mean photon number must be finite and non-negative"));
    }
    Geometric::new(1.0 / (1.0 + n_bar)).map_err(|e| invalid("n_bar", e.to_string()))
}

/// One draw from `P(n) = n_bar^n / (1 + n_bar)^{n + 1}`.
pub fn thermal_photon_sample<R: Rng + ?Sized>(n_bar: f64, rng: &mut R) -> Result<u64> {
    Ok(bose_einstein(n_bar)?.sample(rng))
}

/// `P(n)` of the Bose-Einstein distribution.
pub fn thermal_photon_probability(n_bar: f64, n: u64) -> f64 {
    let x = n_bar / (1.0 + n_bar);
    (n as f64 * x.ln()).exp() / (1.0 + n_bar)
}

fn check_probability(name: &'static str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(name, "must lie in [0, 1]"));
    }
    Ok(())
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p == 0.0 {
        return 0;
    }
    if p == 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("probability checked by caller").sample(rng)
}

/// Binomial split of `n` photons: `(transmitted, reflected)`.
pub fn beam_splitter_partition<R: Rng + ?Sized>(n: u64, reflectivity: f64, rng: &mut R) -> Result<(u64, u64)> {
    check_probability("reflectivity", reflectivity)?;
    let reflected = binomial(n, reflectivity, rng);
    Ok((n - reflected, reflected))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemonConfig {
    pub n_bar: f64,
    pub bs_reflectivity: f64,
    pub detector_efficiency: f64,
    pub trials: u64,
    pub rng_seed: u64,
}

impl DemonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.n_bar > 0.0) || !self.n_bar.is_finite() {
            return Err(Error::InvalidConfig("n_bar must be positive and finite".into()));
        }
        if !(self.bs_reflectivity > 0.0 && self.bs_reflectivity < 1.0) {
            return Err(Error::InvalidConfig("bs_reflectivity must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.detector_efficiency) {
            return Err(Error::InvalidConfig("detector_efficiency must lie in [0, 1]".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be positive".into()));
        }
        Ok(())
    }
}

/// The stream of trial `index`; independent of how trials are scheduled.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Everything sampled in one demon trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemonTrial {
    pub photons: [u64; 2],
    pub transmitted: [u64; 2],
    pub reflected: [u64; 2],
    pub detected: [u64; 2],
    pub clicks: [bool; 2],
}

impl DemonTrial {
    /// `+1` for a click in arm 1 only, `-1` for a click in arm 2 only,
    /// `0` for two clicks or none.
    pub fn polarity(&self) -> i64 {
        match self.clicks {
            [true, false] => 1,
            [false, true] => -1,
            _ => 0,
        }
    }

    pub fn intensity_difference(&self) -> i64 {
        self.transmitted[0] as i64 - self.transmitted[1] as i64
    }
}

/// Samples trial `index` of `config`. Assumes a validated config.
pub fn demon_trial(config: &DemonConfig, index: u64) -> DemonTrial {
    let mut rng = trial_rng(config.rng_seed, index);
    let source = bose_einstein(config.n_bar).expect("validated n_bar");
    let mut t = DemonTrial {
        photons: [0; 2],
        transmitted: [0; 2],
        reflected: [0; 2],
        detected: [0; 2],
        clicks: [false; 2],
    };
    for arm in 0..2 {
        let n = source.sample(&mut rng);
        let reflected = binomial(n, config.bs_reflectivity, &mut rng);
        let detected = binomial(reflected, config.detector_efficiency, &mut rng);
        t.photons[arm] = n;
        t.transmitted[arm] = n - reflected;
        t.reflected[arm] = reflected;
        t.detected[arm] = detected;
        t.clicks[arm] = detected > 0;
    }
    t
}

/// Exact integer sums; merging is associative so the result does not
/// depend on the thread schedule.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct Sums {
    trials: u64,
    // pooled over both arms
    photons: [u128; 4],
    transmitted: [u128; 2],
    click_count: u64,
    click_transmitted: [u128; 2],
    diff: [i128; 2],
    charge_events: u64,
    charge: [i128; 2],
    hist_click: Vec<u64>,
    hist_no_click: Vec<u64>,
}

impl Sums {
    fn new() -> Self {
        Self { hist_click: vec![0; HISTOGRAM_BINS], hist_no_click: vec![0; HISTOGRAM_BINS], ..Self::default() }
    }

    fn add(&mut self, t: &DemonTrial) {
        self.trials += 1;
        for arm in 0..2 {
            let n = t.photons[arm] as u128;
            self.photons[0] += n;
            self.photons[1] += n * n;
            self.photons[2] += n * n * n;
            self.photons[3] += n * n * n * n;
            let tr = t.transmitted[arm] as u128;
            self.transmitted[0] += tr;
            self.transmitted[1] += tr * tr;
            let bin = (t.transmitted[arm] as usize).min(HISTOGRAM_BINS - 1);
            if t.clicks[arm] {
                self.click_count += 1;
                self.click_transmitted[0] += tr;
                self.click_transmitted[1] += tr * tr;
                self.hist_click[bin] += 1;
            } else {
                self.hist_no_click[bin] += 1;
            }
        }
        let d = t.intensity_difference() as i128;
        self.diff[0] += d;
        self.diff[1] += d * d;
        let pol = t.polarity() as i128;
        if pol != 0 {
            self.charge_events += 1;
            self.charge[0] += pol * d;
            self.charge[1] += d * d;
        }
    }

    fn merge(mut self, o: Self) -> Self {
        self.trials += o.trials;
        for k in 0..4 {
            self.photons[k] += o.photons[k];
        }
        for k in 0..2 {
            self.transmitted[k] += o.transmitted[k];
            self.click_transmitted[k] += o.click_transmitted[k];
            self.diff[k] += o.diff[k];
            self.charge[k] += o.charge[k];
        }
        self.click_count += o.click_count;
        self.charge_events += o.charge_events;
        for b in 0..HISTOGRAM_BINS {
            self.hist_click[b] += o.hist_click[b];
            self.hist_no_click[b] += o.hist_no_click[b];
        }
        self
    }
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
}

impl Estimate {
    fn from_sums(s1: f64, s2: f64, n: u64) -> Option<Self> {
        if n < 2 {
            return None;
        }
        let nf = n as f64;
        let mean = s1 / nf;
        let var = ((s2 - s1 * mean) / (nf - 1.0)).max(0.0);
        Some(Self { mean, std_error: (var / nf).sqrt(), samples: n })
    }

    /// `(mean - value) / std_error`.
    pub fn z_against(&self, value: f64) -> f64 {
        (self.mean - value) / self.std_error
    }
}

/// Aggregated demon statistics. Per-arm quantities are pooled over both
/// arms, which are identically distributed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemonStats {
    pub config: DemonConfig,
    /// Photon number per arm before the beam splitter.
    pub photon_mean: Estimate,
    /// `<n(n-1)> / <n>^2` of the source with a delta-method error.
    pub g2: Estimate,
    /// Photodiode signal `I_1 - I_2` over all trials.
    pub unconditional_difference: Estimate,
    pub transmitted_mean: Estimate,
    /// Transmitted photons in an arm whose detector clicked.
    pub transmitted_given_click: Option<Estimate>,
    /// `(E[t | click] - E[t]) / sqrt(se_click^2 + se_all^2)`.
    pub click_excess_z: Option<f64>,
    /// `polarity * (I_1 - I_2)` over trials with exactly one click.
    pub conditional_difference: Option<Estimate>,
    /// `sum polarity * (I_1 - I_2)`.
    pub charge: i64,
    pub click_probability: f64,
    /// True when no detector ever clicked.
    pub degenerate: bool,
    pub histogram_click: Vec<u64>,
    pub histogram_no_click: Vec<u64>,
}

pub fn demon_run(config: &DemonConfig) -> Result<DemonStats> {
    config.validate()?;
    let chunks = config.trials.div_ceil(CHUNK);
    let sums = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut s = Sums::new();
            for i in c * CHUNK..((c + 1) * CHUNK).min(config.trials) {
                s.add(&demon_trial(config, i));
            }
            s
        })
        .reduce(Sums::new, Sums::merge);
    Ok(stats_from_sums(*config, &sums))
}

fn g2_estimate(p: &[u128; 4], n: u64) -> Estimate {
    let nf = n as f64;
    let m1 = p[0] as f64 / nf;
    let m2 = p[1] as f64 / nf;
    let m3 = p[2] as f64 / nf;
    let m4 = p[3] as f64 / nf;
    // X = n(n-1), Y = n
    let mx = m2 - m1;
    let var_x = (m4 - 2.0 * m3 + m2) - mx * mx;
    let var_y = m2 - m1 * m1;
    let cov = (m3 - m2) - mx * m1;
    let g = mx / (m1 * m1);
    let var_g = var_x / m1.powi(4) + 4.0 * mx * mx * var_y / m1.powi(6) - 4.0 * mx * cov / m1.powi(5);
    Estimate { mean: g, std_error: (var_g.max(0.0) / nf).sqrt(), samples: n }
}

fn stats_from_sums(config: DemonConfig, s: &Sums) -> DemonStats {
    let arm_samples = 2 * s.trials;
    let photon_mean = Estimate::from_sums(s.photons[0] as f64, s.photons[1] as f64, arm_samples)
        .unwrap_or(Estimate { mean: s.photons[0] as f64 / arm_samples as f64, std_error: f64::NAN, samples: arm_samples });
    let g2 = g2_estimate(&s.photons, arm_samples);
    let unconditional_difference = Estimate::from_sums(s.diff[0] as f64, s.diff[1] as f64, s.trials)
        .unwrap_or(Estimate { mean: s.diff[0] as f64, std_error: f64::NAN, samples: s.trials });
    let transmitted_mean = Estimate::from_sums(s.transmitted[0] as f64, s.transmitted[1] as f64, arm_samples)
        .unwrap_or(Estimate { mean: s.transmitted[0] as f64 / arm_samples as f64, std_error: f64::NAN, samples: arm_samples });
    let transmitted_given_click =
        Estimate::from_sums(s.click_transmitted[0] as f64, s.click_transmitted[1] as f64, s.click_count);
    let click_excess_z = transmitted_given_click
        .map(|c| (c.mean - transmitted_mean.mean) / c.std_error.hypot(transmitted_mean.std_error));
    let conditional_difference = Estimate::from_sums(s.charge[0] as f64, s.charge[1] as f64, s.charge_events);
    DemonStats {
        config,
        photon_mean,
        g2,
        unconditional_difference,
        transmitted_mean,
        transmitted_given_click,
        click_excess_z,
        conditional_difference,
        charge: s.charge[0] as i64,
        click_probability: s.click_count as f64 / arm_samples as f64,
        degenerate: s.click_count == 0,
        histogram_click: s.hist_click.clone(),
        histogram_no_click: s.hist_no_click.clone(),
    }
}

/// `(P(click), E[t | click])` per arm by direct summation over the photon
/// number until the remaining Bose-Einstein tail is below `1e-16`.
pub fn analytic_click_conditioning(n_bar: f64, reflectivity: f64, efficiency: f64) -> Result<(f64, f64)> {
    bose_einstein(n_bar)?;
    check_probability("reflectivity", reflectivity)?;
    check_probability("efficiency", efficiency)?;
    let x = n_bar / (1.0 + n_bar);
    let keep = 1.0 - reflectivity * efficiency;
    // given no click, each photon is transmitted with probability (1 - r) / keep
    let t_frac = if keep > 0.0 { (1.0 - reflectivity) / keep } else { 0.0 };
    let mut p_none = 0.0;
    let mut t_none = 0.0;
    let mut pn = 1.0 / (1.0 + n_bar);
    let mut tail = 1.0;
    let mut n = 0u64;
    while tail > 1e-16 && n < 100_000 {
        let none = pn * keep.powi(n as i32);
        p_none += none;
        t_none += none * n as f64 * t_frac;
        tail -= pn;
        pn *= x;
        n += 1;
    }
    let p_click = 1.0 - p_none;
    if !(p_click > 0.0) {
        return Err(Error::InvalidParameter { name: "efficiency", reason: "no click is ever recorded".into() });
    }
    let t_all = n_bar * (1.0 - reflectivity);
    Ok((p_click, (t_all - t_none) / p_click))
}

/// Density matrix of a polarization qubit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState {
    rho: Matrix2<Complex<f64>>,
}

impl QubitState {
    pub fn from_matrix(rho: Matrix2<Complex<f64>>) -> Result<Self> {
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > QUBIT_TOL || tr.im.abs() > QUBIT_TOL {
            return Err(Error::StateValidity(format!("trace {tr} differs from 1")));
        }
        if (rho - rho.adjoint()).iter().any(|z| z.norm() > QUBIT_TOL) {
            return Err(Error::StateValidity("density matrix is not Hermitian".into()));
        }
        let det = (rho[(0, 0)] * rho[(1, 1)] - rho[(0, 1)] * rho[(1, 0)]).re;
        if det < -QUBIT_TOL || rho[(0, 0)].re < -QUBIT_TOL || rho[(1, 1)].re < -QUBIT_TOL {
            return Err(Error::StateValidity("density matrix is not positive".into()));
        }
        Ok(Self { rho })
    }

    /// `|psi> = a|0> + b|1>`, normalized.
    pub fn pure(a: Complex<f64>, b: Complex<f64>) -> Result<Self> {
        let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(invalid("amplitudes", "state vector must be finite and non-zero"));
        }
        let (a, b) = (a / norm, b / norm);
        Ok(Self { rho: Matrix2::new(a * a.conj(), a * b.conj(), b * a.conj(), b * b.conj()) })
    }

    /// `|H> = |0>`, excited.
    pub fn horizontal() -> Self {
        Self::pure(Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)).expect("unit vector")
    }

    /// `|V> = |1>`, ground.
    pub fn vertical() -> Self {
        Self::pure(Complex::new(0.0, 0.0), Complex::new(1.0, 0.0)).expect("unit vector")
    }

    /// `(|0> + |1>) / sqrt 2`.
    pub fn plus() -> Self {
        Self::pure(Complex::new(1.0, 0.0), Complex::new(1.0, 0.0)).expect("unit vector")
    }

    /// From a Bloch vector of length at most 1.
    pub fn from_bloch(v: Vector3<f64>) -> Result<Self> {
        if v.norm() > 1.0 + QUBIT_TOL {
            return Err(Error::StateValidity("Bloch vector longer than 1".into()));
        }
        let h = 0.5;
        Self::from_matrix(Matrix2::new(
            Complex::new(h * (1.0 + v.z), 0.0),
            Complex::new(h * v.x, -h * v.y),
            Complex::new(h * v.x, h * v.y),
            Complex::new(h * (1.0 - v.z), 0.0),
        ))
    }

    pub fn matrix(&self) -> &Matrix2<Complex<f64>> {
        &self.rho
    }

    pub fn bloch_vector(&self) -> Vector3<f64> {
        let r = &self.rho;
        Vector3::new(2.0 * r[(0, 1)].re, -2.0 * r[(0, 1)].im, (r[(0, 0)] - r[(1, 1)]).re)
    }

    pub fn excited_population(&self) -> f64 {
        self.rho[(0, 0)].re
    }

    pub fn ground_population(&self) -> f64 {
        self.rho[(1, 1)].re
    }

    /// Ground minus excited population.
    pub fn population_difference(&self) -> f64 {
        self.ground_population() - self.excited_population()
    }

    /// Trace norm `||self - other||_1`.
    pub fn trace_distance_norm(&self, other: &Self) -> f64 {
        let d = self.rho - other.rho;
        let a = 0.5 * (d[(0, 0)].re - d[(1, 1)].re);
        2.0 * a.hypot(d[(0, 1)].norm())
    }
}

/// Kraus operators: decay `E0, E1` weighted by `q`, excitation `E2, E3`
/// weighted by `1 - q`.
pub fn gad_kraus(p: f64, q: f64) -> Result<[Matrix2<Complex<f64>>; 4]> {
    check_probability("p", p)?;
    check_probability("q", q)?;
    let c = |x: f64| Complex::new(x, 0.0);
    let z = c(0.0);
    let (sq, sr) = (q.sqrt(), (1.0 - q).sqrt());
    let (sp, sd) = (p.sqrt(), (1.0 - p).sqrt());
    Ok([
        Matrix2::new(c(sq * sd), z, z, c(sq)),
        Matrix2::new(z, z, c(sq * sp), z),
        Matrix2::new(c(sr), z, z, c(sr * sd)),
        Matrix2::new(z, c(sr * sp), z, z),
    ])
}

pub fn gad_channel(rho: &QubitState, p: f64, q: f64) -> Result<QubitState> {
    let out = gad_kraus(p, q)?.iter().fold(Matrix2::zeros(), |acc, k| acc + k * rho.rho * k.adjoint());
    Ok(QubitState { rho: out })
}

/// Hot-versus-cold discrimination after interaction strength `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermometerReport {
    pub p: f64,
    pub population_difference_hot: f64,
    pub population_difference_cold: f64,
    /// `|D_hot - D_cold|`, the population-difference signal.
    pub signal: f64,
    /// Best single-shot success from a population measurement.
    pub population_success: f64,
    /// `1/2 + ||rho_hot - rho_cold||_1 / 4`.
    pub helstrom_success: f64,
    /// Shot-limited success estimate of the population strategy.
    pub measured_success: Estimate,
}

/// Each shot picks a bath at random, measures the output population once
/// and guesses the bath with the larger likelihood of that outcome.
pub fn thermometer_discriminate<R: Rng + ?Sized>(
    input: &QubitState,
    p: f64,
    q_hot: f64,
    q_cold: f64,
    shots: u64,
    rng: &mut R,
) -> Result<ThermometerReport> {
    if shots < 2 {
        return Err(invalid("shots", "need at least two shots"));
    }
    let hot = gad_channel(input, p, q_hot)?;
    let cold = gad_channel(input, p, q_cold)?;
    let (g_hot, g_cold) = (hot.ground_population(), cold.ground_population());
    let signal = (hot.population_difference() - cold.population_difference()).abs();
    let population_success = 0.5 + 0.5 * (g_hot - g_cold).abs();
    let helstrom_success = 0.5 + 0.25 * hot.trace_distance_norm(&cold);
    let mut correct = 0u64;
    for _ in 0..shots {
        let is_hot = rng.random::<bool>();
        let g = if is_hot { g_hot } else { g_cold };
        let ground = rng.random::<f64>() < g;
        let (l_hot, l_cold) = if ground { (g_hot, g_cold) } else { (1.0 - g_hot, 1.0 - g_cold) };
        let guess_hot = if l_hot == l_cold { rng.random::<bool>() } else { l_hot > l_cold };
        correct += u64::from(guess_hot == is_hot);
    }
    let measured = correct as f64 / shots as f64;
    Ok(ThermometerReport {
        p,
        population_difference_hot: hot.population_difference(),
        population_difference_cold: cold.population_difference(),
        signal,
        population_success,
        helstrom_success,
        measured_success: Estimate {
            mean: measured,
            std_error: (measured * (1.0 - measured) / shots as f64).sqrt(),
            samples: shots,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn config(trials: u64, eff: f64) -> DemonConfig {
        DemonConfig { n_bar: 2.0, bs_reflectivity: 0.05, detector_efficiency: eff, trials, rng_seed: 7 }
    }

    #[test]
    fn sampler_edges() {
        let mut rng = trial_rng(1, 0);
        for _ in 0..100 {
            assert_eq!(thermal_photon_sample(0.0, &mut rng).unwrap(), 0);
            assert_eq!(beam_splitter_partition(0, 0.3, &mut rng).unwrap(), (0, 0));
            assert_eq!(beam_splitter_partition(17, 0.0, &mut rng).unwrap(), (17, 0));
        }
        assert!(thermal_photon_sample(-1.0, &mut rng).is_err());
        assert!(beam_splitter_partition(3, 1.5, &mut rng).is_err());
        let total: f64 = (0..400).map(|n| thermal_photon_probability(2.0, n)).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn splitter_mean() {
        let mut rng = trial_rng(3, 0);
        let n = 100_000u64;
        let sum: u64 = (0..n).map(|_| beam_splitter_partition(100, 0.05, &mut rng).unwrap().1).sum();
        let sigma = (100.0 * 0.05 * 0.95 / n as f64).sqrt();
        assert!((sum as f64 / n as f64 - 5.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn invalid_configs() {
        assert!(demon_run(&config(0, 0.5)).is_err());
        let mut c = config(10, 0.5);
        c.bs_reflectivity = 1.0;
        assert!(matches!(demon_run(&c), Err(Error::InvalidConfig(_))));
        c.bs_reflectivity = 0.1;
        c.n_bar = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_efficiency_is_degenerate() {
        let s = demon_run(&config(5_000, 0.0)).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.charge, 0);
        assert!(s.transmitted_given_click.is_none());
        assert!(s.conditional_difference.is_none());
    }

    #[test]
    fn replay_matches_aggregate() {
        let c = config(40_000, 0.6);
        let s = demon_run(&c).unwrap();
        let mut charge = 0i64;
        let mut clicks = 0u64;
        for i in 0..c.trials {
            let t = demon_trial(&c, i);
            assert_eq!(t.photons[0], t.transmitted[0] + t.reflected[0]);
            charge += match (t.clicks[0], t.clicks[1]) {
                (true, false) => t.intensity_difference(),
                (false, true) => -t.intensity_difference(),
                _ => 0,
            };
            clicks += t.clicks.iter().filter(|&&k| k).count() as u64;
        }
        assert_eq!(s.charge, charge);
        assert_eq!(s.click_probability, clicks as f64 / (2 * c.trials) as f64);
        assert_eq!(s, demon_run(&c).unwrap());
        assert_eq!(s.histogram_click.iter().sum::<u64>(), clicks);
    }

    #[test]
    fn analytic_conditioning_closed_form() {
        // generating-function closed forms
        let (nb, r, e) = (2.0, 0.05, 0.7);
        let (pc, tc) = analytic_click_conditioning(nb, r, e).unwrap();
        let s = r * e;
        assert_abs_diff_eq!(pc, 1.0 - 1.0 / (1.0 + nb * s), epsilon = 1e-13);
        let x = nb / (1.0 + nb);
        let keep = 1.0 - s;
        let t_none = (1.0 - r) / keep * x * keep / ((1.0 - x * keep).powi(2) * (1.0 + nb));
        assert_abs_diff_eq!(tc, (nb * (1.0 - r) - t_none) / pc, epsilon = 1e-12);
        assert!(tc > nb * (1.0 - r));
    }

    #[test]
    fn gad_examples() {
        let plus = QubitState::plus();
        let id = gad_channel(&plus, 0.0, 0.3).unwrap();
        assert!((id.matrix() - plus.matrix()).norm() < 1e-15);
        for s in [QubitState::horizontal(), QubitState::vertical(), plus] {
            let out = gad_channel(&s, 1.0, 1.0).unwrap();
            assert!((out.matrix() - QubitState::vertical().matrix()).norm() < 1e-15);
            let out = gad_channel(&s, 1.0, 0.3).unwrap();
            assert_abs_diff_eq!(out.excited_population(), 0.7, epsilon = 1e-15);
            assert_abs_diff_eq!(out.ground_population(), 0.3, epsilon = 1e-15);
            assert!(out.matrix()[(0, 1)].norm() < 1e-15);
        }
        assert!(gad_channel(&plus, 1.2, 0.3).is_err());
        // completeness
        let k = gad_kraus(0.37, 0.61).unwrap();
        let sum = k.iter().fold(Matrix2::<Complex<f64>>::zeros(), |acc, m| acc + m.adjoint() * m);
        assert!((sum - Matrix2::identity()).norm() < 1e-15);
    }

    #[test]
    fn thermometer_examples() {
        let mut rng = trial_rng(11, 0);
        let r = thermometer_discriminate(&QubitState::plus(), 0.0, 0.2, 0.8, 10_000, &mut rng).unwrap();
        assert_eq!(r.signal, 0.0);
        assert_eq!(r.population_success, 0.5);
        assert_abs_diff_eq!(r.helstrom_success, 0.5, epsilon = 1e-15);
        let inputs = [QubitState::vertical(), QubitState::horizontal(), QubitState::plus()];
        for p in [0.05, 0.3, 0.9] {
            let reps: Vec<ThermometerReport> = inputs
                .iter()
                .map(|s| thermometer_discriminate(s, p, 0.2, 0.8, 200_000, &mut rng).unwrap())
                .collect();
            for r in &reps {
                assert_abs_diff_eq!(r.signal, reps[0].signal, epsilon = 1e-14);
                assert_abs_diff_eq!(r.signal, 2.0 * p * 0.6, epsilon = 1e-14);
                assert_abs_diff_eq!(r.helstrom_success, r.population_success, epsilon = 1e-14);
                assert!(r.measured_success.z_against(r.population_success).abs() < 4.0);
            }
        }
    }

    #[test]
    fn non_unital_gad_can_lengthen_bloch_vector() {
        let mixed = QubitState::from_bloch(Vector3::zeros()).unwrap();
        let out = gad_channel(&mixed, 0.5, 0.9).unwrap();
        assert_abs_diff_eq!(out.bloch_vector().norm(), 0.5 * 0.8, epsilon = 1e-15);
    }

    fn bloch() -> impl Strategy<Value = Vector3<f64>> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, 0.0f64..1.0)
            .prop_filter("non-zero", |(x, y, z, _)| x * x + y * y + z * z > 1e-6)
            .prop_map(|(x, y, z, len)| Vector3::new(x, y, z).normalize() * len)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn gad_is_trace_preserving_and_contracting(v in bloch(), p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
            let s = QubitState::from_bloch(v).unwrap();
            let out = gad_channel(&s, p, q).unwrap();
            prop_assert!((out.matrix().trace() - Complex::new(1.0, 0.0)).norm() < 1e-12);
            prop_assert!(QubitState::from_matrix(*out.matrix()).is_ok());
            // the fixed point (1 - 2q) z-hat is the contraction centre
            let c = Vector3::new(0.0, 0.0, 1.0 - 2.0 * q);
            prop_assert!((out.bloch_vector() - c).norm() <= (v - c).norm() + 1e-12);
            let unital = gad_channel(&s, p, 0.5).unwrap();
            prop_assert!(unital.bloch_vector().norm() <= v.norm() + 1e-12);
        }
    }
}
