//! One runner per experiment kind. Runners return artifacts and never
//! touch the filesystem.

use std::f64::consts::PI;

use qtherm::charfn::{
    default_alpha_grid, evaluate_charfn, reconstruct_from_modes, reconstruct_work_distribution, thermal_charfn,
};
use qtherm::oam::{oam_partition_function, oam_work_distribution, OamTransitions};
use qtherm::paraxial::{
    eigenphase_regression_family, gaussian_free_space, hg_mode, lg_mode, lg_mode_at, mode_overlap_matrix,
    postselected_transitions, split_step_propagate, FieldGrid,
};
use qtherm::photonic::{analytic_click_conditioning, demon_run, thermometer_discriminate, trial_rng, QubitState};
use qtherm::quench::{diagonalize, free_energy_change};
use qtherm::tpm::{analyze_quench, relative_entropy_production_converged, work_distribution};
use qtherm::{Truncation, WorkDistribution64};
use nalgebra::{Complex, DMatrix};
use rayon::prelude::*;
use serde_json::json;

use crate::config::*;
use crate::error::CliResult;
use crate::output::{Artifacts, Table};
use crate::table1::table1_suite;

/// Truncation of the charfn forward model when neither the params nor the
/// command line fix one.
pub const DEFAULT_CHARFN_DIM: usize = 128;
/// Samples per axis for the displaced-family OAM overlaps.
pub const OAM_OVERLAP_GRID: usize = 256;

pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<Artifacts> {
    match &cfg.experiment {
        Params::Table1(_) => run_table1(&cfg.truncation),
        Params::WorkDist(p) => run_work_dist(p, &cfg.truncation),
        Params::Charfn(p) => run_charfn(p, cfg),
        Params::Oam(p) => run_oam(p),
        Params::Demon(p) => run_demon(p, cfg.rng_seed.expect("validated")),
        Params::Thermometer(p) => run_thermometer(p, cfg.rng_seed.expect("validated")),
        Params::ParaxialCheck(p) => run_paraxial(p),
    }
}

fn distribution_table(name: &str, d: &WorkDistribution64) -> Table {
    let mut t = Table::new(name, &["work", "probability"]);
    for a in d.atoms() {
        t.push(vec![json!(a.work), json!(a.probability)]);
    }
    t
}

pub fn run_table1(trunc: &Truncation) -> CliResult<Artifacts> {
    let reports = table1_suite(trunc)?;
    let mut t = Table::new(
        "table1",
        &[
            "row", "beta", "eta_final", "gamma_initial", "gamma_final", "dim", "mean_work", "published_mean_work",
            "delta_f", "published_delta_f", "jarzynski", "published_jarzynski", "normalization",
            "published_normalization", "pass",
        ],
    );
    for r in &reports {
        t.push(vec![
            json!(r.label),
            json!(r.row.beta),
            json!(r.row.eta_final),
            json!(r.row.gamma_initial),
            json!(r.row.gamma_final),
            json!(r.dim),
            json!(r.computed.mean_work),
            json!(r.expected.mean_work),
            json!(r.computed.delta_f),
            json!(r.expected.delta_f),
            json!(r.computed.jarzynski),
            json!(r.expected.jarzynski),
            json!(r.computed.normalization),
            json!(r.expected.normalization),
            json!(r.checks.all()),
        ]);
    }
    let mut a = Artifacts::new(json!({ "rows": reports }))?;
    a.tables.push(t);
    Ok(a)
}

fn run_work_dist(p: &WorkDistParams, trunc: &Truncation) -> CliResult<Artifacts> {
    let analysis = analyze_quench(p.beta, &p.initial, &p.final_spec, trunc)?;
    let (re_dim, sigma_re) = relative_entropy_production_converged(p.beta, &p.initial, &p.final_spec, trunc)?;
    let d = &analysis.distribution;
    let mut a = Artifacts::new(json!({
        "dim": analysis.dim,
        "convergence_change": analysis.convergence_change,
        "mean_work": analysis.mean_work,
        "trace_mean_work": analysis.trace_mean_work,
        "delta_f": analysis.delta_f,
        "jarzynski_average": analysis.jarzynski_average,
        "jarzynski_expected": analysis.jarzynski_expected,
        "jarzynski_ratio": analysis.jarzynski_ratio,
        "sigma": analysis.sigma,
        "sigma_relative_entropy": sigma_re,
        "relative_entropy_dim": re_dim,
        "ift": analysis.ift,
        "normalization": analysis.normalization,
        "probability_below_delta_f": d.probability_below(analysis.delta_f),
        "atoms": d.len(),
    }))?;
    a.tables.push(distribution_table("distribution", d));
    if let (Some(width), Some(g)) = (p.broadening, p.grid) {
        let grid: Vec<f64> = (0..g.points).map(|k| g.min + (g.max - g.min) * k as f64 / (g.points - 1) as f64).collect();
        let dens = d.broadened(width, &grid)?;
        let mut t = Table::new("density", &["work", "density"]);
        for (w, v) in grid.iter().zip(dens) {
            t.push(vec![json!(w), json!(v)]);
        }
        a.tables.push(t);
    }
    Ok(a)
}

fn run_charfn(p: &CharfnParams, cfg: &ExperimentConfig) -> CliResult<Artifacts> {
    let dim = p.dim.or(cfg.dim_override).unwrap_or(DEFAULT_CHARFN_DIM);
    let d0 = diagonalize(&p.initial)?;
    let dt = diagonalize(&p.final_spec)?;
    let alphas = default_alpha_grid::<f64>(p.grid_points);
    let mut trace = thermal_charfn(p.beta, &d0, &dt, dim, &alphas)?;
    if p.background != trace.background() {
        let (i0, i90) = trace.intensities();
        let shift = p.background - trace.background();
        let i0: Vec<f64> = i0.iter().map(|x| x + shift).collect();
        let i90: Vec<f64> = i90.iter().map(|x| x + shift).collect();
        trace = qtherm::charfn::CharFnTrace::from_intensities(alphas.clone(), &i0, &i90, p.background)?;
    }
    let measured = match p.noise_sigma {
        Some(s) if s > 0.0 => trace.with_gaussian_noise(s, cfg.rng_seed.expect("validated"))?,
        _ => trace.clone(),
    };
    let rec = match p.method {
        ReconstructionMethod::Modes => reconstruct_from_modes(&measured)?,
        ReconstructionMethod::Candidates => {
            reconstruct_work_distribution(&measured, p.candidate_works.as_deref().expect("validated"))?
        }
    };
    let exact = work_distribution(p.beta, &d0, &dt, dim)?;
    let delta_f = free_energy_change(p.beta, &d0, &dt)?;
    let g_beta = evaluate_charfn(&rec.distribution, Complex::new(0.0, p.beta));
    let g0 = trace.values()[0];
    let max_abs = trace.values().iter().fold(0.0f64, |m, g| m.max(g.norm()));

    let mut a = Artifacts::new(json!({
        "dim": dim,
        "samples": alphas.len(),
        "modes": trace.modes().len(),
        "g_at_zero": [g0.re, g0.im],
        "max_abs_g": max_abs,
        "residual_norm": rec.residual_norm,
        "condition": rec.condition,
        "raw_mass": rec.raw_mass,
        "max_atom_deviation": rec.distribution.max_atom_deviation(&exact),
        "total_variation": rec.distribution.total_variation(&exact),
        "reconstructed_exp_average": g_beta.re,
        "expected_exp_average": (-p.beta * delta_f).exp(),
        "delta_f": delta_f,
    }))?;
    let (i0, i90) = measured.intensities();
    let mut t = Table::new("trace", &["alpha", "re_g", "im_g", "intensity_0", "intensity_pi_2"]);
    for k in 0..alphas.len() {
        let g = measured.values()[k];
        t.push(vec![json!(alphas[k]), json!(g.re), json!(g.im), json!(i0[k]), json!(i90[k])]);
    }
    a.tables.push(t);
    let mut r = Table::new("reconstruction", &["work", "probability", "tpm_probability"]);
    for atom in rec.distribution.atoms() {
        r.push(vec![json!(atom.work), json!(atom.probability), json!(exact.probability_at(atom.work))]);
    }
    a.tables.push(r);
    Ok(a)
}

/// `|<LG_l'(d), LG_l(0)>|^2` over `p = 0` modes, post-selected on the family.
pub fn displaced_transitions(l_max: usize, displacement: f64) -> CliResult<OamTransitions> {
    let window = 2.0 * (6.0 + displacement);
    let grid = FieldGrid::for_waist(1.0, OAM_OVERLAP_GRID, window)?;
    let ls: Vec<i64> = (-(l_max as i64)..=l_max as i64).collect();
    let a: Vec<FieldGrid> = ls.par_iter().map(|&l| lg_mode(l, 0, 1.0, &grid)).collect::<qtherm::Result<_>>()?;
    let b: Vec<FieldGrid> =
        ls.par_iter().map(|&l| lg_mode_at(l, 0, 1.0, (displacement, 0.0), &grid)).collect::<qtherm::Result<_>>()?;
    let overlaps = mode_overlap_matrix(&a, &b)?;
    Ok(OamTransitions::new(l_max, postselected_transitions(&overlaps)?)?)
}

fn run_oam(p: &OamParams) -> CliResult<Artifacts> {
    let n = 2 * p.l_max + 1;
    let transitions = match &p.transitions {
        TransitionSource::Identity {} => OamTransitions::identity(p.l_max),
        TransitionSource::Uniform {} => OamTransitions::new(p.l_max, DMatrix::from_element(n, n, 1.0 / n as f64))?,
        TransitionSource::Displaced { displacement } => displaced_transitions(p.l_max, *displacement)?,
        TransitionSource::Entries { entries } => OamTransitions::from_entries(p.l_max, entries)?,
    };
    let z = oam_partition_function(p.beta, p.l_max)?;
    let printed = p.beta.exp() * (0.5 * p.beta).tanh();
    let d = oam_work_distribution(p.beta, p.l_max, &transitions)?;
    let row_defect = transitions.matrix().row_iter().fold(0.0f64, |m, r| m.max((r.sum() - 1.0).abs()));
    let mut a = Artifacts::new(json!({
        "partition_direct": z.direct,
        "partition_closed_form": z.closed_form,
        "partition_printed_form": printed,
        "printed_form_times_direct": printed * z.direct,
        "discrepancy": "the printed closed form e^{beta} tanh(beta/2) is the reciprocal of the direct sum e^{-beta} coth(beta/2)",
        "mean_work": d.mean(),
        "exp_average": d.exp_average(p.beta),
        "doubly_stochastic_defect": row_defect,
        "normalization": d.normalization(),
    }))?;
    a.tables.push(distribution_table("distribution", &d));
    let mut t = Table::new("transitions", &["l_in", "l_out", "probability"]);
    for e in transitions.entries() {
        t.push(vec![json!(e.l_in), json!(e.l_out), json!(e.probability)]);
    }
    a.tables.push(t);
    Ok(a)
}

fn run_demon(p: &DemonParams, seed: u64) -> CliResult<Artifacts> {
    let config = demon_config(p, seed);
    let stats = demon_run(&config)?;
    let analytic = analytic_click_conditioning(p.n_bar, p.bs_reflectivity, p.detector_efficiency).ok();
    let oracle_z = match (analytic, stats.transmitted_given_click) {
        (Some((_, t)), Some(e)) => Some(e.z_against(t)),
        _ => None,
    };
    let mut a = Artifacts::new(json!({
        "stats": &stats,
        "analytic_click_probability": analytic.map(|x| x.0),
        "analytic_transmitted_given_click": analytic.map(|x| x.1),
        "oracle_z": oracle_z,
    }))?;
    let mut t = Table::new("histograms", &["transmitted", "given_click", "given_no_click"]);
    for (k, (c, n)) in stats.histogram_click.iter().zip(&stats.histogram_no_click).enumerate() {
        t.push(vec![json!(k), json!(c), json!(n)]);
    }
    a.tables.push(t);
    Ok(a)
}

fn qubit(input: QubitInput) -> QubitState {
    match input {
        QubitInput::V => QubitState::vertical(),
        QubitInput::H => QubitState::horizontal(),
        QubitInput::Plus => QubitState::plus(),
    }
}

fn run_thermometer(p: &ThermometerParams, seed: u64) -> CliResult<Artifacts> {
    let mut rows = Vec::new();
    let mut t = Table::new(
        "thermometer",
        &["input", "p", "signal", "population_success", "helstrom_success", "measured_success", "measured_std_error"],
    );
    for (i, input) in p.inputs.iter().enumerate() {
        for (j, &pv) in p.p_values.iter().enumerate() {
            let mut rng = trial_rng(seed, (i * p.p_values.len() + j) as u64);
            let r = thermometer_discriminate(&qubit(*input), pv, p.q_hot, p.q_cold, p.shots, &mut rng)?;
            let name = serde_json::to_value(input)?;
            t.push(vec![
                name.clone(),
                json!(pv),
                json!(r.signal),
                json!(r.population_success),
                json!(r.helstrom_success),
                json!(r.measured_success.mean),
                json!(r.measured_success.std_error),
            ]);
            rows.push(json!({ "input": name, "report": r }));
        }
    }
    let mut a = Artifacts::new(json!({ "rows": rows }))?;
    a.tables.push(t);
    Ok(a)
}

fn run_paraxial(p: &ParaxialParams) -> CliResult<Artifacts> {
    let m = p.medium;
    let w = m.matched_waist()?;
    let grid = FieldGrid::for_waist(w, p.grid, p.window_waists)?;
    m.check_positive_on(&grid)?;
    let z = m.z_for_angle(p.angle)?;
    let blocks = 8;
    let per_block = ((z / m.max_step(&grid)) / blocks as f64).ceil() as usize;
    let dz = z / (blocks * per_block) as f64;
    let modes: Vec<FieldGrid> =
        (0..=p.max_mode).into_par_iter().map(|n| hg_mode(n, 0, w, &grid)).collect::<qtherm::Result<_>>()?;
    let fits: Vec<(usize, qtherm::paraxial::EigenphaseFit)> =
        eigenphase_regression_family(&modes, &m, dz, per_block, blocks)?.into_iter().enumerate().collect();
    let mut t = Table::new("eigenphases", &["n", "energy", "expected", "relative_error", "min_overlap"]);
    let mut worst = 0.0f64;
    for (n, f) in &fits {
        let want = *n as f64 + 1.0;
        let rel = (f.energy - want).abs() / want;
        worst = worst.max(rel);
        t.push(vec![json!(n), json!(f.energy), json!(want), json!(rel), json!(f.min_overlap)]);
    }

    let u0 = lg_mode(0, 0, w, &grid)?;
    let u = split_step_propagate(&u0, &m, m.max_step(&grid), p.norm_steps)?;
    let norm_drift = (u.power() - u0.power()).abs() / u0.power();

    let fs = p.free_space;
    let fgrid = FieldGrid::for_waist(fs.w0, p.grid, p.window_waists)?;
    let f0 = fgrid.like(|x, y| gaussian_free_space(fs.w0, fs.k0, 0.0, x, y));
    let zr = fs.k0 * fs.w0 * fs.w0 / 4.0;
    let fz = qtherm::paraxial::free_propagate(&f0, fs.k0, zr)?;
    let want = fgrid.like(|x, y| gaussian_free_space(fs.w0, fs.k0, zr, x, y));
    let free_error = fz.samples().iter().zip(want.samples()).fold(0.0f64, |e, (a, b)| e.max((a - b).norm()))
        / want.peak_intensity().sqrt();

    let mut a = Artifacts::new(json!({
        "waist": w,
        "hbar_omega": m.hbar_omega(),
        "dz": dz,
        "steps": blocks * per_block,
        "max_relative_phase_error": worst,
        "norm_steps": p.norm_steps,
        "norm_drift": norm_drift,
        "free_space_error": free_error,
        "angle_over_pi": p.angle / PI,
    }))?;
    a.tables.push(t);
    if p.snapshots {
        let top = hg_mode(p.max_mode, 0, w, &grid)?;
        let prop = split_step_propagate(&top, &m, dz, blocks * per_block)?;
        for (name, field) in [("mode_in", &top), ("mode_out", &prop), ("free_space_out", &fz)] {
            let mut raw = Vec::new();
            field.write_raw(&mut raw)?;
            let mut pgm = Vec::new();
            field.write_pgm(&mut pgm)?;
            a.files.push((format!("{name}.raw"), raw));
            a.files.push((format!("{name}.pgm"), pgm));
        }
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Overrides;

    fn run(text: &str) -> Artifacts {
        run_experiment(&ExperimentConfig::from_toml_str(text, &Overrides::default()).unwrap()).unwrap()
    }

    #[test]
    fn work_dist_density_integrates_to_one() {
        let a = run(
            "kind = \"work_dist\"\n[params]\nbeta = 1.0\nbroadening = 0.1\n[params.initial]\n[params.final]\neta_mag = 0.3\n\
             [params.grid]\nmin = -6.0\nmax = 8.0\npoints = 1401\n",
        );
        let dens = &a.tables[1];
        let dw = 14.0 / 1400.0;
        let mass: f64 = dens.rows.iter().map(|r| r[1].as_f64().unwrap()).sum::<f64>() * dw;
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
        assert!((a.results["ift"].as_f64().unwrap() - 1.0).abs() < 1e-9);
        let s = a.results["sigma"].as_f64().unwrap();
        assert!((s - a.results["sigma_relative_entropy"].as_f64().unwrap()).abs() < 1e-9);
    }

    #[test]
    fn oam_uniform_channel_is_unital() {
        let a = run("kind = \"oam\"\n[params]\nbeta = 1.0\nl_max = 5\n[params.transitions]\nkind = \"uniform\"\n");
        assert!((a.results["exp_average"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(a.tables[1].rows.len(), 121);
    }

    #[test]
    fn displaced_transitions_are_column_stochastic() {
        let t = displaced_transitions(3, 0.5).unwrap();
        for c in t.matrix().column_iter() {
            assert!((c.sum() - 1.0).abs() < 1e-12);
        }
        assert!(t.prob(0, 0) > t.prob(1, 0));
        let id = displaced_transitions(3, 0.0).unwrap();
        assert!((id.prob(2, 2) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn charfn_candidates_with_noise_is_reproducible() {
        let text = "kind = \"charfn\"\nrng_seed = 3\n[params]\nbeta = 1.0\ndim = 48\ngrid_points = 512\nmethod = \"candidates\"\n\
                    noise_sigma = 1e-3\ncandidate_works = [-2.09, -1.09, -0.09, 0.91, 1.91, 2.91]\n[params.initial]\n[params.final]\neta_mag = 0.3\n";
        let a = run(text);
        assert_eq!(a.results, run(text).results);
        assert!(a.results["total_variation"].as_f64().unwrap() < 1e-2);
    }
}
