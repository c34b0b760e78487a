//! Internal identities that must hold for any correct build.

use std::fmt;

use nalgebra::Complex;
use qtherm::charfn::{default_alpha_grid, thermal_charfn};
use qtherm::oam::{oam_partition_function, oam_work_distribution, OamTransitions};
use qtherm::paraxial::{hg_mode, FieldGrid};
use qtherm::photonic::{gad_channel, QubitState};
use qtherm::quench::diagonalize;
use qtherm::tpm::analyze_quench;
use qtherm::{displacement_operator, squeezing_operator, Truncation};

use crate::table1::ROWS;

#[derive(Debug, Clone)]
pub struct SelftestLine {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for SelftestLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn line(name: &'static str, value: f64, tol: f64) -> SelftestLine {
    SelftestLine { name, passed: value.is_finite() && value <= tol, detail: format!("deviation {value:.3e} (tol {tol:.0e})") }
}

fn failed(name: &'static str, err: impl fmt::Display) -> SelftestLine {
    SelftestLine { name, passed: false, detail: err.to_string() }
}

fn check(name: &'static str, tol: f64, f: impl FnOnce() -> qtherm::Result<f64>) -> SelftestLine {
    match f() {
        Ok(v) => line(name, v, tol),
        Err(e) => failed(name, e),
    }
}

pub fn run_selftest() -> Vec<SelftestLine> {
    vec![
        check("displacement unitarity", 1e-10, || {
            Ok(displacement_operator(Complex::new(0.7, -0.4), 60)?.unitarity_deviation(30))
        }),
        check("squeezing unitarity", 1e-10, || Ok(squeezing_operator(0.3, 1.1, 80)?.unitarity_deviation(30))),
        check("jarzynski over published quenches", 1e-8, || {
            let mut worst = 0.0f64;
            for row in ROWS {
                let (a, b) = row.specs();
                let q = analyze_quench(row.beta, &a, &b, &Truncation::default())?;
                worst = worst.max((q.jarzynski_ratio - 1.0).abs());
            }
            Ok(worst)
        }),
        check("mean work from trace", 1e-8, || {
            let (a, b) = ROWS[1].specs();
            let q = analyze_quench(ROWS[1].beta, &a, &b, &Truncation::default())?;
            Ok((q.mean_work - q.trace_mean_work).abs())
        }),
        check("characteristic function at zero", 1e-12, || {
            let (a, b) = ROWS[0].specs();
            let t = thermal_charfn(1.0, &diagonalize(&a)?, &diagonalize(&b)?, 48, &default_alpha_grid(64))?;
            Ok((t.values()[0] - Complex::new(1.0, 0.0)).norm())
        }),
        check("oam partition closed form", 1e-12, || {
            let z = oam_partition_function(1.0, 40)?;
            Ok((z.direct - z.closed_form).abs())
        }),
        check("oam identity channel does no work", 1e-14, || {
            let d = oam_work_distribution(1.0, 10, &OamTransitions::identity(10))?;
            Ok(d.mean().abs() + (d.normalization() - 1.0).abs())
        }),
        check("amplitude damping preserves trace", 1e-12, || {
            let out = gad_channel(&QubitState::plus(), 0.4, 0.8)?;
            let m = out.matrix();
            Ok((m[(0, 0)] + m[(1, 1)] - Complex::new(1.0, 0.0)).norm())
        }),
        check("raw field round trip", 0.0, || {
            let grid = FieldGrid::for_waist(1.0, 32, 8.0)?;
            let u = hg_mode(1, 2, 1.0, &grid)?;
            let mut bytes = Vec::new();
            u.write_raw(&mut bytes)?;
            let back = FieldGrid::read_raw(bytes.as_slice())?;
            Ok(if back == u { 0.0 } else { 1.0 })
        }),
    ]
}
