//! Strict TOML experiment configs. Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use qtherm::oam::OamTransition;
use qtherm::paraxial::SquareLawMedium;
use qtherm::{QuenchSpec64, Truncation};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Table1,
    WorkDist,
    Charfn,
    Oam,
    Demon,
    Thermometer,
    ParaxialCheck,
}

/// The file as written, before the parameter block is typed.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub kind: Kind,
    pub output_dir: Option<PathBuf>,
    pub rng_seed: Option<u64>,
    pub truncation: Option<Truncation>,
    #[serde(default)]
    pub params: toml::Table,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Params {}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkDistParams {
    pub beta: f64,
    pub initial: QuenchSpec64,
    #[serde(rename = "final")]
    pub final_spec: QuenchSpec64,
    /// Gaussian width for the plot-ready density; omitted means atoms only.
    pub broadening: Option<f64>,
    pub grid: Option<GridSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructionMethod {
    /// Per input mode onto its own reachable work values.
    #[default]
    Modes,
    /// Combined trace onto an explicit candidate list.
    Candidates,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharfnParams {
    pub beta: f64,
    pub initial: QuenchSpec64,
    #[serde(rename = "final")]
    pub final_spec: QuenchSpec64,
    pub dim: Option<usize>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_background")]
    pub background: f64,
    #[serde(default)]
    pub method: ReconstructionMethod,
    pub candidate_works: Option<Vec<f64>>,
    /// Gaussian intensity noise added to both interferometer outputs.
    pub noise_sigma: Option<f64>,
}

fn default_grid_points() -> usize {
    qtherm::charfn::DEFAULT_GRID_POINTS
}

fn default_background() -> f64 {
    qtherm::charfn::DEFAULT_BACKGROUND
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransitionSource {
    Identity {},
    /// Every output equally likely.
    Uniform {},
    /// Post-selected overlaps between LG families displaced by
    /// `displacement` waists along x.
    Displaced { displacement: f64 },
    Entries { entries: Vec<OamTransition> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OamParams {
    pub beta: f64,
    #[serde(default = "default_l_max")]
    pub l_max: usize,
    pub transitions: TransitionSource,
}

fn default_l_max() -> usize {
    qtherm::oam::DEFAULT_L_MAX
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemonParams {
    pub n_bar: f64,
    pub bs_reflectivity: f64,
    pub detector_efficiency: f64,
    pub trials: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QubitInput {
    V,
    H,
    Plus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermometerParams {
    pub q_hot: f64,
    pub q_cold: f64,
    pub p_values: Vec<f64>,
    pub shots: u64,
    #[serde(default = "default_inputs")]
    pub inputs: Vec<QubitInput>,
}

fn default_inputs() -> Vec<QubitInput> {
    vec![QubitInput::V, QubitInput::H, QubitInput::Plus]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParaxialParams {
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_window")]
    pub window_waists: f64,
    #[serde(default = "qtherm::paraxial::default_medium")]
    pub medium: SquareLawMedium,
    #[serde(default = "default_max_mode")]
    pub max_mode: usize,
    /// Phase-space angle covered by the eigenphase regression.
    #[serde(default = "default_angle")]
    pub angle: f64,
    #[serde(default = "default_norm_steps")]
    pub norm_steps: usize,
    /// Free-space Gaussian check: waist and wavenumber; propagates one
    /// Rayleigh range.
    #[serde(default = "default_free_space")]
    pub free_space: FreeSpaceCheck,
    #[serde(default = "default_snapshots")]
    pub snapshots: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeSpaceCheck {
    pub w0: f64,
    pub k0: f64,
}

fn default_grid() -> usize {
    qtherm::paraxial::DEFAULT_GRID
}

fn default_window() -> f64 {
    qtherm::paraxial::DEFAULT_WINDOW_WAISTS
}

fn default_max_mode() -> usize {
    3
}

fn default_angle() -> f64 {
    std::f64::consts::FRAC_PI_2
}

fn default_norm_steps() -> usize {
    1000
}

fn default_free_space() -> FreeSpaceCheck {
    FreeSpaceCheck { w0: 1.0, k0: 8.0 }
}

fn default_snapshots() -> bool {
    true
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Params {
    Table1(Table1Params),
    WorkDist(WorkDistParams),
    Charfn(CharfnParams),
    Oam(OamParams),
    Demon(DemonParams),
    Thermometer(ThermometerParams),
    ParaxialCheck(ParaxialParams),
}

/// A fully typed and validated experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    /// Not echoed: where a run is written does not affect what it computes.
    #[serde(skip)]
    pub output_dir: Option<PathBuf>,
    pub dim_override: Option<usize>,
    pub rng_seed: Option<u64>,
    pub truncation: Truncation,
    pub experiment: Params,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dim: Option<usize>,
    pub out: Option<PathBuf>,
}

fn typed<T: serde::de::DeserializeOwned>(params: toml::Table) -> CliResult<T> {
    params.try_into().map_err(|e: toml::de::Error| CliError::Config(format!("params: {}", e.message())))
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &Overrides) -> CliResult<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        Self::from_raw(raw, overrides)
    }

    pub fn load(path: &Path, overrides: &Overrides) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn from_raw(raw: RawConfig, overrides: &Overrides) -> CliResult<Self> {
        let experiment = match raw.kind {
            Kind::Table1 => Params::Table1(typed(raw.params)?),
            Kind::WorkDist => Params::WorkDist(typed(raw.params)?),
            Kind::Charfn => Params::Charfn(typed(raw.params)?),
            Kind::Oam => Params::Oam(typed(raw.params)?),
            Kind::Demon => Params::Demon(typed(raw.params)?),
            Kind::Thermometer => Params::Thermometer(typed(raw.params)?),
            Kind::ParaxialCheck => Params::ParaxialCheck(typed(raw.params)?),
        };
        let truncation = match overrides.dim {
            Some(d) => Truncation::fixed(d),
            None => raw.truncation.unwrap_or_default(),
        };
        let cfg = Self {
            output_dir: overrides.out.clone().or(raw.output_dir),
            dim_override: overrides.dim,
            rng_seed: overrides.seed.or(raw.rng_seed),
            truncation,
            experiment,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn kind(&self) -> Kind {
        match self.experiment {
            Params::Table1(_) => Kind::Table1,
            Params::WorkDist(_) => Kind::WorkDist,
            Params::Charfn(_) => Kind::Charfn,
            Params::Oam(_) => Kind::Oam,
            Params::Demon(_) => Kind::Demon,
            Params::Thermometer(_) => Kind::Thermometer,
            Params::ParaxialCheck(_) => Kind::ParaxialCheck,
        }
    }

    /// Everything checkable without running the experiment.
    pub fn validate(&self) -> CliResult<()> {
        let core = |r: qtherm::Result<()>| r.map_err(|e| CliError::Config(e.to_string()));
        core(self.truncation.validate())?;
        let beta_ok = |b: f64| if b > 0.0 && b.is_finite() { Ok(()) } else { Err(bad("beta must be positive and finite")) };
        match &self.experiment {
            Params::Table1(_) => {}
            Params::WorkDist(p) => {
                beta_ok(p.beta)?;
                core(p.initial.validate())?;
                core(p.final_spec.validate())?;
                if let Some(w) = p.broadening {
                    if !(w > 0.0) {
                        return Err(bad("broadening must be positive"));
                    }
                    if p.grid.is_none() {
                        return Err(bad("broadening needs a grid"));
                    }
                }
                if let Some(g) = p.grid {
                    if !(g.max > g.min) || g.points < 2 {
                        return Err(bad("grid needs max > min and at least two points"));
                    }
                }
            }
            Params::Charfn(p) => {
                beta_ok(p.beta)?;
                core(p.initial.validate())?;
                core(p.final_spec.validate())?;
                if p.grid_points < 8 {
                    return Err(bad("grid_points must be at least 8"));
                }
                if p.dim.is_some_and(|d| d < 2) {
                    return Err(bad("dim must be at least 2"));
                }
                match (p.method, &p.candidate_works) {
                    (ReconstructionMethod::Candidates, None) => {
                        return Err(bad("method = \"candidates\" needs candidate_works"))
                    }
                    (ReconstructionMethod::Modes, Some(_)) => {
                        return Err(bad("candidate_works is only used with method = \"candidates\""))
                    }
                    _ => {}
                }
                if let Some(s) = p.noise_sigma {
                    if !(s >= 0.0) || !s.is_finite() {
                        return Err(bad("noise_sigma must be non-negative"));
                    }
                    if p.method == ReconstructionMethod::Modes {
                        return Err(bad("noise is added to the combined trace; use method = \"candidates\""));
                    }
                    if self.rng_seed.is_none() {
                        return Err(bad("noise_sigma needs rng_seed"));
                    }
                }
            }
            Params::Oam(p) => {
                beta_ok(p.beta)?;
                if let TransitionSource::Displaced { displacement } = p.transitions {
                    if !(displacement >= 0.0) || displacement > 4.0 {
                        return Err(bad("displacement must lie in [0, 4] waists"));
                    }
                }
            }
            Params::Demon(p) => {
                let seed = self.rng_seed.ok_or_else(|| bad("demon runs need rng_seed"))?;
                core(demon_config(p, seed).validate())?;
            }
            Params::Thermometer(p) => {
                self.rng_seed.ok_or_else(|| bad("thermometer runs need rng_seed"))?;
                for (name, q) in [("q_hot", p.q_hot), ("q_cold", p.q_cold)] {
                    if !(0.0..=1.0).contains(&q) {
                        return Err(bad(format!("{name} must lie in [0, 1]")));
                    }
                }
                if p.p_values.is_empty() || p.p_values.iter().any(|x| !(0.0..=1.0).contains(x)) {
                    return Err(bad("p_values must be a non-empty list in [0, 1]"));
                }
                if p.shots < 2 {
                    return Err(bad("shots must be at least 2"));
                }
                if p.inputs.is_empty() {
                    return Err(bad("inputs must not be empty"));
                }
            }
            Params::ParaxialCheck(p) => {
                core(p.medium.validate())?;
                if p.medium.alpha_medium == 0.0 {
                    return Err(bad("paraxial_check needs a confining medium"));
                }
                if p.grid < 16 || !p.grid.is_power_of_two() {
                    return Err(bad("grid must be a power of two, at least 16"));
                }
                if !(p.window_waists >= 8.0) {
                    return Err(bad("window_waists must be at least 8"));
                }
                if !(p.angle > 0.0) || !p.angle.is_finite() {
                    return Err(bad("angle must be positive"));
                }
                if !(p.free_space.w0 > 0.0 && p.free_space.k0 > 0.0) {
                    return Err(bad("free_space needs positive w0 and k0"));
                }
            }
        }
        Ok(())
    }
}

pub fn demon_config(p: &DemonParams, seed: u64) -> qtherm::photonic::DemonConfig {
    qtherm::photonic::DemonConfig {
        n_bar: p.n_bar,
        bs_reflectivity: p.bs_reflectivity,
        detector_efficiency: p.detector_efficiency,
        trials: p.trials,
        rng_seed: seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEMON: &str = "kind = \"demon\"\nrng_seed = 4\n[params]\nn_bar = 1.0\nbs_reflectivity = 0.1\ndetector_efficiency = 0.5\ntrials = 100\n";

    #[test]
    fn overrides_take_precedence() {
        let o = Overrides { seed: Some(9), dim: Some(40), out: Some("elsewhere".into()) };
        let c = ExperimentConfig::from_toml_str(DEMON, &o).unwrap();
        assert_eq!(c.rng_seed, Some(9));
        assert_eq!(c.truncation, Truncation::fixed(40));
        assert_eq!(c.output_dir.as_deref(), Some(Path::new("elsewhere")));
        let plain = ExperimentConfig::from_toml_str(DEMON, &Overrides::default()).unwrap();
        assert_eq!(plain.rng_seed, Some(4));
        assert_eq!(plain.truncation, Truncation::default());
    }

    #[test]
    fn echo_omits_output_dir() {
        let o = Overrides { out: Some("a".into()), ..Overrides::default() };
        let a = serde_json::to_string(&ExperimentConfig::from_toml_str(DEMON, &o).unwrap()).unwrap();
        let b = serde_json::to_string(&ExperimentConfig::from_toml_str(DEMON, &Overrides::default()).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(!a.contains("output_dir"));
    }

    #[test]
    fn defaults_fill_optional_params() {
        let c = ExperimentConfig::from_toml_str("kind = \"paraxial_check\"\n", &Overrides::default()).unwrap();
        let Params::ParaxialCheck(p) = c.experiment else { panic!("wrong kind") };
        assert_eq!(p.grid, qtherm::paraxial::DEFAULT_GRID);
        assert_eq!(p.medium, qtherm::paraxial::default_medium());
        let c = ExperimentConfig::from_toml_str(
            "kind = \"oam\"\n[params]\nbeta = 2.0\n[params.transitions]\nkind = \"uniform\"\n",
            &Overrides::default(),
        )
        .unwrap();
        let Params::Oam(p) = c.experiment else { panic!("wrong kind") };
        assert_eq!(p.l_max, qtherm::oam::DEFAULT_L_MAX);
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            "kind = \"table1\"\n[params]\nrows = 3\n",
            "kind = \"charfn\"\n[params]\nbeta = 1.0\nmethod = \"candidates\"\n[params.initial]\n[params.final]\n",
            "kind = \"charfn\"\n[params]\nbeta = 1.0\nnoise_sigma = 0.1\n[params.initial]\n[params.final]\n",
            "kind = \"work_dist\"\n[params]\nbeta = 1.0\nbroadening = 0.1\n[params.initial]\n[params.final]\n",
            "kind = \"work_dist\"\n[params]\nbeta = 1.0\n[params.initial]\nomega = -1.0\n[params.final]\n",
            "kind = \"work_dist\"\n[params]\nbeta = 1.0\n[params.initial]\nomega_typo = 1.0\n[params.final]\n",
            "kind = \"thermometer\"\nrng_seed = 1\n[params]\nq_hot = 1.5\nq_cold = 0.2\np_values = [0.1]\nshots = 10\n",
            "kind = \"paraxial_check\"\n[params]\ngrid = 100\n",
            "kind = \"paraxial_check\"\n[params]\nwindow_waists = 6.0\n",
            "kind = \"table1\"\n[truncation]\nstart_dim = 64\nmax_dim = 8\ntol = 1e-9\n",
        ];
        for text in cases {
            let e = ExperimentConfig::from_toml_str(text, &Overrides::default()).unwrap_err();
            assert_eq!(e.exit_code(), crate::error::EXIT_VALIDATION, "{text}: {e}");
        }
    }
}
