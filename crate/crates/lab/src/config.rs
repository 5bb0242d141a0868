//! The JSON experiment configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use width_sde_core::control::{PositivityRepair, DEFAULT_U_GRID};
use width_sde_core::ergodic::{DEFAULT_BINS, DEFAULT_WINDOW};
use width_sde_core::integrate::{IntegratorConfig, Scheme, System};
use width_sde_core::profile::{
    derive_params, shape_coefficients, Builtin, PhysicalInputs, ProfileSpec, SdeParams, ShapeCoefficients, SplineProfile,
};
use width_sde_core::timechange::TimeChangeConfig;
use crate::error::{LabError, LabResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Subcommand {
    Params,
    Simulate,
    Timechange,
    Invariant,
    Decay,
    Control,
    Verify,
    Convergence,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Self::Params => "params",
            Self::Simulate => "simulate",
            Self::Timechange => "timechange",
            Self::Invariant => "invariant",
            Self::Decay => "decay",
            Self::Control => "control",
            Self::Verify => "verify",
            Self::Convergence => "convergence",
        }
    }
}

/// A built-in profile by name, or a detailed description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSource {
    Named(Builtin),
    Detailed(ProfileDetail),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileDetail {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<Builtin>,
    /// Two-column `r,f` CSV file, read into `radii`/`values` before use.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// Tabulated profile: knots and values of a natural cubic spline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    #[serde(default = "default_quad_n")]
    pub quad_n: usize,
}

fn default_quad_n() -> usize {
    512
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalSection {
    pub lambda: f64,
    pub d_r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_sq: Option<f64>,
}

impl PhysicalSection {
    pub fn inputs(&self) -> LabResult<PhysicalInputs> {
        match (self.mass, self.mass_sq) {
            (Some(m), None) => Ok(PhysicalInputs { lambda: self.lambda, d_r: self.d_r, mass: m }),
            (None, Some(m2)) => Ok(PhysicalInputs::from_mass_squared(self.lambda, self.d_r, m2)),
            _ => Err(config_error("physical: give exactly one of mass and mass_sq")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitParams {
    pub delta: f64,
    pub gamma: f64,
    pub d: f64,
    #[serde(default = "one")]
    pub amp: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub system: System,
    /// Initial state in original coordinates (mapped for the transformed system).
    pub x0: f64,
    pub y0: f64,
    pub n_paths: u64,
    /// Paths written as CSV (the first ones by index); all are summarized.
    pub write_paths: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { system: System::Original, x0: 1.0, y0: 0.0, n_paths: 1, write_paths: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimechangeSection {
    pub x0: f64,
    pub y0: f64,
    pub horizon: f64,
    /// Unit-horizon extensions appended after the first construction.
    pub extensions: u64,
    pub n_paths: u64,
    /// Full paths written as CSV (the first ones by index).
    pub write_paths: u64,
    pub sampler: TimeChangeConfig,
}

impl Default for TimechangeSection {
    fn default() -> Self {
        Self { x0: 1.0, y0: 0.0, horizon: 1.0, extensions: 0, n_paths: 1000, write_paths: 10, sampler: TimeChangeConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvariantSystems {
    Original,
    Transformed,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InvariantSection {
    pub systems: InvariantSystems,
    pub x0: f64,
    pub y0: f64,
    /// Occupation time recorded after burn-in.
    pub t_total: f64,
    pub burn_in: f64,
    /// `[x_lo, x_hi, y_lo, y_hi]` of the comparison grid.
    pub window: [f64; 4],
    pub bins: [usize; 2],
    /// Fine `(ξ, η)` grid of the transformed run before pushforward.
    pub transformed_window: [f64; 4],
    pub transformed_bins: [usize; 2],
    pub refinement: usize,
    /// When set, the whole pipeline is repeated with this seed for comparison.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second_seed: Option<u64>,
    /// Scheme for the transformed run (the original run uses `integrator`).
    pub transformed_scheme: Scheme,
}

impl Default for InvariantSection {
    fn default() -> Self {
        let (a, b, c, d) = DEFAULT_WINDOW;
        Self {
            systems: InvariantSystems::Both,
            x0: 1.0,
            y0: 0.0,
            t_total: 2e4,
            burn_in: 1e3,
            window: [a, b, c, d],
            bins: [DEFAULT_BINS, DEFAULT_BINS],
            transformed_window: [0.25, 10.0, -64.0, 64.0],
            transformed_bins: [780, 1024],
            refinement: 4,
            second_seed: None,
            transformed_scheme: Scheme::EulerMaruyama,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecaySection {
    /// CSV path file (`t,x[,y]`) to audit instead of simulating.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub x0: f64,
    pub y0: f64,
    pub t_total: f64,
    pub window_length: f64,
}

impl Default for DecaySection {
    fn default() -> Self {
        Self { input: None, x0: 1.0, y0: 0.0, t_total: 2e4, window_length: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSection {
    /// Explicit `[ξ₀, η₀, z₁, z₂]` quadruples.
    pub endpoints: Vec<[f64; 4]>,
    /// Additional random pairs in `[0.2, 3]² × [−2, 2]²`.
    pub random_pairs: u64,
    pub dt: f64,
    pub n_grid: usize,
    pub residual_tol: f64,
    pub repair: PositivityRepair,
}

impl Default for ControlSection {
    fn default() -> Self {
        Self { endpoints: vec![[1.0, 0.0, 0.5, 0.0]], random_pairs: 0, dt: 1e-4, n_grid: DEFAULT_U_GRID, residual_tol: 1e-5, repair: PositivityRepair::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Claim {
    RankMap {
        xi: [f64; 2],
        eta: [f64; 2],
        n: [usize; 2],
        #[serde(default = "rank_tol")]
        tol: f64,
    },
    LyapunovRays {
        /// Explicit rays; when empty, `n_rays` rays fanned over the right half-plane.
        #[serde(default)]
        rays: Vec<[f64; 2]>,
        #[serde(default = "sixteen")]
        n_rays: usize,
        t_max: f64,
    },
    BoundaryInvariance {
        eta0: f64,
        n_paths: u64,
        t_end: f64,
        #[serde(default = "boundary_dt")]
        dt: f64,
    },
    GeneratorCrosscheck {
        z: [f64; 2],
        h: Vec<f64>,
        n_paths: u64,
    },
}

fn rank_tol() -> f64 {
    width_sde_core::model::DEFAULT_RANK_TOL
}
fn sixteen() -> usize {
    16
}
fn boundary_dt() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub claims: Vec<Claim>,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            claims: vec![
                Claim::RankMap { xi: [0.1, 3.0], eta: [-3.0, 3.0], n: [30, 30], tol: rank_tol() },
                Claim::LyapunovRays { rays: Vec::new(), n_rays: 16, t_max: 10.0 },
                Claim::BoundaryInvariance { eta0: 0.0, n_paths: 1000, t_end: 1.0, dt: boundary_dt() },
                Claim::GeneratorCrosscheck { z: [2.0, 1.0], h: vec![4e-4, 2e-4, 1e-4], n_paths: 100_000 },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSection {
    pub systems: Vec<System>,
    pub x0: f64,
    pub y0: f64,
    pub dt_list: Vec<f64>,
    pub n_paths: u64,
    pub t_end: f64,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self {
            systems: vec![System::Original, System::Transformed],
            x0: 1.0,
            y0: 0.0,
            dt_list: (4..=9).map(|k| 2f64.powi(-k)).collect(),
            n_paths: 2000,
            t_end: 1.0,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub subcommand: Subcommand,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical: Option<PhysicalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ExplicitParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorConfig>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timechange: Option<TimechangeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariant: Option<InvariantSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecaySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSection>,
}

/// Resolved model parameters and, when derived from a profile, the shape
/// coefficients they came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedParams {
    pub params: SdeParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<ShapeCoefficients>,
}

fn config_error(msg: impl Into<String>) -> LabError {
    LabError::config(msg)
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> LabResult<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(text)
        .map_err(|e| config_error(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> LabResult<()> {
        let needs_model = !(self.subcommand == Subcommand::Decay && self.decay.as_ref().is_some_and(|d| d.input.is_some()));
        match (&self.profile, &self.params) {
            (Some(_), Some(_)) => return Err(config_error("give either profile or params, not both")),
            (None, None) if needs_model => {
                return Err(config_error("one of profile or params is required"))
            }
            (Some(_), None) if self.physical.is_none() => return Err(config_error("a profile needs a physical section")),
            (None, Some(_)) if self.physical.is_some() => return Err(config_error("physical inputs only apply to a profile")),
            _ => {}
        }
        if let Some(p) = &self.physical {
            p.inputs()?;
        }
        if let Some(ProfileSource::Detailed(d)) = &self.profile {
            let sources = [d.builtin.is_some(), d.radii.is_some(), d.csv.is_some()].iter().filter(|b| **b).count();
            if sources != 1 {
                return Err(config_error("profile: give exactly one of builtin, radii and csv"));
            }
            if d.radii.is_some() != d.values.is_some() {
                return Err(config_error("profile: radii and values go together"));
            }
        }
        if self.workers == Some(0) {
            return Err(config_error("workers must be positive"));
        }
        if let Some(i) = &self.integrator {
            i.validate()?;
        }
        let present = [
            (Subcommand::Simulate, self.simulate.is_some()),
            (Subcommand::Timechange, self.timechange.is_some()),
            (Subcommand::Invariant, self.invariant.is_some()),
            (Subcommand::Decay, self.decay.is_some()),
            (Subcommand::Control, self.control.is_some()),
            (Subcommand::Verify, self.verify.is_some()),
            (Subcommand::Convergence, self.convergence.is_some()),
        ];
        for (sub, has) in present {
            if has && sub != self.subcommand {
                return Err(config_error(format!("section {} does not apply to subcommand {}", sub.name(), self.subcommand.name())));
            }
        }
        Ok(())
    }

    /// Model parameters from the explicit section or the profile pipeline.
    pub fn resolve_params(&self) -> LabResult<ResolvedParams> {
        if let Some(p) = &self.params {
            return Ok(ResolvedParams { params: SdeParams::new(p.delta, p.gamma, p.d, p.amp)?, coefficients: None });
        }
        let (Some(src), Some(phys)) = (&self.profile, &self.physical) else {
            return Err(config_error("one of profile or params is required"));
        };
        let phys = phys.inputs()?;
        let coefficients = match src {
            ProfileSource::Named(b) => shape_coefficients(&ProfileSpec::new(*b, b.default_r_max(), default_quad_n())?)?,
            ProfileSource::Detailed(d) => {
                let tabulated = match (&d.builtin, &d.radii, &d.values, &d.csv) {
                    (Some(_), None, None, None) => None,
                    (None, Some(r), Some(v), None) => Some((r.clone(), v.clone())),
                    (None, None, None, Some(path)) => Some(crate::io::read_profile_csv(path)?),
                    _ => return Err(config_error("profile: give exactly one of builtin, radii and csv")),
                };
                match (tabulated, d.builtin) {
                    (Some((r, v)), _) => {
                        let spline = SplineProfile::new(r, v)?;
                        let r_max = d.r_max.unwrap_or(spline.last_radius());
                        shape_coefficients(&ProfileSpec::new(spline, r_max, d.quad_n)?)?
                    }
                    (None, Some(b)) => shape_coefficients(&ProfileSpec::new(b, d.r_max.unwrap_or(b.default_r_max()), d.quad_n)?)?,
                    (None, None) => unreachable!(),
                }
            }
        };
        Ok(ResolvedParams { params: derive_params(&coefficients, &phys)?, coefficients: Some(coefficients) })
    }

    pub fn integrator_or(&self, default: IntegratorConfig) -> IntegratorConfig {
        self.integrator.unwrap_or(default)
    }
}
