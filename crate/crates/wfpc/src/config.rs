//! Scenario files: TOML with nested sections, validated on load.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wfpc_core::dynamics::{ExactOptions, Method, Stepper, TimeGrid};
use wfpc_core::models::{
    build_h0_commuting, build_h0_noncommuting, build_two_manifold, build_witness_state, gibbs_state, CorrelatedState,
    Placement, SystemModel, TwoManifoldSpec,
};
use wfpc_core::pulses::{phase_family, PhaseFamily, SpectralPulse};
use wfpc_core::qrf::dephasing_tuned_env_state;
use wfpc_core::tensor::{ComplexMatrix, SpaceLayout};
use wfpc_core::witness::{default_protocol_family, Thresholds};
use wfpc_core::Complex64;

use crate::io;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: unknown builder `{name}`")]
    UnknownBuilder { path: String, name: String },
}

impl ConfigError {
    fn schema(path: &str, message: impl Into<String>) -> Self {
        Self::Schema {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub model: ModelSpec,
    pub state: StateSpec,
    #[serde(default)]
    pub pulse: PulseSpec,
    #[serde(default)]
    pub grid: GridSpec,
    pub protocol: ProtocolSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelBuilder {
    Commuting,
    Noncommuting,
    TwoManifold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub builder: ModelBuilder,
    #[serde(default = "one")]
    pub omega_s: f64,
    #[serde(default = "default_omega_env")]
    pub omega_env: Vec<f64>,
    #[serde(default)]
    pub coupling: f64,
    /// Oscillator levels of the system; one ground level, the rest excited.
    #[serde(default = "default_system_cutoff")]
    pub system_cutoff: usize,
    #[serde(default = "default_env_cutoffs")]
    pub env_cutoffs: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_energies: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excited_energies: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateBuilder {
    Gibbs,
    Witness,
    Product,
    Tuned,
    Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub builder: StateBuilder,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offdiag_in_rho: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offdiag_in_chi: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_populations: Option<Vec<f64>>,
    /// `[re, im]` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_vector: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_populations: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuned_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseShape {
    Gaussian,
    Custom,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    #[serde(default = "default_shape")]
    pub shape: PulseShape,
    #[serde(default = "one")]
    pub center: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_omega_step")]
    pub omega_step: f64,
    #[serde(default = "default_weak_scale")]
    pub weak_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<Vec<f64>>,
    #[serde(default)]
    pub family: FamilySpec,
}

impl Default for PulseSpec {
    fn default() -> Self {
        Self {
            shape: default_shape(),
            center: 1.0,
            sigma: default_sigma(),
            half_width: default_half_width(),
            omega_step: default_omega_step(),
            weak_scale: default_weak_scale(),
            omega_start: None,
            amplitude: None,
            family: FamilySpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// Four constants, eight delays and eight chirps.
    Default,
    Constant,
    Linear,
    Chirp,
    Random,
    /// The base pulse alone.
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    #[serde(default = "default_family_kind")]
    pub kind: FamilyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    /// Chirp reference frequency; defaults to the pulse center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
}

impl Default for FamilySpec {
    fn default() -> Self {
        Self {
            kind: FamilyKind::Default,
            count: None,
            lo: None,
            hi: None,
            center: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default = "default_t1")]
    pub t1: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Replace `[t0, t1]` by one field period centered on zero.
    #[serde(default)]
    pub one_period: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            t0: default_t0(),
            t1: default_t1(),
            steps: default_steps(),
            one_period: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Simulate,
    Witness,
    Qrf,
    Nogo,
}

impl ProtocolKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Witness => "witness",
            Self::Qrf => "qrf",
            Self::Nogo => "nogo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Exact,
    Pert2,
}

impl From<MethodName> for Method {
    fn from(m: MethodName) -> Self {
        match m {
            MethodName::Exact => Method::Exact,
            MethodName::Pert2 => Method::Perturbative2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepperName {
    Split,
    Midpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    #[serde(default = "default_method")]
    pub method: MethodName,
    #[serde(default = "default_stepper")]
    pub stepper: StepperName,
    #[serde(default = "default_threshold")]
    pub contrast_threshold: f64,
    #[serde(default = "default_threshold")]
    pub profile_threshold: f64,
    #[serde(default)]
    pub verify_grid: bool,
    #[serde(default = "default_grid_tolerance")]
    pub grid_tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qrf: Option<QrfSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorName {
    Dipole,
    Projector,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QrfSpec {
    pub t1_grid: Vec<f64>,
    pub dt_grid: Vec<f64>,
    #[serde(default = "default_qrf_threshold")]
    pub threshold: f64,
    #[serde(default = "default_operator")]
    pub a: OperatorName,
    #[serde(default = "default_operator")]
    pub b: OperatorName,
    /// Times at which the witness protocol is run on `R(t₁)`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub intermediate_t1: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            formats: default_formats(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn default_omega_env() -> Vec<f64> {
    vec![0.8]
}
fn default_system_cutoff() -> usize {
    2
}
fn default_env_cutoffs() -> Vec<usize> {
    vec![4]
}
fn default_shape() -> PulseShape {
    PulseShape::Gaussian
}
fn default_sigma() -> f64 {
    0.2
}
fn default_half_width() -> f64 {
    6.0
}
fn default_omega_step() -> f64 {
    0.05
}
fn default_weak_scale() -> f64 {
    1e-3
}
fn default_family_kind() -> FamilyKind {
    FamilyKind::Default
}
fn default_t0() -> f64 {
    -30.0
}
fn default_t1() -> f64 {
    30.0
}
fn default_steps() -> usize {
    1500
}
fn default_method() -> MethodName {
    MethodName::Exact
}
fn default_stepper() -> StepperName {
    StepperName::Split
}
fn default_threshold() -> f64 {
    1e-7
}
fn default_grid_tolerance() -> f64 {
    1e-9
}
fn default_qrf_threshold() -> f64 {
    wfpc_core::qrf::DEFAULT_QRF_THRESHOLD
}
fn default_operator() -> OperatorName {
    OperatorName::Dipole
}
fn default_out_dir() -> String {
    "out".into()
}
fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario_str(&text)
}

pub fn parse_scenario_str(text: &str) -> Result<Scenario, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::schema("<document>", e.to_string()))?;
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().message().to_string();
        if path.ends_with("builder") && message.starts_with("unknown variant") {
            let name = message.split('`').nth(1).unwrap_or_default().to_string();
            ConfigError::UnknownBuilder { path, name }
        } else {
            ConfigError::Schema { path, message }
        }
    })?;
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Seed with `0` standing in when none is needed.
    pub fn seed_or_default(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn needs_seed(&self) -> bool {
        self.state.builder == StateBuilder::Witness || self.pulse.family.kind == FamilyKind::Random
    }

    /// Structural checks that need no numerics.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.needs_seed() && self.seed.is_none() {
            return Err(ConfigError::schema(
                "seed",
                "a seed is required when the scenario draws random numbers",
            ));
        }
        let m = &self.model;
        match m.builder {
            ModelBuilder::Commuting | ModelBuilder::Noncommuting => {
                if m.system_cutoff < 2 {
                    return Err(ConfigError::schema("model.system_cutoff", "need at least two levels"));
                }
            }
            ModelBuilder::TwoManifold => {
                if m.ground_energies.as_ref().is_none_or(Vec::is_empty) {
                    return Err(ConfigError::schema(
                        "model.ground_energies",
                        "required for two_manifold",
                    ));
                }
                if m.excited_energies.as_ref().is_none_or(Vec::is_empty) {
                    return Err(ConfigError::schema(
                        "model.excited_energies",
                        "required for two_manifold",
                    ));
                }
            }
        }
        if m.env_cutoffs.is_empty() {
            return Err(ConfigError::schema(
                "model.env_cutoffs",
                "at least one environment mode is required",
            ));
        }
        if let Some(i) = m.env_cutoffs.iter().position(|&c| c == 0) {
            return Err(ConfigError::schema(
                &format!("model.env_cutoffs[{i}]"),
                "cutoff must be positive",
            ));
        }
        if m.omega_env.len() != m.env_cutoffs.len() {
            return Err(ConfigError::schema(
                "model.omega_env",
                format!("expected {} frequencies, one per environment mode", m.env_cutoffs.len()),
            ));
        }
        let s = &self.state;
        match s.builder {
            StateBuilder::Gibbs | StateBuilder::Tuned => {}
            StateBuilder::Witness => {
                if s.offdiag_in_rho.is_none() {
                    return Err(ConfigError::schema(
                        "state.offdiag_in_rho",
                        "required for the witness builder",
                    ));
                }
                if s.offdiag_in_chi.is_none() {
                    return Err(ConfigError::schema(
                        "state.offdiag_in_chi",
                        "required for the witness builder",
                    ));
                }
            }
            StateBuilder::Product => {
                if s.system_populations.is_some() == s.system_vector.is_some() {
                    return Err(ConfigError::schema(
                        "state.system_populations",
                        "give exactly one of system_populations and system_vector",
                    ));
                }
                if s.env_beta.is_some() == s.env_populations.is_some() {
                    return Err(ConfigError::schema(
                        "state.env_beta",
                        "give exactly one of env_beta and env_populations",
                    ));
                }
            }
            StateBuilder::Matrix => {
                if s.path.is_none() {
                    return Err(ConfigError::schema("state.path", "required for the matrix builder"));
                }
            }
        }
        if s.builder == StateBuilder::Tuned && s.tuned_time.is_none() {
            return Err(ConfigError::schema(
                "state.tuned_time",
                "required for the tuned builder",
            ));
        }
        if self.pulse.shape == PulseShape::Custom
            && (self.pulse.amplitude.is_none() || self.pulse.omega_start.is_none())
        {
            return Err(ConfigError::schema(
                "pulse.amplitude",
                "custom pulses need amplitude and omega_start",
            ));
        }
        if self.pulse.shape == PulseShape::None && self.protocol.kind != ProtocolKind::Simulate {
            return Err(ConfigError::schema(
                "pulse.shape",
                "a field is required for this protocol",
            ));
        }
        if self.grid.steps == 0 {
            return Err(ConfigError::schema("grid.steps", "must be positive"));
        }
        if self.protocol.kind == ProtocolKind::Qrf {
            let Some(q) = &self.protocol.qrf else {
                return Err(ConfigError::schema("protocol.qrf", "required for the qrf protocol"));
            };
            if q.t1_grid.is_empty() {
                return Err(ConfigError::schema("protocol.qrf.t1_grid", "must be nonempty"));
            }
            if q.dt_grid.is_empty() {
                return Err(ConfigError::schema("protocol.qrf.dt_grid", "must be nonempty"));
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> wfpc_core::Result<SpaceLayout> {
        let m = &self.model;
        let (ground, excited) = match m.builder {
            ModelBuilder::TwoManifold => (
                m.ground_energies.as_ref().map_or(0, Vec::len),
                m.excited_energies.as_ref().map_or(0, Vec::len),
            ),
            _ => (1, m.system_cutoff - 1),
        };
        SpaceLayout::new(ground, excited, m.env_cutoffs.clone())
    }

    pub fn build_model(&self) -> wfpc_core::Result<SystemModel> {
        let m = &self.model;
        let layout = self.layout()?;
        match m.builder {
            ModelBuilder::Commuting => build_h0_commuting(m.omega_s, &m.omega_env, m.coupling, &layout),
            ModelBuilder::Noncommuting => build_h0_noncommuting(m.omega_s, &m.omega_env, m.coupling, &layout),
            ModelBuilder::TwoManifold => build_two_manifold(
                &TwoManifoldSpec {
                    ground_energies: m.ground_energies.clone().unwrap_or_default(),
                    excited_energies: m.excited_energies.clone().unwrap_or_default(),
                    omega_env: m.omega_env.clone(),
                    coupling: m.coupling,
                    dipole: None,
                },
                &layout,
            ),
        }
    }

    /// The initial state. Matrix paths resolve against `base_dir`.
    pub fn build_state(&self, model: &SystemModel, base_dir: &Path) -> crate::Result<CorrelatedState> {
        let s = &self.state;
        let layout = model.layout();
        let state = match s.builder {
            StateBuilder::Gibbs => gibbs_state(model, s.beta.unwrap_or(1.0))?,
            StateBuilder::Witness => build_witness_state(
                layout,
                Placement {
                    offdiag_in_rho: s.offdiag_in_rho.unwrap_or(false),
                    offdiag_in_chi: s.offdiag_in_chi.unwrap_or(false),
                },
                self.seed_or_default(),
            )?,
            StateBuilder::Product => {
                let rho = match (&s.system_populations, &s.system_vector) {
                    (Some(p), _) => ComplexMatrix::diag_real(p),
                    (_, Some(v)) => ComplexMatrix::outer(&normalized(v)?),
                    _ => unreachable!("validated"),
                };
                let tau = match (&s.env_populations, s.env_beta) {
                    (Some(p), _) => ComplexMatrix::diag_real(p),
                    (_, Some(beta)) => thermal_env(&self.model, beta)?,
                    _ => unreachable!("validated"),
                };
                CorrelatedState::product(&rho, &tau, layout)?
            }
            StateBuilder::Tuned => {
                let phi = dephasing_tuned_env_state(model, s.tuned_time.unwrap_or_default())?;
                let h = std::f64::consts::FRAC_1_SQRT_2;
                let plus = ComplexMatrix::outer(&[Complex64::new(h, 0.0), Complex64::new(h, 0.0)]);
                CorrelatedState::product(&plus, &ComplexMatrix::outer(&phi), layout)?
            }
            StateBuilder::Matrix => {
                let path = base_dir.join(s.path.as_deref().unwrap_or_default());
                let (m, file_layout) = io::read_matrix(&path)?;
                if &file_layout != layout {
                    return Err(crate::Error::Usage(format!(
                        "{}: layout in file does not match the model",
                        path.display()
                    )));
                }
                CorrelatedState::from_matrix(&m, layout)?
            }
        };
        Ok(state)
    }

    /// Base pulse, or `None` for a field-free run.
    pub fn base_pulse(&self) -> wfpc_core::Result<Option<SpectralPulse>> {
        let p = &self.pulse;
        Ok(match p.shape {
            PulseShape::None => None,
            PulseShape::Gaussian => Some(SpectralPulse::gaussian(
                p.center,
                p.sigma,
                p.half_width,
                p.omega_step,
                p.weak_scale,
            )?),
            PulseShape::Custom => {
                let amplitude = p.amplitude.clone().unwrap_or_default();
                let phase = vec![0.0; amplitude.len()];
                Some(SpectralPulse::new(
                    p.omega_start.unwrap_or_default(),
                    p.omega_step,
                    amplitude,
                    phase,
                    p.weak_scale,
                )?)
            }
        })
    }

    pub fn family(&self, base: &SpectralPulse) -> wfpc_core::Result<Vec<SpectralPulse>> {
        let f = &self.pulse.family;
        let center = f.center.unwrap_or(self.pulse.center);
        let seed = self.seed_or_default();
        let lo_hi = |lo: f64, hi: f64| (f.lo.unwrap_or(lo), f.hi.unwrap_or(hi));
        match f.kind {
            FamilyKind::Default => default_protocol_family(base, center),
            FamilyKind::Single => Ok(vec![base.clone()]),
            FamilyKind::Constant => {
                let (lo, hi) = lo_hi(0.0, 1.5 * PI);
                phase_family(base, PhaseFamily::Constant { lo, hi }, f.count.unwrap_or(4), seed)
            }
            FamilyKind::Linear => {
                let (lo, hi) = lo_hi(-3.0, 3.0);
                phase_family(base, PhaseFamily::Linear { lo, hi }, f.count.unwrap_or(8), seed)
            }
            FamilyKind::Chirp => {
                let (lo, hi) = lo_hi(-5.0, 5.0);
                phase_family(base, PhaseFamily::Chirp { lo, hi, center }, f.count.unwrap_or(8), seed)
            }
            FamilyKind::Random => phase_family(base, PhaseFamily::Random, f.count.unwrap_or(8), seed),
        }
    }

    pub fn time_grid(&self, base: Option<&SpectralPulse>) -> wfpc_core::Result<TimeGrid> {
        let g = &self.grid;
        match (g.one_period, base) {
            (true, Some(p)) => TimeGrid::new(-p.period() / 2.0, p.period() / 2.0, g.steps),
            _ => TimeGrid::new(g.t0, g.t1, g.steps),
        }
    }

    pub fn exact_options(&self) -> ExactOptions {
        ExactOptions {
            stepper: match self.protocol.stepper {
                StepperName::Split => Stepper::Split,
                StepperName::Midpoint => Stepper::Midpoint,
            },
            ..ExactOptions::default()
        }
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            contrast: self.protocol.contrast_threshold,
            profile: self.protocol.profile_threshold,
        }
    }

    pub fn wants(&self, format: Format) -> bool {
        self.output.formats.contains(&format)
    }
}

fn normalized(v: &[[f64; 2]]) -> wfpc_core::Result<Vec<Complex64>> {
    let psi: Vec<Complex64> = v.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(wfpc_core::Error::InvalidParameter("system_vector has zero norm".into()));
    }
    Ok(psi.into_iter().map(|z| z / norm).collect())
}

/// Thermal state of the uncoupled environment oscillators.
fn thermal_env(model: &ModelSpec, beta: f64) -> wfpc_core::Result<ComplexMatrix> {
    let h = wfpc_core::models::env_hamiltonian(&model.env_cutoffs, &model.omega_env)?;
    let energies: Vec<f64> = (0..h.rows()).map(|i| h[(i, i)].re).collect();
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = energies.iter().map(|e| (-beta * (e - min)).exp()).collect();
    let z: f64 = weights.iter().sum();
    Ok(ComplexMatrix::diag_real(
        &weights.iter().map(|w| w / z).collect::<Vec<_>>(),
    ))
}
