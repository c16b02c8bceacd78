//! Preparations, the phase-control detector and the two-copy witness.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::dynamics::{ExactOptions, FreeEvolution, Method, TimeGrid, Trajectory};
use crate::exec::Executor;
use crate::math;
use crate::models::{CorrelatedState, SystemModel};
use crate::pulses::{phase_family, scale_weak, PhaseFamily, SpectralPulse, TimeField};
use crate::tensor::{self, kron, partial_trace, partial_trace_layout, ComplexMatrix, Subsystem, Tolerances};
use crate::{Error, Result};

/// Tolerance for the commutator conditions.
pub const CONDITION_TOLERANCE: f64 = 1e-8;

/// Yield changes below this count as no response in the scaling test.
pub const SCALING_FLOOR: f64 = 1e-14;

/// Ratio window for a response dominated by the second-order term.
pub const QUADRATIC_WINDOW: (f64, f64) = (3.5, 4.5);

/// Ratio window for a response dominated by the first-order term.
pub const LINEAR_WINDOW: (f64, f64) = (1.8, 2.2);

/// Trace distance above which two conditional environments differ.
pub const ENVIRONMENT_DISTANCE_FLOOR: f64 = 1e-8;

/// `R ↦ ρ₀ ⊗ tr_S R`
pub fn prep_throw_replace(state: &CorrelatedState, rho0: &ComplexMatrix) -> Result<CorrelatedState> {
    let layout = state.layout();
    if rho0.rows() != layout.system_dim() || !rho0.is_square() {
        return Err(Error::DimensionMismatch {
            context: "replacement state",
            expected: layout.system_dim(),
            found: rho0.rows(),
        });
    }
    CorrelatedState::product(rho0, &state.tau, layout)
}

/// `R ↦ ρ ⊗ τ` with the state's own marginals.
pub fn prep_marginal_preserving(state: &CorrelatedState) -> Result<CorrelatedState> {
    CorrelatedState::product(&state.rho, &state.tau, state.layout())
}

/// Two copies `R ⊗ R` on `S⊗E⊗S'⊗E'`, the systems swapped, copy 2 traced
/// out. Equals `ρ ⊗ τ`; the doubled space squares the dimension.
pub fn swap_two_copies(state: &CorrelatedState) -> Result<ComplexMatrix> {
    let layout = state.layout();
    let (ds, de) = (layout.system_dim(), layout.env_dim());
    let d = ds * de;
    let doubled = kron(state.matrix(), state.matrix())?;
    // (s, e, s', e') → (s', e, s, e')
    let perm: Vec<usize> = (0..d * d)
        .map(|idx| {
            let e2 = idx % de;
            let s2 = (idx / de) % ds;
            let e1 = (idx / d) % de;
            let s1 = idx / (d * de);
            ((s2 * de + e1) * ds + s1) * de + e2
        })
        .collect();
    let swapped = ComplexMatrix::from_fn(d * d, d * d, |i, j| doubled[(perm[i], perm[j])]);
    partial_trace(&swapped, &[ds, de, ds, de], &[0, 1])
}

fn normalized(psi: &[Complex64], dim: usize) -> Result<Vec<Complex64>> {
    if psi.len() != dim {
        return Err(Error::DimensionMismatch {
            context: "system state vector",
            expected: dim,
            found: psi.len(),
        });
    }
    let norm = math::sqrt(psi.iter().map(|z| z.norm_sqr()).sum());
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidParameter("system state vector has zero norm".into()));
    }
    Ok(psi.iter().map(|z| z / norm).collect())
}

/// Probability of outcome `ψ` and the conditional environment `τ^{E|ψ}`.
pub fn projective_outcome(state: &CorrelatedState, psi: &[Complex64]) -> Result<(f64, ComplexMatrix)> {
    let layout = state.layout();
    let psi = normalized(psi, layout.system_dim())?;
    let proj = kron(&ComplexMatrix::outer(&psi), &ComplexMatrix::identity(layout.env_dim()))?;
    let projected = &proj * &(state.matrix() * &proj);
    let env = partial_trace_layout(&projected, layout, Subsystem::Environment)?;
    let probability = env.trace().re;
    if !(probability > 1e-12) {
        return Err(Error::ZeroProbability { probability });
    }
    Ok((probability, env.scale_real(1.0 / probability)))
}

/// `R ↦ |ψ⟩⟨ψ| ⊗ τ^{E|ψ}`
pub fn prep_projective(state: &CorrelatedState, psi: &[Complex64]) -> Result<CorrelatedState> {
    let layout = state.layout();
    let (_, env) = projective_outcome(state, psi)?;
    let psi = normalized(psi, layout.system_dim())?;
    CorrelatedState::product(&ComplexMatrix::outer(&psi), &env, layout)
}

/// `R ↦ (L⊗𝕀) R (L†⊗𝕀)`
pub fn prep_rotate(state: &CorrelatedState, l: &ComplexMatrix) -> Result<CorrelatedState> {
    let layout = state.layout();
    if !l.is_square() || l.rows() != layout.system_dim() {
        return Err(Error::DimensionMismatch {
            context: "rotation",
            expected: layout.system_dim(),
            found: l.rows(),
        });
    }
    let deviation = l.unitarity_defect();
    if !(deviation <= Tolerances::default().unitary) {
        return Err(Error::NonUnitary { deviation });
    }
    let big = kron(l, &ComplexMatrix::identity(layout.env_dim()))?;
    let out = big.sandwich(state.matrix());
    CorrelatedState::from_matrix(&(&out + &out.adjoint()).scale_real(0.5), layout)
}

/// Four global phases, eight delays on `[−3, 3]` and eight chirps on
/// `[−5, 5]` about `center`.
pub fn default_protocol_family(base: &SpectralPulse, center: f64) -> Result<Vec<SpectralPulse>> {
    let mut family = phase_family(base, PhaseFamily::Constant { lo: 0.0, hi: 1.5 * PI }, 4, 0)?;
    family.extend(phase_family(base, PhaseFamily::Linear { lo: -3.0, hi: 3.0 }, 8, 0)?);
    family.extend(phase_family(
        base,
        PhaseFamily::Chirp {
            lo: -5.0,
            hi: 5.0,
            center,
        },
        8,
        0,
    )?);
    Ok(family)
}

/// How a phase sweep is run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectOptions {
    pub threshold: f64,
    pub method: Method,
    pub exact: ExactOptions,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            threshold: 1e-7,
            method: Method::Exact,
            exact: ExactOptions::default(),
        }
    }
}

/// Final yields over a same-amplitude phase family.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseControlReport {
    /// `(mask index, p(T))`
    pub yields: Vec<(usize, f64)>,
    pub contrast: f64,
    pub threshold: f64,
    pub detected: bool,
    /// Dominant-order homogeneity under `λ → λ/2`.
    pub scaling_ok: bool,
    pub scaling_ratio: Option<f64>,
    /// `p_i(T) − p_0(T)`: the yield response to each mask, referenced to the
    /// first.
    pub profile: Vec<f64>,
    /// Per-mask trajectories, in family order.
    pub trajectories: Vec<Trajectory>,
    pub max_trace_drift: f64,
    pub min_eigenvalue: Option<f64>,
}

fn check_family(family: &[SpectralPulse]) -> Result<()> {
    if family.len() < 2 {
        return Err(Error::FamilyTooSmall { size: family.len() });
    }
    if family.iter().any(|p| !p.same_amplitude(&family[0])) {
        return Err(Error::AmplitudeMismatch);
    }
    Ok(())
}

fn free_trajectory(
    free: &FreeEvolution,
    state: &CorrelatedState,
    grid: &TimeGrid,
    opts: &DetectOptions,
) -> Result<Trajectory> {
    let zero = TimeField::zeros(grid.field_samples())?;
    free.run_field(state, &zero, grid, opts.method, &opts.exact)
}

/// Ratio `Δ(λ)/Δ(λ/2)` of yield changes relative to free evolution, and
/// whether it sits in either homogeneity window.
fn scaling_test(
    free: &FreeEvolution,
    state: &CorrelatedState,
    pulse: &SpectralPulse,
    full_change: f64,
    grid: &TimeGrid,
    opts: &DetectOptions,
    p_free: f64,
) -> Result<(bool, Option<f64>)> {
    if math::abs(full_change) <= SCALING_FLOOR {
        return Ok((true, None));
    }
    let half = scale_weak(pulse, pulse.weak_scale() / 2.0)?;
    let half_change = free
        .run(state, &half, grid, opts.method, &opts.exact)?
        .final_population()
        - p_free;
    let ratio = full_change / half_change;
    let inside = |(lo, hi): (f64, f64)| ratio >= lo && ratio <= hi;
    Ok((inside(QUADRATIC_WINDOW) || inside(LINEAR_WINDOW), Some(ratio)))
}

/// One trajectory per mask; contrast is the spread of final yields.
pub fn detect_wfpc_with(
    free: &FreeEvolution,
    state: &CorrelatedState,
    family: &[SpectralPulse],
    grid: &TimeGrid,
    opts: &DetectOptions,
    exec: &impl Executor,
) -> Result<PhaseControlReport> {
    check_family(family)?;
    let n = family.len();
    // Index n is the zero-field reference.
    let runs = exec.map(n + 1, |i| {
        if i < n {
            free.run(state, &family[i], grid, opts.method, &opts.exact)
        } else {
            free_trajectory(free, state, grid, opts)
        }
    });
    let mut trajectories = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let reference = trajectories.pop().expect("zero-field run present");
    let finals: Vec<f64> = trajectories.iter().map(Trajectory::final_population).collect();
    let max = finals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = finals.iter().copied().fold(f64::INFINITY, f64::min);
    let contrast = max - min;

    let p_free = reference.final_population();
    let (strongest, full_change) = finals
        .iter()
        .map(|p| p - p_free)
        .enumerate()
        .fold((0, 0.0f64), |best, (i, c)| {
            if math::abs(c) > math::abs(best.1) {
                (i, c)
            } else {
                best
            }
        });
    let (scaling_ok, scaling_ratio) = scaling_test(free, state, &family[strongest], full_change, grid, opts, p_free)?;

    let max_trace_drift = trajectories
        .iter()
        .map(|t| t.trace_drift)
        .fold(reference.trace_drift, f64::max);
    let min_eigenvalue = trajectories
        .iter()
        .chain(core::iter::once(&reference))
        .filter_map(|t| t.min_eigenvalue)
        .reduce(f64::min);
    Ok(PhaseControlReport {
        yields: finals.iter().copied().enumerate().collect(),
        contrast,
        threshold: opts.threshold,
        detected: contrast > opts.threshold,
        scaling_ok,
        scaling_ratio,
        profile: finals.iter().map(|p| p - finals[0]).collect(),
        trajectories,
        max_trace_drift,
        min_eigenvalue,
    })
}

pub fn detect_wfpc(
    model: &SystemModel,
    state: &CorrelatedState,
    family: &[SpectralPulse],
    grid: &TimeGrid,
    opts: &DetectOptions,
    exec: &impl Executor,
) -> Result<PhaseControlReport> {
    detect_wfpc_with(&FreeEvolution::new(model)?, state, family, grid, opts, exec)
}

/// A norm with its pass/fail verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionCheck {
    pub norm: f64,
    pub passed: bool,
}

impl ConditionCheck {
    fn at_most(norm: f64, tolerance: f64) -> Self {
        Self {
            norm,
            passed: norm <= tolerance,
        }
    }
}

/// Outcome of the `λ → λ/2` homogeneity test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingCheck {
    pub ratio: Option<f64>,
    pub passed: bool,
}

/// The three checkable no-go hypotheses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NogoReport {
    /// Weak field: dominant-order homogeneity of the yield change.
    pub condition1: ScalingCheck,
    /// `‖[P⊗𝕀, H₀]‖_max`
    pub condition2: ConditionCheck,
    /// `‖[H₀, R(0)]‖_max`
    pub condition3: ConditionCheck,
}

fn commutator_conditions(model: &SystemModel, state: &CorrelatedState) -> Result<(ConditionCheck, ConditionCheck)> {
    let c2 = ConditionCheck::at_most(model.condition2_norm(), CONDITION_TOLERANCE);
    let c3 = tensor::commutator(model.h0(), state.matrix())?.max_abs();
    Ok((c2, ConditionCheck::at_most(c3, CONDITION_TOLERANCE)))
}

/// Evaluates Conditions 2 and 3 directly and Condition 1 by exact
/// propagation of `pulse` at its own scale and at half of it.
pub fn check_nogo_conditions(
    model: &SystemModel,
    state: &CorrelatedState,
    pulse: &SpectralPulse,
    grid: &TimeGrid,
) -> Result<NogoReport> {
    let (condition2, condition3) = commutator_conditions(model, state)?;
    let free = FreeEvolution::new(model)?;
    let opts = DetectOptions {
        method: Method::Exact,
        exact: ExactOptions {
            keep_final_state: false,
            ..ExactOptions::default()
        },
        ..DetectOptions::default()
    };
    let p_free = free_trajectory(&free, state, grid, &opts)?.final_population();
    let full = free
        .run(state, pulse, grid, opts.method, &opts.exact)?
        .final_population()
        - p_free;
    let (passed, ratio) = scaling_test(&free, state, pulse, full, grid, &opts, p_free)?;
    Ok(NogoReport {
        condition1: ScalingCheck { ratio, passed },
        condition2,
        condition3,
    })
}

/// Detection thresholds for the two-copy protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Minimum contrast counted as phase control.
    pub contrast: f64,
    /// Largest profile change counted as unchanged.
    pub profile: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            contrast: 1e-7,
            profile: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolOptions {
    pub thresholds: Thresholds,
    pub method: Method,
    pub exact: ExactOptions,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            thresholds: Thresholds::default(),
            method: Method::Exact,
            exact: ExactOptions::default(),
        }
    }
}

impl ProtocolOptions {
    fn detect(&self) -> DetectOptions {
        DetectOptions {
            threshold: self.thresholds.contrast,
            method: self.method,
            exact: self.exact,
        }
    }
}

/// Where the witness places the g–e coherence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quadrant {
    NoOffdiag,
    ChiOnly,
    RhoOnly,
    Both,
}

impl Quadrant {
    pub fn name(&self) -> &'static str {
        match self {
            Self::NoOffdiag => "NoOffdiag",
            Self::ChiOnly => "ChiOnly",
            Self::RhoOnly => "RhoOnly",
            Self::Both => "Both",
        }
    }

    /// Observed outcome of the two experiments.
    pub fn outcome(&self) -> &'static str {
        match self {
            Self::NoOffdiag => "no WFPC in either experiment",
            Self::ChiOnly => "WFPC -> no WFPC",
            Self::RhoOnly => "dp/dphi unchanged between experiments",
            Self::Both => "dp/dphi changes between experiments",
        }
    }

    /// Whether the outcome certifies initial system-environment correlations.
    pub fn correlations_witnessed(&self) -> bool {
        matches!(self, Self::ChiOnly | Self::Both)
    }

    /// Conclusion drawn from the outcome. A negative result never rules
    /// correlations out.
    pub fn conclusion(&self) -> &'static str {
        if self.correlations_witnessed() {
            "correlations witnessed"
        } else {
            "no correlations witnessed"
        }
    }
}

/// Conditions 2 and 3 evaluated on the protocol input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionSummary {
    pub condition2: ConditionCheck,
    pub condition3: ConditionCheck,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessVerdict {
    pub quadrant: Quadrant,
    pub report_before: PhaseControlReport,
    pub report_after: PhaseControlReport,
    /// `‖profile_before − profile_after‖_max`
    pub profile_distance: f64,
    pub conditions: ConditionSummary,
    /// Set when `[P⊗𝕀, H₀] ≠ 0`: phase control may then come from the free
    /// evolution, so coherence in ρ cannot be told apart from it. The
    /// correlation witness itself is unaffected.
    pub condition2_caveat: bool,
}

impl WitnessVerdict {
    pub fn statement(&self) -> String {
        let mut s = format!("{}: {}", self.quadrant.outcome(), self.quadrant.conclusion());
        if self.condition2_caveat {
            s.push_str(" (free evolution excites the system; coherence in the system marginal is not resolved)");
        }
        s
    }
}

/// Decision table from the two detections and the profile distance.
pub fn classify(before: bool, after: bool, profile_distance: f64, profile_threshold: f64) -> Quadrant {
    match (before, after) {
        (false, false) => Quadrant::NoOffdiag,
        (true, false) => Quadrant::ChiOnly,
        (true, true) if profile_distance <= profile_threshold => Quadrant::RhoOnly,
        // Control appearing only after decorrelation also means the profile
        // changed.
        _ => Quadrant::Both,
    }
}

pub fn run_witness_protocol_with(
    free: &FreeEvolution,
    model: &SystemModel,
    state: &CorrelatedState,
    family: &[SpectralPulse],
    grid: &TimeGrid,
    opts: &ProtocolOptions,
    exec: &impl Executor,
) -> Result<WitnessVerdict> {
    let (condition2, condition3) = commutator_conditions(model, state)?;
    let detect = opts.detect();
    let report_before = detect_wfpc_with(free, state, family, grid, &detect, exec)?;
    let prepared = prep_marginal_preserving(state)?;
    let report_after = detect_wfpc_with(free, &prepared, family, grid, &detect, exec)?;
    let profile_distance = report_before
        .profile
        .iter()
        .zip(&report_after.profile)
        .fold(0.0f64, |m, (a, b)| m.max(math::abs(a - b)));
    let quadrant = classify(
        report_before.detected,
        report_after.detected,
        profile_distance,
        opts.thresholds.profile,
    );
    Ok(WitnessVerdict {
        quadrant,
        report_before,
        report_after,
        profile_distance,
        conditions: ConditionSummary { condition2, condition3 },
        condition2_caveat: !condition2.passed,
    })
}

/// Detects phase control on the state and on its marginal-preserving
/// preparation, then reads the quadrant off the two results.
pub fn run_witness_protocol(
    model: &SystemModel,
    state: &CorrelatedState,
    family: &[SpectralPulse],
    grid: &TimeGrid,
    opts: &ProtocolOptions,
    exec: &impl Executor,
) -> Result<WitnessVerdict> {
    run_witness_protocol_with(&FreeEvolution::new(model)?, model, state, family, grid, opts, exec)
}

/// `½ Σ|λ_i(a − b)|`
pub fn trace_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    let diff = a - b;
    let diff = (&diff + &diff.adjoint()).scale_real(0.5);
    Ok(0.5 * tensor::eigh(&diff)?.values.iter().map(|v| math::abs(*v)).sum::<f64>())
}

/// One projective branch of [`rotated_marginal_witness`].
#[derive(Debug, Clone, PartialEq)]
pub struct BranchReport {
    pub probability: f64,
    pub environment: ComplexMatrix,
    pub contrast: f64,
    pub profile: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotatedMarginalReport {
    pub branches: Vec<BranchReport>,
    /// Largest pairwise trace distance between conditional environments.
    pub max_env_distance: f64,
    pub environments_differ: bool,
    pub correlations_witnessed: bool,
}

/// Prepares each `ψ` projectively, rotates by `L`, and sweeps the family.
/// Differing conditional environments witness correlations.
#[allow(clippy::too_many_arguments)]
pub fn rotated_marginal_witness(
    model: &SystemModel,
    state: &CorrelatedState,
    psi_list: &[Vec<Complex64>],
    l: &ComplexMatrix,
    family: &[SpectralPulse],
    grid: &TimeGrid,
    opts: &DetectOptions,
    exec: &impl Executor,
) -> Result<RotatedMarginalReport> {
    if psi_list.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one preparation state is required".into(),
        ));
    }
    let free = FreeEvolution::new(model)?;
    let mut branches = Vec::with_capacity(psi_list.len());
    for psi in psi_list {
        let (probability, environment) = projective_outcome(state, psi)?;
        let prepared = prep_rotate(&prep_projective(state, psi)?, l)?;
        let report = detect_wfpc_with(&free, &prepared, family, grid, opts, exec)?;
        branches.push(BranchReport {
            probability,
            environment,
            contrast: report.contrast,
            profile: report.profile,
        });
    }
    let mut max_env_distance: f64 = 0.0;
    for i in 0..branches.len() {
        for j in i + 1..branches.len() {
            max_env_distance =
                max_env_distance.max(trace_distance(&branches[i].environment, &branches[j].environment)?);
        }
    }
    let environments_differ = max_env_distance > ENVIRONMENT_DISTANCE_FLOOR;
    Ok(RotatedMarginalReport {
        branches,
        max_env_distance,
        environments_differ,
        correlations_witnessed: environments_differ,
    })
}

/// `(|g⟩ + |e⟩)/√2`-style mixing of system levels `g` and `e`, identity
/// elsewhere.
pub fn hadamard_mixing(dim: usize, g: usize, e: usize) -> ComplexMatrix {
    let s = core::f64::consts::FRAC_1_SQRT_2;
    let mut l = ComplexMatrix::identity(dim);
    l[(g, g)] = Complex64::new(s, 0.0);
    l[(g, e)] = Complex64::new(s, 0.0);
    l[(e, g)] = Complex64::new(s, 0.0);
    l[(e, e)] = Complex64::new(-s, 0.0);
    l
}
