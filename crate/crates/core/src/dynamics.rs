//! Exact and second-order perturbative propagation of the joint state.
//!
//! Both propagators work in the eigenbasis of `H₀`, where free evolution is a
//! diagonal phase. The interaction-picture frame is anchored at the start of
//! the field grid: `U₀(t) = exp(−iH₀(t − t₀))`.
//!
//! The perturbative population uses `p = tr(P R_I)`, valid when `P⊗𝕀`
//! commutes with `H₀`, and integrates
//!
//! ```text
//! ṗ₁(s) = −i tr(V_I(s)[R₀, P])
//! ṗ₂(s) = −tr(V_I(s)[Q(s), P]),   Q(s) = ∫₀ˢ [V_I(u), R₀] du
//! ```
//!
//! with the trapezoid rule on the propagation grid.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::math;
use crate::models::{joint_ge_norm, CorrelatedState, SystemModel};
use crate::pulses::{to_time_domain, SpectralPulse, TimeField, TimeSamples};
use crate::tensor::{self, ComplexMatrix, DensityMatrix, SpaceLayout, Tolerances};
use crate::{Error, Result};

/// Largest `‖[P⊗𝕀, H₀]‖_max` accepted by the perturbative propagator.
pub const CONDITION2_TOLERANCE: f64 = 1e-8;

/// Largest g–e block norm accepted as manifold-diagonal.
pub const DIAGONAL_TOLERANCE: f64 = 1e-10;

/// Relative yield spread below which a family counts as phase independent.
pub const PHASE_INDEPENDENCE_TOLERANCE: f64 = 1e-9;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `steps` equal intervals on `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, steps: usize) -> Result<Self> {
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::InvalidGrid(format!("need t1 > t0, got [{t0}, {t1}]")));
        }
        if steps == 0 {
            return Err(Error::InvalidGrid("at least one step is required".into()));
        }
        Ok(Self { t0, t1, steps })
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    /// Half-step samples (`2·steps + 1` points), enough for both propagators.
    pub fn field_samples(&self) -> TimeSamples {
        TimeSamples {
            t_start: self.t0,
            t_step: self.dt() / 2.0,
            count: 2 * self.steps + 1,
        }
    }

    /// Same interval with twice as many steps.
    pub fn refined(&self) -> Self {
        Self {
            steps: self.steps * 2,
            ..*self
        }
    }
}

/// Field of `pulse` sampled for propagation on `grid`.
pub fn synthesize(pulse: &SpectralPulse, grid: &TimeGrid) -> Result<TimeField> {
    to_time_domain(pulse, grid.field_samples())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Exact,
    Perturbative2,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Perturbative2 => "pert2",
        }
    }
}

/// Time stepper for [`exact_propagate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stepper {
    /// `e^{−iH₀Δt/2} e^{−iV(t_mid)Δt} e^{−iH₀Δt/2}`
    #[default]
    Split,
    /// `e^{−i(H₀ + V(t_mid))Δt}`
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactOptions {
    pub stepper: Stepper,
    pub keep_final_state: bool,
    /// Compare against a run at twice the step and fail if `p(T)` moves by
    /// more than this.
    pub probe_convergence: Option<f64>,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            stepper: Stepper::Split,
            keep_final_state: true,
            probe_convergence: None,
        }
    }
}

/// Excited-manifold population along a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub populations: Vec<f64>,
    /// `p(t₀)`
    pub p0: f64,
    /// `p(t_k) − p(t₀)`, accumulated directly by the perturbative method.
    pub changes: Vec<f64>,
    pub final_state: Option<DensityMatrix>,
    pub method: Method,
    /// `|tr R(T) − tr R(t₀)|`
    pub trace_drift: f64,
    pub min_eigenvalue: Option<f64>,
    /// `|p(T) − p_coarse(T)|` when the convergence probe ran.
    pub convergence_gap: Option<f64>,
}

impl Trajectory {
    pub fn final_population(&self) -> f64 {
        *self.populations.last().expect("trajectory has at least one point")
    }

    pub fn final_change(&self) -> f64 {
        *self.changes.last().expect("trajectory has at least one point")
    }
}

/// Cumulative first- and second-order population changes.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbativeOrders {
    pub times: Vec<f64>,
    pub p0: f64,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

/// Eigendecomposition of `H₀` with the operators both propagators need,
/// reusable across phase masks.
#[derive(Debug, Clone)]
pub struct FreeEvolution {
    layout: SpaceLayout,
    energies: Vec<f64>,
    vectors: ComplexMatrix,
    /// `P⊗𝕀` in the eigenbasis.
    proj: ComplexMatrix,
    /// `M⊗𝕀` in the eigenbasis.
    excitation: ComplexMatrix,
    /// System-space raising operator.
    excitation_s: ComplexMatrix,
    /// `(i, j, W†(|i⟩⟨j|⊗𝕀)W)` for `i, j` in the support.
    generators: Vec<(usize, usize, ComplexMatrix)>,
    h0: ComplexMatrix,
    proj_joint: ComplexMatrix,
    condition2: f64,
}

impl FreeEvolution {
    pub fn new(model: &SystemModel) -> Result<Self> {
        let eig = tensor::eigh(model.h0())?;
        let layout = model.layout().clone();
        let w = eig.vectors;
        let proj_joint = model.joint_projector();
        let excitation_s = model.excitation_operator();
        let ds = layout.system_dim();
        let support: Vec<usize> = (0..ds)
            .filter(|&i| (0..ds).any(|j| excitation_s[(i, j)] != ZERO || excitation_s[(j, i)] != ZERO))
            .collect();
        let to_eig = |m: &ComplexMatrix| w.adjoint().try_matmul(&m.try_matmul(&w)?);
        let mut generators = Vec::with_capacity(support.len() * support.len());
        for &i in &support {
            for &j in &support {
                let mut unit = ComplexMatrix::zeros(ds, ds);
                unit[(i, j)] = Complex64::new(1.0, 0.0);
                generators.push((i, j, to_eig(&model.embed(&unit)?)?));
            }
        }
        Ok(Self {
            proj: to_eig(&proj_joint)?,
            excitation: to_eig(&model.embed(&excitation_s)?)?,
            condition2: model.condition2_norm(),
            h0: model.h0().clone(),
            layout,
            energies: eig.values,
            vectors: w,
            excitation_s,
            generators,
            proj_joint,
        })
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// `‖[P⊗𝕀, H₀]‖_max` of the underlying model.
    pub fn condition2_norm(&self) -> f64 {
        self.condition2
    }

    fn to_eigenbasis(&self, m: &ComplexMatrix) -> ComplexMatrix {
        &self.vectors.adjoint() * &(m * &self.vectors)
    }

    fn to_product_basis(&self, m: &ComplexMatrix) -> ComplexMatrix {
        (&self.vectors * m).mul_adjoint(&self.vectors)
    }

    /// `U₀(t) = exp(−iH₀t)` in the product basis.
    pub fn propagator(&self, t: f64) -> ComplexMatrix {
        let n = self.energies.len();
        let scaled = ComplexMatrix::from_fn(n, n, |i, k| self.vectors[(i, k)] * math::cis(-self.energies[k] * t));
        scaled.mul_adjoint(&self.vectors)
    }

    /// `U₀(t) r U₀†(t)`
    pub fn evolve(&self, r: &ComplexMatrix, t: f64) -> ComplexMatrix {
        let u = self.propagator(t);
        u.sandwich(r)
    }

    /// `U₀†(τ)(V⊗𝕀)U₀(τ)` for field value `eps` at elapsed time `tau`,
    /// product basis.
    pub fn interaction_v(&self, eps: Complex64, tau: f64) -> ComplexMatrix {
        let v = self.eig_interaction(eps, tau);
        self.to_product_basis(&v)
    }

    /// `e^{iE_a τ}` per eigenvalue.
    fn frame_phases(&self, tau: f64) -> Vec<Complex64> {
        self.energies.iter().map(|&e| math::cis(e * tau)).collect()
    }

    /// `(M⊗𝕀)_I(τ)` in the eigenbasis.
    fn eig_excitation(&self, tau: f64) -> ComplexMatrix {
        let u = self.frame_phases(tau);
        let n = u.len();
        ComplexMatrix::from_fn(n, n, |a, b| self.excitation[(a, b)] * u[a] * u[b].conj())
    }

    fn eig_interaction(&self, eps: Complex64, tau: f64) -> ComplexMatrix {
        let m = self.eig_excitation(tau);
        &m.scale(eps) + &m.adjoint().scale(eps.conj())
    }

    fn check_state(&self, state: &CorrelatedState) -> Result<()> {
        if state.layout() != &self.layout {
            return Err(Error::DimensionMismatch {
                context: "state layout",
                expected: self.layout.joint_dim(),
                found: state.layout().joint_dim(),
            });
        }
        Ok(())
    }

    fn population(&self, r_eig: &ComplexMatrix) -> f64 {
        self.proj.trace_product(r_eig).re
    }

    /// `W†(K⊗𝕀)W` for a system operator `K` equal to the identity outside
    /// the dipole support.
    fn lifted(&self, k: &ComplexMatrix) -> ComplexMatrix {
        let n = self.energies.len();
        let mut out = ComplexMatrix::identity(n);
        for (i, j, g) in &self.generators {
            let mut b = k[(*i, *j)];
            if i == j {
                b -= Complex64::new(1.0, 0.0);
            }
            if b == ZERO {
                continue;
            }
            for r in 0..n {
                for c in 0..n {
                    out[(r, c)] += b * g[(r, c)];
                }
            }
        }
        out
    }

    /// Exact propagation of `state` under `H₀ + V(t)⊗𝕀`.
    pub fn exact(
        &self,
        state: &CorrelatedState,
        field: &TimeField,
        grid: &TimeGrid,
        options: &ExactOptions,
    ) -> Result<Trajectory> {
        self.check_state(state)?;
        let stride = field_stride(field, grid)?;
        if stride % 2 != 0 {
            return Err(Error::FieldMismatch);
        }
        let mut traj = match options.stepper {
            Stepper::Split => self.exact_split(state, field, grid, stride, options.keep_final_state)?,
            Stepper::Midpoint => self.exact_midpoint(state, field, grid, stride, options.keep_final_state)?,
        };
        if let Some(tolerance) = options.probe_convergence {
            if !grid.steps.is_multiple_of(2) {
                return Err(Error::InvalidGrid(
                    "the convergence probe needs an even step count".into(),
                ));
            }
            let coarse = TimeGrid {
                steps: grid.steps / 2,
                ..*grid
            };
            let coarse_options = ExactOptions {
                keep_final_state: false,
                probe_convergence: None,
                ..*options
            };
            let other = self.exact(state, field, &coarse, &coarse_options)?;
            let change = math::abs(other.final_population() - traj.final_population());
            traj.convergence_gap = Some(change);
            if !(change < tolerance) {
                return Err(Error::GridNotConverged { change, tolerance });
            }
        }
        Ok(traj)
    }

    fn exact_split(
        &self,
        state: &CorrelatedState,
        field: &TimeField,
        grid: &TimeGrid,
        stride: usize,
        keep: bool,
    ) -> Result<Trajectory> {
        let dt = grid.dt();
        let n = self.energies.len();
        let half: Vec<Complex64> = self.energies.iter().map(|&e| math::cis(-e * dt / 2.0)).collect();
        let apply_half = |r: &mut ComplexMatrix| {
            for a in 0..n {
                for b in 0..n {
                    r[(a, b)] *= half[a] * half[b].conj();
                }
            }
        };
        let mut r = self.to_eigenbasis(state.matrix());
        let trace0 = r.trace().re;
        let p0 = self.population(&r);
        let mut populations = Vec::with_capacity(grid.steps + 1);
        populations.push(p0);
        for k in 0..grid.steps {
            apply_half(&mut r);
            let eps = field.values()[k * stride + stride / 2];
            if eps != ZERO {
                let kick = tensor::herm_exp(&self.system_control(eps), Complex64::new(0.0, -dt))?;
                let lifted = self.lifted(&kick);
                r = (&lifted * &r).mul_adjoint(&lifted);
            }
            apply_half(&mut r);
            populations.push(self.population(&r));
        }
        let trace_drift = math::abs(r.trace().re - trace0);
        let final_r = if keep { Some(self.to_product_basis(&r)) } else { None };
        self.finish(grid, p0, populations, final_r, trace_drift)
    }

    fn exact_midpoint(
        &self,
        state: &CorrelatedState,
        field: &TimeField,
        grid: &TimeGrid,
        stride: usize,
        keep: bool,
    ) -> Result<Trajectory> {
        let dt = grid.dt();
        let mut r = state.matrix().clone();
        let trace0 = r.trace().re;
        let p0 = self.proj_joint.trace_product(&r).re;
        let mut populations = Vec::with_capacity(grid.steps + 1);
        populations.push(p0);
        let ie = ComplexMatrix::identity(self.layout.env_dim());
        for k in 0..grid.steps {
            let eps = field.values()[k * stride + stride / 2];
            let h = &self.h0 + &tensor::kron(&self.system_control(eps), &ie)?;
            let u = tensor::herm_exp(&h, Complex64::new(0.0, -dt))?;
            r = u.sandwich(&r);
            populations.push(self.proj_joint.trace_product(&r).re);
        }
        let trace_drift = math::abs(r.trace().re - trace0);
        self.finish(grid, p0, populations, keep.then_some(r), trace_drift)
    }

    fn system_control(&self, eps: Complex64) -> ComplexMatrix {
        let m = &self.excitation_s;
        &m.scale(eps) + &m.adjoint().scale(eps.conj())
    }

    fn finish(
        &self,
        grid: &TimeGrid,
        p0: f64,
        populations: Vec<f64>,
        final_r: Option<ComplexMatrix>,
        trace_drift: f64,
    ) -> Result<Trajectory> {
        let tol = Tolerances {
            psd_floor: -1e-9,
            ..Tolerances::default()
        };
        let (final_state, min_eigenvalue) = match final_r {
            Some(r) => {
                let r = (&r + &r.adjoint()).scale_real(0.5);
                let dm = tensor::validate_density_with(&r, &self.layout, &tol)?;
                let min = dm.min_eigenvalue();
                (Some(dm), Some(min))
            }
            None => (None, None),
        };
        Ok(Trajectory {
            times: grid.times(),
            changes: populations.iter().map(|p| p - p0).collect(),
            populations,
            p0,
            final_state,
            method: Method::Exact,
            trace_drift,
            min_eigenvalue,
            convergence_gap: None,
        })
    }

    /// Cumulative first- and second-order population changes.
    pub fn perturbative_orders(
        &self,
        state: &CorrelatedState,
        field: &TimeField,
        grid: &TimeGrid,
    ) -> Result<PerturbativeOrders> {
        self.check_state(state)?;
        if !(self.condition2 <= CONDITION2_TOLERANCE) {
            return Err(Error::FreeEvolutionExcites { norm: self.condition2 });
        }
        let stride = field_stride(field, grid)?;
        let dt = grid.dt();
        let r0 = self.to_eigenbasis(state.matrix());
        let p0 = self.population(&r0);
        let n = r0.rows();

        let mut z = ComplexMatrix::zeros(n, n);
        let mut v_prev: Option<ComplexMatrix> = None;
        let mut rates_prev = (0.0, 0.0);
        let mut first = Vec::with_capacity(grid.steps + 1);
        let mut second = Vec::with_capacity(grid.steps + 1);
        let (mut acc1, mut acc2) = (0.0, 0.0);
        for k in 0..=grid.steps {
            let eps = field.values()[k * stride];
            let m = self.eig_excitation(k as f64 * dt);
            let m_dag = m.adjoint();
            let v = &m.scale(eps) + &m_dag.scale(eps.conj());
            // [P, V_I] = εM_I − ε*M_I†, since P commutes with U₀.
            let y = &m.scale(eps) - &m_dag.scale(eps.conj());
            if let Some(vp) = &v_prev {
                z = &z + &(vp + &v).scale_real(dt / 2.0);
            }
            // Q = [Z, R₀] = ZR₀ − (ZR₀)† for Hermitian Z and R₀.
            let zr = &z * &r0;
            let q = &zr - &zr.adjoint();
            let rate1 = y.trace_product(&r0).im;
            let rate2 = -q.trace_product(&y).re;
            if k > 0 {
                acc1 += 0.5 * dt * (rates_prev.0 + rate1);
                acc2 += 0.5 * dt * (rates_prev.1 + rate2);
            }
            first.push(acc1);
            second.push(acc2);
            rates_prev = (rate1, rate2);
            v_prev = Some(v);
        }
        Ok(PerturbativeOrders {
            times: grid.times(),
            p0,
            first,
            second,
        })
    }

    /// Second-order perturbative population.
    pub fn perturbative(&self, state: &CorrelatedState, field: &TimeField, grid: &TimeGrid) -> Result<Trajectory> {
        let orders = self.perturbative_orders(state, field, grid)?;
        let changes: Vec<f64> = orders.first.iter().zip(&orders.second).map(|(a, b)| a + b).collect();
        Ok(Trajectory {
            times: orders.times,
            populations: changes.iter().map(|c| orders.p0 + c).collect(),
            p0: orders.p0,
            changes,
            final_state: None,
            method: Method::Perturbative2,
            trace_drift: 0.0,
            min_eigenvalue: None,
            convergence_gap: None,
        })
    }

    /// Runs `method` for `pulse` on `grid`.
    pub fn run(
        &self,
        state: &CorrelatedState,
        pulse: &SpectralPulse,
        grid: &TimeGrid,
        method: Method,
        options: &ExactOptions,
    ) -> Result<Trajectory> {
        let field = synthesize(pulse, grid)?;
        self.run_field(state, &field, grid, method, options)
    }

    pub fn run_field(
        &self,
        state: &CorrelatedState,
        field: &TimeField,
        grid: &TimeGrid,
        method: Method,
        options: &ExactOptions,
    ) -> Result<Trajectory> {
        match method {
            Method::Exact => self.exact(state, field, grid, options),
            Method::Perturbative2 => self.perturbative(state, field, grid),
        }
    }

    /// Closed-form first-order rate `2 Im(ε tr(M_I(τ) R₀))`, contracting the
    /// g–e block of `R₀` with the excited-row, ground-column block of the
    /// interaction-picture dipole. For an uncoupled environment `M_I` is
    /// `μ̃(τ)⊗𝕀` and this reduces to `μ̃` weighted by the environmental trace
    /// of each coherence block.
    pub fn first_order_rate(&self, state: &CorrelatedState, eps: Complex64, tau: f64) -> Result<f64> {
        self.check_state(state)?;
        if !(self.condition2 <= CONDITION2_TOLERANCE) {
            return Err(Error::FreeEvolutionExcites { norm: self.condition2 });
        }
        let m_i = self.to_product_basis(&self.eig_excitation(tau));
        let r0 = state.matrix();
        let de = self.layout.env_dim();
        let d = self.layout.joint_dim();
        let mut acc = ZERO;
        for row in 0..d {
            if !self.layout.is_excited(row / de) {
                continue;
            }
            for col in 0..d {
                if self.layout.is_excited(col / de) {
                    continue;
                }
                // c-coefficient ⟨g β|R₀|e α⟩ against ⟨e α|M_I|g β⟩.
                acc += m_i[(row, col)] * r0[(col, row)];
            }
        }
        Ok(2.0 * (eps * acc).im)
    }
}

/// Samples of `field` per grid step, checking alignment and coverage.
fn field_stride(field: &TimeField, grid: &TimeGrid) -> Result<usize> {
    let dt = grid.dt();
    if math::abs(field.t_start() - grid.t0) > 1e-9 * dt {
        return Err(Error::FieldMismatch);
    }
    let ratio = dt / field.t_step();
    let stride = libm::round(ratio);
    if stride < 1.0 || math::abs(ratio - stride) > 1e-9 * ratio {
        return Err(Error::FieldMismatch);
    }
    let stride = stride as usize;
    if field.len() < grid.steps * stride + 1 {
        return Err(Error::FieldMismatch);
    }
    Ok(stride)
}

/// Exact propagation with a fresh eigendecomposition of `H₀`.
pub fn exact_propagate(
    model: &SystemModel,
    state: &CorrelatedState,
    field: &TimeField,
    grid: &TimeGrid,
    options: &ExactOptions,
) -> Result<Trajectory> {
    FreeEvolution::new(model)?.exact(state, field, grid, options)
}

/// Second-order perturbative population. Refuses models that do not conserve
/// the excited-manifold population.
pub fn perturbative_p(
    model: &SystemModel,
    state: &CorrelatedState,
    field: &TimeField,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    FreeEvolution::new(model)?.perturbative(state, field, grid)
}

/// `V_I(t) = U₀†(V(t)⊗𝕀)U₀` with the frame anchored at the field's first
/// sample; `t` must be a sample time.
pub fn interaction_v(model: &SystemModel, field: &TimeField, t: f64) -> Result<ComplexMatrix> {
    let eps = field.value_at(t)?;
    Ok(FreeEvolution::new(model)?.interaction_v(eps, t - field.t_start()))
}

/// Closed-form first-order rate at sample time `t`; see
/// [`FreeEvolution::first_order_rate`].
pub fn first_order_rate_analytic(
    model: &SystemModel,
    state: &CorrelatedState,
    field: &TimeField,
    t: f64,
) -> Result<f64> {
    let eps = field.value_at(t)?;
    FreeEvolution::new(model)?.first_order_rate(state, eps, t - field.t_start())
}

/// Second-order yields of a manifold-diagonal state across a phase family.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrelationReport {
    /// `p(T) − p(t₀)` per mask.
    pub changes: Vec<f64>,
    pub p0: f64,
    /// `(max − min)/max|Δp|`, zero when every change vanishes.
    pub relative_spread: f64,
    pub phase_independent: bool,
}

/// Runs the perturbative pipeline for every pulse of `family` and reports
/// how much the final yield depends on the phase mask.
pub fn second_order_autocorrelation_check(
    model: &SystemModel,
    state: &CorrelatedState,
    family: &[SpectralPulse],
    grid: &TimeGrid,
) -> Result<AutocorrelationReport> {
    let norm = joint_ge_norm(state.matrix(), state.layout());
    if norm > DIAGONAL_TOLERANCE {
        return Err(Error::NotManifoldDiagonal { norm });
    }
    let free = FreeEvolution::new(model)?;
    let mut changes = Vec::with_capacity(family.len());
    let mut p0 = 0.0;
    for pulse in family {
        let traj = free.perturbative(state, &synthesize(pulse, grid)?, grid)?;
        p0 = traj.p0;
        changes.push(traj.final_change());
    }
    let relative_spread = relative_spread(&changes);
    Ok(AutocorrelationReport {
        changes,
        p0,
        phase_independent: relative_spread <= PHASE_INDEPENDENCE_TOLERANCE,
        relative_spread,
    })
}

/// `(max − min)/max|x|`, or zero for an all-zero input.
pub fn relative_spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = values.iter().fold(0.0f64, |m, v| m.max(math::abs(*v)));
    if scale == 0.0 {
        0.0
    } else {
        (max - min) / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_h0_commuting, build_h0_noncommuting, gibbs_state};
    use crate::pulses::{phase_family, PhaseFamily};
    use crate::tensor::kron;
    use alloc::vec;
    use core::f64::consts::FRAC_1_SQRT_2;

    fn layout(ns: usize, ne: usize) -> SpaceLayout {
        SpaceLayout::new(1, ns - 1, vec![ne]).unwrap()
    }

    fn pulse(lambda: f64) -> SpectralPulse {
        SpectralPulse::gaussian(1.0, 0.2, 6.0, 0.05, lambda).unwrap()
    }

    fn grid() -> TimeGrid {
        TimeGrid::new(-30.0, 30.0, 1500).unwrap()
    }

    /// `(|+⟩⟨+|) ⊗ thermal(E)` on a two-level system.
    fn coherent_state(model: &SystemModel) -> CorrelatedState {
        let s = FRAC_1_SQRT_2;
        let plus = ComplexMatrix::outer(&[Complex64::new(s, 0.0), Complex64::new(s, 0.0)]);
        let de = model.layout().env_dim();
        let tau = ComplexMatrix::diag_real(&(0..de).map(|k| math::exp(-(k as f64))).collect::<Vec<_>>());
        let tau = tau.scale_real(1.0 / tau.trace().re);
        CorrelatedState::product(&plus, &tau, model.layout()).unwrap()
    }

    #[test]
    fn zero_field_commuting_model_keeps_population() {
        let l = layout(4, 4);
        let m = build_h0_commuting(1.0, &[0.8], 0.1, &l).unwrap();
        let mut rng = crate::tensor::testutil::rng(4);
        let r = crate::tensor::testutil::random_psd(&mut rng, 16);
        let state = CorrelatedState::from_matrix(&r, &l).unwrap();
        let g = TimeGrid::new(0.0, 20.0, 200).unwrap();
        let field = TimeField::zeros(g.field_samples()).unwrap();
        let t = exact_propagate(&m, &state, &field, &g, &ExactOptions::default()).unwrap();
        assert!(t.changes.iter().all(|c| c.abs() <= 1e-12), "{:?}", t.changes.last());
    }

    #[test]
    fn zero_field_noncommuting_gibbs_is_stationary_but_product_is_not() {
        let l = layout(4, 4);
        let m = build_h0_noncommuting(1.0, &[0.8], 0.1, &l).unwrap();
        let g = TimeGrid::new(0.0, 20.0, 200).unwrap();
        let field = TimeField::zeros(g.field_samples()).unwrap();
        let gibbs = gibbs_state(&m, 1.0).unwrap();
        let t = exact_propagate(&m, &gibbs, &field, &g, &ExactOptions::default()).unwrap();
        assert!(t.changes.iter().all(|c| c.abs() <= 1e-12));
        // A product of the marginals is not stationary, and the bare coupling
        // moves population.
        let product = CorrelatedState::product(&gibbs.rho, &gibbs.tau, &l).unwrap();
        let t = exact_propagate(&m, &product, &field, &g, &ExactOptions::default()).unwrap();
        let swing = t.changes.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        assert!(swing > 1e-4, "{swing}");
    }

    #[test]
    fn exact_preserves_trace_and_positivity() {
        let l = layout(2, 3);
        let m = build_h0_noncommuting(1.0, &[0.8], 0.3, &l).unwrap();
        let state = gibbs_state(&m, 0.5).unwrap();
        let field = synthesize(&pulse(0.3), &grid()).unwrap();
        let t = exact_propagate(&m, &state, &field, &grid(), &ExactOptions::default()).unwrap();
        assert!(t.trace_drift <= 1e-10);
        assert!(t.min_eigenvalue.unwrap() >= -1e-9);
        assert!(t.populations.iter().all(|p| *p >= -1e-12 && *p <= 1.0 + 1e-9));
    }

    #[test]
    fn midpoint_converges_to_split() {
        let l = layout(2, 3);
        let m = build_h0_commuting(1.0, &[0.8], 0.1, &l).unwrap();
        let state = coherent_state(&m);
        let midpoint = ExactOptions {
            stepper: Stepper::Midpoint,
            ..ExactOptions::default()
        };
        let gap = |steps: usize| {
            let g = TimeGrid::new(-30.0, 30.0, steps).unwrap();
            let field = synthesize(&pulse(0.01), &g).unwrap();
            let split = exact_propagate(&m, &state, &field, &g, &ExactOptions::default()).unwrap();
            let mid = exact_propagate(&m, &state, &field, &g, &midpoint).unwrap();
            (split.final_population() - mid.final_population()).abs()
        };
        let (coarse, fine) = (gap(1500), gap(3000));
        assert!(coarse < 1e-5, "{coarse}");
        // Midpoint stepping is second order; split is far more accurate here.
        assert!((coarse / fine - 4.0).abs() < 0.2, "{coarse} {fine}");
    }

    #[test]
    fn convergence_probe_reports_gap() {
        let l = layout(2, 3);
        let m = build_h0_commuting(1.0, &[0.8], 0.1, &l).unwrap();
        let state = coherent_state(&m);
        let field = synthesize(&pulse(0.01), &grid()).unwrap();
        let opts = ExactOptions {
            probe_convergence: Some(1e-9),
            ..ExactOptions::default()
        };
        let t = exact_propagate(&m, &state, &field, &grid(), &opts).unwrap();
        assert!(t.convergence_gap.unwrap() < 1e-9);
        let strict = ExactOptions {
            probe_convergence: Some(1e-300),
            ..opts
        };
        assert!(matches!(
            exact_propagate(&m, &state, &field, &grid(), &strict),
            Err(Error::GridNotConverged { .. })
        ));
    }

    #[test]
    fn field_must_cover_grid() {
        let l = layout(2, 2);
        let m = build_h0_commuting(1.0, &[0.8], 0.0, &l).unwrap();
        let state = coherent_state(&m);
        let short = to_time_domain(
            &pulse(0.01),
            TimeSamples {
                t_start: -30.0,
                t_step: 0.02,
                count: 10,
            },
        )
        .unwrap();
        assert_eq!(
            exact_propagate(&m, &state, &short, &grid(), &ExactOptions::default()),
            Err(Error::FieldMismatch)
        );
    }

    #[test]
    fn interaction_frame_identities() {
        let l = layout(2, 3);
        let m = build_h0_commuting(1.0, &[0.8], 0.0, &l).unwrap();
        let field = synthesize(&pulse(0.3), &grid()).unwrap();
        let v0 = interaction_v(&m, &field, -30.0).unwrap();
        let direct = kron(&m.system_control(field.values()[0]), &ComplexMatrix::identity(3)).unwrap();
        assert!(v0.max_abs_diff(&direct) < 1e-15);

        // ⟨e|V_I(t)|g⟩ = μ_eg ε(t) e^{iω_s(t − t₀)} when uncoupled.
        let t = -1.0;
        let eps = field.value_at(t).unwrap();
        let vt = interaction_v(&m, &field, t).unwrap();
        let expect = eps * FRAC_1_SQRT_2 * math::cis(1.0 * (t + 30.0));
        for k in 0..3 {
            assert!((vt[(3 + k, k)] - expect).norm() < 1e-12);
        }
        assert!(vt.hermiticity_defect() <= 1e-12);
    }

    #[test]
    fn interaction_picture_preserves_norm() {
        let l = layout(3, 3);
        let m = build_h0_commuting(1.0, &[0.8], 0.2, &l).unwrap();
        let field = synthesize(&pulse(0.3), &grid()).unwrap();
        let t = 0.4;
        let eps = field.value_at(t).unwrap();
        let v = kron(&m.system_control(eps), &ComplexMatrix::identity(3)).unwrap();
        let vi = interaction_v(&m, &field, t).unwrap();
        let top = |x: &ComplexMatrix| {
            tensor::eigh(x)
                .unwrap()
                .values
                .iter()
                .fold(0.0f64, |a, e| a.max(e.abs()))
        };
        assert!((top(&v) - top(&vi)).abs() < 1e-12);
    }

    #[test]
    fn perturbative_refuses_noncommuting_model() {
        let l = layout(2, 2);
        let m = build_h0_noncommuting(1.0, &[0.8], 0.1, &l).unwrap();
        let state = gibbs_state(&m, 1.0).unwrap();
        let field = synthesize(&pulse(0.01), &grid()).unwrap();
        assert!(matches!(
            perturbative_p(&m, &state, &field, &grid()),
            Err(Error::FreeEvolutionExcites { .. })
        ));
    }

    #[test]
    fn first_order_term_integrates_closed_form() {
        let l = layout(2, 3);
        let m = build_h0_commuting(1.0, &[0.8], 0.2, &l).unwrap();
        let state = coherent_state(&m);
        let g = TimeGrid::new(-30.0, 30.0, 600).unwrap();
        let field = synthesize(&pulse(0.01), &g).unwrap();
        let free = FreeEvolution::new(&m).unwrap();
        let orders = free.perturbative_orders(&state, &field, &g).unwrap();
        let rates: Vec<f64> = (0..=g.steps)
            .map(|k| {
                free.first_order_rate(&state, field.values()[2 * k], k as f64 * g.dt())
                    .unwrap()
            })
            .collect();
        let mut integral = 0.0;
        for k in 1..rates.len() {
            integral += 0.5 * g.dt() * (rates[k - 1] + rates[k]);
        }
        assert!((integral - orders.first.last().unwrap()).abs() <= 1e-10);
        assert!(integral.abs() > 1e-4);
    }

    #[test]
    fn first_order_vanishes_without_coherence() {
        let l = layout(4, 3);
        let m = build_h0_commuting(1.0, &[0.8], 0.1, &l).unwrap();
        let state = gibbs_state(&m, 1.0).unwrap();
        let free = FreeEvolution::new(&m).unwrap();
        for k in 0..20 {
            let r = free
                .first_order_rate(&state, Complex64::new(0.3, -0.2), k as f64 * 0.7)
                .unwrap();
            assert!(r.abs() <= 1e-12);
        }
    }

    #[test]
    fn first_order_rate_flips_with_field_sign() {
        let l = layout(2, 2);
        let m = build_h0_commuting(1.0, &[0.8], 0.0, &l).unwrap();
        let state = coherent_state(&m);
        let free = FreeEvolution::new(&m).unwrap();
        let eps = Complex64::new(0.01, 0.0);
        for tau in [0.0, 0.3, 1.7] {
            let a = free.first_order_rate(&state, eps, tau).unwrap();
            let b = free.first_order_rate(&state, -eps, tau).unwrap();
            assert!((a + b).abs() < 1e-18);
            // c = ½, μ̃ = e^{iτ}/√2: ṗ = 2·ε·½·sin(τ)/√2.
            assert!((a - 0.01 * tau.sin() * FRAC_1_SQRT_2).abs() < 1e-15);
        }
    }

    #[test]
    fn second_order_scales_quadratically() {
        let l = layout(2, 3);
        let m = build_h0_commuting(1.0, &[0.8], 0.2, &l).unwrap();
        let state = gibbs_state(&m, 1.0).unwrap();
        let free = FreeEvolution::new(&m).unwrap();
        let run = |lambda: f64| {
            let f = synthesize(&pulse(lambda), &grid()).unwrap();
            free.perturbative_orders(&state, &f, &grid()).unwrap()
        };
        let (a, b) = (run(0.02), run(0.01));
        let ratio = a.second.last().unwrap() / b.second.last().unwrap();
        assert!((ratio - 4.0).abs() < 0.04, "{ratio}");
        assert!(a.first.last().unwrap().abs() <= 1e-15);
    }

    #[test]
    fn autocorrelation_check_rejects_coherent_state() {
        let l = layout(2, 2);
        let m = build_h0_commuting(1.0, &[0.8], 0.0, &l).unwrap();
        let fam = phase_family(&pulse(0.01), PhaseFamily::Random, 2, 0).unwrap();
        assert!(matches!(
            second_order_autocorrelation_check(&m, &coherent_state(&m), &fam, &grid()),
            Err(Error::NotManifoldDiagonal { .. })
        ));
    }

    #[test]
    fn relative_spread_edge_cases() {
        assert_eq!(relative_spread(&[0.0, 0.0]), 0.0);
        assert_eq!(relative_spread(&[1.0, 1.0]), 0.0);
        assert!((relative_spread(&[1.0, 0.5]) - 0.5).abs() < 1e-15);
    }
}
