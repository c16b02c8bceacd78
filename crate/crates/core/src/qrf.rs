//! Two-time correlation functions and the regression (factorization)
//! approximation.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::dynamics::{FreeEvolution, TimeGrid};
use crate::exec::Executor;
use crate::math;
use crate::models::{block_report, CorrelatedState, SystemModel};
use crate::pulses::SpectralPulse;
use crate::tensor::{self, kron, partial_trace_layout, ComplexMatrix, Subsystem};
use crate::witness::{run_witness_protocol_with, ProtocolOptions, WitnessVerdict, CONDITION_TOLERANCE};
use crate::{Error, Result};

/// Default deviation above which the regression formula counts as violated.
pub const DEFAULT_QRF_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QrfReport {
    pub t1: f64,
    pub t2: f64,
    pub exact: Complex64,
    pub regression: Complex64,
    /// `|exact − regression|`
    pub deviation: f64,
    /// g–e sector max-norm of `χ(t₁)`.
    pub chi_ge_norm: f64,
    /// Max-norm of `χ(t₁)`.
    pub chi_norm: f64,
    pub violated: bool,
}

fn check_times(t1: f64, t2: f64) -> Result<()> {
    if !(t1 >= 0.0 && t2 >= t1 && t2.is_finite()) {
        return Err(Error::InvalidParameter(alloc::format!(
            "need 0 <= t1 <= t2, got t1={t1}, t2={t2}"
        )));
    }
    Ok(())
}

fn check_system_op(model: &SystemModel, op: &ComplexMatrix, context: &'static str) -> Result<()> {
    let ds = model.layout().system_dim();
    if op.rows() != ds || op.cols() != ds {
        return Err(Error::DimensionMismatch {
            context,
            expected: ds,
            found: op.rows(),
        });
    }
    Ok(())
}

/// `(μ, μ)`: the dipole autocorrelation. `⟨P(t₂)μ(t₁)⟩` vanishes by parity
/// on the oscillator models.
pub fn default_operators(model: &SystemModel) -> (ComplexMatrix, ComplexMatrix) {
    (model.dipole().clone(), model.dipole().clone())
}

/// `⟨B(t₂)A(t₁)⟩ = tr(U₀†(t₂)BU₀(t₂) U₀†(t₁)AU₀(t₁) R(0))`
pub fn exact_two_time(
    model: &SystemModel,
    r0: &CorrelatedState,
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    t1: f64,
    t2: f64,
) -> Result<Complex64> {
    check_times(t1, t2)?;
    check_system_op(model, a, "operator A")?;
    check_system_op(model, b, "operator B")?;
    let u1 = tensor::herm_exp(model.h0(), Complex64::new(0.0, -t1))?;
    let u2 = tensor::herm_exp(model.h0(), Complex64::new(0.0, -t2))?;
    Ok(heisenberg(&u1, &u2, &model.embed(a)?, &model.embed(b)?, r0.matrix()))
}

fn heisenberg(
    u1: &ComplexMatrix,
    u2: &ComplexMatrix,
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    r0: &ComplexMatrix,
) -> Complex64 {
    let bh = &u2.adjoint() * &(b * u2);
    let ah = &u1.adjoint() * &(a * u1);
    (&bh * &ah).trace_product(r0)
}

/// `tr_S(B · tr_E(U₀(Δt)(A⊗𝕀)(ρ(t₁)⊗τ(t₁))U₀†(Δt)))`
fn regression_from(
    free: &FreeEvolution,
    rt1: &CorrelatedState,
    a_joint: &ComplexMatrix,
    b: &ComplexMatrix,
    dt: f64,
) -> Result<Complex64> {
    let layout = rt1.layout();
    let fact = kron(&rt1.rho, &rt1.tau)?;
    let u = free.propagator(dt);
    let moved = &u * &(&(a_joint * &fact) * &u.adjoint());
    let z = partial_trace_layout(&moved, layout, Subsystem::System)?;
    Ok(b.trace_product(&z))
}

fn state_at(free: &FreeEvolution, r0: &CorrelatedState, t: f64) -> Result<CorrelatedState> {
    let r = free.evolve(r0.matrix(), t);
    CorrelatedState::from_matrix(&(&r + &r.adjoint()).scale_real(0.5), r0.layout())
}

/// Replaces `R(t₁)` by the product of its marginals and propagates `A` on
/// that surrogate to `t₂`.
pub fn regression_two_time(
    model: &SystemModel,
    r0: &CorrelatedState,
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    t1: f64,
    t2: f64,
) -> Result<Complex64> {
    check_times(t1, t2)?;
    check_system_op(model, a, "operator A")?;
    check_system_op(model, b, "operator B")?;
    let free = FreeEvolution::new(model)?;
    let rt1 = state_at(&free, r0, t1)?;
    regression_from(&free, &rt1, &model.embed(a)?, b, t2 - t1)
}

/// Matrix of `Φ_{t₁→t₂}[X] = tr_E(U₀(Δt)(X⊗τ(t₁))U₀†(Δt))` on the basis
/// `|i⟩⟨j|`, column index `i·d_S + j`.
pub fn phi_matrix(model: &SystemModel, r0: &CorrelatedState, t1: f64, t2: f64) -> Result<ComplexMatrix> {
    check_times(t1, t2)?;
    let free = FreeEvolution::new(model)?;
    let tau = state_at(&free, r0, t1)?.tau;
    let ds = model.layout().system_dim();
    let u = free.propagator(t2 - t1);
    let mut phi = ComplexMatrix::zeros(ds * ds, ds * ds);
    for i in 0..ds {
        for j in 0..ds {
            let mut unit = ComplexMatrix::zeros(ds, ds);
            unit[(i, j)] = Complex64::new(1.0, 0.0);
            let image = partial_trace_layout(&u.sandwich(&kron(&unit, &tau)?), model.layout(), Subsystem::System)?;
            for k in 0..ds {
                for l in 0..ds {
                    phi[(k * ds + l, i * ds + j)] = image[(k, l)];
                }
            }
        }
    }
    Ok(phi)
}

/// Applies a [`phi_matrix`] to a system operator.
pub fn apply_phi(phi: &ComplexMatrix, x: &ComplexMatrix) -> ComplexMatrix {
    let ds = x.rows();
    ComplexMatrix::from_fn(ds, ds, |k, l| {
        (0..ds * ds).map(|c| phi[(k * ds + l, c)] * x[(c / ds, c % ds)]).sum()
    })
}

/// One report per `(t₁, t₁ + Δt)`, ordered by `t₁` then `Δt`.
#[allow(clippy::too_many_arguments)]
pub fn qrf_scan(
    model: &SystemModel,
    r0: &CorrelatedState,
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    t1_grid: &[f64],
    dt_grid: &[f64],
    threshold: f64,
    exec: &impl Executor,
) -> Result<Vec<QrfReport>> {
    if t1_grid.is_empty() || dt_grid.is_empty() {
        return Err(Error::InvalidParameter("scan grids must be nonempty".into()));
    }
    check_system_op(model, a, "operator A")?;
    check_system_op(model, b, "operator B")?;
    for &t1 in t1_grid {
        for &dt in dt_grid {
            check_times(t1, t1 + dt)?;
        }
    }
    let free = FreeEvolution::new(model)?;
    let (a_joint, b_joint) = (model.embed(a)?, model.embed(b)?);
    let rows = exec.map(t1_grid.len(), |row| -> Result<Vec<QrfReport>> {
        let t1 = t1_grid[row];
        let rt1 = state_at(&free, r0, t1)?;
        let chi_ge_norm = block_report(&rt1).norm_ge_chi;
        let chi_norm = rt1.chi.max_abs();
        let u1 = free.propagator(t1);
        dt_grid
            .iter()
            .map(|&dt| {
                let t2 = t1 + dt;
                let exact = heisenberg(&u1, &free.propagator(t2), &a_joint, &b_joint, r0.matrix());
                let regression = regression_from(&free, &rt1, &a_joint, b, dt)?;
                let deviation = (exact - regression).norm();
                Ok(QrfReport {
                    t1,
                    t2,
                    exact,
                    regression,
                    deviation,
                    chi_ge_norm,
                    chi_norm,
                    violated: deviation > threshold,
                })
            })
            .collect()
    });
    let mut out = Vec::with_capacity(t1_grid.len() * dt_grid.len());
    for row in rows {
        out.extend(row?);
    }
    Ok(out)
}

/// Free evolution to `t₁`, then the witness protocol on `R(t₁)`. The field
/// sits on `grid` measured from `t₁`.
#[allow(clippy::too_many_arguments)]
pub fn intermediate_wfpc_witness(
    model: &SystemModel,
    r0: &CorrelatedState,
    t1: f64,
    family: &[SpectralPulse],
    grid: &TimeGrid,
    opts: &ProtocolOptions,
    exec: &impl Executor,
) -> Result<WitnessVerdict> {
    check_times(t1, t1)?;
    let free = FreeEvolution::new(model)?;
    let norm = free.condition2_norm();
    if norm > CONDITION_TOLERANCE {
        return Err(Error::FreeEvolutionExcites { norm });
    }
    let rt1 = state_at(&free, r0, t1)?;
    run_witness_protocol_with(&free, model, &rt1, family, grid, opts, exec)
}

/// Environment vector `φ` for which `(|g⟩+|e⟩)/√2 ⊗ φ` loses all system
/// coherence at `t₁` under a model with `[P⊗𝕀, H₀] = 0`, while the joint
/// g–e block stays. Needs one ground and one excited level.
pub fn dephasing_tuned_env_state(model: &SystemModel, t1: f64) -> Result<Vec<Complex64>> {
    let layout = model.layout();
    if layout.ground_dim() != 1 || layout.excited_dim() != 1 {
        return Err(Error::InvalidLayout(
            "dephasing tuning needs one ground and one excited level".into(),
        ));
    }
    let norm = model.condition2_norm();
    if norm > CONDITION_TOLERANCE {
        return Err(Error::FreeEvolutionExcites { norm });
    }
    let de = layout.env_dim();
    let hg = model.h0().block(0, 0, de, de);
    let he = model.h0().block(de, de, de, de);
    // ρ_ge(t₁) ∝ ⟨φ|W|φ⟩
    let w = &tensor::herm_exp(&he, Complex64::new(0.0, t1))? * &tensor::herm_exp(&hg, Complex64::new(0.0, -t1))?;
    let wd = w.adjoint();
    let half = Complex64::new(0.5, 0.0);
    let half_i = Complex64::new(0.0, -0.5);
    for (a, b) in [
        (1.0, core::f64::consts::SQRT_2),
        (1.0, core::f64::consts::PI),
        (0.37, 1.0),
    ] {
        let k = &(&w + &wd).scale(half * a) + &(&w - &wd).scale(half_i * b);
        let k = (&k + &k.adjoint()).scale_real(0.5);
        let v = tensor::eigh(&k)?.vectors;
        let diag = &v.adjoint() * &(&w * &v);
        let off = (0..de)
            .flat_map(|i| (0..de).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .fold(0.0f64, |m, (i, j)| m.max(diag[(i, j)].norm()));
        if off > 1e-9 {
            continue;
        }
        let values: Vec<Complex64> = (0..de).map(|i| diag[(i, i)]).collect();
        let Some(weights) = convex_zero(&values) else {
            return Err(Error::InvalidParameter(alloc::format!(
                "no environment state dephases the system completely at t1={t1}"
            )));
        };
        let phi: Vec<Complex64> = (0..de)
            .map(|row| weights.iter().map(|&(k, p)| v[(row, k)] * math::sqrt(p)).sum())
            .collect();
        return Ok(phi);
    }
    Err(Error::InvalidParameter(
        "free-evolution overlap could not be diagonalized".into(),
    ))
}

/// Convex weights over at most three points with `Σ p_k z_k = 0`, chosen to
/// keep the smallest weight largest.
fn convex_zero(z: &[Complex64]) -> Option<Vec<(usize, f64)>> {
    let mut best: Option<(f64, Vec<(usize, f64)>)> = None;
    let mut offer = |weights: Vec<(usize, f64)>| {
        let min = weights.iter().map(|w| w.1).fold(f64::INFINITY, f64::min);
        if best.as_ref().is_none_or(|b| min > b.0) {
            best = Some((min, weights));
        }
    };
    let cross = |a: Complex64, b: Complex64| a.re * b.im - a.im * b.re;
    let n = z.len();
    for i in 0..n {
        for j in i + 1..n {
            // Opposite points on a line through the origin.
            if math::abs(cross(z[i], z[j])) <= 1e-12 && (z[i].re * z[j].re + z[i].im * z[j].im) < 0.0 {
                let s = z[j].norm() / (z[i].norm() + z[j].norm());
                offer(alloc::vec![(i, s), (j, 1.0 - s)]);
            }
            for k in j + 1..n {
                let det = cross(z[j] - z[i], z[k] - z[i]);
                if math::abs(det) <= 1e-12 {
                    continue;
                }
                let pj = cross(-z[i], z[k] - z[i]) / det;
                let pk = cross(z[j] - z[i], -z[i]) / det;
                let pi = 1.0 - pj - pk;
                if pi >= 0.0 && pj >= 0.0 && pk >= 0.0 {
                    offer(alloc::vec![(i, pi), (j, pj), (k, pk)]);
                }
            }
        }
    }
    best.map(|b| b.1)
}
