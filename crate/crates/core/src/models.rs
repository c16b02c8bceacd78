//! Hamiltonians, projectors, dipoles and initial joint states.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;
use crate::tensor::{self, kron, ops, partial_trace_layout, ComplexMatrix, DensityMatrix, SpaceLayout, Subsystem};
use crate::{Error, Result};

/// Attempts allowed when sampling a witness state.
pub const MAX_CONSTRUCTION_ATTEMPTS: usize = 1000;

/// Largest `β·‖H₀‖` accepted by [`gibbs_state`].
pub const MAX_GIBBS_EXPONENT: f64 = 700.0;

/// Joint Hamiltonian, excited-manifold projector and dipole on a layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    layout: SpaceLayout,
    h0: ComplexMatrix,
    proj_excited: ComplexMatrix,
    dipole: ComplexMatrix,
    coupling: f64,
}

impl SystemModel {
    /// Validates `h0` (joint) and `dipole` (system space) against `layout`.
    pub fn new(layout: SpaceLayout, h0: ComplexMatrix, dipole: ComplexMatrix, coupling: f64) -> Result<Self> {
        let d = layout.joint_dim();
        let ds = layout.system_dim();
        if !h0.is_square() || h0.rows() != d {
            return Err(Error::DimensionMismatch {
                context: "SystemModel h0",
                expected: d,
                found: h0.rows(),
            });
        }
        if !dipole.is_square() || dipole.rows() != ds {
            return Err(Error::DimensionMismatch {
                context: "SystemModel dipole",
                expected: ds,
                found: dipole.rows(),
            });
        }
        for m in [&h0, &dipole] {
            let dev = m.hermiticity_defect();
            if !(dev <= 1e-10) {
                return Err(Error::NonHermitian { deviation: dev });
            }
        }
        for i in 0..ds {
            for j in 0..ds {
                if layout.is_excited(i) == layout.is_excited(j) && dipole[(i, j)] != Complex64::new(0.0, 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "dipole element ({i}, {j}) lies inside a manifold; only g-e blocks may be nonzero"
                    )));
                }
            }
        }
        let proj_excited = excited_projector(&layout);
        Ok(Self {
            layout,
            h0,
            proj_excited,
            dipole,
            coupling,
        })
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn h0(&self) -> &ComplexMatrix {
        &self.h0
    }

    /// System-space `P = Σ|e_i⟩⟨e_i|`.
    pub fn proj_excited(&self) -> &ComplexMatrix {
        &self.proj_excited
    }

    pub fn dipole(&self) -> &ComplexMatrix {
        &self.dipole
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    /// `op ⊗ 𝕀_E`
    pub fn embed(&self, op: &ComplexMatrix) -> Result<ComplexMatrix> {
        if !op.is_square() || op.rows() != self.layout.system_dim() {
            return Err(Error::DimensionMismatch {
                context: "embed",
                expected: self.layout.system_dim(),
                found: op.rows(),
            });
        }
        kron(op, &ComplexMatrix::identity(self.layout.env_dim()))
    }

    /// `P ⊗ 𝕀_E`
    pub fn joint_projector(&self) -> ComplexMatrix {
        self.embed(&self.proj_excited).expect("projector matches layout")
    }

    /// The raising part `M = Pμ(𝕀−P)` of the dipole, so that
    /// `V(t) = ε(t)M + ε*(t)M†`.
    pub fn excitation_operator(&self) -> ComplexMatrix {
        let ds = self.layout.system_dim();
        ComplexMatrix::from_fn(ds, ds, |i, j| {
            if self.layout.is_excited(i) && !self.layout.is_excited(j) {
                self.dipole[(i, j)]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// System-space control Hamiltonian for a field value `eps`.
    pub fn system_control(&self, eps: Complex64) -> ComplexMatrix {
        let m = self.excitation_operator();
        &m.scale(eps) + &m.adjoint().scale(eps.conj())
    }

    /// `‖[P⊗𝕀, H₀]‖_max`
    pub fn condition2_norm(&self) -> f64 {
        tensor::commutator(&self.joint_projector(), &self.h0)
            .expect("square operators on one layout")
            .max_abs()
    }
}

fn excited_projector(layout: &SpaceLayout) -> ComplexMatrix {
    let diag: Vec<f64> = (0..layout.system_dim())
        .map(|i| if layout.is_excited(i) { 1.0 } else { 0.0 })
        .collect();
    ComplexMatrix::diag_real(&diag)
}

/// `𝕀 ⊗ … ⊗ op_k ⊗ … ⊗ 𝕀` acting on environment mode `k` only.
pub fn env_mode_operator(layout: &SpaceLayout, k: usize, op: &ComplexMatrix) -> Result<ComplexMatrix> {
    let dims = layout.env_dims();
    if k >= dims.len() || op.rows() != dims[k] {
        return Err(Error::DimensionMismatch {
            context: "env_mode_operator",
            expected: dims.get(k).copied().unwrap_or(0),
            found: op.rows(),
        });
    }
    let mut out = ComplexMatrix::identity(layout.system_dim());
    for (j, &dj) in dims.iter().enumerate() {
        let factor = if j == k {
            op.clone()
        } else {
            ComplexMatrix::identity(dj)
        };
        out = kron(&out, &factor)?;
    }
    Ok(out)
}

/// Environment-only Hamiltonian `Σ ω_k(n_k + ½)` on `E₁ ⊗ E₂ ⊗ …`.
pub fn env_hamiltonian(env_dims: &[usize], omega_env: &[f64]) -> Result<ComplexMatrix> {
    let total: usize = env_dims.iter().product();
    let mut h = ComplexMatrix::zeros(total, total);
    for (k, (&dk, &wk)) in env_dims.iter().zip(omega_env).enumerate() {
        let mut term = ComplexMatrix::identity(1);
        for (j, &dj) in env_dims.iter().enumerate() {
            let factor = if j == k {
                &ops::number(dk) + &ComplexMatrix::identity(dk).scale_real(0.5)
            } else {
                ComplexMatrix::identity(dj)
            };
            term = kron(&term, &factor)?;
        }
        h = &h + &term.scale_real(wk);
    }
    Ok(h)
}

/// `Σ_k x_k` on the environment factor only.
fn env_quadrature_sum(env_dims: &[usize]) -> Result<ComplexMatrix> {
    let total: usize = env_dims.iter().product();
    let mut x = ComplexMatrix::zeros(total, total);
    for k in 0..env_dims.len() {
        let mut term = ComplexMatrix::identity(1);
        for (j, &dj) in env_dims.iter().enumerate() {
            let factor = if j == k {
                ops::quadrature(dj)
            } else {
                ComplexMatrix::identity(dj)
            };
            term = kron(&term, &factor)?;
        }
        x = &x + &term;
    }
    Ok(x)
}

#[derive(Clone, Copy)]
enum OscillatorCoupling {
    Number,
    Quadrature,
}

fn build_oscillator(
    omega_s: f64,
    omega_env: &[f64],
    g: f64,
    layout: &SpaceLayout,
    kind: OscillatorCoupling,
) -> Result<SystemModel> {
    if layout.ground_dim() != 1 {
        return Err(Error::InvalidLayout(format!(
            "an oscillator system has exactly one ground level, layout has {}",
            layout.ground_dim()
        )));
    }
    if layout.env_dims().is_empty() {
        return Err(Error::InvalidLayout("at least one environment mode is required".into()));
    }
    if omega_env.len() != layout.env_dims().len() {
        return Err(Error::DimensionMismatch {
            context: "environment frequencies",
            expected: layout.env_dims().len(),
            found: omega_env.len(),
        });
    }
    if !omega_s.is_finite() || !g.is_finite() || omega_env.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidParameter(
            "frequencies and coupling must be finite".into(),
        ));
    }
    let ds = layout.system_dim();
    let ie = ComplexMatrix::identity(layout.env_dim());
    let is = ComplexMatrix::identity(ds);
    let hs = (&ops::number(ds) + &is.scale_real(0.5)).scale_real(omega_s);
    let he = env_hamiltonian(layout.env_dims(), omega_env)?;
    let mut h0 = &kron(&hs, &ie)? + &kron(&is, &he)?;
    let s_op = match kind {
        OscillatorCoupling::Number => ops::number(ds),
        OscillatorCoupling::Quadrature => ops::quadrature(ds),
    };
    if g != 0.0 {
        let coupling = kron(&s_op, &env_quadrature_sum(layout.env_dims())?)?.scale_real(g);
        h0 = &h0 + &coupling;
    }
    let x = ops::quadrature(ds);
    let dipole = ComplexMatrix::from_fn(ds, ds, |i, j| {
        if (i == 0) != (j == 0) {
            x[(i, j)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    SystemModel::new(layout.clone(), h0, dipole, g)
}

/// `H₀ = ω_s(n+½) + Σω_k(n_k+½) + g·n·Σx_k`. The system is a truncated
/// oscillator whose ground manifold is `|0⟩`; the dipole is the g–e block of
/// its quadrature.
pub fn build_h0_commuting(omega_s: f64, omega_env: &[f64], g: f64, layout: &SpaceLayout) -> Result<SystemModel> {
    build_oscillator(omega_s, omega_env, g, layout, OscillatorCoupling::Number)
}

/// As [`build_h0_commuting`] with the coupling `g·x·Σx_k`, which does not
/// conserve the excited-manifold population.
pub fn build_h0_noncommuting(omega_s: f64, omega_env: &[f64], g: f64, layout: &SpaceLayout) -> Result<SystemModel> {
    build_oscillator(omega_s, omega_env, g, layout, OscillatorCoupling::Quadrature)
}

/// Parameters of a general two-manifold system coupled to oscillator modes
/// through `g·P⊗Σx_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoManifoldSpec {
    pub ground_energies: Vec<f64>,
    pub excited_energies: Vec<f64>,
    pub omega_env: Vec<f64>,
    pub coupling: f64,
    /// System-space dipole; defaults to `1/√2` on every g–e pair.
    pub dipole: Option<ComplexMatrix>,
}

pub fn build_two_manifold(spec: &TwoManifoldSpec, layout: &SpaceLayout) -> Result<SystemModel> {
    if spec.ground_energies.len() != layout.ground_dim() || spec.excited_energies.len() != layout.excited_dim() {
        return Err(Error::InvalidLayout(format!(
            "energies given for {}+{} levels, layout has {}+{}",
            spec.ground_energies.len(),
            spec.excited_energies.len(),
            layout.ground_dim(),
            layout.excited_dim()
        )));
    }
    if spec.omega_env.len() != layout.env_dims().len() {
        return Err(Error::DimensionMismatch {
            context: "environment frequencies",
            expected: layout.env_dims().len(),
            found: spec.omega_env.len(),
        });
    }
    let ds = layout.system_dim();
    let energies: Vec<f64> = spec
        .ground_energies
        .iter()
        .chain(&spec.excited_energies)
        .copied()
        .collect();
    let hs = ComplexMatrix::diag_real(&energies);
    let ie = ComplexMatrix::identity(layout.env_dim());
    let is = ComplexMatrix::identity(ds);
    let mut h0 = &kron(&hs, &ie)? + &kron(&is, &env_hamiltonian(layout.env_dims(), &spec.omega_env)?)?;
    if spec.coupling != 0.0 {
        let p = excited_projector(layout);
        h0 = &h0 + &kron(&p, &env_quadrature_sum(layout.env_dims())?)?.scale_real(spec.coupling);
    }
    let dipole = match &spec.dipole {
        Some(d) => d.clone(),
        None => ComplexMatrix::from_fn(ds, ds, |i, j| {
            if layout.is_excited(i) != layout.is_excited(j) {
                Complex64::new(FRAC_1_SQRT_2, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }),
    };
    SystemModel::new(layout.clone(), h0, dipole, spec.coupling)
}

/// A joint state with its marginals and correlation matrix
/// `χ = R − ρ⊗τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatedState {
    pub joint: DensityMatrix,
    pub rho: ComplexMatrix,
    pub tau: ComplexMatrix,
    pub chi: ComplexMatrix,
}

impl CorrelatedState {
    /// Validates `m` on `layout`, then splits it.
    pub fn from_matrix(m: &ComplexMatrix, layout: &SpaceLayout) -> Result<Self> {
        split_correlations(&tensor::validate_density(m, layout)?)
    }

    /// `ρ ⊗ τ`
    pub fn product(rho: &ComplexMatrix, tau: &ComplexMatrix, layout: &SpaceLayout) -> Result<Self> {
        Self::from_matrix(&kron(rho, tau)?, layout)
    }

    pub fn layout(&self) -> &SpaceLayout {
        self.joint.layout()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        self.joint.matrix()
    }
}

/// `ρ = tr_E R`, `τ = tr_S R`, `χ = R − ρ⊗τ`.
pub fn split_correlations(joint: &DensityMatrix) -> Result<CorrelatedState> {
    let layout = joint.layout();
    let rho = partial_trace_layout(joint.matrix(), layout, Subsystem::System)?;
    let tau = partial_trace_layout(joint.matrix(), layout, Subsystem::Environment)?;
    let chi = joint.matrix() - &kron(&rho, &tau)?;
    Ok(CorrelatedState {
        joint: joint.clone(),
        rho,
        tau,
        chi,
    })
}

/// `R(0) = e^{−βH₀}/Z₀`.
pub fn gibbs_state(model: &SystemModel, beta: f64) -> Result<CorrelatedState> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "inverse temperature must be finite and >= 0, got {beta}"
        )));
    }
    let eig = tensor::eigh(model.h0())?;
    let spread = eig.values.iter().fold(0.0f64, |m, &e| m.max(math::abs(e)));
    let exponent = beta * spread;
    if !(exponent <= MAX_GIBBS_EXPONENT) {
        return Err(Error::GibbsOverflow { exponent });
    }
    let e_min = eig.values[0];
    let weights: Vec<f64> = eig.values.iter().map(|&e| math::exp(-beta * (e - e_min))).collect();
    let z: f64 = weights.iter().sum();
    let r = eig.apply(|e| Complex64::new(math::exp(-beta * (e - e_min)) / z, 0.0));
    // Exact Hermitian symmetrization removes eigenvector round-off.
    let r = (&r + &r.adjoint()).scale_real(0.5);
    CorrelatedState::from_matrix(&r, model.layout())
}

/// Max-norms of the ρ and χ sectors under the g/e partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockReport {
    pub norm_ge_rho: f64,
    pub norm_ge_chi: f64,
    pub norm_gg_chi: f64,
    pub norm_ee_chi: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Sector {
    GroundGround,
    GroundExcited,
    ExcitedExcited,
}

fn sector(layout: &SpaceLayout, i: usize, j: usize) -> Sector {
    match (layout.is_excited(i), layout.is_excited(j)) {
        (false, false) => Sector::GroundGround,
        (true, true) => Sector::ExcitedExcited,
        _ => Sector::GroundExcited,
    }
}

/// Max-norm of one sector of a joint operator, with system indices read off
/// the row/column of the joint index.
fn joint_sector_norm(m: &ComplexMatrix, layout: &SpaceLayout, which: Sector) -> f64 {
    let de = layout.env_dim();
    let mut worst: f64 = 0.0;
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            if sector(layout, r / de, c / de) == which {
                worst = worst.max(math::cabs(m[(r, c)]));
            }
        }
    }
    worst
}

/// g–e block norm of a joint operator (both `|g⟩⟨e|` and `|e⟩⟨g|` parts).
pub fn joint_ge_norm(m: &ComplexMatrix, layout: &SpaceLayout) -> f64 {
    joint_sector_norm(m, layout, Sector::GroundExcited)
}

pub fn block_report(state: &CorrelatedState) -> BlockReport {
    let layout = state.layout();
    let rho = &state.rho;
    let mut norm_ge_rho: f64 = 0.0;
    for i in 0..rho.rows() {
        for j in 0..rho.cols() {
            if sector(layout, i, j) == Sector::GroundExcited {
                norm_ge_rho = norm_ge_rho.max(math::cabs(rho[(i, j)]));
            }
        }
    }
    BlockReport {
        norm_ge_rho,
        norm_ge_chi: joint_sector_norm(&state.chi, layout, Sector::GroundExcited),
        norm_gg_chi: joint_sector_norm(&state.chi, layout, Sector::GroundGround),
        norm_ee_chi: joint_sector_norm(&state.chi, layout, Sector::ExcitedExcited),
    }
}

/// Requested placement of g–e coherence for [`build_witness_state`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Placement {
    pub offdiag_in_rho: bool,
    pub offdiag_in_chi: bool,
}

/// Norm above which a block counts as populated.
pub const PLACEMENT_FLOOR: f64 = 1e-3;

/// Norm below which a block counts as absent.
pub const ABSENT_FLOOR: f64 = 1e-12;

fn placement_matches(report: &BlockReport, placement: Placement) -> bool {
    let ok = |norm: f64, wanted: bool| {
        if wanted {
            norm > PLACEMENT_FLOOR
        } else {
            norm <= ABSENT_FLOOR
        }
    };
    ok(report.norm_ge_rho, placement.offdiag_in_rho) && ok(report.norm_ge_chi, placement.offdiag_in_chi)
}

/// Random probability vector with every entry at least `floor / n`.
fn random_weights(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(floor..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / s).collect()
}

/// Diagonal environment state with random Fock populations.
fn random_diagonal_env(rng: &mut ChaCha8Rng, de: usize) -> ComplexMatrix {
    ComplexMatrix::diag_real(&random_weights(rng, de, 0.05))
}

/// Joint state diagonal in the product basis `|s⟩|n⟩` with a random
/// (generically correlated) distribution.
fn random_diagonal_joint(rng: &mut ChaCha8Rng, layout: &SpaceLayout) -> ComplexMatrix {
    ComplexMatrix::diag_real(&random_weights(rng, layout.joint_dim(), 0.05))
}

fn two_distinct(rng: &mut ChaCha8Rng, n: usize) -> (usize, usize) {
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

fn sample_witness_matrix(rng: &mut ChaCha8Rng, layout: &SpaceLayout, placement: Placement) -> Result<ComplexMatrix> {
    let ds = layout.system_dim();
    let de = layout.env_dim();
    let g = rng.random_range(0..layout.ground_dim());
    let e = layout.ground_dim() + rng.random_range(0..layout.excited_dim());

    // System superposition cos θ|g⟩ + e^{iϕ} sin θ|e⟩.
    let coherent = |rng: &mut ChaCha8Rng| -> Vec<Complex64> {
        let theta = rng.random_range(0.2 * PI..0.3 * PI);
        let phi = rng.random_range(0.0..2.0 * PI);
        let mut psi = vec![Complex64::new(0.0, 0.0); ds];
        psi[g] = Complex64::new(math::cos(theta), 0.0);
        psi[e] = math::cis(phi) * math::sin(theta);
        psi
    };
    // (|g⟩|a⟩ + e^{iϕ}|e⟩|b⟩)/√2 with orthogonal Fock states a ≠ b.
    let correlated = |rng: &mut ChaCha8Rng| -> Result<ComplexMatrix> {
        if de < 2 {
            return Err(Error::InvalidLayout(
                "correlated g-e coherence needs an environment of dimension >= 2".into(),
            ));
        }
        let (a, b) = two_distinct(rng, de);
        let phi = rng.random_range(0.0..2.0 * PI);
        let mut psi = vec![Complex64::new(0.0, 0.0); ds * de];
        psi[g * de + a] = Complex64::new(FRAC_1_SQRT_2, 0.0);
        psi[e * de + b] = math::cis(phi) * FRAC_1_SQRT_2;
        Ok(ComplexMatrix::outer(&psi))
    };

    let m = match (placement.offdiag_in_rho, placement.offdiag_in_chi) {
        (false, false) => random_diagonal_joint(rng, layout),
        (false, true) => {
            let mix = rng.random_range(0.1..0.3);
            let noise = random_diagonal_joint(rng, layout);
            &correlated(rng)?.scale_real(1.0 - mix) + &noise.scale_real(mix)
        }
        (true, false) => {
            let psi = coherent(rng);
            kron(&ComplexMatrix::outer(&psi), &random_diagonal_env(rng, de))?
        }
        (true, true) => {
            let w = rng.random_range(0.3..0.7);
            let psi = coherent(rng);
            let product = kron(&ComplexMatrix::outer(&psi), &random_diagonal_env(rng, de))?;
            &product.scale_real(w) + &correlated(rng)?.scale_real(1.0 - w)
        }
    };
    Ok(m)
}

/// Samples a joint state whose g–e coherence sits in the requested sectors.
///
/// Environment factors are diagonal in the Fock basis, so every noise term
/// and every reduced marginal commutes with an uncoupled oscillator
/// Hamiltonian; the only g–e coherence is the one requested.
pub fn build_witness_state(layout: &SpaceLayout, placement: Placement, seed: u64) -> Result<CorrelatedState> {
    if layout.env_dims().is_empty() {
        return Err(Error::InvalidLayout("at least one environment mode is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_CONSTRUCTION_ATTEMPTS {
        let m = sample_witness_matrix(&mut rng, layout, placement)?;
        let Ok(state) = CorrelatedState::from_matrix(&m, layout) else {
            continue;
        };
        if placement_matches(&block_report(&state), placement) {
            return Ok(state);
        }
    }
    Err(Error::ConstructionFailed {
        attempts: MAX_CONSTRUCTION_ATTEMPTS,
    })
}

/// Normalized state vector with i.i.d. complex Gaussian entries.
pub fn random_state_vector(rng: &mut impl Rng, dim: usize) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..dim)
        .map(|_| {
            // Box–Muller.
            let u1: f64 = 1.0 - rng.random::<f64>();
            let u2: f64 = rng.random::<f64>();
            let r = math::sqrt(-2.0 * math::ln(u1));
            Complex64::new(r * math::cos(2.0 * PI * u2), r * math::sin(2.0 * PI * u2))
        })
        .collect();
    let norm = math::sqrt(v.iter().map(|z| z.norm_sqr()).sum::<f64>());
    for z in &mut v {
        *z /= norm;
    }
    v
}

/// Random full-rank density matrix on `dim` levels (mixture of `dim + 1`
/// random pure states).
pub fn random_density(rng: &mut impl Rng, dim: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(dim, dim);
    let mut total = 0.0;
    for _ in 0..=dim {
        let w: f64 = rng.random_range(0.1..1.0);
        total += w;
        m = &m + &ComplexMatrix::outer(&random_state_vector(rng, dim)).scale_real(w);
    }
    let m = m.scale_real(1.0 / total);
    (&m + &m.adjoint()).scale_real(0.5)
}
