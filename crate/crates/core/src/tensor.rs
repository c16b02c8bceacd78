//! Dense complex linear algebra on `S ⊗ E₁ ⊗ E₂ ⊗ …`.
//!
//! Subsystem ordering is fixed everywhere: the system factor first, then the
//! environment modes in layout order. Matrices are row-major.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::math;
use crate::{Error, Result};

/// Default cap on the joint Hilbert-space dimension.
pub const DEFAULT_DIM_CAP: usize = 4096;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Numerical tolerances used when validating states and operators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub hermitian: f64,
    pub trace: f64,
    /// Smallest eigenvalue still accepted as positive semidefinite.
    pub psd_floor: f64,
    pub unitary: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermitian: 1e-10,
            trace: 1e-10,
            psd_floor: -1e-10,
            unitary: 1e-10,
        }
    }
}

/// Labels of the joint space: `system_ground_dim` levels `|g_i⟩` followed by
/// `system_excited_dim` levels `|e_i⟩`, then one truncated mode per entry of
/// `env_dims`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceLayout {
    system_ground_dim: usize,
    system_excited_dim: usize,
    env_dims: Vec<usize>,
}

impl SpaceLayout {
    pub fn new(ground: usize, excited: usize, env_dims: Vec<usize>) -> Result<Self> {
        Self::with_cap(ground, excited, env_dims, DEFAULT_DIM_CAP)
    }

    pub fn with_cap(ground: usize, excited: usize, env_dims: Vec<usize>, cap: usize) -> Result<Self> {
        if ground == 0 || excited == 0 {
            return Err(Error::InvalidLayout(format!(
                "need at least one ground and one excited level, got {ground}+{excited}"
            )));
        }
        if let Some(k) = env_dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidLayout(format!("environment mode {k} has dimension 0")));
        }
        let mut joint = ground + excited;
        for &d in &env_dims {
            joint = joint.saturating_mul(d);
        }
        if joint > cap {
            return Err(Error::MemoryCap { requested: joint, cap });
        }
        Ok(Self {
            system_ground_dim: ground,
            system_excited_dim: excited,
            env_dims,
        })
    }

    pub fn ground_dim(&self) -> usize {
        self.system_ground_dim
    }

    pub fn excited_dim(&self) -> usize {
        self.system_excited_dim
    }

    pub fn env_dims(&self) -> &[usize] {
        &self.env_dims
    }

    pub fn system_dim(&self) -> usize {
        self.system_ground_dim + self.system_excited_dim
    }

    pub fn env_dim(&self) -> usize {
        self.env_dims.iter().product()
    }

    pub fn joint_dim(&self) -> usize {
        self.system_dim() * self.env_dim()
    }

    /// `[d_S, d_E₁, d_E₂, …]`
    pub fn factor_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(1 + self.env_dims.len());
        dims.push(self.system_dim());
        dims.extend_from_slice(&self.env_dims);
        dims
    }

    /// Whether system level `i` belongs to the excited manifold.
    pub fn is_excited(&self, i: usize) -> bool {
        i >= self.system_ground_dim
    }
}

/// Which side of the system/environment cut to keep in a partial trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    System,
    Environment,
}

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.4e}{:+.4e}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "from_vec",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::from_vec(rows, cols, data.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn diag_real(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = Complex64::new(v, 0.0);
        }
        m
    }

    /// `|ψ⟩⟨ψ|`
    pub fn outer(psi: &[Complex64]) -> Self {
        let n = psi.len();
        Self::from_fn(n, n, |i, j| psi[i] * psi[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|&z| math::cabs(z)).fold(0.0, f64::max)
    }

    /// `‖self − other‖_max`; panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| math::cabs(a - b))
            .fold(0.0, f64::max)
    }

    /// `‖self − self†‖_max`, or infinity for non-square input.
    pub fn hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max(math::cabs(self[(i, j)] - self[(j, i)].conj()));
            }
        }
        worst
    }

    /// `‖X†X − I‖_max`
    pub fn unitarity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let prod = &self.adjoint() * self;
        prod.max_abs_diff(&Self::identity(self.rows))
    }

    pub fn try_matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "matmul",
                expected: self.cols,
                found: other.rows,
            });
        }
        let (n, m, p) = (self.rows, self.cols, other.cols);
        let mut out = vec![ZERO; n * p];
        for i in 0..n {
            let out_row = &mut out[i * p..(i + 1) * p];
            for k in 0..m {
                let a = self.data[i * m + k];
                if a == ZERO {
                    continue;
                }
                let b_row = &other.data[k * p..(k + 1) * p];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            rows: n,
            cols: p,
            data: out,
        })
    }

    /// `self · other · self†`
    pub fn sandwich(&self, other: &Self) -> Self {
        let left = self * other;
        left.mul_adjoint(self)
    }

    /// `self · other†` without forming the adjoint.
    pub fn mul_adjoint(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.cols, "mul_adjoint shape mismatch");
        let (n, m, p) = (self.rows, self.cols, other.rows);
        let mut out = vec![ZERO; n * p];
        for i in 0..n {
            let a_row = &self.data[i * m..(i + 1) * m];
            for j in 0..p {
                let b_row = &other.data[j * m..(j + 1) * m];
                let mut acc = ZERO;
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc += a * b.conj();
                }
                out[i * p + j] = acc;
            }
        }
        Self {
            rows: n,
            cols: p,
            data: out,
        }
    }

    /// `tr(self · other)` in O(n²).
    pub fn trace_product(&self, other: &Self) -> Complex64 {
        assert_eq!((self.rows, self.cols), (other.cols, other.rows));
        let mut acc = ZERO;
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc += self.data[i * self.cols + k] * other.data[k * other.cols + i];
            }
        }
        acc
    }

    /// Copy of the block `rows × cols` starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.try_matmul(rhs).expect("matrix product shape mismatch")
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sum shape mismatch");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "difference shape mismatch"
        );
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

/// Kronecker product under the default dimension cap.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    kron_with_cap(a, b, DEFAULT_DIM_CAP)
}

pub fn kron_with_cap(a: &ComplexMatrix, b: &ComplexMatrix, cap: usize) -> Result<ComplexMatrix> {
    let rows = a.rows.saturating_mul(b.rows);
    let cols = a.cols.saturating_mul(b.cols);
    if rows.max(cols) > cap {
        return Err(Error::MemoryCap {
            requested: rows.max(cols),
            cap,
        });
    }
    let mut out = ComplexMatrix::zeros(rows, cols);
    for i1 in 0..a.rows {
        for j1 in 0..a.cols {
            let x = a[(i1, j1)];
            if x == ZERO {
                continue;
            }
            for i2 in 0..b.rows {
                let dst = (i1 * b.rows + i2) * cols + j1 * b.cols;
                let src = b.row(i2);
                for (o, &y) in out.data[dst..dst + b.cols].iter_mut().zip(src) {
                    *o = x * y;
                }
            }
        }
    }
    Ok(out)
}

/// Partial trace of `m` on the tensor product of `dims`, keeping the factors
/// listed in `keep` (in their original order).
pub fn partial_trace(m: &ComplexMatrix, dims: &[usize], keep: &[usize]) -> Result<ComplexMatrix> {
    let total: usize = dims.iter().product();
    if !m.is_square() || m.rows != total {
        return Err(Error::DimensionMismatch {
            context: "partial_trace",
            expected: total,
            found: m.rows,
        });
    }
    if keep.iter().any(|&k| k >= dims.len()) || keep.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(format!(
            "keep list {keep:?} must be strictly increasing factor indices below {}",
            dims.len()
        )));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep.contains(k)).collect();
    let kept_dim: usize = keep.iter().map(|&k| dims[k]).product();
    let traced_dim: usize = traced.iter().map(|&k| dims[k]).product();

    // Row-major strides of each factor in the joint index.
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let offsets = |factors: &[usize], mut idx: usize| -> usize {
        let mut off = 0;
        for &k in factors.iter().rev() {
            off += (idx % dims[k]) * strides[k];
            idx /= dims[k];
        }
        off
    };
    let kept_off: Vec<usize> = (0..kept_dim).map(|i| offsets(keep, i)).collect();
    let traced_off: Vec<usize> = (0..traced_dim).map(|i| offsets(&traced, i)).collect();

    let mut out = ComplexMatrix::zeros(kept_dim, kept_dim);
    for (i, &ri) in kept_off.iter().enumerate() {
        for (j, &cj) in kept_off.iter().enumerate() {
            let mut acc = ZERO;
            for &t in &traced_off {
                acc += m[(ri + t, cj + t)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Partial trace across the system/environment cut of `layout`.
pub fn partial_trace_layout(m: &ComplexMatrix, layout: &SpaceLayout, keep: Subsystem) -> Result<ComplexMatrix> {
    let dims = [layout.system_dim(), layout.env_dim()];
    let keep = match keep {
        Subsystem::System => [0],
        Subsystem::Environment => [1],
    };
    partial_trace(m, &dims, &keep)
}

/// `[a, b] = ab − ba`
pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() || !b.is_square() || a.rows != b.rows {
        return Err(Error::DimensionMismatch {
            context: "commutator",
            expected: a.rows,
            found: b.rows,
        });
    }
    Ok(&(a * b) - &(b * a))
}

/// Eigendecomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct Eigh {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Columns are the matching orthonormal eigenvectors.
    pub vectors: ComplexMatrix,
}

impl Eigh {
    /// `V · diag(f(λ)) · V†`
    pub fn apply(&self, mut f: impl FnMut(f64) -> Complex64) -> ComplexMatrix {
        let n = self.values.len();
        let weights: Vec<Complex64> = self.values.iter().map(|&l| f(l)).collect();
        let scaled = ComplexMatrix::from_fn(n, n, |i, k| self.vectors[(i, k)] * weights[k]);
        scaled.mul_adjoint(&self.vectors)
    }
}

/// Cyclic complex Jacobi diagonalization. The input must be Hermitian to the
/// default tolerance.
pub fn eigh(h: &ComplexMatrix) -> Result<Eigh> {
    let defect = h.hermiticity_defect();
    if !(defect <= Tolerances::default().hermitian) {
        return Err(Error::NonHermitian { deviation: defect });
    }
    Ok(jacobi(h))
}

fn jacobi(h: &ComplexMatrix) -> Eigh {
    let n = h.rows;
    // Work on the exactly Hermitian part.
    let mut a = ComplexMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(h[(i, i)].re, 0.0)
        } else {
            (h[(i, j)] + h[(j, i)].conj()) * 0.5
        }
    });
    let mut v = ComplexMatrix::identity(n);
    let scale = a.data.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let tiny = f64::EPSILON * f64::EPSILON * scale.max(f64::MIN_POSITIVE);

    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off <= tiny * 0.25 {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let r = math::cabs(apq);
                if r * r <= tiny * 1e-6 || r == 0.0 {
                    continue;
                }
                rotated = true;
                let phase = apq / r;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = (aqq - app) / (2.0 * r);
                let t = if theta >= 0.0 {
                    1.0 / (theta + math::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + math::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = t * c;
                // Rotation on (p, q): diag(1, e^{-iφ}) followed by the real
                // Jacobi rotation [[c, s], [-s, c]].
                let v00 = Complex64::new(c, 0.0);
                let v01 = Complex64::new(s, 0.0);
                let v10 = -phase.conj() * s;
                let v11 = phase.conj() * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * v00 + akq * v10;
                    a[(k, q)] = akp * v01 + akq * v11;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = v00.conj() * apk + v10.conj() * aqk;
                    a[(q, k)] = v01.conj() * apk + v11.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * v00 + vkq * v10;
                    v[(k, q)] = vkp * v01 + vkq * v11;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |i, k| v[(i, order[k])]);
    Eigh { values, vectors }
}

/// `exp(scale · h)` for Hermitian `h`, through its eigendecomposition.
pub fn herm_exp(h: &ComplexMatrix, scale: Complex64) -> Result<ComplexMatrix> {
    Ok(eigh(h)?.apply(|l| math::cexp(scale * l)))
}

/// A validated quantum state on a [`SpaceLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: ComplexMatrix,
    layout: SpaceLayout,
}

impl DensityMatrix {
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.mat
    }

    pub fn min_eigenvalue(&self) -> f64 {
        jacobi(&self.mat).values.first().copied().unwrap_or(0.0)
    }
}

/// Checks Hermiticity, unit trace and positivity under default tolerances.
pub fn validate_density(m: &ComplexMatrix, layout: &SpaceLayout) -> Result<DensityMatrix> {
    validate_density_with(m, layout, &Tolerances::default())
}

pub fn validate_density_with(m: &ComplexMatrix, layout: &SpaceLayout, tol: &Tolerances) -> Result<DensityMatrix> {
    let d = layout.joint_dim();
    if !m.is_square() || m.rows != d {
        return Err(Error::DimensionMismatch {
            context: "validate_density",
            expected: d,
            found: m.rows,
        });
    }
    let herm = m.hermiticity_defect();
    if !(herm <= tol.hermitian) {
        return Err(Error::NonHermitian { deviation: herm });
    }
    let tr = m.trace();
    let trace_dev = math::cabs(tr - ONE);
    if !(trace_dev <= tol.trace) {
        return Err(Error::TraceNotOne { deviation: trace_dev });
    }
    let min = jacobi(m).values.first().copied().unwrap_or(0.0);
    if min < tol.psd_floor {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    Ok(DensityMatrix {
        mat: m.clone(),
        layout: layout.clone(),
    })
}

/// Pauli and small fixed operators used throughout tests and examples.
pub mod ops {
    use super::*;

    pub fn sigma_x() -> ComplexMatrix {
        ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    pub fn sigma_y() -> ComplexMatrix {
        ComplexMatrix::from_vec(
            2,
            2,
            vec![ZERO, Complex64::new(0.0, -1.0), Complex64::new(0.0, 1.0), ZERO],
        )
        .unwrap()
    }

    pub fn sigma_z() -> ComplexMatrix {
        ComplexMatrix::diag_real(&[1.0, -1.0])
    }

    /// Truncated annihilation operator on `n` Fock levels.
    pub fn annihilation(n: usize) -> ComplexMatrix {
        let mut a = ComplexMatrix::zeros(n, n);
        for k in 1..n {
            a[(k - 1, k)] = Complex64::new(math::sqrt(k as f64), 0.0);
        }
        a
    }

    /// `(a + a†)/√2` built from the truncated ladder operators.
    pub fn quadrature(n: usize) -> ComplexMatrix {
        let a = annihilation(n);
        (&a + &a.adjoint()).scale_real(core::f64::consts::FRAC_1_SQRT_2)
    }

    pub fn number(n: usize) -> ComplexMatrix {
        ComplexMatrix::diag_real(&(0..n).map(|k| k as f64).collect::<Vec<_>>())
    }
}
