//! Spectrally shaped weak fields.
//!
//! The time-domain field is the complex analytic signal
//!
//! ```text
//! ε(t_k) = λ Σ_j Ã(ω_j) e^{iφ(ω_j)} e^{−iω_j t_k} Δω
//! ```
//!
//! so a linear phase `φ(ω) = ωτ` delays the pulse by `τ`.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;
use crate::{Error, Result};

/// Amplitude and phase masks on a uniform frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPulse {
    omega_start: f64,
    omega_step: f64,
    amplitude: Vec<f64>,
    phase: Vec<f64>,
    weak_scale: f64,
}

impl SpectralPulse {
    pub fn new(
        omega_start: f64,
        omega_step: f64,
        amplitude: Vec<f64>,
        phase: Vec<f64>,
        weak_scale: f64,
    ) -> Result<Self> {
        if amplitude.is_empty() {
            return Err(Error::InvalidGrid("frequency grid is empty".into()));
        }
        if !(omega_step > 0.0) || !omega_step.is_finite() || !omega_start.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "frequency spacing must be positive, got {omega_step}"
            )));
        }
        if phase.len() != amplitude.len() {
            return Err(Error::DimensionMismatch {
                context: "phase mask",
                expected: amplitude.len(),
                found: phase.len(),
            });
        }
        if amplitude.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::InvalidParameter(
                "amplitudes must be finite and nonnegative".into(),
            ));
        }
        if phase.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("phases must be finite".into()));
        }
        check_scale(weak_scale)?;
        Ok(Self {
            omega_start,
            omega_step,
            amplitude,
            phase,
            weak_scale,
        })
    }

    /// Zero-phase Gaussian `exp(−(ω−ω₀)²/2σ²)` sampled on `ω₀ ± half_width·σ`
    /// with spacing `omega_step`. The grid is symmetric about `ω₀`.
    pub fn gaussian(center: f64, sigma: f64, half_width: f64, omega_step: f64, weak_scale: f64) -> Result<Self> {
        if !(sigma > 0.0) || !(half_width > 0.0) || !(omega_step > 0.0) {
            return Err(Error::InvalidParameter(
                "gaussian width, extent and spacing must be positive".into(),
            ));
        }
        let half_bins = libm::floor(half_width * sigma / omega_step) as usize;
        let n = 2 * half_bins + 1;
        let omega_start = center - half_bins as f64 * omega_step;
        let amplitude = (0..n)
            .map(|j| {
                let x = (omega_start + j as f64 * omega_step - center) / sigma;
                math::exp(-0.5 * x * x)
            })
            .collect();
        Self::new(omega_start, omega_step, amplitude, alloc::vec![0.0; n], weak_scale)
    }

    pub fn len(&self) -> usize {
        self.amplitude.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitude.is_empty()
    }

    pub fn omega(&self, j: usize) -> f64 {
        self.omega_start + j as f64 * self.omega_step
    }

    pub fn omega_start(&self) -> f64 {
        self.omega_start
    }

    pub fn omega_step(&self) -> f64 {
        self.omega_step
    }

    pub fn amplitude(&self) -> &[f64] {
        &self.amplitude
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    pub fn weak_scale(&self) -> f64 {
        self.weak_scale
    }

    /// Period `2π/Δω` of the synthesized field.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega_step
    }

    /// Copy with a different phase mask.
    pub fn with_phase(&self, phase: Vec<f64>) -> Result<Self> {
        Self::new(
            self.omega_start,
            self.omega_step,
            self.amplitude.clone(),
            phase,
            self.weak_scale,
        )
    }

    /// Copy with a different amplitude mask on the same grid.
    pub fn with_amplitude(&self, amplitude: Vec<f64>) -> Result<Self> {
        Self::new(
            self.omega_start,
            self.omega_step,
            amplitude,
            self.phase.clone(),
            self.weak_scale,
        )
    }

    /// Both pulses share the grid and `λ·Ã` agrees to 1e-14.
    pub fn same_amplitude(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self.omega_start == other.omega_start
            && self.omega_step == other.omega_step
            && self
                .amplitude
                .iter()
                .zip(&other.amplitude)
                .all(|(a, b)| math::abs(a * self.weak_scale - b * other.weak_scale) <= 1e-14)
    }

    /// `Σ_j |λÃ_j|² Δω`
    pub fn spectral_power(&self) -> f64 {
        self.amplitude
            .iter()
            .map(|a| (a * self.weak_scale) * (a * self.weak_scale))
            .sum::<f64>()
            * self.omega_step
    }
}

fn check_scale(weak_scale: f64) -> Result<()> {
    if !(weak_scale > 0.0) || !weak_scale.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "weak-field scale must be finite and > 0, got {weak_scale}"
        )));
    }
    Ok(())
}

/// Copy of `p` with weak-field scale `lambda`.
pub fn scale_weak(p: &SpectralPulse, lambda: f64) -> Result<SpectralPulse> {
    check_scale(lambda)?;
    Ok(SpectralPulse {
        weak_scale: lambda,
        ..p.clone()
    })
}

/// Uniform sample times `t_start + k·t_step`, `k < count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSamples {
    pub t_start: f64,
    pub t_step: f64,
    pub count: usize,
}

impl TimeSamples {
    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.t_step
    }
}

/// Complex field values on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeField {
    t_start: f64,
    t_step: f64,
    values: Vec<Complex64>,
}

impl TimeField {
    pub fn new(t_start: f64, t_step: f64, values: Vec<Complex64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGrid("time field is empty".into()));
        }
        if !(t_step > 0.0) || !t_step.is_finite() || !t_start.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "time spacing must be positive, got {t_step}"
            )));
        }
        Ok(Self {
            t_start,
            t_step,
            values,
        })
    }

    pub fn zeros(samples: TimeSamples) -> Result<Self> {
        Self::new(
            samples.t_start,
            samples.t_step,
            alloc::vec![Complex64::new(0.0, 0.0); samples.count],
        )
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_step(&self) -> f64 {
        self.t_step
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.t_step
    }

    /// Field at a sample time; `t` must lie on the grid to within
    /// `1e-9·Δt`.
    pub fn value_at(&self, t: f64) -> Result<Complex64> {
        let x = (t - self.t_start) / self.t_step;
        let k = libm::round(x);
        if !(math::abs(x - k) <= 1e-9) || k < 0.0 || k as usize >= self.values.len() {
            return Err(Error::FieldMismatch);
        }
        Ok(self.values[k as usize])
    }

    /// `max_k |ε(t_k)|²`
    pub fn peak_intensity(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max)
    }

    /// `Σ_k |ε(t_k)|² Δt`
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.t_step
    }
}

/// Synthesizes `ε(t)` on `samples`.
pub fn to_time_domain(p: &SpectralPulse, samples: TimeSamples) -> Result<TimeField> {
    if samples.count == 0 {
        return Err(Error::InvalidGrid("time grid is empty".into()));
    }
    // (ω_j, λÃ_jΔω, φ_j) for the nonzero bins.
    let bins: Vec<(f64, f64, f64)> = (0..p.len())
        .filter(|&j| p.amplitude[j] != 0.0)
        .map(|j| (p.omega(j), p.weak_scale * p.amplitude[j] * p.omega_step, p.phase[j]))
        .collect();
    let values = (0..samples.count)
        .map(|k| {
            let t = samples.time(k);
            bins.iter().map(|&(w, a, phi)| math::cis(phi - w * t) * a).sum()
        })
        .collect();
    TimeField::new(samples.t_start, samples.t_step, values)
}

/// Shape of a phase-mask family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseFamily {
    /// `φ ≡ c_i`, with `c_i` evenly spaced on `[lo, hi]`.
    Constant { lo: f64, hi: f64 },
    /// `φ = ω τ_i`, with delays `τ_i` evenly spaced on `[lo, hi]`.
    Linear { lo: f64, hi: f64 },
    /// `φ = ½ c_i (ω − center)²`, with `c_i` evenly spaced on `[lo, hi]`.
    Chirp { lo: f64, hi: f64, center: f64 },
    /// I.i.d. uniform `[0, 2π)` phase per frequency bin.
    Random,
}

impl PhaseFamily {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Constant { .. } => "constant",
            Self::Linear { .. } => "linear",
            Self::Chirp { .. } => "chirp",
            Self::Random => "random",
        }
    }
}

fn spaced(lo: f64, hi: f64, count: usize, i: usize) -> f64 {
    lo + (hi - lo) * i as f64 / (count - 1) as f64
}

/// `count` pulses sharing `base`'s amplitude mask and scale, differing only
/// in phase. Random families draw from a ChaCha stream seeded by `seed`.
pub fn phase_family(base: &SpectralPulse, family: PhaseFamily, count: usize, seed: u64) -> Result<Vec<SpectralPulse>> {
    if count < 2 {
        return Err(Error::FamilyTooSmall { size: count });
    }
    let n = base.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let phase: Vec<f64> = match family {
                PhaseFamily::Constant { lo, hi } => alloc::vec![spaced(lo, hi, count, i); n],
                PhaseFamily::Linear { lo, hi } => {
                    let tau = spaced(lo, hi, count, i);
                    (0..n).map(|j| base.omega(j) * tau).collect()
                }
                PhaseFamily::Chirp { lo, hi, center } => {
                    let c2 = spaced(lo, hi, count, i);
                    (0..n)
                        .map(|j| {
                            let dw = base.omega(j) - center;
                            0.5 * c2 * dw * dw
                        })
                        .collect()
                }
                PhaseFamily::Random => (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect(),
            };
            base.with_phase(phase)
        })
        .collect()
}
