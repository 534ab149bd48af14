//! Laser drive: a few-cycle pulse with vanishing area for every
//! carrier-envelope phase, plus simple reference shapes used by the rate
//! model.

use std::f64::consts::PI;

use crate::error::{invalid, Result};

/// Atomic unit of time in femtoseconds.
pub const AU_TIME_FS: f64 = 0.024_188_843_265_857;

/// Peak amplitude, carrier frequency, carrier-envelope phase and cycle count
/// of the pulse. All quantities in atomic units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseParams {
    pub f0: f64,
    pub omega: f64,
    pub phi: f64,
    pub n_cycles: u32,
}

impl PulseParams {
    pub fn new(f0: f64, omega: f64, phi: f64, n_cycles: u32) -> Result<Self> {
        let p = Self {
            f0,
            omega,
            phi,
            n_cycles,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f0 >= 0.0 && self.f0.is_finite()) {
            invalid!("peak field must be non-negative, got {}", self.f0);
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            invalid!("carrier frequency must be positive, got {}", self.omega);
        }
        if self.n_cycles < 1 {
            invalid!("pulse needs at least one cycle");
        }
        if !self.phi.is_finite() {
            invalid!("carrier-envelope phase must be finite");
        }
        Ok(())
    }

    /// Pulse duration `T_p = 2π·n_c/ω`.
    pub fn duration(&self) -> f64 {
        2.0 * PI * self.n_cycles as f64 / self.omega
    }

    /// Length of one optical cycle.
    pub fn cycle(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// Integration window: the pulse plus one field-free cycle.
    pub fn propagation_time(&self) -> f64 {
        (self.n_cycles as f64 + 1.0) * self.cycle()
    }

    /// Electric field `F(t)`; zero outside `[0, T_p]`.
    pub fn field_at(&self, t: f64) -> f64 {
        let tp = self.duration();
        if !(0.0..=tp).contains(&t) {
            return 0.0;
        }
        let ts = t - 0.5 * tp;
        let (se, ce) = (PI * ts / tp).sin_cos();
        let (sc, cc) = (self.omega * ts + self.phi).sin_cos();
        self.f0 * ce * (ce * cc - se * sc / self.n_cycles as f64)
    }

    /// Vector potential `A(t) = -∫₀ᵗ F dt'` in closed form.
    pub fn vector_potential_at(&self, t: f64) -> f64 {
        let tp = self.duration();
        if !(0.0..=tp).contains(&t) {
            return 0.0;
        }
        let ts = t - 0.5 * tp;
        let ce = (PI * ts / tp).cos();
        -(self.f0 / self.omega) * ce * ce * (self.omega * ts + self.phi).sin()
    }

    /// Ponderomotive energy `U_p = F₀²/4ω²`.
    pub fn ponderomotive(&self) -> f64 {
        self.f0 * self.f0 / (4.0 * self.omega * self.omega)
    }

    /// Classical quiver radius `x_q = F₀/ω²`.
    pub fn quiver_radius(&self) -> f64 {
        self.f0 / (self.omega * self.omega)
    }

    /// Keldysh parameter `γ = √(2E_I)·ω/F₀`.
    pub fn keldysh(&self, ionization_energy: f64) -> Result<f64> {
        if self.f0 <= 0.0 {
            invalid!("Keldysh parameter undefined for zero field amplitude");
        }
        if ionization_energy <= 0.0 {
            invalid!("ionization energy must be positive");
        }
        Ok((2.0 * ionization_energy).sqrt() * self.omega / self.f0)
    }

    /// Classical cutoff `2√U_p` on the drift momentum.
    pub fn drift_momentum_bound(&self) -> f64 {
        2.0 * self.ponderomotive().sqrt()
    }

    /// Copy with a different carrier-envelope phase.
    pub fn with_phase(&self, phi: f64) -> Self {
        Self { phi, ..*self }
    }

    pub fn with_amplitude(&self, f0: f64) -> Self {
        Self { f0, ..*self }
    }

    /// `∫₀^{T_p} F dt` by quadrature. Vanishes for every phase.
    pub fn area(&self, panels: usize) -> f64 {
        simpson(|t| self.field_at(t), 0.0, self.duration(), panels)
    }

    /// `-∫₀ᵗ F dt'` by quadrature, for checking the closed form.
    pub fn vector_potential_by_quadrature(&self, t: f64, panels: usize) -> f64 {
        -simpson(
            |s| self.field_at(s),
            0.0,
            t.clamp(0.0, self.duration()),
            panels,
        )
    }
}

/// Composite Simpson rule; `panels` is rounded up to an even count.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = (panels.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// `j`-th phase of an `count`-point uniform sampling of `[0, 2π)`.
pub fn cep_phase(j: usize, count: usize) -> f64 {
    2.0 * PI * j as f64 / count as f64
}

/// Anything that supplies a field history over a finite window.
pub trait FieldShape {
    fn field(&self, t: f64) -> f64;
    /// End of the window; the field is zero afterwards.
    fn duration(&self) -> f64;
}

impl FieldShape for PulseParams {
    fn field(&self, t: f64) -> f64 {
        self.field_at(t)
    }

    fn duration(&self) -> f64 {
        PulseParams::duration(self)
    }
}

/// `F(t) = F₀·Θ(T - t)` on `[0, T]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SquarePulse {
    pub f0: f64,
    pub duration: f64,
}

impl FieldShape for SquarePulse {
    fn field(&self, t: f64) -> f64 {
        if (0.0..=self.duration).contains(&t) {
            self.f0
        } else {
            0.0
        }
    }

    fn duration(&self) -> f64 {
        self.duration
    }
}

/// `F(t) = F₀·sin(ωt)` on `[0, 2π·n_c/ω]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinePulse {
    pub f0: f64,
    pub omega: f64,
    pub n_cycles: u32,
}

impl FieldShape for SinePulse {
    fn field(&self, t: f64) -> f64 {
        if (0.0..=FieldShape::duration(self)).contains(&t) {
            self.f0 * (self.omega * t).sin()
        } else {
            0.0
        }
    }

    fn duration(&self) -> f64 {
        2.0 * PI * self.n_cycles as f64 / self.omega
    }
}
