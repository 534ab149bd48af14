//! Rate-equation model of the ionization cascade He → He⁺ → He²⁺ with a
//! direct He → He²⁺ channel.
//!
//! Sequential rates are quasi-static ADK rates of the instantaneous field,
//! the direct rate is a fixed fraction of the first sequential one. The
//! doubly charged population is tracked in two parts so that the direct and
//! the sequential routes can be reported separately.

use std::f64::consts::PI;

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::io::SweepRow;
use crate::pulse::{simpson, FieldShape, PulseParams};
use crate::yields::{find_f_max, find_f_sat, FieldMaximum};

/// Ionization energy of the model atom.
pub const NEUTRAL_IONIZATION_ENERGY: f64 = 0.98;
/// Ionization energy of the model ion.
pub const ION_IONIZATION_ENERGY: f64 = 1.85;

/// Effective principal quantum number `n* = Z/√(2E_I)`.
pub fn effective_quantum_number(ionization_energy: f64, charge: f64) -> f64 {
    charge / (2.0 * ionization_energy).sqrt()
}

/// Quasi-static ADK rate for an s-state.
///
/// `W = C²·E_I·(2κ³/|F|)^{2n*-1}·exp(-2κ³/3|F|)` with `κ = √(2E_I)` and
/// `C² = 2^{2n*}/(n*·Γ(n*+1)·Γ(n*))`, evaluated in log space so that weak
/// fields underflow cleanly to zero.
pub fn adk_rate(field: f64, ionization_energy: f64, charge: f64) -> f64 {
    AdkChannel::new(ionization_energy, charge).rate(field)
}

/// ADK rate with its field-independent constants evaluated once.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdkChannel {
    kappa3: f64,
    exponent: f64,
    log_prefactor: f64,
}

impl AdkChannel {
    pub fn new(ionization_energy: f64, charge: f64) -> Self {
        let kappa = (2.0 * ionization_energy).sqrt();
        let n = charge / kappa;
        let log_c2 = 2.0 * n * 2f64.ln() - n.ln() - ln_gamma(n + 1.0) - ln_gamma(n);
        Self {
            kappa3: kappa.powi(3),
            exponent: 2.0 * n - 1.0,
            log_prefactor: log_c2 + ionization_energy.ln(),
        }
    }

    pub fn rate(&self, field: f64) -> f64 {
        let f = field.abs();
        if f == 0.0 {
            return 0.0;
        }
        let x = 2.0 * self.kappa3 / f;
        (self.log_prefactor + self.exponent * x.ln() - x / 3.0).exp()
    }
}

/// How the direct He → He²⁺ rate is modelled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DirectChannel {
    /// `W₀₂ = r·W₀₁`.
    Ratio,
    /// `W₀₂ = 0`.
    Zero,
}

impl DirectChannel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Ratio => "ratio",
            Self::Zero => "zero",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "ratio" => Ok(Self::Ratio),
            "zero" => Ok(Self::Zero),
            _ => invalid!("unknown direct-channel mode {s:?} (expected ratio or zero)"),
        }
    }
}

/// Parameters of the rate equations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateModel {
    pub neutral_energy: f64,
    pub ion_energy: f64,
    /// Lowering factor applied to both ionization energies.
    pub eta: f64,
    /// Direct-to-sequential ratio.
    pub ratio: f64,
    pub direct: DirectChannel,
}

impl Default for RateModel {
    fn default() -> Self {
        Self {
            neutral_energy: NEUTRAL_IONIZATION_ENERGY,
            ion_energy: ION_IONIZATION_ENERGY,
            eta: 0.95,
            ratio: 0.019,
            direct: DirectChannel::Ratio,
        }
    }
}

/// Instantaneous rates.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Rates {
    pub w01: f64,
    pub w02: f64,
    pub w12: f64,
}

impl RateModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.neutral_energy > 0.0 && self.ion_energy > 0.0) {
            invalid!("ionization energies must be positive");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            invalid!(
                "energy lowering factor must lie in (0, 1], got {}",
                self.eta
            );
        }
        if !(self.ratio >= 0.0 && self.ratio.is_finite()) {
            invalid!("direct ratio must be non-negative, got {}", self.ratio);
        }
        Ok(())
    }

    pub fn with_direct(&self, direct: DirectChannel) -> Self {
        Self { direct, ..*self }
    }

    /// `n*` of the first step (residual charge 1).
    pub fn n01_star(&self) -> f64 {
        effective_quantum_number(self.neutral_energy * self.eta, 1.0)
    }

    /// `n*` of the second step (residual charge 2).
    pub fn n12_star(&self) -> f64 {
        effective_quantum_number(self.ion_energy * self.eta, 2.0)
    }

    fn channels(&self) -> (AdkChannel, AdkChannel, f64) {
        let r = match self.direct {
            DirectChannel::Ratio => self.ratio,
            DirectChannel::Zero => 0.0,
        };
        (
            AdkChannel::new(self.neutral_energy * self.eta, 1.0),
            AdkChannel::new(self.ion_energy * self.eta, 2.0),
            r,
        )
    }

    /// Field-to-rates map.
    pub fn rate_fn(&self) -> impl Fn(f64) -> Rates + Sync {
        let (c01, c12, r) = self.channels();
        move |f| {
            let w01 = c01.rate(f);
            Rates {
                w01,
                w02: r * w01,
                w12: c12.rate(f),
            }
        }
    }

    pub fn rates(&self, field: f64) -> Rates {
        (self.rate_fn())(field)
    }

    /// Depletion rate of the neutral, `W₀₁ + W₀₂`.
    pub fn depletion_rate(&self, field: f64) -> f64 {
        let r = self.rates(field);
        r.w01 + r.w02
    }
}

/// Fractions of neutral, singly and doubly charged species.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Populations {
    pub p0: f64,
    pub p1: f64,
    /// Doubly charged through the direct channel.
    pub p2_direct: f64,
    /// Doubly charged through the ion.
    pub p2_sequential: f64,
}

impl Populations {
    pub const INITIAL: Self = Self {
        p0: 1.0,
        p1: 0.0,
        p2_direct: 0.0,
        p2_sequential: 0.0,
    };

    pub fn p2(&self) -> f64 {
        self.p2_direct + self.p2_sequential
    }

    pub fn ionized(&self) -> f64 {
        self.p1 + self.p2()
    }

    pub fn total(&self) -> f64 {
        self.p0 + self.p1 + self.p2()
    }

    fn from_array(y: &[f64; 4]) -> Self {
        Self {
            p0: y[0],
            p1: y[1],
            p2_direct: y[2],
            p2_sequential: y[3],
        }
    }
}

/// Populations at the end of the window plus the accepted-step history.
#[derive(Clone, Debug)]
pub struct RateSolution {
    pub populations: Populations,
    pub times: Vec<f64>,
    pub history: Vec<Populations>,
    pub rejected_steps: usize,
}

/// Integrates the rate equations for `model` driven by `shape` over its
/// duration.
pub fn integrate_rates(
    model: &RateModel,
    shape: &dyn FieldShape,
    tol: f64,
) -> Result<RateSolution> {
    model.validate()?;
    let rates = model.rate_fn();
    integrate_rate_equations(|t| rates(shape.field(t)), shape.duration(), tol)
}

/// Integrates the rate equations for arbitrary time-dependent rates over
/// `[0, t_end]` from a pure neutral.
pub fn integrate_rate_equations(
    rates: impl Fn(f64) -> Rates,
    t_end: f64,
    tol: f64,
) -> Result<RateSolution> {
    if !(tol > 0.0) {
        invalid!("integration tolerance must be positive, got {tol}");
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        invalid!("integration window must be finite and non-negative, got {t_end}");
    }
    let rhs = |t: f64, y: &[f64; 4]| {
        let w = rates(t);
        let out0 = (w.w01 + w.w02) * y[0];
        let out1 = w.w12 * y[1];
        [-out0, w.w01 * y[0] - out1, w.w02 * y[0], out1]
    };
    let y0 = [1.0, 0.0, 0.0, 0.0];
    let (times, states, rejected) = dormand_prince(rhs, y0, t_end, tol, t_end / 400.0)?;
    let history: Vec<Populations> = states.iter().map(Populations::from_array).collect();
    Ok(RateSolution {
        populations: *history.last().expect("initial state recorded"),
        times,
        history,
        rejected_steps: rejected,
    })
}

#[allow(clippy::type_complexity)]
fn dormand_prince<const N: usize>(
    f: impl Fn(f64, &[f64; N]) -> [f64; N],
    y0: [f64; N],
    t_end: f64,
    tol: f64,
    h_max: f64,
) -> Result<(Vec<f64>, Vec<[f64; N]>, usize)> {
    const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    // fifth-order weights minus embedded fourth-order weights
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];

    let mut t = 0.0;
    let mut y = y0;
    let mut times = vec![0.0];
    let mut states = vec![y0];
    let mut rejected = 0;
    if t_end == 0.0 {
        return Ok((times, states, rejected));
    }
    let h_min = t_end * 1e-14;
    let mut h = h_max.min(t_end);
    let mut k = [[0.0; N]; 7];
    k[0] = f(t, &y);
    while t < t_end {
        h = h.min(t_end - t);
        if h < h_min {
            return Err(Error::Numerical(format!(
                "rate integration step underflow at t = {t}"
            )));
        }
        for s in 0..6 {
            let mut ys = y;
            for (i, v) in ys.iter_mut().enumerate() {
                for (j, kj) in k.iter().enumerate().take(s + 1) {
                    *v += h * A[s][j] * kj[i];
                }
            }
            k[s + 1] = f(t + C[s] * h, &ys);
        }
        // stage 7 is evaluated at the fifth-order solution
        let mut y_new = y;
        for (i, v) in y_new.iter_mut().enumerate() {
            for (j, kj) in k.iter().enumerate().take(6) {
                *v += h * A[5][j] * kj[i];
            }
        }
        let mut err: f64 = 0.0;
        for i in 0..N {
            let e: f64 = (0..7).map(|j| E[j] * k[j][i]).sum::<f64>() * h;
            let scale = tol + tol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / scale).abs());
        }
        if !err.is_finite() {
            return Err(Error::Numerical(format!(
                "rate integration diverged at t = {t}"
            )));
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        if err <= 1.0 {
            t = if t_end - t - h <= 1e-12 * t_end {
                t_end
            } else {
                t + h
            };
            y = y_new;
            k[0] = k[6];
            times.push(t);
            states.push(y);
        } else {
            rejected += 1;
        }
        h = (h * factor).min(h_max);
    }
    Ok((times, states, rejected))
}

fn bisect(
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    mut g: impl FnMut(f64) -> Result<f64>,
) -> Result<f64> {
    let mut g_lo = g(lo)?;
    let g_hi = g(hi)?;
    if g_lo.signum() == g_hi.signum() {
        return Err(Error::OutOfRange(format!(
            "root not bracketed by [{lo}, {hi}] (values {g_lo:e}, {g_hi:e})"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let g_mid = g(mid)?;
        if g_mid.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Peak field at which the integrated rate equations give a total
/// ionization probability of `1 - 1/e` for the pulse family `family`.
pub fn saturation_field<S: FieldShape>(
    model: &RateModel,
    family: impl Fn(f64) -> S,
    bracket: (f64, f64),
    tol: f64,
) -> Result<f64> {
    let target = 1.0 - (-1.0f64).exp();
    bisect(bracket.0, bracket.1, 1e-10, |f| {
        let s = integrate_rates(model, &family(f), tol)?;
        Ok(s.populations.ionized() - target)
    })
}

/// Saturation field of a square pulse of length `duration`: the root of
/// `W(F)·T = 1` with `W` the depletion rate of the neutral.
pub fn square_pulse_saturation(
    model: &RateModel,
    duration: f64,
    bracket: (f64, f64),
) -> Result<f64> {
    model.validate()?;
    bisect(bracket.0, bracket.1, 1e-12, |f| {
        Ok((model.depletion_rate(f) * duration).ln())
    })
}

/// Saturation field of a sinusoidal pulse of length `duration`: the root of
/// `(T/2π)∫₀^{2π} W(F sin τ) dτ = 1`.
pub fn sine_pulse_saturation(model: &RateModel, duration: f64, bracket: (f64, f64)) -> Result<f64> {
    model.validate()?;
    let rates = model.rate_fn();
    bisect(bracket.0, bracket.1, 1e-12, |f| {
        // the integrand depends on |F|, so [0, π] carries half the cycle
        let w = |tau: f64| {
            let r = rates(f * tau.sin());
            r.w01 + r.w02
        };
        let mean = simpson(w, 0.0, PI, 4096) / PI;
        Ok((mean * duration).ln())
    })
}

/// One point of a rate-model field scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KneePoint {
    pub f0: f64,
    pub populations: Populations,
}

impl KneePoint {
    pub fn si(&self) -> f64 {
        self.populations.p1
    }

    pub fn di(&self) -> f64 {
        self.populations.p2()
    }

    /// Row in the shared sweep-table layout; the direct and sequential
    /// parts of the doubly charged yield fill the two channel columns.
    pub fn sweep_row(&self) -> SweepRow {
        SweepRow {
            f0: self.f0,
            si: self.si(),
            di: self.di(),
            di_se: self.populations.p2_direct,
            di_ce: self.populations.p2_sequential,
            p_ion: self.populations.ionized(),
        }
    }
}

/// Rate-model yields over a field scan with the derived saturation fields.
#[derive(Clone, Debug)]
pub struct KneeCurves {
    pub points: Vec<KneePoint>,
    pub f_sat: Option<f64>,
    pub f_max: Option<FieldMaximum>,
}

/// Final populations for each peak field of `f0_scan` with the pulse shape
/// of `base`.
pub fn knee_curves(
    model: &RateModel,
    base: &PulseParams,
    f0_scan: &[f64],
    tol: f64,
) -> Result<KneeCurves> {
    if f0_scan.windows(2).any(|w| !(w[0] < w[1])) {
        invalid!("field scan must be strictly increasing");
    }
    let points = f0_scan
        .par_iter()
        .map(|&f0| {
            let pulse = base.with_amplitude(f0);
            pulse.validate()?;
            let s = integrate_rates(model, &pulse, tol)?;
            Ok(KneePoint {
                f0,
                populations: s.populations,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let p_ion: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.f0, p.populations.ionized()))
        .collect();
    let si: Vec<(f64, f64)> = points.iter().map(|p| (p.f0, p.si())).collect();
    let f_sat = match find_f_sat(&p_ion) {
        Ok(f) => Some(f),
        Err(e) => {
            log::warn!("no saturation field in scan: {e}");
            None
        }
    };
    let f_max = match find_f_max(&si) {
        Ok(m) if !m.on_boundary => Some(m),
        Ok(m) => {
            log::warn!(
                "single-ionization maximum at the scan edge F0 = {}",
                m.f_max
            );
            None
        }
        Err(e) => {
            log::warn!("no single-ionization maximum in scan: {e}");
            None
        }
    };
    Ok(KneeCurves {
        points,
        f_sat,
        f_max,
    })
}
