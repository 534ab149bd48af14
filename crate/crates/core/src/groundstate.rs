//! Field-free ground states by imaginary-time relaxation: the two-electron
//! atom and the one-electron ion left behind when one electron is removed.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::{Axis, Gauge, Grid2D, Representation, Wavefunction};
use crate::potentials::{nuclear_attraction, static_potential_field, SoftCoreParams};
use crate::propagator::{strang_step, Propagator, StrangFactors};
use crate::pulse::PulseParams;

/// Imaginary-time relaxation settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelaxOptions {
    pub dt_im: f64,
    /// Stop when consecutive energies differ by less than this.
    pub tol: f64,
    pub max_steps: usize,
    /// Width of the initial Gaussian guess.
    pub sigma: f64,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self {
            dt_im: 0.01,
            tol: 1e-9,
            max_steps: 1_000_000,
            sigma: 1.0,
        }
    }
}

impl RelaxOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_im > 0.0 && self.dt_im.is_finite()) {
            invalid!("imaginary time step must be positive, got {}", self.dt_im);
        }
        if !(self.tol > 0.0) {
            invalid!("energy tolerance must be positive, got {}", self.tol);
        }
        if self.max_steps == 0 {
            invalid!("step budget must be positive");
        }
        if !(self.sigma > 0.0) {
            invalid!("initial guess width must be positive");
        }
        Ok(())
    }
}

/// Kinetic and potential parts of `⟨ψ|H₀|ψ⟩` for a normalized state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub potential: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential
    }
}

/// Relaxed two-electron state.
#[derive(Clone, Debug)]
pub struct GroundState {
    pub psi: Wavefunction,
    pub energy: f64,
    pub parts: EnergyParts,
    /// Energy after every imaginary step.
    pub history: Vec<f64>,
}

/// Field-free energy expectation, evaluated spectrally for the kinetic part.
pub fn energy_expectation(psi: &Wavefunction, soft_core: &SoftCoreParams) -> Result<EnergyParts> {
    if psi.representation() != Representation::Position {
        invalid!("energy expectation needs position representation");
    }
    let v = static_potential_field(psi.grid(), soft_core);
    Ok(energy_with_potential(psi, &v))
}

fn energy_with_potential(psi: &Wavefunction, v: &Array2<f64>) -> EnergyParts {
    let grid = psi.grid();
    let n = grid.n_points();
    let norm = psi.norm_sqr();
    let vs = v.as_slice().expect("standard layout");
    let pot_rows: Vec<f64> = psi
        .as_slice()
        .par_chunks(n)
        .zip(vs.par_chunks(n))
        .map(|(row, vrow)| row.iter().zip(vrow).map(|(z, &x)| z.norm_sqr() * x).sum())
        .collect();
    let potential = pot_rows.iter().sum::<f64>() * grid.dx() * grid.dx() / norm;

    let phi = psi
        .transform(Representation::Momentum)
        .expect("position to momentum is always valid");
    let k2: Vec<f64> = grid.momenta().iter().map(|k| 0.5 * k * k).collect();
    let kin_rows: Vec<f64> = phi
        .as_slice()
        .par_chunks(n)
        .enumerate()
        .map(|(a, row)| {
            row.iter()
                .zip(&k2)
                .map(|(z, &kb)| z.norm_sqr() * (k2[a] + kb))
                .sum()
        })
        .collect();
    let kinetic = kin_rows.iter().sum::<f64>() * grid.dk() * grid.dk() / norm;
    EnergyParts { kinetic, potential }
}

/// Symmetric Gaussian `exp(-(r₁²+r₂²)/2σ²)`, normalized.
pub fn gaussian_guess(grid: &Grid2D, sigma: f64) -> Wavefunction {
    let s = 2.0 * sigma * sigma;
    let mut psi = Wavefunction::from_fn(grid, |a, b| {
        Complex64::new((-(a * a + b * b) / s).exp(), 0.0)
    })
    .with_symmetry(true);
    psi.normalize();
    psi
}

/// Relaxes the symmetric Gaussian guess in imaginary time.
pub fn relax_imaginary_time(
    grid: &Grid2D,
    soft_core: &SoftCoreParams,
    options: &RelaxOptions,
) -> Result<GroundState> {
    relax_from(gaussian_guess(grid, options.sigma), soft_core, options)
}

/// Relaxes an arbitrary position-space starting state.
pub fn relax_from(
    mut psi: Wavefunction,
    soft_core: &SoftCoreParams,
    options: &RelaxOptions,
) -> Result<GroundState> {
    options.validate()?;
    soft_core.validate()?;
    if psi.representation() != Representation::Position {
        invalid!("relaxation needs a position-space starting state");
    }
    let grid = psi.grid().clone();
    let n = grid.n_points();
    let tau = options.dt_im;
    let v = static_potential_field(&grid, soft_core);
    let half_potential: Vec<Complex64> = v
        .iter()
        .map(|&x| Complex64::new((-0.5 * tau * x).exp(), 0.0))
        .collect();
    let inv_n = 1.0 / n as f64;
    let g: Vec<Complex64> = grid
        .momenta()
        .iter()
        .map(|k| Complex64::new(inv_n * (-0.5 * tau * k * k).exp(), 0.0))
        .collect();
    let factors = StrangFactors {
        half_potential: &half_potential,
        position_axis: None,
        momentum_axis: &g,
    };
    let plan = grid.axis().plan();

    psi.normalize();
    let mut history = Vec::new();
    let mut last = energy_with_potential(&psi, &v).total();
    for step in 0..options.max_steps {
        strang_step(psi.as_slice_mut(), plan, &factors);
        let norm = psi.normalize();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Numerical(format!(
                "imaginary-time norm became {norm} at step {step}"
            )));
        }
        let parts = energy_with_potential(&psi, &v);
        let e = parts.total();
        history.push(e);
        if (e - last).abs() < options.tol {
            log::debug!("relaxed in {} imaginary steps, E = {e}", step + 1);
            return Ok(GroundState {
                psi,
                energy: e,
                parts,
                history,
            });
        }
        last = e;
    }
    Err(Error::Convergence {
        what: "imaginary-time relaxation",
        steps: options.max_steps,
        last,
    })
}

/// Ground state of `-½∂² - Z/√(r²+ε)` on one axis.
#[derive(Clone, Debug)]
pub struct IonState {
    pub axis: Axis,
    pub amplitudes: Vec<Complex64>,
    pub energy: f64,
}

/// Ground energy and state of the one-electron ion by imaginary time.
pub fn ion_ground_state_1d(
    n_points: usize,
    dx: f64,
    soft_core: &SoftCoreParams,
    options: &RelaxOptions,
) -> Result<IonState> {
    options.validate()?;
    soft_core.validate()?;
    let axis = Axis::new(n_points, dx)?;
    if axis.extent() < 60.0 {
        invalid!("ion grid extent {} must be at least 60", axis.extent());
    }
    let n = n_points;
    let tau = options.dt_im;
    let r = axis.positions();
    let v: Vec<f64> = r
        .iter()
        .map(|&x| nuclear_attraction(x, soft_core))
        .collect();
    let hv: Vec<f64> = v.iter().map(|&x| (-0.5 * tau * x).exp()).collect();
    let gk: Vec<f64> = axis
        .momenta()
        .iter()
        .map(|k| (-0.5 * tau * k * k).exp() / n as f64)
        .collect();
    let plan = axis.plan();
    let s = 2.0 * options.sigma * options.sigma;
    let mut psi: Vec<Complex64> = r
        .iter()
        .map(|&x| Complex64::new((-x * x / s).exp(), 0.0))
        .collect();
    let normalize = |psi: &mut Vec<Complex64>| {
        let norm = (psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx).sqrt();
        psi.iter_mut().for_each(|z| *z /= norm);
    };
    let energy = |psi: &[Complex64]| {
        let pot: f64 = psi
            .iter()
            .zip(&v)
            .map(|(z, &x)| z.norm_sqr() * x)
            .sum::<f64>()
            * dx;
        let mut buf = psi.to_vec();
        plan.forward(&mut buf);
        let kin: f64 = buf
            .iter()
            .zip(axis.momenta())
            .map(|(z, k)| z.norm_sqr() * 0.5 * k * k)
            .sum::<f64>()
            * dx
            / n as f64;
        kin + pot
    };
    normalize(&mut psi);
    let mut last = energy(&psi);
    for _ in 0..options.max_steps {
        psi.iter_mut().zip(&hv).for_each(|(z, &h)| *z *= h);
        plan.forward(&mut psi);
        psi.iter_mut().zip(&gk).for_each(|(z, &g)| *z *= g);
        plan.inverse(&mut psi);
        psi.iter_mut().zip(&hv).for_each(|(z, &h)| *z *= h);
        normalize(&mut psi);
        let e = energy(&psi);
        if (e - last).abs() < options.tol {
            return Ok(IonState {
                axis,
                amplitudes: psi,
                energy: e,
            });
        }
        last = e;
    }
    Err(Error::Convergence {
        what: "ion relaxation",
        steps: options.max_steps,
        last,
    })
}

/// Ground energy of the one-electron ion.
pub fn ion_ground_energy_1d(
    n_points: usize,
    dx: f64,
    soft_core: &SoftCoreParams,
    options: &RelaxOptions,
) -> Result<f64> {
    Ok(ion_ground_state_1d(n_points, dx, soft_core, options)?.energy)
}

/// Copies `psi` into the centre of a larger grid with the same spacing.
pub fn embed(psi: &Wavefunction, target: &Grid2D) -> Result<Wavefunction> {
    let src = psi.grid();
    if psi.representation() != Representation::Position {
        invalid!("only position-space states can be embedded");
    }
    if (src.dx() - target.dx()).abs() > 1e-12 * src.dx() {
        invalid!(
            "embedding needs equal spacing, got {} and {}",
            src.dx(),
            target.dx()
        );
    }
    let (n, m) = (src.n_points(), target.n_points());
    if m < n || (m - n) % 2 != 0 || n % 2 != 0 {
        invalid!("cannot centre a {n}-point grid inside a {m}-point grid");
    }
    let off = (m - n) / 2;
    let mut out = Array2::zeros((m, m));
    out.slice_mut(ndarray::s![off..off + n, off..off + n])
        .assign(psi.amplitudes());
    let mut w = Wavefunction::from_array(target, out, Representation::Position)?
        .with_symmetry(psi.exchange_symmetric);
    w.gauge = psi.gauge;
    Ok(w)
}

/// Relaxed ground state refined for real-time steps of length `dt`, ready
/// to start a propagation.
pub fn stationary_ground_state(
    grid: &Grid2D,
    soft_core: &SoftCoreParams,
    relax: &RelaxOptions,
    dt: f64,
) -> Result<GroundState> {
    let mut gs = relax_imaginary_time(grid, soft_core, relax)?;
    gs.psi = refine_for_propagator(&gs.psi, soft_core, dt, gs.energy, &RefineOptions::default())?;
    gs.parts = energy_expectation(&gs.psi, soft_core)?;
    gs.energy = gs.parts.total();
    Ok(gs)
}

/// Filter width and reach of [`refine_for_propagator`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineOptions {
    /// Gaussian width of the time window.
    pub width: f64,
    /// Window truncation in units of `width`.
    pub reach: f64,
    /// Repetitions; the energy is re-evaluated before each one.
    pub passes: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            width: 12.0,
            reach: 3.0,
            passes: 2,
        }
    }
}

/// Projects `psi` onto the eigenvector of the discrete real-time propagator
/// nearest `energy`:
/// `Σₙ exp(-(n·dt)²/2τ²)·e^{iEn·dt}·Uⁿψ` over forward and backward steps.
///
/// The relaxed state is an eigenvector of the Hamiltonian only up to the
/// splitting error of the real-time step; this removes the residual
/// excited-state admixture so that field-free propagation leaves it
/// unchanged apart from a global phase.
pub fn refine_for_propagator(
    psi: &Wavefunction,
    soft_core: &SoftCoreParams,
    dt: f64,
    energy: f64,
    options: &RefineOptions,
) -> Result<Wavefunction> {
    if !(dt > 0.0) || !(options.width > 0.0) || !(options.reach > 0.0) {
        invalid!("refinement needs positive dt, width and reach");
    }
    let mut out = filter_once(psi, soft_core, dt, energy, options)?;
    for _ in 1..options.passes {
        let e = energy_expectation(&out, soft_core)?.total();
        out = filter_once(&out, soft_core, dt, e, options)?;
    }
    Ok(out)
}

fn filter_once(
    psi: &Wavefunction,
    soft_core: &SoftCoreParams,
    dt: f64,
    energy: f64,
    options: &RefineOptions,
) -> Result<Wavefunction> {
    let still = PulseParams::new(0.0, 1.0, 0.0, 1)?;
    let steps = (options.reach * options.width / dt).ceil() as usize;
    let weight = |k: usize| {
        let t = k as f64 * dt;
        (-0.5 * (t / options.width).powi(2)).exp()
    };
    let mut acc = psi.clone();
    acc.as_slice_mut().iter_mut().for_each(|z| *z *= weight(0));
    for sign in [1.0, -1.0] {
        let mut prop = Propagator::new(psi.grid(), soft_core, still, Gauge::Length, sign * dt)?;
        let mut phi = psi.clone();
        for k in 1..=steps {
            prop.step_unitary(&mut phi, 0.0)?;
            let c = Complex64::from_polar(weight(k), sign * energy * k as f64 * dt);
            acc.as_slice_mut()
                .par_iter_mut()
                .zip(phi.as_slice().par_iter())
                .for_each(|(a, &p)| *a += c * p);
        }
    }
    acc.gauge = psi.gauge;
    acc.normalize();
    Ok(acc)
}
