//! Real-time split-operator propagation in either gauge, with an optional
//! absorbing mask.
//!
//! One Strang step applies half of the position-diagonal part, the full
//! momentum-diagonal part, and the second half of the position-diagonal part,
//! with the field evaluated at the step midpoint:
//!
//! | gauge    | position-diagonal          | momentum-diagonal                    |
//! |----------|----------------------------|--------------------------------------|
//! | length   | `V + (√3/2)F(r₁+r₂)`       | `(k₁²+k₂²)/2`                        |
//! | velocity | `V`                        | `(k₁²+k₂²)/2 + (√3/2)A(k₁+k₂)`       |

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::{Gauge, Grid2D, Representation, Wavefunction};
use crate::potentials::{static_potential_field, SoftCoreParams, FIELD_FACTOR};
use crate::pulse::PulseParams;
use crate::spectral::{transpose_square, FftPlan};

/// Diagonal factors of one Strang step on an `n × n` buffer.
pub(crate) struct StrangFactors<'a> {
    /// `n²` values applied before and after the momentum part.
    pub half_potential: &'a [Complex64],
    /// Separable per-axis factor `h[i]·h[j]` applied with each half step.
    pub position_axis: Option<&'a [Complex64]>,
    /// Separable momentum factor `g[a]·g[b]`; must include the `1/n` DFT
    /// normalization per axis.
    pub momentum_axis: &'a [Complex64],
}

/// One Strang step on raw position-space data: three row passes and two
/// transposes. Momentum space is visited in transposed layout, which is
/// harmless because the momentum factor is symmetric in the two axes.
pub(crate) fn strang_step(data: &mut [Complex64], plan: &FftPlan, f: &StrangFactors<'_>) {
    let n = plan.len();
    let zero = Complex64::new(0.0, 0.0);
    let scratch = || vec![zero; plan.scratch_len()];
    let position_half = |i: usize, row: &mut [Complex64]| {
        let p = &f.half_potential[i * n..(i + 1) * n];
        match f.position_axis {
            Some(h) => {
                let hi = h[i];
                for ((z, &pv), &hj) in row.iter_mut().zip(p).zip(h) {
                    *z *= pv * hi * hj;
                }
            }
            None => {
                for (z, &pv) in row.iter_mut().zip(p) {
                    *z *= pv;
                }
            }
        }
    };

    data.par_chunks_mut(n)
        .enumerate()
        .for_each_init(scratch, |s, (i, row)| {
            position_half(i, row);
            plan.forward_with_scratch(row, s);
        });
    transpose_square(data, n);
    let g = f.momentum_axis;
    data.par_chunks_mut(n)
        .enumerate()
        .for_each_init(scratch, |s, (a, row)| {
            plan.forward_with_scratch(row, s);
            let ga = g[a];
            for (z, &gb) in row.iter_mut().zip(g) {
                *z *= ga * gb;
            }
            plan.inverse_with_scratch(row, s);
        });
    transpose_square(data, n);
    data.par_chunks_mut(n)
        .enumerate()
        .for_each_init(scratch, |s, (i, row)| {
            plan.inverse_with_scratch(row, s);
            position_half(i, row);
        });
}

/// Absorbing mask `m(r) = cos^q(π(|r|-x₀)/(2w))` beyond `x₀`, applied per
/// axis, with `w = L/2 - x₀`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AbsorberSpec {
    pub x0: f64,
    pub exponent: f64,
}

impl AbsorberSpec {
    pub const DEFAULT_FRACTION: f64 = 0.8;
    pub const DEFAULT_EXPONENT: f64 = 0.125;

    /// Onset at `fraction·L/2`.
    pub fn from_fraction(grid: &Grid2D, fraction: f64, exponent: f64) -> Self {
        Self {
            x0: fraction * grid.half_extent(),
            exponent,
        }
    }

    pub fn default_for(grid: &Grid2D) -> Self {
        Self::from_fraction(grid, Self::DEFAULT_FRACTION, Self::DEFAULT_EXPONENT)
    }

    pub fn width(&self, grid: &Grid2D) -> f64 {
        grid.half_extent() - self.x0
    }

    /// Checks `0.6·L/2 ≤ x₀ < L/2` and a positive exponent.
    pub fn validate(&self, grid: &Grid2D) -> Result<()> {
        let half = grid.half_extent();
        if !(self.x0 < half) {
            invalid!(
                "absorber onset {} must lie inside the box half-width {half}",
                self.x0
            );
        }
        if self.x0 < 0.6 * half {
            invalid!(
                "absorber onset {} is too close to the nucleus (needs ≥ 0.6·L/2 = {})",
                self.x0,
                0.6 * half
            );
        }
        if !(self.exponent > 0.0) {
            invalid!("absorber exponent must be positive, got {}", self.exponent);
        }
        Ok(())
    }

    /// Checks `x₀ > x_q`, reporting the box length that would satisfy it.
    pub fn check_quiver(&self, grid: &Grid2D, pulse: &PulseParams) -> Result<()> {
        let xq = pulse.quiver_radius();
        if self.x0 <= xq {
            let fraction = self.x0 / grid.half_extent();
            invalid!(
                "absorber onset {:.3} does not exceed the quiver radius {:.3}; minimum L = {:.3}",
                self.x0,
                xq,
                2.0 * xq / fraction
            );
        }
        Ok(())
    }

    pub fn mask_value(&self, r: f64, grid: &Grid2D) -> f64 {
        let d = r.abs() - self.x0;
        if d <= 0.0 {
            return 1.0;
        }
        let w = self.width(grid);
        let c = (std::f64::consts::FRAC_PI_2 * (d / w).min(1.0)).cos();
        c.max(0.0).powf(self.exponent)
    }

    /// Mask samples along one axis.
    pub fn mask(&self, grid: &Grid2D) -> Vec<f64> {
        grid.positions()
            .iter()
            .map(|&r| self.mask_value(r, grid))
            .collect()
    }
}

/// Time stepping parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepScheme {
    pub dt: f64,
}

impl Default for StepScheme {
    fn default() -> Self {
        Self { dt: 0.05 }
    }
}

impl StepScheme {
    /// `dt·max|kinetic eigenvalue|`; values above π alias the phase of the
    /// highest lattice momenta.
    pub fn aliasing_product(&self, grid: &Grid2D) -> f64 {
        let k = grid.k_max();
        self.dt.abs() * k * k
    }

    pub fn is_alias_free(&self, grid: &Grid2D) -> bool {
        self.aliasing_product(grid) < std::f64::consts::PI
    }

    /// Number of steps covering `duration` and the step that lands on it
    /// exactly.
    pub fn steps_for(&self, duration: f64) -> (usize, f64) {
        let n = (duration / self.dt).round().max(1.0) as usize;
        (n, duration / n as f64)
    }
}

/// Per-axis labelling of cells into regions: `region = table[l(i)][l(j)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionMap {
    pub labels: Vec<u8>,
    /// Row-major `n_labels × n_labels` table of region indices.
    pub table: Vec<usize>,
    pub n_labels: usize,
    pub n_regions: usize,
}

impl RegionMap {
    /// Every cell in region 0.
    pub fn single(n: usize) -> Self {
        Self {
            labels: vec![0; n],
            table: vec![0],
            n_labels: 1,
            n_regions: 1,
        }
    }

    #[inline]
    pub fn region(&self, i: usize, j: usize) -> usize {
        self.table[self.labels[i] as usize * self.n_labels + self.labels[j] as usize]
    }

    /// Population of every region, `Σ|ψ|²·dx²`.
    pub fn populations(&self, psi: &Wavefunction) -> Vec<f64> {
        let n = psi.grid().n_points();
        let w = psi.cell_weight();
        let per_row: Vec<Vec<f64>> = psi
            .as_slice()
            .par_chunks(n)
            .enumerate()
            .map(|(i, row)| {
                let mut acc = vec![0.0; self.n_regions];
                for (j, z) in row.iter().enumerate() {
                    acc[self.region(i, j)] += z.norm_sqr();
                }
                acc
            })
            .collect();
        let mut total = vec![0.0; self.n_regions];
        for row in per_row {
            for (t, v) in total.iter_mut().zip(row) {
                *t += v;
            }
        }
        total.iter_mut().for_each(|t| *t *= w);
        total
    }
}

/// Split-operator stepper for one grid, potential, pulse, gauge and step.
pub struct Propagator {
    grid: Grid2D,
    pulse: PulseParams,
    gauge: Gauge,
    dt: f64,
    half_potential: Vec<Complex64>,
    kinetic_half_phase: Vec<f64>,
    mask: Option<Vec<f64>>,
    /// Rows/columns where the mask is below one.
    mask_frame: Vec<usize>,
    axis_buf: Vec<Complex64>,
    momentum_buf: Vec<Complex64>,
}

/// Outcome of one step.
#[derive(Clone, Debug, Default)]
pub struct StepReport {
    /// Norm removed by the mask in each region of the supplied map.
    pub absorbed: Vec<f64>,
}

impl Propagator {
    pub fn new(
        grid: &Grid2D,
        soft_core: &SoftCoreParams,
        pulse: PulseParams,
        gauge: Gauge,
        dt: f64,
    ) -> Result<Self> {
        soft_core.validate()?;
        let v = static_potential_field(grid, soft_core);
        Self::with_potential(grid, &v, pulse, gauge, dt)
    }

    /// Stepper for an arbitrary static potential sampled on the grid.
    pub fn with_potential(
        grid: &Grid2D,
        v: &Array2<f64>,
        pulse: PulseParams,
        gauge: Gauge,
        dt: f64,
    ) -> Result<Self> {
        pulse.validate()?;
        if !(dt.is_finite() && dt != 0.0) {
            invalid!("time step must be finite and non-zero, got {dt}");
        }
        let n = grid.n_points();
        if v.dim() != (n, n) {
            invalid!("potential shape {:?} does not match the grid", v.dim());
        }
        let half_potential = v
            .iter()
            .map(|&x| Complex64::from_polar(1.0, -0.5 * dt * x))
            .collect();
        let kinetic_half_phase = grid.momenta().iter().map(|k| 0.5 * k * k).collect();
        Ok(Self {
            grid: grid.clone(),
            pulse,
            gauge,
            dt,
            half_potential,
            kinetic_half_phase,
            mask: None,
            mask_frame: Vec::new(),
            axis_buf: vec![Complex64::new(1.0, 0.0); n],
            momentum_buf: vec![Complex64::new(1.0, 0.0); n],
        })
    }

    /// Enables the absorbing mask after validating its geometry.
    pub fn with_absorber(mut self, absorber: &AbsorberSpec) -> Result<Self> {
        absorber.validate(&self.grid)?;
        let mask = absorber.mask(&self.grid);
        self.mask_frame = mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m < 1.0)
            .map(|(i, _)| i)
            .collect();
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn gauge(&self) -> Gauge {
        self.gauge
    }

    pub fn pulse(&self) -> &PulseParams {
        &self.pulse
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    /// Advances `psi` from `t` to `t + dt` without absorption.
    pub fn step_unitary(&mut self, psi: &mut Wavefunction, t: f64) -> Result<()> {
        if psi.representation() != Representation::Position {
            invalid!(
                "propagation needs position representation, got {:?}",
                psi.representation()
            );
        }
        if psi.grid() != &self.grid {
            invalid!("wavefunction grid does not match the propagator grid");
        }
        let n = self.grid.n_points();
        let dt = self.dt;
        let t_mid = t + 0.5 * dt;
        let r = self.grid.positions();
        let k = self.grid.momenta();
        let inv_n = 1.0 / n as f64;

        let position_axis = match self.gauge {
            Gauge::Length => {
                let c = FIELD_FACTOR * self.pulse.field_at(t_mid);
                for (h, &x) in self.axis_buf.iter_mut().zip(r) {
                    *h = Complex64::from_polar(1.0, -0.5 * dt * c * x);
                }
                for (g, &e) in self.momentum_buf.iter_mut().zip(&self.kinetic_half_phase) {
                    *g = Complex64::from_polar(inv_n, -dt * e);
                }
                Some(self.axis_buf.as_slice())
            }
            Gauge::Velocity => {
                let c = FIELD_FACTOR * self.pulse.vector_potential_at(t_mid);
                for ((g, &e), &km) in self
                    .momentum_buf
                    .iter_mut()
                    .zip(&self.kinetic_half_phase)
                    .zip(k)
                {
                    *g = Complex64::from_polar(inv_n, -dt * (e + c * km));
                }
                None
            }
        };
        let factors = StrangFactors {
            half_potential: &self.half_potential,
            position_axis,
            momentum_axis: &self.momentum_buf,
        };
        strang_step(psi.as_slice_mut(), self.grid.axis().plan(), &factors);
        psi.gauge = self.gauge;
        Ok(())
    }

    /// Advances one step and applies the mask, attributing the removed norm
    /// to the regions of `regions`.
    pub fn step(
        &mut self,
        psi: &mut Wavefunction,
        t: f64,
        regions: &RegionMap,
    ) -> Result<StepReport> {
        self.step_unitary(psi, t)?;
        Ok(StepReport {
            absorbed: self.absorb(psi, regions),
        })
    }

    fn absorb(&self, psi: &mut Wavefunction, regions: &RegionMap) -> Vec<f64> {
        let mut absorbed = vec![0.0; regions.n_regions];
        let Some(mask) = &self.mask else {
            return absorbed;
        };
        let n = self.grid.n_points();
        let w = psi.cell_weight();
        let data = psi.as_slice_mut();
        for (i, row) in data.chunks_mut(n).enumerate() {
            let mi = mask[i];
            let mut touch = |j: usize, z: &mut Complex64| {
                let m = mi * mask[j];
                let before = z.norm_sqr();
                *z *= m;
                absorbed[regions.region(i, j)] += before * (1.0 - m * m);
            };
            if mi < 1.0 {
                for (j, z) in row.iter_mut().enumerate() {
                    touch(j, z);
                }
            } else {
                for &j in &self.mask_frame {
                    touch(j, &mut row[j]);
                }
            }
        }
        absorbed.iter_mut().for_each(|a| *a *= w);
        absorbed
    }
}

/// Record handed to observers after every step.
#[derive(Clone, Debug)]
pub struct StepRecord<'a> {
    pub step: usize,
    /// Time at the end of the step.
    pub t: f64,
    pub dt: f64,
    /// Norm removed during this step, per region.
    pub absorbed: &'a [f64],
    /// Cumulative removed norm, per region.
    pub absorbed_cumulative: &'a [f64],
}

/// Hook invoked during [`propagate`].
pub trait Observer {
    fn start(&mut self, _t: f64, _psi: &Wavefunction) -> Result<()> {
        Ok(())
    }

    fn observe(&mut self, record: &StepRecord<'_>, psi: &Wavefunction) -> Result<()>;
}

/// Result of a full propagation.
#[derive(Clone, Debug)]
pub struct Propagated {
    pub psi: Wavefunction,
    pub steps: usize,
    pub dt: f64,
    pub absorbed: Vec<f64>,
}

impl Propagated {
    pub fn absorbed_total(&self) -> f64 {
        self.absorbed.iter().sum()
    }
}

/// Propagation run description.
#[derive(Clone, Debug)]
pub struct PropagationSetup {
    pub soft_core: SoftCoreParams,
    pub pulse: PulseParams,
    pub gauge: Gauge,
    pub scheme: StepScheme,
    pub absorber: Option<AbsorberSpec>,
}

/// Evolves `psi0` over `(n_c + 1)` optical cycles, calling every observer
/// after each step.
pub fn propagate(
    psi0: &Wavefunction,
    setup: &PropagationSetup,
    regions: &RegionMap,
    observers: &mut [&mut dyn Observer],
) -> Result<Propagated> {
    let grid = psi0.grid();
    if regions.labels.len() != grid.n_points() {
        invalid!("region map does not match the grid");
    }
    match &setup.absorber {
        Some(a) => a.check_quiver(grid, &setup.pulse)?,
        None => {
            let xq = setup.pulse.quiver_radius();
            if grid.half_extent() <= xq {
                invalid!(
                    "box half-width {:.3} does not exceed the quiver radius {:.3}; minimum L = {:.3}",
                    grid.half_extent(),
                    xq,
                    2.0 * xq
                );
            }
        }
    }
    if !setup.scheme.is_alias_free(grid) {
        log::warn!(
            "dt·k_max² = {:.3} exceeds π; the highest lattice momenta alias",
            setup.scheme.aliasing_product(grid)
        );
    }
    let (steps, dt) = setup.scheme.steps_for(setup.pulse.propagation_time());
    let mut prop = Propagator::new(grid, &setup.soft_core, setup.pulse, setup.gauge, dt)?;
    if let Some(a) = &setup.absorber {
        prop = prop.with_absorber(a)?;
    }
    let mut psi = psi0.clone();
    psi.gauge = setup.gauge;
    for obs in observers.iter_mut() {
        obs.start(0.0, &psi)?;
    }
    let mut cumulative = vec![0.0; regions.n_regions];
    for step in 0..steps {
        let t = step as f64 * dt;
        let report = prop.step(&mut psi, t, regions)?;
        for (c, a) in cumulative.iter_mut().zip(&report.absorbed) {
            *c += a;
        }
        let record = StepRecord {
            step: step + 1,
            t: (step + 1) as f64 * dt,
            dt,
            absorbed: &report.absorbed,
            absorbed_cumulative: &cumulative,
        };
        for obs in observers.iter_mut() {
            obs.observe(&record, &psi)?;
        }
        if step % 256 == 0 && !psi.as_slice()[0].re.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite amplitude at step {step}"
            )));
        }
    }
    Ok(Propagated {
        psi,
        steps,
        dt,
        absorbed: cumulative,
    })
}

/// Streams `t, norm, absorbed, region populations` as delimited text.
pub struct TextRecorder<W: std::io::Write> {
    out: W,
    regions: RegionMap,
    every: usize,
}

impl<W: std::io::Write> TextRecorder<W> {
    pub fn new(mut out: W, regions: RegionMap, every: usize, names: &[&str]) -> Result<Self> {
        write!(out, "t norm absorbed")?;
        for name in names {
            write!(out, " {name}")?;
        }
        writeln!(out)?;
        Ok(Self {
            out,
            regions,
            every: every.max(1),
        })
    }

    fn line(&mut self, t: f64, psi: &Wavefunction, absorbed: f64) -> Result<()> {
        let pops = self.regions.populations(psi);
        let norm: f64 = pops.iter().sum();
        write!(self.out, "{t:.16e} {norm:.16e} {absorbed:.16e}")?;
        for p in pops {
            write!(self.out, " {p:.16e}")?;
        }
        writeln!(self.out)?;
        Ok(())
    }
}

impl<W: std::io::Write> Observer for TextRecorder<W> {
    fn start(&mut self, t: f64, psi: &Wavefunction) -> Result<()> {
        self.line(t, psi, 0.0)
    }

    fn observe(&mut self, record: &StepRecord<'_>, psi: &Wavefunction) -> Result<()> {
        if record.step % self.every == 0 {
            let absorbed = record.absorbed_cumulative.iter().sum();
            self.line(record.t, psi, absorbed)?;
        }
        Ok(())
    }
}

/// Writes a binary snapshot every `every` steps into `dir`.
pub struct SnapshotWriter {
    dir: std::path::PathBuf,
    every: usize,
}

impl SnapshotWriter {
    pub fn new(dir: impl Into<std::path::PathBuf>, every: usize) -> Self {
        Self {
            dir: dir.into(),
            every: every.max(1),
        }
    }
}

impl Observer for SnapshotWriter {
    fn observe(&mut self, record: &StepRecord<'_>, psi: &Wavefunction) -> Result<()> {
        if record.step % self.every == 0 {
            let path = self.dir.join(format!("snapshot_{:07}.bin", record.step));
            crate::io::write_wavefunction(&path, psi)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::groundstate::{relax_imaginary_time, RelaxOptions};

    fn still() -> PulseParams {
        PulseParams::new(0.0, 0.5, 0.0, 1).unwrap()
    }

    fn lumpy(grid: &Grid2D) -> Wavefunction {
        let mut psi = Wavefunction::from_fn(grid, |a, b| {
            let g = (-(a * a + b * b) / 4.0).exp();
            Complex64::new(g * (1.0 + 0.3 * a), g * 0.2 * b)
                * Complex64::from_polar(1.0, 0.7 * a - 0.4 * b)
        });
        psi.normalize();
        psi
    }

    fn max_abs_diff(a: &Wavefunction, b: &Wavefunction) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn field_free_step_is_unitary() {
        let g = make_grid(64, 0.3).unwrap();
        let mut psi = lumpy(&g);
        let mut prop =
            Propagator::new(&g, &SoftCoreParams::default(), still(), Gauge::Length, 0.05).unwrap();
        let mut last = psi.norm_sqr();
        for k in 0..200 {
            prop.step_unitary(&mut psi, k as f64 * 0.05).unwrap();
            let n = psi.norm_sqr();
            assert!((n - last).abs() < 1e-12);
            last = n;
        }
    }

    #[test]
    fn driven_step_is_unitary_in_both_gauges() {
        let g = make_grid(64, 0.3).unwrap();
        let pulse = PulseParams::new(0.1, 0.5, 0.3, 1).unwrap();
        for gauge in [Gauge::Length, Gauge::Velocity] {
            let mut psi = lumpy(&g);
            let mut prop =
                Propagator::new(&g, &SoftCoreParams::default(), pulse, gauge, 0.05).unwrap();
            for k in 0..100 {
                prop.step_unitary(&mut psi, k as f64 * 0.05).unwrap();
            }
            assert!((psi.norm_sqr() - 1.0).abs() < 1e-11);
            assert_eq!(psi.gauge, gauge);
        }
    }

    #[test]
    fn ground_state_energy_is_conserved() {
        let g = make_grid(64, 0.3).unwrap();
        let sc = SoftCoreParams::default();
        let gs = relax_imaginary_time(&g, &sc, &RelaxOptions::default()).unwrap();
        let e0 = crate::groundstate::energy_expectation(&gs.psi, &sc)
            .unwrap()
            .total();
        let mut psi = gs.psi.clone();
        let mut prop = Propagator::new(&g, &sc, still(), Gauge::Length, 0.05).unwrap();
        for k in 0..1000 {
            prop.step_unitary(&mut psi, k as f64 * 0.05).unwrap();
        }
        let e1 = crate::groundstate::energy_expectation(&psi, &sc)
            .unwrap()
            .total();
        assert!(((e1 - e0) / e0).abs() < 1e-6, "{e0} -> {e1}");
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn time_reversal() {
        let g = make_grid(64, 0.3).unwrap();
        let sc = SoftCoreParams::default();
        let psi0 = lumpy(&g);
        let mut psi = psi0.clone();
        let mut fwd = Propagator::new(&g, &sc, still(), Gauge::Length, 0.05).unwrap();
        let mut back = Propagator::new(&g, &sc, still(), Gauge::Length, -0.05).unwrap();
        fwd.step_unitary(&mut psi, 0.0).unwrap();
        back.step_unitary(&mut psi, 0.05).unwrap();
        assert!(max_abs_diff(&psi, &psi0) < 1e-10);
    }

    #[test]
    fn zero_area_pulse_leaves_no_momentum_kick() {
        // Free particle: d⟨k₁⟩/dt = -(√3/2)F, integrated here by trapezoid.
        let g = make_grid(256, 0.3).unwrap();
        let n = g.n_points();
        let v = Array2::zeros((n, n));
        let pulse = PulseParams::new(0.05, 0.5, 0.9, 2).unwrap();
        let dt = 0.02;
        let (steps, dt) = StepScheme { dt }.steps_for(pulse.duration());
        let mut psi = Wavefunction::from_fn(&g, |a, b| {
            Complex64::from_polar((-(a * a + b * b) / 50.0).exp(), 0.2 * a)
        });
        psi.normalize();
        let mean_k1 = |psi: &Wavefunction| {
            let phi = psi.transform(Representation::Momentum).unwrap();
            let k = g.momenta();
            let mut s = 0.0;
            for (idx, z) in phi.as_slice().iter().enumerate() {
                s += z.norm_sqr() * k[idx / n];
            }
            s * g.dk() * g.dk()
        };
        let k0 = mean_k1(&psi);
        let mut prop = Propagator::with_potential(&g, &v, pulse, Gauge::Length, dt).unwrap();
        let mut impulse = 0.0;
        for s in 0..steps {
            let t = s as f64 * dt;
            impulse += 0.5 * dt * (pulse.field_at(t) + pulse.field_at(t + dt));
            prop.step_unitary(&mut psi, t).unwrap();
            if (s + 1) % (steps / 4) == 0 {
                let expected = k0 - FIELD_FACTOR * impulse;
                assert!(
                    (mean_k1(&psi) - expected).abs() < 1e-5,
                    "step {s}: {} vs {expected}",
                    mean_k1(&psi)
                );
            }
        }
        assert!(impulse.abs() < 1e-8);
        assert!((mean_k1(&psi) - k0).abs() < 1e-6);
    }

    #[test]
    fn second_order_self_convergence() {
        let g = make_grid(64, 0.3).unwrap();
        let sc = SoftCoreParams::default();
        let pulse = PulseParams::new(0.2, 1.0, 0.0, 1).unwrap();
        let run = |dt: f64| {
            let (steps, dt) = StepScheme { dt }.steps_for(2.0);
            let mut psi = lumpy(&g);
            let mut prop = Propagator::new(&g, &sc, pulse, Gauge::Length, dt).unwrap();
            for s in 0..steps {
                prop.step_unitary(&mut psi, s as f64 * dt).unwrap();
            }
            psi
        };
        let reference = run(0.005);
        let e1 = max_abs_diff(&run(0.04), &reference);
        let e2 = max_abs_diff(&run(0.02), &reference);
        let ratio = e1 / e2;
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio} ({e1}, {e2})");
    }

    #[test]
    fn deterministic_across_pool_sizes() {
        let g = make_grid(64, 0.3).unwrap();
        let pulse = PulseParams::new(0.1, 0.5, 0.2, 1).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let mut psi = lumpy(&g);
                let mut prop =
                    Propagator::new(&g, &SoftCoreParams::default(), pulse, Gauge::Velocity, 0.05)
                        .unwrap();
                for k in 0..50 {
                    prop.step_unitary(&mut psi, k as f64 * 0.05).unwrap();
                }
                psi
            })
        };
        assert_eq!(run(1).as_slice(), run(4).as_slice());
    }

    #[test]
    fn exchange_symmetry_is_preserved() {
        let g = make_grid(64, 0.3).unwrap();
        let pulse = PulseParams::new(0.2, 0.5, 0.4, 1).unwrap();
        let mut psi = Wavefunction::from_fn(&g, |a, b| {
            Complex64::new((-(a * a + b * b) / 3.0).exp() * (1.0 + 0.2 * (a + b)), 0.0)
        })
        .with_symmetry(true);
        psi.normalize();
        for gauge in [Gauge::Length, Gauge::Velocity] {
            let mut p = psi.clone();
            let mut prop =
                Propagator::new(&g, &SoftCoreParams::default(), pulse, gauge, 0.05).unwrap();
            for k in 0..300 {
                prop.step_unitary(&mut p, k as f64 * 0.05).unwrap();
            }
            assert!(p.exchange_asymmetry() < 1e-10);
        }
    }

    #[test]
    fn rejects_momentum_input_and_bad_dt() {
        let g = make_grid(16, 0.5).unwrap();
        let sc = SoftCoreParams::default();
        let mut psi = lumpy(&g).transform(Representation::Momentum).unwrap();
        let mut prop = Propagator::new(&g, &sc, still(), Gauge::Length, 0.05).unwrap();
        assert!(matches!(
            prop.step_unitary(&mut psi, 0.0),
            Err(Error::Validation(_))
        ));
        assert!(Propagator::new(&g, &sc, still(), Gauge::Length, 0.0).is_err());
    }

    #[test]
    fn absorber_validation() {
        let g = make_grid(512, 0.3).unwrap();
        let a = AbsorberSpec::default_for(&g);
        assert!((a.x0 - 61.44).abs() < 1e-12);
        assert!(a.validate(&g).is_ok());
        assert!(AbsorberSpec { x0: 40.0, ..a }.validate(&g).is_err());
        assert!(AbsorberSpec { x0: 76.8, ..a }.validate(&g).is_err());
        let far = PulseParams::new(0.16, 0.023, 0.0, 2).unwrap();
        let err = a.check_quiver(&g, &far).unwrap_err().to_string();
        assert!(err.contains("minimum L = 756.1"), "{err}");
        let near = PulseParams::new(0.16, 0.094, 0.0, 2).unwrap();
        assert!(a.check_quiver(&g, &near).is_ok());
        assert_eq!(a.mask_value(10.0, &g), 1.0);
        assert_eq!(a.mask_value(-61.0, &g), 1.0);
        assert!(a.mask_value(70.0, &g) < 1.0);
        assert_eq!(a.mask_value(70.0, &g), a.mask_value(-70.0, &g));
    }

    #[test]
    fn step_count_covers_window_exactly() {
        let (n, dt) = StepScheme { dt: 0.05 }.steps_for(10.01);
        assert_eq!(n, 200);
        assert!((n as f64 * dt - 10.01).abs() < 1e-12);
        let g = make_grid(64, 0.3).unwrap();
        assert!(StepScheme { dt: 0.05 }.is_alias_free(&make_grid(64, 0.5).unwrap()));
        assert!(!StepScheme { dt: 0.05 }.is_alias_free(&g));
        assert!(!StepScheme { dt: 0.05 }.is_alias_free(&make_grid(64, 0.1).unwrap()));
    }

    #[test]
    fn absorbed_plus_remaining_is_one() {
        let g = make_grid(128, 0.3).unwrap();
        let mut psi = Wavefunction::from_fn(&g, |a, b| {
            Complex64::from_polar((-((a - 5.0).powi(2) + b * b) / 4.0).exp(), 2.0 * a)
        });
        psi.normalize();
        let pulse = PulseParams::new(0.0, 0.3, 0.0, 1).unwrap();
        let setup = PropagationSetup {
            soft_core: SoftCoreParams::default(),
            pulse,
            gauge: Gauge::Length,
            scheme: StepScheme::default(),
            absorber: Some(AbsorberSpec::default_for(&g)),
        };
        struct Closure(f64);
        impl Observer for Closure {
            fn observe(&mut self, r: &StepRecord<'_>, psi: &Wavefunction) -> Result<()> {
                let total = psi.norm_sqr() + r.absorbed_cumulative.iter().sum::<f64>();
                self.0 = self.0.max((total - 1.0).abs());
                Ok(())
            }
        }
        let mut c = Closure(0.0);
        let out = propagate(&psi, &setup, &RegionMap::single(128), &mut [&mut c]).unwrap();
        assert!(out.absorbed_total() > 0.5);
        assert!(c.0 < 1e-10, "{}", c.0);
    }

    #[test]
    fn free_packet_reflection_is_small() {
        let g = make_grid(256, 0.3).unwrap();
        let n = g.n_points();
        let v = Array2::zeros((n, n));
        let absorber = AbsorberSpec::default_for(&g);
        let mut psi = Wavefunction::from_fn(&g, |a, b| {
            Complex64::from_polar((-(a - 10.0).powi(2) / 8.0 - b * b / 72.0).exp(), 2.5 * a)
        });
        psi.normalize();
        let mut prop = Propagator::with_potential(&g, &v, still(), Gauge::Length, 0.05)
            .unwrap()
            .with_absorber(&absorber)
            .unwrap();
        let regions = RegionMap::single(n);
        for k in 0..800 {
            prop.step(&mut psi, k as f64 * 0.05, &regions).unwrap();
        }
        // the packet has left; what remains between the absorbers came back
        let r = g.positions();
        let mut back = 0.0;
        for (idx, z) in psi.as_slice().iter().enumerate() {
            if r[idx / n] < absorber.x0 {
                back += z.norm_sqr();
            }
        }
        back *= g.dx() * g.dx();
        assert!(back < 1e-4, "reflected {back}");
    }
}
