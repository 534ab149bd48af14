//! Two-electron momentum distributions by splitting the wavefunction into
//! an inner part and three outer sectors.
//!
//! The inner part lives on the full position grid and evolves under the full
//! Hamiltonian in velocity gauge. Whatever crosses the onset `x₀` along one
//! axis is cut out with the absorber profile and added coherently to a mixed
//! sector that keeps
//! the escaped electron in momentum space (exact Volkov phase) and the other
//! in position space under its own nuclear attraction. Escapes along both
//! axes end up in the momentum-space sector `outout`.
//!
//! Sector layouts: `out1` is `[p₁][r₂]`, `out2` is stored as `[p₂][r₁]` so
//! that both evolve with the same row kernel, `outout` is `[p₁][p₂]`. For an
//! exchange-symmetric state `out2` equals `out1` as an array and is not
//! stored.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::{Axis, Gauge, Grid2D, Representation, Wavefunction};
use crate::potentials::{nuclear_attraction, SoftCoreParams, FIELD_FACTOR};
use crate::propagator::{AbsorberSpec, Propagator, StepScheme};
use crate::pulse::PulseParams;
use crate::spectral::{transpose_into, transpose_square};

/// Geometry of the sector split and of the final-state cut.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentaOptions {
    /// Onset of the transfer window.
    pub x0: f64,
    /// Exponent of the `cos^κ` transfer profile between `x₀` and `L/2`.
    pub exponent: f64,
    /// Ramp width of the final-state cut.
    pub w_cut: f64,
    /// Centre of the final-state cut.
    pub r_cut: f64,
    /// Apply the final cut to the bound coordinate of the mixed sectors.
    pub cut_mixed: bool,
}

impl MomentaOptions {
    pub const DEFAULT_W_CUT: f64 = 10.0;
    pub const DEFAULT_R_CUT: f64 = 50.0;

    /// Transfer with the default absorber profile, 10 a.u. ramp on a cut at
    /// 50 a.u.
    pub fn default_for(grid: &Grid2D) -> Self {
        let absorber = AbsorberSpec::default_for(grid);
        Self {
            x0: absorber.x0,
            exponent: absorber.exponent,
            w_cut: Self::DEFAULT_W_CUT,
            r_cut: Self::DEFAULT_R_CUT,
            cut_mixed: true,
        }
    }

    /// Per-step transfer window: the absorber mask with the same onset.
    ///
    /// A half-cosine ramp applied every step acts as a steep absorbing
    /// potential and reflects a few percent of a packet at `p ≈ 1`; the
    /// `cos^κ` profile keeps that below `10⁻³`.
    pub fn split_window(&self, grid: &Grid2D) -> Vec<f64> {
        self.absorber().mask(grid)
    }

    fn absorber(&self) -> AbsorberSpec {
        AbsorberSpec {
            x0: self.x0,
            exponent: self.exponent,
        }
    }

    pub fn validate(&self, grid: &Grid2D) -> Result<()> {
        let half = grid.half_extent();
        self.absorber().validate(grid)?;
        if !(self.w_cut >= 0.0) {
            invalid!("cut ramp width must be non-negative, got {}", self.w_cut);
        }
        if !(self.x0 > 0.0 && self.x0 < half) {
            invalid!(
                "split onset {} must lie inside the box half-width {half}",
                self.x0
            );
        }
        if self.x0 + self.w_cut > half {
            invalid!(
                "cut ramp width {} exceeds the room beyond the onset (L/2 - x0 = {:.3})",
                self.w_cut,
                half - self.x0
            );
        }
        if !(self.r_cut < self.x0) {
            invalid!(
                "final cut radius {} must lie inside the split onset {:.3}",
                self.r_cut,
                self.x0
            );
        }
        if !(self.r_cut - 0.5 * self.w_cut > 0.0) {
            invalid!("final cut ramp reaches the origin");
        }
        Ok(())
    }

    /// Run-level checks: the split onset beyond the quiver radius and the
    /// box at least `max(1.25·x_q, 1.5·R_cut)` in half-width.
    pub fn check_pulse(&self, grid: &Grid2D, pulse: &PulseParams) -> Result<()> {
        let xq = pulse.quiver_radius();
        let half = grid.half_extent();
        let need = (1.25 * xq).max(1.5 * self.r_cut);
        if half < need {
            invalid!(
                "box half-width {half:.3} is below max(1.25·x_q, 1.5·R_cut) = {need:.3}; minimum L = {:.3}",
                2.0 * need
            );
        }
        if self.x0 <= xq {
            invalid!(
                "split onset {:.3} does not exceed the quiver radius {xq:.3}; minimum L = {:.3}",
                self.x0,
                2.0 * xq * half / self.x0
            );
        }
        Ok(())
    }
}

/// `1` for `|r| ≤ x₀`, half-cosine down to `0` over `[x₀, x₀+w]`, `0`
/// beyond. A zero width gives a sharp step.
pub fn cut_window(positions: &[f64], x0: f64, w: f64) -> Vec<f64> {
    positions
        .iter()
        .map(|&r| {
            let d = r.abs() - x0;
            if d <= 0.0 {
                1.0
            } else if d >= w {
                0.0
            } else {
                0.5 * (1.0 + (PI * d / w).cos())
            }
        })
        .collect()
}

/// Complement of [`cut_window`] centred at `r_cut`: keeps `|r| > r_cut`.
pub fn final_window(positions: &[f64], r_cut: f64, w: f64) -> Vec<f64> {
    cut_window(positions, r_cut - 0.5 * w, w)
        .into_iter()
        .map(|m| 1.0 - m)
        .collect()
}

/// Squared norms of the four sectors.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SectorNorms {
    pub inner: f64,
    pub out1: f64,
    pub out2: f64,
    pub outout: f64,
}

impl SectorNorms {
    pub fn total(&self) -> f64 {
        self.inner + self.out1 + self.out2 + self.outout
    }
}

/// Inner wavefunction plus the three outer sectors.
#[derive(Clone, Debug)]
pub struct SectorState {
    pub inner: Wavefunction,
    out1: Vec<Complex64>,
    out2t: Option<Vec<Complex64>>,
    outout: Vec<Complex64>,
}

impl SectorState {
    /// Starts with everything in the inner sector. The exchange-symmetry
    /// tag of `psi0` selects the storage mode.
    pub fn new(psi0: &Wavefunction) -> Result<Self> {
        if psi0.representation() != Representation::Position {
            invalid!("sector split starts from a position-space state");
        }
        let n = psi0.grid().n_points();
        let zero = vec![Complex64::new(0.0, 0.0); n * n];
        let mut inner = psi0.clone();
        inner.gauge = Gauge::Velocity;
        Ok(Self {
            out2t: (!psi0.exchange_symmetric).then(|| zero.clone()),
            out1: zero.clone(),
            outout: zero,
            inner,
        })
    }

    pub fn grid(&self) -> &Grid2D {
        self.inner.grid()
    }

    pub fn is_symmetric(&self) -> bool {
        self.out2t.is_none()
    }

    /// `[p₁][r₂]` amplitudes.
    pub fn out1(&self) -> &[Complex64] {
        &self.out1
    }

    /// `[p₂][r₁]` amplitudes (equal to [`Self::out1`] when symmetric).
    pub fn out2_transposed(&self) -> &[Complex64] {
        self.out2t.as_deref().unwrap_or(&self.out1)
    }

    /// `[p₁][p₂]` amplitudes.
    pub fn outout(&self) -> &[Complex64] {
        &self.outout
    }

    pub fn norms(&self) -> SectorNorms {
        let g = self.grid();
        let n = g.n_points();
        let (dx, dk) = (g.dx(), g.dk());
        let s = |v: &[Complex64]| crate::spectral::sum_norm_sqr(v, n);
        let out1 = s(&self.out1) * dx * dk;
        SectorNorms {
            inner: self.inner.norm_sqr(),
            out1,
            out2: self.out2t.as_deref().map_or(out1, |v| s(v) * dx * dk),
            outout: s(&self.outout) * dk * dk,
        }
    }
}

/// Norm moved by one call of [`transfer_split`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TransferReport {
    pub inner_before: f64,
    pub inner_after: f64,
}

/// Moves the parts of the mixed sectors whose bound coordinate has passed
/// the window into `outout`, then splits the inner wavefunction into its
/// windowed remainder and the three escaping pieces.
pub fn transfer_split(state: &mut SectorState, window: &[f64]) -> Result<TransferReport> {
    let n = state.grid().n_points();
    if window.len() != n {
        invalid!("window has {} samples for an {n}-point grid", window.len());
    }
    let axis = state.grid().axis().clone();
    let symmetric = state.is_symmetric();
    let fwd: Vec<Complex64> = (0..n).map(|m| axis.forward_factor(m)).collect();

    // mixed → outout along the bound coordinate
    let mut z1 = cut_rows(&mut state.out1, window, &axis, &fwd);
    if symmetric {
        if let Some(z) = z1.as_mut() {
            symmetrize_add(&mut state.outout, z, n);
        }
    } else {
        if let Some(z) = z1 {
            add(&mut state.outout, &z);
        }
        let out2t = state.out2t.as_mut().expect("general mode stores out2");
        if let Some(z) = cut_rows(out2t, window, &axis, &fwd) {
            add_transposed(&mut state.outout, &z, n);
        }
    }

    // inner → sectors
    let inner_before = state.inner.norm_sqr();
    let band: Vec<usize> = (0..n).filter(|&i| window[i] < 1.0).collect();
    // T = F_rows[ψ·(1-m_j)], giving [r₁][p₂]; row i splits into the out2
    // piece (×m_i) and the corner piece (×(1-m_i))
    if let Some(t) = escaping_rows(state.inner.as_slice(), window, &band, &axis, &fwd) {
        let mut corner = vec![Complex64::new(0.0, 0.0); n * n];
        let mut mixed = t;
        let mut any_corner = false;
        for &i in &band {
            let (mi, ci) = (window[i], 1.0 - window[i]);
            let row = &mut mixed[i * n..(i + 1) * n];
            let crow = &mut corner[i * n..(i + 1) * n];
            for (z, c) in row.iter_mut().zip(crow.iter_mut()) {
                *c = *z * ci;
                *z *= mi;
            }
            any_corner = true;
        }
        // mixed is [r₁][p₂]; out2t wants [p₂][r₁]
        match state.out2t.as_mut() {
            Some(o2) => add_transposed(o2, &mixed, n),
            None => add_transposed(&mut state.out1, &mixed, n),
        }
        if any_corner {
            // [r₁][p₂] → [p₂][r₁] → transform r₁ → [p₂][p₁]
            let mut tr = vec![Complex64::new(0.0, 0.0); n * n];
            transpose_into(&corner, &mut tr, n);
            forward_rows_with(&mut tr, &axis, &fwd);
            if symmetric {
                let mut half = tr;
                half.par_iter_mut().for_each(|z| *z *= 0.5);
                symmetrize_add(&mut state.outout, &mut half, n);
            } else {
                add_transposed(&mut state.outout, &tr, n);
            }
        }
    }
    if !symmetric {
        // out1 piece: F along r₁ of ψ·(1-m_i)·m_j, via the transposed state
        let mut t = vec![Complex64::new(0.0, 0.0); n * n];
        transpose_into(state.inner.as_slice(), &mut t, n);
        if let Some(mut u) = escaping_rows(&t, window, &band, &axis, &fwd) {
            // u is [r₂][p₁]; keep the part with r₂ inside the window
            for (j, row) in u.chunks_mut(n).enumerate() {
                let mj = window[j];
                row.iter_mut().for_each(|z| *z *= mj);
            }
            add_transposed(&mut state.out1, &u, n);
        }
    }

    let data = state.inner.as_slice_mut();
    for &i in &band {
        data[i * n..(i + 1) * n]
            .iter_mut()
            .for_each(|z| *z *= window[i]);
    }
    data.par_chunks_mut(n).for_each(|row| {
        for &j in &band {
            row[j] *= window[j];
        }
    });
    Ok(TransferReport {
        inner_before,
        inner_after: state.inner.norm_sqr(),
    })
}

/// Rows of `F_rows[data·(1-m_j)]`, or `None` if nothing has reached the
/// window yet.
fn escaping_rows(
    data: &[Complex64],
    window: &[f64],
    band: &[usize],
    axis: &Axis,
    fwd: &[Complex64],
) -> Option<Vec<Complex64>> {
    let n = window.len();
    let reached = data
        .par_chunks(n)
        .any(|row| band.iter().any(|&j| row[j] != Complex64::new(0.0, 0.0)));
    if !reached {
        return None;
    }
    let mut t = vec![Complex64::new(0.0, 0.0); n * n];
    t.par_chunks_mut(n)
        .zip(data.par_chunks(n))
        .for_each(|(dst, src)| {
            for &j in band {
                dst[j] = src[j] * (1.0 - window[j]);
            }
        });
    forward_rows_with(&mut t, axis, fwd);
    Some(t)
}

/// Cuts the part of every row beyond the window out of `sector` and returns
/// its transform along the row, or `None` if that part vanishes.
fn cut_rows(
    sector: &mut [Complex64],
    window: &[f64],
    axis: &Axis,
    fwd: &[Complex64],
) -> Option<Vec<Complex64>> {
    let n = window.len();
    let band: Vec<usize> = (0..n).filter(|&j| window[j] < 1.0).collect();
    let reached = sector
        .par_chunks(n)
        .any(|row| band.iter().any(|&j| row[j] != Complex64::new(0.0, 0.0)));
    if !reached {
        return None;
    }
    let mut z = vec![Complex64::new(0.0, 0.0); n * n];
    z.par_chunks_mut(n)
        .zip(sector.par_chunks_mut(n))
        .for_each(|(dst, src)| {
            for &j in &band {
                dst[j] = src[j] * (1.0 - window[j]);
                src[j] *= window[j];
            }
        });
    forward_rows_with(&mut z, axis, fwd);
    Some(z)
}

fn forward_rows_with(data: &mut [Complex64], axis: &Axis, fwd: &[Complex64]) {
    let n = fwd.len();
    let plan = axis.plan();
    let zero = Complex64::new(0.0, 0.0);
    data.par_chunks_mut(n).for_each_init(
        || vec![zero; plan.scratch_len()],
        |s, row| {
            plan.forward_with_scratch(row, s);
            for (z, f) in row.iter_mut().zip(fwd) {
                *z *= f;
            }
        },
    );
}

fn add(dst: &mut [Complex64], src: &[Complex64]) {
    dst.par_iter_mut()
        .zip(src.par_iter())
        .for_each(|(d, s)| *d += s);
}

/// `dst[j][i] += src[i][j]`.
fn add_transposed(dst: &mut [Complex64], src: &[Complex64], n: usize) {
    dst.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        for (i, d) in row.iter_mut().enumerate() {
            *d += src[i * n + j];
        }
    });
}

/// `dst += z + zᵀ`, leaving `dst` exactly symmetric if it was.
fn symmetrize_add(dst: &mut [Complex64], z: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in i..n {
            let s = z[i * n + j] + z[j * n + i];
            if i == j {
                dst[i * n + i] += s;
            } else {
                dst[i * n + j] += s;
                dst[j * n + i] += s;
            }
        }
    }
}

/// Field-driven evolution of the three outer sectors over one step.
pub struct OuterStepper {
    axis: Axis,
    half_potential: Vec<Complex64>,
    kinetic: Vec<f64>,
    pulse: PulseParams,
    dt: f64,
}

impl OuterStepper {
    pub fn new(
        grid: &Grid2D,
        soft_core: &SoftCoreParams,
        pulse: PulseParams,
        dt: f64,
    ) -> Result<Self> {
        soft_core.validate()?;
        let axis = grid.axis().clone();
        let half_potential = axis
            .positions()
            .iter()
            .map(|&r| Complex64::from_polar(1.0, -0.5 * dt * nuclear_attraction(r, soft_core)))
            .collect();
        let kinetic = axis.momenta().iter().map(|k| 0.5 * k * k).collect();
        Ok(Self {
            axis,
            half_potential,
            kinetic,
            pulse,
            dt,
        })
    }

    /// Volkov phase of one axis over the step starting at `t`.
    fn volkov(&self, t: f64) -> Vec<Complex64> {
        let c = FIELD_FACTOR * self.pulse.vector_potential_at(t + 0.5 * self.dt);
        self.kinetic
            .iter()
            .zip(self.axis.momenta())
            .map(|(&e, &k)| Complex64::from_polar(1.0, -self.dt * (e + c * k)))
            .collect()
    }

    /// Advances the outer sectors from `t` to `t + dt`.
    pub fn step(&self, state: &mut SectorState, t: f64) {
        let n = self.axis.len();
        let g = self.volkov(t);
        state
            .outout
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(a, row)| {
                let ga = g[a];
                for (z, &gb) in row.iter_mut().zip(&g) {
                    *z *= ga * gb;
                }
            });
        let inv_n = 1.0 / n as f64;
        let gn: Vec<Complex64> = g.iter().map(|z| z * inv_n).collect();
        self.mixed_step(&mut state.out1, &g, &gn);
        if let Some(o2) = state.out2t.as_mut() {
            self.mixed_step(o2, &g, &gn);
        }
    }

    /// Row `a` carries momentum `p_a` of the escaped electron; the row
    /// itself is the bound coordinate, advanced by one Strang step.
    fn mixed_step(&self, sector: &mut [Complex64], g: &[Complex64], gn: &[Complex64]) {
        let n = g.len();
        let plan = self.axis.plan();
        let zero = Complex64::new(0.0, 0.0);
        let hv = &self.half_potential;
        sector.par_chunks_mut(n).enumerate().for_each_init(
            || vec![zero; plan.scratch_len()],
            |s, (a, row)| {
                if row.iter().all(|z| *z == zero) {
                    return;
                }
                for (z, h) in row.iter_mut().zip(hv) {
                    *z *= h;
                }
                plan.forward_with_scratch(row, s);
                let ga = g[a];
                for (z, gb) in row.iter_mut().zip(gn) {
                    *z *= ga * gb;
                }
                plan.inverse_with_scratch(row, s);
                for (z, h) in row.iter_mut().zip(hv) {
                    *z *= h;
                }
            },
        );
    }
}

/// Final state of a momenta run.
#[derive(Clone, Debug)]
pub struct MomentaRun {
    pub state: SectorState,
    pub pulse: PulseParams,
    pub options: MomentaOptions,
    pub steps: usize,
    pub dt: f64,
    /// Largest `|Σ sector norms - 1|` over the sampled steps.
    pub closure_max: f64,
}

/// Propagates `psi0` with sector splitting over the pulse plus one cycle.
pub fn run_momenta(
    psi0: &Wavefunction,
    soft_core: &SoftCoreParams,
    pulse: PulseParams,
    scheme: &StepScheme,
    options: &MomentaOptions,
) -> Result<MomentaRun> {
    let grid = psi0.grid();
    options.validate(grid)?;
    options.check_pulse(grid, &pulse)?;
    let (steps, dt) = scheme.steps_for(pulse.propagation_time());
    let mut prop = Propagator::new(grid, soft_core, pulse, Gauge::Velocity, dt)?;
    let outer = OuterStepper::new(grid, soft_core, pulse, dt)?;
    let window = options.split_window(grid);
    let mut state = SectorState::new(psi0)?;
    let norm0 = state.norms().total();
    let mut closure_max: f64 = 0.0;
    for s in 0..steps {
        let t = s as f64 * dt;
        prop.step_unitary(&mut state.inner, t)?;
        outer.step(&mut state, t);
        transfer_split(&mut state, &window)?;
        if s % 64 == 63 || s + 1 == steps {
            let total = state.norms().total();
            if !total.is_finite() {
                return Err(Error::Numerical(format!(
                    "sector norm became {total} at step {s}"
                )));
            }
            closure_max = closure_max.max((total - norm0).abs());
        }
    }
    Ok(MomentaRun {
        state,
        pulse,
        options: *options,
        steps,
        dt,
        closure_max,
    })
}

/// Probability density on the `(p₁, p₂)` lattice in ascending (centred)
/// order along both axes.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumDistribution2D {
    pub momenta: Vec<f64>,
    pub dk: f64,
    /// `[p₁][p₂]`.
    pub density: Array2<f64>,
    pub smoothed: bool,
}

impl MomentumDistribution2D {
    /// Reorders a wraparound-ordered density into ascending momenta.
    pub fn from_wraparound(axis: &Axis, wrapped: &[f64]) -> Self {
        let n = axis.len();
        let h = n / 2;
        let src = |m: usize| (m + h) % n;
        let momenta = (0..n).map(|c| axis.momenta()[src(c)]).collect();
        let density = Array2::from_shape_fn((n, n), |(a, b)| wrapped[src(a) * n + src(b)]);
        Self {
            momenta,
            dk: axis.dk(),
            density,
            smoothed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.momenta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.momenta.is_empty()
    }

    /// `Σ ρ·dk²`.
    pub fn mass(&self) -> f64 {
        self.density.sum() * self.dk * self.dk
    }

    /// Mass inside `p₁² + p₂² ≤ radius²`.
    pub fn mass_within(&self, radius: f64) -> f64 {
        let r2 = radius * radius;
        let p = &self.momenta;
        let mut s = 0.0;
        for ((a, b), &v) in self.density.indexed_iter() {
            if p[a] * p[a] + p[b] * p[b] <= r2 {
                s += v;
            }
        }
        s * self.dk * self.dk
    }

    /// Mass in the quadrants `[++, -+, --, +-]`; samples on an axis are
    /// shared equally between the adjacent quadrants.
    pub fn quadrant_masses(&self) -> [f64; 4] {
        let p = &self.momenta;
        let side = |x: f64| -> [f64; 2] {
            if x > 0.0 {
                [1.0, 0.0]
            } else if x < 0.0 {
                [0.0, 1.0]
            } else {
                [0.5, 0.5]
            }
        };
        let mut q = [0.0; 4];
        for ((a, b), &v) in self.density.indexed_iter() {
            let s1 = side(p[a]);
            let s2 = side(p[b]);
            q[0] += v * s1[0] * s2[0];
            q[1] += v * s1[1] * s2[0];
            q[2] += v * s1[1] * s2[1];
            q[3] += v * s1[0] * s2[1];
        }
        q.map(|x| x * self.dk * self.dk)
    }

    /// Largest `|ρ(p₁,p₂) - ρ(p₂,p₁)|`.
    pub fn exchange_asymmetry(&self) -> f64 {
        let n = self.len();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in (a + 1)..n {
                worst = worst.max((self.density[[a, b]] - self.density[[b, a]]).abs());
            }
        }
        worst
    }

    fn same_lattice(&self, other: &Self) -> bool {
        self.len() == other.len() && self.dk == other.dk && self.momenta == other.momenta
    }

    /// Copy rescaled so that its largest value is `peak`.
    pub fn normalized_to_max(&self, peak: f64) -> Self {
        let m = self.density.iter().cloned().fold(0.0, f64::max);
        let mut out = self.clone();
        if m > 0.0 {
            out.density.mapv_inplace(|v| v * peak / m);
        }
        out
    }
}

/// Coherent sum of every sector with `|r| > R_cut` along both axes,
/// transformed to momentum space.
pub fn assemble_di_distribution(run: &MomentaRun) -> Result<MomentumDistribution2D> {
    let state = &run.state;
    let options = &run.options;
    let grid = state.grid();
    options.validate(grid)?;
    let n = grid.n_points();
    let axis = grid.axis();
    let fwd: Vec<Complex64> = (0..n).map(|m| axis.forward_factor(m)).collect();
    let w = final_window(grid.positions(), options.r_cut, options.w_cut);

    // inner: both axes
    let mut amp: Vec<Complex64> = state.inner.as_slice().to_vec();
    amp.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, z) in row.iter_mut().enumerate() {
            *z *= w[i] * w[j];
        }
    });
    forward_rows_with(&mut amp, axis, &fwd);
    transpose_square(&mut amp, n);
    forward_rows_with(&mut amp, axis, &fwd);
    transpose_square(&mut amp, n);

    // mixed sectors: transform the bound coordinate
    let bound_cut: Vec<f64> = if options.cut_mixed {
        w.clone()
    } else {
        vec![1.0; n]
    };
    let mixed = |sector: &[Complex64]| {
        let mut m = sector.to_vec();
        m.par_chunks_mut(n).for_each(|row| {
            for (z, &c) in row.iter_mut().zip(&bound_cut) {
                *z *= c;
            }
        });
        forward_rows_with(&mut m, axis, &fwd);
        m
    };
    let m1 = mixed(&state.out1);
    add(&mut amp, &m1);
    match &state.out2t {
        Some(o2) => add_transposed(&mut amp, &mixed(o2), n),
        None => add_transposed(&mut amp, &m1, n),
    }
    add(&mut amp, &state.outout);

    let rho: Vec<f64> = amp.iter().map(|z| z.norm_sqr()).collect();
    Ok(MomentumDistribution2D::from_wraparound(axis, &rho))
}

/// Periodic convolution with a normalized Gaussian of width `sigma` along
/// both axes.
pub fn gaussian_smooth(
    dist: &MomentumDistribution2D,
    sigma: f64,
) -> Result<MomentumDistribution2D> {
    if !(sigma > 0.0) {
        invalid!("smoothing width must be positive, got {sigma}");
    }
    let n = dist.len();
    if sigma < 0.5 * dist.dk {
        log::warn!(
            "smoothing width {sigma} is below half the lattice spacing {}",
            dist.dk
        );
    }
    let reach = ((8.0 * sigma / dist.dk).ceil() as usize).min(n / 2);
    let mut kernel: Vec<f64> = (0..=reach)
        .map(|d| (-0.5 * (d as f64 * dist.dk / sigma).powi(2)).exp())
        .collect();
    let total = kernel[0] + 2.0 * kernel[1..].iter().sum::<f64>();
    kernel.iter_mut().for_each(|k| *k /= total);

    let convolve_rows = |src: &Array2<f64>| -> Array2<f64> {
        let mut out = Array2::zeros((n, n));
        out.as_slice_mut()
            .unwrap()
            .par_chunks_mut(n)
            .zip(src.as_slice().unwrap().par_chunks(n))
            .for_each(|(dst, row)| {
                for (b, d) in dst.iter_mut().enumerate() {
                    let mut s = kernel[0] * row[b];
                    for (off, &k) in kernel.iter().enumerate().skip(1) {
                        s += k * (row[(b + off) % n] + row[(b + n - off) % n]);
                    }
                    *d = s;
                }
            });
        out
    };
    let step1 = convolve_rows(&dist.density.as_standard_layout().to_owned());
    let step2 = convolve_rows(&step1.t().as_standard_layout().to_owned());
    Ok(MomentumDistribution2D {
        momenta: dist.momenta.clone(),
        dk: dist.dk,
        density: step2.t().as_standard_layout().to_owned(),
        smoothed: true,
    })
}

/// Longitudinal ion-momentum spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct IonSpectrum {
    pub p_par: Vec<f64>,
    pub density: Vec<f64>,
    pub spacing: f64,
}

impl IonSpectrum {
    pub fn mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.spacing
    }

    pub fn mean(&self) -> f64 {
        let m: f64 = self
            .p_par
            .iter()
            .zip(&self.density)
            .map(|(p, d)| p * d)
            .sum::<f64>()
            * self.spacing;
        m / self.mass()
    }
}

/// Density over `p∥ = -√3(p₁+p₂)/2`, integrated over `p⊥ = -(p₁-p₂)/2`.
///
/// The 2D density is bilinearly interpolated at `(p₁,p₂) = (-p∥/√3 - p⊥,
/// -p∥/√3 + p⊥)` on a lattice oversampled `oversample` times along both new
/// axes, and divided by the Jacobian `√3/2`.
pub fn ion_momentum_projection(dist: &MomentumDistribution2D, oversample: usize) -> IonSpectrum {
    let os = oversample.max(1) as f64;
    let n = dist.len();
    let dk = dist.dk;
    let p_min = dist.momenta[0];
    let p_lim = dist.momenta[n - 1];
    let sqrt3 = 3f64.sqrt();
    let jac = 0.5 * sqrt3;
    let h_par = jac * dk / os;
    let h_perp = 0.5 * dk / os;
    let par_max = sqrt3 * p_lim.max(-p_min);
    let n_par = (par_max / h_par).ceil() as i64;
    let perp_max = p_lim.max(-p_min);
    let n_perp = (perp_max / h_perp).ceil() as i64;
    let rho = &dist.density;
    let sample = |p1: f64, p2: f64| -> f64 {
        let x = (p1 - p_min) / dk;
        let y = (p2 - p_min) / dk;
        if x < 0.0 || y < 0.0 {
            return 0.0;
        }
        let (i, j) = (x.floor() as usize, y.floor() as usize);
        if i + 1 >= n || j + 1 >= n {
            return 0.0;
        }
        let (fx, fy) = (x - i as f64, y - j as f64);
        (1.0 - fx) * (1.0 - fy) * rho[[i, j]]
            + fx * (1.0 - fy) * rho[[i + 1, j]]
            + (1.0 - fx) * fy * rho[[i, j + 1]]
            + fx * fy * rho[[i + 1, j + 1]]
    };
    let p_par: Vec<f64> = (-n_par..=n_par).map(|k| k as f64 * h_par).collect();
    let density = p_par
        .par_iter()
        .map(|&pp| {
            let base = -pp / sqrt3;
            let mut s = 0.0;
            for q in -n_perp..=n_perp {
                let pq = q as f64 * h_perp;
                s += sample(base - pq, base + pq);
            }
            s * h_perp / jac
        })
        .collect();
    IonSpectrum {
        p_par,
        density,
        spacing: h_par,
    }
}

/// Incoherent mean of distributions on a common lattice.
pub fn cep_average(distributions: &[MomentumDistribution2D]) -> Result<MomentumDistribution2D> {
    let Some(first) = distributions.first() else {
        invalid!("nothing to average");
    };
    if distributions.iter().any(|d| !d.same_lattice(first)) {
        invalid!("distributions to average must share one momentum lattice");
    }
    let mut acc = Array2::<f64>::zeros(first.density.dim());
    for d in distributions {
        acc += &d.density;
    }
    acc /= distributions.len() as f64;
    Ok(MomentumDistribution2D {
        momenta: first.momenta.clone(),
        dk: first.dk,
        density: acc,
        smoothed: distributions.iter().all(|d| d.smoothed),
    })
}
