//! Square position grid, its momentum lattice, and the two-electron
//! wavefunction container.
//!
//! Conventions used throughout the crate:
//!
//! * position axis `r_j = (j - n/2)·dx`, `j = 0..n` (integer `n/2`);
//! * momentum lattice in DFT wraparound order, `k_m = 2π·m'/(n·dx)` with
//!   `m' = m` for `m < n/2` and `m' = m - n` otherwise;
//! * transforms are unitary with respect to the Riemann weights `dx` and
//!   `dk`: `ψ̃(k) = dx/√(2π) Σ_j ψ(r_j) e^{-i k r_j}`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::spectral::{sum_norm_sqr, transpose_square, FftPlan};

/// One discretized coordinate axis with its conjugate momentum lattice.
#[derive(Clone)]
pub struct Axis {
    n: usize,
    dx: f64,
    positions: Arc<[f64]>,
    momenta: Arc<[f64]>,
    /// `e^{i k_m (n/2) dx}`: converts the plain DFT to the centered convention.
    center_phase: Arc<[Complex64]>,
    plan: FftPlan,
}

impl fmt::Debug for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Axis")
            .field("n", &self.n)
            .field("dx", &self.dx)
            .finish()
    }
}

impl PartialEq for Axis {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.dx == other.dx
    }
}

impl Axis {
    /// Builds an axis of `n` points with spacing `dx`.
    ///
    /// Rejects `n < 8` and non-positive spacing; a length that is not a power
    /// of two is accepted with a warning.
    pub fn new(n: usize, dx: f64) -> Result<Self> {
        if n < 8 {
            invalid!("grid needs at least 8 points per axis, got {n}");
        }
        if !(dx > 0.0 && dx.is_finite()) {
            invalid!("grid spacing must be positive, got {dx}");
        }
        if !n.is_power_of_two() {
            log::warn!("grid size {n} is not a power of two; FFTs will be slower");
        }
        let half = (n / 2) as f64;
        let positions: Arc<[f64]> = (0..n).map(|j| (j as f64 - half) * dx).collect();
        let dk = 2.0 * PI / (n as f64 * dx);
        let momenta: Arc<[f64]> = (0..n)
            .map(|m| {
                let signed = if m < n / 2 {
                    m as f64
                } else {
                    m as f64 - n as f64
                };
                signed * dk
            })
            .collect();
        let center_phase = momenta
            .iter()
            .map(|&k| Complex64::from_polar(1.0, k * half * dx))
            .collect();
        Ok(Self {
            n,
            dx,
            positions,
            momenta,
            center_phase,
            plan: FftPlan::new(n),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Box length `L = n·dx`.
    pub fn extent(&self) -> f64 {
        self.n as f64 * self.dx
    }

    pub fn dk(&self) -> f64 {
        2.0 * PI / self.extent()
    }

    /// Largest momentum magnitude on the lattice, `π/dx`.
    pub fn k_max(&self) -> f64 {
        PI / self.dx
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Momentum values in wraparound order.
    pub fn momenta(&self) -> &[f64] {
        &self.momenta
    }

    /// Index of the momentum bin holding `k`, in wraparound order.
    pub fn momentum_index(&self, k: f64) -> usize {
        let m = (k / self.dk()).round() as i64;
        m.rem_euclid(self.n as i64) as usize
    }

    pub fn plan(&self) -> &FftPlan {
        &self.plan
    }

    /// Scale applied after a forward DFT to obtain the unitary, centered
    /// momentum amplitude.
    pub(crate) fn forward_factor(&self, m: usize) -> Complex64 {
        self.center_phase[m] * (self.dx / (2.0 * PI).sqrt())
    }

    /// Scale applied before an inverse DFT.
    pub(crate) fn inverse_factor(&self, m: usize) -> Complex64 {
        self.center_phase[m].conj() * (self.dk() / (2.0 * PI).sqrt())
    }

    /// Unitary forward transform of one row (position → momentum).
    pub fn forward_row(&self, row: &mut [Complex64]) {
        self.plan.forward(row);
        for (m, z) in row.iter_mut().enumerate() {
            *z *= self.forward_factor(m);
        }
    }

    /// Unitary inverse transform of one row (momentum → position).
    pub fn inverse_row(&self, row: &mut [Complex64]) {
        for (m, z) in row.iter_mut().enumerate() {
            *z *= self.inverse_factor(m);
        }
        self.plan.inverse(row);
    }

    /// Unitary transform of every row of a row-major buffer along the
    /// contiguous axis.
    pub fn forward_rows(&self, data: &mut [Complex64]) {
        self.plan.rows_forward(data);
        let factors: Vec<Complex64> = (0..self.n).map(|m| self.forward_factor(m)).collect();
        scale_columns(data, &factors);
    }

    pub fn inverse_rows(&self, data: &mut [Complex64]) {
        let factors: Vec<Complex64> = (0..self.n).map(|m| self.inverse_factor(m)).collect();
        scale_columns(data, &factors);
        self.plan.rows_inverse(data);
    }
}

fn scale_columns(data: &mut [Complex64], factors: &[Complex64]) {
    for row in data.chunks_mut(factors.len()) {
        for (z, f) in row.iter_mut().zip(factors) {
            *z *= f;
        }
    }
}

/// Square two-electron grid `[-L/2, L/2)²` with identical axes.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2D {
    axis: Axis,
}

/// Builds the square grid with `n_points` per axis and spacing `dx`.
pub fn make_grid(n_points: usize, dx: f64) -> Result<Grid2D> {
    Ok(Grid2D {
        axis: Axis::new(n_points, dx)?,
    })
}

impl Grid2D {
    pub fn axis(&self) -> &Axis {
        &self.axis
    }

    pub fn n_points(&self) -> usize {
        self.axis.n
    }

    pub fn dx(&self) -> f64 {
        self.axis.dx
    }

    pub fn extent(&self) -> f64 {
        self.axis.extent()
    }

    pub fn half_extent(&self) -> f64 {
        0.5 * self.axis.extent()
    }

    pub fn dk(&self) -> f64 {
        self.axis.dk()
    }

    pub fn k_max(&self) -> f64 {
        self.axis.k_max()
    }

    pub fn positions(&self) -> &[f64] {
        self.axis.positions()
    }

    pub fn momenta(&self) -> &[f64] {
        self.axis.momenta()
    }

    /// Number of amplitudes, `n²`.
    pub fn size(&self) -> usize {
        self.axis.n * self.axis.n
    }
}

/// Field-coupling form of the Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Gauge {
    Length,
    Velocity,
}

/// Electron coordinate index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AxisId {
    First,
    Second,
}

/// Which axes of a wavefunction are stored in momentum space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Representation {
    Position,
    Momentum,
    /// The given axis is in momentum space, the other in position space.
    Mixed(AxisId),
}

impl Representation {
    pub fn from_axes(first_momentum: bool, second_momentum: bool) -> Self {
        match (first_momentum, second_momentum) {
            (false, false) => Self::Position,
            (true, true) => Self::Momentum,
            (true, false) => Self::Mixed(AxisId::First),
            (false, true) => Self::Mixed(AxisId::Second),
        }
    }

    pub fn is_momentum(self, axis: AxisId) -> bool {
        match self {
            Self::Position => false,
            Self::Momentum => true,
            Self::Mixed(a) => a == axis,
        }
    }

    /// Integer code used in binary dumps.
    pub fn code(self) -> i64 {
        match self {
            Self::Position => 0,
            Self::Momentum => 1,
            Self::Mixed(AxisId::First) => 2,
            Self::Mixed(AxisId::Second) => 3,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        Some(match code {
            0 => Self::Position,
            1 => Self::Momentum,
            2 => Self::Mixed(AxisId::First),
            3 => Self::Mixed(AxisId::Second),
            _ => return None,
        })
    }
}

impl Gauge {
    pub fn code(self) -> i64 {
        match self {
            Gauge::Length => 0,
            Gauge::Velocity => 1,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(Gauge::Length),
            1 => Some(Gauge::Velocity),
            _ => None,
        }
    }
}

/// Complex two-electron amplitude `ψ(r₁, r₂)` on a [`Grid2D`].
///
/// Index `[i1, i2]` addresses electron 1 along rows and electron 2 along
/// the contiguous axis.
#[derive(Clone, Debug)]
pub struct Wavefunction {
    grid: Grid2D,
    amplitudes: Array2<Complex64>,
    pub gauge: Gauge,
    representation: Representation,
    /// Set when `ψ(r₁,r₂) = ψ(r₂,r₁)` is expected to hold.
    pub exchange_symmetric: bool,
}

impl Wavefunction {
    pub fn zeros(grid: &Grid2D, representation: Representation) -> Self {
        let n = grid.n_points();
        Self {
            grid: grid.clone(),
            amplitudes: Array2::zeros((n, n)),
            gauge: Gauge::Length,
            representation,
            exchange_symmetric: false,
        }
    }

    /// Samples `f(r₁, r₂)` on the position grid.
    pub fn from_fn(grid: &Grid2D, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let r = grid.positions();
        let n = grid.n_points();
        let amplitudes = Array2::from_shape_fn((n, n), |(i, j)| f(r[i], r[j]));
        Self {
            grid: grid.clone(),
            amplitudes,
            gauge: Gauge::Length,
            representation: Representation::Position,
            exchange_symmetric: false,
        }
    }

    pub fn from_array(
        grid: &Grid2D,
        amplitudes: Array2<Complex64>,
        representation: Representation,
    ) -> Result<Self> {
        let n = grid.n_points();
        if amplitudes.dim() != (n, n) {
            invalid!(
                "amplitude array {:?} does not match grid {n}×{n}",
                amplitudes.dim()
            );
        }
        Ok(Self {
            grid: grid.clone(),
            amplitudes: amplitudes.as_standard_layout().into_owned(),
            gauge: Gauge::Length,
            representation,
            exchange_symmetric: false,
        })
    }

    pub fn with_symmetry(mut self, symmetric: bool) -> Self {
        self.exchange_symmetric = symmetric;
        self
    }

    pub fn with_gauge(mut self, gauge: Gauge) -> Self {
        self.gauge = gauge;
        self
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn amplitudes(&self) -> &Array2<Complex64> {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Array2<Complex64> {
        self.amplitudes
    }

    /// Row-major view of the amplitudes.
    pub fn as_slice(&self) -> &[Complex64] {
        self.amplitudes
            .as_slice()
            .expect("wavefunction storage is always standard layout")
    }

    pub fn as_slice_mut(&mut self) -> &mut [Complex64] {
        self.amplitudes
            .as_slice_mut()
            .expect("wavefunction storage is always standard layout")
    }

    /// Riemann weight of one cell in the current representation.
    pub fn cell_weight(&self) -> f64 {
        let w = |axis| {
            if self.representation.is_momentum(axis) {
                self.grid.dk()
            } else {
                self.grid.dx()
            }
        };
        w(AxisId::First) * w(AxisId::Second)
    }

    /// Squared norm `Σ|ψ|²·(cell weight)`.
    pub fn norm_sqr(&self) -> f64 {
        sum_norm_sqr(self.as_slice(), self.grid.n_points()) * self.cell_weight()
    }

    pub fn normalize(&mut self) -> f64 {
        let norm = self.norm_sqr().sqrt();
        if norm > 0.0 {
            self.amplitudes.mapv_inplace(|z| z / norm);
        }
        norm
    }

    /// Largest `|ψ(i,j) - ψ(j,i)|`.
    pub fn exchange_asymmetry(&self) -> f64 {
        let n = self.grid.n_points();
        let a = self.as_slice();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((a[i * n + j] - a[j * n + i]).norm());
            }
        }
        worst
    }

    /// Returns a copy in the `target` representation.
    pub fn transform(&self, target: Representation) -> Result<Wavefunction> {
        let mut out = self.clone();
        out.transform_in_place(target)?;
        Ok(out)
    }

    /// Transforms whichever axes differ between the current and target
    /// representations. Unitary up to round-off.
    pub fn transform_in_place(&mut self, target: Representation) -> Result<()> {
        if target == self.representation {
            invalid!("wavefunction is already in {target:?} representation");
        }
        let n = self.grid.n_points();
        let axis = self.grid.axis.clone();
        let from = self.representation;
        let data = self.as_slice_mut();

        let second_from = from.is_momentum(AxisId::Second);
        let second_to = target.is_momentum(AxisId::Second);
        if second_from != second_to {
            if second_to {
                axis.forward_rows(data);
            } else {
                axis.inverse_rows(data);
            }
        }

        let first_from = from.is_momentum(AxisId::First);
        let first_to = target.is_momentum(AxisId::First);
        if first_from != first_to {
            transpose_square(data, n);
            if first_to {
                axis.forward_rows(data);
            } else {
                axis.inverse_rows(data);
            }
            transpose_square(data, n);
        }
        self.representation = target;
        Ok(())
    }

    /// Probability density `|ψ|²` as a real array.
    pub fn density(&self) -> Array2<f64> {
        self.amplitudes.mapv(|z| z.norm_sqr())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_field(grid: &Grid2D, seed: u64) -> Wavefunction {
        // xorshift keeps this free of an rng dependency
        let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        let mut next = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let n = grid.n_points();
        let arr = Array2::from_shape_fn((n, n), |_| Complex64::new(next(), next()));
        let mut psi = Wavefunction::from_array(grid, arr, Representation::Position).unwrap();
        psi.normalize();
        psi
    }

    #[test]
    fn make_grid_examples() {
        let g = make_grid(8, 0.5).unwrap();
        assert!((g.extent() - 4.0).abs() < 1e-15);
        assert!((g.dk() - 2.0 * PI / 4.0).abs() < 1e-15);
        assert!((g.dk() - 1.5708).abs() < 1e-4);

        let g = make_grid(1024, 0.2).unwrap();
        assert!((g.extent() - 204.8).abs() < 1e-12);
        assert!((g.k_max() - 15.708).abs() < 1e-3);
        let kmax = g.momenta().iter().fold(0.0f64, |m, k| m.max(k.abs()));
        assert!((kmax - PI / 0.2).abs() < 1e-12);

        let g = make_grid(512, 0.3).unwrap();
        assert!((g.positions()[0] + 76.8).abs() < 1e-12);
        assert!((g.positions()[511] - 76.5).abs() < 1e-12);
        assert_eq!(g.positions().len(), 512);
        assert_eq!(g.momenta().len(), 512);
    }

    #[test]
    fn make_grid_rejects_small_and_accepts_odd_sizes() {
        assert!(make_grid(4, 0.3).is_err());
        assert!(make_grid(16, 0.0).is_err());
        let g = make_grid(12, 0.3).unwrap();
        assert_eq!(g.n_points(), 12);
    }

    #[test]
    fn lattice_duality() {
        for (n, dx) in [(8, 0.5), (100, 0.3), (512, 0.2)] {
            let g = make_grid(n, dx).unwrap();
            assert!((g.dk() * g.dx() * n as f64 - 2.0 * PI).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_field_maps_to_zero_bin() {
        let g = make_grid(8, 0.5).unwrap();
        let psi = Wavefunction::from_fn(&g, |_, _| Complex64::new(1.0, 0.0));
        let k = psi.transform(Representation::Momentum).unwrap();
        let a = k.amplitudes();
        assert!(a[[0, 0]].norm() > 1.0);
        for ((i, j), z) in a.indexed_iter() {
            if (i, j) != (0, 0) {
                assert!(z.norm() < 1e-13, "bin ({i},{j}) = {z}");
            }
        }
    }

    #[test]
    fn plane_wave_fills_single_column() {
        let g = make_grid(16, 0.4).unwrap();
        let m0 = 3;
        let k0 = g.momenta()[m0];
        let psi = Wavefunction::from_fn(&g, |r1, r2| {
            Complex64::from_polar(1.0, k0 * r1) * (-(r2 * r2)).exp()
        });
        let k = psi.transform(Representation::Mixed(AxisId::First)).unwrap();
        for ((i, _), z) in k.amplitudes().indexed_iter() {
            if i != m0 {
                assert!(z.norm() < 1e-12);
            }
        }
        assert!(k.amplitudes().row(m0).iter().any(|z| z.norm() > 0.1));
    }

    #[test]
    fn round_trip_and_parseval() {
        let g = make_grid(32, 0.3).unwrap();
        for seed in 1..4 {
            let psi = random_field(&g, seed);
            for target in [
                Representation::Momentum,
                Representation::Mixed(AxisId::First),
                Representation::Mixed(AxisId::Second),
            ] {
                let k = psi.transform(target).unwrap();
                assert!((k.norm_sqr() - psi.norm_sqr()).abs() < 1e-12);
                let back = k.transform(Representation::Position).unwrap();
                let err = back
                    .as_slice()
                    .iter()
                    .zip(psi.as_slice())
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                assert!(err < 1e-12, "{target:?}: {err}");
            }
        }
    }

    #[test]
    fn mixed_then_remaining_axis_equals_full_transform() {
        let g = make_grid(16, 0.5).unwrap();
        let psi = random_field(&g, 9);
        let full = psi.transform(Representation::Momentum).unwrap();
        let staged = psi
            .transform(Representation::Mixed(AxisId::Second))
            .unwrap()
            .transform(Representation::Momentum)
            .unwrap();
        for (a, b) in full.as_slice().iter().zip(staged.as_slice()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn transform_to_same_representation_is_rejected() {
        let g = make_grid(8, 0.5).unwrap();
        let psi = Wavefunction::zeros(&g, Representation::Position);
        assert!(psi.transform(Representation::Position).is_err());
    }

    #[test]
    fn centered_phase_matches_continuous_transform() {
        // Gaussian e^{-r²/2} has transform e^{-k²/2} under the unitary convention.
        let g = make_grid(64, 0.25).unwrap();
        let psi = Wavefunction::from_fn(&g, |r1, r2| {
            Complex64::new((-(r1 * r1 + r2 * r2) / 2.0).exp(), 0.0)
        });
        let k = psi.transform(Representation::Momentum).unwrap();
        let km = g.momenta();
        for ((i, j), z) in k.amplitudes().indexed_iter() {
            let expect = (-(km[i] * km[i] + km[j] * km[j]) / 2.0).exp();
            assert!((z - expect).norm() < 1e-10);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn parseval_random(seed in 1u64..10_000, n in 8usize..40) {
            let g = make_grid(n, 0.37).unwrap();
            let psi = random_field(&g, seed);
            let k = psi.transform(Representation::Momentum).unwrap();
            proptest::prop_assert!((k.norm_sqr() - psi.norm_sqr()).abs() < 1e-12);
        }
    }
}
