//! Soft-core Coulomb terms and the length-gauge field coupling.

use ndarray::Array2;

use crate::error::{invalid, Result};
use crate::grid::Grid2D;

/// Geometric factor of the field coupling in the collinear-symmetric model.
pub const FIELD_FACTOR: f64 = 0.866_025_403_784_438_6; // √3/2

/// Soft-core smoothing `1/|r| → 1/√(r² + ε)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SoftCoreParams {
    pub epsilon: f64,
    /// Nuclear charge.
    pub charge: f64,
    /// Apply `ε` to the electron–electron term as well as the attractions.
    pub smooth_repulsion: bool,
}

impl Default for SoftCoreParams {
    fn default() -> Self {
        Self {
            epsilon: 0.6,
            charge: 2.0,
            smooth_repulsion: true,
        }
    }
}

impl SoftCoreParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            invalid!("soft-core epsilon must be positive, got {}", self.epsilon);
        }
        if !(self.charge > 0.0) {
            invalid!("nuclear charge must be positive, got {}", self.charge);
        }
        Ok(())
    }
}

/// `-Z/√(r² + ε)`.
pub fn nuclear_attraction(r: f64, params: &SoftCoreParams) -> f64 {
    -params.charge / (r * r + params.epsilon).sqrt()
}

/// `1/√((r₁-r₂)² + r₁r₂ + ε)`.
///
/// The quadratic form `(r₁-r₂)² + r₁r₂ = r₁² - r₁r₂ + r₂²` is non-negative
/// and vanishes only at the origin.
pub fn electron_repulsion(r1: f64, r2: f64, params: &SoftCoreParams) -> f64 {
    let d = r1 - r2;
    let eps = if params.smooth_repulsion {
        params.epsilon
    } else {
        0.0
    };
    1.0 / (d * d + r1 * r2 + eps).sqrt()
}

/// Field-free two-electron potential on the grid.
pub fn static_potential_field(grid: &Grid2D, params: &SoftCoreParams) -> Array2<f64> {
    let r = grid.positions();
    let n = grid.n_points();
    let nuc: Vec<f64> = r.iter().map(|&x| nuclear_attraction(x, params)).collect();
    Array2::from_shape_fn((n, n), |(i, j)| {
        nuc[i] + nuc[j] + electron_repulsion(r[i], r[j], params)
    })
}

/// Length-gauge coupling `(√3/2)·F·(r₁ + r₂)` on the grid.
pub fn field_coupling_length(grid: &Grid2D, field: f64) -> Array2<f64> {
    let r = grid.positions();
    let n = grid.n_points();
    Array2::from_shape_fn((n, n), |(i, j)| FIELD_FACTOR * field * (r[i] + r[j]))
}
