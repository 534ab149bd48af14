//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use nsdi::potentials::static_potential_field;
use nsdi::{Grid2D, SoftCoreParams};

/// Kinetic matrix `-½∂²` of the periodic Fourier grid, built from the
/// plane-wave sum rather than an FFT.
pub fn fourier_kinetic(grid: &Grid2D) -> DMatrix<f64> {
    let n = grid.n_points();
    let x = grid.positions();
    let k = grid.momenta();
    DMatrix::from_fn(n, n, |a, b| {
        let d = x[a] - x[b];
        k.iter().map(|&q| 0.5 * q * q * (q * d).cos()).sum::<f64>() / n as f64
    })
}

/// Lowest eigenvalue of the full two-electron Hamiltonian on `grid`.
pub fn dense_ground_energy(grid: &Grid2D, soft_core: &SoftCoreParams) -> f64 {
    let n = grid.n_points();
    let t = fourier_kinetic(grid);
    let v = static_potential_field(grid, soft_core);
    let h = DMatrix::from_fn(n * n, n * n, |p, q| {
        let (i, j) = (p / n, p % n);
        let (k, l) = (q / n, q % n);
        let mut e = 0.0;
        if j == l {
            e += t[(i, k)];
        }
        if i == k {
            e += t[(j, l)];
        }
        if p == q {
            e += v[[i, j]];
        }
        e
    });
    SymmetricEigen::new(h).eigenvalues.min()
}
