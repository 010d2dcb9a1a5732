//! Monte Carlo check of the receive-noise whitening property.
//!
//! A spatially white circularly symmetric complex Gaussian field on the
//! aperture, projected onto the truncated orthonormal Fourier basis, yields
//! coefficients with covariance σ_r²·I_N. This module draws such fields on a
//! dense surface grid and returns the empirical covariance.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::aperture::{ApertureSpec, WavenumberGrid};
use crate::channel::basis_function;
use crate::{C64, CMat};

/// Surface sampling density per axis for the white-field discretization.
const SURFACE_RES: usize = 64;
/// Samples drawn per worker batch.
const BATCH: usize = 256;

/// Empirical covariance of white-noise fields projected onto the N basis
/// functions. Deterministic for a fixed seed regardless of thread count.
pub fn project_noise_samples(
    ap: &ApertureSpec,
    grid: &WavenumberGrid,
    sigma_r_sq: f64,
    num_samples: usize,
    seed: u64,
) -> CMat {
    let n = grid.len();
    if num_samples == 0 || sigma_r_sq == 0.0 {
        return Array2::zeros((n, n));
    }
    let cells = SURFACE_RES * SURFACE_RES;
    let cell_area = ap.area / cells as f64;

    // Projection matrix: Φ[n, c] = Ψ_n(p_c)·ΔA.
    let mut phi = Array2::<C64>::zeros((n, cells));
    for (row, &order) in grid.orders.iter().enumerate() {
        for ix in 0..SURFACE_RES {
            let sx = -ap.lx / 2.0 + (ix as f64 + 0.5) * ap.lx / SURFACE_RES as f64;
            for iy in 0..SURFACE_RES {
                let sy = -ap.ly / 2.0 + (iy as f64 + 0.5) * ap.ly / SURFACE_RES as f64;
                phi[[row, ix * SURFACE_RES + iy]] = basis_function(ap, order, sx, sy) * cell_area;
            }
        }
    }

    // Discretized white field: cell variance σ_r²/ΔA reproduces the delta
    // covariance in the continuum limit.
    let cell_sigma = (sigma_r_sq / cell_area).sqrt();
    let num_batches = num_samples.div_ceil(BATCH);

    let partial: Vec<CMat> = (0..num_batches)
        .into_par_iter()
        .map(|batch| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(batch as u64));
            let in_batch = BATCH.min(num_samples - batch * BATCH);
            let mut fields = Array2::<C64>::zeros((cells, in_batch));
            for s in 0..in_batch {
                for c in 0..cells {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    fields[[c, s]] = C64::new(re, im) * (cell_sigma / 2.0_f64.sqrt());
                }
            }
            let proj = phi.dot(&fields); // N x in_batch
            let mut cov = Array2::<C64>::zeros((n, n));
            for s in 0..in_batch {
                let col: Array1<C64> = proj.column(s).to_owned();
                for i in 0..n {
                    for j in 0..n {
                        cov[[i, j]] += col[i] * col[j].conj();
                    }
                }
            }
            cov
        })
        .collect();

    let mut total = Array2::<C64>::zeros((n, n));
    for p in partial {
        total += &p;
    }
    total.mapv(|z| z / num_samples as f64)
}
