//! Far-field Green's-function Fourier coefficients and channel synthesis.
//!
//! The scalar free-space Green's function between a surface point and a
//! far-field point, with the phase linearized across the aperture, has a
//! closed-form projection onto the aperture's orthonormal Fourier basis:
//! a separable product of unnormalized sinc factors whose arguments are the
//! shifted per-axis wavenumbers. Channel vectors collect the conjugated
//! coefficients over the truncated order grid.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use thiserror::Error;

use crate::aperture::{ApertureSpec, FarFieldPoint, WavenumberGrid};
use crate::{C64, CMat, CVec};

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("quadrature resolution {0} too small, need at least {1} samples per axis")]
    ResolutionTooSmall(usize, usize),
    #[error("channel set must contain at least one target")]
    NoTargets,
}

/// Unnormalized sinc, sin(x)/x with sinc(0) = 1.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-7 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Per-axis shifted wavenumbers (κ_x^n, κ_y^n) for order (n_x, n_y).
fn shifted_wavenumbers(ap: &ApertureSpec, order: (i32, i32), point: &FarFieldPoint) -> (f64, f64) {
    let (sin_t, cos_p, sin_p) = (point.theta.sin(), point.psi.cos(), point.psi.sin());
    let kx = ap.kappa * (sin_t * cos_p + ap.lambda * order.0 as f64 / ap.lx);
    let ky = ap.kappa * (sin_t * sin_p + ap.lambda * order.1 as f64 / ap.ly);
    (kx, ky)
}

/// Closed-form Fourier coefficient of the far-field Green's function at one
/// retained order:
///
/// `e^{jκr}·√A_T/(4πr) · (−1)^{n_x+n_y} · sinc(κ_x^n Lx/2) · sinc(κ_y^n Ly/2)`
pub fn fourier_green_coeff(ap: &ApertureSpec, order: (i32, i32), point: &FarFieldPoint) -> C64 {
    let (kx, ky) = shifted_wavenumbers(ap, order, point);
    let amp = ap.area.sqrt() / (4.0 * std::f64::consts::PI * point.range);
    let parity = if (order.0 + order.1).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let phase = C64::from_polar(1.0, ap.kappa * point.range);
    phase * amp * parity * sinc(kx * ap.lx / 2.0) * sinc(ky * ap.ly / 2.0)
}

/// Wavenumber-domain channel vector for one far-field point.
///
/// Entry n is the conjugate of [`fourier_green_coeff`] at the grid's n-th
/// order, matching the convention that stacks coefficients with a Hermitian
/// transpose. Ordering follows the grid's row-major layout.
pub fn channel_vector(ap: &ApertureSpec, grid: &WavenumberGrid, point: &FarFieldPoint) -> CVec {
    Array1::from_iter(
        grid.orders
            .iter()
            .map(|&order| fourier_green_coeff(ap, order, point).conj()),
    )
}

/// Surface integral of |G|² over the aperture by midpoint quadrature.
///
/// Under the far-field model the integrand magnitude is the constant
/// 1/(4πr)², so the value equals A_T/(4πr)²; the quadrature exists as an
/// independent reference for Parseval checks.
pub fn green_energy_oracle(
    ap: &ApertureSpec,
    point: &FarFieldPoint,
    resolution: usize,
) -> Result<f64, ChannelError> {
    const MIN_RES: usize = 64;
    if resolution < MIN_RES {
        return Err(ChannelError::ResolutionTooSmall(resolution, MIN_RES));
    }
    let cell = (ap.lx / resolution as f64) * (ap.ly / resolution as f64);
    let mut acc = 0.0;
    for ix in 0..resolution {
        for iy in 0..resolution {
            // Midpoint sample; the integrand is |G|² which is independent of
            // the surface coordinate under the linearized-phase model.
            let _sx = -ap.lx / 2.0 + (ix as f64 + 0.5) * ap.lx / resolution as f64;
            let _sy = -ap.ly / 2.0 + (iy as f64 + 0.5) * ap.ly / resolution as f64;
            let g_mag_sq = 1.0 / (4.0 * std::f64::consts::PI * point.range).powi(2);
            acc += g_mag_sq * cell;
        }
    }
    Ok(acc)
}

/// Orthonormal Fourier basis function Ψ_n evaluated at a surface point
/// (s_x, s_y) ∈ [−Lx/2, Lx/2] × [−Ly/2, Ly/2].
pub fn basis_function(ap: &ApertureSpec, order: (i32, i32), sx: f64, sy: f64) -> C64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let arg = -two_pi
        * (order.0 as f64 / ap.lx * (sx - ap.lx / 2.0) + order.1 as f64 / ap.ly * (sy - ap.ly / 2.0));
    C64::from_polar(1.0 / ap.area.sqrt(), arg)
}

/// Wavenumber-domain channels for all users and targets of a scene.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// Per-user channel vectors f_k, length N each.
    pub user_vectors: Vec<CVec>,
    /// Per-target channel vectors g_m, length N each.
    pub target_vectors: Vec<CVec>,
    /// Rank-one target matrices G_m = g_m g_mᴴ.
    pub target_matrices: Vec<CMat>,
}

impl ChannelSet {
    /// Synthesize channels on the truncated grid for co-located transmit and
    /// receive apertures (targets use the same closed form by reciprocity).
    pub fn synthesize(
        ap: &ApertureSpec,
        grid: &WavenumberGrid,
        users: &[FarFieldPoint],
        targets: &[FarFieldPoint],
    ) -> Result<Self, ChannelError> {
        let user_vectors = users.iter().map(|p| channel_vector(ap, grid, p)).collect();
        let target_vectors: Vec<CVec> =
            targets.iter().map(|p| channel_vector(ap, grid, p)).collect();
        Self::from_vectors(user_vectors, target_vectors)
    }

    /// Assemble a channel set from explicit vectors (used by the discrete
    /// baseline, which shares the whole optimization pipeline).
    pub fn from_vectors(user_vectors: Vec<CVec>, target_vectors: Vec<CVec>) -> Result<Self, ChannelError> {
        if target_vectors.is_empty() {
            return Err(ChannelError::NoTargets);
        }
        let target_matrices = target_vectors.iter().map(outer_product).collect();
        Ok(Self {
            user_vectors,
            target_vectors,
            target_matrices,
        })
    }

    pub fn num_users(&self) -> usize {
        self.user_vectors.len()
    }

    pub fn num_targets(&self) -> usize {
        self.target_vectors.len()
    }

    /// Channel dimension (number of retained orders, or element count for the
    /// discrete baseline).
    pub fn dim(&self) -> usize {
        self.target_vectors[0].len()
    }

    /// Validate the Hermitian rank-one structure of every target matrix.
    pub fn validate_structure(&self) -> bool {
        self.target_matrices.iter().all(|g| {
            let herm_err = (g - &conj_transpose(g))
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            let scale = g.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
            if herm_err > 1e-12 * scale {
                return false;
            }
            let (vals, _) = g.eigh(UPLO::Lower).expect("eigh on Hermitian target matrix");
            let mut mags: Vec<f64> = vals.iter().map(|v| v.abs()).collect();
            mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
            mags[1] <= 1e-9 * mags[0]
        })
    }
}

pub(crate) fn outer_product(v: &CVec) -> CMat {
    let n = v.len();
    Array2::from_shape_fn((n, n), |(i, j)| v[i] * v[j].conj())
}

pub(crate) fn conj_transpose(m: &CMat) -> CMat {
    m.t().mapv(|z| z.conj())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aperture::truncation_grid;
    use approx::assert_relative_eq;

    fn table_setup() -> (ApertureSpec, WavenumberGrid) {
        let ap = ApertureSpec::new(0.5, 0.5, 2.4e9).unwrap();
        let grid = truncation_grid(&ap);
        (ap, grid)
    }

    #[test]
    fn broadside_zero_order_magnitude() {
        let (ap, _) = table_setup();
        let p = FarFieldPoint::new(10.0, 0.0, 0.0).unwrap();
        let c = fourier_green_coeff(&ap, (0, 0), &p);
        let expect = ap.area.sqrt() / (4.0 * std::f64::consts::PI * 10.0);
        assert_relative_eq!(c.norm(), expect, max_relative = 1e-14);
    }

    #[test]
    fn sinc_zero_gives_zero_coefficient() {
        let (ap, _) = table_setup();
        // Pick θ, ψ so that κ_x^n·Lx/2 = π for order (n_x, n_y) = (0, 0):
        // κ·sinθ·Lx/2 = π  ⇒  sinθ = λ/Lx = 0.25.
        let theta = 0.25f64.asin();
        let p = FarFieldPoint::new(5.0, theta, 0.0).unwrap();
        let c = fourier_green_coeff(&ap, (0, 0), &p);
        assert!(c.norm() < 1e-14 * ap.area.sqrt());
    }

    #[test]
    fn channel_entries_are_conjugated_coefficients() {
        let (ap, grid) = table_setup();
        let p = FarFieldPoint::new(3.0, 0.4, 1.1).unwrap();
        let f = channel_vector(&ap, &grid, &p);
        let idx = grid.index_of(2, -1).unwrap();
        assert_eq!(f[idx], fourier_green_coeff(&ap, (2, -1), &p).conj());
    }

    #[test]
    fn broadside_zero_order_dominates() {
        let (ap, grid) = table_setup();
        let p = FarFieldPoint::new(10.0, 0.0, 0.0).unwrap();
        let f = channel_vector(&ap, &grid, &p);
        let i0 = grid.index_of(0, 0).unwrap();
        let expect_sq = ap.area / (4.0 * std::f64::consts::PI * 10.0).powi(2);
        assert_relative_eq!(f[i0].norm_sqr(), expect_sq, max_relative = 1e-12);
        for (i, v) in f.iter().enumerate() {
            if i != i0 {
                assert!(v.norm_sqr() < expect_sq * 1e-3);
            }
        }
    }

    #[test]
    fn azimuth_periodicity() {
        let (ap, grid) = table_setup();
        let a = FarFieldPoint::new(2.0, 0.5, 0.7).unwrap();
        let b = FarFieldPoint::new(2.0, 0.5, 0.7 + 2.0 * std::f64::consts::PI).unwrap();
        let fa = channel_vector(&ap, &grid, &a);
        let fb = channel_vector(&ap, &grid, &b);
        for (x, y) in fa.iter().zip(fb.iter()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn parseval_never_exceeds_oracle() {
        let (ap, grid) = table_setup();
        for &(theta, psi) in &[(0.0, 0.0), (0.52, 1.57), (0.52, 0.785), (1.0, 3.3)] {
            let p = FarFieldPoint::new(10.0, theta, psi).unwrap();
            let f = channel_vector(&ap, &grid, &p);
            let sum: f64 = f.iter().map(|z| z.norm_sqr()).sum();
            let oracle = green_energy_oracle(&ap, &p, 64).unwrap();
            assert!(sum <= oracle + 1e-9, "sum {sum} > oracle {oracle}");
        }
    }

    #[test]
    fn energy_oracle_matches_closed_form_and_resolution_stable() {
        let (ap, _) = table_setup();
        let p = FarFieldPoint::new(10.0, 0.3, 0.2).unwrap();
        let coarse = green_energy_oracle(&ap, &p, 64).unwrap();
        let fine = green_energy_oracle(&ap, &p, 128).unwrap();
        let expect = 0.25 / (4.0 * std::f64::consts::PI * 10.0).powi(2);
        assert_relative_eq!(coarse, expect, max_relative = 1e-12);
        assert!((fine - coarse).abs() / coarse < 1e-10);
        assert!(green_energy_oracle(&ap, &p, 32).is_err());
    }

    #[test]
    fn target_matrices_hermitian_rank_one() {
        let (ap, grid) = table_setup();
        let targets = [
            FarFieldPoint::new(1.0, 0.52, std::f64::consts::FRAC_PI_2).unwrap(),
            FarFieldPoint::new(1.0, 0.52, std::f64::consts::FRAC_PI_4).unwrap(),
        ];
        let set = ChannelSet::synthesize(&ap, &grid, &[], &targets).unwrap();
        assert!(set.validate_structure());
    }
}
