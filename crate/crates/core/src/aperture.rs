//! Aperture geometry, far-field points, and the truncated wavenumber grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light used for wavelength derivation, m/s.
///
/// The rounded value keeps electrically sized apertures exact: a 2.4 GHz
/// carrier gives λ = 0.125 m so a 0.5 m side is exactly 4λ.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Free-space wave impedance, Ω.
pub const Z0_FREE_SPACE: f64 = 376.730_313_668;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("aperture side lengths must be positive, got {0} x {1}")]
    NonPositiveAperture(f64, f64),
    #[error("carrier frequency must be positive, got {0}")]
    NonPositiveFrequency(f64),
    #[error("far-field range must be positive, got {0}")]
    NonPositiveRange(f64),
    #[error("polar angle must lie in [0, pi/2), got {0}")]
    PolarAngleOutOfRange(f64),
}

/// Physical geometry of one rectangular continuous aperture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApertureSpec {
    /// Side length along x, m.
    pub lx: f64,
    /// Side length along y, m.
    pub ly: f64,
    /// Carrier frequency, Hz.
    pub carrier_freq: f64,
    /// Wavelength, m.
    pub lambda: f64,
    /// Wavenumber 2π/λ, rad/m.
    pub kappa: f64,
    /// Aperture area Lx·Ly, m².
    pub area: f64,
    /// Free-space wave impedance, Ω.
    pub z0: f64,
}

impl ApertureSpec {
    pub fn new(lx: f64, ly: f64, carrier_freq: f64) -> Result<Self, GeometryError> {
        if lx <= 0.0 || ly <= 0.0 {
            return Err(GeometryError::NonPositiveAperture(lx, ly));
        }
        if carrier_freq <= 0.0 {
            return Err(GeometryError::NonPositiveFrequency(carrier_freq));
        }
        let lambda = SPEED_OF_LIGHT / carrier_freq;
        Ok(Self {
            lx,
            ly,
            carrier_freq,
            lambda,
            kappa: 2.0 * std::f64::consts::PI / lambda,
            area: lx * ly,
            z0: Z0_FREE_SPACE,
        })
    }

    /// Square aperture of the given area, same carrier.
    pub fn with_area(&self, area: f64) -> Result<Self, GeometryError> {
        let side = area.sqrt();
        Self::new(side, side, self.carrier_freq)
    }
}

/// Position of a user or target in the far field, spherical coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FarFieldPoint {
    /// Range from the aperture center, m.
    pub range: f64,
    /// Polar angle from boresight, rad, in [0, π/2).
    pub theta: f64,
    /// Azimuth angle, rad, normalized into [0, 2π).
    pub psi: f64,
}

impl FarFieldPoint {
    pub fn new(range: f64, theta: f64, psi: f64) -> Result<Self, GeometryError> {
        if range <= 0.0 {
            return Err(GeometryError::NonPositiveRange(range));
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&theta) {
            return Err(GeometryError::PolarAngleOutOfRange(theta));
        }
        let two_pi = 2.0 * std::f64::consts::PI;
        let psi = psi.rem_euclid(two_pi);
        Ok(Self { range, theta, psi })
    }
}

/// Truncated rectangular set of Fourier orders retained for channel synthesis.
///
/// The per-axis cutoff ⌈L/λ⌉ keeps the retained band at least as wide as the
/// radiating wavenumbers, so the grid size always meets the bound
/// N ≥ (2Lx/λ + 1)(2Ly/λ + 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WavenumberGrid {
    /// Order pairs (n_x, n_y), row-major: n_x is the outer loop.
    pub orders: Vec<(i32, i32)>,
    /// Per-axis maximum order along x.
    pub max_x: i32,
    /// Per-axis maximum order along y.
    pub max_y: i32,
}

impl WavenumberGrid {
    /// Number of retained orders.
    pub fn len(&self) -> usize {
        self.orders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    /// Index of a given order pair in the row-major layout.
    pub fn index_of(&self, nx: i32, ny: i32) -> Option<usize> {
        if nx.abs() > self.max_x || ny.abs() > self.max_y {
            return None;
        }
        let row = (nx + self.max_x) as usize;
        let col = (ny + self.max_y) as usize;
        Some(row * (2 * self.max_y + 1) as usize + col)
    }
}

/// Build the truncated wavenumber grid for an aperture.
///
/// Ordering is deterministic (row-major by n_x then n_y) so channel vectors
/// are reproducible bit-for-bit across runs.
pub fn truncation_grid(aperture: &ApertureSpec) -> WavenumberGrid {
    // Tiny negative slack so an exactly integer L/λ does not round up.
    let per_axis = |len: f64| -> i32 { (len / aperture.lambda - 1e-9).ceil().max(1.0) as i32 };
    let max_x = per_axis(aperture.lx);
    let max_y = per_axis(aperture.ly);
    let mut orders = Vec::with_capacity(((2 * max_x + 1) * (2 * max_y + 1)) as usize);
    for nx in -max_x..=max_x {
        for ny in -max_y..=max_y {
            orders.push((nx, ny));
        }
    }
    WavenumberGrid { orders, max_x, max_y }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_aperture() -> ApertureSpec {
        ApertureSpec::new(0.5, 0.5, 2.4e9).unwrap()
    }

    #[test]
    fn aperture_invariants() {
        let ap = table_aperture();
        assert_eq!(ap.lambda, 0.125);
        assert!((ap.kappa * ap.lambda - 2.0 * std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(ap.area, 0.25);
    }

    #[test]
    fn grid_table_values() {
        let grid = truncation_grid(&table_aperture());
        assert_eq!(grid.max_x, 4);
        assert_eq!(grid.max_y, 4);
        assert_eq!(grid.len(), 81);
        // Row-major by n_x then n_y.
        assert_eq!(grid.orders[0], (-4, -4));
        assert_eq!(grid.orders[1], (-4, -3));
        assert_eq!(grid.orders[80], (4, 4));
        assert_eq!(grid.index_of(0, -4), Some(4 * 9));
    }

    #[test]
    fn grid_half_wavelength_square() {
        let ap = ApertureSpec::new(0.0625, 0.0625, 2.4e9).unwrap();
        let grid = truncation_grid(&ap);
        assert_eq!(grid.max_x, 1); // ceil(0.5) = 1
        assert_eq!(grid.len(), 9);
    }

    #[test]
    fn grid_rectangular_product() {
        let ap = ApertureSpec::new(0.5, 0.25, 2.4e9).unwrap();
        let grid = truncation_grid(&ap);
        assert_eq!(grid.len(), 9 * 5);
    }

    #[test]
    fn grid_meets_lower_bound() {
        for (lx, ly) in [(0.3, 0.2), (0.11, 0.47), (1.0, 1.0)] {
            let ap = ApertureSpec::new(lx, ly, 2.4e9).unwrap();
            let grid = truncation_grid(&ap);
            let bound = (2.0 * lx / ap.lambda + 1.0) * (2.0 * ly / ap.lambda + 1.0);
            assert!(grid.len() as f64 >= bound - 1e-9);
        }
    }

    #[test]
    fn far_field_point_validation() {
        assert!(FarFieldPoint::new(-1.0, 0.1, 0.0).is_err());
        assert!(FarFieldPoint::new(1.0, std::f64::consts::FRAC_PI_2, 0.0).is_err());
        let p = FarFieldPoint::new(1.0, 0.3, -0.5).unwrap();
        assert!(p.psi >= 0.0 && p.psi < 2.0 * std::f64::consts::PI);
    }
}
