//! Azimuth beampattern cuts at a fixed polar angle.
//!
//! Transmit cuts evaluate ‖f(θ,ψ)ᴴW‖² over the sweep; receive cuts evaluate
//! |qᴴg(θ,ψ)|². Values are reported in dB with a −120 dB floor relative to
//! the cut peak (keeps CSV output finite for nulls).

use thiserror::Error;

use crate::aperture::{ApertureSpec, FarFieldPoint, WavenumberGrid};
use crate::baseline::DiscreteArraySpec;
use crate::channel::channel_vector;
use crate::sinr::inner;
use crate::{CMat, CVec};

/// Clamp depth below the cut peak, dB.
pub const FLOOR_DB: f64 = 120.0;

#[derive(Debug, Error, PartialEq)]
pub enum BeamError {
    #[error("azimuth sweep needs at least 2 points, got {0}")]
    SweepTooShort(usize),
    #[error("invalid cut geometry: {0}")]
    BadGeometry(String),
}

/// Output normalization of a cut.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    /// Raw dB values.
    None,
    /// Peak of this cut mapped to 0 dB.
    PeakZeroDb,
    /// Subtract an external reference level (dB), e.g. another system's
    /// peak, so two cuts share one scale.
    ReferenceDb(f64),
}

/// Azimuth sweep at a fixed polar angle and range.
#[derive(Debug, Clone)]
pub struct AzimuthCut {
    pub theta: f64,
    pub range: f64,
    /// Azimuth sample points, radians.
    pub psi: Vec<f64>,
}

impl AzimuthCut {
    /// Uniform full-circle sweep with `points` samples.
    pub fn full_circle(theta: f64, range: f64, points: usize) -> Self {
        let psi = (0..points)
            .map(|i| 2.0 * std::f64::consts::PI * i as f64 / points as f64)
            .collect();
        Self { theta, range, psi }
    }
}

/// A steering-vector source for cuts; implemented by both the continuous
/// surface and the discrete baseline so cuts share one code path.
pub trait Steering {
    fn steer(&self, theta: f64, psi: f64, range: f64) -> CVec;
}

/// Continuous-surface steering on a truncated wavenumber grid.
pub struct SurfaceSteering<'a> {
    pub aperture: &'a ApertureSpec,
    pub grid: &'a WavenumberGrid,
}

impl Steering for SurfaceSteering<'_> {
    fn steer(&self, theta: f64, psi: f64, range: f64) -> CVec {
        let p = FarFieldPoint::new(range, theta, psi).expect("valid cut geometry");
        channel_vector(self.aperture, self.grid, &p)
    }
}

/// Discrete-array steering.
pub struct ArraySteering<'a> {
    pub spec: &'a DiscreteArraySpec,
}

impl Steering for ArraySteering<'_> {
    fn steer(&self, theta: f64, psi: f64, range: f64) -> CVec {
        let p = FarFieldPoint::new(range, theta, psi).expect("valid cut geometry");
        crate::baseline::discrete_channel_vector(self.spec, &p)
    }
}

fn finish(mut raw: Vec<(f64, f64)>, norm: Normalization) -> Vec<(f64, f64)> {
    let peak = raw.iter().map(|(_, p)| *p).fold(f64::MIN_POSITIVE, f64::max);
    let peak_db = 10.0 * peak.log10();
    let floor = peak_db - FLOOR_DB;
    for (_, p) in raw.iter_mut() {
        let db = 10.0 * p.max(f64::MIN_POSITIVE).log10();
        *p = db.max(floor);
    }
    match norm {
        Normalization::None => {}
        Normalization::PeakZeroDb => {
            for (_, p) in raw.iter_mut() {
                *p -= peak_db;
            }
        }
        Normalization::ReferenceDb(r) => {
            for (_, p) in raw.iter_mut() {
                *p -= r;
            }
        }
    }
    raw
}

fn check_cut(cut: &AzimuthCut) -> Result<(), BeamError> {
    if cut.psi.len() < 2 {
        return Err(BeamError::SweepTooShort(cut.psi.len()));
    }
    if cut.range <= 0.0 || !(0.0..std::f64::consts::FRAC_PI_2).contains(&cut.theta) {
        return Err(BeamError::BadGeometry(format!(
            "range {}, theta {}",
            cut.range, cut.theta
        )));
    }
    Ok(())
}

/// Transmit cut: radiated power ‖f(θ,ψ)ᴴW‖² per azimuth sample, as
/// (psi_deg, dB) pairs.
pub fn transmit_cut(
    steering: &dyn Steering,
    w: &CMat,
    cut: &AzimuthCut,
    norm: Normalization,
) -> Result<Vec<(f64, f64)>, BeamError> {
    check_cut(cut)?;
    let raw = cut
        .psi
        .iter()
        .map(|&psi| {
            let f = steering.steer(cut.theta, psi, cut.range);
            let power: f64 = (0..w.ncols())
                .map(|c| inner(&f, &w.column(c).to_owned()).norm_sqr())
                .sum();
            (psi.to_degrees(), power)
        })
        .collect();
    Ok(finish(raw, norm))
}

/// Receive cut: |qᴴg(θ,ψ)|² per azimuth sample, as (psi_deg, dB) pairs.
pub fn receive_cut(
    steering: &dyn Steering,
    q: &CVec,
    cut: &AzimuthCut,
    norm: Normalization,
) -> Result<Vec<(f64, f64)>, BeamError> {
    check_cut(cut)?;
    let raw = cut
        .psi
        .iter()
        .map(|&psi| {
            let g = steering.steer(cut.theta, psi, cut.range);
            (psi.to_degrees(), inner(q, &g).norm_sqr())
        })
        .collect();
    Ok(finish(raw, norm))
}

/// Peak linear power of a transmit cut (pre-normalization), used for gain
/// comparisons between systems.
pub fn transmit_cut_peak(steering: &dyn Steering, w: &CMat, cut: &AzimuthCut) -> Result<f64, BeamError> {
    check_cut(cut)?;
    Ok(cut
        .psi
        .iter()
        .map(|&psi| {
            let f = steering.steer(cut.theta, psi, cut.range);
            (0..w.ncols())
                .map(|c| inner(&f, &w.column(c).to_owned()).norm_sqr())
                .sum()
        })
        .fold(0.0f64, f64::max))
}

/// Peak linear power of a receive cut.
pub fn receive_cut_peak(steering: &dyn Steering, q: &CVec, cut: &AzimuthCut) -> Result<f64, BeamError> {
    check_cut(cut)?;
    Ok(cut
        .psi
        .iter()
        .map(|&psi| inner(q, &steering.steer(cut.theta, psi, cut.range)).norm_sqr())
        .fold(0.0f64, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aperture::truncation_grid;
    use crate::{C64, CMat};
    use ndarray::Array2;

    fn setup() -> (ApertureSpec, WavenumberGrid) {
        let ap = ApertureSpec::new(0.5, 0.5, 2.4e9).unwrap();
        let grid = truncation_grid(&ap);
        (ap, grid)
    }

    #[test]
    fn matched_beam_peaks_at_its_direction() {
        let (ap, grid) = setup();
        let steer = SurfaceSteering { aperture: &ap, grid: &grid };
        let theta = 30f64.to_radians();
        let psi0 = std::f64::consts::FRAC_PI_2;
        let f0 = steer.steer(theta, psi0, 1.0);
        let n = f0.len();
        let w: CMat = f0.into_shape_with_order((n, 1)).unwrap();
        let cut = AzimuthCut::full_circle(theta, 1.0, 360);
        let out = transmit_cut(&steer, &w, &cut, Normalization::PeakZeroDb).unwrap();
        let peak = out
            .iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert!((peak.0 - 90.0).abs() < 1.0, "peak at {} deg", peak.0);
        assert_eq!(peak.1, 0.0);
    }

    #[test]
    fn zero_beamformer_clamps_to_floor() {
        let (ap, grid) = setup();
        let steer = SurfaceSteering { aperture: &ap, grid: &grid };
        let n = grid.len();
        let w: CMat = Array2::zeros((n, 1));
        let cut = AzimuthCut::full_circle(0.3, 1.0, 16);
        let out = transmit_cut(&steer, &w, &cut, Normalization::PeakZeroDb).unwrap();
        // All samples equal, so the whole cut sits at the 0 dB peak; raw
        // power is the f64 floor.
        assert!(out.iter().all(|(_, db)| *db == 0.0));
        let raw = transmit_cut(&steer, &w, &cut, Normalization::None).unwrap();
        assert!(raw.iter().all(|(_, db)| *db < -3000.0));
    }

    #[test]
    fn rejects_short_sweeps() {
        let (ap, grid) = setup();
        let steer = SurfaceSteering { aperture: &ap, grid: &grid };
        let n = grid.len();
        let w: CMat = Array2::zeros((n, 1));
        let cut = AzimuthCut { theta: 0.3, range: 1.0, psi: vec![0.0] };
        assert_eq!(
            transmit_cut(&steer, &w, &cut, Normalization::None).unwrap_err(),
            BeamError::SweepTooShort(1)
        );
    }

    #[test]
    fn receive_cut_floor_is_bounded() {
        let (ap, grid) = setup();
        let steer = SurfaceSteering { aperture: &ap, grid: &grid };
        let theta = 30f64.to_radians();
        let g = steer.steer(theta, std::f64::consts::FRAC_PI_2, 1.0);
        let ng: f64 = g.iter().map(|z| z.norm_sqr()).sum();
        let q = g.mapv(|z| z / C64::new(ng.sqrt(), 0.0));
        let cut = AzimuthCut::full_circle(theta, 1.0, 720);
        let out = receive_cut(&steer, &q, &cut, Normalization::PeakZeroDb).unwrap();
        let min = out.iter().map(|(_, db)| *db).fold(f64::INFINITY, f64::min);
        assert!(min >= -FLOOR_DB - 1e-9);
    }
}
