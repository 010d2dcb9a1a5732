//! Half-wavelength discrete-array counterpart with the same physical
//! aperture, run through the identical optimization pipeline.
//!
//! An isotropic element captures an effective aperture of λ²/(4π), so a
//! half-wavelength grid filling the same panel aggregates at most A_T/π of
//! effective aperture: a one-way gain factor of 1/π and a round-trip sensing
//! deficit of π² relative to the continuous surface.

use ndarray::Array1;
use thiserror::Error;

use crate::aperture::{ApertureSpec, FarFieldPoint};
use crate::channel::ChannelSet;
use crate::{C64, CVec};

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("aperture too small for half-wavelength elements: {0} x {1} m at lambda {2} m")]
    ApertureTooSmall(f64, f64, f64),
    #[error("gain comparison requires matching scenarios: {0} vs {1}")]
    ScenarioMismatch(String, String),
    #[error("gain comparison requires equal user/target counts")]
    CountMismatch,
}

/// Geometry of the half-wavelength discrete array filling an aperture.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteArraySpec {
    /// Elements along x: ⌊Lx/(λ/2)⌋.
    pub count_x: usize,
    /// Elements along y: ⌊Ly/(λ/2)⌋.
    pub count_y: usize,
    /// Element spacing λ/2, m.
    pub spacing: f64,
    /// Effective element aperture λ²/(4π), m².
    pub element_aperture: f64,
    /// Wavenumber of the carrier, rad/m.
    pub kappa: f64,
}

impl DiscreteArraySpec {
    /// Elements land on a centered λ/2 grid. Counts are floored for
    /// apertures that are not integer multiples of λ/2, in which case the
    /// effective-aperture identity D·e_a = A_T/π holds only approximately.
    pub fn from_aperture(ap: &ApertureSpec) -> Result<Self, BaselineError> {
        let spacing = ap.lambda / 2.0;
        let count = |len: f64| (len / spacing + 1e-9).floor() as usize;
        let (cx, cy) = (count(ap.lx), count(ap.ly));
        if cx == 0 || cy == 0 {
            return Err(BaselineError::ApertureTooSmall(ap.lx, ap.ly, ap.lambda));
        }
        Ok(Self {
            count_x: cx,
            count_y: cy,
            spacing,
            element_aperture: ap.lambda * ap.lambda / (4.0 * std::f64::consts::PI),
            kappa: ap.kappa,
        })
    }

    /// Total element count D.
    pub fn count(&self) -> usize {
        self.count_x * self.count_y
    }

    /// Aggregate effective aperture D·e_a (equals A_T/π for λ/2-divisible
    /// panels).
    pub fn effective_aperture(&self) -> f64 {
        self.count() as f64 * self.element_aperture
    }

    /// Centered element positions, row-major by x then y.
    pub fn positions(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.count());
        for ix in 0..self.count_x {
            let x = (ix as f64 - (self.count_x as f64 - 1.0) / 2.0) * self.spacing;
            for iy in 0..self.count_y {
                let y = (iy as f64 - (self.count_y as f64 - 1.0) / 2.0) * self.spacing;
                out.push((x, y));
            }
        }
        out
    }
}

/// Discrete steering/channel vector toward a far-field point: element d gets
/// √e_a·(e^{jκr}/(4πr))·e^{−jκ sinθ(x_d cosψ + y_d sinψ)}, so that
/// ‖h‖² = D·e_a/(4πr)².
pub fn discrete_channel_vector(spec: &DiscreteArraySpec, point: &FarFieldPoint) -> CVec {
    let amp = spec.element_aperture.sqrt() / (4.0 * std::f64::consts::PI * point.range);
    let common = C64::from_polar(amp, spec.kappa * point.range);
    let sin_t = point.theta.sin();
    let (cos_p, sin_p) = (point.psi.cos(), point.psi.sin());
    Array1::from_iter(spec.positions().into_iter().map(|(x, y)| {
        common * C64::from_polar(1.0, -spec.kappa * sin_t * (x * cos_p + y * sin_p))
    }))
}

/// Channel set for the discrete baseline; plugs into the same SINR and
/// optimization code as the continuous surface.
pub fn discrete_channel_set(
    spec: &DiscreteArraySpec,
    users: &[FarFieldPoint],
    targets: &[FarFieldPoint],
) -> Result<ChannelSet, crate::channel::ChannelError> {
    ChannelSet::from_vectors(
        users.iter().map(|p| discrete_channel_vector(spec, p)).collect(),
        targets.iter().map(|p| discrete_channel_vector(spec, p)).collect(),
    )
}

/// Per-system metrics sampled at identical scenario settings, used for gain
/// reporting.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    /// Fingerprint of the producing scenario (users, targets, P_T, Γ_c,
    /// noise), checked before comparing.
    pub scenario_key: String,
    /// Minimum sensing SINR across targets, linear.
    pub min_sense_sinr: f64,
    /// Per-user communication SINRs, linear.
    pub comm_sinr: Vec<f64>,
    /// Transmit beampattern peak at the comparison cut, linear power.
    pub tx_peak: f64,
    /// Receive beampattern peak per target, linear power.
    pub rx_peaks: Vec<f64>,
}

/// dB differences (first system minus second) per metric.
#[derive(Debug, Clone)]
pub struct GainReport {
    pub min_sense_db: f64,
    pub comm_db: Vec<f64>,
    pub tx_peak_db: f64,
    pub rx_peak_db: Vec<f64>,
}

pub fn db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Gain of the first run over the second, in dB per metric. Rejects runs
/// from different scenarios.
pub fn compare_gain(a: &RunMetrics, b: &RunMetrics) -> Result<GainReport, BaselineError> {
    if a.scenario_key != b.scenario_key {
        return Err(BaselineError::ScenarioMismatch(
            a.scenario_key.clone(),
            b.scenario_key.clone(),
        ));
    }
    if a.comm_sinr.len() != b.comm_sinr.len() || a.rx_peaks.len() != b.rx_peaks.len() {
        return Err(BaselineError::CountMismatch);
    }
    Ok(GainReport {
        min_sense_db: db(a.min_sense_sinr) - db(b.min_sense_sinr),
        comm_db: a
            .comm_sinr
            .iter()
            .zip(b.comm_sinr.iter())
            .map(|(x, y)| db(*x) - db(*y))
            .collect(),
        tx_peak_db: db(a.tx_peak) - db(b.tx_peak),
        rx_peak_db: a
            .rx_peaks
            .iter()
            .zip(b.rx_peaks.iter())
            .map(|(x, y)| db(*x) - db(*y))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aperture::truncation_grid;
    use crate::channel::channel_vector;
    use approx::assert_relative_eq;

    fn table_aperture() -> ApertureSpec {
        ApertureSpec::new(0.5, 0.5, 2.4e9).unwrap()
    }

    #[test]
    fn table_aperture_has_64_elements() {
        let spec = DiscreteArraySpec::from_aperture(&table_aperture()).unwrap();
        assert_eq!(spec.count_x, 8);
        assert_eq!(spec.count_y, 8);
        assert_eq!(spec.count(), 64);
    }

    #[test]
    fn effective_aperture_identity_on_divisible_panel() {
        let ap = table_aperture();
        let spec = DiscreteArraySpec::from_aperture(&ap).unwrap();
        let expect = ap.area / std::f64::consts::PI;
        assert_relative_eq!(spec.effective_aperture(), expect, max_relative = 1e-12);
    }

    #[test]
    fn floored_counts_for_non_divisible_panel() {
        let ap = ApertureSpec::new(0.6, 0.6, 2.4e9).unwrap(); // 9.6 spacings
        let spec = DiscreteArraySpec::from_aperture(&ap).unwrap();
        assert_eq!(spec.count_x, 9);
        assert!(spec.effective_aperture() < ap.area / std::f64::consts::PI);
    }

    #[test]
    fn channel_norm_matches_aggregate_aperture() {
        let ap = table_aperture();
        let spec = DiscreteArraySpec::from_aperture(&ap).unwrap();
        let p = FarFieldPoint::new(3.0, 0.5, 1.2).unwrap();
        let h = discrete_channel_vector(&spec, &p);
        let norm_sq: f64 = h.iter().map(|z| z.norm_sqr()).sum();
        let expect = spec.effective_aperture() / (4.0 * std::f64::consts::PI * 3.0).powi(2);
        assert_relative_eq!(norm_sq, expect, max_relative = 1e-12);
    }

    #[test]
    fn one_way_ratio_is_one_over_pi_at_full_capture() {
        // At θ=30°, ψ=90° the surface channel captures its full Parseval
        // energy, so the discrete-to-continuous energy ratio is exactly 1/π.
        let ap = table_aperture();
        let grid = truncation_grid(&ap);
        let spec = DiscreteArraySpec::from_aperture(&ap).unwrap();
        let p = FarFieldPoint::new(2.0, 30f64.to_radians(), std::f64::consts::FRAC_PI_2).unwrap();
        let h = discrete_channel_vector(&spec, &p);
        let f = channel_vector(&ap, &grid, &p);
        let hn: f64 = h.iter().map(|z| z.norm_sqr()).sum();
        let fn_: f64 = f.iter().map(|z| z.norm_sqr()).sum();
        assert_relative_eq!(hn / fn_, 1.0 / std::f64::consts::PI, max_relative = 1e-10);
    }

    #[test]
    fn broadside_phases_are_coherent() {
        let ap = table_aperture();
        let spec = DiscreteArraySpec::from_aperture(&ap).unwrap();
        let p = FarFieldPoint::new(5.0, 0.0, 0.0).unwrap();
        let h = discrete_channel_vector(&spec, &p);
        let coherent = h.iter().map(|z| z.norm()).sum::<f64>();
        let actual = h.sum().norm();
        assert_relative_eq!(actual, coherent, max_relative = 1e-12);
    }

    #[test]
    fn identical_metrics_give_zero_gain() {
        let m = RunMetrics {
            scenario_key: "k".into(),
            min_sense_sinr: 3.0,
            comm_sinr: vec![2.0, 4.0],
            tx_peak: 1.5,
            rx_peaks: vec![0.7],
        };
        let g = compare_gain(&m, &m).unwrap();
        assert_eq!(g.min_sense_db, 0.0);
        assert!(g.comm_db.iter().all(|v| *v == 0.0));
        assert_eq!(g.tx_peak_db, 0.0);
        assert_eq!(g.rx_peak_db[0], 0.0);
    }

    #[test]
    fn mismatched_scenarios_rejected() {
        let a = RunMetrics {
            scenario_key: "a".into(),
            min_sense_sinr: 1.0,
            comm_sinr: vec![],
            tx_peak: 1.0,
            rx_peaks: vec![],
        };
        let b = RunMetrics { scenario_key: "b".into(), ..a.clone() };
        assert!(matches!(
            compare_gain(&a, &b),
            Err(BaselineError::ScenarioMismatch(_, _))
        ));
    }
}
