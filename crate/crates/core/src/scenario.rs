//! Scenario configuration: file schema, validation, defaults, and
//! materialization into optimizer-ready instances.
//!
//! Configs are TOML. Angles are degrees in the file and radians internally;
//! the power budget is carried in the surface-current convention (mA²) and
//! converted to SI once at load. Ranges may be explicit meters or `"auto"`,
//! which places the point at the calibrated range A_T^¼/(4π) where the
//! matched-filter sensing bound coincides with the interference-free power
//! bound P_T·A_T/σ_R² used by the adaptive bracketing.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ao::{AoOptions, BracketStrategy, SystemInstance};
use crate::aperture::{truncation_grid, ApertureSpec, FarFieldPoint, GeometryError};
use crate::baseline::{discrete_channel_set, BaselineError, DiscreteArraySpec};
use crate::channel::{ChannelError, ChannelSet};
use crate::sinr::NoiseModel;
use crate::txbf::TransmitOptions;

/// Interference-free sensing bound at defaults, linear (40 dB).
const DEFAULT_BOUND_LINEAR: f64 = 1e4;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("validation failed for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// Range entry: explicit meters or the calibrated `"auto"` placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RangeSpec {
    Meters(f64),
    Named(AutoRange),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoRange {
    #[serde(rename = "auto")]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionCfg {
    pub theta_deg: f64,
    pub psi_deg: f64,
    pub range_m: RangeSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApertureCfg {
    pub lx_m: f64,
    pub ly_m: f64,
    pub carrier_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCfg {
    /// Transmit power budget in the current-power convention, mA².
    pub p_t_ma2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommCfg {
    pub gamma_c_db: f64,
}

/// Equivalent (discrete-domain) noise overrides, SI units. Defaults derive
/// from the power budget so the interference-free bound lands at 40 dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct NoiseCfg {
    pub sigma_c_eff: Option<f64>,
    pub sigma_big_r_sq: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverCfg {
    /// Bisection width target, linear SINR.
    pub eps1: f64,
    /// Outer-loop tolerance, linear SINR.
    pub eps2: f64,
    pub sdp_tol: f64,
    pub sdp_max_iter: usize,
    pub max_outer: usize,
}

impl Default for SolverCfg {
    fn default() -> Self {
        Self { eps1: 0.01, eps2: 0.01, sdp_tol: 1e-8, sdp_max_iter: 200, max_outer: 20 }
    }
}

fn default_seed() -> u64 {
    7
}

/// On-disk scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub aperture: ApertureCfg,
    pub power: PowerCfg,
    pub comm: CommCfg,
    #[serde(default)]
    pub users: Vec<DirectionCfg>,
    pub targets: Vec<DirectionCfg>,
    #[serde(default)]
    pub noise: NoiseCfg,
    #[serde(default)]
    pub solver: SolverCfg,
}

impl ScenarioConfig {
    /// The shipped default scenario (two users, two targets, 0.5 m square
    /// aperture at 2.4 GHz, 100 mA² budget, 5 dB communication floor).
    pub fn shipped_default() -> Self {
        toml::from_str(include_str!("../data/default.scenario")).expect("embedded default parses")
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.targets.is_empty() {
            return Err(ScenarioError::Invalid {
                field: "targets",
                reason: "at least one target is required".into(),
            });
        }
        if !self.comm.gamma_c_db.is_finite() {
            return Err(ScenarioError::Invalid {
                field: "comm.gamma_c_db",
                reason: format!("must be finite, got {}", self.comm.gamma_c_db),
            });
        }
        if self.power.p_t_ma2 <= 0.0 {
            return Err(ScenarioError::Invalid {
                field: "power.p_t_ma2",
                reason: format!("must be positive, got {}", self.power.p_t_ma2),
            });
        }
        let check_dir = |field: &'static str, d: &DirectionCfg| -> Result<(), ScenarioError> {
            if !(0.0..90.0).contains(&d.theta_deg) {
                return Err(ScenarioError::Invalid {
                    field,
                    reason: format!("theta_deg {} outside [0, 90)", d.theta_deg),
                });
            }
            if let RangeSpec::Meters(r) = d.range_m {
                if r <= 0.0 {
                    return Err(ScenarioError::Invalid {
                        field,
                        reason: format!("range_m {r} must be positive"),
                    });
                }
            }
            Ok(())
        };
        for u in &self.users {
            check_dir("users", u)?;
        }
        for t in &self.targets {
            check_dir("targets", t)?;
        }
        Ok(())
    }

    /// Materialize geometry, noise, and solver settings.
    pub fn resolve(&self) -> Result<ResolvedScenario, ScenarioError> {
        self.validate()?;
        let aperture = ApertureSpec::new(
            self.aperture.lx_m,
            self.aperture.ly_m,
            self.aperture.carrier_hz,
        )?;
        let p_t_si = self.power.p_t_ma2 * 1e-6;
        let sigma_big_r_sq = self
            .noise
            .sigma_big_r_sq
            .unwrap_or(p_t_si * aperture.area / DEFAULT_BOUND_LINEAR);
        let sigma_c_eff = self.noise.sigma_c_eff.unwrap_or(sigma_big_r_sq);
        let noise =
            NoiseModel::from_effective(sigma_c_eff, sigma_big_r_sq, aperture.kappa, aperture.z0);
        let place = |d: &DirectionCfg| -> Result<FarFieldPoint, ScenarioError> {
            let r = match d.range_m {
                RangeSpec::Meters(r) => r,
                RangeSpec::Named(AutoRange::Auto) => calibrated_range(&aperture),
            };
            Ok(FarFieldPoint::new(r, d.theta_deg.to_radians(), d.psi_deg.to_radians())?)
        };
        Ok(ResolvedScenario {
            aperture,
            users: self.users.iter().map(|d| place(d)).collect::<Result<_, _>>()?,
            targets: self.targets.iter().map(|d| place(d)).collect::<Result<_, _>>()?,
            p_t_si,
            gamma_c: db_to_linear(self.comm.gamma_c_db),
            noise,
            solver: self.solver,
            seed: self.seed,
        })
    }
}

/// Range at which the matched-filter sensing bound equals P_T·A_T/σ_R²:
/// ‖g‖⁴ = A_T requires (4πr)⁴ = A_T under full Parseval capture.
pub fn calibrated_range(ap: &ApertureSpec) -> f64 {
    ap.area.powf(0.25) / (4.0 * std::f64::consts::PI)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Load and validate a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let cfg: ScenarioConfig = toml::from_str(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Fully materialized scenario: geometry in SI radians/meters, noise, and
/// solver knobs.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub aperture: ApertureSpec,
    pub users: Vec<FarFieldPoint>,
    pub targets: Vec<FarFieldPoint>,
    /// Power budget, SI (A²).
    pub p_t_si: f64,
    /// Communication floor, linear.
    pub gamma_c: f64,
    pub noise: NoiseModel,
    pub solver: SolverCfg,
    pub seed: u64,
}

impl ResolvedScenario {
    /// Wavenumber-domain channels for the continuous surface.
    pub fn surface_channels(&self) -> Result<ChannelSet, ChannelError> {
        let grid = truncation_grid(&self.aperture);
        ChannelSet::synthesize(&self.aperture, &grid, &self.users, &self.targets)
    }

    /// Optimizer-ready instance for the continuous surface.
    pub fn surface_instance(&self) -> Result<SystemInstance, ScenarioError> {
        Ok(SystemInstance {
            channels: self.surface_channels()?,
            noise: self.noise,
            p_t: self.p_t_si,
            gamma_c: self.gamma_c,
            power_bound: self.p_t_si * self.aperture.area / self.noise.sigma_big_r_sq,
            bracket: BracketStrategy::Adaptive,
        })
    }

    /// Optimizer-ready instance for the half-wavelength baseline. Uses the
    /// plain bisection interval scaled by the aggregate effective aperture.
    pub fn discrete_instance(&self) -> Result<(DiscreteArraySpec, SystemInstance), ScenarioError> {
        let spec = DiscreteArraySpec::from_aperture(&self.aperture)?;
        let channels = discrete_channel_set(&spec, &self.users, &self.targets)?;
        let power_bound = self.p_t_si * spec.effective_aperture() / self.noise.sigma_big_r_sq;
        Ok((
            spec,
            SystemInstance {
                channels,
                noise: self.noise,
                p_t: self.p_t_si,
                gamma_c: self.gamma_c,
                power_bound,
                bracket: BracketStrategy::Plain,
            },
        ))
    }

    pub fn ao_options(&self) -> AoOptions {
        AoOptions {
            eps1: self.solver.eps1,
            eps2: self.solver.eps2,
            max_outer: self.solver.max_outer,
            transmit: TransmitOptions {
                sdp_tol: self.solver.sdp_tol,
                sdp_max_iter: self.solver.sdp_max_iter,
            },
        }
    }

    /// Stable fingerprint of everything two comparable runs must share.
    pub fn scenario_key(&self) -> String {
        let dir = |p: &FarFieldPoint| format!("({:.9e},{:.9e},{:.9e})", p.range, p.theta, p.psi);
        format!(
            "ap[{:.9e}x{:.9e}@{:.6e}] pt={:.9e} gc={:.9e} noise=({:.9e},{:.9e}) users=[{}] targets=[{}]",
            self.aperture.lx,
            self.aperture.ly,
            self.aperture.carrier_freq,
            self.p_t_si,
            self.gamma_c,
            self.noise.sigma_c_eff,
            self.noise.sigma_big_r_sq,
            self.users.iter().map(|p| dir(p)).collect::<Vec<_>>().join(","),
            self.targets.iter().map(|p| dir(p)).collect::<Vec<_>>().join(","),
        )
    }

    /// Same scenario at a different power budget (noise kept from the base).
    pub fn with_power_si(&self, p_t_si: f64) -> Self {
        Self { p_t_si, ..self.clone() }
    }

    /// Same scenario on a square aperture of the given area; auto-ranged
    /// points stay calibrated (λ-relative geometry is preserved by keeping
    /// angles fixed). Noise is kept from the base.
    pub fn with_square_area(&self, area: f64) -> Result<Self, ScenarioError> {
        let aperture = self.aperture.with_area(area)?;
        let recal = |pts: &[FarFieldPoint]| -> Vec<FarFieldPoint> {
            pts.iter()
                .map(|p| FarFieldPoint { range: calibrated_range(&aperture), ..*p })
                .collect()
        };
        Ok(Self {
            aperture,
            users: recal(&self.users),
            targets: recal(&self.targets),
            ..self.clone()
        })
    }

    pub fn with_gamma_c_db(&self, gamma_c_db: f64) -> Self {
        Self { gamma_c: db_to_linear(gamma_c_db), ..self.clone() }
    }

    /// Perturb user 1's polar angle (true-channel mismatch evaluation).
    pub fn with_user1_theta_offset(&self, delta_theta_deg: f64) -> Result<Self, ScenarioError> {
        let mut users = self.users.clone();
        if let Some(u) = users.first_mut() {
            *u = FarFieldPoint::new(
                u.range,
                u.theta + delta_theta_deg.to_radians(),
                u.psi,
            )?;
        }
        Ok(Self { users, ..self.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn shipped_default_matches_table_values() {
        let cfg = ScenarioConfig::shipped_default();
        assert_eq!(cfg.aperture.lx_m, 0.5);
        assert_eq!(cfg.aperture.carrier_hz, 2.4e9);
        assert_eq!(cfg.power.p_t_ma2, 100.0);
        assert_eq!(cfg.comm.gamma_c_db, 5.0);
        let angles: Vec<(f64, f64)> =
            cfg.users.iter().map(|u| (u.theta_deg, u.psi_deg)).collect();
        assert_eq!(angles, vec![(30.0, 180.0), (30.0, 270.0)]);
        let tangles: Vec<(f64, f64)> =
            cfg.targets.iter().map(|t| (t.theta_deg, t.psi_deg)).collect();
        assert_eq!(tangles, vec![(30.0, 90.0), (30.0, 45.0)]);
    }

    #[test]
    fn resolve_fills_calibrated_defaults() {
        let cfg = ScenarioConfig::shipped_default();
        let rs = cfg.resolve().unwrap();
        // 40 dB interference-free bound at defaults.
        let bound = rs.p_t_si * rs.aperture.area / rs.noise.sigma_big_r_sq;
        assert_relative_eq!(bound, 1e4, max_relative = 1e-12);
        assert_relative_eq!(rs.gamma_c, 10f64.powf(0.5), max_relative = 1e-12);
        // Calibrated range: ‖g‖⁴ = A_T at full capture.
        let r = rs.targets[0].range;
        assert_relative_eq!((4.0 * std::f64::consts::PI * r).powi(4), rs.aperture.area, max_relative = 1e-12);
    }

    #[test]
    fn zero_db_gamma_is_unity() {
        let mut cfg = ScenarioConfig::shipped_default();
        cfg.comm.gamma_c_db = 0.0;
        let rs = cfg.resolve().unwrap();
        assert_eq!(rs.gamma_c, 1.0);
    }

    #[test]
    fn missing_targets_rejected() {
        let mut cfg = ScenarioConfig::shipped_default();
        cfg.targets.clear();
        assert!(matches!(
            cfg.validate(),
            Err(ScenarioError::Invalid { field: "targets", .. })
        ));
    }

    #[test]
    fn toml_round_trip_exact() {
        let cfg = ScenarioConfig::shipped_default();
        let text = cfg.to_toml_string();
        let back: ScenarioConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn explicit_range_respected() {
        let mut cfg = ScenarioConfig::shipped_default();
        cfg.targets[0].range_m = RangeSpec::Meters(12.5);
        let rs = cfg.resolve().unwrap();
        assert_eq!(rs.targets[0].range, 12.5);
    }

    #[test]
    fn noise_override_used_verbatim() {
        let mut cfg = ScenarioConfig::shipped_default();
        cfg.noise.sigma_big_r_sq = Some(3.5e-9);
        let rs = cfg.resolve().unwrap();
        assert_eq!(rs.noise.sigma_big_r_sq, 3.5e-9);
        assert_eq!(rs.noise.sigma_c_eff, 3.5e-9); // defaults to the sensing level
        assert!(rs.noise.is_consistent(rs.aperture.kappa, rs.aperture.z0));
    }
}
