//! Sweep orchestration: run the optimizer (and optionally the discrete
//! baseline) across a parameter grid and collect per-point metrics.
//!
//! Points execute in a work pool; output ordering always follows the grid,
//! so results are independent of scheduling. Failures are recorded per point
//! and do not abort the sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ao::{optimize, AoStatus, OptimizationResult};
use crate::baseline::{compare_gain, DiscreteArraySpec, GainReport, RunMetrics};
use crate::beampattern::{
    receive_cut, receive_cut_peak, transmit_cut, transmit_cut_peak, ArraySteering, AzimuthCut,
    Normalization, Steering, SurfaceSteering,
};
use crate::scenario::{ResolvedScenario, ScenarioError};
use crate::sinr::{comm_sinr, sense_sinr, TxView};
use crate::aperture::truncation_grid;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep grid must be nonempty")]
    EmptyGrid,
    #[error("sweep grid must be strictly monotone")]
    NonMonotoneGrid,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Swept variable. Grid units: mA² for the power budget, m² for the aperture
/// area, dB for the communication floor, degrees for the angle offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    PowerBudget,
    ApertureArea,
    GammaC,
    DeltaTheta,
}

impl SweepVariable {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVariable::PowerBudget => "p_t_ma2",
            SweepVariable::ApertureArea => "a_t_m2",
            SweepVariable::GammaC => "gamma_c_db",
            SweepVariable::DeltaTheta => "delta_theta_deg",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    pub include_baseline: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.grid.is_empty() {
            return Err(SweepError::EmptyGrid);
        }
        let inc = self.grid.windows(2).all(|w| w[1] > w[0]);
        let dec = self.grid.windows(2).all(|w| w[1] < w[0]);
        if self.grid.len() > 1 && !inc && !dec {
            return Err(SweepError::NonMonotoneGrid);
        }
        Ok(())
    }
}

/// Metrics of one optimized system at one grid point. SINRs are stored
/// linear; dB values are derived at emission.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub converged: bool,
    pub outer_iterations: usize,
    pub sdp_calls: usize,
    /// Final minimum sensing SINR, linear.
    pub gamma_r_star: f64,
    /// Per-target sensing SINRs, linear.
    pub sense_sinr: Vec<f64>,
    /// Per-user communication SINRs, linear.
    pub comm_sinr: Vec<f64>,
    /// Transmit-beampattern peak at the comparison cut, linear power.
    pub tx_peak: f64,
    /// Receive-beampattern peaks per target, linear power.
    pub rx_peaks: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainSummary {
    pub min_sense_db: f64,
    pub comm_db: Vec<f64>,
    pub tx_peak_db: f64,
    pub rx_peak_db: Vec<f64>,
}

impl From<GainReport> for GainSummary {
    fn from(g: GainReport) -> Self {
        Self {
            min_sense_db: g.min_sense_db,
            comm_db: g.comm_db,
            tx_peak_db: g.tx_peak_db,
            rx_peak_db: g.rx_peak_db,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointOutcome {
    pub index: usize,
    pub value: f64,
    pub surface: Result<RunRecord, String>,
    pub baseline: Option<Result<RunRecord, String>>,
    pub gain: Option<GainSummary>,
}

impl PointOutcome {
    pub fn succeeded(&self) -> bool {
        self.surface.is_ok() && self.baseline.as_ref().map_or(true, |b| b.is_ok())
    }
}

/// One emitted beampattern cut.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CutRecord {
    /// "tx" or "rx_target{l}".
    pub label: String,
    /// Azimuth in degrees with per-system dB columns.
    pub psi_deg: Vec<f64>,
    pub surface_db: Vec<f64>,
    pub baseline_db: Option<Vec<f64>>,
}

/// Full sweep output plus the metadata needed to reproduce it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBundle {
    pub format: String,
    pub variable: String,
    pub grid: Vec<f64>,
    pub include_baseline: bool,
    pub points: Vec<PointOutcome>,
    pub beampatterns: Vec<CutRecord>,
    pub metadata: RunMetadata,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub seed: u64,
    pub eps1: f64,
    pub eps2: f64,
    pub sdp_tol: f64,
    pub scenario_key: String,
}

/// Az-cut used for peak comparisons and emitted patterns: the polar ring of
/// the first target, full circle at half-degree resolution.
fn comparison_cut(scene: &ResolvedScenario) -> AzimuthCut {
    let theta = scene.targets[0].theta;
    let range = scene.targets[0].range;
    AzimuthCut::full_circle(theta, range, 720)
}

fn summarize(
    scene: &ResolvedScenario,
    steering: &dyn Steering,
    res: &OptimizationResult,
    channels: &crate::channel::ChannelSet,
) -> RunRecord {
    let bf = &res.beamformers;
    let noise = &scene.noise;
    let sense: Vec<f64> = (1..=channels.num_targets())
        .map(|l| sense_sinr(TxView::Beams(bf), &bf.q[l - 1], channels, noise, l).unwrap_or(0.0))
        .collect();
    let comm: Vec<f64> = (1..=channels.num_users())
        .map(|k| comm_sinr(TxView::Beams(bf), channels, noise, k).unwrap_or(0.0))
        .collect();
    let cut = comparison_cut(scene);
    let w = bf.w();
    let tx_peak = transmit_cut_peak(steering, &w, &cut).unwrap_or(0.0);
    let rx_peaks: Vec<f64> = bf
        .q
        .iter()
        .map(|q| receive_cut_peak(steering, q, &cut).unwrap_or(0.0))
        .collect();
    RunRecord {
        converged: matches!(res.status, AoStatus::Converged),
        outer_iterations: res.iteration_trace.len(),
        sdp_calls: res.total_sdp_calls(),
        gamma_r_star: res.gamma_r_star,
        sense_sinr: sense,
        comm_sinr: comm,
        tx_peak,
        rx_peaks,
    }
}

fn run_metrics(key: &str, rec: &RunRecord) -> RunMetrics {
    RunMetrics {
        scenario_key: key.to_string(),
        min_sense_sinr: rec.sense_sinr.iter().cloned().fold(f64::INFINITY, f64::min),
        comm_sinr: rec.comm_sinr.clone(),
        tx_peak: rec.tx_peak,
        rx_peaks: rec.rx_peaks.clone(),
    }
}

struct SolvedPoint {
    record: RunRecord,
    result: OptimizationResult,
}

fn solve_surface(scene: &ResolvedScenario) -> Result<SolvedPoint, String> {
    let inst = scene.surface_instance().map_err(|e| e.to_string())?;
    let res = optimize(&inst, &scene.ao_options()).map_err(|e| e.to_string())?;
    let grid = truncation_grid(&scene.aperture);
    let steering = SurfaceSteering { aperture: &scene.aperture, grid: &grid };
    let record = summarize(scene, &steering, &res, &inst.channels);
    Ok(SolvedPoint { record, result: res })
}

fn solve_baseline(scene: &ResolvedScenario) -> Result<(DiscreteArraySpec, SolvedPoint), String> {
    let (spec, inst) = scene.discrete_instance().map_err(|e| e.to_string())?;
    let res = optimize(&inst, &scene.ao_options()).map_err(|e| e.to_string())?;
    let steering = ArraySteering { spec: &spec };
    let record = summarize(scene, &steering, &res, &inst.channels);
    Ok((spec, SolvedPoint { record, result: res }))
}

fn derive_point(
    base: &ResolvedScenario,
    variable: SweepVariable,
    value: f64,
) -> Result<ResolvedScenario, ScenarioError> {
    match variable {
        SweepVariable::PowerBudget => Ok(base.with_power_si(value * 1e-6)),
        SweepVariable::ApertureArea => base.with_square_area(value),
        SweepVariable::GammaC => Ok(base.with_gamma_c_db(value)),
        SweepVariable::DeltaTheta => Ok(base.clone()),
    }
}

/// Run the sweep. For `DeltaTheta` the beamformers are optimized once at the
/// nominal angles and each grid point re-evaluates the SINRs against the
/// perturbed true channels without re-optimizing.
pub fn run_sweep(base: &ResolvedScenario, spec: &SweepSpec) -> Result<ReportBundle, SweepError> {
    spec.validate()?;
    crate::configure_blas_single_thread();

    let points: Vec<PointOutcome> = if spec.variable == SweepVariable::DeltaTheta {
        run_delta_theta(base, spec)
    } else {
        spec.grid
            .par_iter()
            .enumerate()
            .map(|(index, &value)| {
                let scene = match derive_point(base, spec.variable, value) {
                    Ok(s) => s,
                    Err(e) => {
                        return PointOutcome {
                            index,
                            value,
                            surface: Err(e.to_string()),
                            baseline: spec.include_baseline.then(|| Err(e.to_string())),
                            gain: None,
                        }
                    }
                };
                let key = scene.scenario_key();
                let surface = solve_surface(&scene).map(|s| s.record);
                let baseline = spec
                    .include_baseline
                    .then(|| solve_baseline(&scene).map(|(_, s)| s.record));
                let gain = match (&surface, &baseline) {
                    (Ok(s), Some(Ok(b))) => {
                        compare_gain(&run_metrics(&key, s), &run_metrics(&key, b))
                            .ok()
                            .map(GainSummary::from)
                    }
                    _ => None,
                };
                PointOutcome { index, value, surface, baseline, gain }
            })
            .collect()
    };

    // Beampattern cuts from the last successfully solved point.
    let beampatterns = cuts_for_last_success(base, spec, &points);

    Ok(ReportBundle {
        format: "holobeam-report/1".into(),
        variable: spec.variable.name().into(),
        grid: spec.grid.clone(),
        include_baseline: spec.include_baseline,
        points,
        beampatterns,
        metadata: RunMetadata {
            version: env!("CARGO_PKG_VERSION").into(),
            seed: base.seed,
            eps1: base.solver.eps1,
            eps2: base.solver.eps2,
            sdp_tol: base.solver.sdp_tol,
            scenario_key: base.scenario_key(),
        },
    })
}

fn run_delta_theta(base: &ResolvedScenario, spec: &SweepSpec) -> Vec<PointOutcome> {
    // One nominal optimization; perturbed evaluation per grid point.
    let surface_nominal = solve_surface(base);
    let baseline_nominal = spec.include_baseline.then(|| solve_baseline(base));

    spec.grid
        .iter()
        .enumerate()
        .map(|(index, &delta)| {
            let perturbed = match base.with_user1_theta_offset(delta) {
                Ok(p) => p,
                Err(e) => {
                    return PointOutcome {
                        index,
                        value: delta,
                        surface: Err(e.to_string()),
                        baseline: spec.include_baseline.then(|| Err(e.to_string())),
                        gain: None,
                    }
                }
            };
            let key = perturbed.scenario_key();
            let reevaluate = |sp: &SolvedPoint, channels: &crate::channel::ChannelSet| -> RunRecord {
                let bf = &sp.result.beamformers;
                let sense: Vec<f64> = (1..=channels.num_targets())
                    .map(|l| {
                        sense_sinr(TxView::Beams(bf), &bf.q[l - 1], channels, &base.noise, l)
                            .unwrap_or(0.0)
                    })
                    .collect();
                let comm: Vec<f64> = (1..=channels.num_users())
                    .map(|k| comm_sinr(TxView::Beams(bf), channels, &base.noise, k).unwrap_or(0.0))
                    .collect();
                RunRecord { sense_sinr: sense, comm_sinr: comm, ..sp.record.clone() }
            };
            let surface = surface_nominal.as_ref().map_err(|e| e.clone()).and_then(|sp| {
                let channels = perturbed.surface_channels().map_err(|e| e.to_string())?;
                Ok(reevaluate(sp, &channels))
            });
            let baseline = baseline_nominal.as_ref().map(|b| {
                b.as_ref().map_err(|e| e.clone()).and_then(|(bspec, sp)| {
                    let channels = crate::baseline::discrete_channel_set(
                        bspec,
                        &perturbed.users,
                        &perturbed.targets,
                    )
                    .map_err(|e| e.to_string())?;
                    Ok(reevaluate(sp, &channels))
                })
            });
            let gain = match (&surface, &baseline) {
                (Ok(s), Some(Ok(b))) => compare_gain(&run_metrics(&key, s), &run_metrics(&key, b))
                    .ok()
                    .map(GainSummary::from),
                _ => None,
            };
            PointOutcome { index, value: delta, surface, baseline, gain }
        })
        .collect()
}

fn cuts_for_last_success(
    base: &ResolvedScenario,
    spec: &SweepSpec,
    points: &[PointOutcome],
) -> Vec<CutRecord> {
    let Some(last_ok) = points.iter().rev().find(|p| p.succeeded()) else {
        return vec![];
    };
    let Ok(scene) = derive_point(base, spec.variable, last_ok.value) else {
        return vec![];
    };
    let Ok(surface) = solve_surface(&scene) else {
        return vec![];
    };
    let baseline = spec.include_baseline.then(|| solve_baseline(&scene).ok()).flatten();

    let cut = comparison_cut(&scene);
    let grid = truncation_grid(&scene.aperture);
    let steer_s = SurfaceSteering { aperture: &scene.aperture, grid: &grid };
    let mut out = Vec::new();

    let w_s = surface.result.beamformers.w();
    let tx_s = transmit_cut(&steer_s, &w_s, &cut, Normalization::None).unwrap_or_default();
    let psi_deg: Vec<f64> = tx_s.iter().map(|(p, _)| *p).collect();
    let tx_b = baseline.as_ref().map(|(bspec, sp)| {
        let steer_b = ArraySteering { spec: bspec };
        transmit_cut(&steer_b, &sp.result.beamformers.w(), &cut, Normalization::None)
            .unwrap_or_default()
            .into_iter()
            .map(|(_, db)| db)
            .collect::<Vec<f64>>()
    });
    out.push(CutRecord {
        label: "tx".into(),
        psi_deg: psi_deg.clone(),
        surface_db: tx_s.into_iter().map(|(_, db)| db).collect(),
        baseline_db: tx_b,
    });

    for l in 0..surface.result.beamformers.q.len() {
        let rx_s = receive_cut(&steer_s, &surface.result.beamformers.q[l], &cut, Normalization::None)
            .unwrap_or_default();
        let rx_b = baseline.as_ref().map(|(bspec, sp)| {
            let steer_b = ArraySteering { spec: bspec };
            receive_cut(&steer_b, &sp.result.beamformers.q[l], &cut, Normalization::None)
                .unwrap_or_default()
                .into_iter()
                .map(|(_, db)| db)
                .collect::<Vec<f64>>()
        });
        out.push(CutRecord {
            label: format!("rx_target{}", l + 1),
            psi_deg: psi_deg.clone(),
            surface_db: rx_s.into_iter().map(|(_, db)| db).collect(),
            baseline_db: rx_b,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        let ok = SweepSpec {
            variable: SweepVariable::PowerBudget,
            grid: vec![1.0, 2.0, 5.0],
            include_baseline: false,
        };
        assert!(ok.validate().is_ok());
        let empty = SweepSpec { grid: vec![], ..ok.clone() };
        assert!(matches!(empty.validate(), Err(SweepError::EmptyGrid)));
        let bad = SweepSpec { grid: vec![1.0, 3.0, 2.0], ..ok };
        assert!(matches!(bad.validate(), Err(SweepError::NonMonotoneGrid)));
    }
}
