//! Report emission: one CSV row per sweep point and system, a JSON summary
//! with full metadata, and beampattern CSVs.
//!
//! Output is byte-stable across reruns with identical inputs: float fields
//! use fixed scientific formatting, list fields are semicolon-joined, and
//! record ordering follows the grid.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::scenario::linear_to_db;
use crate::sweep::{PointOutcome, ReportBundle, RunRecord};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("summary serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

fn fmt_db(linear: f64) -> String {
    if linear > 0.0 {
        format!("{:.10e}", linear_to_db(linear))
    } else {
        String::from("-inf")
    }
}

fn join_db(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_db(v)).collect::<Vec<_>>().join(";")
}

fn write_file(path: &Path, contents: &str) -> Result<(), ReportError> {
    std::fs::write(path, contents).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn sweep_row(out: &mut String, point: &PointOutcome, system: &str, rec: &Result<RunRecord, String>, bundle: &ReportBundle) {
    match rec {
        Ok(r) => {
            let gain = point.gain.as_ref();
            writeln!(
                out,
                "{},{:.10e},{},ok,{},{},{},{},{},{},{},{},{},{}",
                point.index,
                point.value,
                system,
                if r.converged { "converged" } else { "max_iter" },
                r.outer_iterations,
                r.sdp_calls,
                fmt_db(r.gamma_r_star),
                join_db(&r.sense_sinr),
                join_db(&r.comm_sinr),
                fmt_db(r.tx_peak),
                join_db(&r.rx_peaks),
                gain.map(|g| format!("{:.10e}", g.min_sense_db)).unwrap_or_default(),
                gain.map(|g| format!("{:.10e}", g.tx_peak_db)).unwrap_or_default(),
            )
            .expect("string write");
            let _ = bundle;
        }
        Err(e) => {
            writeln!(
                out,
                "{},{:.10e},{},error,{},,,,,,,,,",
                point.index,
                point.value,
                system,
                e.replace(',', ";").replace('\n', " "),
            )
            .expect("string write");
        }
    }
}

/// Emit the selected formats into `out_dir`, returning the created paths.
/// File naming: `sweep.csv`, `summary.json`, `beampattern_tx.csv`,
/// `beampattern_rx_target{l}.csv`.
pub fn emit_reports(
    bundle: &ReportBundle,
    out_dir: &Path,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();

    if formats.contains(&ReportFormat::Csv) {
        let mut csv = String::from(
            "point_index,value,system,run,status,outer_iterations,sdp_calls,min_sense_db,\
             sense_db,comm_db,tx_peak_db,rx_peaks_db,gain_min_sense_db,gain_tx_peak_db\n",
        );
        for point in &bundle.points {
            sweep_row(&mut csv, point, "surface", &point.surface, bundle);
            if let Some(baseline) = &point.baseline {
                sweep_row(&mut csv, point, "discrete", baseline, bundle);
            }
        }
        let path = out_dir.join("sweep.csv");
        write_file(&path, &csv)?;
        written.push(path);

        for cut in &bundle.beampatterns {
            let mut out = String::from("psi_deg,power_db");
            if cut.baseline_db.is_some() {
                out.push_str(",discrete_power_db");
            }
            out.push('\n');
            for (i, psi) in cut.psi_deg.iter().enumerate() {
                write!(out, "{:.6},{:.10e}", psi, cut.surface_db[i]).expect("string write");
                if let Some(b) = &cut.baseline_db {
                    write!(out, ",{:.10e}", b[i]).expect("string write");
                }
                out.push('\n');
            }
            let path = out_dir.join(format!("beampattern_{}.csv", cut.label));
            write_file(&path, &out)?;
            written.push(path);
        }
    }

    if formats.contains(&ReportFormat::Json) {
        let path = out_dir.join("summary.json");
        let json = serde_json::to_string_pretty(bundle)?;
        write_file(&path, &json)?;
        written.push(path);
    }

    Ok(written)
}

/// Convenience: both formats.
pub fn emit_all(bundle: &ReportBundle, out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    emit_reports(bundle, out_dir, &[ReportFormat::Csv, ReportFormat::Json])
}
