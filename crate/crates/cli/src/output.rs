//! Run artifacts: diagnostic CSV, JSON summary and raw state snapshots.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use casimir_lab::dynamics::DiagnosticSeries;
use casimir_lab::poisson::StateVector;
use serde_json::{json, Value};

use crate::config::GridSpec;
use crate::presets::{Expectation, Report};

pub const SNAPSHOT_MAGIC: &str = "CASIMIR-LAB-SNAPSHOT 1";

/// `t,<labels>` followed by one row per sample in `{:.16e}` format.
pub fn series_csv(series: &DiagnosticSeries) -> String {
    let mut out = String::from("t");
    for label in &series.labels {
        out.push(',');
        out.push_str(label);
    }
    out.push('\n');
    for (s, t) in series.times.iter().enumerate() {
        out.push_str(&format!("{t:.16e}"));
        for column in &series.values {
            out.push_str(&format!(",{:.16e}", column[s]));
        }
        out.push('\n');
    }
    out
}

pub fn summary_json(report: &Report) -> Value {
    let functionals: Vec<Value> = report
        .functionals
        .iter()
        .map(|f| {
            let (threshold, relative) = match f.expectation {
                Expectation::Conserved { tol, relative } => (Some(tol), Some(relative)),
                _ => (None, None),
            };
            json!({
                "label": f.label,
                "status": f.expectation.status(),
                "initial": f.initial,
                "final": f.last,
                "max_abs_drift": f.max_abs_drift,
                "max_relative_drift": f.max_relative_drift,
                "threshold": threshold,
                "threshold_is_relative": relative,
                "pass": f.pass,
            })
        })
        .collect();
    let checks: Vec<Value> = report
        .checks
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "value": c.value,
                "comparison": c.comparison.symbol(),
                "threshold": c.threshold,
                "pass": c.pass,
            })
        })
        .collect();
    let failure = report.failure.as_ref().map(|f| json!({ "step": f.step, "time": f.time, "message": f.message }));
    json!({
        "preset": report.config.preset.name(),
        "config": report.config,
        "steps": report.steps,
        "functionals": functionals,
        "metrics": report.metrics,
        "checks": checks,
        "failure": failure,
        "wall_time_s": report.wall_time_s,
        "pass": report.passed(),
    })
}

fn grid_line(grid: &GridSpec, state: &StateVector) -> String {
    match grid {
        GridSpec::Plane { nx, ny, lx, ly } => format!("grid plane {nx} {ny} {lx:.17e} {ly:.17e}"),
        GridSpec::Line { n, l } => format!("grid line {n} {l:.17e}"),
        GridSpec::None => format!("grid points {}", state.components().first().map_or(0, |c| c.len())),
    }
}

/// ASCII header terminated by `END\n`, then every component as little-endian
/// `f64` in component-major order (row-major within a 2D field).
pub fn snapshot_bytes(state: &StateVector, grid: &GridSpec, time: f64) -> Vec<u8> {
    let header = format!(
        "{SNAPSHOT_MAGIC}\ntag {:?}\n{}\ncomponents {}\ntime {time:.17e}\nendianness little\nEND\n",
        state.tag(),
        grid_line(grid, state),
        state.component_names().join(" "),
    );
    let mut bytes = header.into_bytes();
    for component in state.components() {
        for v in component {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

/// Writes the artifacts of a run into `<out_dir>/<preset>/` and returns that directory.
pub fn write_artifacts(report: &Report) -> io::Result<PathBuf> {
    let dir = report.config.out_dir.join(report.config.preset.name());
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("series.csv"), series_csv(&report.series))?;
    let mut summary = serde_json::to_string_pretty(&summary_json(report)).map_err(io::Error::other)?;
    summary.push('\n');
    fs::write(dir.join("summary.json"), summary)?;
    if report.config.snapshots {
        let dt = report.config.dt;
        if let Some(z) = &report.initial_state {
            write_snapshot(&dir.join("state_initial.bin"), z, &report.config.grid, 0.0)?;
        }
        if let Some(z) = &report.final_state {
            let time = report.failure.as_ref().map_or(report.steps as f64 * dt, |f| f.time);
            write_snapshot(&dir.join("state_final.bin"), z, &report.config.grid, time)?;
        }
    }
    Ok(dir)
}

fn write_snapshot(path: &Path, z: &StateVector, grid: &GridSpec, time: f64) -> io::Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&snapshot_bytes(z, grid, time))
}

/// Plain-text digest for the terminal.
pub fn summary_text(report: &Report) -> String {
    let mut out = format!("preset {} ({} steps, {:.2}s)\n", report.config.preset, report.steps, report.wall_time_s);
    for f in &report.functionals {
        let mark = if f.pass { "ok  " } else { "FAIL" };
        out.push_str(&format!(
            "  {mark} {:<14} {:<26} rel drift {:.3e}  abs drift {:.3e}",
            f.label,
            f.expectation.status(),
            f.max_relative_drift,
            f.max_abs_drift
        ));
        if let Expectation::Conserved { tol, relative } = f.expectation {
            out.push_str(&format!("  (limit {tol:.0e} {})", if relative { "rel" } else { "abs" }));
        }
        out.push('\n');
    }
    for c in &report.checks {
        let mark = if c.pass { "ok  " } else { "FAIL" };
        out.push_str(&format!("  {mark} {} = {:.6e} (want {} {:e})\n", c.name, c.value, c.comparison.symbol(), c.threshold));
    }
    if let Some(f) = &report.failure {
        out.push_str(&format!("  step {} starting at t = {} failed: {}\n", f.step + 1, f.time, f.message));
    }
    out.push_str(if report.passed() { "PASS\n" } else { "FAIL\n" });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use casimir_lab::field::{Field1D, Grid1D};

    #[test]
    fn csv_has_header_and_rows() {
        let mut s = DiagnosticSeries::new(vec!["a".into(), "b".into()]);
        s.push(0.0, vec![1.0, 2.0]).unwrap();
        s.push(0.5, vec![1.5, -2.0]).unwrap();
        let csv = series_csv(&s);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,a,b");
        assert_eq!(lines.len(), 3);
        let row: Vec<f64> = lines[2].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row, vec![0.5, 1.5, -2.0]);
    }

    #[test]
    fn snapshot_round_trips_payload() {
        let grid = Grid1D::new(8, 1.0).unwrap();
        let w = Field1D::from_fn(grid, |x| x * x - 0.25).unwrap();
        let z = StateVector::kdv(w.clone());
        let bytes = snapshot_bytes(&z, &GridSpec::Line { n: 8, l: 1.0 }, 0.25);
        let end = bytes.windows(4).position(|win| win == b"END\n").unwrap() + 4;
        let header = std::str::from_utf8(&bytes[..end]).unwrap();
        assert!(header.starts_with(SNAPSHOT_MAGIC));
        assert!(header.contains("components w\n"));
        let payload: Vec<f64> =
            bytes[end..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        assert_eq!(payload, w.values());
    }
}
