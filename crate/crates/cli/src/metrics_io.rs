//! CSV import/export for metric records and profile curves.
//!
//! Metrics schema (one row per problem × solver):
//! `problem,solver,solved,i_stop,r_pen,r_dual,r_ncp,r_nat,t_solve,t_iter`
//! with `r_pen = nan` for offline sample solves (no configuration data).

use crate::error::CliError;
use dualfd::bench::{MetricsRecord, ProfileCurve};
use std::io::Write;
use std::path::Path;

pub const METRICS_HEADER: &str = "problem,solver,solved,i_stop,r_pen,r_dual,r_ncp,r_nat,t_solve,t_iter";

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Result<(), CliError> {
    let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    writeln!(f, "{METRICS_HEADER}").map_err(|e| CliError::io(path, e))?;
    for r in records {
        writeln!(
            f,
            "{},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.problem, r.solver, r.solved, r.i_stop, r.r_pen, r.r_dual, r.r_ncp, r.r_nat,
            r.t_solve, r.t_iter
        )
        .map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut records = Vec::new();
    let parse_err = |line: usize, message: &str| CliError::MetricsCsv {
        path: path.display().to_string(),
        line,
        message: message.to_string(),
    };
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != METRICS_HEADER {
                return Err(parse_err(1, "unexpected header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 10 {
            return Err(parse_err(i + 1, "expected 10 columns"));
        }
        let fval = |s: &str, line: usize| -> Result<f64, CliError> {
            s.parse::<f64>().map_err(|_| parse_err(line, "bad float"))
        };
        records.push(MetricsRecord {
            problem: cols[0].to_string(),
            solver: cols[1].to_string(),
            solved: cols[2] == "true",
            i_stop: cols[3].parse().map_err(|_| parse_err(i + 1, "bad count"))?,
            r_pen: fval(cols[4], i + 1)?,
            r_dual: fval(cols[5], i + 1)?,
            r_ncp: fval(cols[6], i + 1)?,
            r_nat: fval(cols[7], i + 1)?,
            t_solve: fval(cols[8], i + 1)?,
            t_iter: fval(cols[9], i + 1)?,
        });
    }
    Ok(records)
}

/// Wide-format profile CSV: `tau` column followed by one `rho` column per
/// solver.
pub fn write_profiles(path: &Path, curves: &[ProfileCurve]) -> Result<(), CliError> {
    let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut header = String::from("tau");
    for c in curves {
        header.push(',');
        header.push_str(&c.solver);
    }
    writeln!(f, "{header}").map_err(|e| CliError::io(path, e))?;
    if curves.is_empty() {
        return Ok(());
    }
    for (i, &tau) in curves[0].tau.iter().enumerate() {
        let mut line = format!("{tau:e}");
        for c in curves {
            line.push_str(&format!(",{:e}", c.rho[i]));
        }
        writeln!(f, "{line}").map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}
