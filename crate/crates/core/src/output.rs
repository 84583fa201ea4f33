//! CSV and summary writers. Numbers are written with 12 significant digits in
//! scientific notation so outputs diff cleanly across platforms.

use std::io::{self, Write};

use crate::dephasing::EnsembleResult;
use crate::experiments::SweepResult;
use crate::propagator::TrajectoryRecord;

pub const TRAJECTORY_HEADER: &str = "xi,P1,P2,P3,P4,P5,norm";

/// 12 significant digits, scientific notation; `inf`, `-inf` and `nan` spelled out.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.11e}")
    }
}

fn write_row<W: Write>(w: &mut W, xi: f64, cols: &[f64]) -> io::Result<()> {
    write!(w, "{}", fmt_num(xi))?;
    for c in cols {
        write!(w, ",{}", fmt_num(*c))?;
    }
    writeln!(w)
}

pub fn write_trajectory_csv<W: Write>(w: &mut W, record: &TrajectoryRecord) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for ((xi, p), n) in record.xi.iter().zip(&record.populations).zip(&record.norm) {
        write_row(w, *xi, &[p[0], p[1], p[2], p[3], p[4], *n])?;
    }
    Ok(())
}

/// Ensemble means, same layout as a single trajectory.
pub fn write_ensemble_mean_csv<W: Write>(w: &mut W, result: &EnsembleResult) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for (xi, m) in result.xi.iter().zip(&result.mean) {
        write_row(w, *xi, m)?;
    }
    Ok(())
}

/// Standard errors of the ensemble means.
pub fn write_ensemble_stderr_csv<W: Write>(w: &mut W, result: &EnsembleResult) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for (xi, s) in result.xi.iter().zip(&result.stderr) {
        write_row(w, *xi, s)?;
    }
    Ok(())
}

pub const SWEEP_HEADER: &str =
    "gamma,P3_exact,P4_exact,B_exact,P3_theory,P4_theory,B_theory,maxP2_exact,norm_exact,error";

pub fn write_sweep_csv<W: Write>(w: &mut W, sweep: &SweepResult) -> io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    let nan = f64::NAN;
    for row in &sweep.rows {
        let (p3e, p4e, be, p2, ne) = row
            .exact
            .as_ref()
            .map(|e| (e.p3, e.p4, e.branching.value(), e.max_p2, e.norm))
            .unwrap_or((nan, nan, nan, nan, nan));
        let (p3t, p4t, bt) = row
            .theory
            .as_ref()
            .map(|t| (t.p3, t.p4, t.branching.value()))
            .unwrap_or((nan, nan, nan));
        write!(w, "{}", fmt_num(row.gamma))?;
        for c in [p3e, p4e, be, p3t, p4t, bt, p2, ne] {
            write!(w, ",{}", fmt_num(c))?;
        }
        // Errors are free text; keep the row one CSV record.
        let err = row.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(w, ",{err}")?;
    }
    Ok(())
}
