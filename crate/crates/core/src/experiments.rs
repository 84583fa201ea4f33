//! Scenario runners: Gamma sweeps comparing the full propagation with the
//! two-state interference theory, the dephasing-recovery study, and the
//! large-Gamma (Zeno) probe with its four-level reference.

use nalgebra::Vector4;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::adiabatic::{branching_ratio_theory, integrate_two_level, theory_yields};
use crate::dephasing::{ensemble_run, DephasingError, EnsembleResult};
use crate::model::{ModelError, PulseSet, SimConfig};
use crate::ode::{Integrator, OdeError, Settings};
use crate::propagator::{
    basis_state, final_branching, propagate, rate_scale, BranchingRatio, PropagationError,
    BRANCHING_FLOOR,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("gamma grid is empty")]
    EmptyGrid,
    #[error("gamma grid must be strictly increasing and ≥ 0 (entry {index}: {value})")]
    BadGrid { index: usize, value: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Dephasing(#[from] DephasingError),
    #[error(transparent)]
    Integration(#[from] OdeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactPoint {
    pub p3: f64,
    pub p4: f64,
    pub branching: BranchingRatio,
    pub max_p2: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryPoint {
    pub p3: f64,
    pub p4: f64,
    pub branching: BranchingRatio,
    pub c1: Complex64,
    pub c2: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub gamma: f64,
    pub exact: Option<ExactPoint>,
    pub theory: Option<TheoryPoint>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub scenario: String,
    pub rows: Vec<SweepRow>,
}

/// Largest theory-vs-exact gap in `(P3, P4)` over rows with `lo <= gamma <= hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agreement {
    pub max_dev_p3: f64,
    pub max_dev_p4: f64,
    pub worst_gamma: f64,
    pub points: usize,
}

impl SweepResult {
    pub fn agreement(&self, lo: f64, hi: f64) -> Agreement {
        let mut out = Agreement {
            max_dev_p3: 0.0,
            max_dev_p4: 0.0,
            worst_gamma: f64::NAN,
            points: 0,
        };
        let mut worst = -1.0;
        for row in self.rows.iter().filter(|r| r.gamma >= lo && r.gamma <= hi) {
            if let (Some(e), Some(t)) = (&row.exact, &row.theory) {
                let d3 = (e.p3 - t.p3).abs();
                let d4 = (e.p4 - t.p4).abs();
                out.max_dev_p3 = out.max_dev_p3.max(d3);
                out.max_dev_p4 = out.max_dev_p4.max(d4);
                if d3.max(d4) > worst {
                    worst = d3.max(d4);
                    out.worst_gamma = row.gamma;
                }
                out.points += 1;
            }
        }
        out
    }

    /// Row with the smallest exact `P3` (`level = 3`) or `P4` (`level = 4`)
    /// among rows with `lo <= gamma <= hi`.
    pub fn exact_minimum(&self, level: usize, lo: f64, hi: f64) -> Option<&SweepRow> {
        let pick = |e: &ExactPoint| if level == 3 { e.p3 } else { e.p4 };
        self.rows
            .iter()
            .filter(|r| r.gamma >= lo && r.gamma <= hi && r.exact.is_some())
            .min_by(|a, b| {
                pick(a.exact.as_ref().unwrap()).total_cmp(&pick(b.exact.as_ref().unwrap()))
            })
    }
}

/// `points` log-spaced values over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..points)
                .map(|i| {
                    if i + 1 == points {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (points - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// 60 log-spaced points over `Gamma T` in `[1, 3000]`.
pub fn default_gamma_grid() -> Vec<f64> {
    log_grid(1.0, 3000.0, 60)
}

fn check_grid(grid: &[f64]) -> Result<(), ExperimentError> {
    if grid.is_empty() {
        return Err(ExperimentError::EmptyGrid);
    }
    for (i, g) in grid.iter().enumerate() {
        let ordered = i == 0 || *g > grid[i - 1];
        if !g.is_finite() || *g < 0.0 || !ordered {
            return Err(ExperimentError::BadGrid { index: i, value: *g });
        }
    }
    Ok(())
}

fn exact_point(pulses: &PulseSet, config: &SimConfig) -> Result<ExactPoint, PropagationError> {
    let rec = propagate(pulses, config, None, &basis_state(1))?;
    let fin = rec.final_populations();
    Ok(ExactPoint {
        p3: fin[2],
        p4: fin[3],
        branching: final_branching(&rec, BRANCHING_FLOOR),
        max_p2: rec.max_intermediate(),
        norm: *rec.norm.last().expect("samples"),
    })
}

/// Two-state prediction; `gamma = 0` is the pure adiabatic limit `c1 = 1, c2 = 0`.
pub fn theory_point(pulses: &PulseSet, gamma: f64, config: &SimConfig) -> Result<TheoryPoint, String> {
    let (c1, c2) = if gamma == 0.0 {
        (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
    } else {
        let fin = integrate_two_level(pulses, gamma, config.window, config.tolerance)
            .map_err(|e| e.to_string())?
            .final_state();
        (fin.c1, fin.c2)
    };
    let (p3, p4) = theory_yields(c1, c2, pulses);
    Ok(TheoryPoint {
        p3,
        p4,
        branching: branching_ratio_theory(c1, c2, pulses),
        c1,
        c2,
    })
}

/// Exact and theory final populations at each `Gamma T` in `grid`.
///
/// Points run in parallel on the current rayon pool; a failure is recorded on
/// its row and the sweep continues.
pub fn gamma_sweep(
    pulses: &PulseSet,
    grid: &[f64],
    config: &SimConfig,
    scenario: &str,
) -> Result<SweepResult, ExperimentError> {
    check_grid(grid)?;
    config.validate_for(pulses)?;
    let rows = grid
        .par_iter()
        .map(|&gamma| {
            let cfg = config.with_gamma(gamma);
            let mut errors = Vec::new();
            let exact = exact_point(pulses, &cfg)
                .map_err(|e| errors.push(format!("exact: {e}")))
                .ok();
            let theory = theory_point(pulses, gamma, &cfg)
                .map_err(|e| errors.push(format!("theory: {e}")))
                .ok();
            SweepRow {
                gamma,
                exact,
                theory,
                error: (!errors.is_empty()).then(|| errors.join("; ")),
            }
        })
        .collect();
    Ok(SweepResult {
        scenario: scenario.to_string(),
        rows,
    })
}

/// One dephasing ensemble per `Gamma T` in `gammas`, in order.
pub fn dephasing_study(
    pulses: &PulseSet,
    gammas: &[f64],
    config: &SimConfig,
) -> Result<Vec<EnsembleResult>, ExperimentError> {
    gammas
        .iter()
        .map(|&g| ensemble_run(pulses, &config.with_gamma(g)).map_err(Into::into))
        .collect()
}

/// Final `(P3, P4)` of the four-level system obtained by deleting the branch state.
pub fn four_level_oracle(pulses: &PulseSet, config: &SimConfig) -> Result<(f64, f64), ExperimentError> {
    config.validate_for(pulses)?;
    let rhs = |xi: f64, c: &Vector4<Complex64>| {
        let r = pulses.envelopes(xi);
        let mi = |z: Complex64| Complex64::new(z.im, -z.re);
        Vector4::new(
            mi(c[1] * r.p),
            mi(c[0] * r.p + c[2] * r.s3 + c[3] * r.s4),
            mi(c[1] * r.s3),
            mi(c[1] * r.s4),
        )
    };
    let mut integrator = Integrator::<4>::new(Settings::new(
        config.tolerance,
        config.max_step,
        rate_scale(pulses, config),
    ));
    let mut c = Vector4::new(
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
    );
    integrator.advance(&rhs, &Vector4::zeros(), config.window.start, config.window.end, &mut c)?;
    Ok((c[2].norm_sqr(), c[3].norm_sqr()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZenoPoint {
    pub gamma: f64,
    pub p3: f64,
    pub p4: f64,
    pub branching: BranchingRatio,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZenoProbe {
    pub points: Vec<ZenoPoint>,
    pub four_level_p3: f64,
    pub four_level_p4: f64,
    pub four_level_branching: f64,
    /// `B(Gamma -> inf)` from a linear fit in `1/Gamma` through the last two points.
    pub extrapolated: f64,
    /// Whether `|B - B_4level|` shrinks at every step of the grid.
    pub monotone: bool,
}

/// Multiples of `(max peak)^2` probed by [`zeno_limit_probe`].
pub const ZENO_MULTIPLIERS: [f64; 4] = [0.1, 1.0, 10.0, 100.0];

/// Propagates at `Gamma T = m (max peak)^2` for each `m` in [`ZENO_MULTIPLIERS`]
/// and compares with the four-level reference.
pub fn zeno_limit_probe(pulses: &PulseSet, config: &SimConfig) -> Result<ZenoProbe, ExperimentError> {
    let omega_sq = pulses.max_peak().powi(2);
    let gammas: Vec<f64> = ZENO_MULTIPLIERS.iter().map(|m| m * omega_sq).collect();
    let points = gammas
        .par_iter()
        .map(|&g| {
            let e = exact_point(pulses, &config.with_gamma(g))?;
            Ok(ZenoPoint {
                gamma: g,
                p3: e.p3,
                p4: e.p4,
                branching: e.branching,
            })
        })
        .collect::<Result<Vec<_>, PropagationError>>()?;
    let (q3, q4) = four_level_oracle(pulses, config)?;
    let reference = q3 / q4;
    let gaps: Vec<f64> = points
        .iter()
        .map(|p| (p.branching.value() - reference).abs())
        .collect();
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0]);
    let n = points.len();
    let extrapolated = if n >= 2 {
        let (a, b) = (&points[n - 2], &points[n - 1]);
        let (ba, bb) = (a.branching.value(), b.branching.value());
        (b.gamma * bb - a.gamma * ba) / (b.gamma - a.gamma)
    } else {
        points.last().map_or(f64::NAN, |p| p.branching.value())
    };
    Ok(ZenoProbe {
        points,
        four_level_p3: q3,
        four_level_p4: q4,
        four_level_branching: reference,
        extrapolated,
        monotone,
    })
}
