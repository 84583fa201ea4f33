//! Stochastic level fluctuations and Monte Carlo ensembles.
//!
//! Each level energy fluctuates as a stationary Gaussian process with
//! `<dw(t) dw(t')> = Delta^2 exp(-|t - t'|/tau)`, i.e. an Ornstein-Uhlenbeck
//! process, sampled exactly on a uniform grid. Levels 1, 2, 3 and 5 are
//! independent; level 4 copies level 3 so the product states stay degenerate.
//!
//! Every realization draws from its own ChaCha stream keyed on
//! `(master seed, realization, level)`, so results do not depend on scheduling.
//! The ensemble reduction runs over fixed-size chunks in a fixed order, making
//! serial and parallel runs bitwise identical.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{PulseSet, SimConfig, Window};
use crate::propagator::{
    basis_state, propagate, BranchingRatio, PropagationError, TrajectoryRecord, BRANCHING_FLOOR,
};

/// Realizations summed serially before partial sums are combined.
const CHUNK: usize = 16;

/// Largest tolerated fraction of failed realizations.
pub const MAX_FAILURE_FRACTION: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DephasingError {
    #[error("tau must be > 0 for colored noise (got {0})")]
    ZeroTau(f64),
    #[error("delta must be ≥ 0 (got {0})")]
    NegativeDelta(f64),
    #[error("noise grid needs a positive step and at least one point")]
    EmptyGrid,
    #[error("{failed} of {total} realizations failed (first: {first})")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },
    #[error(transparent)]
    Propagation(#[from] PropagationError),
}

/// Uniform noise grid `start + n * step`, `n = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl NoiseGrid {
    /// Smallest grid starting at `window.start` that reaches past `window.end`.
    pub fn covering(window: Window, step: f64) -> Self {
        let cells = (window.len() / step).ceil() as usize;
        Self {
            start: window.start,
            step,
            len: cells + 1,
        }
    }

    #[inline]
    pub fn point(&self, n: usize) -> f64 {
        self.start + n as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.point(self.len.saturating_sub(1))
    }

    /// Index of the cell `[point(n), point(n+1))` containing `xi`.
    pub fn cell_of(&self, xi: f64) -> usize {
        let n = ((xi - self.start) / self.step).floor().max(0.0) as usize;
        n.min(self.len.saturating_sub(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseSeed {
    pub master: u64,
    pub realization: u64,
}

impl From<u64> for NoiseSeed {
    fn from(master: u64) -> Self {
        Self {
            master,
            realization: 0,
        }
    }
}

/// Independent generator for one level of one realization.
pub fn level_rng(seed: NoiseSeed, level: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.master.to_le_bytes());
    key[8..16].copy_from_slice(&seed.realization.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(level);
    rng
}

/// Sampled fluctuations `dw_1, dw_2, dw_3 (= dw_4), dw_5` in units of `1/T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub grid: NoiseGrid,
    pub levels: [Vec<f64>; 4],
    pub seed: NoiseSeed,
}

impl NoisePath {
    /// Diagonal energies of the five levels on grid cell `n`.
    #[inline]
    pub fn diagonal(&self, n: usize) -> [f64; 5] {
        let [l1, l2, l3, l5] = &self.levels;
        [l1[n], l2[n], l3[n], l3[n], l5[n]]
    }
}

/// Exact discretization of a stationary OU process with variance `delta^2` and
/// correlation time `tau`, started from its stationary distribution.
pub fn ou_series(delta: f64, tau: f64, step: f64, len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let decay = (-step / tau).exp();
    let kick = delta * (1.0 - decay * decay).sqrt();
    let mut out = Vec::with_capacity(len);
    let mut x = delta * rng.sample::<f64, _>(StandardNormal);
    for _ in 0..len {
        out.push(x);
        x = x * decay + kick * rng.sample::<f64, _>(StandardNormal);
    }
    out
}

/// Four independent fluctuation paths on `grid`.
pub fn generate_path(
    delta: f64,
    tau: f64,
    grid: NoiseGrid,
    seed: impl Into<NoiseSeed>,
) -> Result<NoisePath, DephasingError> {
    if !(delta >= 0.0) {
        return Err(DephasingError::NegativeDelta(delta));
    }
    if !(tau > 0.0) {
        return Err(DephasingError::ZeroTau(tau));
    }
    if !(grid.step > 0.0) || grid.len == 0 {
        return Err(DephasingError::EmptyGrid);
    }
    let seed = seed.into();
    let levels = std::array::from_fn(|level| {
        if delta == 0.0 {
            vec![0.0; grid.len]
        } else {
            let mut rng = level_rng(seed, level as u64);
            ou_series(delta, tau, grid.step, grid.len, &mut rng)
        }
    });
    Ok(NoisePath { grid, levels, seed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub gamma: f64,
    pub xi: Vec<f64>,
    /// Mean `P1..P5, norm` per sample.
    pub mean: Vec<[f64; 6]>,
    /// Standard error of each mean.
    pub stderr: Vec<[f64; 6]>,
    pub final_p3: f64,
    pub final_p4: f64,
    pub final_p3_stderr: f64,
    pub final_p4_stderr: f64,
    /// Ratio of the ensemble-mean final populations.
    pub branching: BranchingRatio,
    /// Mean of per-realization `P3/P4` over realizations where it is finite.
    pub mean_of_ratios: f64,
    pub realizations: usize,
    pub failures: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone)]
struct Partial {
    sum: Vec<[f64; 6]>,
    sum_sq: Vec<[f64; 6]>,
    ratio_sum: f64,
    ratio_count: usize,
    count: usize,
    failures: Vec<(usize, String)>,
}

impl Partial {
    fn new(samples: usize) -> Self {
        Self {
            sum: vec![[0.0; 6]; samples],
            sum_sq: vec![[0.0; 6]; samples],
            ratio_sum: 0.0,
            ratio_count: 0,
            count: 0,
            failures: Vec::new(),
        }
    }

    fn add(&mut self, rec: &TrajectoryRecord) {
        for ((s, q), (p, n)) in self
            .sum
            .iter_mut()
            .zip(self.sum_sq.iter_mut())
            .zip(rec.populations.iter().zip(&rec.norm))
        {
            let row = [p[0], p[1], p[2], p[3], p[4], *n];
            for k in 0..6 {
                s[k] += row[k];
                q[k] += row[k] * row[k];
            }
        }
        let fin = rec.final_populations();
        if let BranchingRatio::Finite(r) = BranchingRatio::from_parts(fin[2], fin[3], BRANCHING_FLOOR) {
            self.ratio_sum += r;
            self.ratio_count += 1;
        }
        self.count += 1;
    }

    fn merge(mut self, other: Partial) -> Partial {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            for k in 0..6 {
                a[k] += b[k];
            }
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            for k in 0..6 {
                a[k] += b[k];
            }
        }
        self.ratio_sum += other.ratio_sum;
        self.ratio_count += other.ratio_count;
        self.count += other.count;
        self.failures.extend(other.failures);
        self
    }
}

fn run_one(
    pulses: &PulseSet,
    config: &SimConfig,
    index: usize,
) -> Result<TrajectoryRecord, DephasingError> {
    let d = &config.dephasing;
    let noise = if d.delta > 0.0 {
        let grid = NoiseGrid::covering(config.window, d.noise_step());
        let seed = NoiseSeed {
            master: d.master_seed,
            realization: index as u64,
        };
        Some(generate_path(d.delta, d.tau, grid, seed)?)
    } else {
        None
    };
    Ok(propagate(pulses, config, noise.as_ref(), &basis_state(1))?)
}

/// Averages `config.dephasing.n_realizations` noisy propagations.
///
/// Runs on the current rayon pool. With `delta = 0` every realization is the
/// deterministic trajectory.
pub fn ensemble_run(pulses: &PulseSet, config: &SimConfig) -> Result<EnsembleResult, DephasingError> {
    config
        .validate_for(pulses)
        .map_err(PropagationError::from)?;
    let d = config.dephasing;
    if d.delta > 0.0 && !(d.tau > 0.0) {
        return Err(DephasingError::ZeroTau(d.tau));
    }
    let n = d.n_realizations;
    let samples = config.output_samples;
    let chunks: Vec<usize> = (0..n.div_ceil(CHUNK)).collect();
    let partials: Vec<Partial> = chunks
        .par_iter()
        .map(|&c| {
            let mut part = Partial::new(samples);
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                match run_one(pulses, config, i) {
                    Ok(rec) => part.add(&rec),
                    Err(e) => part.failures.push((i, e.to_string())),
                }
            }
            part
        })
        .collect();
    let total = partials
        .into_iter()
        .reduce(Partial::merge)
        .unwrap_or_else(|| Partial::new(samples));

    let failed = total.failures.len();
    if failed > 0 && (failed as f64 > MAX_FAILURE_FRACTION * n as f64 || total.count == 0) {
        let (i, msg) = &total.failures[0];
        return Err(DephasingError::TooManyFailures {
            failed,
            total: n,
            first: format!("realization {i}: {msg}"),
        });
    }
    for (i, msg) in &total.failures {
        log::warn!("realization {i} failed: {msg}");
    }

    let m = total.count as f64;
    let mut mean = Vec::with_capacity(samples);
    let mut stderr = Vec::with_capacity(samples);
    for (s, q) in total.sum.iter().zip(&total.sum_sq) {
        let mut mu = [0.0; 6];
        let mut se = [0.0; 6];
        for k in 0..6 {
            mu[k] = s[k] / m;
            se[k] = if total.count > 1 {
                ((q[k] - m * mu[k] * mu[k]).max(0.0) / (m - 1.0) / m).sqrt()
            } else {
                0.0
            };
        }
        mean.push(mu);
        stderr.push(se);
    }
    let last = *mean.last().expect("at least two samples");
    let last_se = *stderr.last().expect("at least two samples");
    Ok(EnsembleResult {
        gamma: config.gamma,
        xi: crate::propagator::sample_grid(config),
        final_p3: last[2],
        final_p4: last[3],
        final_p3_stderr: last_se[2],
        final_p4_stderr: last_se[3],
        branching: BranchingRatio::from_parts(last[2], last[3], BRANCHING_FLOOR),
        mean_of_ratios: if total.ratio_count > 0 {
            total.ratio_sum / total.ratio_count as f64
        } else {
            f64::NAN
        },
        mean,
        stderr,
        realizations: total.count,
        failures: failed,
        master_seed: d.master_seed,
    })
}
