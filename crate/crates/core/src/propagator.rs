//! Direct integration of `i dpsi/dxi = T H(xi) psi` for the full five-level system.
//!
//! The diagonal of `H` (measurement loss, product decay, level noise) is applied
//! exactly through the integrating factor of [`crate::ode`]; the laser couplings
//! go through the embedded Runge-Kutta pair. Noise is piecewise constant on its
//! own grid, so steps never straddle a noise refresh or an output sample.

use nalgebra::Vector5;
use num_complex::Complex64;
use sha2::{Digest, Sha256};
use std::fmt;
use thiserror::Error;

use crate::dephasing::NoisePath;
use crate::model::{ModelError, PulseSet, SimConfig};
use crate::ode::{Integrator, OdeError, Settings};

/// Five interaction-picture amplitudes.
pub type StateVector = Vector5<Complex64>;

/// Populations below this are treated as zero when forming `P3/P4`.
pub const BRANCHING_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integration(#[from] OdeError),
    #[error("initial state must be normalized (norm^2 = {0})")]
    InitialNorm(f64),
    #[error("noise path does not cover the integration window")]
    NoiseCoverage,
}

/// `|k>` for `k` in `1..=5`.
pub fn basis_state(k: usize) -> StateVector {
    assert!((1..=5).contains(&k), "levels are numbered 1..=5");
    let mut v = StateVector::zeros();
    v[k - 1] = Complex64::new(1.0, 0.0);
    v
}

/// `|c_k|^2`, without renormalization.
pub fn populations(state: &StateVector) -> [f64; 5] {
    std::array::from_fn(|k| state[k].norm_sqr())
}

/// Final `P3/P4` with explicit markers for the degenerate cases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BranchingRatio {
    Finite(f64),
    /// Denominator vanished, numerator did not.
    Infinite,
    /// Both vanished.
    Indeterminate,
}

impl BranchingRatio {
    pub fn from_parts(num: f64, den: f64, floor: f64) -> Self {
        match (num >= floor, den >= floor) {
            (_, true) => BranchingRatio::Finite(num / den),
            (true, false) => BranchingRatio::Infinite,
            (false, false) => BranchingRatio::Indeterminate,
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            BranchingRatio::Finite(v) => *v,
            BranchingRatio::Infinite => f64::INFINITY,
            BranchingRatio::Indeterminate => f64::NAN,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, BranchingRatio::Finite(_))
    }
}

impl fmt::Display for BranchingRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BranchingRatio::Finite(v) => write!(f, "{}", crate::output::fmt_num(*v)),
            BranchingRatio::Infinite => f.write_str("inf"),
            BranchingRatio::Indeterminate => f.write_str("nan"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub xi: Vec<f64>,
    pub populations: Vec<[f64; 5]>,
    /// Total remaining population `sum_k |c_k|^2`.
    pub norm: Vec<f64>,
    pub final_state: StateVector,
    /// First 16 hex digits of a SHA-256 over the pulses and configuration.
    pub config_hash: String,
    pub seed: Option<(u64, u64)>,
    pub accepted_steps: usize,
}

impl TrajectoryRecord {
    pub fn final_populations(&self) -> [f64; 5] {
        *self.populations.last().expect("record has samples")
    }

    /// Largest sampled intermediate-state population.
    pub fn max_intermediate(&self) -> f64 {
        self.populations.iter().map(|p| p[1]).fold(0.0, f64::max)
    }
}

/// `P3/P4` at the end of the record.
pub fn final_branching(record: &TrajectoryRecord, floor: f64) -> BranchingRatio {
    let p = record.final_populations();
    BranchingRatio::from_parts(p[2], p[3], floor)
}

pub fn config_hash(pulses: &PulseSet, config: &SimConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("{pulses:?}|{config:?}").as_bytes());
    hasher
        .finalize()
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Off-diagonal part of `-i H` applied to `psi`.
#[inline]
fn coupling_rhs(pulses: &PulseSet, xi: f64, psi: &StateVector) -> StateVector {
    let r = pulses.envelopes(xi);
    let mi = |z: Complex64| Complex64::new(z.im, -z.re);
    StateVector::new(
        mi(psi[1] * r.p),
        mi(psi[0] * r.p + psi[2] * r.s3 + psi[3] * r.s4),
        mi(psi[1] * r.s3 + psi[4] * r.b3),
        mi(psi[1] * r.s4 + psi[4] * r.b4),
        mi(psi[2] * r.b3 + psi[3] * r.b4),
    )
}

/// Uniform output grid over the window, both endpoints included.
pub fn sample_grid(config: &SimConfig) -> Vec<f64> {
    let n = config.output_samples;
    let w = config.window;
    (0..n)
        .map(|i| {
            if i + 1 == n {
                w.end
            } else {
                w.start + w.len() * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

pub(crate) fn rate_scale(pulses: &PulseSet, config: &SimConfig) -> f64 {
    let peaks = pulses.peaks().iter().map(|p| p * p).sum::<f64>().sqrt();
    let decay = config.gamma + config.product_decay.iter().sum::<f64>();
    peaks.max(decay).max(3.0 * config.dephasing.delta).max(1.0)
}

/// Integrates the full Hamiltonian over `config.window`, starting from `initial`.
pub fn propagate(
    pulses: &PulseSet,
    config: &SimConfig,
    noise: Option<&NoisePath>,
    initial: &StateVector,
) -> Result<TrajectoryRecord, PropagationError> {
    config.validate_for(pulses)?;
    let n0 = initial.norm_squared();
    if (n0 - 1.0).abs() > 1e-10 {
        return Err(PropagationError::InitialNorm(n0));
    }
    let w = config.window;
    if let Some(path) = noise {
        if path.grid.start > w.start || path.grid.end() < w.end {
            return Err(PropagationError::NoiseCoverage);
        }
    }
    let samples = sample_grid(config);
    let base = config.dissipative_diagonal();
    let mut integrator = Integrator::<5>::new(Settings::new(
        config.tolerance,
        config.max_step,
        rate_scale(pulses, config),
    ));
    let rhs = |xi: f64, psi: &StateVector| coupling_rhs(pulses, xi, psi);

    let mut record = TrajectoryRecord {
        xi: Vec::with_capacity(samples.len()),
        populations: Vec::with_capacity(samples.len()),
        norm: Vec::with_capacity(samples.len()),
        final_state: *initial,
        config_hash: config_hash(pulses, config),
        seed: noise.map(|p| (p.seed.master, p.seed.realization)),
        accepted_steps: 0,
    };
    let push = |rec: &mut TrajectoryRecord, xi: f64, psi: &StateVector| {
        let p = populations(psi);
        rec.xi.push(xi);
        rec.norm.push(p.iter().sum());
        rec.populations.push(p);
    };

    let mut psi = *initial;
    let mut xi = w.start;
    push(&mut record, xi, &psi);
    let mut next_sample = 1;
    // Index of the noise cell containing `xi`.
    let mut cell = noise.map(|p| p.grid.cell_of(xi)).unwrap_or(0);
    let snap = 1e-12 * w.len().max(1.0);
    while next_sample < samples.len() {
        let ts = samples[next_sample];
        let tn = noise.map_or(f64::INFINITY, |p| p.grid.point(cell + 1));
        let target = if (ts - tn).abs() <= snap { ts } else { ts.min(tn) };
        let mut diag = base;
        if let Some(path) = noise {
            let dw = path.diagonal(cell);
            for k in 0..5 {
                diag[k] += Complex64::new(dw[k], 0.0);
            }
        }
        integrator.advance(&rhs, &diag, xi, target, &mut psi)?;
        xi = target;
        if tn - xi <= snap {
            cell += 1;
        }
        if ts - xi <= snap {
            push(&mut record, ts, &psi);
            next_sample += 1;
        }
    }
    record.final_state = psi;
    record.accepted_steps = integrator.accepted_steps();
    Ok(record)
}
