//! Pulse envelopes and the five-level Hamiltonian.
//!
//! Levels are indexed 1..=5 in the physics and 0..=4 in storage:
//!
//! ```text
//!   |1> initial --P-- |2> intermediate --S3/S4-- |3>,|4> degenerate targets
//!                                               |3>,|4> --B3/B4-- |5> branch
//! ```
//!
//! Everything is measured in units of the pulse duration `T`: time is the
//! dimensionless `xi = t/T`, Rabi frequencies and rates are `Omega*T`, `Gamma*T`.
//! The Hamiltonian carries the Rabi frequencies without a factor of one half.

use nalgebra::{Matrix5, Vector5};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Complex 5x5 Hamiltonian in units of `1/T`.
pub type Hamiltonian = Matrix5<Complex64>;

/// Largest envelope value (relative to peak) tolerated at a window endpoint.
pub const ENDPOINT_ENVELOPE_LIMIT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{0}")]
    Invalid(String),
    #[error("dephasing vector must have 5 entries, got {0}")]
    DephasingLength(usize),
}

fn invalid(msg: impl Into<String>) -> ModelError {
    ModelError::Invalid(msg.into())
}

/// Gaussian envelope `exp(-prefactor * ((xi - center) / width)^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub center: f64,
    pub width: f64,
    pub prefactor: f64,
}

impl Envelope {
    pub const fn new(center: f64, width: f64, prefactor: f64) -> Self {
        Self {
            center,
            width,
            prefactor,
        }
    }

    /// `exp[-(xi-1)^2]`
    pub const PUMP: Envelope = Envelope::new(1.0, 1.0, 1.0);
    /// `exp[-xi^2]`
    pub const STOKES: Envelope = Envelope::new(0.0, 1.0, 1.0);
    /// `exp[-0.5 (xi-0.5)^2]`
    pub const BRANCH: Envelope = Envelope::new(0.5, 1.0, 0.5);

    #[inline]
    pub fn value(&self, xi: f64) -> f64 {
        let u = (xi - self.center) / self.width;
        (-self.prefactor * u * u).exp()
    }

    fn validate(&self, name: &str) -> Result<(), ModelError> {
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(invalid(format!("{name} envelope width must be > 0")));
        }
        if !(self.prefactor.is_finite() && self.prefactor > 0.0) {
            return Err(invalid(format!("{name} envelope prefactor must be > 0")));
        }
        if !self.center.is_finite() {
            return Err(invalid(format!("{name} envelope center must be finite")));
        }
        Ok(())
    }
}

/// Peak Rabi frequencies (`Omega~ * T`) and envelope shapes of the three pulses.
///
/// The two Stokes couplings share one envelope, as do the two branching couplings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSet {
    pub peak_p: f64,
    pub peak_s3: f64,
    pub peak_s4: f64,
    pub peak_b3: f64,
    pub peak_b4: f64,
    #[serde(default = "default_pump")]
    pub pump: Envelope,
    #[serde(default = "default_stokes")]
    pub stokes: Envelope,
    #[serde(default = "default_branch")]
    pub branch: Envelope,
}

fn default_pump() -> Envelope {
    Envelope::PUMP
}
fn default_stokes() -> Envelope {
    Envelope::STOKES
}
fn default_branch() -> Envelope {
    Envelope::BRANCH
}

impl PulseSet {
    /// Pulse set with the default (counter-intuitively ordered) envelopes.
    pub fn new(peak_p: f64, peak_s3: f64, peak_s4: f64, peak_b3: f64, peak_b4: f64) -> Self {
        Self {
            peak_p,
            peak_s3,
            peak_s4,
            peak_b3,
            peak_b4,
            pump: Envelope::PUMP,
            stokes: Envelope::STOKES,
            branch: Envelope::BRANCH,
        }
    }

    pub fn peaks(&self) -> [f64; 5] {
        [
            self.peak_p,
            self.peak_s3,
            self.peak_s4,
            self.peak_b3,
            self.peak_b4,
        ]
    }

    /// Characteristic Rabi frequency: the largest peak amplitude.
    pub fn max_peak(&self) -> f64 {
        self.peaks().into_iter().fold(0.0, f64::max)
    }

    /// Branching ratio carried by the dark state, `B1 = (B4/B3)^2`.
    pub fn dark_branching(&self) -> f64 {
        (self.peak_b4 / self.peak_b3).powi(2)
    }

    /// Branching ratio carried by the measurement-induced state, `B2 = 1/B1`.
    pub fn bright_branching(&self) -> f64 {
        (self.peak_b3 / self.peak_b4).powi(2)
    }

    /// Branching ratio of the four-level system with the branch state removed.
    pub fn four_level_branching(&self) -> f64 {
        (self.peak_s3 / self.peak_s4).powi(2)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let names = ["peak_p", "peak_s3", "peak_s4", "peak_b3", "peak_b4"];
        for (name, v) in names.iter().zip(self.peaks()) {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(format!("{name} must be ≥ 0")));
            }
        }
        self.pump.validate("pump")?;
        self.stokes.validate("stokes")?;
        self.branch.validate("branch")
    }

    /// Instantaneous Rabi frequencies at `xi`.
    #[inline]
    pub fn envelopes(&self, xi: f64) -> Rabi {
        let p = self.pump.value(xi);
        let s = self.stokes.value(xi);
        let b = self.branch.value(xi);
        Rabi {
            p: self.peak_p * p,
            s3: self.peak_s3 * s,
            s4: self.peak_s4 * s,
            b3: self.peak_b3 * b,
            b4: self.peak_b4 * b,
        }
    }

    /// `Omega_SB = S3*B4 - S4*B3` at `xi`.
    pub fn omega_sb(&self, xi: f64) -> f64 {
        self.envelopes(xi).omega_sb()
    }
}

/// Instantaneous Rabi frequencies in units of `1/T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rabi {
    pub p: f64,
    pub s3: f64,
    pub s4: f64,
    pub b3: f64,
    pub b4: f64,
}

impl Rabi {
    #[inline]
    pub fn omega_sb(&self) -> f64 {
        self.s3 * self.b4 - self.s4 * self.b3
    }

    /// Sum of squares of the five Rabi frequencies.
    #[inline]
    pub fn omega_m_sq(&self) -> f64 {
        self.p * self.p + self.s3 * self.s3 + self.s4 * self.s4 + self.b3 * self.b3 + self.b4 * self.b4
    }

    /// `S3*B3 + S4*B4`, the overlap controlling how strongly bright states see level 5.
    #[inline]
    pub fn stokes_branch_overlap(&self) -> f64 {
        self.s3 * self.b3 + self.s4 * self.b4
    }

    /// Real symmetric `H_r`.
    pub fn resonant_matrix(&self) -> Matrix5<f64> {
        let mut h = Matrix5::zeros();
        let mut set = |i: usize, j: usize, v: f64| {
            h[(i, j)] = v;
            h[(j, i)] = v;
        };
        set(0, 1, self.p);
        set(1, 2, self.s3);
        set(1, 3, self.s4);
        set(2, 4, self.b3);
        set(3, 4, self.b4);
        h
    }
}

/// Simulation window `[start, end]` in units of `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub const DEFAULT: Window = Window {
        start: -5.0,
        end: 6.0,
    };

    pub fn len(&self) -> f64 {
        self.end - self.start
    }
}

impl Default for Window {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Stochastic level-fluctuation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DephasingParams {
    /// Fluctuation amplitude `Delta*T`.
    pub delta: f64,
    /// Correlation time `tau/T`.
    pub tau: f64,
    pub n_realizations: usize,
    pub master_seed: u64,
    /// Noise grid spacing as a fraction of `tau`.
    pub refresh_fraction: f64,
}

impl Default for DephasingParams {
    fn default() -> Self {
        Self {
            delta: 0.0,
            tau: 0.02,
            n_realizations: 1000,
            master_seed: 20031,
            refresh_fraction: 0.1,
        }
    }
}

impl DephasingParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.delta.is_finite() || self.delta < 0.0 {
            return Err(invalid("delta must be ≥ 0"));
        }
        if !self.tau.is_finite() || self.tau < 0.0 {
            return Err(invalid("tau must be ≥ 0"));
        }
        if self.n_realizations == 0 {
            return Err(invalid("n_realizations must be ≥ 1"));
        }
        if !(self.refresh_fraction > 0.0 && self.refresh_fraction <= 1.0) {
            return Err(invalid("refresh_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Noise refresh step in units of `T`.
    pub fn noise_step(&self) -> f64 {
        self.tau * self.refresh_fraction
    }
}

/// Measurement strength, optional product-state decay, integration window and
/// tolerances, and the dephasing block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Measurement strength `Gamma*T`; enters `H` as `-i*Gamma` on level 5.
    pub gamma: f64,
    /// Decay rates `gamma3*T`, `gamma4*T` of the product states.
    pub product_decay: [f64; 2],
    pub window: Window,
    /// Relative tolerance of the adaptive integrators.
    pub tolerance: f64,
    pub max_step: f64,
    /// Number of uniformly spaced output samples, endpoints included.
    pub output_samples: usize,
    pub dephasing: DephasingParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            gamma: 0.0,
            product_decay: [0.0, 0.0],
            window: Window::DEFAULT,
            tolerance: 1e-9,
            max_step: 0.05,
            output_samples: 2000,
            dephasing: DephasingParams::default(),
        }
    }
}

impl SimConfig {
    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    /// Checks the configuration on its own.
    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(invalid("gamma must be ≥ 0"));
        }
        for (name, g) in ["gamma3", "gamma4"].iter().zip(self.product_decay) {
            if !g.is_finite() || g < 0.0 {
                return Err(invalid(format!("{name} decay rate must be ≥ 0")));
            }
        }
        let w = self.window;
        if !(w.start.is_finite() && w.end.is_finite() && w.start < w.end) {
            return Err(invalid("window start must be < window end"));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(invalid("tolerance must lie in (0, 1)"));
        }
        if !(self.max_step > 0.0) {
            return Err(invalid("max_step must be > 0"));
        }
        if self.output_samples < 2 {
            return Err(invalid("output_samples must be ≥ 2"));
        }
        self.dephasing.validate()
    }

    /// Checks the configuration together with the pulses it will drive.
    pub fn validate_for(&self, pulses: &PulseSet) -> Result<(), ModelError> {
        pulses.validate()?;
        self.validate()?;
        let envs = [
            ("pump", pulses.pump),
            ("stokes", pulses.stokes),
            ("branch", pulses.branch),
        ];
        for (name, env) in envs {
            for xi in [self.window.start, self.window.end] {
                let v = env.value(xi);
                if v >= ENDPOINT_ENVELOPE_LIMIT {
                    return Err(invalid(format!(
                        "{name} envelope is {v:.3e} of peak at window endpoint {xi}; must be < 1e-6"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Complex diagonal of the dissipative part: `-i*gamma3`, `-i*gamma4`, `-i*Gamma`.
    pub fn dissipative_diagonal(&self) -> Vector5<Complex64> {
        Vector5::new(
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, -self.product_decay[0]),
            Complex64::new(0.0, -self.product_decay[1]),
            Complex64::new(0.0, -self.gamma),
        )
    }
}

/// Full Hamiltonian `H = H_r + H_Gamma` (+ product decay, + dephasing diagonal).
pub fn assemble_hamiltonian(
    xi: f64,
    pulses: &PulseSet,
    config: &SimConfig,
    dephasing: Option<&[f64]>,
) -> Result<Hamiltonian, ModelError> {
    let mut h: Hamiltonian = pulses
        .envelopes(xi)
        .resonant_matrix()
        .map(|v| Complex64::new(v, 0.0));
    let diag = config.dissipative_diagonal();
    for k in 0..5 {
        h[(k, k)] += diag[k];
    }
    if let Some(d) = dephasing {
        if d.len() != 5 {
            return Err(ModelError::DephasingLength(d.len()));
        }
        for (k, dw) in d.iter().enumerate() {
            h[(k, k)] += Complex64::new(*dw, 0.0);
        }
    }
    Ok(h)
}
