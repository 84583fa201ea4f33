//! Measurement-assisted control of the branching ratio between two degenerate
//! product states in the five-level Kobrak-Rice STIRAP scheme.
//!
//! A continuous population measurement of the branch state `|5>` is modelled by
//! an effective decay `-i Gamma` on that level. The crate provides
//!
//! * [`model`]: pulse envelopes and the time-dependent Hamiltonian,
//! * [`eigen`]: closed-form and perturbative eigensystems plus a dense oracle,
//! * [`adiabatic`]: the reduced two-state dynamics and interference branching ratio,
//! * [`propagator`]: direct integration of the non-Hermitian Schrödinger equation,
//! * [`dephasing`]: Ornstein-Uhlenbeck level noise and Monte Carlo ensembles,
//! * [`experiments`]: Gamma sweeps, the dephasing-recovery study and Zeno probes,
//! * [`config`]: presets, configuration files and run manifests.

pub mod adiabatic;
pub mod config;
pub mod dephasing;
pub mod eigen;
pub mod experiments;
pub mod model;
pub mod ode;
pub mod output;
pub mod propagator;

pub use model::{PulseSet, SimConfig};
