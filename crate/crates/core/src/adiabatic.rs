//! Reduced dynamics in the two-state subspace spanned by the dark state and the
//! measurement-induced state, and the interference formula for the final
//! branching ratio.

use nalgebra::Vector2;
use num_complex::Complex64;
use thiserror::Error;

use crate::eigen::{self, EigenError};
use crate::model::{PulseSet, Window};
use crate::ode::{Integrator, OdeError, Settings};
use crate::propagator::{BranchingRatio, BRANCHING_FLOOR};

/// Output samples of the reduced trajectory.
pub const TWO_LEVEL_SAMPLES: usize = 2000;

/// Default ratio separating the adiabatic, intermediate and Zeno regimes.
pub const DEFAULT_REGIME_RATIO: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdiabaticError {
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Integration(#[from] OdeError),
}

/// Nonadiabatic coupling between the dark state and the measurement-induced
/// state, per unit `xi`:
///
/// ```text
/// O21 = -2 P Omega_SB (S3 B3 + S4 B4) / (N1 N2')
/// ```
///
/// With the real-positive normalizations used here this equals
/// `<lambda_2'| d lambda_1/dxi> = -<lambda_1| d lambda_2'/dxi>`.
pub fn coupling_o21(xi: f64, pulses: &PulseSet, gamma: f64) -> Result<f64, AdiabaticError> {
    let r = pulses.envelopes(xi);
    let n1 = eigen::null_vector_raw(&r).norm();
    if n1 == 0.0 {
        return Err(EigenError::DegenerateNull.into());
    }
    let n2 = eigen::strong_limit_pair_of(&r, gamma)?.norm;
    Ok(-2.0 * r.p * r.omega_sb() * r.stokes_branch_overlap() / (n1 * n2))
}

/// Amplitudes on the dark (`c1`) and measurement-induced (`c2`) states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelState {
    pub xi: f64,
    pub c1: Complex64,
    pub c2: Complex64,
}

impl TwoLevelState {
    pub fn norm_sqr(&self) -> f64 {
        self.c1.norm_sqr() + self.c2.norm_sqr()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLevelSolution {
    pub series: Vec<TwoLevelState>,
}

impl TwoLevelSolution {
    pub fn final_state(&self) -> TwoLevelState {
        *self.series.last().expect("solution has samples")
    }
}

/// Integrates the reduced equations
///
/// ```text
/// dc1/dxi = O21 c2
/// dc2/dxi = -i lambda_2' c2 - O21 c1
/// ```
///
/// from `c1 = 1, c2 = 0` at `window.start`.
pub fn integrate_two_level(
    pulses: &PulseSet,
    gamma: f64,
    window: Window,
    tol: f64,
) -> Result<TwoLevelSolution, AdiabaticError> {
    integrate_reduced(pulses, gamma, window, tol, true)
}

/// As [`integrate_two_level`]; with `with_loss = false` the `lambda_2'` term is
/// dropped and the dynamics is a pure rotation.
pub fn integrate_reduced(
    pulses: &PulseSet,
    gamma: f64,
    window: Window,
    tol: f64,
    with_loss: bool,
) -> Result<TwoLevelSolution, AdiabaticError> {
    if !(gamma > 0.0) {
        return Err(EigenError::GammaZero.into());
    }
    if classify_regime(pulses, gamma, DEFAULT_REGIME_RATIO) != Regime::Intermediate {
        log::debug!(
            "two-level reduction outside the intermediate regime (gamma = {gamma}, peak = {})",
            pulses.max_peak()
        );
    }
    let coeffs = |xi: f64| -> Result<(f64, Complex64), AdiabaticError> {
        let r = pulses.envelopes(xi);
        let pair = eigen::strong_limit_pair_of(&r, gamma)?;
        let n1 = eigen::null_vector_raw(&r).norm();
        if n1 == 0.0 {
            return Err(EigenError::DegenerateNull.into());
        }
        let o21 = -2.0 * r.p * r.omega_sb() * r.stokes_branch_overlap() / (n1 * pair.norm);
        let loss = if with_loss { pair.lambda } else { Complex64::new(0.0, 0.0) };
        Ok((o21, loss))
    };
    // Surface degenerate-geometry errors up front rather than as a NaN mid-run.
    coeffs(window.start)?;
    let rhs = |xi: f64, c: &Vector2<Complex64>| {
        let (o21, lambda) = coeffs(xi).unwrap_or((f64::NAN, Complex64::new(f64::NAN, 0.0)));
        Vector2::new(
            c[1] * o21,
            Complex64::new(0.0, -1.0) * lambda * c[1] - c[0] * o21,
        )
    };
    let rate = 1.0 + pulses.max_peak().powi(2) / gamma;
    let mut integrator = Integrator::<2>::new(Settings::new(tol, 0.05, rate));
    let zero = Vector2::zeros();
    let mut c = Vector2::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
    let mut series = Vec::with_capacity(TWO_LEVEL_SAMPLES);
    series.push(TwoLevelState {
        xi: window.start,
        c1: c[0],
        c2: c[1],
    });
    let mut xi = window.start;
    for i in 1..TWO_LEVEL_SAMPLES {
        let target = if i + 1 == TWO_LEVEL_SAMPLES {
            window.end
        } else {
            window.start + window.len() * i as f64 / (TWO_LEVEL_SAMPLES - 1) as f64
        };
        integrator.advance(&rhs, &zero, xi, target, &mut c)?;
        xi = target;
        series.push(TwoLevelState {
            xi,
            c1: c[0],
            c2: c[1],
        });
    }
    Ok(TwoLevelSolution { series })
}

/// Final branching ratio of the superposition `c1 |lambda_1> + c2 |lambda_2'>`:
///
/// ```text
///     |c1|^2 B4^2 + |c2|^2 B3^2 + 2 Re(c1 c2*) B3 B4
/// B = ----------------------------------------------
///     |c1|^2 B3^2 + |c2|^2 B4^2 - 2 Re(c1 c2*) B3 B4
/// ```
///
/// with peak branch amplitudes `B3`, `B4`.
pub fn branching_ratio_theory(c1: Complex64, c2: Complex64, pulses: &PulseSet) -> BranchingRatio {
    let (p3, p4) = theory_yields(c1, c2, pulses);
    let scale = c1.norm_sqr() + c2.norm_sqr();
    if scale == 0.0 {
        return BranchingRatio::Indeterminate;
    }
    BranchingRatio::from_parts(p3 / scale, p4 / scale, BRANCHING_FLOOR)
}

/// Absolute final target populations of `c1 |lambda_1> + c2 |lambda_2'>`.
///
/// Once the pulses are off the two states reduce to `[0,0,-B4,B3,0]` and
/// `[0,0,-B3,-B4,0]` (normalized), so the amplitudes on `|3>` and `|4>` are
/// `-(c1 B4 + c2 B3)/n` and `(c1 B3 - c2 B4)/n` with `n^2 = B3^2 + B4^2`.
pub fn theory_yields(c1: Complex64, c2: Complex64, pulses: &PulseSet) -> (f64, f64) {
    let (b3, b4) = (pulses.peak_b3, pulses.peak_b4);
    let n2 = b3 * b3 + b4 * b4;
    if n2 == 0.0 {
        return (0.0, 0.0);
    }
    let a3 = c1 * b4 + c2 * b3;
    let a4 = c1 * b3 - c2 * b4;
    (a3.norm_sqr() / n2, a4.norm_sqr() / n2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `(Omega T)^2 >> Gamma T`: the dark state is followed, `B ≈ B1`.
    Adiabatic,
    /// `(Omega T)^2 ~ Gamma T`: interference between the two states controls `B`.
    Intermediate,
    /// `(Omega T)^2 << Gamma T`: the branch state is frozen out.
    Zeno,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Adiabatic => "adiabatic",
            Regime::Intermediate => "intermediate",
            Regime::Zeno => "zeno",
        }
    }
}

/// Compares `(max peak)^2` with `gamma` using the ratio `ratio`.
pub fn classify_regime(pulses: &PulseSet, gamma: f64, ratio: f64) -> Regime {
    let omega_sq = pulses.max_peak().powi(2);
    if omega_sq > ratio * gamma {
        Regime::Adiabatic
    } else if omega_sq < gamma / ratio {
        Regime::Zeno
    } else {
        Regime::Intermediate
    }
}
