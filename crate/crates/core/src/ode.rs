//! Adaptive Dormand-Prince 5(4) with an exact integrating factor for a constant
//! complex diagonal.
//!
//! Solves `dy/dxi = -i D y + F(xi, y)` where `D` is diagonal and constant over a
//! call to [`Integrator::advance`] and `F` carries everything else. Over a step of
//! length `h` every stage is written in the physical frame,
//!
//! ```text
//! u_i   = E(c_i h) y0 + h sum_j a_ij E((c_i - c_j) h) F_j,   E(s) = exp(-i D s)
//! y_new = E(h) y0     + h sum_j b_j  E((1 - c_j) h) F_j,
//! ```
//!
//! so with `Im D <= 0` every factor is a decay and stiff damping (a large
//! measurement rate) never overflows. With `D = 0` this is plain DOPRI5.

use nalgebra::SVector;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at xi = {xi:.6} (h = {h:.3e})")]
    StepUnderflow { xi: f64, h: f64 },
    #[error("non-finite state first seen at xi = {xi:.6}")]
    NonFinite { xi: f64 },
    #[error("step budget of {max_steps} exhausted at xi = {xi:.6}")]
    TooManySteps { xi: f64, max_steps: usize },
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
/// `b - b_hat`
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Largest allowed `h * max|Im D|`.
const DAMPING_STEP_CAP: f64 = 4.0;
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    /// Characteristic rate of the problem, used for the first step guess.
    pub rate_scale: f64,
    pub max_steps: usize,
}

impl Settings {
    pub fn new(tol: f64, h_max: f64, rate_scale: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            h_max,
            rate_scale,
            max_steps: 200_000_000,
        }
    }
}

/// Stateful stepper; keeps the step-size guess and the first-same-as-last
/// derivative between calls so consecutive segments continue smoothly.
#[derive(Debug, Clone)]
pub struct Integrator<const N: usize> {
    settings: Settings,
    h: f64,
    fsal: Option<(f64, SVector<Complex64, N>)>,
    steps: usize,
    rejected: usize,
}

#[derive(Debug, Clone, Copy)]
struct Factors<const N: usize> {
    /// `E(c_i h)` for the six distinct nodes (index 6 duplicates 5).
    nodes: [SVector<Complex64, N>; 7],
    trivial: bool,
}

impl<const N: usize> Factors<N> {
    fn new(diag: &SVector<Complex64, N>, h: f64, trivial: bool) -> Self {
        let one = SVector::from_element(Complex64::new(1.0, 0.0));
        let mut nodes = [one; 7];
        if !trivial {
            for (i, c) in C.iter().enumerate().skip(1).take(5) {
                nodes[i] = diag.map(|d| (Complex64::new(0.0, -c * h) * d).exp());
            }
            nodes[6] = nodes[5];
        }
        Self { nodes, trivial }
    }

    /// Applies `E((c_i - c_j) h)` to `v`.
    #[inline]
    fn shift(&self, i: usize, j: usize, v: &SVector<Complex64, N>) -> SVector<Complex64, N> {
        if self.trivial || C[i] == C[j] {
            return *v;
        }
        SVector::from_fn(|k, _| v[k] * self.nodes[i][k] / self.nodes[j][k])
    }
}

impl<const N: usize> Integrator<N> {
    pub fn new(settings: Settings) -> Self {
        let guess = 0.01 / settings.rate_scale.max(1e-12);
        Self {
            h: guess.min(settings.h_max),
            settings,
            fsal: None,
            steps: 0,
            rejected: 0,
        }
    }

    pub fn accepted_steps(&self) -> usize {
        self.steps
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected
    }

    /// Advances `y` from `xi` to `target` with the diagonal `diag` held fixed.
    pub fn advance<F>(
        &mut self,
        rhs: &F,
        diag: &SVector<Complex64, N>,
        xi: f64,
        target: f64,
        y: &mut SVector<Complex64, N>,
    ) -> Result<(), OdeError>
    where
        F: Fn(f64, &SVector<Complex64, N>) -> SVector<Complex64, N>,
    {
        let trivial = diag.iter().all(|d| d.re == 0.0 && d.im == 0.0);
        let damping = diag.iter().fold(0.0f64, |m, d| m.max(d.im.abs()));
        let h_cap = if damping > 0.0 {
            self.settings.h_max.min(DAMPING_STEP_CAP / damping)
        } else {
            self.settings.h_max
        };
        let mut t = xi;
        while t < target {
            if self.steps + self.rejected >= self.settings.max_steps {
                return Err(OdeError::TooManySteps {
                    xi: t,
                    max_steps: self.settings.max_steps,
                });
            }
            let mut h = self.h.min(h_cap);
            let remaining = target - t;
            let last = h >= remaining;
            if last {
                h = remaining;
            } else if h > 0.5 * remaining {
                // Split what is left evenly instead of leaving a sliver.
                h = 0.5 * remaining;
            }
            if h < 1e-13 * t.abs().max(1.0) {
                return Err(OdeError::StepUnderflow { xi: t, h });
            }
            let k0 = match self.fsal {
                Some((tf, k)) if tf == t => k,
                _ => rhs(t, y),
            };
            let (y_new, k_last, err) = self.try_step(rhs, diag, trivial, t, h, y, &k0);
            if !err.is_finite() || y_new.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                if h > 1e-13 * t.abs().max(1.0) * 1e3 {
                    self.h = h * FAC_MIN;
                    self.rejected += 1;
                    continue;
                }
                return Err(OdeError::NonFinite { xi: t });
            }
            let fac = if err == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
            };
            if err <= 1.0 {
                t = if last { target } else { t + h };
                *y = y_new;
                self.fsal = Some((t, k_last));
                self.steps += 1;
                // A step truncated to hit the target says nothing about the next one.
                if !last || fac < 1.0 {
                    self.h = (h * fac).min(self.settings.h_max);
                }
            } else {
                self.rejected += 1;
                self.h = h * fac.min(1.0);
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn try_step<F>(
        &self,
        rhs: &F,
        diag: &SVector<Complex64, N>,
        trivial: bool,
        t: f64,
        h: f64,
        y0: &SVector<Complex64, N>,
        k0: &SVector<Complex64, N>,
    ) -> (SVector<Complex64, N>, SVector<Complex64, N>, f64)
    where
        F: Fn(f64, &SVector<Complex64, N>) -> SVector<Complex64, N>,
    {
        let fac = Factors::new(diag, h, trivial);
        let mut k = [SVector::<Complex64, N>::zeros(); 7];
        k[0] = *k0;
        for i in 1..7 {
            let mut u = fac.shift(i, 0, y0);
            for j in 0..i {
                if A[i][j] != 0.0 {
                    u += fac.shift(i, j, &k[j]) * Complex64::new(h * A[i][j], 0.0);
                }
            }
            k[i] = rhs(t + C[i] * h, &u);
            if i == 6 {
                // Node 6 evaluates at the propagated solution itself.
                let mut err = SVector::<Complex64, N>::zeros();
                for j in 0..7 {
                    if E[j] != 0.0 {
                        err += fac.shift(6, j, &k[j]) * Complex64::new(h * E[j], 0.0);
                    }
                }
                let mut e = 0.0f64;
                for n in 0..N {
                    let sc = self.settings.atol
                        + self.settings.rtol * y0[n].norm().max(u[n].norm());
                    e = e.max(err[n].norm() / sc);
                }
                debug_assert!(B.iter().zip(A[6]).all(|(b, a)| *b == a));
                return (u, k[6], e);
            }
        }
        unreachable!("seven stages")
    }
}
