//! Eigensystems of the five-level Hamiltonian.
//!
//! * the closed-form spectrum of the resonant part `H_r`: one null (dark) state
//!   plus four bright states whose squared eigenvalues solve a quadratic;
//! * the measurement-induced eigenpair in the strong-measurement limit, where the
//!   branch couplings are treated as a perturbation of the decaying level 5;
//! * first-order imaginary shifts of the bright states in the weak-measurement limit;
//! * a dense numeric eigensolver used as an independent oracle for all of the above.

use nalgebra::{DMatrix, Vector5};
use num_complex::Complex64;
use std::cmp::Ordering;
use thiserror::Error;

use crate::model::{Hamiltonian, PulseSet, Rabi};

/// Relative discriminant below which the two squared-eigenvalue branches are
/// treated as colliding.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

/// Required oracle residual `max ||Hv - lambda v||` relative to `||H||`.
pub const ORACLE_RESIDUAL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("null eigenvector undefined: Omega_SB and Omega_P*(Omega_B3, Omega_B4) vanish together")]
    DegenerateNull,
    #[error("strong-measurement eigenpair requires gamma > 0")]
    GammaZero,
    #[error("near-degenerate bright branches: discriminant {discriminant:.3e} below {threshold:.3e}")]
    Degenerate { discriminant: f64, threshold: f64 },
    #[error("closed-form eigenvector of branch k={k} vanishes")]
    VanishingEigenvector { k: usize },
    #[error("measurement-induced eigenvector vanishes")]
    VanishingStrongVector,
    #[error("branch index {0} outside 2..=5")]
    BranchIndex(usize),
    #[error("singular denominator: {0} vanishes")]
    SingularDenominator(&'static str),
    #[error("dense eigensolver did not converge (residual {residual:.3e})")]
    NonConvergence { residual: f64 },
    #[error("matrix has non-finite entries")]
    NonFinite,
}

/// Where an [`EigenSystem`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    AnalyticResonant,
    StrongPerturbative,
    WeakPerturbative,
    NumericOracle,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::AnalyticResonant => "analytic-Hr",
            Provenance::StrongPerturbative => "strong-perturbative",
            Provenance::WeakPerturbative => "weak-perturbative",
            Provenance::NumericOracle => "numeric-oracle",
        }
    }
}

/// Five eigenvalues with unit-norm eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub values: [Complex64; 5],
    pub vectors: [Vector5<Complex64>; 5],
    pub provenance: Provenance,
}

impl EigenSystem {
    /// Residual `||H v_k - lambda_k v_k||` for each pair.
    pub fn residuals(&self, h: &Hamiltonian) -> [f64; 5] {
        std::array::from_fn(|k| (h * self.vectors[k] - self.vectors[k] * self.values[k]).norm())
    }

    pub fn max_residual(&self, h: &Hamiltonian) -> f64 {
        self.residuals(h).into_iter().fold(0.0, f64::max)
    }

    /// Index of the eigenvalue closest to `target`, optionally skipping values with
    /// `|lambda| <= exclude_below` (used to step over the exact null eigenvalue).
    pub fn nearest(&self, target: Complex64, exclude_below: f64) -> Option<usize> {
        (0..5)
            .filter(|&k| self.values[k].norm() > exclude_below)
            .min_by(|&a, &b| {
                (self.values[a] - target)
                    .norm()
                    .total_cmp(&(self.values[b] - target).norm())
            })
    }
}

fn to_complex(v: &Vector5<f64>) -> Vector5<Complex64> {
    v.map(|x| Complex64::new(x, 0.0))
}

/// Unnormalized dark state `[Omega_SB, 0, -P*B4, P*B3, 0]`.
pub fn null_vector_raw(r: &Rabi) -> Vector5<f64> {
    Vector5::new(r.omega_sb(), 0.0, -r.p * r.b4, r.p * r.b3, 0.0)
}

/// Normalized null eigenvector of `H_r` at `xi`.
pub fn null_eigenvector(xi: f64, pulses: &PulseSet) -> Result<Vector5<f64>, EigenError> {
    null_eigenvector_of(&pulses.envelopes(xi))
}

pub fn null_eigenvector_of(r: &Rabi) -> Result<Vector5<f64>, EigenError> {
    let raw = null_vector_raw(r);
    let n = raw.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(EigenError::DegenerateNull);
    }
    Ok(raw / n)
}

/// One bright eigenstate of `H_r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrightBranch {
    pub lambda: f64,
    pub lambda_sq: f64,
    /// Closed-form, unnormalized eigenvector.
    pub raw: Vector5<f64>,
    /// Its Euclidean norm `N_k`.
    pub norm: f64,
}

/// The four nonzero eigenpairs of `H_r`, ordered by (squared-eigenvalue branch,
/// sign) ascending; index 0 here is `k = 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonantSpectrum {
    pub branches: [BrightBranch; 4],
    pub discriminant: f64,
    pub omega_m_sq: f64,
    /// Set when the two squared-eigenvalue branches (nearly) collide, in which
    /// case the closed-form eigenvectors may be linearly dependent.
    pub degenerate: bool,
}

impl ResonantSpectrum {
    pub fn from_rabi(r: &Rabi) -> Self {
        let m = r.omega_m_sq();
        let sb = r.omega_sb();
        let q = sb * sb + r.p * r.p * (r.b3 * r.b3 + r.b4 * r.b4);
        let discriminant = m * m - 4.0 * q;
        let root = discriminant.max(0.0).sqrt();
        let upper = 0.5 * (m + root);
        // Product of the roots is q; avoids cancellation in the small branch.
        let lower = if upper > 0.0 { q / upper } else { 0.0 };
        let mut branches = [BrightBranch {
            lambda: 0.0,
            lambda_sq: 0.0,
            raw: Vector5::zeros(),
            norm: 0.0,
        }; 4];
        let mut i = 0;
        for l2 in [lower, upper] {
            let l = l2.sqrt();
            for lambda in [-l, l] {
                let raw = bright_vector_raw(r, lambda, l2);
                branches[i] = BrightBranch {
                    lambda,
                    lambda_sq: l2,
                    raw,
                    norm: raw.norm(),
                };
                i += 1;
            }
        }
        Self {
            branches,
            discriminant,
            omega_m_sq: m,
            degenerate: discriminant < DEGENERACY_THRESHOLD * m * m,
        }
    }

    /// Branch for `k` in `2..=5`.
    pub fn branch(&self, k: usize) -> Result<&BrightBranch, EigenError> {
        if !(2..=5).contains(&k) {
            return Err(EigenError::BranchIndex(k));
        }
        Ok(&self.branches[k - 2])
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        self.branches.map(|b| b.lambda)
    }

    fn check_degenerate(&self) -> Result<(), EigenError> {
        if self.degenerate {
            return Err(EigenError::Degenerate {
                discriminant: self.discriminant,
                threshold: DEGENERACY_THRESHOLD * self.omega_m_sq * self.omega_m_sq,
            });
        }
        Ok(())
    }

    /// Normalized closed-form eigenvector for `k` in `2..=5`.
    pub fn eigenvector(&self, k: usize) -> Result<Vector5<f64>, EigenError> {
        self.check_degenerate()?;
        let b = self.branch(k)?;
        let scale = self.omega_m_sq.powf(1.5);
        if !(b.norm > 1e-12 * scale) {
            return Err(EigenError::VanishingEigenvector { k });
        }
        Ok(b.raw / b.norm)
    }
}

fn bright_vector_raw(r: &Rabi, lambda: f64, l2: f64) -> Vector5<f64> {
    let bb = l2 - r.b3 * r.b3 - r.b4 * r.b4;
    let sb = r.omega_sb();
    Vector5::new(
        r.p * bb,
        lambda * bb,
        r.s3 * l2 - r.b4 * sb,
        r.s4 * l2 + r.b3 * sb,
        lambda * r.stokes_branch_overlap(),
    )
}

/// The four nonzero eigenvalues and closed-form eigenvectors of `H_r` at `xi`.
pub fn hr_spectrum(xi: f64, pulses: &PulseSet) -> ResonantSpectrum {
    ResonantSpectrum::from_rabi(&pulses.envelopes(xi))
}

/// Complete eigensystem of `H_r`: null state first, then `k = 2..=5`.
///
/// Falls back to the numeric oracle when the closed-form eigenvectors are not
/// usable (colliding branches or vanishing vectors).
pub fn analytic_eigensystem(xi: f64, pulses: &PulseSet) -> Result<EigenSystem, EigenError> {
    let r = pulses.envelopes(xi);
    match closed_form_system(&r) {
        Ok(sys) => Ok(sys),
        Err(
            EigenError::Degenerate { .. }
            | EigenError::VanishingEigenvector { .. }
            | EigenError::DegenerateNull,
        ) => {
            let h = r.resonant_matrix().map(|v| Complex64::new(v, 0.0));
            numeric_oracle(&h)
        }
        Err(e) => Err(e),
    }
}

fn closed_form_system(r: &Rabi) -> Result<EigenSystem, EigenError> {
    let spec = ResonantSpectrum::from_rabi(r);
    let null = null_eigenvector_of(r)?;
    let mut values = [Complex64::new(0.0, 0.0); 5];
    let mut vectors = [to_complex(&null); 5];
    for k in 2..=5 {
        values[k - 1] = Complex64::new(spec.branch(k)?.lambda, 0.0);
        vectors[k - 1] = to_complex(&spec.eigenvector(k)?);
    }
    Ok(EigenSystem {
        values,
        vectors,
        provenance: Provenance::AnalyticResonant,
    })
}

/// Measurement-induced eigenpair closest to the null state (strong limit).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrongPair {
    /// Purely imaginary eigenvalue, units of `1/T`.
    pub lambda: Complex64,
    pub vector: Vector5<Complex64>,
    /// Normalization `N_2'` (modulus norm of the unnormalized vector).
    pub norm: f64,
}

/// `P^2 (B3^2 + B4^2) + Omega_SB^2`
fn strong_kernel(r: &Rabi) -> f64 {
    let sb = r.omega_sb();
    r.p * r.p * (r.b3 * r.b3 + r.b4 * r.b4) + sb * sb
}

pub fn strong_vector_raw(r: &Rabi, gamma: f64) -> Vector5<Complex64> {
    let p2 = r.p * r.p;
    Vector5::new(
        Complex64::new(r.p * r.stokes_branch_overlap(), 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(r.s3 * r.s4 * r.b4 - r.b3 * (p2 + r.s4 * r.s4), 0.0),
        Complex64::new(r.s3 * r.s4 * r.b3 - r.b4 * (p2 + r.s3 * r.s3), 0.0),
        Complex64::new(0.0, strong_kernel(r) / gamma),
    )
}

pub fn strong_limit_pair_of(r: &Rabi, gamma: f64) -> Result<StrongPair, EigenError> {
    if !(gamma > 0.0) {
        return Err(EigenError::GammaZero);
    }
    let raw = strong_vector_raw(r, gamma);
    let norm = raw.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(EigenError::VanishingStrongVector);
    }
    let k = strong_kernel(r);
    Ok(StrongPair {
        lambda: Complex64::new(0.0, -k * k / (gamma * norm * norm)),
        vector: raw / Complex64::new(norm, 0.0),
        norm,
    })
}

/// Strong-measurement eigenpair `(lambda_2', |lambda_2'>)` at `xi`.
///
/// Intended for `gamma >> max peak`; see [`crate::adiabatic::classify_regime`].
pub fn strong_limit_pair(xi: f64, pulses: &PulseSet, gamma: f64) -> Result<StrongPair, EigenError> {
    strong_limit_pair_of(&pulses.envelopes(xi), gamma)
}

/// First-order complex eigenvalues `lambda_k''` of the bright states for weak
/// measurement, `k = 2..=5`.
pub fn weak_limit_spectrum_of(r: &Rabi, gamma: f64) -> Result<[Complex64; 4], EigenError> {
    let mut out = [Complex64::new(0.0, 0.0); 4];
    for (i, z) in out.iter_mut().enumerate() {
        *z = weak_limit_eigenvalue_of(r, gamma, i + 2)?;
    }
    Ok(out)
}

/// First-order eigenvalue of bright state `k` (2..=5) under weak measurement.
pub fn weak_limit_eigenvalue_of(r: &Rabi, gamma: f64, k: usize) -> Result<Complex64, EigenError> {
    let spec = ResonantSpectrum::from_rabi(r);
    spec.check_degenerate()?;
    let b = live_branch(&spec, k)?;
    let ov = r.stokes_branch_overlap();
    let im = -gamma * b.lambda_sq * ov * ov / (b.norm * b.norm);
    Ok(Complex64::new(b.lambda, im))
}

/// Branch `k` whose closed-form vector is nonzero.
///
/// When `S3 B3 + S4 B4 = 0` the state `B3|3> + B4|4>` couples only to `|5>` and
/// gives `lambda^2 = B3^2 + B4^2` exactly; the closed form vanishes there.
fn live_branch(spec: &ResonantSpectrum, k: usize) -> Result<&BrightBranch, EigenError> {
    let b = spec.branch(k)?;
    if !(b.norm > 1e-12 * spec.omega_m_sq.powf(1.5)) {
        return Err(EigenError::VanishingEigenvector { k });
    }
    Ok(b)
}

/// Weak-measurement spectrum at `xi`; intended for `gamma << max peak`.
pub fn weak_limit_spectrum(
    xi: f64,
    pulses: &PulseSet,
    gamma: f64,
) -> Result<[Complex64; 4], EigenError> {
    weak_limit_spectrum_of(&pulses.envelopes(xi), gamma)
}

/// Deviation of the branching ratio carried by bright state `k` from the dark
/// value `(B4/B3)^2`.
pub fn branching_deviation_of(r: &Rabi, k: usize) -> Result<f64, EigenError> {
    let spec = ResonantSpectrum::from_rabi(r);
    let l2 = live_branch(&spec, k)?.lambda_sq;
    if r.b3 == 0.0 {
        return Err(EigenError::SingularDenominator("Omega_B3"));
    }
    let sb = r.omega_sb();
    let num = l2 * r.s3 - r.b4 * sb;
    let den = l2 * r.s4 + r.b3 * sb;
    if den == 0.0 {
        return Err(EigenError::SingularDenominator(
            "lambda_k^2 Omega_S4 + Omega_B3 Omega_SB",
        ));
    }
    Ok((num / den).powi(2) - (r.b4 / r.b3).powi(2))
}

pub fn branching_deviation(xi: f64, pulses: &PulseSet, k: usize) -> Result<f64, EigenError> {
    branching_deviation_of(&pulses.envelopes(xi), k)
}

/// Dense complex eigendecomposition, independent of the closed forms above.
///
/// Eigenvalues come from a complex Schur decomposition. Each eigenvector is the
/// right singular vector of `H - lambda I` with the smallest singular value
/// (several for a cluster of coincident eigenvalues, which are then orthonormal),
/// and each eigenvalue is then refined to the residual-minimizing Rayleigh quotient.
/// Output is sorted by (real, imaginary) part.
pub fn numeric_oracle(h: &Hamiltonian) -> Result<EigenSystem, EigenError> {
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(EigenError::NonFinite);
    }
    let scale = h.norm().max(f64::MIN_POSITIVE);
    let schur = h
        .try_schur(1e-15 * scale, 10_000)
        .ok_or(EigenError::NonConvergence {
            residual: f64::INFINITY,
        })?;
    let (_, t) = schur.unpack();
    let mut eig: Vec<Complex64> = (0..5).map(|k| t[(k, k)]).collect();
    eig.sort_by(cmp_complex);

    let cluster_tol = 1e-8 * scale;
    let mut values = [Complex64::new(0.0, 0.0); 5];
    let mut vectors = [Vector5::<Complex64>::zeros(); 5];
    let mut k = 0;
    while k < 5 {
        let mut end = k + 1;
        while end < 5 && (eig[end] - eig[end - 1]).norm() <= cluster_tol {
            end += 1;
        }
        let m = end - k;
        let center = eig[k..end].iter().sum::<Complex64>() / m as f64;
        let shifted = DMatrix::from_fn(5, 5, |i, j| {
            h[(i, j)] - if i == j { center } else { Complex64::new(0.0, 0.0) }
        });
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.expect("requested right singular vectors");
        let mut order: Vec<usize> = (0..5).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        for (slot, &idx) in order.iter().take(m).enumerate() {
            let v = Vector5::from_fn(|i, _| v_t[(idx, i)].conj());
            let v = fix_gauge(&(v / Complex64::new(v.norm(), 0.0)));
            let rayleigh = (v.adjoint() * h * v)[(0, 0)];
            values[k + slot] = rayleigh;
            vectors[k + slot] = v;
        }
        k = end;
    }
    let sys = EigenSystem {
        values,
        vectors,
        provenance: Provenance::NumericOracle,
    };
    let residual = sys.max_residual(h);
    if residual > ORACLE_RESIDUAL * scale {
        return Err(EigenError::NonConvergence { residual });
    }
    Ok(sys)
}

fn cmp_complex(a: &Complex64, b: &Complex64) -> Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

/// Rotate so the largest-magnitude component is real and positive.
fn fix_gauge(v: &Vector5<Complex64>) -> Vector5<Complex64> {
    let pivot = v
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(Complex64::new(1.0, 0.0));
    if pivot.norm() == 0.0 {
        return *v;
    }
    v * (pivot.conj() / pivot.norm())
}

/// Rotate `next` by a global phase so its overlap with `prev` is real and
/// non-negative; keeps a tracked eigenvector continuous along a time grid.
pub fn align_phase(prev: &Vector5<Complex64>, next: &Vector5<Complex64>) -> Vector5<Complex64> {
    let ov = next.dotc(prev);
    if ov.norm() == 0.0 {
        return *next;
    }
    next * (ov / ov.norm())
}

/// Real symmetric `H_r` at `xi` as a complex matrix.
pub fn resonant_hamiltonian(xi: f64, pulses: &PulseSet) -> Hamiltonian {
    pulses
        .envelopes(xi)
        .resonant_matrix()
        .map(|v| Complex64::new(v, 0.0))
}
