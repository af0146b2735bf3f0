//! Entrywise subsampling `Â` of a matrix and the parameter formulas and
//! error bounds for reconstructing it by threshold projection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::DenseMatrix;

/// Band width used by the recommender.
pub const DEFAULT_KAPPA: f64 = 1.0 / 3.0;

/// Keep each entry independently with probability `p`, rescaled to
/// `A_ij / p`; otherwise zero.
///
/// One uniform draw is consumed per entry in row-major order, and an entry is
/// kept iff its draw is below `p`. Two calls with the same seed but different
/// `p` are therefore coupled: every entry kept at the smaller `p` is also kept
/// at the larger one.
pub fn subsample<R: Rng + ?Sized>(a: &DenseMatrix, p: f64, rng: &mut R) -> Result<DenseMatrix> {
    if !(p > 0.0 && p <= 1.0) {
        return invalid(format!("sampling probability {p} must lie in (0, 1]"));
    }
    let mut out = DenseMatrix::zeros(a.rows(), a.cols());
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let u: f64 = rng.random();
            if u < p {
                out.set(i, j, a.get(i, j) / p);
            }
        }
    }
    Ok(out)
}

/// `p`, `η` and `b` of the subsampling bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsampleParams {
    pub p: f64,
    pub eta: f64,
    pub b: f64,
}

impl SubsampleParams {
    /// `p = 16 n b² / (η ‖A‖_F)²`, clamped to 1. `clamped` reports whether
    /// the clamp was active.
    pub fn from_eta(n: usize, b: f64, eta: f64, frobenius: f64) -> (Self, bool) {
        let raw = sampling_probability(n, b, eta, frobenius);
        (
            Self {
                p: raw.min(1.0),
                eta,
                b,
            },
            raw > 1.0,
        )
    }
}

/// `16 n b² / (η ‖A‖_F)²`, unclamped.
pub fn sampling_probability(n: usize, b: f64, eta: f64, frobenius: f64) -> f64 {
    16.0 * n as f64 * b * b / (eta * frobenius).powi(2)
}

/// `(k, ε, μ, σ, κ)` of the threshold reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdParams {
    pub k: usize,
    pub epsilon: f64,
    pub mu: f64,
    /// `√(μ/k) ‖Â‖_F`; only known once `Â` exists.
    pub sigma: Option<f64>,
    pub kappa: f64,
}

impl ThresholdParams {
    /// `μ = ε² p / 2`, `κ = 1/3`.
    pub fn for_sampling(k: usize, epsilon: f64, p: f64) -> Result<Self> {
        if k == 0 {
            return invalid("rank k must be positive");
        }
        if !(epsilon > 0.0) || !(p > 0.0 && p <= 1.0) {
            return invalid(format!("need ε > 0 and p in (0, 1], got ε={epsilon}, p={p}"));
        }
        Ok(Self {
            k,
            epsilon,
            mu: epsilon * epsilon * p / 2.0,
            sigma: None,
            kappa: DEFAULT_KAPPA,
        })
    }

    /// Fix `σ = √(μ/k) ‖Â‖_F`.
    pub fn with_subsample_norm(mut self, subsample_frobenius: f64) -> Self {
        self.sigma = Some(threshold_sigma(self.mu, self.k, subsample_frobenius));
        self
    }
}

/// `σ = √(μ/k) ‖Â‖_F`.
pub fn threshold_sigma(mu: f64, k: usize, subsample_frobenius: f64) -> f64 {
    (mu / k as f64).sqrt() * subsample_frobenius
}

/// Largest admissible `η = 2 n^{1/4} ε^{3/2} / (3 (2k)^{1/4} ‖A‖_F^{1/2})`.
pub fn max_eta(n: usize, k: usize, epsilon: f64, frobenius: f64) -> f64 {
    2.0 * (n as f64).powf(0.25) * epsilon.powf(1.5)
        / (3.0 * (2.0 * k as f64).powf(0.25) * frobenius.sqrt())
}

/// `36 √2 (nk)^{1/2} / ε³`: the Frobenius norm the reconstruction guarantees require.
pub fn required_frobenius(n: usize, k: usize, epsilon: f64) -> f64 {
    36.0 * 2f64.sqrt() * ((n * k) as f64).sqrt() / epsilon.powi(3)
}

/// Parameters derived from the parameter formulas, with precondition flags.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    /// Advisory sampling parameters at `η = max_eta(..)`.
    pub subsample: SubsampleParams,
    pub threshold: ThresholdParams,
    /// `‖A‖_F ≥ 36√2 (nk)^{1/2} / ε³` (equivalently, the advisory `p ≤ 1`).
    pub norm_precondition: bool,
    /// `ε < 1/9`, needed for the `9ε` guarantee to be meaningful.
    pub epsilon_in_range: bool,
}

impl DerivedParams {
    pub fn preconditions_hold(&self) -> bool {
        self.norm_precondition && self.epsilon_in_range
    }
}

/// Derive `(η, p, μ, κ)` from `‖A‖_F`, `n`, `k`, `ε` and `b = max |A_ij|`.
///
/// `μ` is computed from the advisory `p`; callers that run at a different
/// `p` should rebuild it with [`ThresholdParams::for_sampling`].
/// Precondition failures are reported, not raised.
pub fn derive_params(frobenius: f64, n: usize, k: usize, epsilon: f64, b: f64) -> Result<DerivedParams> {
    if !(frobenius > 0.0) || n == 0 || k == 0 || !(epsilon > 0.0) || !(b > 0.0) {
        return invalid("derive_params needs positive ‖A‖_F, n, k, ε and b");
    }
    let eta = max_eta(n, k, epsilon, frobenius);
    let (subsample, _) = SubsampleParams::from_eta(n, b, eta, frobenius);
    let threshold = ThresholdParams::for_sampling(k, epsilon, subsample.p)?;
    // b enters p as b²; normalise the norm condition by b accordingly.
    let norm_precondition = frobenius / b >= required_frobenius(n, k, epsilon);
    Ok(DerivedParams {
        subsample,
        threshold,
        norm_precondition,
        epsilon_in_range: epsilon < 1.0 / 9.0,
    })
}

/// Inputs to the reconstruction bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    /// `‖A - A_k‖_F`.
    pub tail: f64,
    pub frobenius: f64,
    pub eta: f64,
    pub k: usize,
    pub mu: f64,
    pub p: f64,
}

/// `‖A - A_k‖_F + (3√η k^{1/4} μ^{-1/4} + √(2μ/p)) ‖A‖_F`.
///
/// Zero `η` or `μ` drops the corresponding perturbation term.
pub fn bound_threshold_error(t: &BoundTerms) -> f64 {
    t.tail + (eta_term(t) + (2.0 * t.mu / t.p).sqrt()) * t.frobenius
}

/// `3‖A - A_k‖_F + (3√η k^{1/4} μ^{-1/4} (2 + (1-κ)^{-1/2}) + (3-κ)√(2μ/p)) ‖A‖_F`.
pub fn bound_threshold_family_error(t: &BoundTerms, kappa: f64) -> f64 {
    3.0 * t.tail
        + (eta_term(t) * (2.0 + (1.0 - kappa).powf(-0.5))
            + (3.0 - kappa) * (2.0 * t.mu / t.p).sqrt())
            * t.frobenius
}

fn eta_term(t: &BoundTerms) -> f64 {
    if t.eta == 0.0 || t.mu == 0.0 {
        return 0.0;
    }
    3.0 * t.eta.sqrt() * (t.k as f64).powf(0.25) * t.mu.powf(-0.25)
}
