//! Threshold projection by flag-and-measure rejection sampling.
//!
//! Each trial runs singular value estimation on `|x⟩` at precision
//! `(κ/2)σ/‖A‖_F`, flags every component whose estimate falls strictly below
//! `σ - (κ/2)σ`, and measures the flag. An unflagged outcome leaves the state
//! proportional to the projection of `x` onto the kept right singular
//! vectors; otherwise the trial is repeated.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{norm, project_onto, SvdFactorization};
use crate::qsim::{CircuitSpectrum, QuantumState, Spectrum, SveComponent, SveEngine, SvePath};
use crate::sample_tree::RowTree;

/// Trial cap used when the per-trial success probability is zero and no cap
/// was supplied.
pub const FALLBACK_MAX_ITERATIONS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionParams {
    pub sigma: f64,
    pub kappa: f64,
    /// Explicit trial cap; `None` derives `⌈(ln n + 7)/β²⌉`.
    pub max_iterations: Option<usize>,
}

impl ProjectionParams {
    pub fn new(sigma: f64, kappa: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return invalid(format!("threshold σ = {sigma} must be positive"));
        }
        if !(kappa > 0.0 && kappa < 1.0) {
            return invalid(format!("κ = {kappa} must lie in (0, 1)"));
        }
        Ok(Self {
            sigma,
            kappa,
            max_iterations: None,
        })
    }

    pub fn with_max_iterations(mut self, cap: usize) -> Self {
        self.max_iterations = Some(cap);
        self
    }

    /// SVE precision `(κ/2)·σ/‖A‖_F`.
    pub fn sve_precision(&self, frobenius: f64) -> f64 {
        self.kappa / 2.0 * self.sigma / frobenius
    }

    /// `σ - (κ/2)σ`.
    pub fn cut(&self) -> f64 {
        self.sigma - self.kappa / 2.0 * self.sigma
    }

    pub fn flagged(&self, estimate: f64) -> bool {
        estimate < self.cut()
    }

    /// `⌈(ln n + 7)/β²⌉`, or the explicit cap if one was set.
    pub fn iteration_cap(&self, n: usize, beta2: f64) -> usize {
        match self.max_iterations {
            Some(cap) => cap,
            None if beta2 > 0.0 => (((n as f64).ln() + 7.0) / beta2).ceil() as usize,
            None => FALLBACK_MAX_ITERATIONS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOutcome {
    pub path: SvePath,
    /// Unit vector over `[n]` proportional to the projection of `x`.
    pub state: Vec<f64>,
    pub iterations: usize,
    /// `β²` of the accepted trial's kept set.
    pub success_probability: f64,
    /// Basis indices of `x`'s support that passed the flag, ascending.
    pub kept: Vec<usize>,
    /// The kept indices with `σ_i < σ`.
    pub band: Vec<usize>,
}

impl ProjectionOutcome {
    pub fn quantum_state(&self) -> QuantumState {
        QuantumState::from_real(&self.state).expect("accepted projection is nonzero")
    }

    /// Measure the output state in the standard basis.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.quantum_state().measure(rng)
    }

    /// Tree over the output amplitudes, for repeated sampling.
    pub fn sampling_tree(&self) -> RowTree {
        RowTree::from_values(&self.state).expect("finite amplitudes")
    }
}

/// `‖Π_kept x‖² / ‖x‖²`; zero for the zero vector.
pub fn success_probability(f: &SvdFactorization, x: &[f64], kept: &[usize]) -> f64 {
    let len = norm(x);
    if !(len > 0.0) {
        return 0.0;
    }
    (norm(&project_onto(f, x, kept)) / len).powi(2).min(1.0)
}

/// Mean number of trials `1/β²`.
pub fn expected_iterations(beta2: f64) -> Result<f64> {
    if !(beta2 > 0.0 && beta2 <= 1.0) {
        return invalid(format!("expected iterations undefined for β² = {beta2}"));
    }
    Ok(1.0 / beta2)
}

/// Threshold projection against one stored matrix.
#[derive(Clone, Copy, Debug)]
pub struct Projector<'a> {
    engine: &'a SveEngine,
    params: ProjectionParams,
    path: SvePath,
}

/// The SVE work for one input vector, reusable across many runs.
#[derive(Clone, Debug)]
pub struct PreparedProjection<'a> {
    projector: Projector<'a>,
    exact: Vec<SveComponent>,
    circuit: Option<CircuitSpectrum>,
    oracle_beta2: f64,
}

impl<'a> Projector<'a> {
    pub fn new(engine: &'a SveEngine, params: ProjectionParams, path: SvePath) -> Result<Self> {
        if params.sigma > engine.frobenius_norm() {
            return invalid(format!(
                "threshold σ = {} exceeds ‖A‖_F = {}",
                params.sigma,
                engine.frobenius_norm()
            ));
        }
        Ok(Self { engine, params, path })
    }

    pub fn params(&self) -> &ProjectionParams {
        &self.params
    }

    pub fn engine(&self) -> &'a SveEngine {
        self.engine
    }

    /// Run SVE on `x` once (exact path) or build the register
    /// distributions (circuit path).
    pub fn prepare(&self, x: &[f64]) -> Result<PreparedProjection<'a>> {
        let eps = self.params.sve_precision(self.engine.frobenius_norm());
        let exact = self.engine.sve_exact(x, eps)?.components;
        let oracle_beta2 = exact
            .iter()
            .filter(|c| !self.params.flagged(c.estimate))
            .map(|c| c.alpha * c.alpha)
            .sum();
        let circuit = match self.path {
            SvePath::Exact => None,
            SvePath::Circuit => Some(self.engine.circuit_spectrum(x, eps)?),
        };
        Ok(PreparedProjection {
            projector: *self,
            exact,
            circuit,
            oracle_beta2,
        })
    }

    pub fn project<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<ProjectionOutcome> {
        self.prepare(x)?.run(rng)
    }
}

impl PreparedProjection<'_> {
    /// `β²` of the exact path's kept set.
    pub fn oracle_success_probability(&self) -> f64 {
        self.oracle_beta2
    }

    /// Basis indices carrying weight in the input.
    pub fn support(&self) -> Vec<usize> {
        self.exact.iter().map(|c| c.index).collect()
    }

    /// The exact path's kept set.
    pub fn oracle_kept(&self) -> Vec<usize> {
        let p = &self.projector.params;
        self.exact
            .iter()
            .filter(|c| !p.flagged(c.estimate))
            .map(|c| c.index)
            .collect()
    }

    /// Repeat flag-and-measure trials until the flag reads "kept" or the
    /// cap is reached.
    pub fn run<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ProjectionOutcome> {
        let params = &self.projector.params;
        let engine = self.projector.engine;
        let cap = params.iteration_cap(engine.cols(), self.oracle_beta2);
        for iteration in 1..=cap {
            let sampled;
            let components: &[SveComponent] = match &self.circuit {
                None => &self.exact,
                Some(c) => {
                    sampled = c.sample_estimates(rng);
                    &sampled
                }
            };
            let kept: Vec<&SveComponent> = components.iter().filter(|c| !params.flagged(c.estimate)).collect();
            let beta2: f64 = kept.iter().map(|c| c.alpha * c.alpha).sum();
            if rng.random::<f64>() < beta2 {
                let basis = &engine.spectrum().basis;
                let mut state = vec![0.0; engine.cols()];
                for c in &kept {
                    for (s, v) in state.iter_mut().zip(&basis[c.index]) {
                        *s += c.alpha * v;
                    }
                }
                let len = norm(&state);
                state.iter_mut().for_each(|s| *s /= len);
                let mut kept_idx: Vec<usize> = kept.iter().map(|c| c.index).collect();
                kept_idx.sort_unstable();
                let band = kept
                    .iter()
                    .filter(|c| c.sigma < params.sigma)
                    .map(|c| c.index)
                    .collect();
                return Ok(ProjectionOutcome {
                    path: self.projector.path,
                    state,
                    iterations: iteration,
                    success_probability: beta2,
                    kept: kept_idx,
                    band,
                });
            }
        }
        Err(Error::ProjectionEmpty {
            iterations: cap,
            success_probability: self.oracle_beta2,
        })
    }
}

/// `{i ∈ support : σ_i ≥ σ} ⊆ kept ⊆ {i : σ_i ≥ (1-κ)σ}`.
///
/// Components outside the input's support carry no weight and never appear
/// in a kept set, so the lower inclusion is checked on the support only.
pub fn kept_sandwich_holds(spectrum: &Spectrum, support: &[usize], kept: &[usize], sigma: f64, kappa: f64) -> bool {
    let upper = kept.iter().all(|&i| spectrum.sigma(i) >= (1.0 - kappa) * sigma);
    let lower = support
        .iter()
        .filter(|&&i| spectrum.sigma(i) >= sigma)
        .all(|i| kept.contains(i));
    upper && lower
}

/// Convenience wrapper: one projection of `x`.
pub fn threshold_project<R: Rng + ?Sized>(
    engine: &SveEngine,
    x: &[f64],
    params: ProjectionParams,
    path: SvePath,
    rng: &mut R,
) -> Result<ProjectionOutcome> {
    Projector::new(engine, params, path)?.project(x, rng)
}
