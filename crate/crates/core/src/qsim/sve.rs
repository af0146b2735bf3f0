use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::phase::{bin_phase, fold_bin, phase_estimation_with, sve_bits, walk_complex};
use super::state::QuantumState;
use super::walk::WalkOperator;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm, svd, DenseMatrix, SvdFactorization};
use crate::sample_tree::{ceil_log2, MatrixStore};

/// Components of `|x⟩` with squared amplitude at or below this are dropped
/// from SVE output.
pub const WEIGHT_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SvePath {
    #[default]
    Exact,
    Circuit,
}

impl fmt::Display for SvePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SvePath::Exact => "exact",
            SvePath::Circuit => "circuit",
        })
    }
}

impl FromStr for SvePath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SvePath::Exact),
            "circuit" => Ok(SvePath::Circuit),
            other => invalid(format!("unknown path {other:?}, expected exact or circuit")),
        }
    }
}

/// Median-boosting rounds `2⌈log2(mn)⌉ + 1`.
pub fn boost_rounds(rows: usize, cols: usize) -> usize {
    2 * ceil_log2(rows * cols) as usize + 1
}

/// Estimate `cos(π b / N)·‖A‖_F` of folded bin `b`.
fn bin_estimate(folded: usize, bins: usize, frobenius: f64) -> f64 {
    (PI * folded as f64 / bins as f64).cos() * frobenius
}

/// One right-singular component of the input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SveComponent {
    /// Position in the completed right basis (singular vectors first).
    pub index: usize,
    /// `⟨v_i, x⟩ / ‖x‖`.
    pub alpha: f64,
    /// True singular value (zero for null-space vectors).
    pub sigma: f64,
    /// `σ̄_i`.
    pub estimate: f64,
    /// Folded estimate bin.
    pub bin: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SveOutput {
    pub path: SvePath,
    pub epsilon: f64,
    pub bins: usize,
    pub frobenius: f64,
    pub components: Vec<SveComponent>,
    /// Circuit path only: weight left outside `Col(Q)` when `Qᵗ` is applied
    /// without uncomputing the register.
    pub garbage: Option<f64>,
}

impl SveOutput {
    pub fn component(&self, index: usize) -> Option<&SveComponent> {
        self.components.iter().find(|c| c.index == index)
    }

    /// `Σ α_i²` over the reported components.
    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.alpha * c.alpha).sum()
    }

    /// `max_i |σ̄_i - σ_i| / ‖A‖_F`.
    pub fn max_relative_error(&self) -> f64 {
        self.components
            .iter()
            .map(|c| (c.estimate - c.sigma).abs() / self.frobenius)
            .fold(0.0, f64::max)
    }
}

/// SVD data every path needs.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub svd: SvdFactorization,
    /// Orthonormal basis of `R^n`, right singular vectors first.
    pub basis: Vec<Vec<f64>>,
    pub frobenius: f64,
}

impl Spectrum {
    pub fn new(a: &DenseMatrix, frobenius: f64) -> Result<Self> {
        let svd = svd(a)?;
        let basis = svd.complete_right_basis();
        Ok(Self { svd, basis, frobenius })
    }

    /// `σ_i` for basis index `i`, zero beyond the rank.
    pub fn sigma(&self, i: usize) -> f64 {
        self.svd.singular_values.get(i).copied().unwrap_or(0.0)
    }

    /// `θ_i = 2 arccos(σ_i / ‖A‖_F)`.
    pub fn theta(&self, i: usize) -> f64 {
        2.0 * (self.sigma(i) / self.frobenius).min(1.0).acos()
    }

    /// `(i, α_i)` for the components of `x / ‖x‖` above [`WEIGHT_FLOOR`].
    pub fn components(&self, x: &[f64]) -> Result<Vec<(usize, f64)>> {
        if x.len() != self.basis.len() {
            return invalid(format!("vector has dimension {}, expected {}", x.len(), self.basis.len()));
        }
        let len = norm(x);
        if !(len > 0.0) {
            return Err(Error::ZeroVector);
        }
        Ok(self
            .basis
            .iter()
            .enumerate()
            .map(|(i, v)| (i, dot(v, x) / len))
            .filter(|(_, a)| a * a > WEIGHT_FLOOR)
            .collect())
    }
}

/// Per-component folded-bin distributions produced by one circuit run.
#[derive(Clone, Debug)]
pub struct CircuitSpectrum {
    pub bins: usize,
    pub rounds: usize,
    pub epsilon: f64,
    pub frobenius: f64,
    pub components: Vec<CircuitComponent>,
    pub garbage: f64,
}

#[derive(Clone, Debug)]
pub struct CircuitComponent {
    pub index: usize,
    pub alpha: f64,
    pub sigma: f64,
    /// Probability of each folded bin `0..=N/2` for this component alone.
    pub folded: Vec<f64>,
    cumulative: Vec<f64>,
}

impl CircuitComponent {
    fn new(index: usize, alpha: f64, sigma: f64, folded: Vec<f64>) -> Self {
        let cumulative = folded
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p.max(0.0);
                Some(*acc)
            })
            .collect();
        Self {
            index,
            alpha,
            sigma,
            folded,
            cumulative,
        }
    }

    /// Draw one folded bin.
    pub fn sample_bin<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("at least one bin");
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

impl CircuitSpectrum {
    /// One boosted estimate per component: the median of `rounds` folded
    /// bins sampled from the component's register distribution.
    pub fn sample_estimates<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<SveComponent> {
        self.components
            .iter()
            .map(|c| {
                let mut draws: Vec<usize> = (0..self.rounds).map(|_| c.sample_bin(rng)).collect();
                draws.sort_unstable();
                let bin = draws[draws.len() / 2];
                SveComponent {
                    index: c.index,
                    alpha: c.alpha,
                    sigma: c.sigma,
                    estimate: bin_estimate(bin, self.bins, self.frobenius),
                    bin,
                }
            })
            .collect()
    }
}

/// Singular value estimation against a stored matrix.
#[derive(Clone, Debug)]
pub struct SveEngine {
    spectrum: Spectrum,
    walk: WalkOperator,
}

impl SveEngine {
    pub fn new(store: &MatrixStore) -> Result<Self> {
        let walk = WalkOperator::new(store)?;
        let spectrum = Spectrum::new(&store.to_dense(), store.frobenius_norm())?;
        Ok(Self { spectrum, walk })
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn svd(&self) -> &SvdFactorization {
        &self.spectrum.svd
    }

    pub fn walk(&self) -> &WalkOperator {
        &self.walk
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.spectrum.frobenius
    }

    pub fn rows(&self) -> usize {
        self.walk.rows()
    }

    pub fn cols(&self) -> usize {
        self.walk.cols()
    }

    /// Estimate every singular component of `x` to within `ε‖A‖_F`.
    pub fn sve<R: Rng + ?Sized>(&self, x: &[f64], epsilon: f64, path: SvePath, rng: &mut R) -> Result<SveOutput> {
        match path {
            SvePath::Exact => self.sve_exact(x, epsilon),
            SvePath::Circuit => {
                let circuit = self.circuit_spectrum(x, epsilon)?;
                Ok(SveOutput {
                    path,
                    epsilon,
                    bins: circuit.bins,
                    frobenius: circuit.frobenius,
                    components: circuit.sample_estimates(rng),
                    garbage: Some(circuit.garbage),
                })
            }
        }
    }

    /// Exact-path `(folded bin, σ̄)` of basis vector `index` on a grid of
    /// `bins` points.
    pub fn exact_estimate(&self, index: usize, bins: usize) -> (usize, f64) {
        let bin = fold_bin(bin_phase(self.spectrum.theta(index), bins), bins);
        (bin, bin_estimate(bin, bins, self.spectrum.frobenius))
    }

    /// Exact path: each component's phase rounded to the nearest bin.
    pub fn sve_exact(&self, x: &[f64], epsilon: f64) -> Result<SveOutput> {
        let bins = 1usize << sve_bits(epsilon)?;
        let fro = self.spectrum.frobenius;
        let components = self
            .spectrum
            .components(x)?
            .into_iter()
            .map(|(index, alpha)| {
                let (bin, estimate) = self.exact_estimate(index, bins);
                SveComponent {
                    index,
                    alpha,
                    sigma: self.spectrum.sigma(index),
                    estimate,
                    bin,
                }
            })
            .collect();
        Ok(SveOutput {
            path: SvePath::Exact,
            epsilon,
            bins,
            frobenius: fro,
            components,
            garbage: None,
        })
    }

    /// Run phase estimation of `W` on `Q|x⟩` and split the register
    /// distribution by component.
    ///
    /// Component `i` evolves inside the `W`-invariant plane
    /// `span(Qv_i, Pu_i)` (a line when `σ_i = 0` or `σ_i = ‖A‖_F`), and these
    /// planes are mutually orthogonal, so projecting each register branch
    /// onto the plane isolates that component's estimate distribution.
    pub fn circuit_spectrum(&self, x: &[f64], epsilon: f64) -> Result<CircuitSpectrum> {
        let components = self.spectrum.components(x)?;
        let bits = sve_bits(epsilon)?;
        let state = self.walk.apply_q(&QuantumState::from_real(x)?)?;
        let register = phase_estimation_with(|v| walk_complex(&self.walk, v), &state, bits)?;
        let bins = register.bins();
        let half = bins / 2;

        let mut out = Vec::with_capacity(components.len());
        for (index, alpha) in components {
            let sigma = self.spectrum.sigma(index);
            let e1 = self.walk.q_real(&self.spectrum.basis[index]);
            let mut plane = vec![e1];
            if sigma > 0.0 {
                let pu = self.walk.p_real(&self.spectrum.svd.left[index]);
                let c = dot(&plane[0], &pu);
                let mut e2: Vec<f64> = pu.iter().zip(&plane[0]).map(|(p, q)| p - c * q).collect();
                let len = norm(&e2);
                if len > 1e-9 {
                    e2.iter_mut().for_each(|v| *v /= len);
                    plane.push(e2);
                }
            }
            let raw = register.subspace_distribution(&plane);
            let mut folded = vec![0.0; half + 1];
            for (a, p) in raw.into_iter().enumerate() {
                folded[fold_bin(a, bins)] += p / (alpha * alpha);
            }
            out.push(CircuitComponent::new(index, alpha, sigma, folded));
        }

        let mut returned = 0.0;
        for a in 0..bins {
            let branch = QuantumState::from_raw(register.conditional(a));
            returned += self
                .walk
                .apply_q_adjoint(&branch)?
                .iter()
                .map(|z| z.norm_sqr())
                .sum::<f64>();
        }

        Ok(CircuitSpectrum {
            bins,
            rounds: boost_rounds(self.rows(), self.cols()),
            epsilon,
            frobenius: self.spectrum.frobenius,
            components: out,
            garbage: (1.0 - returned).max(0.0),
        })
    }
}
