//! Boolean preference model, recommendation quality bounds and the
//! end-to-end recommender.
//!
//! A product `j` is a good recommendation for user `i` iff `T_ij = 1`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, pseudo_project_row, svd, truncate_top_k, DenseMatrix};
use crate::qproject::{PreparedProjection, ProjectionOutcome, ProjectionParams, Projector};
use crate::qsim::{SveEngine, SvePath};
use crate::sample_tree::{MatrixStore, RowTree};
use crate::subsample::DEFAULT_KAPPA;

/// How the `k` type rows are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TypeRule {
    /// Each product is good for a type independently with this probability.
    Random { density: f64 },
    /// Each type scores products uniformly at random and likes the top
    /// `fraction` of them.
    Top { fraction: f64 },
}

impl Default for TypeRule {
    fn default() -> Self {
        TypeRule::Random { density: 0.5 }
    }
}

/// `m` users drawn from `k` types, with independent bit flips.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PreferenceModel {
    pub users: usize,
    pub products: usize,
    pub types: usize,
    pub noise: f64,
    pub rule: TypeRule,
    pub type_rows: Vec<Vec<bool>>,
    /// Type of each user.
    pub assignment: Vec<usize>,
    matrix: DenseMatrix,
}

impl PreferenceModel {
    pub fn generate<R: Rng + ?Sized>(
        m: usize,
        n: usize,
        k: usize,
        noise: f64,
        rule: TypeRule,
        rng: &mut R,
    ) -> Result<Self> {
        if m == 0 || n == 0 || k == 0 || k > m.min(n) {
            return invalid(format!("need 1 <= k <= min(m, n), got m={m}, n={n}, k={k}"));
        }
        if !(0.0..0.5).contains(&noise) {
            return invalid(format!("noise {noise} must lie in [0, 0.5)"));
        }
        let type_rows = (0..k).map(|_| draw_type(n, rule, rng)).collect::<Result<Vec<_>>>()?;
        let assignment: Vec<usize> = (0..m).map(|_| rng.random_range(0..k)).collect();
        let mut matrix = DenseMatrix::zeros(m, n);
        for (i, &t) in assignment.iter().enumerate() {
            for j in 0..n {
                let flip = noise > 0.0 && rng.random::<f64>() < noise;
                if type_rows[t][j] != flip {
                    matrix.set(i, j, 1.0);
                }
            }
        }
        Ok(Self {
            users: m,
            products: n,
            types: k,
            noise,
            rule,
            type_rows,
            assignment,
            matrix,
        })
    }

    /// The preference matrix `T`.
    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    /// `‖T - T_k‖_F / ‖T‖_F`.
    pub fn measured_epsilon(&self) -> Result<f64> {
        measured_epsilon(&self.matrix, self.types)
    }

    pub fn is_good(&self, user: usize, product: usize) -> bool {
        self.matrix.get(user, product) == 1.0
    }
}

fn draw_type<R: Rng + ?Sized>(n: usize, rule: TypeRule, rng: &mut R) -> Result<Vec<bool>> {
    let mut row = match rule {
        TypeRule::Random { density } => {
            if !(density > 0.0 && density <= 1.0) {
                return invalid(format!("type density {density} must lie in (0, 1]"));
            }
            (0..n).map(|_| rng.random::<f64>() < density).collect::<Vec<_>>()
        }
        TypeRule::Top { fraction } => {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return invalid(format!("top fraction {fraction} must lie in (0, 1]"));
            }
            let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
            let take = ((fraction * n as f64).ceil() as usize).max(1);
            let mut row = vec![false; n];
            order[..take].iter().for_each(|&j| row[j] = true);
            row
        }
    };
    if !row.contains(&true) {
        row[rng.random_range(0..n)] = true;
    }
    Ok(row)
}

/// `‖T - T_k‖_F / ‖T‖_F`.
pub fn measured_epsilon(t: &DenseMatrix, k: usize) -> Result<f64> {
    let fro = t.frobenius_norm();
    if !(fro > 0.0) {
        return invalid("relative error of the zero matrix is undefined");
    }
    let f = svd(t)?;
    Ok(t.sub(&truncate_top_k(&f, k)).frobenius_norm() / fro)
}

/// `(ε/(1-ε))²`: bound on the probability that an l2 sample of `T̃` is bad
/// when `‖T - T̃‖_F ≤ ε‖T‖_F`.
pub fn bad_sample_bound(epsilon: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&epsilon) {
        return invalid(format!("ε = {epsilon} must lie in [0, 1)"));
    }
    Ok((epsilon / (1.0 - epsilon)).powi(2))
}

/// `γ` (row-norm spread), `δ` (closeness failure mass), `ζ` (atypical mass)
/// and `ξ` (Markov tail mass).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypicalityParams {
    pub gamma: f64,
    pub delta: f64,
    pub zeta: f64,
    pub xi: f64,
}

impl TypicalityParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("γ", self.gamma), ("δ", self.delta), ("ζ", self.zeta), ("ξ", self.xi)] {
            if !(v > 0.0 && v < 1.0) {
                return invalid(format!("{name} = {v} must lie in (0, 1)"));
            }
        }
        if !(1.0 - self.delta - self.zeta > 0.0) {
            return invalid("need δ + ζ < 1");
        }
        Ok(())
    }
}

fn typical_denominator(epsilon: f64, gamma: f64, delta: f64, zeta: f64) -> Result<f64> {
    let gap = 1.0 / (1.0 + gamma).sqrt() - epsilon / delta.sqrt();
    if !(gap > 0.0) {
        return Err(Error::BoundVacuous(format!(
            "1/√(1+γ) = {} does not exceed ε/√δ = {}",
            1.0 / (1.0 + gamma).sqrt(),
            epsilon / delta.sqrt()
        )));
    }
    let mass = 1.0 - delta - zeta;
    if !(mass > 0.0) {
        return Err(Error::BoundVacuous(format!("1 - δ - ζ = {mass} is not positive")));
    }
    Ok(gap * gap * mass)
}

/// Average bad-recommendation probability over the typical users `S'`:
/// `(ε(1+ε)/(1-ε))² / ((1/√(1+γ) - ε/√δ)² (1-δ-ζ))`.
pub fn typical_user_bound(epsilon: f64, gamma: f64, delta: f64, zeta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::BoundVacuous(format!("ε = {epsilon} is not below 1")));
    }
    let num = (epsilon * (1.0 + epsilon) / (1.0 - epsilon)).powi(2);
    Ok(num / typical_denominator(epsilon, gamma, delta, zeta)?)
}

/// [`typical_user_bound`] with `9ε` in place of `ε`, the guarantee for the
/// quantum recommender's reconstruction.
pub fn typical_user_bound_algorithm(epsilon: f64, gamma: f64, delta: f64, zeta: f64) -> Result<f64> {
    typical_user_bound(9.0 * epsilon, gamma, delta, zeta)
}

/// Markov bound on `W_i` met by at least `(1-ξ)|S'|` users:
/// `(1+ε)² / (ξ (1-δ-ζ) (1/√(1+γ) - 9ε/√δ)²)`.
pub fn w_markov_bound(epsilon: f64, t: &TypicalityParams) -> Result<f64> {
    let den = typical_denominator(9.0 * epsilon, t.gamma, t.delta, t.zeta)?;
    Ok((1.0 + epsilon).powi(2) / (t.xi * den))
}

/// Minimise `bound(δ)` over a grid of `δ ∈ (0, 1-ζ)`. Returns `None` when
/// the bound is vacuous for every grid point.
pub fn optimise_delta(zeta: f64, bound: impl Fn(f64) -> Result<f64>) -> Option<(f64, f64)> {
    let steps = 2000;
    let top = 1.0 - zeta;
    (1..steps)
        .map(|s| top * s as f64 / steps as f64)
        .filter_map(|d| bound(d).ok().map(|b| (d, b)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Ratio of the typical-user bound to the plain sampling bound at the best
/// `δ`, i.e. how much restricting to typical users inflates the error.
pub fn calibration_ratio(epsilon: f64, gamma: f64, zeta: f64) -> Option<(f64, f64)> {
    let plain = bad_sample_bound(epsilon).ok()?;
    optimise_delta(zeta, |d| typical_user_bound(epsilon, gamma, d, zeta)).map(|(d, b)| (d, b / plain))
}

fn row_norm_sq(t: &DenseMatrix, i: usize) -> f64 {
    dot(t.row(i), t.row(i))
}

/// Users with `‖T‖_F²/((1+γ)m) ≤ ‖T_i‖² ≤ (1+γ)‖T‖_F²/m`.
pub fn typical_set(t: &DenseMatrix, gamma: f64) -> Vec<usize> {
    let avg = t.frobenius_norm().powi(2) / t.rows() as f64;
    (0..t.rows())
        .filter(|&i| {
            let r = row_norm_sq(t, i);
            avg / (1.0 + gamma) <= r && r <= (1.0 + gamma) * avg
        })
        .collect()
}

/// Smallest `γ` for which at least `fraction` of the users are typical.
pub fn gamma_for_fraction(t: &DenseMatrix, fraction: f64) -> f64 {
    let avg = t.frobenius_norm().powi(2) / t.rows() as f64;
    let mut spread: Vec<f64> = (0..t.rows())
        .map(|i| {
            let r = row_norm_sq(t, i) / avg;
            if r > 0.0 {
                r.max(1.0 / r) - 1.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    spread.sort_by(f64::total_cmp);
    let idx = ((fraction * t.rows() as f64).ceil() as usize).clamp(1, t.rows()) - 1;
    spread[idx]
}

/// Users with `‖T_i - T̃_i‖² ≤ ε²‖T‖_F² / (δ m)`.
pub fn closeness_set(t: &DenseMatrix, approx: &DenseMatrix, epsilon: f64, delta: f64) -> Vec<usize> {
    let limit = epsilon * epsilon * t.frobenius_norm().powi(2) / (delta * t.rows() as f64);
    (0..t.rows())
        .filter(|&i| {
            let d: f64 = t.row(i).iter().zip(approx.row(i)).map(|(a, b)| (a - b).powi(2)).sum();
            d <= limit
        })
        .collect()
}

/// `W_i = ‖row‖² / ‖projected‖²`; infinite when the projection vanishes.
pub fn w_statistic(row: &[f64], projected: &[f64]) -> f64 {
    let den = dot(projected, projected);
    if den > 0.0 {
        dot(row, row) / den
    } else {
        f64::INFINITY
    }
}

/// Probability that an l2 sample from `approx_row` lands on a zero of
/// `t_row`.
pub fn row_bad_probability(t_row: &[f64], approx_row: &[f64]) -> f64 {
    let total = dot(approx_row, approx_row);
    if !(total > 0.0) {
        return 0.0;
    }
    let bad: f64 = t_row
        .iter()
        .zip(approx_row)
        .filter(|(t, _)| **t != 1.0)
        .map(|(_, a)| a * a)
        .sum();
    bad / total
}

/// Probability that an l2 sample of the whole matrix `approx` is bad for `t`.
pub fn matrix_bad_probability(t: &DenseMatrix, approx: &DenseMatrix) -> f64 {
    let total = approx.frobenius_norm().powi(2);
    if !(total > 0.0) {
        return 0.0;
    }
    let bad: f64 = t
        .as_slice()
        .iter()
        .zip(approx.as_slice())
        .filter(|(t, _)| **t != 1.0)
        .map(|(_, a)| a * a)
        .sum();
    bad / total
}

/// Fraction of `samples` l2 samples from `store` that are bad for `t`.
pub fn sampled_bad_rate<R: Rng + ?Sized>(
    t: &DenseMatrix,
    store: &MatrixStore,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let mut bad = 0usize;
    for _ in 0..samples {
        let (i, j) = store.l2_sample_entry(rng)?;
        if t.get(i, j) != 1.0 {
            bad += 1;
        }
    }
    Ok(bad as f64 / samples as f64)
}

/// `T + ε‖T‖_F · E/‖E‖_F` for a random sign-and-magnitude `E`, so that
/// `‖T - T̃‖_F = ε‖T‖_F` exactly up to rounding. With `bad_only`, `E` lives
/// on the zeros of `T`, which is the least favourable placement.
pub fn plant_instance<R: Rng + ?Sized>(t: &DenseMatrix, epsilon: f64, bad_only: bool, rng: &mut R) -> Result<DenseMatrix> {
    let mut e = DenseMatrix::zeros(t.rows(), t.cols());
    for i in 0..t.rows() {
        for j in 0..t.cols() {
            if bad_only && t.get(i, j) == 1.0 {
                continue;
            }
            e.set(i, j, rng.random_range(-1.0..1.0));
        }
    }
    let en = e.frobenius_norm();
    if !(en > 0.0) {
        return invalid("no room to plant a perturbation");
    }
    let scale = epsilon * t.frobenius_norm() / en;
    let data = t
        .as_slice()
        .iter()
        .zip(e.as_slice())
        .map(|(a, b)| a + scale * b)
        .collect();
    DenseMatrix::from_row_major(t.rows(), t.cols(), data)
}

/// One recommendation and its diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub user: usize,
    pub product: usize,
    pub iterations: usize,
    pub success_probability: f64,
    pub kept: Vec<usize>,
}

/// Recommender over a (subsampled) preference matrix `T̂`.
#[derive(Clone, Debug)]
pub struct Recommender {
    store: MatrixStore,
    engine: SveEngine,
    params: ProjectionParams,
    path: SvePath,
}

impl Recommender {
    pub fn new(store: MatrixStore, params: ProjectionParams, path: SvePath) -> Result<Self> {
        let engine = SveEngine::new(&store)?;
        Projector::new(&engine, params, path)?;
        Ok(Self {
            store,
            engine,
            params,
            path,
        })
    }

    /// Threshold `σ = √(ε²p/(2k))·‖T̂‖_F` with `κ = 1/3`.
    pub fn for_subsample(store: MatrixStore, k: usize, epsilon: f64, p: f64, path: SvePath) -> Result<Self> {
        let sigma = recommendation_sigma(store.frobenius_norm(), k, epsilon, p);
        let params = ProjectionParams::new(sigma, DEFAULT_KAPPA)?;
        Self::new(store, params, path)
    }

    pub fn store(&self) -> &MatrixStore {
        &self.store
    }

    pub fn engine(&self) -> &SveEngine {
        &self.engine
    }

    pub fn params(&self) -> &ProjectionParams {
        &self.params
    }

    pub fn path(&self) -> SvePath {
        self.path
    }

    pub fn projector(&self) -> Projector<'_> {
        Projector::new(&self.engine, self.params, self.path).expect("validated at construction")
    }

    /// `T̂_i`, or a cold-start error for an empty row.
    pub fn user_row(&self, user: usize) -> Result<Vec<f64>> {
        if !(self.store.row_norm(user)? > 0.0) {
            return Err(Error::ColdStart(user));
        }
        self.store.row_values(user)
    }

    pub fn prepare_user(&self, user: usize) -> Result<PreparedProjection<'_>> {
        self.projector().prepare(&self.user_row(user)?)
    }

    /// Project `T̂_i` and measure the result to obtain a product.
    pub fn recommend<R: Rng + ?Sized>(&self, user: usize, rng: &mut R) -> Result<Recommendation> {
        let outcome = self.prepare_user(user)?.run(rng)?;
        Ok(Self::measure(user, &outcome, rng))
    }

    pub fn measure<R: Rng + ?Sized>(user: usize, outcome: &ProjectionOutcome, rng: &mut R) -> Recommendation {
        Recommendation {
            user,
            product: outcome.sample(rng),
            iterations: outcome.iterations,
            success_probability: outcome.success_probability,
            kept: outcome.kept.clone(),
        }
    }

    /// Classical projection of `T̂_i` onto the family member fixed by `band`.
    pub fn oracle_projection(&self, user: usize, band: &[usize]) -> Result<Vec<f64>> {
        let row = self.user_row(user)?;
        pseudo_project_row(self.engine.svd(), &row, self.params.sigma, self.params.kappa, band)
    }

    /// Classical sampler: tree-based l2 sample of [`Self::oracle_projection`].
    pub fn oracle_sample<R: Rng + ?Sized>(&self, user: usize, band: &[usize], rng: &mut R) -> Result<usize> {
        let projected = self.oracle_projection(user, band)?;
        RowTree::from_values(&projected)?
            .sample(rng)
            .ok_or(Error::ProjectionEmpty {
                iterations: 0,
                success_probability: 0.0,
            })
    }
}

/// `√(ε²p/(2k))·‖T̂‖_F`.
pub fn recommendation_sigma(subsample_frobenius: f64, k: usize, epsilon: f64, p: f64) -> f64 {
    (epsilon * epsilon * p / (2.0 * k as f64)).sqrt() * subsample_frobenius
}
