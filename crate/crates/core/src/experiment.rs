//! Seeded end-to-end experiment: generate a preference matrix, subsample
//! it, run the recommender for every user and compare the measured rates
//! with the analytic bounds.
//!
//! Every random draw comes from a named stream of the master seed, and
//! per-user work uses per-user substreams, so reports are identical across
//! runs and thread counts except for `generated_at`.

use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{project_threshold, svd, DenseMatrix};
use crate::qproject::kept_sandwich_holds;
use crate::qsim::{sve_bits, SvePath};
use crate::recsys::{
    closeness_set, gamma_for_fraction, optimise_delta, row_bad_probability, typical_set, typical_user_bound,
    w_markov_bound, w_statistic, PreferenceModel, Recommender, TypeRule, TypicalityParams,
};
use crate::rng::{stream, substream};
use crate::sample_tree::MatrixStore;
use crate::subsample::{
    bound_threshold_family_error, derive_params, max_eta, subsample, threshold_sigma, BoundTerms, DEFAULT_KAPPA,
};

pub const REPORT_SCHEMA: &str = "qrec.experiment.report/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub users: usize,
    pub products: usize,
    pub rank: usize,
    pub noise: f64,
    pub rule: TypeRule,
    /// Subsampling probability.
    pub p: f64,
    pub kappa: f64,
    pub path: SvePath,
    pub seed: u64,
    pub recommendations_per_user: usize,
    /// Fraction of users the automatic `γ` makes typical.
    pub typical_fraction: f64,
    /// Fixed `γ`; otherwise chosen from `typical_fraction`.
    pub gamma: Option<f64>,
    /// Fixed `δ`; otherwise the bound is minimised over `δ`.
    pub delta: Option<f64>,
    pub xi: f64,
    pub w_histogram_bins: usize,
    /// Subsampling probabilities for the reconstruction-error sweep.
    pub p_sweep: Vec<f64>,
    pub sweep_trials: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            users: 256,
            products: 256,
            rank: 4,
            noise: 0.05,
            rule: TypeRule::default(),
            p: 0.5,
            kappa: DEFAULT_KAPPA,
            path: SvePath::Exact,
            seed: 0,
            recommendations_per_user: 40,
            typical_fraction: 0.9,
            gamma: None,
            delta: None,
            xi: 0.1,
            w_histogram_bins: 20,
            p_sweep: Vec::new(),
            sweep_trials: 8,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.products == 0 || self.rank == 0 {
            return invalid("users, products and rank must be positive");
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return invalid(format!("p = {} must lie in (0, 1]", self.p));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return invalid(format!("κ = {} must lie in (0, 1)", self.kappa));
        }
        if self.recommendations_per_user == 0 {
            return invalid("recommendations_per_user must be positive");
        }
        if !(self.typical_fraction > 0.0 && self.typical_fraction <= 1.0) {
            return invalid("typical_fraction must lie in (0, 1]");
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return invalid("ξ must lie in (0, 1)");
        }
        if self.p_sweep.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return invalid("every sweep probability must lie in (0, 1]");
        }
        Ok(())
    }
}

/// A bound value with its applicability label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelledBound {
    /// `None` when the bound is vacuous at these parameters.
    pub value: Option<f64>,
    /// `precondition-satisfied`, `extrapolated` or `vacuous`.
    pub label: String,
    pub note: Option<String>,
    /// Whether the measured quantity respects the bound (vacuous counts as
    /// respected).
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserRow {
    pub user: usize,
    pub typical: bool,
    pub in_s_prime: bool,
    pub cold_start: bool,
    pub row_norm_sq: f64,
    pub w: f64,
    pub recommendations: usize,
    pub bad: usize,
    pub exact_bad_probability: f64,
    pub mean_iterations: f64,
    pub success_probability: f64,
    pub projection_empty: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub p: f64,
    pub trials: usize,
    pub mean_relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub generated_at: u64,
    pub config: ExperimentConfig,
    pub instance: InstanceSummary,
    pub parameters: ParameterSummary,
    pub reconstruction: ReconstructionSummary,
    pub typicality: TypicalityParams,
    pub typical_users: usize,
    pub s_prime_users: usize,
    pub rates: RateSummary,
    pub w_statistic: WSummary,
    pub iterations: IterationSummary,
    pub invariants: InvariantSummary,
    pub p_sweep: Vec<SweepPoint>,
    pub p_sweep_monotone: Option<bool>,
    pub seeds: SeedSummary,
    #[serde(skip)]
    pub per_user: Vec<UserRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub frobenius: f64,
    /// `‖T - T_k‖_F / ‖T‖_F`.
    pub measured_epsilon: f64,
    pub subsample_frobenius: f64,
    pub subsample_entries: usize,
    pub cold_start_users: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub sigma: f64,
    pub kappa: f64,
    pub mu: f64,
    pub sve_precision: f64,
    pub b: f64,
    pub eta_max: f64,
    pub advisory_p: f64,
    pub norm_precondition: bool,
    pub epsilon_in_range: bool,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionSummary {
    /// `‖T - T̃‖_F / ‖T‖_F` with `T̃` the recommender's projected matrix.
    pub relative_error: f64,
    pub kept_singular_values: Vec<f64>,
    /// Right-hand side of the `(σ, κ)` family bound, relative to `‖T‖_F`.
    pub family_bound: f64,
    pub nine_epsilon: f64,
    pub family_bound_holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub empirical_bad_rate_all: f64,
    pub empirical_bad_rate_typical: f64,
    pub empirical_bad_rate_s_prime: f64,
    pub exact_bad_rate_s_prime: f64,
    pub recommendations: usize,
    /// Typical-user bound evaluated at the measured reconstruction error.
    pub typical_user_bound: LabelledBound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WSummary {
    pub mean_s_prime: f64,
    pub infinite: usize,
    pub markov_bound: LabelledBound,
    pub fraction_within_bound: f64,
    pub histogram: Histogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub mean: f64,
    pub mean_expected: f64,
    pub projection_empty_users: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantSummary {
    pub kept_sandwich: bool,
    pub rates_in_unit_interval: bool,
    pub all_hold: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub master: u64,
    pub streams: Vec<String>,
}

fn label(satisfied: bool) -> String {
    if satisfied { "precondition-satisfied" } else { "extrapolated" }.to_string()
}

pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let seed = config.seed;
    let model = PreferenceModel::generate(
        config.users,
        config.products,
        config.rank,
        config.noise,
        config.rule,
        &mut stream(seed, "model"),
    )?;
    let t = model.matrix();
    let fro = t.frobenius_norm();
    let measured_epsilon = model.measured_epsilon()?;
    let b = t.max_abs();

    let t_hat = subsample(t, config.p, &mut stream(seed, "subsample"))?;
    let store = MatrixStore::from_dense(&t_hat)?;
    let recommender = Recommender::for_subsample(store, config.rank, measured_epsilon, config.p, config.path)?;
    let params = *recommender.params();
    let hat_fro = recommender.store().frobenius_norm();
    let mu = measured_epsilon * measured_epsilon * config.p / 2.0;
    debug_assert!((threshold_sigma(mu, config.rank, hat_fro) - params.sigma).abs() <= 1e-12 * hat_fro);
    let derived = derive_params(fro, config.products, config.rank, measured_epsilon, b)?;

    // The exact path's kept set is a property of the spectrum; it defines T̃.
    let spectrum = recommender.engine().spectrum();
    let sve_eps = params.sve_precision(hat_fro);
    let bins = 1usize << sve_bits(sve_eps)?;
    let global_kept: Vec<usize> = (0..spectrum.svd.rank())
        .filter(|&i| !params.flagged(recommender.engine().exact_estimate(i, bins).1))
        .collect();
    let t_tilde = spectrum.svd.reconstruct_from(&global_kept);
    let relative_error = t.sub(&t_tilde).frobenius_norm() / fro;
    let terms = BoundTerms {
        tail: measured_epsilon * fro,
        frobenius: fro,
        eta: max_eta(config.products, config.rank, measured_epsilon, fro),
        k: config.rank,
        mu,
        p: config.p,
    };
    let family_bound = bound_threshold_family_error(&terms, config.kappa) / fro;

    // Typicality.
    let gamma = config.gamma.unwrap_or_else(|| gamma_for_fraction(t, config.typical_fraction));
    let typical = typical_set(t, gamma);
    let zeta = (1.0 - typical.len() as f64 / config.users as f64).max(1e-9);
    let bound_at = |d: f64| typical_user_bound(relative_error, gamma, d, zeta);
    let (delta, bound_value) = match config.delta {
        Some(d) => (d, bound_at(d).ok()),
        None => match optimise_delta(zeta, bound_at) {
            Some((d, v)) => (d, Some(v)),
            None => (0.5 * (1.0 - zeta), None),
        },
    };
    let typicality = TypicalityParams {
        gamma,
        delta,
        zeta,
        xi: config.xi,
    };
    let close = closeness_set(t, &t_tilde, relative_error, delta);
    let mut in_s = vec![false; config.users];
    typical.iter().for_each(|&i| in_s[i] = true);
    let mut in_s_prime = vec![false; config.users];
    close.iter().filter(|&&i| in_s[i]).for_each(|&i| in_s_prime[i] = true);

    // Per-user recommendations.
    let rows: Vec<(UserRow, bool)> = (0..config.users)
        .into_par_iter()
        .map(|user| {
            let mut rng = substream(seed, "user", user as u64);
            let base = UserRow {
                user,
                typical: in_s[user],
                in_s_prime: in_s_prime[user],
                cold_start: false,
                row_norm_sq: t.row(user).iter().map(|x| x * x).sum(),
                w: f64::INFINITY,
                recommendations: 0,
                bad: 0,
                exact_bad_probability: row_bad_probability(t.row(user), t_tilde.row(user)),
                mean_iterations: 0.0,
                success_probability: 0.0,
                projection_empty: false,
            };
            let prepared = match recommender.prepare_user(user) {
                Ok(p) => p,
                Err(Error::ColdStart(_)) => return Ok((UserRow { cold_start: true, ..base }, true)),
                Err(e) => return Err(e),
            };
            let row = recommender.user_row(user)?;
            let support = prepared.support();
            let mut out = base;
            let mut sandwich = true;
            let mut iterations = 0usize;
            for _ in 0..config.recommendations_per_user {
                match prepared.run(&mut rng) {
                    Ok(outcome) => {
                        sandwich &=
                            kept_sandwich_holds(spectrum, &support, &outcome.kept, params.sigma, params.kappa);
                        if out.recommendations == 0 {
                            let projected = recommender.oracle_projection(user, &outcome.band)?;
                            out.w = w_statistic(&row, &projected);
                            out.success_probability = outcome.success_probability;
                        }
                        let product = outcome.sample(&mut rng);
                        iterations += outcome.iterations;
                        out.recommendations += 1;
                        if t.get(user, product) != 1.0 {
                            out.bad += 1;
                        }
                    }
                    Err(Error::ProjectionEmpty { .. }) => {
                        out.projection_empty = true;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            if out.recommendations > 0 {
                out.mean_iterations = iterations as f64 / out.recommendations as f64;
            }
            Ok((out, sandwich))
        })
        .collect::<Result<Vec<_>>>()?;
    let kept_sandwich_ok = rows.iter().all(|(_, s)| *s);
    let per_user: Vec<UserRow> = rows.into_iter().map(|(r, _)| r).collect();

    let rate = |filter: &dyn Fn(&UserRow) -> bool| {
        let (bad, total) = per_user
            .iter()
            .filter(|r| filter(r))
            .fold((0usize, 0usize), |(b, n), r| (b + r.bad, n + r.recommendations));
        if total == 0 {
            0.0
        } else {
            bad as f64 / total as f64
        }
    };
    let empirical_all = rate(&|_| true);
    let empirical_typical = rate(&|r| r.typical);
    let empirical_s_prime = rate(&|r| r.in_s_prime);
    let s_prime_rows: Vec<&UserRow> = per_user.iter().filter(|r| r.in_s_prime).collect();
    let exact_s_prime = if s_prime_rows.is_empty() {
        0.0
    } else {
        s_prime_rows.iter().map(|r| r.exact_bad_probability).sum::<f64>() / s_prime_rows.len() as f64
    };
    let precondition = derived.norm_precondition && relative_error < 1.0;
    let typical_bound = match bound_value {
        Some(v) => LabelledBound {
            value: Some(v),
            label: label(precondition),
            note: (v >= 1.0).then(|| "bound is at least 1 and carries no information".to_string()),
            holds: empirical_s_prime <= v,
        },
        None => LabelledBound {
            value: None,
            label: "vacuous".into(),
            note: Some(format!(
                "1/√(1+γ) ≤ 9ε̂/√δ for every δ < 1-ζ at 9ε̂ = {relative_error:.4}, γ = {gamma:.4}"
            )),
            holds: true,
        },
    };

    // W statistics over S'.
    let finite_w: Vec<f64> = s_prime_rows.iter().map(|r| r.w).filter(|w| w.is_finite()).collect();
    let infinite = per_user.iter().filter(|r| !r.cold_start && r.w.is_infinite()).count();
    let mean_w = if finite_w.is_empty() {
        f64::NAN
    } else {
        finite_w.iter().sum::<f64>() / finite_w.len() as f64
    };
    let eps_hat = relative_error / 9.0;
    let markov = match w_markov_bound(eps_hat, &typicality) {
        Ok(v) => {
            let within = finite_w.iter().filter(|&&w| w <= v).count() as f64 / finite_w.len().max(1) as f64;
            (
                LabelledBound {
                    value: Some(v),
                    label: label(precondition),
                    note: None,
                    holds: within >= 1.0 - config.xi,
                },
                within,
            )
        }
        Err(e) => (
            LabelledBound {
                value: None,
                label: "vacuous".into(),
                note: Some(e.to_string()),
                holds: true,
            },
            f64::NAN,
        ),
    };

    let active: Vec<&UserRow> = per_user.iter().filter(|r| r.recommendations > 0).collect();
    let mean_iterations = active.iter().map(|r| r.mean_iterations).sum::<f64>() / active.len().max(1) as f64;
    let mean_expected = active.iter().map(|r| 1.0 / r.success_probability).sum::<f64>() / active.len().max(1) as f64;

    let rates_ok = [empirical_all, empirical_typical, empirical_s_prime, exact_s_prime]
        .iter()
        .all(|r| (0.0..=1.0).contains(r));

    let p_sweep = sweep(t, config, mu)?;
    let p_sweep_monotone = (p_sweep.len() > 1).then(|| {
        p_sweep
            .windows(2)
            .all(|w| w[1].mean_relative_error <= w[0].mean_relative_error + 1e-12)
    });

    Ok(ExperimentReport {
        schema: REPORT_SCHEMA.to_string(),
        generated_at: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        config: config.clone(),
        instance: InstanceSummary {
            frobenius: fro,
            measured_epsilon,
            subsample_frobenius: hat_fro,
            subsample_entries: recommender.store().entry_count(),
            cold_start_users: per_user.iter().filter(|r| r.cold_start).count(),
        },
        parameters: ParameterSummary {
            sigma: params.sigma,
            kappa: params.kappa,
            mu,
            sve_precision: sve_eps,
            b,
            eta_max: derived.subsample.eta,
            advisory_p: derived.subsample.p,
            norm_precondition: derived.norm_precondition,
            epsilon_in_range: derived.epsilon_in_range,
            label: label(derived.preconditions_hold()),
        },
        reconstruction: ReconstructionSummary {
            relative_error,
            kept_singular_values: global_kept.iter().map(|&i| spectrum.sigma(i)).collect(),
            family_bound,
            nine_epsilon: 9.0 * measured_epsilon,
            family_bound_holds: relative_error <= family_bound,
        },
        typicality,
        typical_users: typical.len(),
        s_prime_users: s_prime_rows.len(),
        rates: RateSummary {
            empirical_bad_rate_all: empirical_all,
            empirical_bad_rate_typical: empirical_typical,
            empirical_bad_rate_s_prime: empirical_s_prime,
            exact_bad_rate_s_prime: exact_s_prime,
            recommendations: per_user.iter().map(|r| r.recommendations).sum(),
            typical_user_bound: typical_bound,
        },
        w_statistic: WSummary {
            mean_s_prime: mean_w,
            infinite,
            markov_bound: markov.0,
            fraction_within_bound: markov.1,
            histogram: histogram(&finite_w, config.w_histogram_bins),
        },
        iterations: IterationSummary {
            mean: mean_iterations,
            mean_expected,
            projection_empty_users: per_user.iter().filter(|r| r.projection_empty).count(),
        },
        invariants: InvariantSummary {
            kept_sandwich: kept_sandwich_ok,
            rates_in_unit_interval: rates_ok,
            all_hold: kept_sandwich_ok && rates_ok,
        },
        p_sweep,
        p_sweep_monotone,
        seeds: SeedSummary {
            master: seed,
            streams: ["model", "subsample", "user/<index>", "sweep/<trial>"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        },
        per_user,
    })
}

/// Relative reconstruction error `‖A - Â_{≥σ}‖_F / ‖A‖_F` for each sweep
/// probability, with `μ` held fixed. Trial `r` uses the same uniform draws
/// at every `p`, so the subsamples are nested.
fn sweep(t: &DenseMatrix, config: &ExperimentConfig, mu: f64) -> Result<Vec<SweepPoint>> {
    let fro = t.frobenius_norm();
    let mut ps = config.p_sweep.clone();
    ps.sort_by(f64::total_cmp);
    ps.iter()
        .map(|&p| {
            let errors = (0..config.sweep_trials)
                .into_par_iter()
                .map(|trial| {
                    let hat = subsample(t, p, &mut substream(config.seed, "sweep", trial as u64))?;
                    let f = svd(&hat)?;
                    let sigma = threshold_sigma(mu, config.rank, hat.frobenius_norm());
                    Ok(t.sub(&project_threshold(&f, sigma)).frobenius_norm() / fro)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(SweepPoint {
                p,
                trials: config.sweep_trials,
                mean_relative_error: errors.iter().sum::<f64>() / errors.len().max(1) as f64,
            })
        })
        .collect()
}

fn histogram(values: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    if values.is_empty() {
        return Histogram {
            edges: vec![],
            counts: vec![],
        };
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let edges = (0..=bins).map(|b| lo + width * b as f64).collect();
    let mut counts = vec![0; bins];
    for v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Histogram { edges, counts }
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn per_user_csv(&self) -> String {
        let mut out = String::from(
            "user,typical,in_s_prime,cold_start,row_norm_sq,w,recommendations,bad,empirical_bad_rate,exact_bad_probability,mean_iterations,success_probability\n",
        );
        for r in &self.per_user {
            let rate = if r.recommendations > 0 {
                r.bad as f64 / r.recommendations as f64
            } else {
                0.0
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.user,
                r.typical,
                r.in_s_prime,
                r.cold_start,
                r.row_norm_sq,
                r.w,
                r.recommendations,
                r.bad,
                rate,
                r.exact_bad_probability,
                r.mean_iterations,
                r.success_probability
            );
        }
        out
    }

    pub fn sweep_csv(&self) -> String {
        let mut out = String::from("p,trials,mean_relative_error\n");
        for s in &self.p_sweep {
            let _ = writeln!(out, "{},{},{}", s.p, s.trials, s.mean_relative_error);
        }
        out
    }
}
