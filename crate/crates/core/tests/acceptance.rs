//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{histogram, normalised_squares, random_matrix, random_vector};
use qrec_core::experiment::{self, ExperimentConfig};
use qrec_core::linalg::{pseudo_project_row, svd, DenseMatrix};
use qrec_core::qproject::{kept_sandwich_holds, success_probability, ProjectionParams, Projector};
use qrec_core::qsim::{prepare_vector_state, restricted_rotation, QuantumState, SveEngine, SvePath, WalkOperator};
use qrec_core::recsys::{
    bad_sample_bound, calibration_ratio, matrix_bad_probability, plant_instance, typical_set, PreferenceModel,
    Recommender, TypeRule,
};
use qrec_core::rng::{stream, substream};
use qrec_core::sample_tree::{parse_triplets, MatrixStore, RowTree};
use qrec_core::stats::{chi_square_gof, chi_square_two_sample};
use qrec_core::subsample::subsample;
use rand::Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn within_ulps(a: f64, b: f64, ulps: u64) -> bool {
    a.to_bits().abs_diff(b.to_bits()) <= ulps
}

fn tree_node_weights() -> Check {
    let triplets = parse_triplets("0,0,0.4\n0,1,0.4\n0,2,0.8\n0,3,0.2\n".as_bytes()).map_err(e)?;
    let store = MatrixStore::from_triplets(&triplets, None, None).map_err(e)?;
    let left = store.subtree_weight(0, "0").map_err(e)?;
    let right = store.subtree_weight(0, "1").map_err(e)?;
    let root = store.subtree_weight(0, "").map_err(e)?;
    for (got, want) in [(left, 0.32), (right, 0.68), (root, 1.0)] {
        ensure(within_ulps(got, want, 4), || format!("node {got:e} differs from {want} by more than 4 ulp"))?;
    }
    ensure(root == left + right, || "root is not the sum of its children".into())?;
    let state = prepare_vector_state(&store, 0).map_err(e)?;
    let err = state
        .real_parts()
        .iter()
        .zip([0.4, 0.4, 0.8, 0.2])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(err <= 1e-12, || format!("state error {err:e}"))?;
    Ok(format!(
        "nodes ({left:.17}, {right:.17}, {root:.17}) within 4 ulp of (0.32, 0.68, 1.0); state error {err:.1e}"
    ))
}

fn factorization_and_spectrum() -> Check {
    let mut rng = stream(2, "factorization");
    let (mut worst_factor, mut worst_cos, mut worst_leak) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let m = rng.random_range(1..=16);
        let n = rng.random_range(1..=16);
        let density = rng.random_range(0.3..1.0);
        let a = random_matrix(&mut rng, m, n, density);
        let store = MatrixStore::from_dense(&a).map_err(e)?;
        let wop = WalkOperator::new(&store).map_err(e)?;
        let fro = store.frobenius_norm();
        let ptq = wop.factorization_product();
        for i in 0..m {
            for j in 0..n {
                worst_factor = worst_factor.max((ptq.get(i, j) - a.get(i, j) / fro).abs());
            }
        }
        let f = svd(&a).map_err(e)?;
        for k in 0..f.rank() {
            let r = restricted_rotation(&wop, &f.left[k], &f.right[k]).map_err(e)?;
            worst_cos = worst_cos.max(((r.angle / 2.0).cos() - f.singular_values[k] / fro).abs());
            worst_leak = worst_leak.max(r.invariance_residual);
        }
    }
    ensure(worst_factor <= 1e-10, || format!("max |PᵗQ - A/‖A‖_F| = {worst_factor:e}"))?;
    ensure(worst_cos <= 1e-8, || format!("max |cos(θ/2) - σ/‖A‖_F| = {worst_cos:e}"))?;
    ensure(worst_leak <= 1e-8, || format!("invariant plane leaks {worst_leak:e}"))?;
    Ok(format!(
        "100 matrices: max |PᵗQ - A/‖A‖_F| = {worst_factor:.1e}, max |cos(θ/2) - σ/‖A‖_F| = {worst_cos:.1e}, plane leak {worst_leak:.1e}"
    ))
}

fn sve_contract() -> Check {
    let eps = 0.05;
    let runs = 200;
    let mut exact_worst = 0.0f64;
    let mut agreeing_runs = 0;
    let mut components = 0;
    let mut garbage = 0.0f64;
    for run in 0..runs {
        let mut rng = substream(3, "sve", run);
        let a = random_matrix(&mut rng, 8, 8, 1.0);
        let engine = SveEngine::new(&MatrixStore::from_dense(&a).map_err(e)?).map_err(e)?;
        let x = random_vector(&mut rng, 8);
        let exact = engine.sve(&x, eps, SvePath::Exact, &mut rng).map_err(e)?;
        exact_worst = exact_worst.max(exact.max_relative_error());
        let circuit = engine.sve(&x, eps, SvePath::Circuit, &mut rng).map_err(e)?;
        garbage = garbage.max(circuit.garbage.unwrap_or(0.0));
        let all_close = exact.components.iter().zip(&circuit.components).all(|(p, q)| {
            components += 1;
            p.index == q.index && p.bin.abs_diff(q.bin) <= 1
        });
        if all_close && exact.components.len() == circuit.components.len() {
            agreeing_runs += 1;
        }
    }
    ensure(exact_worst <= eps, || format!("exact path error {exact_worst} > ε"))?;
    let rate = agreeing_runs as f64 / runs as f64;
    ensure(rate >= 0.95, || format!("circuit agreement in {agreeing_runs}/{runs} runs"))?;
    Ok(format!(
        "exact max |σ̄-σ|/‖A‖_F = {exact_worst:.4} ≤ {eps}; circuit within one bin on all components in {agreeing_runs}/{runs} runs ({components} components); max residual garbage {garbage:.3}"
    ))
}

fn projection_correctness() -> Check {
    let kappa_choices = [0.2, 1.0 / 3.0, 0.5];
    let mut worst_fidelity = 1.0f64;
    let mut circuit_runs = 0;
    let mut empty = 0;
    for run in 0..500u64 {
        let mut rng = substream(4, "projection-suite", run);
        let m = rng.random_range(2..=12);
        let n = rng.random_range(2..=12);
        let a = random_matrix(&mut rng, m, n, 0.8);
        let engine = SveEngine::new(&MatrixStore::from_dense(&a).map_err(e)?).map_err(e)?;
        let f = engine.svd();
        let sv = &f.singular_values;
        let sigma = rng.random_range(sv[sv.len() - 1]..=sv[0]).max(1e-3 * sv[0]);
        let kappa = kappa_choices[run as usize % 3];
        let x = random_vector(&mut rng, n);
        let path = if run % 5 == 0 { SvePath::Circuit } else { SvePath::Exact };
        circuit_runs += usize::from(path == SvePath::Circuit);
        let params = ProjectionParams::new(sigma, kappa).map_err(e)?;
        let projector = Projector::new(&engine, params, path).map_err(e)?;
        let prepared = projector.prepare(&x).map_err(e)?;
        let outcome = match prepared.run(&mut rng) {
            Ok(o) => o,
            Err(qrec_core::Error::ProjectionEmpty { success_probability, .. }) if success_probability < 1e-6 => {
                empty += 1;
                continue;
            }
            Err(err) => return Err(format!("run {run}: {err}")),
        };
        ensure(
            kept_sandwich_holds(engine.spectrum(), &prepared.support(), &outcome.kept, sigma, kappa),
            || format!("run {run}: kept set {:?} violates the sandwich", outcome.kept),
        )?;
        let oracle = pseudo_project_row(f, &x, sigma, kappa, &outcome.band).map_err(e)?;
        let fidelity = QuantumState::from_real(&oracle).map_err(e)?.fidelity(&outcome.quantum_state());
        worst_fidelity = worst_fidelity.min(fidelity);
    }
    ensure(worst_fidelity >= 1.0 - 1e-8, || format!("fidelity {worst_fidelity}"))?;

    // β² = 0.3: x has weight 0.3 on v_1 and 0.7 on v_4, only v_1 clears the cut.
    let a = DenseMatrix::from_diag(&[4.0, 3.0, 2.0, 1.0]);
    let engine = SveEngine::new(&MatrixStore::from_dense(&a).map_err(e)?).map_err(e)?;
    let f = engine.svd();
    let x: Vec<f64> = (0..4)
        .map(|j| 0.3f64.sqrt() * f.right[0][j] + 0.7f64.sqrt() * f.right[3][j])
        .collect();
    let params = ProjectionParams::new(3.5, 1.0 / 3.0).map_err(e)?;
    let beta2 = success_probability(f, &x, &[0]);
    let prepared = Projector::new(&engine, params, SvePath::Exact).map_err(e)?.prepare(&x).map_err(e)?;
    let mut rng = stream(4, "iterations");
    let trials = 10_000;
    let mut total = 0usize;
    let mut failures = 0usize;
    for _ in 0..trials {
        match prepared.run(&mut rng) {
            Ok(o) => total += o.iterations,
            Err(_) => failures += 1,
        }
    }
    let mean = total as f64 / (trials - failures) as f64;
    let expected = 1.0 / beta2;
    let rel = (mean - expected).abs() / expected;
    ensure((beta2 - 0.3).abs() < 1e-12, || format!("β² = {beta2}"))?;
    ensure(rel <= 0.05, || format!("mean iterations {mean} vs {expected}"))?;
    let failure_rate = failures as f64 / trials as f64;
    ensure(failure_rate <= 0.02, || format!("capped failure rate {failure_rate}"))?;
    Ok(format!(
        "500 runs ({circuit_runs} circuit, {empty} with β²≈0): sandwich held, min fidelity 1 - {:.1e}; mean iterations {mean:.4} vs 1/β² = {expected:.4} ({:.2}%), capped failures {failures}",
        1.0 - worst_fidelity,
        rel * 100.0
    ))
}

fn sampling_fidelity() -> Check {
    let samples = 100_000;
    let alpha = 0.01;

    // (a) tree sampling of a 64-entry vector.
    let mut rng = stream(5, "tree");
    let v = random_vector(&mut rng, 64);
    let tree = RowTree::from_values(&v).map_err(e)?;
    let counts = histogram((0..samples).map(|_| tree.sample(&mut rng).unwrap()), 64);
    let a = chi_square_gof(&counts, &normalised_squares(&v));
    ensure(a.passes(alpha), || format!("(a) tree sampling p = {:.4}", a.p_value))?;

    // (b) measurements of projected states.
    let mut rng = stream(5, "projected");
    let m = random_matrix(&mut rng, 24, 48, 0.7);
    let engine = SveEngine::new(&MatrixStore::from_dense(&m).map_err(e)?).map_err(e)?;
    let sv = &engine.svd().singular_values;
    let sigma = sv[sv.len() / 2];
    let x = random_vector(&mut rng, 48);
    let params = ProjectionParams::new(sigma, 1.0 / 3.0).map_err(e)?;
    let prepared = Projector::new(&engine, params, SvePath::Exact).map_err(e)?.prepare(&x).map_err(e)?;
    let first = prepared.run(&mut rng).map_err(e)?;
    let oracle = pseudo_project_row(engine.svd(), &x, sigma, 1.0 / 3.0, &first.band).map_err(e)?;
    let mut draws = Vec::with_capacity(samples);
    for _ in 0..samples {
        let out = prepared.run(&mut rng).map_err(e)?;
        draws.push(out.sample(&mut rng));
    }
    let b = chi_square_gof(&histogram(draws, 48), &normalised_squares(&oracle));
    ensure(b.passes(alpha), || format!("(b) projected-state sampling p = {:.4}", b.p_value))?;

    // (c) simulated recommender against the classical sampler, circuit path.
    let mut rng = stream(5, "recommend");
    let model = PreferenceModel::generate(32, 32, 2, 0.05, TypeRule::default(), &mut rng).map_err(e)?;
    let t_hat = subsample(model.matrix(), 0.5, &mut rng).map_err(e)?;
    let eps = model.measured_epsilon().map_err(e)?;
    let rec = Recommender::for_subsample(MatrixStore::from_dense(&t_hat).map_err(e)?, 2, eps, 0.5, SvePath::Circuit)
        .map_err(e)?;
    let user = (0..32).find(|&i| rec.store().row_norm(i).unwrap() > 0.0).unwrap();
    let prepared = rec.prepare_user(user).map_err(e)?;
    let mut quantum = Vec::with_capacity(samples);
    let mut classical = Vec::with_capacity(samples);
    for _ in 0..samples {
        let out = prepared.run(&mut rng).map_err(e)?;
        quantum.push(Recommender::measure(user, &out, &mut rng).product);
        let other = prepared.run(&mut rng).map_err(e)?;
        classical.push(rec.oracle_sample(user, &other.band, &mut rng).map_err(e)?);
    }
    let c = chi_square_two_sample(&histogram(quantum, 32), &histogram(classical, 32));
    ensure(c.passes(alpha), || format!("(c) recommend vs classical p = {:.4}", c.p_value))?;
    Ok(format!(
        "10^5 samples each: (a) tree p = {:.3}, (b) projected state p = {:.3}, (c) circuit recommend vs classical p = {:.3}",
        a.p_value, b.p_value, c.p_value
    ))
}

fn bad_recommendation_bounds() -> Check {
    let mut worst_ratio = 0.0f64;
    let mut worst_sampled = 0.0f64;
    let mut instances = 0;
    for (slot, &eps) in [0.05, 0.1, 0.2].iter().enumerate() {
        for inst in 0..50u64 {
            let mut rng = substream(6, "planted", slot as u64 * 1000 + inst);
            let model = PreferenceModel::generate(48, 48, 3, 0.05, TypeRule::default(), &mut rng).map_err(e)?;
            let t = model.matrix();
            let tilde = plant_instance(t, eps, inst % 2 == 0, &mut rng).map_err(e)?;
            let bound = bad_sample_bound(eps).map_err(e)?;
            let exact = matrix_bad_probability(t, &tilde);
            ensure(exact <= bound, || format!("ε={eps} instance {inst}: rate {exact} > bound {bound}"))?;
            let store = MatrixStore::from_dense(&tilde).map_err(e)?;
            let n = 20_000;
            let bad = (0..n)
                .filter(|_| {
                    let (i, j) = store.l2_sample_entry(&mut rng).unwrap();
                    t.get(i, j) != 1.0
                })
                .count() as f64
                / n as f64;
            let se = (bound * (1.0 - bound) / n as f64).sqrt();
            ensure(bad <= bound + 4.0 * se, || format!("ε={eps} instance {inst}: sampled {bad} > {bound} + 4se"))?;
            worst_ratio = worst_ratio.max(exact / bound);
            worst_sampled = worst_sampled.max(bad / bound);
            instances += 1;
        }
    }

    let config = ExperimentConfig {
        seed: 6,
        ..ExperimentConfig::default()
    };
    let report = experiment::run(&config).map_err(e)?;
    let bound = &report.rates.typical_user_bound;
    let rate = report.rates.empirical_bad_rate_s_prime;
    ensure(bound.holds, || format!("end-to-end rate {rate} exceeds bound {:?}", bound.value))?;
    ensure(report.parameters.label == "extrapolated", || "precondition unexpectedly satisfied".into())?;
    ensure(report.invariants.all_hold, || format!("invariants {:?}", report.invariants))?;
    let bound_text = match bound.value {
        Some(v) if v >= 1.0 => format!("{v:.3e} (≥ 1, uninformative)"),
        Some(v) => format!("{v:.4}"),
        None => "vacuous".into(),
    };
    Ok(format!(
        "{instances} planted instances: max exact rate/bound = {worst_ratio:.3}, max sampled/bound = {worst_sampled:.3}; end-to-end m=n=256: ‖T-T̃‖_F/‖T‖_F = {:.3} (9ε̂ = {:.3}), S' rate {rate:.4} over {} recs vs bound {bound_text} [{}]",
        report.reconstruction.relative_error,
        report.reconstruction.nine_epsilon,
        report.rates.recommendations,
        bound.label
    ))
}

fn typical_user_calibration() -> Check {
    let (gamma, zeta) = (0.1, 0.1);
    // A population where 90% of users have between 1/1.1 and 1.1 times the
    // average number of liked products.
    let mut rows = Vec::new();
    for i in 0..100 {
        let liked = if i < 90 { 50 } else if i < 95 { 10 } else { 120 };
        rows.push((0..200).map(|j| if j < liked { 1.0 } else { 0.0 }).collect::<Vec<_>>());
    }
    let t = DenseMatrix::from_rows(&rows).map_err(e)?;
    let avg = t.frobenius_norm().powi(2) / 100.0;
    let typical = typical_set(&t, gamma);
    let count_in_band = (0..100)
        .filter(|&i| {
            let r: f64 = t.row(i).iter().sum();
            r >= avg / 1.1 && r <= 1.1 * avg
        })
        .count();
    ensure(typical.len() == count_in_band, || "typical set disagrees with direct scan".into())?;
    let mut parts = Vec::new();
    for eps in [0.001, 0.005, 0.01] {
        let (delta, ratio) = calibration_ratio(eps, gamma, zeta).ok_or("bound vacuous")?;
        ensure(ratio <= 1.5, || format!("ratio {ratio} at ε = {eps}"))?;
        parts.push(format!("ε={eps}: {ratio:.3} (δ={delta:.3})"));
    }
    Ok(format!(
        "γ=0.1, ζ=0.1 ({}/100 users typical): typical/plain bound ratio {}",
        typical.len(),
        parts.join(", ")
    ))
}

fn data_structure_complexity() -> Check {
    let (m, n) = (1024, 1024);
    let limit = 10 + 10 + 2;
    let mut store = MatrixStore::new(m, n).map_err(e)?;
    let mut rng = stream(8, "inserts");
    let mut worst = 0;
    for _ in 0..100_000 {
        let (i, j) = (rng.random_range(0..m), rng.random_range(0..n));
        let touched = store.insert(i, j, rng.random_range(-5.0..5.0)).map_err(e)?;
        worst = worst.max(touched);
    }
    ensure(worst <= limit, || format!("{worst} nodes touched"))?;
    store.check_invariants()?;
    Ok(format!(
        "10^5 inserts at 1024x1024: max nodes touched {worst} ≤ {limit}; {} entries, invariants hold",
        store.entry_count()
    ))
}

fn subsampling_properties() -> Check {
    let mut rng = stream(9, "mean");
    let a = random_matrix(&mut rng, 4, 4, 1.0);
    let (p, trials) = (0.3, 10_000);
    let mut sums = vec![0.0; 16];
    for _ in 0..trials {
        let hat = subsample(&a, p, &mut rng).map_err(e)?;
        for (s, v) in sums.iter_mut().zip(hat.as_slice()) {
            *s += v;
        }
    }
    let mut worst_z = 0.0f64;
    for (k, s) in sums.iter().enumerate() {
        let aij = a.as_slice()[k];
        let se = aij.abs() * ((1.0 - p) / p).sqrt() / (trials as f64).sqrt();
        let z = (s / trials as f64 - aij).abs() / se;
        worst_z = worst_z.max(z);
    }
    ensure(worst_z <= 4.0, || format!("entry mean off by {worst_z:.2} standard errors"))?;

    let mut rng = stream(9, "concentration");
    let signs: Vec<f64> = (0..64 * 64).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let a = DenseMatrix::from_row_major(64, 64, signs).map_err(e)?;
    let limit = 2.0 * a.frobenius_norm().powi(2) / 0.5;
    let mut worst = 0.0f64;
    let mut violations = 0;
    for _ in 0..200 {
        let hat = subsample(&a, 0.5, &mut rng).map_err(e)?;
        let sq = hat.frobenius_norm().powi(2);
        worst = worst.max(sq / limit);
        if sq > limit {
            violations += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} violations"))?;
    Ok(format!(
        "E[Â]=A: max deviation {worst_z:.2} SE over 10^4 trials; ‖Â‖²/(2‖A‖²/p) ≤ {worst:.3} in 200/200 trials"
    ))
}

struct Criterion {
    id: usize,
    name: &'static str,
    limit: Duration,
    check: fn() -> Check,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "four-entry tree weights", limit: Duration::from_secs(1), check: tree_node_weights },
        Criterion { id: 2, name: "factorization and spectral correspondence", limit: Duration::from_secs(30), check: factorization_and_spectrum },
        Criterion { id: 3, name: "SVE contract", limit: Duration::from_secs(300), check: sve_contract },
        Criterion { id: 4, name: "projection correctness", limit: Duration::from_secs(300), check: projection_correctness },
        Criterion { id: 5, name: "sampling fidelity", limit: Duration::from_secs(360), check: sampling_fidelity },
        Criterion { id: 6, name: "bad-recommendation bounds", limit: Duration::from_secs(600), check: bad_recommendation_bounds },
        Criterion { id: 7, name: "typical-user calibration", limit: Duration::from_secs(1), check: typical_user_calibration },
        Criterion { id: 8, name: "data-structure complexity", limit: Duration::from_secs(30), check: data_structure_complexity },
        Criterion { id: 9, name: "subsampling properties", limit: Duration::from_secs(120), check: subsampling_properties },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str()) || *f == c.id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let result = (c.check)();
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; exceeded time limit {:?}", c.limit)),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {} [{}] {} ({:.2}s): {}",
            c.id,
            if ok { "PASS" } else { "FAIL" },
            c.name,
            elapsed.as_secs_f64(),
            detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
