//! Acceptance suite: one PASS/FAIL line per criterion, each checked at its
//! stated tolerance and runtime budget. Exits nonzero if any fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use genbound::attacks::{
    find_transfer_perturbation, in_distribution_robustness, latent_robustness, robustness_survey,
    unconstrained_robustness, AttackConfig, RadiusSet,
};
use genbound::bounds::{
    checkerboard_bound, expected_robustness_bound, fooling_prob_balanced, fooling_prob_equiprobable,
    fooling_prob_general, invert_bound_for_radius, ClassDistribution,
};
use genbound::gaussian::{cdf_sandwich, gaussian_norm_mean, phi_inv_class_lb, tail_shift_lower_bound};
use genbound::harness::{
    run_experiment, Algorithm1Spec, ClassDistSpec, ClassifierSpec, ExperimentConfig, GeneratorSpec, NamedClassifier,
    VerifySpec,
};
use genbound::linalg::Matrix;
use genbound::models::{
    latent_sample, train_mlp_classifier, ClassifierModel, GeneratorModel, LabelRule, Mlp, ProjectionConfig,
    TrainingConfig,
};
use genbound::modulus::{sample_suprema, InnerOptConfig, ModulusOfContinuity};
use genbound::oracle::{brute_force_latent_robustness, mc_fooling_fraction, DistanceOracle, GridSpec};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Φ by its everywhere-convergent series `½ + φ(x)·Σ x^{2n+1}/(2n+1)!!`,
/// independent of the library's erfc route.
fn oracle_phi(x: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - oracle_phi(-x);
    }
    let mut term = x;
    let mut sum = x;
    let mut n = 1.0;
    while term > sum * 1e-18 {
        term *= x * x / (2.0 * n + 1.0);
        sum += term;
        n += 1.0;
    }
    0.5 + (-0.5 * x * x).exp() / (2.0 * PI).sqrt() * sum
}

fn oracle_phi_inv(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if oracle_phi(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn halfspace(dim: usize, normal: Vec<f64>) -> (GeneratorModel, ClassifierModel) {
    let g = GeneratorModel::identity(dim);
    let f = ClassifierModel::half_space_latent(normal, 0.0, g.clone()).unwrap();
    (g, f)
}

fn e1(dim: usize) -> Vec<f64> {
    let mut w = vec![0.0; dim];
    w[0] = 1.0;
    w
}

fn c1_latent_bound() -> Outcome {
    let dist = ClassDistribution::equiprobable(10).unwrap();
    let r = invert_bound_for_radius(&dist, &ModulusOfContinuity::Identity, 0.25).unwrap();
    let normalized = r / gaussian_norm_mean(100).unwrap();
    outcome((normalized - 0.0158).abs() <= 5e-4, format!("normalized radius {normalized:.6}"))
}

fn c2_balanced_at_two() -> Outcome {
    let v = fooling_prob_balanced(&ModulusOfContinuity::Identity, 2.0).unwrap().value();
    let oracle = 1.0 - (PI / 2.0).sqrt() * (-2.0f64).exp();
    outcome(
        (v - 0.830381).abs() <= 1e-4 && (v - oracle).abs() < 1e-12,
        format!("{v:.6}"),
    )
}

fn c3_halfspace_tightness() -> Outcome {
    let (g, f) = halfspace(20, e1(20));
    let which = RadiusSet {
        r_z: true,
        ..RadiusSet::default()
    };
    let report = robustness_survey(&f, &g, 10_000, which, &AttackConfig::default(), 31).unwrap();
    let mut worst: f64 = 0.0;
    let dist = ClassDistribution::equiprobable(2).unwrap();
    let mut bound_gap: f64 = 0.0;
    for eta in [0.5, 1.0, 2.0] {
        let exact = 2.0 * (oracle_phi(eta) - 0.5);
        worst = worst.max((report.r_z_cdf(eta) - exact).abs());
        let bound = fooling_prob_general(&dist, &ModulusOfContinuity::Identity, eta).unwrap().value();
        bound_gap = bound_gap.max((bound - exact).abs());
    }
    outcome(
        worst <= 0.02 && bound_gap < 1e-12 && report.summary.nonconverged == 0,
        format!("max |ecdf - exact| = {worst:.4}"),
    )
}

fn c4_nearest_neighbor_half_radius() -> Outcome {
    let g = GeneratorModel::circle();
    let f = ClassifierModel::arc(vec![0.3, 2.0, 4.4]).unwrap();
    let wrapped = ClassifierModel::nearest_neighbor_wrap(f.clone(), g.clone(), ProjectionConfig::default()).unwrap();
    let cfg = AttackConfig::default();
    let ok: Vec<bool> = (0..1000u64)
        .into_par_iter()
        .map(|i| {
            let z = latent_sample(1, 41, i);
            let r_in = in_distribution_robustness(&f, &g, &z, &cfg).unwrap().radius;
            let r_unc = unconstrained_robustness(&wrapped, &g.generate(&z).unwrap(), &cfg).unwrap().radius;
            r_unc >= r_in / 2.0 - 1e-6
        })
        .collect();
    let held = ok.iter().filter(|b| **b).count();
    outcome(held == 1000, format!("{held}/1000 points"))
}

fn c5_checkerboard() -> Outcome {
    let mut worst = f64::INFINITY;
    for d in [2, 5, 10] {
        let g = GeneratorModel::identity(d);
        let f = ClassifierModel::checkerboard_latent(g.clone());
        for eta in [0.1, 0.25] {
            let est = mc_fooling_fraction(&f, &g, eta, 10_000, &DistanceOracle::Checkerboard, 51).unwrap();
            let oracle = 1.0 - (1.0 - eta).powi(d as i32);
            assert!((checkerboard_bound(d, eta).unwrap().value() - oracle).abs() < 1e-15);
            worst = worst.min(est.fraction.value() - (oracle - 3.0 * est.std_error));
        }
    }
    outcome(worst >= 0.0, format!("min margin over 6 cells {worst:.4}"))
}

fn c6_gaussian_identities() -> Outcome {
    let mut ok = true;
    for i in 0..1000 {
        let x = 10.0 * i as f64 / 999.0;
        let s = cdf_sandwich(x).unwrap();
        let phi = oracle_phi(x);
        ok &= s.lower <= phi + 1e-15 && phi <= s.upper + 1e-15;
    }
    let at_zero = cdf_sandwich(0.0).unwrap().lower;
    ok &= (at_zero - 0.5).abs() < 1e-15;
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut pairs = 0;
    while pairs < 100 {
        let p: f64 = rng.random_range(0.5..1.0);
        let eta: f64 = rng.random_range(0.01..5.0);
        let lb = tail_shift_lower_bound(p, eta).unwrap().value();
        ok &= lb <= oracle_phi(oracle_phi_inv(p) + eta) + 1e-12;
        pairs += 1;
    }
    for k in 5..=1000u64 {
        ok &= phi_inv_class_lb(k).unwrap() <= oracle_phi_inv(1.0 - 1.0 / k as f64) + 1e-12;
    }
    outcome(ok, format!("lower bound at 0 = {at_zero}"))
}

fn c7_transferability() -> Outcome {
    let d = 20;
    // two half-spaces through the origin at angle θ disagree on θ/π of the mass
    let theta = 0.05 * PI;
    let g = GeneratorModel::identity(d);
    let f = ClassifierModel::half_space_latent(e1(d), 0.0, g.clone()).unwrap();
    let mut w = vec![0.0; d];
    w[0] = theta.cos();
    w[1] = theta.sin();
    let h = ClassifierModel::half_space_latent(w, 0.0, g.clone()).unwrap();
    let n = 5000;
    let cfg = AttackConfig::default();
    let hits = (0..n as u64)
        .into_par_iter()
        .filter(|&i| {
            let z = latent_sample(d, 71, i);
            find_transfer_perturbation(&f, &h, &g, &z, 2.0, &cfg).unwrap().success
        })
        .count();
    let frac = hits as f64 / n as f64;
    let se = (frac * (1.0 - frac) / n as f64).sqrt();
    let threshold = 1.0 - (PI / 2.0).sqrt() * (-2.0f64).exp() - 2.0 * 0.05;
    outcome(
        frac >= threshold - 3.0 * se && (threshold - 0.73038).abs() < 1e-5,
        format!("fraction {frac:.4} vs {threshold:.5}"),
    )
}

fn c8_expected_radius() -> Outcome {
    let (g, f) = halfspace(10, e1(10));
    let which = RadiusSet {
        r_z: true,
        ..RadiusSet::default()
    };
    let cfg = AttackConfig {
        restarts: 0,
        ..AttackConfig::default()
    };
    let report = robustness_survey(&f, &g, 100_000, which, &cfg, 81).unwrap();
    let values: Vec<f64> = report.records.iter().filter_map(|r| r.r_z).collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let target = (2.0 / PI).sqrt();
    let bound = expected_robustness_bound(
        &ClassDistribution::equiprobable(2).unwrap(),
        &ModulusOfContinuity::Identity,
        0.0,
    )
    .unwrap();
    outcome(
        values.len() == 100_000 && (mean - target).abs() <= 0.01 && (bound - target).abs() < 1e-12,
        format!("mean r_Z {mean:.6}, bound {bound:.6}"),
    )
}

fn c9_attack_vs_grid() -> Outcome {
    let g = GeneratorModel::identity(2);
    let training = TrainingConfig {
        learning_rate: 0.1,
        batch_size: 64,
        epochs: 60,
        batches_per_epoch: 100,
        hidden: vec![32, 32],
        seed: 91,
        ..TrainingConfig::default()
    };
    let (f, report) = train_mlp_classifier(&g, &LabelRule::Checkerboard, &training).unwrap();
    let grid = GridSpec::new(3.0, 3000).unwrap();
    let cfg = AttackConfig::default();
    let rows: Vec<(f64, f64, f64)> = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let z = latent_sample(2, 92, i);
            let truth = brute_force_latent_robustness(&f, &g, &z, &grid).unwrap();
            let attack = latent_robustness(&f, &g, &z, &cfg).map(|o| o.radius).unwrap_or(f64::INFINITY);
            (attack, truth.value, truth.grid_error)
        })
        .collect();
    let close = rows.iter().filter(|(a, t, _)| (a - t).abs() <= 0.05 * t).count();
    let below = rows.iter().filter(|(a, t, e)| *a < t - e).count();
    outcome(
        close >= 90 && below == 0,
        format!("{close}/100 within 5%, {below} below oracle (train acc {:.3})", report.train_accuracy),
    )
}

fn c10_algorithm1() -> Outcome {
    let cfg = ExperimentConfig {
        seed: 101,
        generator: GeneratorSpec::RandomMlp {
            widths: vec![8, 32, 16],
            gain: 1.0,
            seed: 102,
        },
        classifiers: vec![NamedClassifier {
            name: "mlp".into(),
            spec: ClassifierSpec::TrainedCones {
                classes: 10,
                training: TrainingConfig {
                    seed: 103,
                    ..TrainingConfig::default()
                },
            },
        }],
        class_distribution: Some(ClassDistSpec::Estimate {
            classifier: "mlp".into(),
            samples: 10_000,
        }),
        bounds: Vec::new(),
        attacks: Vec::new(),
        modulus: None,
        algorithm1: Some(Algorithm1Spec {
            delta_grid: (1..=40).map(|i| 0.05 * i as f64).collect(),
            samples: 100,
            inner: InnerOptConfig::default(),
            verify: Some(VerifySpec {
                classifier: "mlp".into(),
                n: 200,
                attack: AttackConfig::default(),
            }),
        }),
        projection_checks: Vec::new(),
        target_percentile: 0.25,
        base_dir: None,
    };
    let report = run_experiment(&cfg).unwrap();
    let entry = report.algorithm1.unwrap();
    let v = entry.verification.unwrap();
    outcome(
        v.percentile_value <= entry.result.alpha && v.nonconverged == 0,
        format!(
            "25th percentile r_in {:.4} <= alpha {:.4} (delta {:.2}, tail {:.3})",
            v.percentile_value, entry.result.alpha, entry.result.best_delta, v.tail_fraction
        ),
    )
}

fn run_props(cases: u32, test: impl Fn(&mut TestRunner) -> Result<(), String>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    test(&mut runner)
}

fn c11_properties() -> Outcome {
    let id = ModulusOfContinuity::Identity;
    let results = [
        (
            "monotone in eta",
            run_props(256, |r| {
                r.run(&(prop::collection::vec(0.01f64..1.0, 2..8), 0.0f64..4.0, 0.0f64..1.0), |(w, eta, step)| {
                    let dist = ClassDistribution::new(w.iter().map(|v| v / w.iter().sum::<f64>()).collect()).unwrap();
                    let a = fooling_prob_general(&dist, &id, eta).unwrap().value();
                    let b = fooling_prob_general(&dist, &id, eta + step).unwrap().value();
                    prop_assert!(a <= b + 1e-15);
                    let a = fooling_prob_balanced(&id, eta).unwrap().value();
                    let b = fooling_prob_balanced(&id, eta + step).unwrap().value();
                    prop_assert!(a <= b + 1e-15);
                    Ok(())
                })
                .map_err(|e| e.to_string())
            }),
        ),
        (
            "class-count form monotone in K and below the general bound",
            run_props(256, |r| {
                r.run(&(5usize..500, 1usize..50, 1.0f64..4.0), |(k, dk, eta)| {
                    let a = fooling_prob_equiprobable(k, &id, eta).unwrap().value();
                    let b = fooling_prob_equiprobable(k + dk, &id, eta).unwrap().value();
                    prop_assert!(a <= b + 1e-15);
                    let general =
                        fooling_prob_general(&ClassDistribution::equiprobable(k).unwrap(), &id, eta).unwrap().value();
                    prop_assert!(a <= general + 1e-12);
                    Ok(())
                })
                .map_err(|e| e.to_string())
            }),
        ),
        (
            "balanced form below the general bound",
            run_props(256, |r| {
                r.run(&(prop::collection::vec(0.05f64..1.0, 2..8), 0.0f64..4.0), |(w, eta)| {
                    let total: f64 = w.iter().sum();
                    let probs: Vec<f64> = w.iter().map(|v| v / total).collect();
                    prop_assume!(probs.iter().all(|p| *p <= 0.5));
                    let dist = ClassDistribution::new(probs).unwrap();
                    let general = fooling_prob_general(&dist, &id, eta).unwrap().value();
                    let balanced = fooling_prob_balanced(&id, eta).unwrap().value();
                    prop_assert!(balanced <= general + 1e-12);
                    Ok(())
                })
                .map_err(|e| e.to_string())
            }),
        ),
        ("radius ordering chain", radius_chain()),
        ("thread-count determinism", thread_determinism()),
    ];
    let failed: Vec<String> = results
        .iter()
        .filter_map(|(name, r)| r.as_ref().err().map(|e| format!("{name}: {e}")))
        .collect();
    outcome(failed.is_empty(), if failed.is_empty() { "5 suites".into() } else { failed.join("; ") })
}

/// `r_unc ≤ r_in ≤ ω(r_Z)` per sample on a linear generator with known
/// Lipschitz constant.
fn radius_chain() -> Result<(), String> {
    let g = GeneratorModel::linear(Matrix::diagonal(&[2.0, 0.5, 1.0]), vec![0.1, 0.0, -0.2]).unwrap();
    let omega = ModulusOfContinuity::lipschitz(2.0).unwrap();
    for seed in 0..4 {
        let f = ClassifierModel::mlp(Mlp::random(&[3, 8, 3], 1.5, seed).unwrap()).unwrap();
        let report = robustness_survey(&f, &g, 25, RadiusSet::ALL, &AttackConfig::default(), seed).unwrap();
        for rec in &report.records {
            let (Some(rz), Some(rin), Some(runc)) = (rec.r_z, rec.r_in, rec.r_unc) else {
                continue;
            };
            let cap = omega.eval(rz).unwrap();
            if !(runc <= rin + 1e-9 && rin <= cap + 1e-6) {
                return Err(format!("sample {}: r_unc {runc}, r_in {rin}, ω(r_Z) {cap}", rec.sample_index));
            }
        }
    }
    Ok(())
}

fn thread_determinism() -> Result<(), String> {
    let g = GeneratorModel::mlp(Mlp::random(&[3, 8, 5], 1.0, 7).unwrap());
    let f = ClassifierModel::mlp(Mlp::random(&[5, 8, 4], 1.5, 8).unwrap()).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let survey = robustness_survey(&f, &g, 16, RadiusSet::ALL, &AttackConfig::default(), 5).unwrap();
                let sup = sample_suprema(&g, 0.3, 32, &InnerOptConfig::default(), 6).unwrap();
                let mc = mc_fooling_fraction(&f, &g, 0.2, 64, &DistanceOracle::Attack(AttackConfig::default()), 7)
                    .unwrap();
                (survey, sup, mc)
            })
    };
    let base = run(1);
    for threads in [2, 4, 8] {
        if run(threads) != base {
            return Err(format!("results differ with {threads} threads"));
        }
    }
    Ok(())
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "latent radius bound, K=10, d=100", Duration::from_secs(1), c1_latent_bound),
        (2, "balanced bound at eta=2", Duration::from_secs(1), c2_balanced_at_two),
        (3, "half-space tightness, d=20", Duration::from_secs(60), c3_halfspace_tightness),
        (4, "nearest-neighbour half radius", Duration::from_secs(60), c4_nearest_neighbor_half_radius),
        (5, "checkerboard Monte Carlo", Duration::from_secs(30), c5_checkerboard),
        (6, "Gaussian identities", Duration::from_secs(1), c6_gaussian_identities),
        (7, "transferability", Duration::from_secs(120), c7_transferability),
        (8, "expected latent radius, K=2", Duration::from_secs(60), c8_expected_radius),
        (9, "attack vs grid oracle", Duration::from_secs(300), c9_attack_vs_grid),
        (10, "grid-search bound end to end", Duration::from_secs(600), c10_algorithm1),
        (11, "property suites", Duration::from_secs(120), c11_properties),
    ];
    let only: Vec<u32> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failures = 0;
    for (id, name, budget, check) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| outcome(false, "panicked"));
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= budget;
        failures += usize::from(!pass);
        println!(
            "{} criterion {id:>2} {name}: {} [{:.2}s / {}s budget]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
