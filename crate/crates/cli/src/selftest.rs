//! Quick oracle checks of the installed build.

use genbound::attacks::{latent_robustness, AttackConfig};
use genbound::bounds::{checkerboard_bound, fooling_prob_balanced};
use genbound::gaussian::{cdf_sandwich, std_normal_cdf};
use genbound::models::{latent_sample, ClassifierModel, GeneratorModel};
use genbound::modulus::ModulusOfContinuity;
use genbound::oracle::{
    brute_force_latent_robustness, exact_fooling_cdf_halfspace, mc_fooling_fraction, DistanceOracle, GridSpec,
};
use genbound::Result;

fn report(name: &str, ok: bool, detail: String) -> bool {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

/// Runs every check, printing one line each; true when all pass.
pub fn run(seed: u64, n: usize) -> Result<bool> {
    let mut all = true;

    let mut worst: f64 = 0.0;
    let mut bracketed = true;
    for i in 0..=1000 {
        let x = i as f64 * 0.01;
        let s = cdf_sandwich(x)?;
        let phi = std_normal_cdf(x)?.value();
        bracketed &= s.lower <= phi && phi <= s.upper;
        worst = worst.max(s.upper - s.lower);
    }
    all &= report("cdf_sandwich", bracketed, format!("widest bracket {worst:.3e}"));

    let balanced = fooling_prob_balanced(&ModulusOfContinuity::Identity, 2.0)?.value();
    all &= report("balanced_eta2", (balanced - 0.830381).abs() < 1e-4, format!("{balanced:.6}"));

    let g = GeneratorModel::identity(20);
    let mut w = vec![0.0; 20];
    w[0] = 1.0;
    let f = ClassifierModel::half_space_latent(w.clone(), 0.0, g.clone())?;
    let oracle = DistanceOracle::HalfSpace { normal: w, threshold: 0.0 };
    for eta in [0.5, 1.0, 2.0] {
        let est = mc_fooling_fraction(&f, &g, eta, n, &oracle, seed)?;
        let exact = exact_fooling_cdf_halfspace(eta)?.value();
        let gap = (est.fraction.value() - exact).abs();
        all &= report(
            &format!("halfspace_cdf_eta{eta}"),
            gap <= 4.0 * est.std_error.max(1.0 / n as f64),
            format!("mc {:.4} exact {exact:.4}", est.fraction.value()),
        );
    }

    let g = GeneratorModel::identity(5);
    let f = ClassifierModel::checkerboard_latent(g.clone());
    let est = mc_fooling_fraction(&f, &g, 0.1, n, &DistanceOracle::Checkerboard, seed)?;
    let bound = checkerboard_bound(5, 0.1)?.value();
    all &= report(
        "checkerboard_d5",
        est.fraction.value() >= bound - 3.0 * est.std_error,
        format!("mc {:.4} bound {bound:.4}", est.fraction.value()),
    );

    let g = GeneratorModel::identity(2);
    let f = ClassifierModel::half_space_latent(vec![0.6, 0.8], 0.1, g.clone())?;
    let grid = GridSpec::new(3.0, 512)?;
    let mut agree = 0;
    let trials = 20;
    for i in 0..trials {
        let z = latent_sample(2, seed, i);
        let attack = latent_robustness(&f, &g, &z, &AttackConfig::default())?.radius;
        let truth = brute_force_latent_robustness(&f, &g, &z, &grid);
        if let Ok(t) = truth {
            agree += usize::from(attack >= t.value - t.grid_error && attack <= t.value + t.grid_error);
        } else {
            agree += 1;
        }
    }
    all &= report("attack_vs_grid", agree == trials as usize, format!("{agree}/{trials} within grid error"));

    Ok(all)
}
