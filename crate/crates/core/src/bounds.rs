//! Classifier-agnostic bounds on the probability that a point drawn from the
//! generative model can be pushed across a class boundary, and their
//! inversions into percentile radii.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gaussian::{density, gaussian_norm_mean, mass_between, phi, phi_inv, phi_inv_class_lb, Probability};
use crate::modulus::ModulusOfContinuity;

/// Class proportions `P(C_i)` under the latent prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ClassDistribution {
    probs: Vec<f64>,
}

impl ClassDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(domain("a class distribution needs at least two classes"));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(domain("class probabilities must lie in [0, 1]"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(domain(format!("class probabilities sum to {total}, not 1")));
        }
        Ok(ClassDistribution { probs })
    }

    pub fn equiprobable(classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(domain("a class distribution needs at least two classes"));
        }
        Ok(ClassDistribution {
            probs: vec![1.0 / classes as f64; classes],
        })
    }

    /// Normalizes nonnegative counts.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(domain("cannot build a class distribution from zero counts"));
        }
        Self::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn is_balanced(&self) -> bool {
        self.probs.iter().all(|&p| p <= 0.5)
    }

    /// `a_{≠i} = Φ⁻¹(1 − P(C_i))`; `+∞` for empty classes.
    pub fn complement_quantiles(&self) -> Result<Vec<f64>> {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                if p >= 1.0 {
                    Err(Error::DegenerateDistribution(format!(
                        "class {i} carries all the mass; its complement quantile is -infinity"
                    )))
                } else if p <= 0.5 {
                    // 1 − p is exact here
                    Ok(phi_inv(1.0 - p))
                } else {
                    Ok(-phi_inv(p))
                }
            })
            .collect()
    }
}

impl TryFrom<Vec<f64>> for ClassDistribution {
    type Error = Error;
    fn try_from(probs: Vec<f64>) -> Result<Self> {
        ClassDistribution::new(probs)
    }
}

impl From<ClassDistribution> for Vec<f64> {
    fn from(d: ClassDistribution) -> Vec<f64> {
        d.probs
    }
}

/// Which factor carries the class-count term of the equiprobable bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassExponent {
    /// `e^{−ω⁻¹(η)·√(log(K²/(4π log K)))}`, consistent with the Gaussian tail shift.
    #[default]
    LatentRadius,
    /// `e^{−η·√(log(K²/(4π log K)))}` with the raw image distance.
    ImageDistance,
}

/// Lower bound on `P(r_in(x) ≤ η)` for any classifier:
/// `Σ_i [Φ(a_{≠i} + ω⁻¹(η)) − Φ(a_{≠i})]`, clamped to `[0, 1]`.
pub fn fooling_prob_general(dist: &ClassDistribution, omega: &ModulusOfContinuity, eta: f64) -> Result<Probability> {
    let radius = omega.inverse_or_zero(eta)?;
    let a = dist.complement_quantiles()?;
    Ok(Probability::clamped(latent_fooling_sum(&a, radius)))
}

fn latent_fooling_sum(a: &[f64], radius: f64) -> f64 {
    a.iter()
        .filter(|ai| ai.is_finite())
        .map(|&ai| mass_between(ai, ai + radius))
        .sum()
}

/// `1 − √(π/2)·e^{−ω⁻¹(η)²/2}`, valid when every class has mass at most 1/2.
pub fn fooling_prob_balanced(omega: &ModulusOfContinuity, eta: f64) -> Result<Probability> {
    let r = omega.inverse_or_zero(eta)?;
    Ok(Probability::clamped(1.0 - (PI / 2.0).sqrt() * (-0.5 * r * r).exp()))
}

/// Explicit class-count form for `K ≥ 5` equiprobable classes and
/// `ω⁻¹(η) ≥ 1`.
pub fn fooling_prob_equiprobable(classes: usize, omega: &ModulusOfContinuity, eta: f64) -> Result<Probability> {
    fooling_prob_equiprobable_with(classes, omega, eta, ClassExponent::default())
}

pub fn fooling_prob_equiprobable_with(
    classes: usize,
    omega: &ModulusOfContinuity,
    eta: f64,
    exponent: ClassExponent,
) -> Result<Probability> {
    let lb = phi_inv_class_lb(classes as u64)?;
    let r = omega.inverse_or_zero(eta)?;
    if !(r >= 1.0) {
        return Err(Error::Hypothesis(format!(
            "the class-count form needs a latent radius of at least 1, got {r}"
        )));
    }
    let t = match exponent {
        ClassExponent::LatentRadius => r,
        ClassExponent::ImageDistance => eta,
    };
    Ok(Probability::clamped(
        1.0 - (PI / 2.0).sqrt() * (-0.5 * r * r).exp() * (-t * lb).exp(),
    ))
}

/// Smallest `η` with `fooling_prob_general(dist, ω, η) ≥ target`, found by
/// bisection.
pub fn invert_bound_for_radius(dist: &ClassDistribution, omega: &ModulusOfContinuity, target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(domain(format!("target must lie in (0, 1), got {target}")));
    }
    let a = dist.complement_quantiles()?;
    // Work in latent radius, where the sum is continuous and increasing,
    // then map through ω.
    let reach = |r: f64| latent_fooling_sum(&a, r) >= target;
    let r_max = match omega {
        ModulusOfContinuity::Tabulated { points } => points[points.len() - 1].0,
        _ => 1e3,
    };
    if !reach(r_max) {
        return Err(Error::Range(format!(
            "target {target} is not reached within the range of the modulus"
        )));
    }
    let (mut lo, mut hi) = (0.0, r_max);
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if reach(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    omega.eval(hi)
}

/// Upper bound on the expected in-distribution robustness of a data
/// distribution within 1-Wasserstein distance `δ` of the generative model:
/// `ω(Σ_i [−a_{≠i}Φ(−a_{≠i}) + φ(a_{≠i})]) + δ`. Requires concave `ω`.
pub fn expected_robustness_bound(
    dist: &ClassDistribution,
    omega: &ModulusOfContinuity,
    wasserstein_delta: f64,
) -> Result<f64> {
    check_wasserstein(wasserstein_delta)?;
    check_concave(omega)?;
    let a = dist.complement_quantiles()?;
    let latent: f64 = a
        .iter()
        .filter(|ai| ai.is_finite())
        .map(|&ai| -ai * phi(-ai) + density(ai))
        .sum();
    Ok(omega.eval(latent)? + wasserstein_delta)
}

/// Closed form for `K ≥ 5` equiprobable classes:
/// `ω(log(4π log K)/√(2 log K)) + δ`.
pub fn expected_robustness_bound_equiprobable(
    classes: usize,
    omega: &ModulusOfContinuity,
    wasserstein_delta: f64,
) -> Result<f64> {
    check_wasserstein(wasserstein_delta)?;
    if classes < 5 {
        return Err(Error::Hypothesis(format!(
            "the closed-form expectation bound needs K >= 5, got {classes}"
        )));
    }
    check_concave(omega)?;
    let lk = (classes as f64).ln();
    Ok(omega.eval((4.0 * PI * lk).ln() / (SQRT_2 * lk.sqrt()))? + wasserstein_delta)
}

fn check_wasserstein(delta: f64) -> Result<()> {
    if delta >= 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("Wasserstein distance must be finite and >= 0, got {delta}")))
    }
}

fn check_concave(omega: &ModulusOfContinuity) -> Result<()> {
    if omega.is_concave() {
        Ok(())
    } else {
        Err(Error::Hypothesis("the expectation bound requires a concave modulus".into()))
    }
}

/// Fooling probability of the latent checkerboard partition in `d`
/// dimensions: `1 − (1 − η)^d`, for `η ≤ 1/2`.
pub fn checkerboard_bound(dim: usize, eta: f64) -> Result<Probability> {
    if dim == 0 {
        return Err(domain("checkerboard dimension must be >= 1"));
    }
    if !(0.0..=0.5).contains(&eta) {
        return Err(Error::Hypothesis(format!(
            "checkerboard bound needs 0 <= eta <= 1/2, got {eta}"
        )));
    }
    Ok(Probability::clamped(1.0 - (1.0 - eta).powi(dim as i32)))
}

/// Upper bound on `P(r_in ≥ ω_κ(δ))` when `ω_κ` holds only with probability
/// `1 − κ`: `κ + 1 − fooling_prob_general(dist, Identity, δ)`.
pub fn kappa_adjusted_failure_prob(
    dist: &ClassDistribution,
    modulus_estimate_value: f64,
    delta: f64,
    kappa: Probability,
) -> Result<Probability> {
    if !(delta > 0.0) {
        return Err(domain(format!("delta must be positive, got {delta}")));
    }
    if !(modulus_estimate_value >= 0.0) {
        return Err(domain("modulus estimate must be >= 0"));
    }
    let latent = fooling_prob_general(dist, &ModulusOfContinuity::Identity, delta)?;
    Ok(Probability::clamped(kappa.value() + 1.0 - latent.value()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    General,
    Balanced,
    Equiprobable,
    InvertRadius,
    Checkerboard,
    ExpectationGeneral,
    ExpectationClasses,
    KappaAdjusted,
}

impl BoundKind {
    pub fn is_probability(self) -> bool {
        !matches!(
            self,
            BoundKind::InvertRadius | BoundKind::ExpectationGeneral | BoundKind::ExpectationClasses
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub latent_norm_mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_norm_mean: Option<f64>,
    /// `value / latent_norm_mean`, for radius-valued kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_kind: BoundKind,
    pub inputs: serde_json::Value,
    pub value: f64,
    #[serde(default)]
    pub normalization: Option<Normalization>,
    /// Direction of any estimation error affecting the value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl BoundReport {
    /// Attaches `E‖z‖` for a `latent_dim`-dimensional prior and, optionally,
    /// an estimate of `E‖g(z)‖`.
    pub fn normalized(mut self, latent_dim: usize, image_norm_mean: Option<f64>) -> Result<Self> {
        let latent_norm_mean = gaussian_norm_mean(latent_dim)?;
        let normalized_value = (!self.bound_kind.is_probability()).then(|| self.value / latent_norm_mean);
        self.normalization = Some(Normalization {
            latent_norm_mean,
            image_norm_mean,
            normalized_value,
        });
        Ok(self)
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// A single bound evaluation, as read from a config file or the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundRequest {
    General {
        dist: ClassDistribution,
        omega: ModulusOfContinuity,
        eta: f64,
    },
    Balanced {
        omega: ModulusOfContinuity,
        eta: f64,
    },
    Equiprobable {
        classes: usize,
        omega: ModulusOfContinuity,
        eta: f64,
        #[serde(default)]
        exponent: ClassExponent,
    },
    InvertRadius {
        dist: ClassDistribution,
        omega: ModulusOfContinuity,
        target: f64,
    },
    Checkerboard {
        dim: usize,
        eta: f64,
    },
    ExpectationGeneral {
        dist: ClassDistribution,
        omega: ModulusOfContinuity,
        wasserstein_delta: f64,
    },
    ExpectationClasses {
        classes: usize,
        omega: ModulusOfContinuity,
        wasserstein_delta: f64,
    },
    KappaAdjusted {
        dist: ClassDistribution,
        modulus_value: f64,
        delta: f64,
        kappa: Probability,
    },
}

impl BoundRequest {
    pub fn kind(&self) -> BoundKind {
        match self {
            BoundRequest::General { .. } => BoundKind::General,
            BoundRequest::Balanced { .. } => BoundKind::Balanced,
            BoundRequest::Equiprobable { .. } => BoundKind::Equiprobable,
            BoundRequest::InvertRadius { .. } => BoundKind::InvertRadius,
            BoundRequest::Checkerboard { .. } => BoundKind::Checkerboard,
            BoundRequest::ExpectationGeneral { .. } => BoundKind::ExpectationGeneral,
            BoundRequest::ExpectationClasses { .. } => BoundKind::ExpectationClasses,
            BoundRequest::KappaAdjusted { .. } => BoundKind::KappaAdjusted,
        }
    }

    pub fn evaluate(&self) -> Result<BoundReport> {
        let value = match self {
            BoundRequest::General { dist, omega, eta } => fooling_prob_general(dist, omega, *eta)?.value(),
            BoundRequest::Balanced { omega, eta } => fooling_prob_balanced(omega, *eta)?.value(),
            BoundRequest::Equiprobable {
                classes,
                omega,
                eta,
                exponent,
            } => fooling_prob_equiprobable_with(*classes, omega, *eta, *exponent)?.value(),
            BoundRequest::InvertRadius { dist, omega, target } => invert_bound_for_radius(dist, omega, *target)?,
            BoundRequest::Checkerboard { dim, eta } => checkerboard_bound(*dim, *eta)?.value(),
            BoundRequest::ExpectationGeneral {
                dist,
                omega,
                wasserstein_delta,
            } => expected_robustness_bound(dist, omega, *wasserstein_delta)?,
            BoundRequest::ExpectationClasses {
                classes,
                omega,
                wasserstein_delta,
            } => expected_robustness_bound_equiprobable(*classes, omega, *wasserstein_delta)?,
            BoundRequest::KappaAdjusted {
                dist,
                modulus_value,
                delta,
                kappa,
            } => kappa_adjusted_failure_prob(dist, *modulus_value, *delta, *kappa)?.value(),
        };
        let mut inputs = serde_json::to_value(self)?;
        if let Some(obj) = inputs.as_object_mut() {
            obj.remove("kind");
        }
        let report = BoundReport {
            bound_kind: self.kind(),
            inputs,
            value,
            normalization: None,
            note: None,
        };
        Ok(match self {
            BoundRequest::KappaAdjusted { .. } => report.with_note(
                "the modulus estimate approximates a supremum from below; the bound may be optimistic",
            ),
            _ => report,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ID: ModulusOfContinuity = ModulusOfContinuity::Identity;

    /// Φ by composite Simpson on the density, independent of `erfc`.
    fn quad_phi(x: f64) -> f64 {
        let (a, n) = (-40.0, 200_000);
        let h = (x - a) / n as f64;
        let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
        let mut s = f(a) + f(x);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    fn quad_phi_inv(p: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if quad_phi(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn eq(k: usize) -> ClassDistribution {
        ClassDistribution::equiprobable(k).unwrap()
    }

    #[test]
    fn distribution_validation() {
        assert!(ClassDistribution::new(vec![1.0]).is_err());
        assert!(ClassDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(ClassDistribution::new(vec![0.5, 0.5]).is_ok());
        let json: ClassDistribution = serde_json::from_str("[0.25, 0.75]").unwrap();
        assert_eq!(json.num_classes(), 2);
        assert!(serde_json::from_str::<ClassDistribution>("[0.2, 0.2]").is_err());
    }

    #[test]
    fn general_examples() {
        for k in [2, 3, 10] {
            assert_eq!(fooling_prob_general(&eq(k), &ID, 0.0).unwrap().value(), 0.0);
        }
        let two = fooling_prob_general(&eq(2), &ID, 1.0).unwrap().value();
        assert!((two - (2.0 * quad_phi(1.0) - 1.0)).abs() < 1e-9);
        assert!((two - 0.682689).abs() < 1e-6);
        let a = quad_phi_inv(0.9);
        let oracle = 10.0 * (quad_phi(a + 0.158) - 0.9);
        let ten = fooling_prob_general(&eq(10), &ID, 0.158).unwrap().value();
        assert!((ten - oracle).abs() < 1e-8);
        assert!((ten - 0.25).abs() < 0.002);
    }

    #[test]
    fn general_rejects_degenerate_and_skips_empty_classes() {
        let deg = ClassDistribution::new(vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            fooling_prob_general(&deg, &ID, 1.0),
            Err(Error::DegenerateDistribution(_))
        ));
        let with_empty = ClassDistribution::new(vec![0.5, 0.5, 0.0]).unwrap();
        let a = fooling_prob_general(&with_empty, &ID, 0.7).unwrap().value();
        let b = fooling_prob_general(&eq(2), &ID, 0.7).unwrap().value();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn equiprobable_reduction_uses_identical_quantiles() {
        let a = eq(7).complement_quantiles().unwrap();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        assert!((a[0] - quad_phi_inv(6.0 / 7.0)).abs() < 1e-8);
    }

    #[test]
    fn balanced_examples() {
        let v = fooling_prob_balanced(&ID, 2.0).unwrap().value();
        let oracle = 1.0 - (PI / 2.0).sqrt() * (-2.0f64).exp();
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 0.830381).abs() < 1e-5 && v > 0.8);
        assert_eq!(fooling_prob_balanced(&ID, 0.0).unwrap().value(), 0.0);
        let lin = ModulusOfContinuity::lipschitz(2.0).unwrap();
        assert!((fooling_prob_balanced(&lin, 4.0).unwrap().value() - v).abs() < 1e-15);
    }

    #[test]
    fn equiprobable_examples() {
        let lb = (100.0 / (4.0 * PI * 10f64.ln())).ln().sqrt();
        let oracle = 1.0 - (PI / 2.0).sqrt() * (-0.5f64).exp() * (-lb).exp();
        let v = fooling_prob_equiprobable(10, &ID, 1.0).unwrap().value();
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 0.750384).abs() < 1e-5);
        let general = fooling_prob_general(&eq(10), &ID, 1.0).unwrap().value();
        assert!(v <= general);
        assert!(fooling_prob_equiprobable(100, &ID, 1.0).unwrap().value() > v);
        assert!(matches!(fooling_prob_equiprobable(4, &ID, 1.0), Err(Error::Hypothesis(_))));
        assert!(matches!(fooling_prob_equiprobable(10, &ID, 0.9), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn equiprobable_variants_differ_only_off_identity() {
        let lin = ModulusOfContinuity::lipschitz(2.0).unwrap();
        let a = fooling_prob_equiprobable_with(10, &ID, 1.5, ClassExponent::LatentRadius).unwrap();
        let b = fooling_prob_equiprobable_with(10, &ID, 1.5, ClassExponent::ImageDistance).unwrap();
        assert_eq!(a, b);
        let c = fooling_prob_equiprobable_with(10, &lin, 3.0, ClassExponent::LatentRadius).unwrap();
        let d = fooling_prob_equiprobable_with(10, &lin, 3.0, ClassExponent::ImageDistance).unwrap();
        assert_eq!(c, a);
        assert!(d.value() > c.value());
    }

    #[test]
    fn inversion_examples() {
        let r = invert_bound_for_radius(&eq(10), &ID, 0.25).unwrap();
        let oracle = quad_phi_inv(0.925) - quad_phi_inv(0.9);
        assert!((r - oracle).abs() < 1e-7, "{r} vs {oracle}");
        assert!((r - 0.158).abs() < 1e-4);
        let normalized = r / gaussian_norm_mean(100).unwrap();
        assert!((normalized - 0.01584).abs() < 1e-5);
        assert_eq!(format!("{normalized:.3}"), "0.016");
        let r2 = invert_bound_for_radius(&eq(2), &ID, 0.25).unwrap();
        assert!((r2 - quad_phi_inv(0.625)).abs() < 1e-7);
        assert!((r2 - 0.31864).abs() < 1e-4);
    }

    #[test]
    fn inversion_through_moduli() {
        let lin = ModulusOfContinuity::lipschitz(3.0).unwrap();
        let r = invert_bound_for_radius(&eq(10), &ID, 0.25).unwrap();
        assert!((invert_bound_for_radius(&eq(10), &lin, 0.25).unwrap() - 3.0 * r).abs() < 1e-8);
        let tab = ModulusOfContinuity::tabulated(vec![(0.0, 0.0), (0.1, 0.2)]).unwrap();
        assert!(matches!(invert_bound_for_radius(&eq(10), &tab, 0.25), Err(Error::Range(_))));
        assert!(invert_bound_for_radius(&eq(10), &ID, 1.0).is_err());
    }

    #[test]
    fn expectation_examples() {
        let v = expected_robustness_bound(&eq(2), &ID, 0.0).unwrap();
        assert!((v - (2.0 / PI).sqrt()).abs() < 1e-12);
        assert!((v - 0.797885).abs() < 1e-6);
        let shifted = expected_robustness_bound(&eq(2), &ID, 0.1).unwrap();
        assert!((shifted - v - 0.1).abs() < 1e-12);
        let a = quad_phi_inv(0.9);
        let oracle = 10.0 * (-a * (1.0 - quad_phi(a)) + (-0.5 * a * a).exp() / (2.0 * PI).sqrt());
        let ten = expected_robustness_bound(&eq(10), &ID, 0.0).unwrap();
        assert!((ten - oracle).abs() < 1e-7);
        assert!((ten - 0.4734).abs() < 1e-4);
        let convex = ModulusOfContinuity::tabulated(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 4.0)]).unwrap();
        assert!(matches!(
            expected_robustness_bound(&eq(2), &convex, 0.0),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn expectation_closed_form_examples() {
        let v = expected_robustness_bound_equiprobable(10, &ID, 0.0).unwrap();
        let l = 10f64.ln();
        assert!((v - (4.0 * PI * l).ln() / (2.0 * l).sqrt()).abs() < 1e-12);
        assert!((v - 1.56811).abs() < 1e-4);
        assert!(v >= expected_robustness_bound(&eq(10), &ID, 0.0).unwrap());
        assert!(expected_robustness_bound_equiprobable(1_000_000, &ID, 0.0).unwrap() < v);
        assert!(expected_robustness_bound_equiprobable(4, &ID, 0.0).is_err());
    }

    #[test]
    fn checkerboard_examples() {
        assert!((checkerboard_bound(1, 0.25).unwrap().value() - 0.25).abs() < 1e-15);
        assert!((checkerboard_bound(10, 0.1).unwrap().value() - 0.651322).abs() < 1e-6);
        assert_eq!(checkerboard_bound(7, 0.0).unwrap().value(), 0.0);
        assert!(matches!(checkerboard_bound(2, 0.6), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn kappa_examples() {
        let base = fooling_prob_general(&eq(10), &ID, 0.158).unwrap().value();
        let k0 = kappa_adjusted_failure_prob(&eq(10), 1.0, 0.158, Probability::ZERO).unwrap();
        assert!((k0.value() - (1.0 - base)).abs() < 1e-15);
        let k = kappa_adjusted_failure_prob(&eq(10), 1.0, 0.158, Probability::new(0.05).unwrap()).unwrap();
        assert!((k.value() - 0.80).abs() < 0.01);
        assert_eq!(
            kappa_adjusted_failure_prob(&eq(10), 1.0, 0.158, Probability::ONE).unwrap().value(),
            1.0
        );
    }

    #[test]
    fn request_reports() {
        let req = BoundRequest::Balanced { omega: ID, eta: 2.0 };
        let report = req.evaluate().unwrap();
        assert_eq!(report.bound_kind, BoundKind::Balanced);
        assert_eq!(report.inputs["eta"], 2.0);
        let doc = serde_json::to_value(&report).unwrap();
        for key in ["bound_kind", "inputs", "value", "normalization"] {
            assert!(doc.get(key).is_some(), "missing {key}");
        }
        let inv = BoundRequest::InvertRadius {
            dist: eq(10),
            omega: ID,
            target: 0.25,
        }
        .evaluate()
        .unwrap()
        .normalized(100, None)
        .unwrap();
        let n = inv.normalization.unwrap();
        assert!((n.normalized_value.unwrap() - 0.0158375).abs() < 1e-6);
        let parsed: BoundRequest =
            serde_json::from_str(r#"{"kind":"general","dist":[0.5,0.5],"omega":{"form":"identity"},"eta":1.0}"#).unwrap();
        assert!((parsed.evaluate().unwrap().value - 0.682689).abs() < 1e-6);
    }

    #[test]
    fn monotone_on_grid() {
        let lin = ModulusOfContinuity::linear(1.5, 0.2).unwrap();
        let mut prev = [0.0f64; 4];
        for i in 0..=1000 {
            let eta = 0.5 * i as f64 / 1000.0;
            let vals = [
                fooling_prob_general(&eq(10), &lin, 8.0 * eta).unwrap().value(),
                fooling_prob_balanced(&ID, 8.0 * eta).unwrap().value(),
                checkerboard_bound(5, eta).unwrap().value(),
                fooling_prob_equiprobable(10, &ID, 1.0 + 8.0 * eta).unwrap().value(),
            ];
            for (v, p) in vals.iter().zip(prev.iter_mut()) {
                assert!(*v >= *p);
                *p = *v;
            }
        }
    }

    proptest! {
        #[test]
        fn relaxation_ordering(k in prop::sample::select(vec![5usize, 10, 50]), eta in 1.0f64..4.0) {
            let e = fooling_prob_equiprobable(k, &ID, eta).unwrap().value();
            let g = fooling_prob_general(&eq(k), &ID, eta).unwrap().value();
            let b = fooling_prob_balanced(&ID, eta).unwrap().value();
            prop_assert!(e <= g + 1e-12);
            prop_assert!(b <= g + 1e-12);
        }

        #[test]
        fn inversion_round_trip(k in 2usize..40, target in 0.01f64..0.99) {
            let r = invert_bound_for_radius(&eq(k), &ID, target).unwrap();
            let back = fooling_prob_general(&eq(k), &ID, r).unwrap().value();
            prop_assert!((back - target).abs() < 1e-6);
        }

        #[test]
        fn general_monotone_for_random_distributions(
            weights in proptest::collection::vec(0.01f64..1.0, 2..12),
            e1 in 0.0f64..5.0,
            e2 in 0.0f64..5.0,
        ) {
            let total: f64 = weights.iter().sum();
            let dist = ClassDistribution::new(weights.iter().map(|w| w / total).collect()).unwrap();
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let a = fooling_prob_general(&dist, &ID, lo).unwrap().value();
            let b = fooling_prob_general(&dist, &ID, hi).unwrap().value();
            prop_assert!(a <= b + 1e-15);
        }

        #[test]
        fn expectation_general_below_closed_form(k in 5usize..2000) {
            let g = expected_robustness_bound(&eq(k), &ID, 0.0).unwrap();
            let c = expected_robustness_bound_equiprobable(k, &ID, 0.0).unwrap();
            prop_assert!(g <= c + 1e-12);
        }
    }
}
