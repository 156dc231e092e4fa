//! Standard-normal distribution machinery and the Gaussian tail inequalities
//! the robustness bounds are built from.
//!
//! `Φ` is evaluated through `erfc`, which keeps relative accuracy in both
//! tails. `Φ⁻¹` starts from Acklam's rational approximation and polishes it
//! with two Newton steps on `Φ`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// A value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const HALF: Probability = Probability(0.5);
    pub const ONE: Probability = Probability(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            Err(domain(format!("probability {value} outside [0, 1]")))
        }
    }

    /// Clamps into `[0, 1]`. NaN maps to 0.
    pub fn clamped(value: f64) -> Self {
        if value.is_nan() {
            Probability(0.0)
        } else {
            Probability(value.clamp(0.0, 1.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn complement(self) -> Self {
        Probability(1.0 - self.0)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Probability::new(v)
    }
}

impl std::fmt::Display for Probability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Both sides of the Mills-ratio sandwich on `Φ(x)` for `x ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfSandwich {
    pub lower: f64,
    pub upper: f64,
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn density(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `Φ(x)` without argument checks; `Φ(±∞)` is 1 or 0.
pub(crate) fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 − Φ(x)`, accurate for large positive `x`.
pub(crate) fn phi_upper(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// `Φ(b) − Φ(a)` for `a ≤ b`, computed in whichever tail avoids cancellation.
pub(crate) fn mass_between(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    if a >= 0.0 {
        phi_upper(a) - phi_upper(b)
    } else if b <= 0.0 {
        phi(b) - phi(a)
    } else {
        1.0 - phi_upper(b) - phi(a)
    }
}

/// Standard normal CDF `Φ(x)`.
pub fn std_normal_cdf(x: f64) -> Result<Probability> {
    if !x.is_finite() {
        return Err(domain(format!("std_normal_cdf: non-finite argument {x}")));
    }
    Ok(Probability::clamped(phi(x)))
}

/// `Φ⁻¹(p)` for `p ∈ (0, 1)`.
pub fn std_normal_cdf_inv(p: f64) -> Result<f64> {
    if p == 0.0 || p == 1.0 {
        return Err(Error::UnboundedQuantile(p));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("std_normal_cdf_inv: p = {p} outside (0, 1)")));
    }
    Ok(phi_inv(p))
}

/// `Φ⁻¹` extended to the closed interval: `±∞` at the endpoints.
pub(crate) fn phi_inv(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        // 1 − p is exact here, so the upper tail keeps full relative precision.
        -lower_quantile(1.0 - p)
    } else {
        lower_quantile(p)
    }
}

/// Quantile for `p ≤ 1/2`, refined against the lower tail.
fn lower_quantile(p: f64) -> f64 {
    let mut x = acklam(p);
    for _ in 0..2 {
        let pdf = density(x);
        if pdf == 0.0 {
            break;
        }
        x -= (phi(x) - p) / pdf;
    }
    x
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Mills-ratio sandwich
/// `1 − φ(x)·2/(x+√(x²+8/π)) ≤ Φ(x) ≤ 1 − φ(x)·2/(x+√(x²+4))` for `x ≥ 0`.
pub fn cdf_sandwich(x: f64) -> Result<CdfSandwich> {
    if !(x >= 0.0) || x.is_infinite() {
        return Err(domain(format!("cdf_sandwich requires finite x >= 0, got {x}")));
    }
    let pdf = density(x);
    let lower = 1.0 - pdf * 2.0 / (x + (x * x + 8.0 / PI).sqrt());
    let upper = 1.0 - pdf * 2.0 / (x + (x * x + 4.0).sqrt());
    Ok(CdfSandwich { lower, upper })
}

/// Lower bound on `Φ(Φ⁻¹(p) + η)` for `p ∈ [1/2, 1]`, `η > 0`:
/// `1 − (1−p)·√(π/2)·e^{−η²/2}·e^{−η·Φ⁻¹(p)}`, clamped at 0.
pub fn tail_shift_lower_bound(p: f64, eta: f64) -> Result<Probability> {
    if !(0.5..=1.0).contains(&p) {
        return Err(domain(format!("tail_shift_lower_bound requires p in [1/2, 1], got {p}")));
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(domain(format!("tail_shift_lower_bound requires eta > 0, got {eta}")));
    }
    if p == 1.0 {
        return Ok(Probability::ONE);
    }
    Ok(shifted_tail(1.0 - p, eta, phi_inv(p)))
}

/// The same bound with `p = 1 − 1/K` and `Φ⁻¹(p)` replaced by
/// [`phi_inv_class_lb`]; valid for `K ≥ 5` and `η ≥ 1`.
pub fn tail_shift_lower_bound_classes(classes: u64, eta: f64) -> Result<Probability> {
    if !(eta >= 1.0) || !eta.is_finite() {
        return Err(Error::Hypothesis(format!(
            "class-count tail bound requires eta >= 1, got {eta}"
        )));
    }
    let a = phi_inv_class_lb(classes)?;
    Ok(shifted_tail(1.0 / classes as f64, eta, a))
}

fn shifted_tail(tail: f64, eta: f64, quantile: f64) -> Probability {
    let factor = (PI / 2.0).sqrt() * (-0.5 * eta * eta).exp() * (-eta * quantile).exp();
    Probability::clamped(1.0 - tail * factor)
}

/// `√(log(K²/(4π log K)))`, a lower bound on `Φ⁻¹(1 − 1/K)` for `K ≥ 5`.
pub fn phi_inv_class_lb(classes: u64) -> Result<f64> {
    if classes < 5 {
        return Err(Error::Hypothesis(format!(
            "quantile lower bound holds only for K >= 5, got {classes}"
        )));
    }
    let k = classes as f64;
    Ok((k * k / (4.0 * PI * k.ln())).ln().sqrt())
}

/// `E‖z‖₂` for `z ~ N(0, I_d)`: `√2·Γ((d+1)/2)/Γ(d/2)`.
pub fn gaussian_norm_mean(dim: usize) -> Result<f64> {
    if dim == 0 {
        return Err(domain("gaussian_norm_mean requires d >= 1"));
    }
    let d = dim as f64;
    Ok(SQRT_2 * (libm::lgamma((d + 1.0) / 2.0) - libm::lgamma(d / 2.0)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Adaptive Simpson quadrature of the density; independent of `erfc`.
    fn quad_cdf(x: f64) -> f64 {
        fn simpson(a: f64, b: f64) -> f64 {
            let m = 0.5 * (a + b);
            (b - a) / 6.0 * (density(a) + 4.0 * density(m) + density(b))
        }
        fn adapt(a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (l, r) = (simpson(a, m), simpson(m, b));
            if depth == 0 || (l + r - whole).abs() <= 15.0 * tol {
                l + r + (l + r - whole) / 15.0
            } else {
                adapt(a, m, l, tol / 2.0, depth - 1) + adapt(m, b, r, tol / 2.0, depth - 1)
            }
        }
        let half = adapt(0.0, x.abs(), simpson(0.0, x.abs()), 1e-15, 40);
        if x >= 0.0 {
            0.5 + half
        } else {
            0.5 - half
        }
    }

    /// Lower tail by the Laplace continued fraction, evaluated bottom-up.
    fn cf_lower_tail(x: f64) -> f64 {
        let t = -x;
        let mut acc = t;
        for k in (1..200).rev() {
            acc = t + k as f64 / acc;
        }
        density(t) / acc
    }

    #[test]
    fn cdf_reference_values() {
        assert_eq!(std_normal_cdf(0.0).unwrap().value(), 0.5);
        let p = std_normal_cdf(1.281552).unwrap().value();
        assert!((p - quad_cdf(1.281552)).abs() < 1e-12);
        assert!((p - 0.9).abs() < 1e-6);
        let tail = std_normal_cdf(-8.0).unwrap().value();
        let oracle = cf_lower_tail(-8.0);
        assert!(((tail - oracle) / oracle).abs() < 1e-13, "{tail} vs {oracle}");
        assert!((tail - 6.22e-16).abs() < 1e-18);
    }

    #[test]
    fn cdf_rejects_non_finite() {
        assert!(matches!(std_normal_cdf(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(std_normal_cdf(f64::INFINITY), Err(Error::Domain(_))));
    }

    #[test]
    fn cdf_relative_tail_accuracy() {
        for &x in &[-5.0, -10.0, -20.0, -30.0] {
            let got = phi(x);
            let oracle = cf_lower_tail(x);
            assert!(((got - oracle) / oracle).abs() < 1e-13, "x={x}: {got} vs {oracle}");
        }
    }

    #[test]
    fn quantile_reference_values() {
        assert_eq!(std_normal_cdf_inv(0.5).unwrap(), 0.0);
        // bisection on the CDF as oracle
        let (mut lo, mut hi) = (0.0, 3.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phi(mid) < 0.9 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let q = std_normal_cdf_inv(0.9).unwrap();
        assert!((q - lo).abs() < 1e-12);
        assert!((q - 1.281552).abs() < 1e-5);
        let x = std_normal_cdf_inv(phi(2.5)).unwrap();
        assert!((x - 2.5).abs() < 1e-8);
    }

    #[test]
    fn quantile_errors() {
        assert!(matches!(std_normal_cdf_inv(0.0), Err(Error::UnboundedQuantile(_))));
        assert!(matches!(std_normal_cdf_inv(1.0), Err(Error::UnboundedQuantile(_))));
        assert!(matches!(std_normal_cdf_inv(1.5), Err(Error::Domain(_))));
        assert!(matches!(std_normal_cdf_inv(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn quantile_deep_tails() {
        for &p in &[1e-300, 1e-100, 1e-20, 1e-8, 0.3, 0.7, 1.0 - 1e-10] {
            let x = std_normal_cdf_inv(p).unwrap();
            assert!((phi(x) - p).abs() <= 1e-10 * p.max(1e-10), "p={p}");
        }
    }

    #[test]
    fn sandwich_reference_values() {
        let s0 = cdf_sandwich(0.0).unwrap();
        assert!((s0.lower - 0.5).abs() < 1e-15);
        assert!((s0.upper - 0.601058).abs() < 1e-5);
        let s1 = cdf_sandwich(1.0).unwrap();
        let phi1 = quad_cdf(1.0);
        assert!((phi1 - 0.841345).abs() < 1e-6);
        assert!(s1.lower <= phi1 && phi1 <= s1.upper);
        assert!(cdf_sandwich(-0.1).is_err());
    }

    #[test]
    fn tail_shift_reference_values() {
        let v = tail_shift_lower_bound(0.5, 2.0).unwrap().value();
        assert!((v - 0.915191).abs() < 1e-5);
        assert!(v <= phi(2.0));
        let small = tail_shift_lower_bound(0.5, 1e-9).unwrap().value();
        assert!((small - 0.373343).abs() < 1e-5);
        assert!(small < 0.5);
        let k = tail_shift_lower_bound_classes(10, 1.0).unwrap().value();
        assert!((k - 0.975038).abs() < 1e-5);
        assert!(k <= tail_shift_lower_bound(0.9, 1.0).unwrap().value());
        assert!(tail_shift_lower_bound(0.4, 1.0).is_err());
        assert!(tail_shift_lower_bound(0.6, 0.0).is_err());
        assert!(tail_shift_lower_bound_classes(10, 0.5).is_err());
    }

    #[test]
    fn tail_shift_clamps_at_zero() {
        // (1-p)·√(π/2) > 1 is impossible for p ≥ 1/2, but the clamp still
        // guards the probability type.
        let v = tail_shift_lower_bound(0.5, 1e-300).unwrap();
        assert!(v.value() >= 0.0);
        assert_eq!(tail_shift_lower_bound(1.0, 1.0).unwrap(), Probability::ONE);
    }

    #[test]
    fn class_quantile_bound_values() {
        assert!((phi_inv_class_lb(10).unwrap() - 1.11360).abs() < 1e-4);
        assert!((phi_inv_class_lb(5).unwrap() - 0.460398).abs() < 1e-5);
        assert!(phi_inv_class_lb(5).unwrap() <= phi_inv(0.8));
        assert!(phi_inv_class_lb(100).unwrap() > phi_inv_class_lb(10).unwrap());
        assert!(matches!(phi_inv_class_lb(4), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn class_quantile_bound_holds_for_all_small_k() {
        for k in 5..=1000u64 {
            assert!(phi_inv_class_lb(k).unwrap() <= phi_inv(1.0 - 1.0 / k as f64));
        }
    }

    #[test]
    fn norm_mean_values() {
        assert!((gaussian_norm_mean(1).unwrap() - (2.0 / PI).sqrt()).abs() < 1e-9);
        assert!((gaussian_norm_mean(100).unwrap() - 9.975032).abs() < 1e-5);
        for d in 1..=10_000usize {
            let m = gaussian_norm_mean(d).unwrap();
            let df = d as f64;
            assert!((df - 1.0).sqrt() <= m && m <= df.sqrt(), "d={d}");
        }
        assert!(gaussian_norm_mean(0).is_err());
    }

    #[test]
    fn sandwich_grid() {
        for i in 0..1000 {
            let x = 10.0 * i as f64 / 999.0;
            let s = cdf_sandwich(x).unwrap();
            let p = phi(x);
            assert!(s.lower <= p && p <= s.upper, "x={x}");
        }
    }

    proptest! {
        #[test]
        fn cdf_symmetry_and_monotonicity(x in -40.0f64..40.0, dx in 0.0f64..1.0) {
            let a = std_normal_cdf(x).unwrap().value();
            let b = std_normal_cdf(-x).unwrap().value();
            prop_assert!((a + b - 1.0).abs() <= 1e-12);
            prop_assert!(std_normal_cdf(x + dx).unwrap().value() >= a);
        }

        #[test]
        fn quantile_round_trip(p in 1e-12f64..(1.0 - 1e-12)) {
            let x = std_normal_cdf_inv(p).unwrap();
            prop_assert!((phi(x) - p).abs() <= 1e-10);
        }

        #[test]
        fn tail_shift_dominated(p in 0.5f64..0.999, eta in 1e-6f64..5.0) {
            let bound = tail_shift_lower_bound(p, eta).unwrap().value();
            prop_assert!(bound <= phi(phi_inv(p) + eta) + 1e-15);
        }
    }
}
