//! Moduli of continuity `ω` with `‖g(z) − g(z′)‖ ≤ ω(‖z − z′‖₂)`, and the
//! sampling estimator of the probabilistic modulus `ω_κ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::{axpy, distance, norm, scale, sub};
use crate::models::{GeneratorModel, GradientCapability};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ModulusOfContinuity {
    Identity,
    /// `ω(δ) = L·δ + b`.
    Linear { slope: f64, offset: f64 },
    /// Piecewise-linear through `(δ, ω(δ))` points, strictly increasing in
    /// both coordinates. No extrapolation.
    Tabulated { points: Vec<(f64, f64)> },
}

impl ModulusOfContinuity {
    /// Lipschitz modulus `L·δ`.
    pub fn lipschitz(slope: f64) -> Result<Self> {
        Self::linear(slope, 0.0)
    }

    pub fn linear(slope: f64, offset: f64) -> Result<Self> {
        if !(slope > 0.0 && slope.is_finite()) || !(offset >= 0.0 && offset.is_finite()) {
            return Err(domain(format!(
                "linear modulus needs slope > 0 and offset >= 0, got ({slope}, {offset})"
            )));
        }
        Ok(ModulusOfContinuity::Linear { slope, offset })
    }

    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self> {
        let m = ModulusOfContinuity::Tabulated { points };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModulusOfContinuity::Identity => Ok(()),
            ModulusOfContinuity::Linear { slope, offset } => Self::linear(*slope, *offset).map(|_| ()),
            ModulusOfContinuity::Tabulated { points } => {
                if points.len() < 2 {
                    return Err(domain("tabulated modulus needs at least two points"));
                }
                if points.iter().any(|(d, v)| !(d.is_finite() && v.is_finite() && *d >= 0.0 && *v >= 0.0)) {
                    return Err(domain("tabulated modulus points must be finite and non-negative"));
                }
                if points.windows(2).any(|w| !(w[1].0 > w[0].0 && w[1].1 > w[0].1)) {
                    return Err(domain("tabulated modulus must be strictly increasing in both coordinates"));
                }
                Ok(())
            }
        }
    }

    /// `ω(0)`, or the value at the first tabulated point.
    pub fn floor(&self) -> f64 {
        match self {
            ModulusOfContinuity::Identity => 0.0,
            ModulusOfContinuity::Linear { offset, .. } => *offset,
            ModulusOfContinuity::Tabulated { points } => points[0].1,
        }
    }

    pub fn eval(&self, delta: f64) -> Result<f64> {
        if !(delta >= 0.0) || delta.is_infinite() {
            return Err(domain(format!("modulus argument must be finite and >= 0, got {delta}")));
        }
        match self {
            ModulusOfContinuity::Identity => Ok(delta),
            ModulusOfContinuity::Linear { slope, offset } => Ok(slope * delta + offset),
            ModulusOfContinuity::Tabulated { points } => {
                let (first, last) = (points[0].0, points[points.len() - 1].0);
                if delta < first || delta > last {
                    return Err(Error::Range(format!(
                        "delta {delta} outside tabulated range [{first}, {last}]"
                    )));
                }
                Ok(interpolate(points, delta))
            }
        }
    }

    /// `ω⁻¹(η)`. Values below `ω(0)` yield [`Error::BelowModulusFloor`].
    pub fn inverse(&self, eta: f64) -> Result<f64> {
        if !(eta >= 0.0) || eta.is_infinite() {
            return Err(domain(format!("modulus inverse needs finite eta >= 0, got {eta}")));
        }
        let floor = self.floor();
        if eta < floor {
            return Err(Error::BelowModulusFloor { eta, floor });
        }
        match self {
            ModulusOfContinuity::Identity => Ok(eta),
            ModulusOfContinuity::Linear { slope, offset } => Ok((eta - offset) / slope),
            ModulusOfContinuity::Tabulated { points } => {
                let top = points[points.len() - 1];
                if eta > top.1 {
                    return Err(Error::Range(format!(
                        "eta {eta} above tabulated maximum {}",
                        top.1
                    )));
                }
                let (mut lo, mut hi) = (points[0].0, top.0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if interpolate(points, mid) < eta {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-15 * hi.max(1.0) {
                        break;
                    }
                }
                Ok(0.5 * (lo + hi))
            }
        }
    }

    /// `ω⁻¹(η)`, mapping image distances below the floor to latent radius 0.
    pub(crate) fn inverse_or_zero(&self, eta: f64) -> Result<f64> {
        match self.inverse(eta) {
            Err(Error::BelowModulusFloor { .. }) => Ok(0.0),
            other => other,
        }
    }

    pub fn is_concave(&self) -> bool {
        match self {
            ModulusOfContinuity::Identity | ModulusOfContinuity::Linear { .. } => true,
            ModulusOfContinuity::Tabulated { points } => {
                let slopes: Vec<f64> = points
                    .windows(2)
                    .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
                    .collect();
                slopes.windows(2).all(|s| s[1] <= s[0] * (1.0 + 1e-12))
            }
        }
    }
}

fn interpolate(points: &[(f64, f64)], delta: f64) -> f64 {
    let i = points.partition_point(|(d, _)| *d < delta);
    if i == 0 {
        return points[0].1;
    }
    let (d0, v0) = points[i - 1];
    let (d1, v1) = points[i.min(points.len() - 1)];
    if d1 == d0 {
        return v1;
    }
    v0 + (v1 - v0) * (delta - d0) / (d1 - d0)
}

/// Settings of the inner maximization `sup_{‖z′−z‖₂ ≤ δ} ‖g(z) − g(z′)‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerOptConfig {
    pub steps: usize,
    pub restarts: usize,
    /// Initial step as a fraction of `δ`.
    pub learning_rate: f64,
    /// Permit central differences when the generator has no analytic gradient.
    pub finite_difference: bool,
}

impl Default for InnerOptConfig {
    fn default() -> Self {
        InnerOptConfig {
            steps: 200,
            restarts: 3,
            learning_rate: 0.5,
            finite_difference: true,
        }
    }
}

/// Finite-difference step of the inner optimizer relative to `δ`.
pub const MODULUS_FD_STEP: f64 = 1e-4;

/// Probabilistic modulus `ω_κ` tabulated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusEstimate {
    pub delta_grid: Vec<f64>,
    pub kappa: f64,
    pub values: Vec<f64>,
    pub samples_per_point: usize,
    #[serde(default)]
    pub inner_opt_steps: usize,
}

impl ModulusEstimate {
    /// Tabulated modulus through the estimates, anchored at `(0, 0)`. Flat
    /// runs keep only their first point so the table is strictly increasing.
    pub fn to_modulus(&self) -> Result<ModulusOfContinuity> {
        let mut points: Vec<(f64, f64)> = Vec::with_capacity(self.values.len() + 1);
        if self.delta_grid.first().is_some_and(|d| *d > 0.0) && self.values.first().is_some_and(|v| *v > 0.0) {
            points.push((0.0, 0.0));
        }
        for (d, v) in self.delta_grid.iter().zip(&self.values) {
            if points.last().is_none_or(|(pd, pv)| d > pd && v > pv) {
                points.push((*d, *v));
            }
        }
        ModulusOfContinuity::tabulated(points)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Per-sample suprema `s_i = sup_{‖u‖ ≤ δ} ‖g(z_i + u) − g(z_i)‖` for
/// `z_i ~ N(0, I)`, approximated from below by projected gradient ascent.
/// Sample `i` uses substream `(seed, i)` for its latent point and restarts.
pub fn sample_suprema(
    g: &GeneratorModel,
    delta: f64,
    n_samples: usize,
    opt: &InnerOptConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(domain(format!("delta must be positive, got {delta}")));
    }
    if g.gradient_capability() != GradientCapability::Analytic && !opt.finite_difference {
        return Err(Error::Capability(
            "generator lacks analytic gradients and finite differences are disabled".into(),
        ));
    }
    (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::substream(seed, i as u64);
            let z = rng::standard_normal_vec(&mut r, g.latent_dim());
            local_supremum(g, &z, delta, opt, &mut r)
        })
        .collect()
}

fn local_supremum<R: rand::Rng>(
    g: &GeneratorModel,
    z: &[f64],
    delta: f64,
    opt: &InnerOptConfig,
    r: &mut R,
) -> Result<f64> {
    let base = g.forward(z);
    let objective = |u: &[f64]| distance(&g.forward(&axpy(z, 1.0, u)), &base);
    let gradient = |u: &[f64]| -> Result<Vec<f64>> {
        let zu = axpy(z, 1.0, u);
        let diff = sub(&g.forward(&zu), &base);
        match g.gradient_capability() {
            GradientCapability::Analytic => g.vjp(&zu, &diff),
            _ => Ok(g.fd_jacobian(&zu, MODULUS_FD_STEP * delta).matvec_t(&diff)),
        }
    };
    let mut best: f64 = 0.0;
    for _ in 0..opt.restarts.max(1) {
        let mut u = scale(&rng::unit_vector(r, g.latent_dim()), delta);
        let mut value = objective(&u);
        let mut lr = opt.learning_rate;
        for _ in 0..opt.steps {
            let grad = gradient(&u)?;
            let gn = norm(&grad);
            if gn == 0.0 || !gn.is_finite() {
                break;
            }
            let mut cand = axpy(&u, lr * delta / gn, &grad);
            let cn = norm(&cand);
            if cn > delta {
                cand = scale(&cand, delta / cn);
            }
            let cv = objective(&cand);
            if cv >= value {
                u = cand;
                value = cv;
                lr = (lr * 1.2).min(1.0);
            } else {
                lr *= 0.5;
                if lr < 1e-6 {
                    break;
                }
            }
        }
        best = best.max(value);
    }
    Ok(best)
}

/// Empirical `level`-quantile with the ceiling-index convention: the
/// `⌈level·n⌉`-th smallest value.
pub fn upper_quantile(values: &[f64], level: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = (level * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

fn check_kappa(kappa: f64) -> Result<()> {
    if (0.0..1.0).contains(&kappa) {
        Ok(())
    } else {
        Err(domain(format!("kappa must lie in [0, 1), got {kappa}")))
    }
}

/// `ω_κ(δ)`: the empirical `(1−κ)`-quantile of the sampled local suprema.
pub fn estimate_modulus(
    g: &GeneratorModel,
    delta: f64,
    kappa: f64,
    n_samples: usize,
    opt: &InnerOptConfig,
    seed: u64,
) -> Result<f64> {
    check_kappa(kappa)?;
    if n_samples < 10 {
        return Err(domain("estimate_modulus needs at least 10 samples"));
    }
    let s = sample_suprema(g, delta, n_samples, opt, seed)?;
    Ok(upper_quantile(&s, 1.0 - kappa))
}

/// [`estimate_modulus`] over a strictly increasing grid, followed by an
/// isotonic (pool-adjacent-violators) fit so the table is nondecreasing.
pub fn fit_modulus_table(
    g: &GeneratorModel,
    delta_grid: &[f64],
    kappa: f64,
    n_samples: usize,
    opt: &InnerOptConfig,
    seed: u64,
) -> Result<ModulusEstimate> {
    if delta_grid.is_empty() || delta_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain("delta grid must be non-empty and strictly increasing"));
    }
    let raw = delta_grid
        .iter()
        .map(|&d| estimate_modulus(g, d, kappa, n_samples, opt, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModulusEstimate {
        delta_grid: delta_grid.to_vec(),
        kappa,
        values: isotonic_nondecreasing(&raw),
        samples_per_point: n_samples,
        inner_opt_steps: opt.steps,
    })
}

/// Least-squares nondecreasing fit (unit weights).
pub fn isotonic_nondecreasing(values: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 <= s1 / c1 as f64 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s0 + s1, c0 + c1);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(s, c)| std::iter::repeat_n(s / c as f64, c))
        .collect()
}
