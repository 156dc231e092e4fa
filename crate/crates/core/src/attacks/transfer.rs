//! Joint search for a single image perturbation that changes the labels of
//! two classifiers.

use serde::{Deserialize, Serialize};

use super::field::{margin_gradient, runner_up};
use super::AttackConfig;
use crate::error::{check_dim, Result};
use crate::linalg::{axpy, dot, norm, scale, Matrix};
use crate::models::{ClassifierModel, GeneratorModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    pub v: Vec<f64>,
    pub norm: f64,
    pub fools_f: bool,
    pub fools_h: bool,
    /// Both labels change and `norm ≤ η`.
    pub success: bool,
}

/// Linearized margin constraint `m + a·r ≤ 0`.
struct Constraint {
    m: f64,
    a: Vec<f64>,
}

fn linearize(clf: &ClassifierModel, x: &[f64], class: usize) -> Result<Constraint> {
    let s = clf.scores(x)?;
    let k = runner_up(&s, class);
    let jac = clf.score_jacobian(x)?;
    // m = s_c − s_k, ∇m = −∇(s_k − s_c)
    let a: Vec<f64> = margin_gradient(&jac, class, k).iter().map(|v| -v).collect();
    Ok(Constraint { m: s[class] - s[k], a })
}

/// Smallest step onto the boundary of a single constraint.
fn single(c: &Constraint) -> Option<Vec<f64>> {
    let an2 = dot(&c.a, &c.a);
    (an2 > 0.0).then(|| scale(&c.a, -(c.m.max(0.0) + 1e-10) / an2))
}

fn satisfies(c: &Constraint, r: &[f64]) -> bool {
    c.m + dot(&c.a, r) <= 0.0
}

/// Minimum-norm `r` with both linearized margins non-positive.
fn joint_step(cf: &Constraint, ch: &Constraint) -> Option<Vec<f64>> {
    let mut options: Vec<Vec<f64>> = Vec::new();
    if cf.m <= 0.0 && ch.m <= 0.0 {
        return Some(vec![0.0; cf.a.len()]);
    }
    for (this, other) in [(cf, ch), (ch, cf)] {
        if let Some(r) = single(this) {
            if satisfies(other, &r) {
                options.push(r);
            }
        }
    }
    if options.is_empty() {
        // both active: r = Aᵀλ with (AAᵀ)λ = −m
        let gram = Matrix::from_rows(&[
            vec![dot(&cf.a, &cf.a), dot(&cf.a, &ch.a)],
            vec![dot(&ch.a, &cf.a), dot(&ch.a, &ch.a)],
        ]);
        let rhs = [-(cf.m + 1e-10), -(ch.m + 1e-10)];
        if let Some(lambda) = gram.solve(&rhs) {
            options.push(axpy(&scale(&cf.a, lambda[0]), lambda[1], &ch.a));
        }
    }
    options.into_iter().min_by(|a, b| norm(a).total_cmp(&norm(b)))
}

/// Searches for `v` with `‖v‖ ≤ η` changing both `f` and `h` at `g(z)`.
/// Failure is reported through the flags, not as an error.
pub fn find_transfer_perturbation(
    f: &ClassifierModel,
    h: &ClassifierModel,
    g: &GeneratorModel,
    z: &[f64],
    eta: f64,
    cfg: &AttackConfig,
) -> Result<TransferResult> {
    cfg.validate()?;
    check_dim(g.latent_dim(), z.len())?;
    check_dim(f.input_dim(), g.image_dim())?;
    check_dim(h.input_dim(), g.image_dim())?;
    let x0 = g.forward(z);
    let (cf, ch) = (f.classify(&x0)?, h.classify(&x0)?);
    let fooled = |v: &[f64]| -> Result<(bool, bool)> {
        let x = axpy(&x0, 1.0, v);
        Ok((f.classify(&x)? != cf, h.classify(&x)? != ch))
    };

    let mut total = vec![0.0; x0.len()];
    let mut hit: Option<Vec<f64>> = None;
    for _ in 0..cfg.max_iters {
        let x = axpy(&x0, 1.0, &total);
        let Some(r) = joint_step(&linearize(f, &x, cf)?, &linearize(h, &x, ch)?) else {
            break;
        };
        total = axpy(&total, 1.0, &r);
        let candidate = scale(&total, 1.0 + cfg.overshoot);
        if fooled(&candidate)? == (true, true) {
            hit = Some(candidate);
            break;
        }
        // far beyond the budget: give up
        if norm(&total) > 4.0 * eta.max(1e-12) {
            break;
        }
    }

    let v = match hit {
        Some(v) => {
            // shrink toward the origin while both labels stay changed
            let (mut lo, mut hi) = (0.0, 1.0);
            while hi - lo > cfg.bisection_tol * hi {
                let mid = 0.5 * (lo + hi);
                if fooled(&scale(&v, mid))? == (true, true) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            scale(&v, hi)
        }
        None => total,
    };
    let (fools_f, fools_h) = fooled(&v)?;
    let n = norm(&v);
    Ok(TransferResult {
        success: fools_f && fools_h && n <= eta,
        norm: n,
        v,
        fools_f,
        fools_h,
    })
}
