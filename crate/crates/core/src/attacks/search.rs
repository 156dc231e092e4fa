//! DeepFool steps, boundary bisection along rays and direction refinement.

use rand::Rng;

use super::field::{margin_gradient, ScoreField};
use super::AttackConfig;
use crate::error::Result;
use crate::linalg::{axpy, distance, dot, norm, scale, sub};
use crate::rng;

/// A point of a different class than the origin, at distance `radius`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Witness {
    pub point: Vec<f64>,
    pub radius: f64,
}

/// DeepFool from `start`, stepping until the label differs from `class`.
/// Returns the first overshot iterate that leaves the class, if any, and
/// the number of linearization steps taken.
pub(crate) fn deepfool<F: ScoreField>(
    field: &F,
    start: &[f64],
    class: usize,
    cfg: &AttackConfig,
) -> Result<(Option<Vec<f64>>, usize)> {
    if field.label(start)? != class {
        return Ok((Some(start.to_vec()), 0));
    }
    let mut total = vec![0.0; start.len()];
    for it in 1..=cfg.max_iters {
        let p = axpy(start, 1.0, &total);
        let s = field.scores(&p)?;
        let jac = field.jacobian(&p)?;
        let mut step: Option<(f64, Vec<f64>)> = None;
        for k in (0..s.len()).filter(|&k| k != class) {
            let w = margin_gradient(&jac, class, k);
            let wn = norm(&w);
            if wn == 0.0 || !wn.is_finite() {
                continue;
            }
            let gap = (s[class] - s[k]).abs() + 1e-10;
            let dist = gap / wn;
            if step.as_ref().is_none_or(|(d, _)| dist < *d) {
                step = Some((dist, scale(&w, gap / (wn * wn))));
            }
        }
        let Some((_, r)) = step else {
            return Ok((None, it));
        };
        total = axpy(&total, 1.0, &r);
        let candidate = axpy(start, 1.0 + cfg.overshoot, &total);
        if field.label(&candidate)? != class {
            return Ok((Some(candidate), it));
        }
    }
    Ok((None, cfg.max_iters))
}

/// Bisection on `t ∈ [0, t_hi]` along `origin + t·dir` (unit `dir`), given
/// that the far end is outside `class`. The returned point is outside the
/// class; `origin + lo·dir` is inside.
pub(crate) fn ray_boundary<F: ScoreField>(
    field: &F,
    origin: &[f64],
    class: usize,
    dir: &[f64],
    t_hi: f64,
    tol: f64,
) -> Result<Witness> {
    let (mut lo, mut hi) = (0.0, t_hi);
    while hi - lo > tol * hi {
        let mid = 0.5 * (lo + hi);
        if field.label(&axpy(origin, mid, dir))? == class {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Witness {
        point: axpy(origin, hi, dir),
        radius: hi,
    })
}

/// Bisects from `origin` toward any point `target` outside `class`.
pub(crate) fn localize<F: ScoreField>(
    field: &F,
    origin: &[f64],
    class: usize,
    target: &[f64],
    tol: f64,
) -> Result<Witness> {
    let t = distance(target, origin);
    let dir = scale(&sub(target, origin), 1.0 / t);
    ray_boundary(field, origin, class, &dir, t, tol)
}

/// Rotates the witness direction toward the boundary normal while that
/// shortens the crossing distance.
pub(crate) fn refine<F: ScoreField>(
    field: &F,
    origin: &[f64],
    class: usize,
    start: Witness,
    cfg: &AttackConfig,
) -> Result<Witness> {
    let mut best = start;
    for _ in 0..cfg.refine_iters {
        let k = field.label(&best.point)?;
        let n = margin_gradient(&field.jacobian(&best.point)?, class, k);
        let nn = norm(&n);
        if nn == 0.0 || !nn.is_finite() {
            break;
        }
        let n_hat = scale(&n, 1.0 / nn);
        let u = scale(&sub(&best.point, origin), 1.0 / best.radius);
        let mut improved = false;
        let mut beta = 1.0;
        while beta >= 1.0 / 64.0 {
            let blend = axpy(&scale(&u, 1.0 - beta), beta, &n_hat);
            let bn = norm(&blend);
            if bn > 0.0 {
                let u2 = scale(&blend, 1.0 / bn);
                if field.label(&axpy(origin, best.radius, &u2))? != class {
                    let cand = ray_boundary(field, origin, class, &u2, best.radius, cfg.bisection_tol)?;
                    if cand.radius < best.radius * (1.0 - cfg.bisection_tol) {
                        best = cand;
                        improved = true;
                        break;
                    }
                }
            }
            beta *= 0.5;
        }
        if !improved || dot(&u, &n_hat) > 1.0 - 1e-15 {
            break;
        }
    }
    Ok(best)
}

/// Every refined witness found from the origin and from jittered restarts,
/// best first, with the total number of DeepFool steps.
pub(crate) fn boundary_witnesses<F: ScoreField>(
    field: &F,
    origin: &[f64],
    cfg: &AttackConfig,
) -> Result<(Vec<Witness>, usize)> {
    let class = field.label(origin)?;
    let mut r = rng::substream(cfg.seed, 0);
    let mut found: Vec<Witness> = Vec::new();
    let mut iterations = 0;
    for restart in 0..=cfg.restarts {
        let start = if restart == 0 {
            origin.to_vec()
        } else {
            let best = found.iter().map(|w| w.radius).fold(f64::INFINITY, f64::min);
            let sigma = if best.is_finite() {
                best * r.random_range(0.25..1.0)
            } else {
                cfg.step_size * (1u64 << restart.min(20)) as f64
            };
            axpy(origin, sigma, &rng::unit_vector(&mut r, origin.len()))
        };
        let (hit, its) = deepfool(field, &start, class, cfg)?;
        iterations += its;
        if let Some(p) = hit {
            let w = localize(field, origin, class, &p, cfg.bisection_tol)?;
            found.push(refine(field, origin, class, w, cfg)?);
        }
    }
    found.sort_by(|a, b| a.radius.total_cmp(&b.radius));
    Ok((found, iterations))
}
