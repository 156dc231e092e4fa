//! In-distribution search: latent witnesses refined by a penalty method on
//! the image distance, each stage re-localized on the latent boundary.

use super::field::{margin_gradient, runner_up, LatentField, ScoreField};
use super::search::{boundary_witnesses, ray_boundary, Witness};
use super::{AttackConfig, AttackOutcome};
use crate::error::{Error, Result};
use crate::linalg::{axpy, distance, dot, norm, scale, sub};
use crate::models::{ClassifierModel, GeneratorModel};

const PENALTY_SCHEDULE: [f64; 4] = [1e3, 1e2, 1e1, 1.0];
const MARGIN_SLACK: f64 = 1e-3;
const RAY_EXTENSIONS: [f64; 7] = [1.0, 1.01, 1.05, 1.1, 1.25, 1.5, 2.0];

struct Candidate {
    latent: Vec<f64>,
    image_distance: f64,
}

pub(super) fn search(
    f: &ClassifierModel,
    g: &GeneratorModel,
    z: &[f64],
    cfg: &AttackConfig,
) -> Result<AttackOutcome> {
    let field = LatentField { f, g };
    let x0 = g.forward(z);
    let class = field.label(z)?;
    let (seeds, iterations) = boundary_witnesses(&field, z, cfg)?;
    if seeds.is_empty() {
        return Err(Error::NonConvergence { iterations });
    }
    let image_distance = |w: &[f64]| distance(&g.forward(w), &x0);
    let mut best: Option<Candidate> = None;
    let consider = |latent: Vec<f64>, best: &mut Option<Candidate>| {
        let d = image_distance(&latent);
        if best.as_ref().is_none_or(|b| d < b.image_distance) {
            *best = Some(Candidate {
                latent,
                image_distance: d,
            });
        }
    };
    for seed in &seeds {
        consider(seed.point.clone(), &mut best);
    }
    let margin0 = {
        let s = field.scores(z)?;
        (s[class] - s[runner_up(&s, class)]).max(1e-12)
    };
    for seed in &seeds {
        let scale0 = image_distance(&seed.point).max(1e-12);
        let mut w = seed.point.clone();
        for &mu in &PENALTY_SCHEDULE {
            let objective = Penalty {
                field: &field,
                g,
                x0: &x0,
                class,
                mu,
                margin0,
                scale0,
            };
            w = objective.descend(w, cfg)?;
            for cand in relocalize(&field, z, class, &w, cfg)? {
                consider(cand, &mut best);
            }
        }
    }
    let best = best.expect("at least one seed");
    Ok(AttackOutcome {
        radius: best.image_distance,
        witness: best.latent,
        iterations,
    })
}

/// Boundary points along the latent ray through `w`, plus `w` itself when
/// it already lies outside the class.
fn relocalize(
    field: &LatentField<'_>,
    z: &[f64],
    class: usize,
    w: &[f64],
    cfg: &AttackConfig,
) -> Result<Vec<Vec<f64>>> {
    let len = distance(w, z);
    if len == 0.0 {
        return Ok(Vec::new());
    }
    let dir = scale(&sub(w, z), 1.0 / len);
    let mut out = Vec::new();
    if field.label(w)? != class {
        out.push(w.to_vec());
    }
    for factor in RAY_EXTENSIONS {
        if field.label(&axpy(z, len * factor, &dir))? != class {
            let Witness { point, .. } = ray_boundary(field, z, class, &dir, len * factor, cfg.bisection_tol)?;
            out.push(point);
            break;
        }
    }
    Ok(out)
}

/// `½‖g(w) − x0‖²/s² + μ·relu(m(w)/m0 + ε)²`, with `m` the margin of the
/// original class over its strongest competitor.
struct Penalty<'a> {
    field: &'a LatentField<'a>,
    g: &'a GeneratorModel,
    x0: &'a [f64],
    class: usize,
    mu: f64,
    margin0: f64,
    scale0: f64,
}

impl Penalty<'_> {
    fn value(&self, w: &[f64]) -> Result<f64> {
        let diff = sub(&self.g.forward(w), self.x0);
        let s = self.field.scores(w)?;
        let m = (s[self.class] - s[runner_up(&s, self.class)]) / self.margin0 + MARGIN_SLACK;
        Ok(0.5 * dot(&diff, &diff) / (self.scale0 * self.scale0) + self.mu * m.max(0.0).powi(2))
    }

    fn gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        let diff = sub(&self.g.forward(w), self.x0);
        let mut grad = scale(&self.g.vjp(w, &diff)?, 1.0 / (self.scale0 * self.scale0));
        let s = self.field.scores(w)?;
        let k = runner_up(&s, self.class);
        let m = (s[self.class] - s[k]) / self.margin0 + MARGIN_SLACK;
        if m > 0.0 {
            // ∇(s_c − s_k) = −∇(s_k − s_c)
            let dm = margin_gradient(&self.field.jacobian(w)?, self.class, k);
            grad = axpy(&grad, -2.0 * self.mu * m / self.margin0, &dm);
        }
        Ok(grad)
    }

    /// Gradient descent with Armijo backtracking.
    fn descend(&self, mut w: Vec<f64>, cfg: &AttackConfig) -> Result<Vec<f64>> {
        let mut value = self.value(&w)?;
        let mut step = cfg.step_size;
        for _ in 0..cfg.penalty_steps {
            let grad = self.gradient(&w)?;
            let gn2 = dot(&grad, &grad);
            if gn2 < 1e-24 || !gn2.is_finite() {
                break;
            }
            let mut accepted = false;
            while step > 1e-12 {
                let cand = axpy(&w, -step / gn2.sqrt(), &grad);
                let cv = self.value(&cand)?;
                if cv <= value - 1e-4 * step * gn2.sqrt() {
                    w = cand;
                    value = cv;
                    step *= 1.5;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted || norm(&grad) < 1e-12 {
                break;
            }
        }
        Ok(w)
    }
}
