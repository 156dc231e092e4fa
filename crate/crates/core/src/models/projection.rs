//! Nearest-point projection of an image onto the range of a generator.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{norm, sub, Matrix};
use crate::models::generator::{GeneratorKind, GeneratorModel};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionConfig {
    pub restarts: usize,
    pub steps: usize,
    pub step_size: f64,
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            restarts: 8,
            steps: 500,
            step_size: 0.05,
            grad_tol: 1e-7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub latent: Vec<f64>,
    pub residual: f64,
}

/// `argmin_z ‖g(z) − x‖`. Closed form for identity, linear and circle
/// generators; multi-start gradient descent otherwise. Fails with
/// [`Error::ProjectionNonConvergence`] (carrying the best iterate) when no
/// restart reaches the gradient tolerance.
pub fn project(g: &GeneratorModel, x: &[f64], cfg: &ProjectionConfig) -> Result<Projection> {
    check_dim(g.image_dim(), x.len())?;
    let latent = match g.kind() {
        GeneratorKind::Identity { scale, .. } => x.iter().map(|v| v / scale).collect(),
        GeneratorKind::Linear { matrix, offset } => {
            let normal = matrix.transpose().matmul(matrix);
            let rhs = matrix.matvec_t(&sub(x, offset));
            normal.solve(&rhs).ok_or_else(|| {
                Error::Capability("linear generator is not injective; projection undefined".into())
            })?
        }
        GeneratorKind::Circle => vec![x[1].atan2(x[0]) / TAU],
        GeneratorKind::Mlp(_) => return descend(g, x, cfg),
    };
    let residual = norm(&sub(&g.forward(&latent), x));
    Ok(Projection { latent, residual })
}

/// Like [`project`] but settles for the best iterate when descent stalls.
pub fn project_best_effort(g: &GeneratorModel, x: &[f64], cfg: &ProjectionConfig) -> Result<Vec<f64>> {
    match project(g, x, cfg) {
        Ok(p) => Ok(p.latent),
        Err(Error::ProjectionNonConvergence { best, .. }) => Ok(best),
        Err(e) => Err(e),
    }
}

/// Jacobian of the projection map at `x`, given its projection `z` (`d × m`).
pub(crate) fn projection_jacobian(g: &GeneratorModel, x: &[f64], z: &[f64]) -> Result<Matrix> {
    match g.kind() {
        GeneratorKind::Identity { dim, scale } => Ok(Matrix::diagonal(&vec![1.0 / scale; *dim])),
        GeneratorKind::Circle => {
            let r2 = x[0] * x[0] + x[1] * x[1];
            if r2 == 0.0 {
                return Ok(Matrix::zeros(1, 2));
            }
            Ok(Matrix::from_row_major(1, 2, vec![-x[1] / (TAU * r2), x[0] / (TAU * r2)]))
        }
        _ => {
            // Gauss-Newton: (JᵀJ)⁻¹Jᵀ, exact for zero-residual points.
            let j = g.jacobian(z)?;
            let jt = j.transpose();
            let normal = jt.matmul(&j);
            let d = g.latent_dim();
            let mut out = Matrix::zeros(d, g.image_dim());
            for col in 0..g.image_dim() {
                let rhs: Vec<f64> = (0..d).map(|r| jt[(r, col)]).collect();
                let sol = normal.solve(&rhs).ok_or_else(|| {
                    Error::Capability("generator Jacobian is rank deficient".into())
                })?;
                for (r, v) in sol.into_iter().enumerate() {
                    out[(r, col)] = v;
                }
            }
            Ok(out)
        }
    }
}

fn descend(g: &GeneratorModel, x: &[f64], cfg: &ProjectionConfig) -> Result<Projection> {
    let d = g.latent_dim();
    let loss = |z: &[f64]| 0.5 * sub(&g.forward(z), x).iter().map(|v| v * v).sum::<f64>();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut converged = false;
    for restart in 0..cfg.restarts.max(1) {
        let mut z = if restart == 0 {
            vec![0.0; d]
        } else {
            rng::standard_normal_vec(&mut rng::substream(cfg.seed, restart as u64), d)
        };
        let mut f = loss(&z);
        let mut step = cfg.step_size;
        for _ in 0..cfg.steps {
            let grad = g.vjp(&z, &sub(&g.forward(&z), x))?;
            if norm(&grad) < cfg.grad_tol || f < 1e-24 {
                converged = true;
                break;
            }
            // halve the step until the loss decreases
            let mut accepted = false;
            while step > 1e-12 {
                let cand = crate::linalg::axpy(&z, -step, &grad);
                let fc = loss(&cand);
                if fc < f {
                    z = cand;
                    f = fc;
                    accepted = true;
                    step = (step * 1.5).min(cfg.step_size * 64.0);
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                converged = true;
                break;
            }
        }
        if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
            best = Some((z, f));
        }
    }
    let (latent, f) = best.expect("at least one restart");
    let residual = (2.0 * f).sqrt();
    if converged {
        Ok(Projection { latent, residual })
    } else {
        Err(Error::ProjectionNonConvergence {
            best: latent,
            residual,
        })
    }
}
