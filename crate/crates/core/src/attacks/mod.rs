//! Minimal-perturbation searches for the latent (`r_Z`), in-distribution
//! (`r_in`) and unconstrained (`r_unc`) robustness of a classifier on
//! generated data, and the joint search for perturbations that fool two
//! classifiers at once.
//!
//! Every returned radius comes with a witness that changes the label, so
//! the radii are upper estimates of the true minima.

mod field;
mod in_distribution;
mod search;
mod survey;
mod transfer;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, domain, Error, Result};
use crate::linalg::distance;
use crate::models::{ClassifierModel, GeneratorModel};
use field::{ImageField, LatentField};

pub use survey::{image_norm_mean, percentile, IMAGE_NORM_SAMPLES, robustness_survey, PercentileSummary, RadiusSet, RobustnessRecord, SurveyReport, SurveySummary};
pub use transfer::{find_transfer_perturbation, TransferResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// DeepFool linearization steps per start.
    pub max_iters: usize,
    pub overshoot: f64,
    /// Relative width at which boundary bisection stops.
    pub bisection_tol: f64,
    /// Jittered DeepFool starts in addition to the clean one.
    pub restarts: usize,
    /// Latent step scale of the in-distribution penalty descent.
    pub step_size: f64,
    pub seed: u64,
    /// Direction-refinement rounds per witness.
    pub refine_iters: usize,
    /// Descent steps per penalty stage of the in-distribution search.
    pub penalty_steps: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            max_iters: 50,
            overshoot: 0.02,
            bisection_tol: 1e-6,
            restarts: 4,
            step_size: 0.05,
            seed: 0,
            refine_iters: 30,
            penalty_steps: 100,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(domain("max_iters must be >= 1"));
        }
        if !(self.bisection_tol > 0.0 && self.bisection_tol < 1.0) {
            return Err(domain("bisection_tol must lie in (0, 1)"));
        }
        if !(self.overshoot >= 0.0) || !(self.step_size > 0.0) {
            return Err(domain("overshoot must be >= 0 and step_size > 0"));
        }
        Ok(())
    }
}

/// A successful attack: `witness` is classified differently from the
/// unperturbed point and lies at distance `radius` from it (image distance
/// for `r_in` and `r_unc`, latent distance for `r_Z`).
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub radius: f64,
    /// Perturbed point in the space the attack searched (latent for `r_Z`
    /// and `r_in`, image for `r_unc`).
    pub witness: Vec<f64>,
    pub iterations: usize,
}

/// `r_Z(z) = min ‖r‖₂` with `f(g(z + r)) ≠ f(g(z))`.
pub fn latent_robustness(
    f: &ClassifierModel,
    g: &GeneratorModel,
    z: &[f64],
    cfg: &AttackConfig,
) -> Result<AttackOutcome> {
    cfg.validate()?;
    check_dim(g.latent_dim(), z.len())?;
    check_dim(f.input_dim(), g.image_dim())?;
    let field = LatentField { f, g };
    let (found, iterations) = search::boundary_witnesses(&field, z, cfg)?;
    let best = found.into_iter().next().ok_or(Error::NonConvergence { iterations })?;
    Ok(AttackOutcome {
        radius: best.radius,
        witness: best.point,
        iterations,
    })
}

/// `r_in(g(z)) = min ‖g(z′) − g(z)‖` over latent `z′` with a different label.
pub fn in_distribution_robustness(
    f: &ClassifierModel,
    g: &GeneratorModel,
    z: &[f64],
    cfg: &AttackConfig,
) -> Result<AttackOutcome> {
    cfg.validate()?;
    check_dim(g.latent_dim(), z.len())?;
    check_dim(f.input_dim(), g.image_dim())?;
    in_distribution::search(f, g, z, cfg)
}

/// `r_unc(x) = min ‖v‖₂` with `f(x + v) ≠ f(x)`.
pub fn unconstrained_robustness(f: &ClassifierModel, x: &[f64], cfg: &AttackConfig) -> Result<AttackOutcome> {
    cfg.validate()?;
    check_dim(f.input_dim(), x.len())?;
    let field = ImageField { f };
    let (found, iterations) = search::boundary_witnesses(&field, x, cfg)?;
    let best = found.into_iter().next().ok_or(Error::NonConvergence { iterations })?;
    Ok(AttackOutcome {
        radius: distance(&best.point, x),
        witness: best.point,
        iterations,
    })
}
