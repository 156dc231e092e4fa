use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, domain, Error, Result};
use crate::linalg::{dot, Matrix};
use crate::models::generator::{GeneratorModel, MODEL_FORMAT_VERSION};
use crate::models::mlp::Mlp;
use crate::models::projection::{project_best_effort, projection_jacobian, ProjectionConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierKind {
    /// Class 0 where `w·z ≥ t` for the latent code `z` of the input, class 1
    /// otherwise.
    HalfSpaceLatent {
        normal: Vec<f64>,
        threshold: f64,
        generator: GeneratorModel,
    },
    /// Class `(Σ floor z_i) mod 2` of the latent code.
    CheckerboardLatent { generator: GeneratorModel },
    /// Angular sectors of the plane: class `i` covers `[t_i, t_{i+1})`.
    Arc { thresholds: Vec<f64> },
    Mlp(Mlp),
    /// `x ↦ f(g(argmin_z ‖g(z) − x‖))`.
    NearestNeighbor {
        inner: Box<ClassifierModel>,
        generator: GeneratorModel,
        #[serde(default)]
        projection: ProjectionConfig,
    },
}

/// `f: R^m → {0, …, K−1}`: the argmax of per-class scores, ties going to
/// the lowest index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    num_classes: usize,
    #[serde(flatten)]
    kind: ClassifierKind,
}

pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

impl ClassifierModel {
    pub fn half_space_latent(normal: Vec<f64>, threshold: f64, generator: GeneratorModel) -> Result<Self> {
        check_dim(generator.latent_dim(), normal.len())?;
        if dot(&normal, &normal) == 0.0 || !threshold.is_finite() {
            return Err(domain("half-space needs a non-zero normal and a finite threshold"));
        }
        Ok(ClassifierModel {
            num_classes: 2,
            kind: ClassifierKind::HalfSpaceLatent {
                normal,
                threshold,
                generator,
            },
        })
    }

    pub fn checkerboard_latent(generator: GeneratorModel) -> Self {
        ClassifierModel {
            num_classes: 2,
            kind: ClassifierKind::CheckerboardLatent { generator },
        }
    }

    /// Sector classifier on the plane from boundary angles (radians).
    pub fn arc(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.len() < 2 || thresholds.iter().any(|t| !t.is_finite()) {
            return Err(domain("arc classifier needs at least two finite thresholds"));
        }
        let mut t: Vec<f64> = thresholds.iter().map(|a| a.rem_euclid(TAU)).collect();
        t.sort_by(f64::total_cmp);
        if t.windows(2).any(|w| w[1] - w[0] <= 0.0) {
            return Err(domain("arc thresholds must be distinct modulo 2π"));
        }
        Ok(ClassifierModel {
            num_classes: t.len(),
            kind: ClassifierKind::Arc { thresholds: t },
        })
    }

    pub fn mlp(net: Mlp) -> Result<Self> {
        if net.output_dim() < 2 {
            return Err(domain("an MLP classifier needs at least two outputs"));
        }
        Ok(ClassifierModel {
            num_classes: net.output_dim(),
            kind: ClassifierKind::Mlp(net),
        })
    }

    pub fn nearest_neighbor_wrap(
        inner: ClassifierModel,
        generator: GeneratorModel,
        projection: ProjectionConfig,
    ) -> Result<Self> {
        check_dim(generator.image_dim(), inner.input_dim())?;
        Ok(ClassifierModel {
            num_classes: inner.num_classes,
            kind: ClassifierKind::NearestNeighbor {
                inner: Box::new(inner),
                generator,
                projection,
            },
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn kind(&self) -> &ClassifierKind {
        &self.kind
    }

    pub fn input_dim(&self) -> usize {
        match &self.kind {
            ClassifierKind::HalfSpaceLatent { generator, .. }
            | ClassifierKind::CheckerboardLatent { generator }
            | ClassifierKind::NearestNeighbor { generator, .. } => generator.image_dim(),
            ClassifierKind::Arc { .. } => 2,
            ClassifierKind::Mlp(net) => net.input_dim(),
        }
    }

    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.scores(x)?))
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        match &self.kind {
            ClassifierKind::HalfSpaceLatent {
                normal,
                threshold,
                generator,
            } => {
                let z = project_best_effort(generator, x, &ProjectionConfig::default())?;
                let v = dot(normal, &z) - threshold;
                Ok(vec![v, -v])
            }
            ClassifierKind::CheckerboardLatent { generator } => {
                let z = project_best_effort(generator, x, &ProjectionConfig::default())?;
                let m = checkerboard_margin(&z);
                Ok(vec![m, -m])
            }
            ClassifierKind::Arc { thresholds } => {
                let theta = x[1].atan2(x[0]).rem_euclid(TAU);
                Ok((0..thresholds.len())
                    .map(|i| arc_margin(thresholds, i, theta).0)
                    .collect())
            }
            ClassifierKind::Mlp(net) => Ok(net.forward_unchecked(x)),
            ClassifierKind::NearestNeighbor {
                inner,
                generator,
                projection,
            } => {
                let z = project_best_effort(generator, x, projection)?;
                inner.scores(&generator.forward(&z))
            }
        }
    }

    /// Jacobian of the score vector with respect to the input (`K × m`).
    pub fn score_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        check_dim(self.input_dim(), x.len())?;
        match &self.kind {
            ClassifierKind::HalfSpaceLatent {
                normal, generator, ..
            } => {
                let z = project_best_effort(generator, x, &ProjectionConfig::default())?;
                let rule = Matrix::from_rows(&[normal.clone(), normal.iter().map(|v| -v).collect()]);
                Ok(rule.matmul(&projection_jacobian(generator, x, &z)?))
            }
            ClassifierKind::CheckerboardLatent { generator } => {
                let z = project_best_effort(generator, x, &ProjectionConfig::default())?;
                let grad = checkerboard_margin_grad(&z);
                let neg: Vec<f64> = grad.iter().map(|v| -v).collect();
                let rule = Matrix::from_rows(&[grad, neg]);
                Ok(rule.matmul(&projection_jacobian(generator, x, &z)?))
            }
            ClassifierKind::Arc { thresholds } => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                let mut jac = Matrix::zeros(thresholds.len(), 2);
                if r2 == 0.0 {
                    return Ok(jac);
                }
                let theta = x[1].atan2(x[0]).rem_euclid(TAU);
                let dtheta = [-x[1] / r2, x[0] / r2];
                for i in 0..thresholds.len() {
                    let slope = arc_margin(thresholds, i, theta).1;
                    jac[(i, 0)] = slope * dtheta[0];
                    jac[(i, 1)] = slope * dtheta[1];
                }
                Ok(jac)
            }
            ClassifierKind::Mlp(net) => Ok(net.jacobian_unchecked(x)),
            ClassifierKind::NearestNeighbor {
                inner,
                generator,
                projection,
            } => {
                let z = project_best_effort(generator, x, projection)?;
                let image = generator.forward(&z);
                let through = inner
                    .score_jacobian(&image)?
                    .matmul(&generator.jacobian(&z)?);
                Ok(through.matmul(&projection_jacobian(generator, x, &z)?))
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ClassifierDocument {
            version: MODEL_FORMAT_VERSION,
            input_dim: self.input_dim(),
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ClassifierDocument = serde_json::from_str(text)?;
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported model version {}", doc.version)));
        }
        let m = doc.model;
        let expected_classes = match &m.kind {
            ClassifierKind::HalfSpaceLatent { .. } | ClassifierKind::CheckerboardLatent { .. } => 2,
            ClassifierKind::Arc { thresholds } => thresholds.len(),
            ClassifierKind::Mlp(net) => net.output_dim(),
            ClassifierKind::NearestNeighbor { inner, .. } => inner.num_classes,
        };
        check_dim(expected_classes, m.num_classes)?;
        check_dim(m.input_dim(), doc.input_dim)?;
        Ok(m)
    }
}

#[derive(Serialize, Deserialize)]
struct ClassifierDocument {
    version: u32,
    input_dim: usize,
    #[serde(flatten)]
    model: ClassifierModel,
}

/// `Π sin(π z_i)`: positive exactly when `Σ floor z_i` is even.
fn checkerboard_margin(z: &[f64]) -> f64 {
    z.iter().map(|v| (PI * v).sin()).product()
}

fn checkerboard_margin_grad(z: &[f64]) -> Vec<f64> {
    (0..z.len())
        .map(|i| {
            z.iter()
                .enumerate()
                .map(|(j, v)| {
                    if i == j {
                        PI * (PI * v).cos()
                    } else {
                        (PI * v).sin()
                    }
                })
                .product()
        })
        .collect()
}

/// Signed angular margin of class `i` at angle `theta` and its slope in
/// `theta`: positive inside the sector, negative outside.
fn arc_margin(thresholds: &[f64], i: usize, theta: f64) -> (f64, f64) {
    let k = thresholds.len();
    let start = thresholds[i];
    let end = if i + 1 < k { thresholds[i + 1] } else { thresholds[0] + TAU };
    let width = end - start;
    let u = (theta - start).rem_euclid(TAU);
    if u < width {
        if u <= width - u {
            (u, 1.0)
        } else {
            (width - u, -1.0)
        }
    } else {
        let past_end = u - width;
        let before_start = TAU - u;
        if past_end <= before_start {
            (-past_end, -1.0)
        } else {
            (-before_start, 1.0)
        }
    }
}
