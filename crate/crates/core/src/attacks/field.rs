//! Score fields the attacks search over: a classifier in image space, or a
//! classifier composed with a generator in latent space.

use crate::error::Result;
use crate::linalg::Matrix;
use crate::models::classifier::argmax;
use crate::models::{ClassifierModel, GeneratorModel};

pub(crate) trait ScoreField: Sync {
    fn scores(&self, p: &[f64]) -> Result<Vec<f64>>;

    /// `K × dim` Jacobian of the scores.
    fn jacobian(&self, p: &[f64]) -> Result<Matrix>;

    fn label(&self, p: &[f64]) -> Result<usize> {
        Ok(argmax(&self.scores(p)?))
    }
}

pub(crate) struct ImageField<'a> {
    pub f: &'a ClassifierModel,
}

impl ScoreField for ImageField<'_> {
    fn scores(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.f.scores(p)
    }

    fn jacobian(&self, p: &[f64]) -> Result<Matrix> {
        self.f.score_jacobian(p)
    }
}

/// `z ↦ f(g(z))`.
pub(crate) struct LatentField<'a> {
    pub f: &'a ClassifierModel,
    pub g: &'a GeneratorModel,
}

impl ScoreField for LatentField<'_> {
    fn scores(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.f.scores(&self.g.forward(z))
    }

    fn jacobian(&self, z: &[f64]) -> Result<Matrix> {
        let x = self.g.forward(z);
        Ok(self.f.score_jacobian(&x)?.matmul(&self.g.jacobian(z)?))
    }
}

/// Gradient of `s_k − s_c`.
pub(crate) fn margin_gradient(jac: &Matrix, c: usize, k: usize) -> Vec<f64> {
    jac.row(k).iter().zip(jac.row(c)).map(|(a, b)| a - b).collect()
}

/// Strongest competitor of class `c`.
pub(crate) fn runner_up(scores: &[f64], c: usize) -> usize {
    let mut best: Option<usize> = None;
    for (k, s) in scores.iter().enumerate() {
        if k != c && best.is_none_or(|b| *s > scores[b]) {
            best = Some(k);
        }
    }
    best.expect("at least two classes")
}
