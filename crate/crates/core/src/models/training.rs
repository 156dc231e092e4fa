//! SGD-with-momentum training of MLP classifiers on labels defined in the
//! latent space.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, domain, Error, Result};
use crate::linalg::dot;
use crate::models::classifier::{argmax, ClassifierModel};
use crate::models::generator::{latent_sample, GeneratorModel};
use crate::models::mlp::{Mlp, MlpGradient};
use crate::rng;

/// Ground-truth labelling of latent codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LabelRule {
    HalfSpace { normal: Vec<f64>, threshold: f64 },
    Checkerboard,
    /// `argmax_k u_k·z`: a fan of cones through the origin.
    LinearArgmax { directions: Vec<Vec<f64>> },
}

impl LabelRule {
    /// `classes` random unit directions in `R^dim`.
    pub fn random_cones(dim: usize, classes: usize, seed: u64) -> Self {
        LabelRule::LinearArgmax {
            directions: (0..classes)
                .map(|k| rng::unit_vector(&mut rng::substream(seed, k as u64), dim))
                .collect(),
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            LabelRule::HalfSpace { .. } | LabelRule::Checkerboard => 2,
            LabelRule::LinearArgmax { directions } => directions.len(),
        }
    }

    pub fn label(&self, z: &[f64]) -> usize {
        match self {
            LabelRule::HalfSpace { normal, threshold } => usize::from(dot(normal, z) < *threshold),
            LabelRule::Checkerboard => {
                let s: i64 = z.iter().map(|v| v.floor() as i64).sum();
                s.rem_euclid(2) as usize
            }
            LabelRule::LinearArgmax { directions } => {
                let scores: Vec<f64> = directions.iter().map(|u| dot(u, z)).collect();
                argmax(&scores)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 100,
            epochs: 20,
            batches_per_epoch: 50,
            hidden: vec![32, 32],
            seed: 0,
        }
    }
}

impl TrainingConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.batches_per_epoch == 0 {
            return Err(domain("training needs learning_rate > 0, batch_size >= 1 and batches_per_epoch >= 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(domain("momentum must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub epochs: usize,
}

const ACCURACY_SAMPLES: usize = 2000;

/// Trains an MLP classifier on freshly sampled pairs `(g(z), label(z))`.
/// Sequential, so the result depends only on the config.
pub fn train_mlp_classifier(
    g: &GeneratorModel,
    rule: &LabelRule,
    cfg: &TrainingConfig,
) -> Result<(ClassifierModel, TrainingReport)> {
    cfg.validate()?;
    if let LabelRule::HalfSpace { normal, .. } = rule {
        check_dim(g.latent_dim(), normal.len())?;
    }
    if let LabelRule::LinearArgmax { directions } = rule {
        for u in directions {
            check_dim(g.latent_dim(), u.len())?;
        }
    }
    let classes = rule.num_classes();
    let mut widths = vec![g.image_dim()];
    widths.extend(&cfg.hidden);
    widths.push(classes);
    let mut net = Mlp::random(&widths, 1.0, rng::derive_seed(cfg.seed, 1))?;
    let mut velocity = MlpGradient::zeros_like(&net);
    let batch_seed = rng::derive_seed(cfg.seed, 2);
    let mut final_loss = f64::NAN;

    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for b in 0..cfg.batches_per_epoch {
            let batch_index = (epoch * cfg.batches_per_epoch + b) as u64;
            let mut grad = MlpGradient::zeros_like(&net);
            let mut batch_loss = 0.0;
            for i in 0..cfg.batch_size {
                let z = latent_sample(g.latent_dim(), batch_seed, batch_index * cfg.batch_size as u64 + i as u64);
                let x = g.forward(&z);
                let y = rule.label(&z);
                let (loss, dlogits) = cross_entropy(&net.forward_unchecked(&x), y);
                batch_loss += loss;
                let (sample_grad, _) = net.backward(&x, &dlogits);
                grad.add_scaled(&sample_grad, 1.0 / cfg.batch_size as f64);
            }
            batch_loss /= cfg.batch_size as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    loss: batch_loss,
                });
            }
            epoch_loss += batch_loss;
            // v ← μv − lr·∇, w ← w + v
            let mut step = MlpGradient::zeros_like(&net);
            step.add_scaled(&velocity, cfg.momentum);
            step.add_scaled(&grad, -cfg.learning_rate);
            velocity = step;
            for (layer, v) in net.layers_mut().iter_mut().zip(&velocity.layers) {
                for (w, dv) in layer.weights.as_mut_slice().iter_mut().zip(v.weights.as_slice()) {
                    *w += dv;
                }
                for (w, dv) in layer.bias.iter_mut().zip(&v.bias) {
                    *w += dv;
                }
            }
        }
        final_loss = epoch_loss / cfg.batches_per_epoch as f64;
    }

    let eval_seed = rng::derive_seed(cfg.seed, 3);
    let correct = (0..ACCURACY_SAMPLES)
        .filter(|&i| {
            let z = latent_sample(g.latent_dim(), eval_seed, i as u64);
            argmax(&net.forward_unchecked(&g.forward(&z))) == rule.label(&z)
        })
        .count();
    let report = TrainingReport {
        final_loss,
        train_accuracy: correct as f64 / ACCURACY_SAMPLES as f64,
        epochs: cfg.epochs,
    };
    Ok((ClassifierModel::mlp(net)?, report))
}

/// Softmax cross-entropy and its gradient with respect to the logits.
fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = -(logits[label] - max - sum.ln());
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_rules() {
        let hs = LabelRule::HalfSpace {
            normal: vec![1.0, 0.0],
            threshold: 0.0,
        };
        assert_eq!(hs.label(&[0.2, -5.0]), 0);
        assert_eq!(hs.label(&[-0.2, 5.0]), 1);
        assert_eq!(LabelRule::Checkerboard.label(&[1.5, 0.5]), 1);
        assert_eq!(LabelRule::Checkerboard.label(&[-0.5, -0.5]), 0);
        let cones = LabelRule::random_cones(4, 10, 1);
        assert_eq!(cones.num_classes(), 10);
    }

    #[test]
    fn linearly_separable_task_is_learned() {
        let g = GeneratorModel::identity(2);
        let rule = LabelRule::HalfSpace {
            normal: vec![1.0, 0.0],
            threshold: 0.0,
        };
        let cfg = TrainingConfig {
            hidden: vec![],
            learning_rate: 0.5,
            seed: 1,
            ..TrainingConfig::default()
        };
        let (_, report) = train_mlp_classifier(&g, &rule, &cfg).unwrap();
        assert!(report.train_accuracy >= 0.99, "{report:?}");
    }

    #[test]
    fn training_is_deterministic() {
        let g = GeneratorModel::identity(2);
        let cfg = TrainingConfig {
            epochs: 2,
            batches_per_epoch: 5,
            hidden: vec![4],
            seed: 5,
            ..TrainingConfig::default()
        };
        let (a, _) = train_mlp_classifier(&g, &LabelRule::Checkerboard, &cfg).unwrap();
        let (b, _) = train_mlp_classifier(&g, &LabelRule::Checkerboard, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let g = GeneratorModel::scaled_identity(2, 1e10).unwrap();
        let cfg = TrainingConfig {
            epochs: 1,
            batches_per_epoch: 3,
            learning_rate: 1e300,
            hidden: vec![],
            ..TrainingConfig::default()
        };
        let err = train_mlp_classifier(&g, &LabelRule::Checkerboard, &cfg).unwrap_err();
        assert!(matches!(err, Error::Training { .. }));
    }

    #[test]
    fn cross_entropy_gradient() {
        let (loss, grad) = cross_entropy(&[1.0, 2.0, 0.5], 1);
        assert!(loss > 0.0);
        assert!(grad.iter().sum::<f64>().abs() < 1e-12);
        assert!(grad[1] < 0.0);
    }
}
