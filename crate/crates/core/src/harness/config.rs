//! Experiment configuration: a single JSON document naming the generator,
//! classifiers, bound evaluations, surveys and the estimation settings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::{AttackConfig, RadiusSet};
use crate::bounds::{BoundRequest, ClassDistribution};
use crate::error::{Error, Result};
use crate::models::{
    train_mlp_classifier, ClassifierModel, GeneratorModel, LabelRule, Mlp, ProjectionConfig, TrainingConfig,
    TrainingReport,
};
use crate::modulus::InnerOptConfig;

fn default_target() -> f64 {
    0.25
}

fn default_algorithm1_samples() -> usize {
    100
}

fn default_estimate_samples() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub classifiers: Vec<NamedClassifier>,
    #[serde(default)]
    pub class_distribution: Option<ClassDistSpec>,
    #[serde(default)]
    pub bounds: Vec<BoundRequest>,
    #[serde(default)]
    pub attacks: Vec<AttackRequest>,
    #[serde(default)]
    pub modulus: Option<ModulusSpec>,
    #[serde(default)]
    pub algorithm1: Option<Algorithm1Spec>,
    #[serde(default)]
    pub projection_checks: Vec<ProjectionCheck>,
    /// Percentile `q` the robustness bounds refer to.
    #[serde(default = "default_target")]
    pub target_percentile: f64,
    /// Directory that relative model paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Model { model: GeneratorModel },
    File { path: PathBuf },
    RandomMlp { widths: Vec<usize>, gain: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedClassifier {
    pub name: String,
    #[serde(flatten)]
    pub spec: ClassifierSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ClassifierSpec {
    Model {
        model: ClassifierModel,
    },
    File {
        path: PathBuf,
    },
    /// MLP trained on latent labels pushed through the generator.
    Trained {
        rule: LabelRule,
        #[serde(default)]
        training: TrainingConfig,
    },
    /// MLP trained on `classes` random cones through the latent origin.
    TrainedCones {
        classes: usize,
        #[serde(default)]
        training: TrainingConfig,
    },
    /// Nearest-neighbour wrapper of another named classifier.
    NearestNeighbor {
        inner: String,
        #[serde(default)]
        projection: ProjectionConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "from", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassDistSpec {
    Equiprobable {
        classes: usize,
    },
    Explicit {
        probs: Vec<f64>,
    },
    /// Class frequencies of a named classifier on generated samples.
    Estimate {
        classifier: String,
        #[serde(default = "default_estimate_samples")]
        samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackRequest {
    pub classifier: String,
    pub radii: RadiusSet,
    pub n: usize,
    #[serde(default)]
    pub config: AttackConfig,
    /// Keep per-sample records in the report.
    #[serde(default)]
    pub keep_records: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulusSpec {
    pub delta_grid: Vec<f64>,
    pub kappa: f64,
    pub samples: usize,
    #[serde(default)]
    pub inner: InnerOptConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Algorithm1Spec {
    pub delta_grid: Vec<f64>,
    /// Suprema sampled per grid point.
    #[serde(default = "default_algorithm1_samples")]
    pub samples: usize,
    #[serde(default)]
    pub inner: InnerOptConfig,
    /// Classifier whose `r_in` survey is checked against the bound.
    #[serde(default)]
    pub verify: Option<VerifySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    pub classifier: String,
    pub n: usize,
    #[serde(default)]
    pub attack: AttackConfig,
}

/// Compares `r_unc` of the nearest-neighbour wrapper of a classifier with
/// the classifier's own `r_in` on generated points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionCheck {
    pub classifier: String,
    pub n: usize,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default)]
    pub projection: ProjectionConfig,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| config_err(format!("malformed experiment config: {e}")))
    }

    /// Reads a config file; relative model paths resolve against its folder.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    fn names(&self) -> Vec<&str> {
        self.classifiers.iter().map(|c| c.name.as_str()).collect()
    }

    /// Structural checks that need no computation.
    pub fn validate(&self) -> Result<()> {
        if !(self.target_percentile > 0.0 && self.target_percentile < 1.0) {
            return Err(config_err("target_percentile must lie in (0, 1)"));
        }
        let names = self.names();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(config_err(format!("duplicate classifier name {n:?}")));
            }
        }
        let known = |name: &str, what: &str| -> Result<()> {
            if names.contains(&name) {
                Ok(())
            } else {
                Err(config_err(format!("{what} refers to unknown classifier {name:?}")))
            }
        };
        for (i, c) in self.classifiers.iter().enumerate() {
            match &c.spec {
                ClassifierSpec::NearestNeighbor { inner, .. } => {
                    if !names[..i].contains(&inner.as_str()) {
                        return Err(config_err(format!(
                            "nearest-neighbour classifier {:?} must follow its inner classifier {inner:?}",
                            c.name
                        )));
                    }
                }
                ClassifierSpec::File { path } => self.check_file(path)?,
                _ => {}
            }
        }
        if let GeneratorSpec::File { path } = &self.generator {
            self.check_file(path)?;
        }
        if let Some(ClassDistSpec::Estimate { classifier, .. }) = &self.class_distribution {
            known(classifier, "class_distribution")?;
        }
        for a in &self.attacks {
            known(&a.classifier, "attack request")?;
            if a.n == 0 {
                return Err(config_err("attack requests need n >= 1"));
            }
        }
        for p in &self.projection_checks {
            known(&p.classifier, "projection check")?;
        }
        if let Some(m) = &self.modulus {
            if m.delta_grid.is_empty() || !(0.0..1.0).contains(&m.kappa) {
                return Err(config_err("modulus needs a non-empty delta_grid and kappa in [0, 1)"));
            }
        }
        if let Some(a) = &self.algorithm1 {
            if a.delta_grid.is_empty() || a.delta_grid.iter().any(|d| !(*d > 0.0)) {
                return Err(config_err("algorithm1 needs a non-empty grid of positive deltas"));
            }
            if a.samples == 0 {
                return Err(config_err("algorithm1 needs samples >= 1"));
            }
            if self.class_distribution.is_none() {
                return Err(config_err("algorithm1 needs a class_distribution"));
            }
            if let Some(v) = &a.verify {
                known(&v.classifier, "algorithm1.verify")?;
            }
        }
        Ok(())
    }

    fn check_file(&self, path: &Path) -> Result<()> {
        let full = self.resolve(path);
        if full.is_file() {
            Ok(())
        } else {
            Err(config_err(format!("model file {} does not exist", full.display())))
        }
    }

    pub fn build_generator(&self) -> Result<GeneratorModel> {
        match &self.generator {
            GeneratorSpec::Model { model } => Ok(model.clone()),
            GeneratorSpec::File { path } => GeneratorModel::from_json(&std::fs::read_to_string(self.resolve(path))?),
            GeneratorSpec::RandomMlp { widths, gain, seed } => Ok(GeneratorModel::mlp(Mlp::random(widths, *gain, *seed)?)),
        }
    }

    /// Builds (and trains, where requested) every classifier in order.
    pub fn build_classifiers(&self, g: &GeneratorModel) -> Result<Classifiers> {
        let mut out = Classifiers::default();
        for c in &self.classifiers {
            let model = match &c.spec {
                ClassifierSpec::Model { model } => model.clone(),
                ClassifierSpec::File { path } => ClassifierModel::from_json(&std::fs::read_to_string(self.resolve(path))?)?,
                ClassifierSpec::Trained { rule, training } => {
                    let (m, report) = train_mlp_classifier(g, rule, training)?;
                    out.training.insert(c.name.clone(), report);
                    m
                }
                ClassifierSpec::TrainedCones { classes, training } => {
                    let rule = LabelRule::random_cones(g.latent_dim(), *classes, training.seed);
                    let (m, report) = train_mlp_classifier(g, &rule, training)?;
                    out.training.insert(c.name.clone(), report);
                    m
                }
                ClassifierSpec::NearestNeighbor { inner, projection } => {
                    let base = out.get(inner)?.clone();
                    ClassifierModel::nearest_neighbor_wrap(base, g.clone(), projection.clone())?
                }
            };
            if model.input_dim() != g.image_dim() {
                return Err(Error::Dimension {
                    expected: g.image_dim(),
                    got: model.input_dim(),
                })
                .map_err(|e| e.in_stage(format!("classifier {:?}", c.name)));
            }
            out.models.insert(c.name.clone(), model);
        }
        Ok(out)
    }

    pub fn class_distribution(&self, g: &GeneratorModel, classifiers: &Classifiers) -> Result<Option<ClassDistribution>> {
        let Some(spec) = &self.class_distribution else {
            return Ok(None);
        };
        Ok(Some(match spec {
            ClassDistSpec::Equiprobable { classes } => ClassDistribution::equiprobable(*classes)?,
            ClassDistSpec::Explicit { probs } => ClassDistribution::new(probs.clone())?,
            ClassDistSpec::Estimate { classifier, samples } => {
                let f = classifiers.get(classifier)?;
                estimate_class_distribution(f, g, *samples, crate::rng::derive_seed(self.seed, 0xc1a5))?
            }
        }))
    }
}

/// Class frequencies of `f` on `n` generated samples.
pub fn estimate_class_distribution(
    f: &ClassifierModel,
    g: &GeneratorModel,
    n: usize,
    seed: u64,
) -> Result<ClassDistribution> {
    use rayon::prelude::*;
    let labels = (0..n)
        .into_par_iter()
        .map(|i| f.classify(&g.forward(&crate::models::latent_sample(g.latent_dim(), seed, i as u64))))
        .collect::<Result<Vec<_>>>()?;
    let mut counts = vec![0usize; f.num_classes()];
    for l in labels {
        counts[l] += 1;
    }
    ClassDistribution::from_counts(&counts)
}

#[derive(Debug, Clone, Default)]
pub struct Classifiers {
    pub models: BTreeMap<String, ClassifierModel>,
    pub training: BTreeMap<String, TrainingReport>,
}

impl Classifiers {
    pub fn get(&self, name: &str) -> Result<&ClassifierModel> {
        self.models
            .get(name)
            .ok_or_else(|| config_err(format!("unknown classifier {name:?}")))
    }
}
