//! Experiment configs, the grid-search bound pipeline and report emission.

mod algorithm1;
mod config;
mod experiment;

pub use algorithm1::{algorithm1, verify_against, Algorithm1Result, Algorithm1Row, Algorithm1Verification};
pub use config::{
    estimate_class_distribution, Algorithm1Spec, AttackRequest, ClassDistSpec, ClassifierSpec, Classifiers,
    ExperimentConfig, GeneratorSpec, ModulusSpec, NamedClassifier, ProjectionCheck, VerifySpec,
};
pub use experiment::{
    projection_check, run_experiment, Algorithm1Entry, BoundOrigin, BoundRow, ComparisonRow, ExperimentReport,
    NormalizationConstants, ProjectionCheckRow, SurveyEntry,
};

use crate::error::{Error, Result};

/// Runs the grid search described by `cfg.algorithm1`.
pub fn run_algorithm1(cfg: &ExperimentConfig) -> Result<Algorithm1Result> {
    cfg.validate()?;
    let spec = cfg
        .algorithm1
        .as_ref()
        .ok_or_else(|| Error::Config("config has no algorithm1 section".into()))?;
    let g = cfg.build_generator().map_err(|e| e.in_stage("generator"))?;
    let classifiers = cfg.build_classifiers(&g).map_err(|e| e.in_stage("classifiers"))?;
    let dist = cfg
        .class_distribution(&g, &classifiers)
        .map_err(|e| e.in_stage("class_distribution"))?
        .ok_or_else(|| Error::Config("algorithm1 needs a class_distribution".into()))?;
    algorithm1(
        &g,
        &dist,
        &spec.delta_grid,
        cfg.target_percentile,
        spec.samples,
        &spec.inner,
        crate::rng::derive_seed(cfg.seed, experiment::stage_seed::ALGORITHM1),
    )
    .map_err(|e| e.in_stage("algorithm1"))
}
