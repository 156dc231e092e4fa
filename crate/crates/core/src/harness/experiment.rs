//! End-to-end experiment runs and their reports.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::algorithm1::{algorithm1, verify_against, Algorithm1Result, Algorithm1Verification};
use super::config::ExperimentConfig;
use crate::attacks::{
    in_distribution_robustness, percentile, robustness_survey, unconstrained_robustness, AttackConfig, RadiusSet,
    SurveyReport,
};
use crate::bounds::{invert_bound_for_radius, BoundReport, BoundRequest, ClassDistribution};
use crate::error::{Error, Result};
use crate::format::fmt_g;
use crate::gaussian::gaussian_norm_mean;
use crate::models::{latent_sample, ClassifierModel, GeneratorModel, ProjectionConfig, TrainingReport};
use crate::modulus::{fit_modulus_table, ModulusEstimate, ModulusOfContinuity};
use crate::rng::derive_seed;

/// Seed labels of the experiment stages.
pub(super) mod stage_seed {
    pub const IMAGE_NORM: u64 = 1;
    pub const MODULUS: u64 = 2;
    pub const ALGORITHM1: u64 = 3;
    pub const VERIFY: u64 = 4;
    pub const SURVEY: u64 = 100;
    pub const PROJECTION: u64 = 200;
}

const MODULUS_NOTE: &str =
    "modulus estimated by gradient ascent from below; the bound may be optimistic (too small)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationConstants {
    pub latent_dim: usize,
    pub image_dim: usize,
    /// `E‖z‖₂`, exact.
    pub latent_norm_mean: f64,
    /// `E‖g(z)‖₂` over 10⁴ draws.
    pub image_norm_mean: f64,
}

/// Where a bound row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundOrigin {
    Requested,
    /// Latent radius bound at the target percentile (ω = identity).
    LatentReference,
    /// Image radius bound from the estimated modulus.
    ModulusReference,
    Algorithm1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub origin: BoundOrigin,
    pub report: BoundReport,
}

/// An empirical percentile next to the bound it is compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub classifier: String,
    pub radius: String,
    pub percentile: f64,
    pub empirical: f64,
    pub normalized_empirical: f64,
    /// Index into `bounds`; absent when no class distribution is configured.
    pub bound_index: Option<usize>,
    pub bound: Option<f64>,
    pub normalized_bound: Option<f64>,
    pub within_bound: Option<bool>,
    pub count: usize,
    pub nonconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyEntry {
    pub classifier: String,
    pub report: SurveyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Algorithm1Entry {
    pub result: Algorithm1Result,
    #[serde(default)]
    pub verification: Option<Algorithm1Verification>,
}

/// `r_unc` of the nearest-neighbour wrapper against `r_in` of the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionCheckRow {
    pub classifier: String,
    pub n: usize,
    pub evaluated: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Points with `r_unc(f̃) ≥ r_in(f)/2 − 1e-6`.
    pub fraction_above_half: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub target_percentile: f64,
    pub normalization: NormalizationConstants,
    #[serde(default)]
    pub class_distribution: Option<ClassDistribution>,
    pub bounds: Vec<BoundRow>,
    pub comparisons: Vec<ComparisonRow>,
    pub surveys: Vec<SurveyEntry>,
    #[serde(default)]
    pub modulus: Option<ModulusEstimate>,
    #[serde(default)]
    pub algorithm1: Option<Algorithm1Entry>,
    pub projection_checks: Vec<ProjectionCheckRow>,
    pub training: BTreeMap<String, TrainingReport>,
    /// Non-converged samples per survey stage.
    pub nonconverged: BTreeMap<String, usize>,
    pub wall_clock_seconds: f64,
}

fn labelled<T>(stage: &str, r: Result<T>, errors: &mut Vec<Error>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(e.in_stage(stage));
            None
        }
    }
}

type RadiusColumn = fn(&crate::attacks::RobustnessRecord) -> Option<f64>;

/// Runs every stage the config requests. Setup failures (models, class
/// distribution) stop the run; later stages run independently and their
/// failures are returned together.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    cfg.validate()?;
    let g = cfg.build_generator().map_err(|e| e.in_stage("generator"))?;
    let classifiers = cfg.build_classifiers(&g).map_err(|e| e.in_stage("classifiers"))?;
    let dist = cfg
        .class_distribution(&g, &classifiers)
        .map_err(|e| e.in_stage("class_distribution"))?;
    let q = cfg.target_percentile;
    let normalization = NormalizationConstants {
        latent_dim: g.latent_dim(),
        image_dim: g.image_dim(),
        latent_norm_mean: gaussian_norm_mean(g.latent_dim())?,
        image_norm_mean: crate::attacks::image_norm_mean(
            &g,
            crate::attacks::IMAGE_NORM_SAMPLES,
            derive_seed(cfg.seed, stage_seed::IMAGE_NORM),
        ),
    };
    let normalize = |report: BoundReport| report.normalized(g.latent_dim(), Some(normalization.image_norm_mean));

    let mut errors = Vec::new();
    let mut bounds = Vec::new();
    for (i, request) in cfg.bounds.iter().enumerate() {
        if let Some(report) = labelled(&format!("bound[{i}]"), request.evaluate().and_then(normalize), &mut errors) {
            bounds.push(BoundRow {
                origin: BoundOrigin::Requested,
                report,
            });
        }
    }

    let latent_ref = dist.as_ref().and_then(|dist| {
        let request = BoundRequest::InvertRadius {
            dist: dist.clone(),
            omega: ModulusOfContinuity::Identity,
            target: q,
        };
        let report = labelled("latent_reference", request.evaluate().and_then(normalize), &mut errors)?;
        bounds.push(BoundRow {
            origin: BoundOrigin::LatentReference,
            report,
        });
        Some(bounds.len() - 1)
    });

    let modulus = cfg.modulus.as_ref().and_then(|spec| {
        labelled(
            "modulus",
            fit_modulus_table(
                &g,
                &spec.delta_grid,
                spec.kappa,
                spec.samples,
                &spec.inner,
                derive_seed(cfg.seed, stage_seed::MODULUS),
            ),
            &mut errors,
        )
    });
    let mut image_ref = None;
    if let (Some(estimate), Some(dist)) = (&modulus, &dist) {
        let report = estimate.to_modulus().and_then(|omega| {
            let value = invert_bound_for_radius(dist, &omega, q)?;
            let request = BoundRequest::InvertRadius {
                dist: dist.clone(),
                omega,
                target: q,
            };
            normalize(BoundReport {
                bound_kind: request.kind(),
                inputs: serde_json::to_value(&request)?,
                value,
                normalization: None,
                note: None,
            })
        });
        if let Some(report) = labelled("modulus_reference", report, &mut errors) {
            bounds.push(BoundRow {
                origin: BoundOrigin::ModulusReference,
                report: report.with_note(MODULUS_NOTE),
            });
            image_ref = Some(bounds.len() - 1);
        }
    }

    let algorithm1_entry = match (&cfg.algorithm1, &dist) {
        (Some(spec), Some(dist)) => {
            let result = labelled(
                "algorithm1",
                algorithm1(
                    &g,
                    dist,
                    &spec.delta_grid,
                    q,
                    spec.samples,
                    &spec.inner,
                    derive_seed(cfg.seed, stage_seed::ALGORITHM1),
                ),
                &mut errors,
            );
            result.map(|result| {
                bounds.push(BoundRow {
                    origin: BoundOrigin::Algorithm1,
                    report: algorithm1_report(&result, g.latent_dim(), normalization.image_norm_mean),
                });
                image_ref = Some(bounds.len() - 1);
                let verification = spec.verify.as_ref().and_then(|v| {
                    let run = || -> Result<Algorithm1Verification> {
                        let f = classifiers.get(&v.classifier)?;
                        let which = RadiusSet {
                            r_in: true,
                            ..RadiusSet::default()
                        };
                        let survey =
                            robustness_survey(f, &g, v.n, which, &v.attack, derive_seed(cfg.seed, stage_seed::VERIFY))?;
                        let r_in: Vec<f64> = survey.records.iter().filter_map(|r| r.r_in).collect();
                        verify_against(&r_in, v.n - r_in.len(), &result)
                    };
                    labelled("algorithm1.verify", run(), &mut errors)
                });
                Algorithm1Entry { result, verification }
            })
        }
        _ => None,
    };

    let mut surveys = Vec::new();
    let mut comparisons = Vec::new();
    let mut nonconverged = BTreeMap::new();
    for (i, request) in cfg.attacks.iter().enumerate() {
        if request.radii.is_empty() {
            continue;
        }
        let stage = format!("attack[{i}]");
        let run = classifiers.get(&request.classifier).and_then(|f| {
            robustness_survey(
                f,
                &g,
                request.n,
                request.radii,
                &request.config,
                derive_seed(cfg.seed, stage_seed::SURVEY + i as u64),
            )
        });
        let Some(mut report) = labelled(&stage, run, &mut errors) else {
            continue;
        };
        nonconverged.insert(stage, report.summary.nonconverged);
        let columns: [(&str, RadiusColumn, bool, Option<usize>, f64); 3] = [
            ("r_z", |r| r.r_z, request.radii.r_z, latent_ref, normalization.latent_norm_mean),
            ("r_in", |r| r.r_in, request.radii.r_in, image_ref, normalization.image_norm_mean),
            ("r_unc", |r| r.r_unc, request.radii.r_unc, image_ref, normalization.image_norm_mean),
        ];
        for (name, pick, wanted, bound_index, norm) in columns {
            if !wanted {
                continue;
            }
            let mut values: Vec<f64> = report.records.iter().filter_map(pick).collect();
            if values.is_empty() {
                continue;
            }
            values.sort_by(f64::total_cmp);
            let empirical = percentile(&values, q);
            let bound_row = bound_index.map(|j| &bounds[j].report);
            let bound = bound_row.map(|b| b.value);
            // latent bounds normalize by E‖z‖, image bounds by E‖g(z)‖
            comparisons.push(ComparisonRow {
                classifier: request.classifier.clone(),
                radius: name.into(),
                percentile: q,
                empirical,
                normalized_empirical: empirical / norm,
                bound_index,
                bound,
                normalized_bound: bound.map(|b| b / norm),
                within_bound: bound.map(|b| empirical <= b),
                count: values.len(),
                nonconverged: report.records.len() - values.len(),
            });
        }
        if !request.keep_records {
            report.records.clear();
        }
        surveys.push(SurveyEntry {
            classifier: request.classifier.clone(),
            report,
        });
    }

    let mut projection_checks = Vec::new();
    for (i, check) in cfg.projection_checks.iter().enumerate() {
        let run = classifiers.get(&check.classifier).and_then(|f| {
            projection_check(
                f,
                &g,
                &check.classifier,
                check.n,
                &check.attack,
                &check.projection,
                derive_seed(cfg.seed, stage_seed::PROJECTION + i as u64),
            )
        });
        if let Some(row) = labelled(&format!("projection_check[{i}]"), run, &mut errors) {
            projection_checks.push(row);
        }
    }

    if !errors.is_empty() {
        return Err(if errors.len() == 1 {
            errors.remove(0)
        } else {
            Error::Stages(errors)
        });
    }
    Ok(ExperimentReport {
        seed: cfg.seed,
        target_percentile: q,
        normalization,
        class_distribution: dist,
        bounds,
        comparisons,
        surveys,
        modulus,
        algorithm1: algorithm1_entry,
        projection_checks,
        training: classifiers.training,
        nonconverged,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

fn algorithm1_report(result: &Algorithm1Result, latent_dim: usize, image_norm_mean: f64) -> BoundReport {
    let latent_norm_mean = gaussian_norm_mean(latent_dim).unwrap_or(f64::NAN);
    BoundReport {
        bound_kind: crate::bounds::BoundKind::KappaAdjusted,
        inputs: serde_json::json!({
            "algorithm": "grid_search",
            "best_delta": result.best_delta,
            "target_percentile": result.target_percentile,
            "samples": result.samples,
        }),
        value: result.alpha,
        normalization: Some(crate::bounds::Normalization {
            latent_norm_mean,
            image_norm_mean: Some(image_norm_mean),
            normalized_value: Some(result.alpha / image_norm_mean),
        }),
        note: Some(MODULUS_NOTE.into()),
    }
}

/// Ratio `r_unc(f̃)/r_in(f)` on `n` generated points, where `f̃` is the
/// nearest-neighbour wrapper of `f`.
pub fn projection_check(
    f: &ClassifierModel,
    g: &GeneratorModel,
    name: &str,
    n: usize,
    attack: &AttackConfig,
    projection: &ProjectionConfig,
    seed: u64,
) -> Result<ProjectionCheckRow> {
    let wrapped = ClassifierModel::nearest_neighbor_wrap(f.clone(), g.clone(), projection.clone())?;
    let ratios = (0..n)
        .into_par_iter()
        .map(|i| {
            let z = latent_sample(g.latent_dim(), seed, i as u64);
            let cfg = AttackConfig {
                seed: derive_seed(seed, i as u64),
                ..attack.clone()
            };
            let r_in = match in_distribution_robustness(f, g, &z, &cfg) {
                Ok(o) => o.radius,
                Err(Error::NonConvergence { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let r_unc = match unconstrained_robustness(&wrapped, &g.forward(&z), &cfg) {
                Ok(o) => o.radius,
                Err(Error::NonConvergence { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            Ok(Some((r_unc, r_in)))
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, f64)> = ratios.into_iter().flatten().collect();
    let evaluated = pairs.len();
    let ratio = |(u, r): &(f64, f64)| u / r;
    Ok(ProjectionCheckRow {
        classifier: name.into(),
        n,
        evaluated,
        min_ratio: pairs.iter().map(ratio).fold(f64::INFINITY, f64::min),
        max_ratio: pairs.iter().map(ratio).fold(f64::NEG_INFINITY, f64::max),
        fraction_above_half: pairs.iter().filter(|(u, r)| *u >= r / 2.0 - 1e-6).count() as f64
            / evaluated.max(1) as f64,
    })
}

impl ExperimentReport {
    pub const BOUNDS_CSV_HEADER: [&'static str; 6] =
        ["index", "origin", "bound_kind", "value", "normalized_value", "note"];
    pub const COMPARISON_CSV_HEADER: [&'static str; 10] = [
        "classifier",
        "radius",
        "percentile",
        "empirical",
        "normalized_empirical",
        "bound_index",
        "bound",
        "normalized_bound",
        "within_bound",
        "nonconverged",
    ];

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// The report with timing zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        ExperimentReport {
            wall_clock_seconds: 0.0,
            ..self.clone()
        }
    }

    pub fn write_bounds_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = crate::format::csv_writer(out);
        w.write_record(Self::BOUNDS_CSV_HEADER)?;
        for (i, row) in self.bounds.iter().enumerate() {
            let origin = serde_json::to_value(row.origin)?;
            let kind = serde_json::to_value(row.report.bound_kind)?;
            let normalized = row
                .report
                .normalization
                .as_ref()
                .and_then(|n| n.normalized_value)
                .map(fmt_g)
                .unwrap_or_default();
            w.write_record([
                i.to_string(),
                origin.as_str().unwrap_or_default().to_string(),
                kind.as_str().unwrap_or_default().to_string(),
                fmt_g(row.report.value),
                normalized,
                row.report.note.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_comparison_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = crate::format::csv_writer(out);
        w.write_record(Self::COMPARISON_CSV_HEADER)?;
        let opt = |v: Option<f64>| v.map(fmt_g).unwrap_or_default();
        for c in &self.comparisons {
            w.write_record([
                c.classifier.clone(),
                c.radius.clone(),
                fmt_g(c.percentile),
                fmt_g(c.empirical),
                fmt_g(c.normalized_empirical),
                c.bound_index.map(|i| i.to_string()).unwrap_or_default(),
                opt(c.bound),
                opt(c.normalized_bound),
                c.within_bound.map(|b| b.to_string()).unwrap_or_default(),
                c.nonconverged.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
