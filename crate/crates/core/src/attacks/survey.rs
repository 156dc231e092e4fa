//! Robustness surveys over latent samples, with percentile summaries.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{in_distribution_robustness, latent_robustness, unconstrained_robustness, AttackConfig};
use crate::error::{domain, Error, Result};
use crate::format::fmt_g;
use crate::gaussian::gaussian_norm_mean;
use crate::linalg::{distance, norm};
use crate::models::{latent_sample, ClassifierModel, GeneratorModel};
use crate::rng;

/// Samples used for the Monte Carlo estimate of `E‖g(z)‖`.
pub const IMAGE_NORM_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadiusSet {
    pub r_z: bool,
    pub r_in: bool,
    pub r_unc: bool,
}

impl RadiusSet {
    pub const ALL: RadiusSet = RadiusSet {
        r_z: true,
        r_in: true,
        r_unc: true,
    };

    pub fn is_empty(self) -> bool {
        !(self.r_z || self.r_in || self.r_unc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRecord {
    pub sample_index: usize,
    pub z: Vec<f64>,
    pub label: usize,
    pub r_z: Option<f64>,
    pub r_in: Option<f64>,
    pub r_unc: Option<f64>,
    pub iterations: usize,
    /// Every requested radius was found.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileSummary {
    /// Records contributing (converged for this radius).
    pub count: usize,
    pub nonconverged: usize,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub normalized_p25: f64,
    pub normalized_p50: f64,
    pub normalized_p75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveySummary {
    pub n: usize,
    /// `E‖z‖₂`, exact.
    pub latent_norm_mean: f64,
    /// `E‖g(z)‖₂`, Monte Carlo.
    pub image_norm_mean: f64,
    pub r_z: Option<PercentileSummary>,
    pub r_in: Option<PercentileSummary>,
    pub r_unc: Option<PercentileSummary>,
    pub nonconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyReport {
    pub records: Vec<RobustnessRecord>,
    pub summary: SurveySummary,
}

/// Percentile `q ∈ [0, 1]` of sorted data, linearly interpolated.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

fn summarize(values: Vec<Option<f64>>, normalizer: f64) -> Option<PercentileSummary> {
    let nonconverged = values.iter().filter(|v| v.is_none()).count();
    let mut present: Vec<f64> = values.into_iter().flatten().collect();
    if present.is_empty() {
        return None;
    }
    present.sort_by(f64::total_cmp);
    let [p25, p50, p75] = [0.25, 0.5, 0.75].map(|q| percentile(&present, q));
    Some(PercentileSummary {
        count: present.len(),
        nonconverged,
        p25,
        p50,
        p75,
        normalized_p25: p25 / normalizer,
        normalized_p50: p50 / normalizer,
        normalized_p75: p75 / normalizer,
    })
}

/// Monte Carlo `E‖g(z)‖₂` over `n` draws.
pub fn image_norm_mean(g: &GeneratorModel, n: usize, seed: u64) -> f64 {
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| norm(&g.forward(&latent_sample(g.latent_dim(), seed, i as u64))))
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / n as f64
}

fn attempt<T>(result: Result<T>) -> Result<Option<T>> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(Error::NonConvergence { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn survey_one(
    f: &ClassifierModel,
    g: &GeneratorModel,
    index: usize,
    which: RadiusSet,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<RobustnessRecord> {
    let z = latent_sample(g.latent_dim(), seed, index as u64);
    let x = g.forward(&z);
    let label = f.classify(&x)?;
    let cfg = AttackConfig {
        seed: rng::derive_seed(rng::derive_seed(seed, cfg.seed), index as u64),
        ..cfg.clone()
    };
    let mut iterations = 0;
    let mut r_z = None;
    if which.r_z {
        if let Some(o) = attempt(latent_robustness(f, g, &z, &cfg))? {
            iterations += o.iterations;
            r_z = Some(o.radius);
        }
    }
    let mut r_in = None;
    let mut in_witness = None;
    if which.r_in {
        if let Some(o) = attempt(in_distribution_robustness(f, g, &z, &cfg))? {
            iterations += o.iterations;
            r_in = Some(o.radius);
            in_witness = Some(g.forward(&o.witness));
        }
    }
    let mut r_unc = None;
    if which.r_unc {
        if let Some(o) = attempt(unconstrained_robustness(f, &x, &cfg))? {
            iterations += o.iterations;
            r_unc = Some(o.radius);
        }
        // an in-distribution witness is also an unconstrained one
        if let Some(w) = &in_witness {
            let d = distance(w, &x);
            r_unc = Some(r_unc.map_or(d, |r: f64| r.min(d)));
        }
    }
    let converged = (!which.r_z || r_z.is_some()) && (!which.r_in || r_in.is_some()) && (!which.r_unc || r_unc.is_some());
    Ok(RobustnessRecord {
        sample_index: index,
        z,
        label,
        r_z,
        r_in,
        r_unc,
        iterations,
        converged,
    })
}

/// Attacks `n` latent samples (sample `i` is draw `i` of stream `seed`).
/// Non-convergent radii are left absent and excluded from percentiles.
pub fn robustness_survey(
    f: &ClassifierModel,
    g: &GeneratorModel,
    n: usize,
    which: RadiusSet,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<SurveyReport> {
    if n == 0 {
        return Err(domain("a survey needs at least one sample"));
    }
    cfg.validate()?;
    let records = (0..n)
        .into_par_iter()
        .map(|i| survey_one(f, g, i, which, cfg, seed))
        .collect::<Result<Vec<_>>>()?;
    let latent_norm_mean = gaussian_norm_mean(g.latent_dim())?;
    let image_norm_mean = image_norm_mean(g, IMAGE_NORM_SAMPLES, rng::derive_seed(seed, 0x1a6e));
    let column = |pick: fn(&RobustnessRecord) -> Option<f64>| records.iter().map(pick).collect::<Vec<_>>();
    let summary = SurveySummary {
        n,
        latent_norm_mean,
        image_norm_mean,
        r_z: which.r_z.then(|| summarize(column(|r| r.r_z), latent_norm_mean)).flatten(),
        r_in: which.r_in.then(|| summarize(column(|r| r.r_in), image_norm_mean)).flatten(),
        r_unc: which.r_unc.then(|| summarize(column(|r| r.r_unc), image_norm_mean)).flatten(),
        nonconverged: records.iter().filter(|r| !r.converged).count(),
    };
    Ok(SurveyReport { records, summary })
}

impl SurveyReport {
    pub const CSV_HEADER: [&'static str; 7] = ["sample_index", "label", "r_z", "r_in", "r_unc", "iterations", "converged"];

    /// Records as CSV; absent radii are empty fields.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = crate::format::csv_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        let opt = |v: Option<f64>| v.map(fmt_g).unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.sample_index.to_string(),
                r.label.to_string(),
                opt(r.r_z),
                opt(r.r_in),
                opt(r.r_unc),
                r.iterations.to_string(),
                r.converged.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Fraction of converged `r_Z` values at most `eta`.
    pub fn r_z_cdf(&self, eta: f64) -> f64 {
        let vals: Vec<f64> = self.records.iter().filter_map(|r| r.r_z).collect();
        vals.iter().filter(|v| **v <= eta).count() as f64 / vals.len().max(1) as f64
    }
}
