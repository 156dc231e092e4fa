//! Shorthand parsing for models, moduli and number lists given on the
//! command line.

use std::path::Path;

use genbound::bounds::ClassDistribution;
use genbound::models::{ClassifierModel, GeneratorModel, Mlp};
use genbound::modulus::{ModulusEstimate, ModulusOfContinuity};
use genbound::{Error, Result};

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub fn number(text: &str) -> Result<f64> {
    text.trim()
        .parse::<f64>()
        .map_err(|_| bad(format!("not a number: {text:?}")))
}

fn integer(text: &str) -> Result<usize> {
    text.trim()
        .parse::<usize>()
        .map_err(|_| bad(format!("not a non-negative integer: {text:?}")))
}

pub fn numbers(text: &str) -> Result<Vec<f64>> {
    text.split(',').map(number).collect()
}

fn integers(text: &str) -> Result<Vec<usize>> {
    text.split(',').map(integer).collect()
}

/// `a:b:step` (inclusive) or a comma-separated list.
pub fn grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step) = (number(a)?, number(b)?, number(step)?);
            if step.is_nan() || step <= 0.0 || b < a {
                return Err(bad(format!("range {text:?} needs step > 0 and end >= start")));
            }
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| a + i as f64 * step).collect())
        }
        [_] => numbers(text),
        _ => Err(bad(format!("expected a:b:step or a list, got {text:?}"))),
    }
}

fn read(path: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {path}: {e}")))
}

fn looks_like_file(spec: &str) -> bool {
    spec.ends_with(".json") || Path::new(spec).is_file()
}

/// `identity`, `lipschitz:L`, `linear:SLOPE,OFFSET`, or a JSON file holding
/// a modulus or a modulus estimate.
pub fn omega(spec: &str) -> Result<ModulusOfContinuity> {
    if looks_like_file(spec) {
        let text = read(spec)?;
        if let Ok(m) = serde_json::from_str::<ModulusOfContinuity>(&text) {
            m.validate()?;
            return Ok(m);
        }
        return ModulusEstimate::from_json(&text)?.to_modulus();
    }
    let (head, rest) = spec.split_once(':').unwrap_or((spec, ""));
    match head {
        "identity" => Ok(ModulusOfContinuity::Identity),
        "lipschitz" => ModulusOfContinuity::lipschitz(number(rest)?),
        "linear" => match numbers(rest)?.as_slice() {
            [slope, offset] => ModulusOfContinuity::linear(*slope, *offset),
            _ => Err(bad("linear modulus needs SLOPE,OFFSET")),
        },
        _ => Err(bad(format!("unknown modulus {spec:?}"))),
    }
}

pub fn distribution(classes: Option<usize>, probs: Option<&str>) -> Result<ClassDistribution> {
    match (classes, probs) {
        (_, Some(p)) => ClassDistribution::new(numbers(p)?),
        (Some(k), None) => ClassDistribution::equiprobable(k),
        (None, None) => Err(bad("a class distribution needs --classes or --probs")),
    }
}

/// `identity:D`, `scaled:D:S`, `circle`, `mlp:W0,W1,..:GAIN:SEED`, or a
/// model file.
pub fn generator(spec: &str) -> Result<GeneratorModel> {
    if looks_like_file(spec) {
        return GeneratorModel::from_json(&read(spec)?);
    }
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["identity", d] => Ok(GeneratorModel::identity(integer(d)?)),
        ["scaled", d, s] => GeneratorModel::scaled_identity(integer(d)?, number(s)?),
        ["circle"] => Ok(GeneratorModel::circle()),
        ["mlp", widths, gain, seed] => Ok(GeneratorModel::mlp(random_mlp(widths, gain, seed)?)),
        _ => Err(bad(format!("unknown generator {spec:?}"))),
    }
}

fn random_mlp(widths: &str, gain: &str, seed: &str) -> Result<Mlp> {
    let seed = seed
        .parse::<u64>()
        .map_err(|_| bad(format!("bad MLP seed {seed:?}")))?;
    Mlp::random(&integers(widths)?, number(gain)?, seed)
}

/// `halfspace:W1,..,WD[:T]`, `checkerboard`, `arc:T1,..,TK`,
/// `mlp:W0,..:GAIN:SEED`, or a model file. Latent rules use `g`.
pub fn classifier(spec: &str, g: &GeneratorModel) -> Result<ClassifierModel> {
    if looks_like_file(spec) {
        return ClassifierModel::from_json(&read(spec)?);
    }
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["halfspace", w] => ClassifierModel::half_space_latent(numbers(w)?, 0.0, g.clone()),
        ["halfspace", w, t] => ClassifierModel::half_space_latent(numbers(w)?, number(t)?, g.clone()),
        ["checkerboard"] => Ok(ClassifierModel::checkerboard_latent(g.clone())),
        ["arc", t] => ClassifierModel::arc(numbers(t)?),
        ["mlp", widths, gain, seed] => ClassifierModel::mlp(random_mlp(widths, gain, seed)?),
        _ => Err(bad(format!("unknown classifier {spec:?}"))),
    }
}
