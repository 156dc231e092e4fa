mod selftest;
mod specs;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use genbound::attacks::{robustness_survey, AttackConfig, RadiusSet};
use genbound::bounds::{checkerboard_bound, fooling_prob_general, BoundRequest, ClassDistribution, ClassExponent};
use genbound::format::{csv_writer, fmt_g};
use genbound::harness::{run_experiment, ExperimentConfig};
use genbound::models::ClassifierModel;
use genbound::modulus::{fit_modulus_table, InnerOptConfig, ModulusOfContinuity};
use genbound::oracle::{mc_fooling_fraction, DistanceOracle};
use genbound::{Error, Probability, Result};

#[derive(Parser)]
#[command(name = "genbound", version, about = "Robustness bounds for data from generative models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate or invert a bound.
    Bound(BoundArgs),
    /// Estimate the probabilistic modulus of a generator on a grid.
    EstimateOmega(EstimateArgs),
    /// Attack generated samples and summarize their robustness radii.
    Attack(AttackArgs),
    /// Run a JSON experiment config.
    Experiment(ExperimentArgs),
    /// Checkerboard fooling fractions against the bounds.
    Checkerboard(CheckerboardArgs),
    /// Run the built-in oracle checks.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    General,
    Balanced,
    Equiprobable,
    Invert,
    Checkerboard,
    Expectation,
    ExpectationClasses,
    Kappa,
}

#[derive(Clone, Copy, ValueEnum)]
enum Exponent {
    Latent,
    Image,
}

#[derive(clap::Args)]
struct BoundArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// identity, lipschitz:L, linear:SLOPE,OFFSET or a JSON file.
    #[arg(long, default_value = "identity")]
    omega: String,
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<f64>,
    #[arg(long)]
    classes: Option<usize>,
    /// Comma-separated class probabilities.
    #[arg(long)]
    probs: Option<String>,
    /// Target fooling probability of `invert`.
    #[arg(long)]
    target: Option<f64>,
    /// Latent dimension of `checkerboard`.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    wasserstein_delta: f64,
    #[arg(long)]
    modulus_value: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, value_enum, default_value = "latent")]
    exponent: Exponent,
    /// Divide radius-valued results by E‖z‖ in this latent dimension.
    #[arg(long)]
    normalize_d: Option<usize>,
    /// Print the full JSON report instead of the value.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct EstimateArgs {
    /// identity:D, scaled:D:S, circle, mlp:WIDTHS:GAIN:SEED or a model file.
    #[arg(long)]
    generator: String,
    /// `a:b:step` or a comma-separated list.
    #[arg(long)]
    deltas: String,
    #[arg(long, default_value_t = 0.05)]
    kappa: f64,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long)]
    seed: u64,
    /// CSV, or JSON when the path ends in `.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct AttackArgs {
    #[arg(long)]
    generator: String,
    /// halfspace:W[:T], checkerboard, arc:T1,..,TK, mlp:WIDTHS:GAIN:SEED or a model file.
    #[arg(long)]
    classifier: String,
    /// Wrap the classifier in the nearest-neighbour projection.
    #[arg(long)]
    nearest_neighbor: bool,
    #[arg(long)]
    n: usize,
    /// Comma-separated subset of r_z, r_in, r_unc.
    #[arg(long, default_value = "r_z,r_in,r_unc")]
    radii: String,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: u64,
    /// Per-sample CSV, or the full JSON report when the path ends in `.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON report path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    bounds_csv: Option<PathBuf>,
    #[arg(long)]
    comparison_csv: Option<PathBuf>,
}

#[derive(clap::Args)]
struct CheckerboardArgs {
    #[arg(long)]
    d: usize,
    /// `a:b:step` or a comma-separated list.
    #[arg(long)]
    etas: String,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SelftestArgs {
    #[arg(long)]
    seed: u64,
    /// Monte Carlo samples per check.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Bound(a) => bound(a).map(|_| ExitCode::SUCCESS),
        Command::EstimateOmega(a) => estimate_omega(a).map(|_| ExitCode::SUCCESS),
        Command::Attack(a) => attack(a).map(|_| ExitCode::SUCCESS),
        Command::Experiment(a) => experiment(a).map(|_| ExitCode::SUCCESS),
        Command::Checkerboard(a) => checkerboard(a).map(|_| ExitCode::SUCCESS),
        Command::Selftest(a) => Ok(if selftest::run(a.seed, a.n)? {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(2)
        }),
    }
}

fn open_out(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn is_json(out: Option<&Path>) -> bool {
    out.and_then(Path::extension).is_some_and(|e| e == "json")
}

fn need<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("--{flag} is required for this bound kind")))
}

fn bound(a: BoundArgs) -> Result<()> {
    let omega = specs::omega(&a.omega)?;
    let dist = || specs::distribution(a.classes, a.probs.as_deref());
    let eta = || need(a.eta, "eta");
    let request = match a.kind {
        Kind::General => BoundRequest::General {
            dist: dist()?,
            omega,
            eta: eta()?,
        },
        Kind::Balanced => BoundRequest::Balanced { omega, eta: eta()? },
        Kind::Equiprobable => BoundRequest::Equiprobable {
            classes: need(a.classes, "classes")?,
            omega,
            eta: eta()?,
            exponent: match a.exponent {
                Exponent::Latent => ClassExponent::LatentRadius,
                Exponent::Image => ClassExponent::ImageDistance,
            },
        },
        Kind::Invert => BoundRequest::InvertRadius {
            dist: dist()?,
            omega,
            target: need(a.target, "target")?,
        },
        Kind::Checkerboard => BoundRequest::Checkerboard {
            dim: need(a.dim, "dim")?,
            eta: eta()?,
        },
        Kind::Expectation => BoundRequest::ExpectationGeneral {
            dist: dist()?,
            omega,
            wasserstein_delta: a.wasserstein_delta,
        },
        Kind::ExpectationClasses => BoundRequest::ExpectationClasses {
            classes: need(a.classes, "classes")?,
            omega,
            wasserstein_delta: a.wasserstein_delta,
        },
        Kind::Kappa => BoundRequest::KappaAdjusted {
            dist: dist()?,
            modulus_value: need(a.modulus_value, "modulus-value")?,
            delta: need(a.delta, "delta")?,
            kappa: Probability::new(need(a.kappa, "kappa")?)?,
        },
    };
    let mut report = request.evaluate()?;
    let mut value = report.value;
    if let Some(d) = a.normalize_d {
        if report.bound_kind.is_probability() {
            return Err(Error::Config("--normalize-d applies to radius-valued bounds only".into()));
        }
        report = report.normalized(d, None)?;
        value = report.normalization.as_ref().and_then(|n| n.normalized_value).unwrap_or(value);
    }
    let mut out = open_out(a.out.as_deref())?;
    if a.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    } else {
        writeln!(out, "{}", fmt_g(value))?;
    }
    out.flush()?;
    Ok(())
}

fn estimate_omega(a: EstimateArgs) -> Result<()> {
    let g = specs::generator(&a.generator)?;
    let deltas = specs::grid(&a.deltas)?;
    let inner = InnerOptConfig {
        steps: a.steps,
        ..InnerOptConfig::default()
    };
    let estimate = fit_modulus_table(&g, &deltas, a.kappa, a.samples, &inner, a.seed)?;
    let mut out = open_out(a.out.as_deref())?;
    if is_json(a.out.as_deref()) {
        writeln!(out, "{}", estimate.to_json()?)?;
    } else {
        let mut w = csv_writer(&mut out);
        w.write_record(["delta", "omega_kappa"])?;
        for (d, v) in estimate.delta_grid.iter().zip(&estimate.values) {
            w.write_record([fmt_g(*d), fmt_g(*v)])?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}

fn parse_radii(text: &str) -> Result<RadiusSet> {
    let mut set = RadiusSet::default();
    for name in text.split(',').map(str::trim) {
        match name {
            "r_z" => set.r_z = true,
            "r_in" => set.r_in = true,
            "r_unc" => set.r_unc = true,
            _ => return Err(Error::Config(format!("unknown radius {name:?}"))),
        }
    }
    Ok(set)
}

fn attack(a: AttackArgs) -> Result<()> {
    let g = specs::generator(&a.generator)?;
    let mut f = specs::classifier(&a.classifier, &g)?;
    if a.nearest_neighbor {
        f = ClassifierModel::nearest_neighbor_wrap(f, g.clone(), Default::default())?;
    }
    let defaults = AttackConfig::default();
    let cfg = AttackConfig {
        max_iters: a.max_iters.unwrap_or(defaults.max_iters),
        restarts: a.restarts.unwrap_or(defaults.restarts),
        ..defaults
    };
    let report = robustness_survey(&f, &g, a.n, parse_radii(&a.radii)?, &cfg, a.seed)?;
    if a.out.is_some() {
        let mut out = open_out(a.out.as_deref())?;
        if is_json(a.out.as_deref()) {
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
        } else {
            report.write_csv(&mut out)?;
        }
        out.flush()?;
    }
    let s = &report.summary;
    let mut w = csv_writer(io::stdout().lock());
    w.write_record(["radius", "count", "nonconverged", "p25", "p50", "p75", "normalized_p25"])?;
    for (name, summary) in [("r_z", &s.r_z), ("r_in", &s.r_in), ("r_unc", &s.r_unc)] {
        if let Some(p) = summary {
            w.write_record([
                name.to_string(),
                p.count.to_string(),
                p.nonconverged.to_string(),
                fmt_g(p.p25),
                fmt_g(p.p50),
                fmt_g(p.p75),
                fmt_g(p.normalized_p25),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let report = run_experiment(&cfg)?;
    let mut out = open_out(a.out.as_deref())?;
    writeln!(out, "{}", report.to_json()?)?;
    out.flush()?;
    if let Some(p) = &a.bounds_csv {
        report.write_bounds_csv(BufWriter::new(File::create(p)?))?;
    }
    if let Some(p) = &a.comparison_csv {
        report.write_comparison_csv(BufWriter::new(File::create(p)?))?;
    }
    Ok(())
}

fn checkerboard(a: CheckerboardArgs) -> Result<()> {
    let etas = specs::grid(&a.etas)?;
    let g = genbound::models::GeneratorModel::identity(a.d);
    let f = ClassifierModel::checkerboard_latent(g.clone());
    let mut out = open_out(a.out.as_deref())?;
    let two = ClassDistribution::equiprobable(2)?;
    let mut w = csv_writer(&mut out);
    w.write_record(["eta", "general_bound", "checkerboard_bound", "mc_fraction"])?;
    for eta in etas {
        let general = fooling_prob_general(&two, &ModulusOfContinuity::Identity, eta)?;
        let exact = checkerboard_bound(a.d, eta)?;
        // the same latent draws for every eta
        let mc = mc_fooling_fraction(&f, &g, eta, a.n, &DistanceOracle::Checkerboard, a.seed)?;
        w.write_record([
            fmt_g(eta),
            fmt_g(general.value()),
            fmt_g(exact.value()),
            fmt_g(mc.fraction.value()),
        ])?;
    }
    w.flush()?;
    drop(w);
    out.flush()?;
    Ok(())
}
