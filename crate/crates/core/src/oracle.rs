//! Ground truth for small instances: exhaustive latent grids, exact CDFs,
//! and Monte Carlo fooling fractions under analytic distance oracles.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{latent_robustness, AttackConfig};
use crate::error::{domain, Error, Result};
use crate::gaussian::{mass_between, Probability};
use crate::linalg::{axpy, dot, norm};
use crate::models::{latent_sample, ClassifierModel, GeneratorModel};

/// Square latent grid of offsets `k·h`, `|k| ≤ resolution/2`, with
/// `h = extent/(resolution/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Half-width of the grid in every dimension.
    pub extent: f64,
    /// Points per dimension (at least 16).
    pub resolution: usize,
}

pub const MAX_GRID_POINTS: f64 = 1e7;

impl GridSpec {
    pub fn new(extent: f64, resolution: usize) -> Result<Self> {
        let spec = GridSpec { extent, resolution };
        spec.validate(1)?;
        Ok(spec)
    }

    fn half(&self) -> i64 {
        (self.resolution / 2) as i64
    }

    pub fn spacing(&self) -> f64 {
        self.extent / self.half() as f64
    }

    /// Grid diagonal `h·√d`.
    pub fn error(&self, dim: usize) -> f64 {
        self.spacing() * (dim as f64).sqrt()
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.resolution < 16 {
            return Err(domain("grid resolution must be at least 16"));
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(domain("grid extent must be positive"));
        }
        if ((2 * self.half() + 1) as f64).powi(dim as i32) > MAX_GRID_POINTS {
            return Err(domain(format!("grid exceeds {MAX_GRID_POINTS} points")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub value: f64,
    /// Discretization error bound (grid diagonal).
    pub grid_error: f64,
}

/// Smallest grid offset `r` with `f(g(z + r)) ≠ f(g(z))`, for `d ≤ 2`.
/// Offsets are scanned ring by ring in the max-norm, stopping once no
/// remaining ring can beat the best point.
pub fn brute_force_latent_robustness(
    f: &ClassifierModel,
    g: &GeneratorModel,
    z: &[f64],
    grid: &GridSpec,
) -> Result<GridResult> {
    let d = g.latent_dim();
    if d > 2 {
        return Err(Error::Capability(format!(
            "grid oracle handles latent dimension <= 2, got {d}"
        )));
    }
    crate::error::check_dim(d, z.len())?;
    grid.validate(d)?;
    let h = grid.spacing();
    let class = f.classify(&g.generate(z)?)?;
    let differs = |offset: &[f64]| -> Result<bool> { Ok(f.classify(&g.forward(&axpy(z, 1.0, offset)))? != class) };
    let mut best = f64::INFINITY;
    for k in 1..=grid.half() {
        if best <= k as f64 * h {
            break;
        }
        let ring: Vec<Vec<f64>> = if d == 1 {
            vec![vec![k as f64 * h], vec![-(k as f64) * h]]
        } else {
            let mut pts = Vec::with_capacity(8 * k as usize);
            for j in -k..=k {
                pts.push(vec![k as f64 * h, j as f64 * h]);
                pts.push(vec![-(k as f64) * h, j as f64 * h]);
            }
            for i in (-k + 1)..k {
                pts.push(vec![i as f64 * h, k as f64 * h]);
                pts.push(vec![i as f64 * h, -(k as f64) * h]);
            }
            pts
        };
        for r in ring {
            let n = norm(&r);
            if n < best && differs(&r)? {
                best = n;
            }
        }
    }
    if best.is_infinite() {
        return Err(Error::Range(format!(
            "no label change within grid extent {}",
            grid.extent
        )));
    }
    Ok(GridResult {
        value: best,
        grid_error: grid.error(d),
    })
}

/// `P(r_Z ≤ η) = 2(Φ(η) − 1/2)` for a latent half-space through the origin.
pub fn exact_fooling_cdf_halfspace(eta: f64) -> Result<Probability> {
    if !(eta >= 0.0) {
        return Err(domain(format!("eta must be >= 0, got {eta}")));
    }
    Ok(Probability::clamped(mass_between(-eta, eta)))
}

/// How the latent distance to the nearest differently-labelled point is
/// obtained in Monte Carlo checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "oracle", rename_all = "snake_case")]
pub enum DistanceOracle {
    /// `min_i |z_i − round(z_i)|`, exact for the parity partition.
    Checkerboard,
    /// `|w·z − t|/‖w‖`.
    HalfSpace { normal: Vec<f64>, threshold: f64 },
    /// Latent attack radius (an upper estimate).
    Attack(AttackConfig),
    Grid(GridSpec),
}

/// Latent distance from `z` to the other classes under `oracle`;
/// `+∞` when the oracle finds none.
pub fn oracle_distance(
    f: &ClassifierModel,
    g: &GeneratorModel,
    z: &[f64],
    oracle: &DistanceOracle,
) -> Result<f64> {
    match oracle {
        DistanceOracle::Checkerboard => Ok(z
            .iter()
            .map(|v| (v - v.round()).abs())
            .fold(f64::INFINITY, f64::min)),
        DistanceOracle::HalfSpace { normal, threshold } => Ok((dot(normal, z) - threshold).abs() / norm(normal)),
        DistanceOracle::Attack(cfg) => match latent_robustness(f, g, z, cfg) {
            Ok(o) => Ok(o.radius),
            Err(Error::NonConvergence { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        },
        DistanceOracle::Grid(spec) => match brute_force_latent_robustness(f, g, z, spec) {
            Ok(r) => Ok(r.value),
            Err(Error::Range(_)) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub fraction: Probability,
    /// Binomial standard error `√(p(1−p)/n)`.
    pub std_error: f64,
    pub n: usize,
}

/// Fraction of `n` latent draws whose oracle distance is at most `eta`.
pub fn mc_fooling_fraction(
    f: &ClassifierModel,
    g: &GeneratorModel,
    eta: f64,
    n: usize,
    oracle: &DistanceOracle,
    seed: u64,
) -> Result<McEstimate> {
    if n == 0 {
        return Err(domain("Monte Carlo needs n >= 1"));
    }
    let distances = (0..n)
        .into_par_iter()
        .map(|i| oracle_distance(f, g, &latent_sample(g.latent_dim(), seed, i as u64), oracle))
        .collect::<Result<Vec<_>>>()?;
    Ok(fraction_within(&distances, eta))
}

/// Binomial estimate of `P(distance ≤ eta)` from precomputed distances.
pub fn fraction_within(distances: &[f64], eta: f64) -> McEstimate {
    let n = distances.len();
    let p = distances.iter().filter(|d| **d <= eta).count() as f64 / n as f64;
    McEstimate {
        fraction: Probability::clamped(p),
        std_error: (p * (1.0 - p) / n as f64).sqrt(),
        n,
    }
}
