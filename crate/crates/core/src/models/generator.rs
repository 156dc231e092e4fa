use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, domain, Error, Result};
use crate::linalg::Matrix;
use crate::models::mlp::Mlp;
use crate::rng;

/// Step of the central-difference fallback for Jacobian products.
pub const JVP_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientCapability {
    #[default]
    Analytic,
    FiniteDifference,
    /// Black box: neither analytic nor finite-difference derivatives allowed.
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    Identity { dim: usize, scale: f64 },
    Linear { matrix: Matrix, offset: Vec<f64> },
    /// `z ↦ (cos 2πz, sin 2πz)`.
    Circle,
    Mlp(Mlp),
}

/// A map `g: R^d → R^m` pushing the prior `N(0, I_d)` forward to data space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorModel {
    #[serde(flatten)]
    kind: GeneratorKind,
    #[serde(default)]
    gradient: GradientCapability,
}

impl GeneratorModel {
    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0).expect("unit scale is valid")
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Result<Self> {
        if dim == 0 || !(scale.is_finite() && scale > 0.0) {
            return Err(domain("identity generator needs dim >= 1 and a positive scale"));
        }
        Ok(Self::from_kind(GeneratorKind::Identity { dim, scale }))
    }

    pub fn linear(matrix: Matrix, offset: Vec<f64>) -> Result<Self> {
        if matrix.rows() == 0 || matrix.cols() == 0 {
            return Err(domain("linear generator needs a non-empty matrix"));
        }
        check_dim(matrix.rows(), offset.len())?;
        if !matrix.as_slice().iter().chain(&offset).all(|v| v.is_finite()) {
            return Err(domain("linear generator has non-finite entries"));
        }
        Ok(Self::from_kind(GeneratorKind::Linear { matrix, offset }))
    }

    pub fn circle() -> Self {
        Self::from_kind(GeneratorKind::Circle)
    }

    pub fn mlp(net: Mlp) -> Self {
        Self::from_kind(GeneratorKind::Mlp(net))
    }

    fn from_kind(kind: GeneratorKind) -> Self {
        GeneratorModel {
            kind,
            gradient: GradientCapability::Analytic,
        }
    }

    pub fn with_gradient(mut self, gradient: GradientCapability) -> Self {
        self.gradient = gradient;
        self
    }

    pub fn kind(&self) -> &GeneratorKind {
        &self.kind
    }

    pub fn gradient_capability(&self) -> GradientCapability {
        self.gradient
    }

    pub fn latent_dim(&self) -> usize {
        match &self.kind {
            GeneratorKind::Identity { dim, .. } => *dim,
            GeneratorKind::Linear { matrix, .. } => matrix.cols(),
            GeneratorKind::Circle => 1,
            GeneratorKind::Mlp(net) => net.input_dim(),
        }
    }

    pub fn image_dim(&self) -> usize {
        match &self.kind {
            GeneratorKind::Identity { dim, .. } => *dim,
            GeneratorKind::Linear { matrix, .. } => matrix.rows(),
            GeneratorKind::Circle => 2,
            GeneratorKind::Mlp(net) => net.output_dim(),
        }
    }

    pub fn generate(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.latent_dim(), z.len())?;
        Ok(self.forward(z))
    }

    pub(crate) fn forward(&self, z: &[f64]) -> Vec<f64> {
        match &self.kind {
            GeneratorKind::Identity { scale, .. } => z.iter().map(|v| scale * v).collect(),
            GeneratorKind::Linear { matrix, offset } => {
                let mut x = matrix.matvec(z);
                x.iter_mut().zip(offset).for_each(|(a, b)| *a += b);
                x
            }
            GeneratorKind::Circle => {
                let (s, c) = (TAU * z[0]).sin_cos();
                vec![c, s]
            }
            GeneratorKind::Mlp(net) => net.forward_unchecked(z),
        }
    }

    /// Jacobian `∂g/∂z` (`m × d`).
    pub fn jacobian(&self, z: &[f64]) -> Result<Matrix> {
        check_dim(self.latent_dim(), z.len())?;
        match self.gradient {
            GradientCapability::Analytic => Ok(self.analytic_jacobian(z)),
            GradientCapability::FiniteDifference => Ok(self.fd_jacobian(z, JVP_FD_STEP)),
            GradientCapability::Unavailable => Err(Error::Capability(
                "generator exposes no gradients and finite differences are disabled".into(),
            )),
        }
    }

    /// `J_g(z)·direction`.
    pub fn jvp(&self, z: &[f64], direction: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.latent_dim(), z.len())?;
        check_dim(self.latent_dim(), direction.len())?;
        if !direction.iter().all(|v| v.is_finite()) {
            return Err(domain("jvp direction must be finite"));
        }
        match (self.gradient, &self.kind) {
            (GradientCapability::Analytic, GeneratorKind::Mlp(net)) => {
                Ok(net.jvp_unchecked(z, direction))
            }
            (GradientCapability::Analytic, _) => Ok(self.analytic_jacobian(z).matvec(direction)),
            (GradientCapability::FiniteDifference, _) => {
                let h = JVP_FD_STEP;
                let plus = self.forward(&crate::linalg::axpy(z, h, direction));
                let minus = self.forward(&crate::linalg::axpy(z, -h, direction));
                Ok(plus
                    .iter()
                    .zip(&minus)
                    .map(|(p, m)| (p - m) / (2.0 * h))
                    .collect())
            }
            (GradientCapability::Unavailable, _) => Err(Error::Capability(
                "generator exposes no gradients and finite differences are disabled".into(),
            )),
        }
    }

    /// `J_g(z)ᵀ·v`.
    pub fn vjp(&self, z: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.image_dim(), v.len())?;
        match (self.gradient, &self.kind) {
            (GradientCapability::Analytic, GeneratorKind::Mlp(net)) => {
                check_dim(self.latent_dim(), z.len())?;
                Ok(net.backward(z, v).1)
            }
            _ => Ok(self.jacobian(z)?.matvec_t(v)),
        }
    }

    pub(crate) fn analytic_jacobian(&self, z: &[f64]) -> Matrix {
        match &self.kind {
            GeneratorKind::Identity { dim, scale } => Matrix::diagonal(&vec![*scale; *dim]),
            GeneratorKind::Linear { matrix, .. } => matrix.clone(),
            GeneratorKind::Circle => {
                let (s, c) = (TAU * z[0]).sin_cos();
                Matrix::from_row_major(2, 1, vec![-TAU * s, TAU * c])
            }
            GeneratorKind::Mlp(net) => net.jacobian_unchecked(z),
        }
    }

    /// Central-difference Jacobian with step `h`.
    pub(crate) fn fd_jacobian(&self, z: &[f64], h: f64) -> Matrix {
        let (m, d) = (self.image_dim(), self.latent_dim());
        let mut jac = Matrix::zeros(m, d);
        let mut zp = z.to_vec();
        for j in 0..d {
            zp[j] = z[j] + h;
            let plus = self.forward(&zp);
            zp[j] = z[j] - h;
            let minus = self.forward(&zp);
            zp[j] = z[j];
            for i in 0..m {
                jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
        jac
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GeneratorDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GeneratorDocument = serde_json::from_str(text)?;
        doc.try_into()
    }
}

/// Draws `n` latent points from `N(0, I_d)`; point `i` comes from substream
/// `(seed, i)`, so the list is identical however it is computed.
pub fn sample_latent(dim: usize, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if dim == 0 || n == 0 {
        return Err(domain("sample_latent requires d >= 1 and n >= 1"));
    }
    use rayon::prelude::*;
    Ok((0..n)
        .into_par_iter()
        .map(|i| latent_sample(dim, seed, i as u64))
        .collect())
}

/// The `index`-th latent draw of stream `seed`.
pub fn latent_sample(dim: usize, seed: u64, index: u64) -> Vec<f64> {
    rng::standard_normal_vec(&mut rng::substream(seed, index), dim)
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// On-disk layout: `{version, latent_dim, image_dim, gradient, kind, ...}`.
#[derive(Serialize, Deserialize)]
struct GeneratorDocument {
    version: u32,
    latent_dim: usize,
    image_dim: usize,
    #[serde(flatten)]
    model: GeneratorModel,
}

impl From<&GeneratorModel> for GeneratorDocument {
    fn from(g: &GeneratorModel) -> Self {
        GeneratorDocument {
            version: MODEL_FORMAT_VERSION,
            latent_dim: g.latent_dim(),
            image_dim: g.image_dim(),
            model: g.clone(),
        }
    }
}

impl TryFrom<GeneratorDocument> for GeneratorModel {
    type Error = Error;
    fn try_from(doc: GeneratorDocument) -> Result<Self> {
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported model version {}", doc.version)));
        }
        let g = doc.model;
        if let GeneratorKind::Identity { dim, scale } = g.kind {
            Self::scaled_identity(dim, scale)?;
        }
        if let GeneratorKind::Linear { matrix, offset } = &g.kind {
            Self::linear(matrix.clone(), offset.clone())?;
        }
        check_dim(g.latent_dim(), doc.latent_dim)?;
        check_dim(g.image_dim(), doc.image_dim)?;
        Ok(g)
    }
}
