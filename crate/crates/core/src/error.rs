use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Quantile of probability 0 or 1.
    #[error("quantile of p = {0} is unbounded")]
    UnboundedQuantile(f64),

    /// Argument outside the range covered by a tabulated function, or a
    /// target that cannot be reached.
    #[error("range error: {0}")]
    Range(String),

    /// The requested image distance is below ω(0): no latent radius maps to it.
    #[error("no latent radius achieves image distance {eta} (modulus floor {floor})")]
    BelowModulusFloor { eta: f64, floor: f64 },

    #[error("degenerate class distribution: {0}")]
    DegenerateDistribution(String),

    /// A hypothesis of the bound (K ≥ 5, η ≤ 1/2, concavity, ...) is violated.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("capability error: {0}")]
    Capability(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("attack did not change the label within {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("projection did not converge (residual {residual:e})")]
    ProjectionNonConvergence { best: Vec<f64>, residual: f64 },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Training { epoch: usize, loss: f64 },

    #[error("every grid point was skipped: target {0} is infeasible")]
    Infeasible(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    /// Several independent stages failed.
    #[error("{}", join_errors(.0))]
    Stages(Vec<Error>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input or configuration rather than by a
    /// numerical procedure failing.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Config(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::Dimension { .. }
            | Error::Domain(_)
            | Error::Hypothesis(_)
            | Error::DegenerateDistribution(_)
            | Error::Capability(_) => true,
            Error::Stage { source, .. } => source.is_config_error(),
            Error::Stages(all) => all.iter().all(Error::is_config_error),
            _ => false,
        }
    }
}

fn join_errors(errors: &[Error]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
