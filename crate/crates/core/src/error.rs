use thiserror::Error;

#[derive(Debug, Error)]
pub enum KahlerError {
    #[error("invalid torus specification: {0}")]
    InvalidSpec(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("potential leaves the Kähler cone: margin {margin:.3e} at t = {time:?}")]
    PositivityViolation { margin: f64, time: Option<f64> },
    #[error("right-hand side is not mean-zero for the volume form (mean {mean:.3e})")]
    MeanNotZero { mean: f64 },
    #[error("solver stopped after {iterations} iterations with relative residual {residual:.3e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("degenerate plane: normalized Gram determinant {ratio:.3e}")]
    DegeneratePlane { ratio: f64 },
    #[error("tangent vector is anchored at a different potential")]
    AnchorMismatch,
    #[error("density must be strictly positive (min {min:.3e})")]
    NonPositiveDensity { min: f64 },
    #[error("grid mismatch between fields")]
    GridMismatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("configuration error: {0}")]
    Config(String),
}

impl KahlerError {
    /// Attach a time stamp to a positivity failure raised inside a time stepper.
    pub fn at_time(self, t: f64) -> Self {
        match self {
            KahlerError::PositivityViolation { margin, .. } => {
                KahlerError::PositivityViolation { margin, time: Some(t) }
            }
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, KahlerError>;
