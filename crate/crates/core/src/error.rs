use thiserror::Error;

#[derive(Debug, Error)]
pub enum WignerError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-positive constant: {0}")]
    NonPositiveConstant(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("potential returned a non-finite value at x = {0:?}")]
    NonFinitePotential(Vec<f64>),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("empty batch")]
    EmptyBatch,
    #[error("network width mismatch: expected {expected}, found {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("field does not decay at the grid edge (max |f| = {0:e})")]
    EdgeDecay(f64),
    #[error("imaginary residue {0:e} exceeds tolerance")]
    ImaginaryResidue(f64),
    #[error("time step aliases the kinetic propagator (max phase {0} >= pi)")]
    Aliasing(f64),
    #[error("norm drift {0:e} exceeds tolerance")]
    NormDrift(f64),
    #[error("unknown name: {0}")]
    UnknownName(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("non-finite loss at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("loss {loss:e} exceeded the divergence threshold at epoch {epoch}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = WignerError> = std::result::Result<T, E>;

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(WignerError::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
