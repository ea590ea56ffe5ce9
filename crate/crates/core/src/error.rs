use thiserror::Error;

/// Errors produced by the energy, solver, learning and data modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("layer index {index} out of range for a {layers}-layer energy")]
    LayerOutOfRange { index: usize, layers: usize },
    #[error("unsupported factor: {0}")]
    UnsupportedFactor(&'static str),
    #[error("backtracking on layer {layer} did not find an admissible step after {trials} trials (last L = {lipschitz:e}); the smooth factor is not Lipschitz near this point")]
    BacktrackExhausted {
        layer: usize,
        trials: usize,
        lipschitz: f64,
    },
    #[error("inference failed on sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("model format: {0}")]
    Format(String),
    #[error("image: {0}")]
    Image(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
