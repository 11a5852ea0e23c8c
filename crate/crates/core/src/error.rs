use thiserror::Error;

/// Errors raised by the solvers and verification routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("operator is not symmetric: asymmetry {asymmetry:e} exceeds tolerance {tolerance:e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("cutoff kappa = {kappa} coincides with |lambda| = {lambda} of mode {index}")]
    CutoffOnEigenvalue { kappa: f64, lambda: f64, index: usize },

    #[error("point x = {x} is not a grid node")]
    OffGrid { x: f64 },

    #[error("data does not match the spectral partition: {0}")]
    PartitionMismatch(String),

    #[error("boundary data has coefficient {value:e} on mode {index} outside the range of P")]
    SigmaNotInRangeP { index: usize, value: f64 },

    #[error("epsilon is not a chirality operator for A: {0}")]
    NotChiral(String),

    #[error("power iteration did not converge after {iterations} iterations (best estimate {estimate:e})")]
    NoConvergence { iterations: usize, estimate: f64 },

    #[error("c4 * ||B|| = {product} >= 1: the iteration is not a contraction")]
    NotContraction { product: f64 },

    #[error("no convergence after {iterations} iterations (last step {last_step:e})")]
    MaxIterations { iterations: usize, last_step: f64 },

    #[error("symbol is degenerate: ellipticity constant {eta:e}")]
    Degenerate { eta: f64 },

    #[error("symbol matrix at lattice point {k:?} is singular")]
    SingularSymbol { k: Vec<i64> },

    #[error("perturbation norm estimate {estimate} exceeds eta/3 = {limit}")]
    PerturbationTooLarge { estimate: f64, limit: f64 },

    #[error("K has entry {value:e} outside the (P, 1-P) block at ({row}, {col})")]
    KNotOffBlock { row: usize, col: usize, value: f64 },

    #[error("grid too coarse: {points} points, need at least {minimum}")]
    GridTooCoarse { points: usize, minimum: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
