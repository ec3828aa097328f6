use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty exhaustion domain at level {0}")]
    EmptyDomain(f64),

    #[error("node {node}: metric is not positive-definite")]
    NotPositive { node: usize },

    #[error("node {node}: matrix is not Hermitian (defect {defect:e})")]
    NotHermitian { node: usize, defect: f64 },

    #[error("rank mismatch: {0} vs {1}")]
    RankMismatch(usize, usize),

    #[error("field length {got} does not match node count {want}")]
    LengthMismatch { got: usize, want: usize },

    #[error("incompatible source: mean {mean:e} exceeds tolerance {tol:e}")]
    IncompatibleSource { mean: f64, tol: f64 },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64, history: Vec<f64> },

    #[error("no convergence of the eps -> 0 sequence after k = {k_max} (last sup difference {last_diff:e})")]
    NoLimit { k_max: usize, last_diff: f64, diffs: Vec<f64> },

    #[error("invalid projector: {0}")]
    InvalidProjector(String),

    #[error("boundary condition violated at node {0}")]
    BoundaryViolation(usize),

    #[error("step size fell below {dt_min:e} at t = {t}")]
    StepCollapse { t: f64, dt_min: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("exhaustion level {level}: {source}")]
    Level {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
