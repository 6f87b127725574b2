use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Runtime failures inside a regularization step or a KAM step are wrapped in
/// [`Error::Step`] so the caller can tell which stage gave up.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("negative Sobolev index s = {0}")]
    NegativeIndex(f64),

    #[error("small divisor {divisor:.3e} at ell = {ell:?} (floor {floor:.3e})")]
    SmallDivisor {
        ell: Vec<i64>,
        divisor: f64,
        floor: f64,
    },

    #[error("divisor underflow {divisor:.3e} at ell = {ell:?}, row (sigma {sigma}, j {j}), col (sigma {sigma_p}, j {j_p})")]
    DivisorUnderflow {
        ell: Vec<i64>,
        sigma: i8,
        j: usize,
        sigma_p: i8,
        j_p: usize,
        divisor: f64,
    },

    #[error("degenerate coefficient: {0}")]
    DegenerateCoefficient(String),

    #[error("invalid diffeomorphism: |shift|_(1,inf) = {norm:.3e} exceeds 1/2")]
    InvalidDiffeo { norm: f64 },

    #[error("inverse shift fixed point did not contract (defect {defect:.3e})")]
    DiffeoNotContracting { defect: f64 },

    #[error("Neumann precondition violated: C(s0)|Psi|_s0 = {value:.3e} > 1/2")]
    NotDiagonallyDominant { value: f64 },

    #[error("{what} did not converge after {iterations} iterations (last {last:.3e})")]
    NotConverged {
        what: String,
        iterations: usize,
        last: f64,
    },

    #[error("no parameter sample survives the Melnikov conditions")]
    EmptyCantorSet,

    #[error("lambda = {lambda} excluded: {reason}")]
    Excluded { lambda: f64, reason: String },

    #[error("Nash-Moser residual increased twice in a row at n = {n} (residual {residual:.3e})")]
    Divergence { n: usize, residual: f64 },

    #[error("stability violated: eigenvalue with real part {real_part:.3e}")]
    StabilityViolated { real_part: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{stage}: {source}")]
    Step {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn at(self, stage: impl Into<String>) -> Error {
        Error::Step {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage attribution.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Error {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
