use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure mode of the reduction pipeline.
///
/// Numeric payloads are stored as `f64` regardless of the scalar type the
/// computation ran in.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("division by the zero polynomial")]
    DivisionByZeroPoly,

    #[error("interpolation nodes {0} and {1} coincide")]
    DuplicateNode(f64, f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("m(mu) and w(mu) share a root: reconstruction system has condition number {cond:.3e}")]
    SharedRoot { cond: f64 },

    #[error("w vanishes at interpolation node {node} (|w| = {value:.3e})")]
    EvaluationAtEigenvalue { node: f64, value: f64 },

    #[error("m(M) is singular: condition number {cond:.3e}")]
    SingularMmatrix { cond: f64 },

    #[error("eigenvalues are not separated: minimal gap {gap:.3e}")]
    DegenerateEigenvalues { gap: f64 },

    #[error("trajectory blew up at time {time} (norm {norm:.3e})")]
    BlowUp { time: f64, norm: f64 },

    #[error("trajectory hit a singularity at time {time}: {reason}")]
    SingularityHit { time: f64, reason: String },

    #[error("step size underflow at time {time} (h = {step:.3e})")]
    ToleranceFailure { time: f64, step: f64 },

    #[error("start point is not on the zero level set: max |a_k| = {max_coeff:.3e}")]
    OffLevelSet { max_coeff: f64 },

    #[error("c_new(lambda) = {value} is not positive")]
    NonpositiveCLambda { value: f64 },

    #[error("lambda is an eigenvalue of L(u) at grid node (t: {t_index}, x: {x_index})")]
    EigenvalueCollision { t_index: usize, x_index: usize },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("mu equals lambda")]
    MuEqualsLambda,

    #[error("at grid node (t: {t_index}, x: {x_index}): {source}")]
    AtNode {
        t_index: usize,
        x_index: usize,
        source: Box<Error>,
    },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn at_node(self, t_index: usize, x_index: usize) -> Self {
        Error::AtNode {
            t_index,
            x_index,
            source: Box::new(self),
        }
    }

    /// The innermost error, with grid-node annotations stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtNode { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for failures caused by the trajectory reaching a singular locus.
    pub fn is_singularity(&self) -> bool {
        matches!(
            self.root(),
            Error::SharedRoot { .. }
                | Error::SingularMmatrix { .. }
                | Error::SingularityHit { .. }
                | Error::EigenvalueCollision { .. }
                | Error::EvaluationAtEigenvalue { .. }
        )
    }

    /// Process exit status: 1 numerical failure, 2 configuration error, 3 singularity abort.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config { .. } | Error::InvalidInput(_) | Error::Io(_) => 2,
            _ if self.is_singularity() => 3,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
