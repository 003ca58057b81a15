use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Non-finite or otherwise malformed numeric input.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("matrix at {point:?} is not symmetric (defect {defect:e} at entry ({row}, {col}))")]
    NonSymmetric {
        point: Vec<f64>,
        row: usize,
        col: usize,
        defect: f64,
    },

    #[error("matrix is not positive definite: pivot {pivot} has value {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    /// A kernel broke its envelope or ordering contract during simulation.
    #[error("kernel contract violated at x = {x:?}, h = {h:?}: {reason}")]
    KernelContract {
        x: Vec<f64>,
        h: Vec<f64>,
        reason: String,
    },

    #[error("kernel violates the integrability bound: {0}")]
    Integrability(String),

    #[error("comparability ratio is indeterminate: kernel vanishes on every sampled triple")]
    Indeterminate,

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("non-finite payoff {value} at landing state {state:?}")]
    Payoff { state: Vec<f64>, value: f64 },

    #[error("{message} at {path}{hint}")]
    Config {
        path: String,
        message: String,
        hint: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
            hint: String::new(),
        }
    }

    /// Attaches a trailing clarification to a config error.
    pub fn with_hint(self, extra: impl AsRef<str>) -> Self {
        match self {
            Error::Config { path, message, .. } => Error::Config {
                path,
                message,
                hint: format!(" ({})", extra.as_ref()),
            },
            other => other,
        }
    }

    /// Short machine-readable tag used in report failure sections.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::NonSymmetric { .. } => "non-symmetric",
            Error::NotPositiveDefinite { .. } => "not-positive-definite",
            Error::Dimension { .. } => "dimension",
            Error::KernelContract { .. } => "kernel-contract",
            Error::Integrability(_) => "integrability",
            Error::Indeterminate => "indeterminate",
            Error::Geometry(_) => "geometry",
            Error::Precondition(_) => "precondition",
            Error::Numerical(_) => "numerical",
            Error::Fit(_) => "fit",
            Error::Payoff { .. } => "payoff",
            Error::Config { .. } => "config",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
