use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Time gap is 0/0 or negative/0.
    #[error("time gap undefined: clearance {clearance} m with zero planned speed")]
    UndefinedGap { clearance: f64 },

    #[error("outside domain: {0}")]
    Domain(String),

    /// Step size exceeds the minimum time gap for a Newell-family model.
    #[error("step size {eps} s exceeds minimum time gap {tau} s")]
    StepTooLarge { eps: f64, tau: f64 },

    /// IDM evaluated at or below the minimum jam spacing.
    #[error("singular input: spacing {spacing} m is not above minimum jam spacing {zeta_min} m")]
    Singular { spacing: f64, zeta_min: f64 },

    /// Gipps safe speed with a negative discriminant.
    #[error("model ill-defined: negative discriminant {discriminant}")]
    IllDefined { discriminant: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("no steady state reached: {0}")]
    NoSteadyState(String),

    #[error("search failed: {0}")]
    Search(String),

    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the car-following law itself (as opposed to bad input).
    pub fn is_model_domain(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. } | Error::IllDefined { .. } | Error::StepTooLarge { .. }
        )
    }

    /// Short machine-readable kind, used in trajectory terminal records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidState(_) => "invalid-state",
            Error::InvalidParams(_) => "invalid-params",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::UndefinedGap { .. } => "undefined-gap",
            Error::Domain(_) => "domain",
            Error::StepTooLarge { .. } => "step-too-large",
            Error::Singular { .. } => "singular",
            Error::IllDefined { .. } => "ill-defined",
            Error::Config(_) => "config",
            Error::Unsupported(_) => "unsupported",
            Error::NoSteadyState(_) => "no-steady-state",
            Error::Search(_) => "search",
            Error::UnknownExperiment(_) => "unknown-experiment",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}
