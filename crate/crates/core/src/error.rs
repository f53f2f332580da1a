use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("observation {observation} has zero probability after action {action}")]
    ZeroProbabilityObservation { action: usize, observation: usize },

    #[error("trace has zero probability under the model")]
    ImpossibleTrace,

    #[error("parameter {name} = {value} is outside its prior support")]
    OutOfSupport { name: String, value: f64 },

    #[error("invalid template: {}", .0.join("; "))]
    InvalidTemplate(Vec<String>),

    #[error("parameter {name} cannot be drawn from an IO-HMM conditional: {reason}")]
    UnsupportedParameterRole { name: String, reason: String },

    #[error("start point is outside the feasible region: {0}")]
    NoFeasibleStart(String),

    #[error("template is episodic: {0}")]
    EpisodicTemplate(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            message: e.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
