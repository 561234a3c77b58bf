use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    /// A field in a spec or config file violated its bounds.
    #[error("invalid {field}: {reason}")]
    InvalidField { field: String, reason: String },

    /// A parallel configuration violated a structural constraint; the message
    /// names the failing constraint.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Every enumerated configuration overflowed HBM.
    #[error("no feasible configuration fits in HBM ({evaluated} configurations evaluated)")]
    NoFeasibleConfig { evaluated: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("failed to parse config file: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("failed to serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_field(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
