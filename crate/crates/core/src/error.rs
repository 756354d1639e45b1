use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Quantum numbers or physical parameters outside their domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid schedule: {0}")]
    Schedule(String),

    /// The balance solver found no sign change in its search interval.
    #[error("no balance root found: {reason}\n{diagnostic}")]
    NoRoot { reason: String, diagnostic: String },

    /// A measurement the physics model refuses to perform, such as an
    /// unbalanced two-color probe.
    #[error("refused: {0}")]
    Refused(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("TOML decode error: {0}")]
    TomlDecode(#[from] toml::de::Error),

    #[error("TOML encode error: {0}")]
    TomlEncode(#[from] toml::ser::Error),
}
