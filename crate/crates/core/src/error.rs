use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid quantum numbers: {0}")]
    InvalidQuantumNumbers(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid level scheme: {}", .0.join("; "))]
    InvalidScheme(Vec<String>),

    #[error("invalid laser beam: {0}")]
    InvalidBeam(String),

    #[error("beam does not drive this transition: {0}")]
    LinkMismatch(String),

    #[error("dark manifold: sublevels {} are not coupled to the light field", .sublevels.join(", "))]
    DarkManifold { sublevels: Vec<String> },

    #[error("physics diagnostic: {0}")]
    Physics(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("at grid point z = {z:e} m, v = {v:e} m/s: {source}")]
    AtGridPoint {
        z: f64,
        v: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidQuantumNumbers(_)
            | Error::UnknownPreset(_)
            | Error::InvalidScheme(_)
            | Error::InvalidBeam(_)
            | Error::LinkMismatch(_)
            | Error::Config { .. } => 2,
            Error::DarkManifold { .. } | Error::Physics(_) => 3,
            Error::Numerical(_) | Error::Io(_) => 4,
            Error::AtGridPoint { source, .. } => source.exit_code(),
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidQuantumNumbers(_) => "invalid_quantum_numbers",
            Error::UnknownPreset(_) => "unknown_preset",
            Error::InvalidScheme(_) => "invalid_scheme",
            Error::InvalidBeam(_) => "invalid_beam",
            Error::LinkMismatch(_) => "link_mismatch",
            Error::DarkManifold { .. } => "dark_manifold",
            Error::Physics(_) => "physics",
            Error::Numerical(_) => "numerical",
            Error::Config { .. } => "config",
            Error::AtGridPoint { source, .. } => source.kind(),
            Error::Io(_) => "io",
        }
    }
}
