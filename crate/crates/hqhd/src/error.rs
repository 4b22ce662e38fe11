//! Error type shared by the library and the command-line frontend.

/// All failure modes surfaced by the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid grid construction or a field/grid mismatch.
    #[error("grid error: {0}")]
    Grid(String),
    /// A named parameter is out of its valid range.
    #[error("parameter `{name}`: {message}")]
    Parameter {
        /// Name of the offending parameter.
        name: String,
        /// Why the value was rejected.
        message: String,
    },
    /// Operation undefined for the grid's dimensionality.
    #[error("dimensionality error: {0}")]
    Dimensionality(String),
    /// Closed-curve invariants violated: too few nodes or uneven node spacing.
    #[error("topology error: {0}")]
    Topology(String),
    /// Degenerate geometry, e.g. a self-intersecting filament.
    #[error("geometry error: {0}")]
    Geometry(String),
    /// A curve passes too close to a wavefunction node or to itself.
    #[error("proximity error: {0}")]
    Proximity(String),
    /// Non-finite values or an aborted integration.
    #[error("numerical abort: {0}")]
    Numerical(String),
    /// Scenario configuration problems, one entry per offending key.
    #[error("{}", .0.join("\n"))]
    Config(Vec<String>),
    /// Malformed binary snapshot or CSV input.
    #[error("format error at byte {offset}: {message}")]
    Format {
        /// Byte offset where decoding failed.
        offset: u64,
        /// Description of the malformation.
        message: String,
    },
    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration errors, 3 for
    /// numerical aborts, 4 for I/O and format errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Grid(_)
            | Error::Parameter { .. }
            | Error::Dimensionality(_)
            | Error::Config(_) => 2,
            Error::Topology(_)
            | Error::Geometry(_)
            | Error::Proximity(_)
            | Error::Numerical(_) => 3,
            Error::Format { .. } | Error::Io(_) => 4,
        }
    }

    /// Shorthand for a [`Error::Parameter`] value.
    pub fn parameter(name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parameter {
            name: name.into(),
            message: message.into(),
        }
    }
}
