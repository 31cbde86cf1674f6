//! Experiment presets over the tielab crates: configuration with dotted
//! overrides, deterministic parallel sweeps, CSV tables with a config
//! sidecar, and SVG summaries.

pub mod config;
pub mod presets;
pub mod run;
pub mod svg;
pub mod table;

use thiserror::Error;

pub use config::ExperimentConfig;
pub use run::{emit_outputs, run_experiment, Format, RunOutput};
pub use table::{Cell, ResultTable};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{cell}: {source}")]
    Numeric {
        cell: String,
        #[source]
        source: tielab::LabError,
    },
    #[error("{cell}: {source}")]
    Hotel {
        cell: String,
        #[source]
        source: hotelgen::HotelError,
    },
    #[error("empty result table")]
    EmptyTable,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 for numeric
    /// failures downstream, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::UnknownPreset(_) | HarnessError::Config(_) => 2,
            HarnessError::Numeric { .. } | HarnessError::Hotel { .. } => 3,
            HarnessError::EmptyTable | HarnessError::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Attach grid coordinates to a library error.
pub(crate) trait AtCell<T> {
    fn at(self, cell: impl FnOnce() -> String) -> Result<T>;
}

impl<T> AtCell<T> for std::result::Result<T, tielab::LabError> {
    fn at(self, cell: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| HarnessError::Numeric { cell: cell(), source })
    }
}

impl<T> AtCell<T> for std::result::Result<T, hotelgen::HotelError> {
    fn at(self, cell: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| HarnessError::Hotel { cell: cell(), source })
    }
}
