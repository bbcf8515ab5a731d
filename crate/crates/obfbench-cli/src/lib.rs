//! Experiment harness behind the `obfbench` binary: run configuration,
//! model lifecycle, attack suites, sweeps, and report emission.
//!
//! Everything here is driven by one flat key-value config file (see
//! [`config`]) so a run is fully determined by the file plus the checkpoint
//! bytes it points at. Data files (JSONL, CSV) are byte-reproducible;
//! timestamps only ever go to the run log.

pub mod boundary;
pub mod config;
pub mod records;
pub mod report;
pub mod suite;
pub mod sweep;
pub mod train;

use thiserror::Error;

/// Harness errors, partitioned by exit code: usage/config problems exit 1,
/// data/checkpoint problems exit 2, numeric failures exit 3.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl From<obfbench::textkit::TextError> for CliError {
    fn from(e: obfbench::textkit::TextError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<obfbench::gradkit::GradError> for CliError {
    fn from(e: obfbench::gradkit::GradError) -> Self {
        use obfbench::gradkit::GradError as G;
        match e {
            G::NonFinite { .. } | G::NonFiniteGradient => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<obfbench::seqmodels::ModelError> for CliError {
    fn from(e: obfbench::seqmodels::ModelError) -> Self {
        use obfbench::seqmodels::ModelError as M;
        match e {
            M::Diverged => CliError::Numeric(e.to_string()),
            M::Grad(g) => g.into(),
            M::InvalidConfig(msg) => CliError::Usage(msg),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<obfbench::obfuscator::AttackError> for CliError {
    fn from(e: obfbench::obfuscator::AttackError) -> Self {
        use obfbench::obfuscator::AttackError as A;
        match e {
            A::Model(m) => m.into(),
            A::Grad(g) => g.into(),
            A::InvalidConfig(msg) => CliError::Usage(msg),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<obfbench::metrics::MetricError> for CliError {
    fn from(e: obfbench::metrics::MetricError) -> Self {
        use obfbench::metrics::MetricError as Me;
        match e {
            Me::Model(m) => m.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
