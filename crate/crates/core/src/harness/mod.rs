//! Training loop, checkpoints and the command implementations behind the
//! `vtraj` binary.

mod checkpoint;
mod commands;
mod config;
mod train;

pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use commands::{
    analyze_graph, baseline, demo_chain_report, evaluate, export_gates, leave_one_out, load_scenes,
    write_analysis_csv, write_gates_csv, GateRow, SceneResistanceRows,
};
pub use config::{DataSource, RunConfig};
pub use train::{train, write_history_csv, EpochMetrics, TrainOutcome, Trainer};

use std::path::PathBuf;

use thiserror::Error;

use crate::data::DataError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] TensorError),
    #[error("non-finite loss at epoch {epoch}, batch {batch}; offending scenes written to {}", dump.display())]
    NonFinite { epoch: usize, batch: usize, dump: PathBuf },
}

impl HarnessError {
    /// Process exit status: 3 for numerical failure, 2 for everything the
    /// user can fix by changing inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::NonFinite { .. } => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
