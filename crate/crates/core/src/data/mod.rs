//! Scenes, trajectory-file loading, input features and synthetic scenes.

mod features;
mod json;
mod loader;
mod scene;
mod synthetic;

pub use features::{build_input_features, normalize_scene, FeatureTensor, Transform};
pub use json::{read_scenes_json, scenes_from_json, scenes_to_json, write_scenes_json};
pub use loader::{load_trajectory_file, parse_trajectories};
pub use scene::{Point, Scene};
pub use synthetic::{generate, generate_synthetic, Scenario, SyntheticSpec};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no scenes could be built from the input")]
    EmptyDataset,
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("scene json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;
