use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EpochMetrics, HarnessError, Result, RunConfig};
use crate::model::Model;
use crate::tensor::{ParamStore, RngStream};

pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: RunConfig,
    /// Parameters by name with their Adam moments and the step counter.
    pub params: ParamStore,
    /// Number of completed epochs.
    pub epoch: usize,
    pub rng_seed: u64,
    /// Position of the training stream; stored as a decimal string since
    /// it can exceed 64 bits.
    pub rng_counter: String,
    pub history: Vec<EpochMetrics>,
}

impl Checkpoint {
    pub fn new(config: RunConfig, model: &Model, epoch: usize, rng: &RngStream, history: Vec<EpochMetrics>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config,
            params: model.params.clone(),
            epoch,
            rng_seed: rng.seed(),
            rng_counter: rng.counter().to_string(),
            history,
        }
    }

    pub fn model(&self) -> Result<Model> {
        let fresh = Model::new(self.config.model_config(), 0)?;
        for (name, t) in fresh.params.iter() {
            match self.params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                Some(p) => {
                    return Err(HarnessError::Input(format!(
                        "checkpoint parameter {name} has shape {:?}, config expects {:?}",
                        p.shape(),
                        t.shape()
                    )))
                }
                None => return Err(HarnessError::Input(format!("checkpoint lacks parameter {name}"))),
            }
        }
        if self.params.len() != fresh.params.len() {
            return Err(HarnessError::Input("checkpoint has parameters the config does not define".into()));
        }
        Ok(Model {
            config: self.config.model_config(),
            params: self.params.clone(),
        })
    }

    pub fn rng(&self) -> Result<RngStream> {
        let counter = self
            .rng_counter
            .parse()
            .map_err(|_| HarnessError::Input(format!("bad rng counter `{}`", self.rng_counter)))?;
        Ok(RngStream::resume(self.rng_seed, counter))
    }

    /// Writes to a temporary sibling first so a crash never leaves a torn
    /// file behind.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| HarnessError::Input(format!("checkpoint: {e}")))?;
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, text).map_err(HarnessError::io(&tmp))?;
        std::fs::rename(&tmp, path).map_err(HarnessError::io(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        let ck: Self = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Input(format!("{}: not a checkpoint: {e}", path.display())))?;
        if ck.format_version != FORMAT_VERSION {
            return Err(HarnessError::Input(format!(
                "{}: checkpoint format {} is not supported (expected {FORMAT_VERSION})",
                path.display(),
                ck.format_version
            )));
        }
        ck.config.validate()?;
        ck.model()?;
        Ok(ck)
    }
}
