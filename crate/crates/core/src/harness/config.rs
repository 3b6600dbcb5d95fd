use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::data::{Scenario, SyntheticSpec};
use crate::model::ModelConfig;
use crate::nn::Aggregator;

/// Flat run configuration, read from a JSON object. Unknown keys are
/// rejected and missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub t_obs: usize,
    pub t_pred: usize,
    pub k_neighbors: usize,
    pub hidden_dim: usize,
    pub virtual_count: usize,
    pub heads: usize,
    pub top_p: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Window stride when cutting trajectory files into scenes.
    pub stride: usize,
    pub noise_enabled: bool,
    pub perturb_std: f64,
    pub aggregator: Aggregator,
    /// Scene JSON or trajectory text files; relative paths are resolved
    /// against the config file's directory.
    pub train_data: Vec<PathBuf>,
    pub val_data: Vec<PathBuf>,
    /// Used when `train_data` is empty.
    pub synthetic_scenario: Scenario,
    pub synthetic_agents: usize,
    pub synthetic_train_scenes: usize,
    pub synthetic_val_scenes: usize,
    pub synthetic_noise: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            t_obs: m.t_obs,
            t_pred: m.t_pred,
            k_neighbors: m.k_neighbors,
            hidden_dim: m.hidden_dim,
            virtual_count: m.virtual_count,
            heads: m.heads,
            top_p: m.top_p,
            lambda: m.lambda,
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 8,
            seed: 0,
            stride: 1,
            noise_enabled: m.noise_enabled,
            perturb_std: m.perturb_std,
            aggregator: m.aggregator,
            train_data: Vec::new(),
            val_data: Vec::new(),
            synthetic_scenario: Scenario::Mixed,
            synthetic_agents: 4,
            synthetic_train_scenes: 200,
            synthetic_val_scenes: 40,
            synthetic_noise: 0.0,
        }
    }
}

/// Where a run's scenes come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files(Vec<PathBuf>),
    Synthetic(SyntheticSpec),
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Input(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in cfg.train_data.iter_mut().chain(cfg.val_data.iter_mut()) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            t_obs: self.t_obs,
            t_pred: self.t_pred,
            hidden_dim: self.hidden_dim,
            virtual_count: self.virtual_count,
            heads: self.heads,
            k_neighbors: self.k_neighbors,
            top_p: self.top_p,
            lambda: self.lambda,
            noise_enabled: self.noise_enabled,
            perturb_std: self.perturb_std,
            aggregator: self.aggregator,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config()
            .validate()
            .map_err(|e| HarnessError::Input(format!("config: {e}")))?;
        let bad = |msg: &str| Err(HarnessError::Input(format!("config: {msg}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.stride == 0 {
            return bad("batch_size and stride must be positive");
        }
        if self.train_data.is_empty() && (self.synthetic_agents == 0 || self.synthetic_train_scenes == 0) {
            return bad("synthetic data needs positive synthetic_agents and synthetic_train_scenes");
        }
        if !(self.synthetic_noise >= 0.0) {
            return bad("synthetic_noise must be non-negative");
        }
        Ok(())
    }

    fn synthetic(&self, n_scenes: usize, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            scenario: self.synthetic_scenario,
            n_agents: self.synthetic_agents,
            noise_std: self.synthetic_noise,
            seed,
            n_scenes,
            t_obs: self.t_obs,
            t_pred: self.t_pred,
        }
    }

    pub fn train_source(&self) -> DataSource {
        match self.train_data.is_empty() {
            true => DataSource::Synthetic(self.synthetic(self.synthetic_train_scenes, self.seed)),
            false => DataSource::Files(self.train_data.clone()),
        }
    }

    /// Validation scenes; synthetic runs draw them from a separate seed.
    pub fn val_source(&self) -> Option<DataSource> {
        if !self.val_data.is_empty() {
            Some(DataSource::Files(self.val_data.clone()))
        } else if self.train_data.is_empty() && self.synthetic_val_scenes > 0 {
            let seed = self.seed.wrapping_add(0x5eed);
            Some(DataSource::Synthetic(self.synthetic(self.synthetic_val_scenes, seed)))
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_object() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!((cfg.t_obs, cfg.t_pred, cfg.k_neighbors, cfg.hidden_dim), (8, 12, 4, 64));
        assert_eq!((cfg.virtual_count, cfg.heads, cfg.top_p, cfg.lambda), (4, 20, 0.7, 0.01));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_json(r#"{"hiden_dim": 3}"#), Err(HarnessError::Input(_))));
    }

    #[test]
    fn invalid_values_rejected() {
        for text in [r#"{"top_p": 1.5}"#, r#"{"heads": 0}"#, r#"{"learning_rate": 0}"#, r#"{"batch_size": 0}"#] {
            assert!(RunConfig::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn relative_paths_follow_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"train_data": ["a.txt", "/abs/b.txt"]}"#).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.train_data, vec![dir.path().join("a.txt"), PathBuf::from("/abs/b.txt")]);
    }

    #[test]
    fn synthetic_sources() {
        let cfg = RunConfig { synthetic_val_scenes: 0, ..RunConfig::default() };
        assert!(matches!(cfg.train_source(), DataSource::Synthetic(s) if s.n_scenes == 200));
        assert!(cfg.val_source().is_none());
    }
}
