use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::commands::load_source;
use super::{Checkpoint, HarnessError, Result, RunConfig};
use crate::data::{scenes_to_json, Scene};
use crate::model::{Mode, Model};
use crate::predictor::MetricAccumulator;
use crate::tensor::{Adam, RngStream, Tensor};

const MODEL_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Means over the epoch's training scenes.
    pub pred_loss: f64,
    pub imp_loss: f64,
    pub total_loss: f64,
    pub val_min_ade: Option<f64>,
    pub val_min_fde: Option<f64>,
}

/// Minibatch Adam over scenes. Gradients of `batch_size` scenes are
/// averaged before each step; one random stream drives both the scene
/// order and the train-time noise.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: RunConfig,
    model: Model,
    optimizer: Adam,
    rng: RngStream,
    epoch: usize,
    history: Vec<EpochMetrics>,
}

impl Trainer {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let root = RngStream::new(config.seed);
        let model = Model::new(config.model_config(), root.derive(MODEL_STREAM).seed())?;
        Ok(Self {
            optimizer: Adam::new(config.learning_rate),
            rng: root.derive(TRAIN_STREAM),
            model,
            config,
            epoch: 0,
            history: Vec::new(),
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        Ok(Self {
            optimizer: Adam::new(ck.config.learning_rate),
            model: ck.model()?,
            rng: ck.rng()?,
            config: ck.config.clone(),
            epoch: ck.epoch,
            history: ck.history.clone(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.config.clone(), &self.model, self.epoch, &self.rng, self.history.clone())
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn history(&self) -> &[EpochMetrics] {
        &self.history
    }

    /// Runs one pass over `train`, then scores `val` in eval mode. A
    /// non-finite loss or gradient aborts the epoch and writes the offending
    /// batch to `dump_dir`.
    pub fn run_epoch(&mut self, train: &[Scene], val: &[Scene], dump_dir: &Path) -> Result<EpochMetrics> {
        if train.is_empty() {
            return Err(HarnessError::Input("no training scenes".into()));
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        self.rng.shuffle(&mut order);
        let (mut pred, mut imp, mut total) = (0.0, 0.0, 0.0);

        for (b, batch) in order.chunks(self.config.batch_size).enumerate() {
            let mut acc: BTreeMap<String, Tensor> = BTreeMap::new();
            for &idx in batch {
                let (loss, grads) = self.model.loss_and_gradients(&train[idx], Mode::Train, &mut self.rng)?;
                if !loss.total.is_finite() || !grads.values().all(Tensor::all_finite) {
                    let scenes: Vec<Scene> = batch.iter().map(|&i| train[i].clone()).collect();
                    return Err(self.dump(dump_dir, b, &scenes));
                }
                pred += loss.pred_loss;
                imp += loss.imp_loss;
                total += loss.total;
                for (name, g) in grads {
                    match acc.get_mut(&name) {
                        Some(sum) => sum.data_mut().iter_mut().zip(g.data()).for_each(|(s, v)| *s += v),
                        None => {
                            acc.insert(name, g);
                        }
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in acc.values_mut() {
                g.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
            self.optimizer.step(&mut self.model.params, &acc)?;
        }

        self.epoch += 1;
        let n = train.len() as f64;
        let (val_min_ade, val_min_fde) = if val.is_empty() {
            (None, None)
        } else {
            let mut m = MetricAccumulator::default();
            for scene in val {
                let p = self.model.predict(scene)?;
                m.add_scene(&p.set, scene.future(), self.config.heads)?;
            }
            let row = m.finish("val", self.config.heads);
            (Some(row.min_ade), Some(row.min_fde))
        };
        let metrics = EpochMetrics {
            epoch: self.epoch,
            pred_loss: pred / n,
            imp_loss: imp / n,
            total_loss: total / n,
            val_min_ade,
            val_min_fde,
        };
        self.history.push(metrics.clone());
        Ok(metrics)
    }

    fn dump(&self, dir: &Path, batch: usize, scenes: &[Scene]) -> HarnessError {
        let path = dir.join(format!("nonfinite_epoch{:03}_batch{batch:04}.json", self.epoch + 1));
        if let Err(e) = scenes_to_json(scenes).map(|text| std::fs::write(&path, text)) {
            log::error!("could not write diagnostic dump {}: {e}", path.display());
        }
        HarnessError::NonFinite {
            epoch: self.epoch + 1,
            batch,
            dump: path,
        }
    }
}

/// CSV `epoch,pred_loss,imp_loss,total_loss,val_min_ade,val_min_fde`;
/// missing validation values are empty.
pub fn write_history_csv<W: Write>(out: W, history: &[EpochMetrics]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "pred_loss", "imp_loss", "total_loss", "val_min_ade", "val_min_fde"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for m in history {
        w.write_record([
            m.epoch.to_string(),
            m.pred_loss.to_string(),
            m.imp_loss.to_string(),
            m.total_loss.to_string(),
            opt(m.val_min_ade),
            opt(m.val_min_fde),
        ])?;
    }
    w.flush()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Latest checkpoint, `checkpoint.json` in the output directory.
    pub checkpoint: PathBuf,
    pub metrics_log: PathBuf,
    pub history: Vec<EpochMetrics>,
}

/// Trains until `config.epochs` epochs are complete, writing
/// `checkpoint_eNNN.json`, `checkpoint.json` and `metrics.csv` to `out`
/// after every epoch. With `resume`, training continues from that
/// checkpoint, whose config must match `config` apart from `epochs`.
pub fn train(config: &RunConfig, out: &Path, resume: Option<&Path>) -> Result<TrainOutcome> {
    config.validate()?;
    let train_scenes = load_source(&config.train_source(), config)?;
    let val_scenes = match config.val_source() {
        Some(src) => load_source(&src, config)?,
        None => Vec::new(),
    };
    let mut trainer = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let expected = RunConfig {
                epochs: ck.config.epochs,
                ..config.clone()
            };
            if ck.config != expected {
                return Err(HarnessError::Input(format!(
                    "{} was written with a different configuration",
                    path.display()
                )));
            }
            let mut t = Trainer::from_checkpoint(&ck)?;
            t.config.epochs = config.epochs;
            t
        }
        None => Trainer::new(config.clone())?,
    };

    std::fs::create_dir_all(out).map_err(HarnessError::io(out))?;
    let latest = out.join("checkpoint.json");
    let metrics_log = out.join("metrics.csv");
    let write_log = |history: &[EpochMetrics]| -> Result<()> {
        let file = std::fs::File::create(&metrics_log).map_err(HarnessError::io(&metrics_log))?;
        write_history_csv(file, history).map_err(HarnessError::io(&metrics_log))
    };

    log::info!(
        "training on {} scenes ({} validation), {} parameters",
        train_scenes.len(),
        val_scenes.len(),
        trainer.model.params.numel()
    );
    while trainer.epoch < config.epochs {
        let m = trainer.run_epoch(&train_scenes, &val_scenes, out)?;
        log::info!(
            "epoch {}: pred {:.5} imp {:.5} total {:.5} val minADE {:?} minFDE {:?}",
            m.epoch,
            m.pred_loss,
            m.imp_loss,
            m.total_loss,
            m.val_min_ade,
            m.val_min_fde
        );
        let ck = trainer.checkpoint();
        ck.save(out.join(format!("checkpoint_e{:03}.json", m.epoch)))?;
        ck.save(&latest)?;
        write_log(trainer.history())?;
    }
    trainer.checkpoint().save(&latest)?;
    write_log(trainer.history())?;
    Ok(TrainOutcome {
        checkpoint: latest,
        metrics_log,
        history: trainer.history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        RunConfig {
            hidden_dim: 4,
            virtual_count: 2,
            heads: 2,
            epochs: 2,
            batch_size: 3,
            synthetic_agents: 3,
            synthetic_train_scenes: 5,
            synthetic_val_scenes: 2,
            ..RunConfig::default()
        }
    }

    #[test]
    fn zero_epochs_writes_initial_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { epochs: 0, ..tiny() };
        let out = train(&cfg, dir.path(), None).unwrap();
        assert!(out.history.is_empty());
        let ck = Checkpoint::load(&out.checkpoint).unwrap();
        assert_eq!(ck.epoch, 0);
        assert_eq!(ck.params.step(), 0);
        assert_eq!(ck.model().unwrap(), *Trainer::new(cfg).unwrap().model());
    }

    #[test]
    fn history_and_checkpoints_per_epoch() {
        let dir = tempfile::tempdir().unwrap();
        let out = train(&tiny(), dir.path(), None).unwrap();
        assert_eq!(out.history.len(), 2);
        assert!(dir.path().join("checkpoint_e001.json").exists());
        assert!(dir.path().join("checkpoint_e002.json").exists());
        let log = std::fs::read_to_string(&out.metrics_log).unwrap();
        assert_eq!(log.lines().count(), 3);
        assert!(out.history.iter().all(|m| m.val_min_ade.is_some()));
        // 5 scenes in batches of 3 is two steps per epoch
        assert_eq!(Checkpoint::load(&out.checkpoint).unwrap().params.step(), 4);
    }

    #[test]
    fn resume_with_changed_config_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let out = train(&RunConfig { epochs: 1, ..tiny() }, dir.path(), None).unwrap();
        let changed = RunConfig { learning_rate: 0.5, ..tiny() };
        let err = train(&changed, dir.path(), Some(&out.checkpoint)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
