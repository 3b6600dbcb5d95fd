use std::io::Write;
use std::path::{Path, PathBuf};

use super::{Checkpoint, DataSource, HarnessError, Result, RunConfig};
use crate::data::{generate, load_trajectory_file, read_scenes_json, Scene};
use crate::graph::{resistance_report, write_resistance_csv, InteractionGraph, ResistanceRow};
use crate::model::Model;
use crate::predictor::{constant_velocity, MetricAccumulator, MetricsRow};
use crate::router::{HIGH_ORDER, ONE_HOP};

/// Reads scenes from a `.json` scene file or a `frame agent x y` text file.
/// Scenes must have exactly `t_obs + t_pred` frames.
pub fn load_scenes(path: &Path, t_obs: usize, t_pred: usize, stride: usize) -> Result<Vec<Scene>> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let scenes = if is_json {
        read_scenes_json(path)?
    } else {
        load_trajectory_file(path, t_obs, t_pred, stride)?
    };
    if scenes.is_empty() {
        return Err(HarnessError::Input(format!("{}: no scenes", path.display())));
    }
    if let Some(s) = scenes.iter().find(|s| s.t_obs() != t_obs || s.t_pred() != t_pred) {
        return Err(HarnessError::Input(format!(
            "{}: scene with {}+{} frames, expected {t_obs}+{t_pred}",
            path.display(),
            s.t_obs(),
            s.t_pred()
        )));
    }
    Ok(scenes)
}

pub(crate) fn load_source(source: &DataSource, config: &RunConfig) -> Result<Vec<Scene>> {
    match source {
        DataSource::Synthetic(spec) => Ok(generate(spec)?),
        DataSource::Files(paths) => {
            let mut all = Vec::new();
            for p in paths {
                all.extend(load_scenes(p, config.t_obs, config.t_pred, config.stride)?);
            }
            Ok(all)
        }
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| "data".to_string(), |s| s.to_string_lossy().into_owned())
}

/// Noise-free minADE/minFDE over the first `k` heads of a checkpoint.
pub fn evaluate(checkpoint: &Path, data: &Path, k: usize) -> Result<MetricsRow> {
    let ck = Checkpoint::load(checkpoint)?;
    let model = ck.model()?;
    if k == 0 || k > model.config.heads {
        return Err(HarnessError::Input(format!(
            "k = {k} must lie in 1..={}",
            model.config.heads
        )));
    }
    let scenes = load_scenes(data, ck.config.t_obs, ck.config.t_pred, ck.config.stride)?;
    evaluate_scenes(&model, &scenes, &dataset_name(data), k)
}

pub(crate) fn evaluate_scenes(model: &Model, scenes: &[Scene], dataset: &str, k: usize) -> Result<MetricsRow> {
    let mut acc = MetricAccumulator::default();
    for scene in scenes {
        let p = model.predict(scene)?;
        acc.add_scene(&p.set, scene.future(), k)?;
    }
    Ok(acc.finish(dataset, k))
}

/// Constant-velocity extrapolation scored with the same metric pipeline.
pub fn baseline(data: &Path, t_obs: usize, t_pred: usize, stride: usize) -> Result<MetricsRow> {
    let scenes = load_scenes(data, t_obs, t_pred, stride)?;
    let mut acc = MetricAccumulator::default();
    for scene in &scenes {
        acc.add_scene(&constant_velocity(scene), scene.future(), 1)?;
    }
    Ok(acc.finish(&dataset_name(data), 1))
}

/// Resistance rows of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneResistanceRows {
    pub scene_id: String,
    pub rows: Vec<ResistanceRow>,
}

/// The 5-node chain with a single hub.
pub fn demo_chain_report() -> Result<SceneResistanceRows> {
    let rows = resistance_report(&InteractionGraph::chain(5), 1).map_err(|e| HarnessError::Input(e.to_string()))?;
    Ok(SceneResistanceRows {
        scene_id: "chain5".into(),
        rows,
    })
}

/// Per scene, resistances over the kNN graph of `model`'s initial
/// embeddings before and after adding `n_virtual` hubs.
pub fn analyze_graph(scenes: &[Scene], model: &Model, n_virtual: usize) -> Result<Vec<SceneResistanceRows>> {
    scenes
        .iter()
        .enumerate()
        .map(|(idx, scene)| {
            let graph = model.interaction_graph(scene)?;
            let rows = resistance_report(&graph, n_virtual).map_err(|e| HarnessError::Input(e.to_string()))?;
            Ok(SceneResistanceRows {
                scene_id: idx.to_string(),
                rows,
            })
        })
        .collect()
}

pub fn write_analysis_csv<W: Write>(mut out: W, reports: &[SceneResistanceRows]) -> std::io::Result<()> {
    if reports.is_empty() || reports.iter().all(|r| r.rows.is_empty()) {
        return writeln!(out, "scene_id,i,j,r_before,r_after,reduction_pct");
    }
    let mut header = true;
    for r in reports.iter().filter(|r| !r.rows.is_empty()) {
        write_resistance_csv(&mut out, &r.rows, Some(&r.scene_id), header)?;
        header = false;
    }
    Ok(())
}

/// One agent's routing decision.
#[derive(Debug, Clone, PartialEq)]
pub struct GateRow {
    pub scene_id: String,
    pub agent_id: String,
    pub g_onehop: f64,
    pub g_high: f64,
    pub active_set: String,
}

/// Evaluation-mode gate probabilities of every agent in `data`.
pub fn export_gates(checkpoint: &Path, data: &Path) -> Result<Vec<GateRow>> {
    let ck = Checkpoint::load(checkpoint)?;
    let model = ck.model()?;
    let scenes = load_scenes(data, ck.config.t_obs, ck.config.t_pred, ck.config.stride)?;
    let mut rows = Vec::new();
    for (idx, scene) in scenes.iter().enumerate() {
        let p = model.predict(scene)?;
        for (agent, g) in scene.agent_ids().iter().zip(&p.gates) {
            rows.push(GateRow {
                scene_id: idx.to_string(),
                agent_id: agent.clone(),
                g_onehop: g.probs[ONE_HOP],
                g_high: g.probs[HIGH_ORDER],
                active_set: g.active_label(),
            });
        }
    }
    Ok(rows)
}

/// CSV `scene_id,agent_id,g_onehop,g_high,active_set`.
pub fn write_gates_csv<W: Write>(out: W, rows: &[GateRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scene_id", "agent_id", "g_onehop", "g_high", "active_set"])?;
    for r in rows {
        w.write_record([
            r.scene_id.clone(),
            r.agent_id.clone(),
            r.g_onehop.to_string(),
            r.g_high.to_string(),
            r.active_set.clone(),
        ])?;
    }
    w.flush()
}

/// Trains on all files but one and evaluates on the held-out file, for
/// every file in turn. Returns one row per held-out file followed by an
/// `average` row over the subsets. Runs live in `out/<file stem>/`.
pub fn leave_one_out(config: &RunConfig, files: &[PathBuf], out: &Path, k: usize) -> Result<Vec<MetricsRow>> {
    if files.len() < 2 {
        return Err(HarnessError::Input("leave-one-out needs at least two data files".into()));
    }
    if k == 0 || k > config.heads {
        return Err(HarnessError::Input(format!("k = {k} must lie in 1..={}", config.heads)));
    }
    let mut rows = Vec::with_capacity(files.len() + 1);
    for (i, held_out) in files.iter().enumerate() {
        let run = RunConfig {
            train_data: files.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, p)| p.clone()).collect(),
            val_data: Vec::new(),
            ..config.clone()
        };
        let name = dataset_name(held_out);
        log::info!("leave-one-out: holding out {name}");
        let outcome = super::train(&run, &out.join(&name), None)?;
        rows.push(evaluate(&outcome.checkpoint, held_out, k)?);
    }
    let n = rows.len() as f64;
    rows.push(MetricsRow {
        dataset: "average".into(),
        scene_count: rows.iter().map(|r| r.scene_count).sum(),
        min_ade: rows.iter().map(|r| r.min_ade).sum::<f64>() / n,
        min_fde: rows.iter().map(|r| r.min_fde).sum::<f64>() / n,
        k,
    });
    Ok(rows)
}
