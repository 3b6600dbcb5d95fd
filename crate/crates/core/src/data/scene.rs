use super::{DataError, Result};

/// 2-D position in meters (or dataset-native units).
pub type Point = [f64; 2];

/// One prediction instance: `N` agents with `t_obs` observed and `t_pred`
/// future positions each.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    observed: Vec<Vec<Point>>,
    future: Vec<Vec<Point>>,
    agent_ids: Vec<String>,
    frame_origin: f64,
}

impl Scene {
    pub fn new(
        observed: Vec<Vec<Point>>,
        future: Vec<Vec<Point>>,
        agent_ids: Vec<String>,
        frame_origin: f64,
    ) -> Result<Self> {
        let n = observed.len();
        if n == 0 {
            return Err(DataError::InvalidScene("scene has no agents".into()));
        }
        if future.len() != n || agent_ids.len() != n {
            return Err(DataError::InvalidScene(format!(
                "{n} observed tracks but {} futures and {} ids",
                future.len(),
                agent_ids.len()
            )));
        }
        let t_obs = observed[0].len();
        let t_pred = future[0].len();
        if t_obs < 2 {
            return Err(DataError::InvalidScene(format!(
                "need at least 2 observed frames, got {t_obs}"
            )));
        }
        for (i, (o, f)) in observed.iter().zip(&future).enumerate() {
            if o.len() != t_obs || f.len() != t_pred {
                return Err(DataError::InvalidScene(format!(
                    "agent {i} has {}+{} frames, expected {t_obs}+{t_pred}",
                    o.len(),
                    f.len()
                )));
            }
            if o.iter().chain(f).flatten().any(|v| !v.is_finite()) {
                return Err(DataError::InvalidScene(format!("agent {i} has non-finite positions")));
            }
        }
        Ok(Self {
            observed,
            future,
            agent_ids,
            frame_origin,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.observed.len()
    }

    pub fn t_obs(&self) -> usize {
        self.observed[0].len()
    }

    pub fn t_pred(&self) -> usize {
        self.future[0].len()
    }

    pub fn observed(&self) -> &[Vec<Point>] {
        &self.observed
    }

    pub fn future(&self) -> &[Vec<Point>] {
        &self.future
    }

    pub fn agent_ids(&self) -> &[String] {
        &self.agent_ids
    }

    pub fn frame_origin(&self) -> f64 {
        self.frame_origin
    }

    pub fn last_observed(&self, agent: usize) -> Point {
        *self.observed[agent].last().expect("t_obs >= 2")
    }

    /// Displacement over the last observed step.
    pub fn last_displacement(&self, agent: usize) -> Point {
        let o = &self.observed[agent];
        let (a, b) = (o[o.len() - 2], o[o.len() - 1]);
        [b[0] - a[0], b[1] - a[1]]
    }

    /// Copy of the scene with every position shifted by `offset`.
    pub fn translated(&self, offset: Point) -> Self {
        let shift = |tracks: &[Vec<Point>]| -> Vec<Vec<Point>> {
            tracks
                .iter()
                .map(|t| t.iter().map(|p| [p[0] + offset[0], p[1] + offset[1]]).collect())
                .collect()
        };
        Self {
            observed: shift(&self.observed),
            future: shift(&self.future),
            agent_ids: self.agent_ids.clone(),
            frame_origin: self.frame_origin,
        }
    }

    /// Copy of the scene with agents reordered so that agent `i` of the
    /// result is agent `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            observed: order.iter().map(|&i| self.observed[i].clone()).collect(),
            future: order.iter().map(|&i| self.future[i].clone()).collect(),
            agent_ids: order.iter().map(|&i| self.agent_ids[i].clone()).collect(),
            frame_origin: self.frame_origin,
        }
    }
}
