use std::f64::consts::{FRAC_PI_2, TAU};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DataError, Point, Result, Scene};
use crate::tensor::RngStream;

/// Motion pattern of a synthetic scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Straight lines at a fixed random velocity.
    ConstantVelocity,
    /// Two perpendicular groups converging on a common point while turning.
    Crossing,
    /// One leader on a gently curving path; followers replay the leader's
    /// displacement one frame later.
    GroupFollow,
    /// Cycles through the three scenarios above, one per scene.
    Mixed,
}

impl FromStr for Scenario {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant-velocity" => Ok(Scenario::ConstantVelocity),
            "crossing" => Ok(Scenario::Crossing),
            "group-follow" => Ok(Scenario::GroupFollow),
            "mixed" => Ok(Scenario::Mixed),
            other => Err(DataError::InvalidArgument(format!("unknown scenario `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub scenario: Scenario,
    pub n_agents: usize,
    /// Std of Gaussian observation noise added to every position.
    pub noise_std: f64,
    pub seed: u64,
    pub n_scenes: usize,
    pub t_obs: usize,
    pub t_pred: usize,
}

impl SyntheticSpec {
    pub fn new(scenario: Scenario, n_agents: usize, n_scenes: usize, seed: u64) -> Self {
        Self {
            scenario,
            n_agents,
            noise_std: 0.0,
            seed,
            n_scenes,
            t_obs: 8,
            t_pred: 12,
        }
    }
}

/// Generates scenes with a fresh stream seeded from `spec.seed`.
pub fn generate(spec: &SyntheticSpec) -> Result<Vec<Scene>> {
    generate_synthetic(spec, &mut RngStream::new(spec.seed))
}

pub fn generate_synthetic(spec: &SyntheticSpec, rng: &mut RngStream) -> Result<Vec<Scene>> {
    if spec.n_agents == 0 || spec.t_obs < 2 || spec.t_pred == 0 {
        return Err(DataError::InvalidArgument(format!(
            "need n_agents >= 1, t_obs >= 2, t_pred >= 1 (got {}, {}, {})",
            spec.n_agents, spec.t_obs, spec.t_pred
        )));
    }
    if !(spec.noise_std.is_finite() && spec.noise_std >= 0.0) {
        return Err(DataError::InvalidArgument(format!("bad noise_std {}", spec.noise_std)));
    }
    let frames = spec.t_obs + spec.t_pred;
    (0..spec.n_scenes)
        .map(|s| {
            let scenario = match spec.scenario {
                Scenario::Mixed => [
                    Scenario::ConstantVelocity,
                    Scenario::Crossing,
                    Scenario::GroupFollow,
                ][s % 3],
                other => other,
            };
            let mut tracks = match scenario {
                Scenario::ConstantVelocity => constant_velocity(spec.n_agents, frames, rng),
                Scenario::Crossing => crossing(spec.n_agents, frames, spec.t_obs, rng),
                Scenario::GroupFollow => group_follow(spec.n_agents, frames, rng),
                Scenario::Mixed => unreachable!("resolved above"),
            };
            if spec.noise_std > 0.0 {
                for p in tracks.iter_mut().flatten() {
                    p[0] += spec.noise_std * rng.normal();
                    p[1] += spec.noise_std * rng.normal();
                }
            }
            let observed = tracks.iter().map(|t| t[..spec.t_obs].to_vec()).collect();
            let future = tracks.iter().map(|t| t[spec.t_obs..].to_vec()).collect();
            let ids = (0..spec.n_agents).map(|i| i.to_string()).collect();
            Scene::new(observed, future, ids, (spec.t_obs - 1) as f64)
        })
        .collect()
}

fn heading(angle: f64) -> Point {
    [angle.cos(), angle.sin()]
}

fn constant_velocity(n: usize, frames: usize, rng: &mut RngStream) -> Vec<Vec<Point>> {
    (0..n)
        .map(|_| {
            let start = [rng.uniform_range(-4.0, 4.0), rng.uniform_range(-4.0, 4.0)];
            let speed = rng.uniform_range(0.2, 0.6);
            let dir = heading(rng.uniform_range(0.0, TAU));
            let v = [speed * dir[0], speed * dir[1]];
            (0..frames)
                .map(|t| [start[0] + t as f64 * v[0], start[1] + t as f64 * v[1]])
                .collect()
        })
        .collect()
}

fn crossing(n: usize, frames: usize, t_obs: usize, rng: &mut RngStream) -> Vec<Vec<Point>> {
    let base = rng.uniform_range(0.0, TAU);
    let first_group = n.div_ceil(2);
    (0..n)
        .map(|i| {
            let h0 = if i < first_group { base } else { base + FRAC_PI_2 };
            let speed = rng.uniform_range(0.25, 0.5);
            let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
            let turn = sign * rng.uniform_range(0.04, 0.12);
            let lateral = rng.uniform_range(-1.5, 1.5);
            let (dir, perp) = (heading(h0), heading(h0 + FRAC_PI_2));
            let back = speed * t_obs as f64;
            let mut p = [
                -back * dir[0] + lateral * perp[0],
                -back * dir[1] + lateral * perp[1],
            ];
            let mut track = Vec::with_capacity(frames);
            track.push(p);
            for t in 1..frames {
                let d = heading(h0 + turn * t as f64);
                p = [p[0] + speed * d[0], p[1] + speed * d[1]];
                track.push(p);
            }
            track
        })
        .collect()
}

fn group_follow(n: usize, frames: usize, rng: &mut RngStream) -> Vec<Vec<Point>> {
    let start = [rng.uniform_range(-3.0, 3.0), rng.uniform_range(-3.0, 3.0)];
    let speed = rng.uniform_range(0.25, 0.5);
    let h0 = rng.uniform_range(0.0, TAU);
    let turn = rng.uniform_range(-0.1, 0.1);
    // leader_disp[t] moves the leader into frame t; entry 0 is the step
    // that led into the first frame
    let leader_disp: Vec<Point> = (0..frames)
        .map(|t| {
            let d = heading(h0 + turn * t as f64);
            [speed * d[0], speed * d[1]]
        })
        .collect();

    let mut tracks = Vec::with_capacity(n);
    let mut leader = vec![start];
    for d in &leader_disp[1..] {
        let p = *leader.last().expect("nonempty");
        leader.push([p[0] + d[0], p[1] + d[1]]);
    }
    tracks.push(leader);

    let (dir, perp) = (heading(h0), heading(h0 + FRAC_PI_2));
    for j in 1..n {
        let behind = 0.8 * j as f64;
        let side = rng.uniform_range(-0.6, 0.6);
        let mut p = [
            start[0] - behind * dir[0] + side * perp[0],
            start[1] - behind * dir[1] + side * perp[1],
        ];
        let mut track = vec![p];
        for d in &leader_disp[..frames - 1] {
            p = [p[0] + d[0], p[1] + d[1]];
            track.push(p);
        }
        tracks.push(track);
    }
    tracks
}
