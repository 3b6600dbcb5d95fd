use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::{DataError, Point, Result, Scene};

/// Loads a whitespace-separated `frame_id agent_id x y` file and cuts it
/// into sliding windows of `t_obs + t_pred` frames.
pub fn load_trajectory_file(
    path: impl AsRef<Path>,
    t_obs: usize,
    t_pred: usize,
    stride: usize,
) -> Result<Vec<Scene>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trajectories(&text, t_obs, t_pred, stride)
}

struct Observation {
    line: usize,
    frame: f64,
    agent: String,
    pos: Point,
}

fn parse_line(line_no: usize, line: &str) -> Result<Option<Observation>> {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(None);
    }
    let tokens: Vec<&str> = trimmed.split_whitespace().collect();
    if tokens.len() != 4 {
        return Err(DataError::Parse {
            line: line_no,
            message: format!("expected 4 fields `frame_id agent_id x y`, found {}", tokens.len()),
        });
    }
    let num = |idx: usize, what: &str| -> Result<f64> {
        tokens[idx]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| DataError::Parse {
                line: line_no,
                message: format!("invalid {what} `{}`", tokens[idx]),
            })
    };
    Ok(Some(Observation {
        line: line_no,
        frame: num(0, "frame id")?,
        agent: canonical_id(tokens[1]),
        pos: [num(2, "x")?, num(3, "y")?],
    }))
}

/// `"3.0"` and `"3"` name the same agent.
fn canonical_id(token: &str) -> String {
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 => format!("{}", v as i64),
        _ => token.to_string(),
    }
}

/// Parses trajectory text; see [`load_trajectory_file`].
///
/// Frame ids are mapped onto a regular grid whose spacing is the smallest
/// gap between distinct ids. An agent joins a window only if it has a
/// position at every grid frame of that window; windows left with no
/// agents are dropped.
pub fn parse_trajectories(text: &str, t_obs: usize, t_pred: usize, stride: usize) -> Result<Vec<Scene>> {
    if t_obs < 2 {
        return Err(DataError::InvalidArgument(format!("t_obs must be >= 2, got {t_obs}")));
    }
    if t_pred == 0 || stride == 0 {
        return Err(DataError::InvalidArgument("t_pred and stride must be positive".into()));
    }

    let mut obs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(o) = parse_line(i + 1, line)? {
            obs.push(o);
        }
    }
    if obs.is_empty() {
        return Err(DataError::EmptyDataset);
    }

    let mut frames: Vec<f64> = obs.iter().map(|o| o.frame).collect();
    frames.sort_by(f64::total_cmp);
    frames.dedup();
    let first = frames[0];
    let interval = frames
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let interval = if interval.is_finite() { interval } else { 1.0 };
    let grid = |frame: f64| ((frame - first) / interval).round() as usize;
    let n_frames = grid(*frames.last().expect("nonempty")) + 1;

    // agents in order of first appearance
    let mut order: Vec<String> = Vec::new();
    let mut tracks: HashMap<String, BTreeMap<usize, Point>> = HashMap::new();
    for o in &obs {
        let track = tracks.entry(o.agent.clone()).or_insert_with(|| {
            order.push(o.agent.clone());
            BTreeMap::new()
        });
        if track.insert(grid(o.frame), o.pos).is_some() {
            return Err(DataError::Parse {
                line: o.line,
                message: format!("duplicate observation of agent {} at frame {}", o.agent, o.frame),
            });
        }
    }

    let window = t_obs + t_pred;
    let mut scenes = Vec::new();
    let mut start = 0;
    while start + window <= n_frames {
        let mut observed = Vec::new();
        let mut future = Vec::new();
        let mut ids = Vec::new();
        for agent in &order {
            let track = &tracks[agent];
            let span: Option<Vec<Point>> = (start..start + window).map(|f| track.get(&f).copied()).collect();
            if let Some(span) = span {
                observed.push(span[..t_obs].to_vec());
                future.push(span[t_obs..].to_vec());
                ids.push(agent.clone());
            }
        }
        if !ids.is_empty() {
            let origin = first + (start + t_obs - 1) as f64 * interval;
            scenes.push(Scene::new(observed, future, ids, origin)?);
        }
        start += stride;
    }
    if scenes.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    Ok(scenes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight_line_file(agents: usize, frames: usize, skip: Option<(usize, usize)>) -> String {
        let mut s = String::new();
        for f in 0..frames {
            for a in 0..agents {
                if skip == Some((a, f)) {
                    continue;
                }
                s.push_str(&format!("{}\t{}.0\t{:.3}\t{:.3}\n", f * 10, a + 1, f as f64 * 0.4, a as f64));
            }
        }
        s
    }

    #[test]
    fn single_agent_single_window() {
        let scenes = parse_trajectories(&straight_line_file(1, 20, None), 8, 12, 20).unwrap();
        assert_eq!(scenes.len(), 1);
        assert_eq!(scenes[0].n_agents(), 1);
        assert_eq!(scenes[0].agent_ids(), &["1".to_string()]);
        assert_eq!(scenes[0].frame_origin(), 70.0);
    }

    #[test]
    fn sliding_window_count() {
        // brute force: starts 0..=40-20 with stride 1
        let expected = (0..40).filter(|s| s + 20 <= 40).count();
        assert_eq!(expected, 21);
        let scenes = parse_trajectories(&straight_line_file(2, 40, None), 8, 12, 1).unwrap();
        assert_eq!(scenes.len(), expected);
        assert!(scenes.iter().all(|s| s.n_agents() == 2));
    }

    #[test]
    fn gap_excludes_agent_from_window() {
        let scenes = parse_trajectories(&straight_line_file(2, 20, Some((1, 9))), 8, 12, 20).unwrap();
        assert_eq!(scenes.len(), 1);
        assert_eq!(scenes[0].agent_ids(), &["1".to_string()]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "0 1 0.0 0.0\n10 1 0.4\n";
        match parse_trajectories(text, 2, 1, 1) {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = "0 1 abc 0.0\n";
        assert!(matches!(parse_trajectories(text, 2, 1, 1), Err(DataError::Parse { line: 1, .. })));
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(parse_trajectories("", 8, 12, 1), Err(DataError::EmptyDataset)));
        // too short for one window
        let short = straight_line_file(1, 10, None);
        assert!(matches!(parse_trajectories(&short, 8, 12, 1), Err(DataError::EmptyDataset)));
    }

    #[test]
    fn missing_global_frame_breaks_windows() {
        // grid frame 2 absent for everyone: windows starting at 0, 1, 2 contain it
        let text: String = straight_line_file(1, 25, None)
            .lines()
            .filter(|l| !l.starts_with("20\t"))
            .map(|l| format!("{l}\n"))
            .collect();
        let scenes = parse_trajectories(&text, 8, 12, 1).unwrap();
        assert_eq!(scenes.len(), 3);
    }
}
