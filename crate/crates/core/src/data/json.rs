use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, Point, Result, Scene};

#[derive(Serialize, Deserialize)]
struct AgentRecord {
    id: String,
    observed: Vec<Point>,
    future: Vec<Point>,
}

#[derive(Serialize, Deserialize)]
struct SceneRecord {
    agents: Vec<AgentRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frame_origin: Option<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SceneFile {
    Many(Vec<SceneRecord>),
    One(SceneRecord),
}

impl From<&Scene> for SceneRecord {
    fn from(s: &Scene) -> Self {
        let agents = (0..s.n_agents())
            .map(|i| AgentRecord {
                id: s.agent_ids()[i].clone(),
                observed: s.observed()[i].clone(),
                future: s.future()[i].clone(),
            })
            .collect();
        SceneRecord {
            agents,
            frame_origin: Some(s.frame_origin()),
        }
    }
}

impl TryFrom<SceneRecord> for Scene {
    type Error = DataError;

    fn try_from(r: SceneRecord) -> Result<Self> {
        let mut observed = Vec::with_capacity(r.agents.len());
        let mut future = Vec::with_capacity(r.agents.len());
        let mut ids = Vec::with_capacity(r.agents.len());
        for a in r.agents {
            observed.push(a.observed);
            future.push(a.future);
            ids.push(a.id);
        }
        Scene::new(observed, future, ids, r.frame_origin.unwrap_or(0.0))
    }
}

/// Serializes scenes as a JSON array of `{agents: [{id, observed, future}]}`.
pub fn scenes_to_json(scenes: &[Scene]) -> Result<String> {
    let records: Vec<SceneRecord> = scenes.iter().map(SceneRecord::from).collect();
    Ok(serde_json::to_string_pretty(&records)?)
}

/// Accepts either a single scene object or an array of them.
pub fn scenes_from_json(text: &str) -> Result<Vec<Scene>> {
    let records = match serde_json::from_str::<SceneFile>(text)? {
        SceneFile::Many(v) => v,
        SceneFile::One(r) => vec![r],
    };
    let scenes = records.into_iter().map(Scene::try_from).collect::<Result<Vec<_>>>()?;
    if scenes.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    Ok(scenes)
}

pub fn write_scenes_json(path: impl AsRef<Path>, scenes: &[Scene]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, scenes_to_json(scenes)?).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_scenes_json(path: impl AsRef<Path>) -> Result<Vec<Scene>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    scenes_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_object_form() {
        let text = r#"{"agents":[{"id":"7","observed":[[0,0],[1,0]],"future":[[2,0]]}]}"#;
        let scenes = scenes_from_json(text).unwrap();
        assert_eq!(scenes.len(), 1);
        assert_eq!(scenes[0].agent_ids(), &["7".to_string()]);
        assert_eq!(scenes[0].future()[0], vec![[2.0, 0.0]]);
    }

    #[test]
    fn round_trip() {
        let s = Scene::new(
            vec![vec![[0.1, 0.2], [0.30000000000000004, 1e-17]]],
            vec![vec![[1.0 / 3.0, -2.5]]],
            vec!["a".into()],
            42.0,
        )
        .unwrap();
        let back = scenes_from_json(&scenes_to_json(std::slice::from_ref(&s)).unwrap()).unwrap();
        assert_eq!(back, vec![s]);
    }

    #[test]
    fn invalid_scene_rejected() {
        let text = r#"[{"agents":[{"id":"1","observed":[[0,0]],"future":[[2,0]]}]}]"#;
        assert!(matches!(scenes_from_json(text), Err(DataError::InvalidScene(_))));
        assert!(matches!(scenes_from_json("[]"), Err(DataError::EmptyDataset)));
    }
}
