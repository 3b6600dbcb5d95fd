use super::{Point, Scene};
use crate::tensor::Tensor;

/// Per-agent, per-frame `[x, y, r_x, r_y]`: absolute position followed by
/// the displacement from the previous frame (zero on the first frame).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    values: Vec<Vec<[f64; 4]>>,
}

impl FeatureTensor {
    pub fn values(&self) -> &[Vec<[f64; 4]>] {
        &self.values
    }

    pub fn n_agents(&self) -> usize {
        self.values.len()
    }

    pub fn t_obs(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Flattened `N x (T_obs * 4)` matrix, one agent per row.
    pub fn to_matrix(&self) -> Tensor {
        let data: Vec<f64> = self.values.iter().flatten().flatten().copied().collect();
        Tensor::new(vec![self.n_agents(), self.t_obs() * 4], data).expect("rectangular features")
    }
}

pub fn build_input_features(scene: &Scene) -> FeatureTensor {
    let values = scene
        .observed()
        .iter()
        .map(|track| {
            track
                .iter()
                .enumerate()
                .map(|(t, p)| {
                    let r = if t == 0 {
                        [0.0, 0.0]
                    } else {
                        [p[0] - track[t - 1][0], p[1] - track[t - 1][1]]
                    };
                    [p[0], p[1], r[0], r[1]]
                })
                .collect()
        })
        .collect();
    FeatureTensor { values }
}

/// Translation applied by [`normalize_scene`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    /// Mean last-observed position of the original scene.
    pub origin: Point,
}

impl Transform {
    pub fn identity() -> Self {
        Self { origin: [0.0, 0.0] }
    }

    /// Maps a normalized-frame point back to the original frame.
    pub fn restore_point(&self, p: Point) -> Point {
        [p[0] + self.origin[0], p[1] + self.origin[1]]
    }

    pub fn invert(&self, scene: &Scene) -> Scene {
        scene.translated(self.origin)
    }
}

/// Translates the scene so that the mean last-observed position sits at
/// the origin.
pub fn normalize_scene(scene: &Scene) -> (Scene, Transform) {
    let n = scene.n_agents() as f64;
    let mut origin = [0.0, 0.0];
    for i in 0..scene.n_agents() {
        let p = scene.last_observed(i);
        origin[0] += p[0];
        origin[1] += p[1];
    }
    origin[0] /= n;
    origin[1] /= n;
    let normalized = scene.translated([-origin[0], -origin[1]]);
    (normalized, Transform { origin })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(track: Vec<Point>) -> Scene {
        Scene::new(vec![track], vec![vec![[0.0, 0.0]]], vec!["a".into()], 0.0).unwrap()
    }

    #[test]
    fn stationary_agent_has_zero_displacement() {
        let f = build_input_features(&single(vec![[2.0, 3.0]; 5]));
        assert!(f.values()[0].iter().all(|row| *row == [2.0, 3.0, 0.0, 0.0]));
    }

    #[test]
    fn hand_differences() {
        let f = build_input_features(&single(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]));
        assert_eq!(
            f.values()[0],
            vec![[0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 1.0, 0.0], [2.0, 0.0, 1.0, 0.0]]
        );
        let m = f.to_matrix();
        assert_eq!(m.shape(), &[1, 12]);
    }

    #[test]
    fn normalize_single_constant_agent() {
        let s = Scene::new(
            vec![vec![[5.0, 5.0]; 3]],
            vec![vec![[5.0, 5.0]; 2]],
            vec!["a".into()],
            0.0,
        )
        .unwrap();
        let (n, tf) = normalize_scene(&s);
        assert_eq!(tf.origin, [5.0, 5.0]);
        assert!(n.observed()[0].iter().chain(&n.future()[0]).all(|p| *p == [0.0, 0.0]));
        assert_eq!(tf.invert(&n), s);
    }

    #[test]
    fn centered_scene_is_unchanged() {
        let s = Scene::new(
            vec![vec![[0.0, 1.0], [-1.0, 0.0]], vec![[1.0, 1.0], [1.0, 0.0]]],
            vec![vec![[3.0, 3.0]], vec![[-2.0, 0.5]]],
            vec!["a".into(), "b".into()],
            0.0,
        )
        .unwrap();
        let (n, tf) = normalize_scene(&s);
        assert_eq!(tf, Transform::identity());
        assert_eq!(n, s);
    }
}
