//! The full predictor: encoders, two experts, router and decoder.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{build_input_features, normalize_scene, Scene, Transform};
use crate::encoders::{
    edge_features, edge_geometry, embed_nodes, init_edge_encoder, init_node_encoder, init_one_hop, init_relational,
    init_virtual_graph, init_virtual_nodes, one_hop_expert, real_to_virtual, relational_encode, virtual_to_real,
    VirtualNodeBank,
};
use crate::graph::{knn_graph, InteractionGraph};
use crate::nn::Aggregator;
use crate::predictor::{decode, flatten_future, init_decoder, min_l2_loss, total_loss, LossBreakdown, PredictionSet};
use crate::router::{
    distributions, fuse, gate, importance_loss, init_router, renormalize_on_tape, GateDistribution, RouterParams,
};
use crate::tensor::{ParamStore, Result, RngStream, Tape, Tensor, TensorError, Var};

/// Epsilon of every layer normalization inside the model.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub t_obs: usize,
    pub t_pred: usize,
    pub hidden_dim: usize,
    pub virtual_count: usize,
    pub heads: usize,
    pub k_neighbors: usize,
    pub top_p: f64,
    pub lambda: f64,
    pub noise_enabled: bool,
    pub perturb_std: f64,
    pub aggregator: Aggregator,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            t_obs: 8,
            t_pred: 12,
            hidden_dim: 64,
            virtual_count: 4,
            heads: 20,
            k_neighbors: 4,
            top_p: 0.7,
            lambda: 0.01,
            noise_enabled: true,
            perturb_std: 0.0,
            aggregator: Aggregator::Attention,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(TensorError::Contract(msg));
        for (name, v) in [
            ("t_pred", self.t_pred),
            ("hidden_dim", self.hidden_dim),
            ("virtual_count", self.virtual_count),
            ("heads", self.heads),
            ("k_neighbors", self.k_neighbors),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.t_obs < 2 {
            return fail(format!("t_obs must be at least 2, got {}", self.t_obs));
        }
        if self.virtual_count > self.hidden_dim {
            return fail(format!(
                "virtual_count {} exceeds hidden_dim {}",
                self.virtual_count, self.hidden_dim
            ));
        }
        RouterParams::new(self.top_p, self.noise_enabled)?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.perturb_std >= 0.0 && self.perturb_std.is_finite()) {
            return fail(format!("perturb_std must be non-negative, got {}", self.perturb_std));
        }
        Ok(())
    }

    fn bank(&self) -> VirtualNodeBank {
        VirtualNodeBank {
            n_virtual: self.virtual_count,
            perturb_std: self.perturb_std,
        }
    }

    fn router(&self) -> RouterParams {
        RouterParams {
            top_p: self.top_p,
            noise_enabled: self.noise_enabled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Gating noise and hub perturbation are drawn when enabled.
    Train,
    /// Fully deterministic.
    Eval,
}

/// Tape handles and side values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub transform: Transform,
    /// The input scene translated into the model frame.
    pub normalized: Scene,
    pub graph: InteractionGraph,
    pub base: Var,
    pub pair: Var,
    pub one_hop: Var,
    pub high: Var,
    /// `N x 2` routing probabilities.
    pub probs: Var,
    pub gates: Vec<GateDistribution>,
    /// `N x 2` renormalized weights over the active sets.
    pub weights: Var,
    pub routed: Var,
    /// One `N x 2T` handle per head, positions in the model frame.
    pub heads: Vec<Var>,
}

/// Model output for one scene in the scene's own frame.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub set: PredictionSet,
    pub gates: Vec<GateDistribution>,
    pub graph: InteractionGraph,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    /// Freshly initialized parameters drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.hidden_dim;
        let mut rng = RngStream::new(seed);
        let mut params = ParamStore::default();
        init_node_encoder(&mut params, &mut rng, config.t_obs, d)?;
        init_relational(&mut params, &mut rng, d)?;
        init_edge_encoder(&mut params, &mut rng, d)?;
        init_one_hop(&mut params, &mut rng, d, d)?;
        init_virtual_graph(&mut params, &mut rng, &config.bank(), d)?;
        init_router(&mut params, &mut rng, d)?;
        init_decoder(&mut params, &mut rng, d, config.heads, config.t_pred)?;
        Ok(Self { config, params })
    }

    fn check_scene(&self, scene: &Scene) -> Result<()> {
        if scene.t_obs() != self.config.t_obs || scene.t_pred() != self.config.t_pred {
            return Err(TensorError::Contract(format!(
                "scene has {}+{} frames, model expects {}+{}",
                scene.t_obs(),
                scene.t_pred(),
                self.config.t_obs,
                self.config.t_pred
            )));
        }
        Ok(())
    }

    /// Records a forward pass. `rng` is drawn from only in [`Mode::Train`].
    pub fn forward(&self, tape: &mut Tape, scene: &Scene, mode: Mode, rng: &mut RngStream) -> Result<ForwardPass> {
        self.check_scene(scene)?;
        let cfg = &self.config;
        let store = &self.params;
        let train = mode == Mode::Train;
        let (normalized, transform) = normalize_scene(scene);

        let base = embed_nodes(tape, store, &build_input_features(&normalized))?;
        let graph = knn_graph(tape.value(base), cfg.k_neighbors);
        let pair = relational_encode(tape, store, base, graph.mask(), LAYER_NORM_EPS)?;

        let geometry = edge_geometry(&normalized, &graph);
        let edges = edge_features(tape, store, &geometry)?;
        let one_hop = one_hop_expert(tape, store, base, &graph, edges)?;

        let hubs = init_virtual_nodes(tape, store, &cfg.bank(), rng, train)?;
        let hubs = real_to_virtual(tape, store, hubs, base, cfg.aggregator)?;
        let high = virtual_to_real(tape, store, base, hubs, cfg.aggregator, LAYER_NORM_EPS)?;

        let probs = gate(tape, store, base, &cfg.router(), rng, train)?;
        let gates = distributions(tape.value(probs), cfg.top_p);
        let weights = renormalize_on_tape(tape, probs, &gates)?;
        let routed = fuse(tape, weights, one_hop, high)?;

        let anchors: Vec<_> = (0..normalized.n_agents()).map(|i| normalized.last_observed(i)).collect();
        let heads = decode(tape, store, [base, pair, routed], &anchors, cfg.heads, cfg.t_pred)?;
        Ok(ForwardPass {
            transform,
            normalized,
            graph,
            base,
            pair,
            one_hop,
            high,
            probs,
            gates,
            weights,
            routed,
            heads,
        })
    }

    /// `L_pred + lambda * L_imp` for a recorded forward pass.
    pub fn objective(&self, tape: &mut Tape, pass: &ForwardPass) -> Result<(Var, LossBreakdown)> {
        let future = flatten_future(pass.normalized.future())?;
        let (pred, _) = min_l2_loss(tape, &pass.heads, &future)?;
        let imp = importance_loss(tape, pass.probs)?;
        total_loss(tape, pred, imp, self.config.lambda)
    }

    /// Loss and a gradient for every parameter; parameters the pass did not
    /// touch get zeros.
    pub fn loss_and_gradients(
        &self,
        scene: &Scene,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<(LossBreakdown, BTreeMap<String, Tensor>)> {
        let mut tape = Tape::new();
        let pass = self.forward(&mut tape, scene, mode, rng)?;
        let (loss, breakdown) = self.objective(&mut tape, &pass)?;
        let mut grads = tape.backward(loss)?.into_params();
        for (name, t) in self.params.iter() {
            grads.entry(name.to_string()).or_insert_with(|| Tensor::zeros(t.shape()));
        }
        Ok((breakdown, grads))
    }

    /// kNN graph over the scene's base embeddings, as used by the forward
    /// pass.
    pub fn interaction_graph(&self, scene: &Scene) -> Result<InteractionGraph> {
        self.check_scene(scene)?;
        let (normalized, _) = normalize_scene(scene);
        let mut tape = Tape::new();
        let base = embed_nodes(&mut tape, &self.params, &build_input_features(&normalized))?;
        Ok(knn_graph(tape.value(base), self.config.k_neighbors))
    }

    /// Deterministic prediction in the scene's original frame.
    pub fn predict(&self, scene: &Scene) -> Result<Prediction> {
        let mut tape = Tape::new();
        let mut unused = RngStream::new(0);
        let pass = self.forward(&mut tape, scene, Mode::Eval, &mut unused)?;
        let (_, loss) = self.objective(&mut tape, &pass)?;
        let heads: Vec<Tensor> = pass.heads.iter().map(|&h| tape.value(h).clone()).collect();
        Ok(Prediction {
            set: PredictionSet::from_heads(&heads, &pass.transform, scene.future())?,
            gates: pass.gates,
            graph: pass.graph,
            loss,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, Scenario, SyntheticSpec};

    fn small() -> ModelConfig {
        ModelConfig {
            hidden_dim: 8,
            virtual_count: 2,
            heads: 3,
            ..ModelConfig::default()
        }
    }

    fn scene(n: usize, seed: u64) -> Scene {
        generate(&SyntheticSpec::new(Scenario::Mixed, n, 1, seed)).unwrap().remove(0)
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            ModelConfig { top_p: 1.0, ..small() },
            ModelConfig { heads: 0, ..small() },
            ModelConfig { virtual_count: 9, ..small() },
            ModelConfig { t_obs: 1, ..small() },
            ModelConfig { lambda: -1.0, ..small() },
        ];
        for cfg in bad {
            assert!(Model::new(cfg, 0).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn untrained_gates_are_uniform() {
        let model = Model::new(small(), 1).unwrap();
        let p = model.predict(&scene(4, 2)).unwrap();
        assert!(p.gates.iter().all(|g| g.probs == vec![0.5, 0.5]));
        assert_eq!(p.set.n_heads(), 3);
    }

    #[test]
    fn every_parameter_gets_a_finite_gradient() {
        let model = Model::new(small(), 3).unwrap();
        let (loss, grads) = model.loss_and_gradients(&scene(5, 4), Mode::Train, &mut RngStream::new(9)).unwrap();
        assert!(loss.total.is_finite());
        assert_eq!(grads.len(), model.params.len());
        assert!(grads.values().all(Tensor::all_finite));
    }

    #[test]
    fn single_stationary_agent_flows_through() {
        let obs = vec![vec![[2.0, 3.0]; 8]];
        let fut = vec![vec![[2.0, 3.0]; 12]];
        let s = Scene::new(obs, fut, vec!["0".into()], 0.0).unwrap();
        let model = Model::new(small(), 5).unwrap();
        let p = model.predict(&s).unwrap();
        assert!(p.loss.total.is_finite());
        assert!(p.graph.edges().is_empty());
        let (_, grads) = model.loss_and_gradients(&s, Mode::Train, &mut RngStream::new(1)).unwrap();
        assert!(grads.values().all(Tensor::all_finite));
    }

    #[test]
    fn mismatched_horizon_rejected() {
        let model = Model::new(ModelConfig { t_pred: 5, ..small() }, 0).unwrap();
        assert!(model.predict(&scene(3, 1)).is_err());
    }
}

