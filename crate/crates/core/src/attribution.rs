//! Individual causal effects of edges on a frozen classifier's prediction.
//!
//! All probabilities are clamped to `[ε, 1]` before taking logs, so every
//! attribution is finite. Logs are natural.
//!
//! For a target class `c` and the full-graph probability `p_full = p(c | G)`:
//!
//! * edge effect given earlier picks `S`:
//!   `A(e | S) = p_full · (ln p(c | S ∪ {e}) − ln p(c | S))`
//! * subgraph effect: `A(S) = p_full · (ln p(c | S) − ln p(c | ∅))`
//!
//! so the edge effects along any ordering of `S` telescope to `A(S)`.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::gnn::{argmax, ModelParams};
use crate::graph::{EdgeSet, Graph};

pub const DEFAULT_PROB_FLOOR: f64 = 1e-12;

/// How a step's reward is formed from the intervention outcome.
///
/// Every mode adds +1 when the grown subgraph is still classified as the
/// target class and −1 otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RewardMode {
    /// Edge causal effect plus the validity term.
    #[default]
    Mi,
    /// Validity term only.
    Binary,
    /// Drop in conditional cross-entropy, `ln p(c|S∪{e}) − ln p(c|S)`, plus
    /// the validity term. This mode and `Binary` are reconstructions; only the
    /// `Mi` form is fully pinned down by the method.
    Ce,
}

impl RewardMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RewardMode::Mi => "mi",
            RewardMode::Binary => "binary",
            RewardMode::Ce => "ce",
        }
    }
}

impl std::str::FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mi" => Ok(RewardMode::Mi),
            "binary" => Ok(RewardMode::Binary),
            "ce" => Ok(RewardMode::Ce),
            other => Err(Error::Validation(format!("unknown reward mode `{other}`"))),
        }
    }
}

/// Model output on one intervened subgraph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubgraphEval {
    /// Clamped probability of the target class.
    pub prob: f64,
    pub predicted_class: usize,
}

impl SubgraphEval {
    pub fn matches(&self, target_class: usize) -> bool {
        self.predicted_class == target_class
    }
}

/// A frozen model, one graph and the class being explained.
#[derive(Debug)]
pub struct AttributionContext<'a> {
    pub model: &'a ModelParams,
    pub graph: &'a Graph,
    pub target_class: usize,
    /// Clamped `p(target | G)`.
    pub p_full: f64,
    pub prob_floor: f64,
    forwards: AtomicUsize,
}

impl<'a> AttributionContext<'a> {
    /// Explains the model's own prediction on `graph`.
    pub fn new(model: &'a ModelParams, graph: &'a Graph) -> Result<Self> {
        let probs = model.forward(graph)?.probs;
        let target = argmax(probs.view());
        Self::with_target(model, graph, target, DEFAULT_PROB_FLOOR)
    }

    pub fn with_target(model: &'a ModelParams, graph: &'a Graph, target_class: usize, prob_floor: f64) -> Result<Self> {
        if target_class >= model.spec.num_classes {
            return Err(Error::OutOfRange {
                what: "target class",
                reason: format!("{target_class} >= {} classes", model.spec.num_classes),
            });
        }
        if !(prob_floor > 0.0 && prob_floor < 1.0) {
            return Err(Error::Validation(format!("probability floor {prob_floor} not in (0, 1)")));
        }
        let probs = model.forward(graph)?.probs;
        Ok(AttributionContext {
            model,
            graph,
            target_class,
            p_full: probs[target_class].clamp(prob_floor, 1.0),
            prob_floor,
            forwards: AtomicUsize::new(1),
        })
    }

    /// Number of model forward passes made through this context so far.
    pub fn forward_count(&self) -> usize {
        self.forwards.load(Ordering::Relaxed)
    }

    /// Runs the model on the subgraph keeping exactly `edges`.
    ///
    /// Edges are fed in ascending index order so the result depends only on
    /// the set, not on how it was built.
    pub fn evaluate_indices(&self, edges: &[usize]) -> Result<SubgraphEval> {
        let mut sorted = edges.to_vec();
        sorted.sort_unstable();
        let all = self.graph.edges();
        let pairs: Vec<(usize, usize)> = sorted.iter().map(|&i| all[i]).collect();
        self.forwards.fetch_add(1, Ordering::Relaxed);
        let probs = self.model.predict_proba(self.graph.node_features(), &pairs)?;
        Ok(SubgraphEval {
            prob: probs[self.target_class].clamp(self.prob_floor, 1.0),
            predicted_class: argmax(probs.view()),
        })
    }

    pub fn evaluate(&self, selected: &EdgeSet) -> Result<SubgraphEval> {
        selected.check_parent(self.graph)?;
        self.evaluate_indices(selected.as_slice())
    }

    /// Outcome of adding `edge` to `prev`.
    pub fn evaluate_with(&self, prev: &EdgeSet, edge: usize) -> Result<SubgraphEval> {
        self.check_action(prev, edge)?;
        let mut idx = prev.as_slice().to_vec();
        idx.push(edge);
        self.evaluate_indices(&idx)
    }

    /// Clamped `p(target | induce(G, selected))`.
    pub fn predict_prob(&self, selected: &EdgeSet) -> Result<f64> {
        Ok(self.evaluate(selected)?.prob)
    }

    /// Edge effect from the two clamped probabilities it compares.
    pub fn ice_from_probs(&self, p_prev: f64, p_next: f64) -> f64 {
        self.p_full * (p_next.ln() - p_prev.ln())
    }

    pub fn ice_edge(&self, prev: &EdgeSet, edge: usize) -> Result<f64> {
        let next = self.evaluate_with(prev, edge)?;
        let p_prev = self.predict_prob(prev)?;
        Ok(self.ice_from_probs(p_prev, next.prob))
    }

    /// Effect of the whole subgraph against the empty-graph control.
    pub fn ice_subgraph(&self, selected: &EdgeSet) -> Result<f64> {
        let p_sel = self.predict_prob(selected)?;
        let p_empty = self.evaluate_indices(&[])?.prob;
        Ok(self.ice_from_probs(p_empty, p_sel))
    }

    /// Reward for the transition `prev → prev ∪ {edge}` given its probabilities.
    pub fn reward_from(&self, p_prev: f64, next: &SubgraphEval, mode: RewardMode) -> f64 {
        let validity = if next.matches(self.target_class) { 1.0 } else { -1.0 };
        match mode {
            RewardMode::Mi => self.ice_from_probs(p_prev, next.prob) + validity,
            RewardMode::Binary => validity,
            RewardMode::Ce => (next.prob.ln() - p_prev.ln()) + validity,
        }
    }

    pub fn reward(&self, prev: &EdgeSet, edge: usize, mode: RewardMode) -> Result<f64> {
        let next = self.evaluate_with(prev, edge)?;
        let p_prev = self.predict_prob(prev)?;
        Ok(self.reward_from(p_prev, &next, mode))
    }

    pub(crate) fn check_action(&self, prev: &EdgeSet, edge: usize) -> Result<()> {
        prev.check_parent(self.graph)?;
        if edge >= self.graph.num_edges() {
            return Err(Error::InvalidEdgeSet {
                graph_id: self.graph.graph_id().to_string(),
                reason: format!("edge {edge} >= |E| = {}", self.graph.num_edges()),
            });
        }
        if prev.contains(edge) {
            return Err(Error::InvalidAction { edge });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::{ModelSpec, Readout};
    use ndarray::Array2;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> ModelParams {
        ModelParams::init(
            &ModelSpec {
                num_layers: 2,
                layer_dims: vec![2, 6, 6],
                num_classes: 3,
                readout: Readout::Sum,
                predictor_hidden: 6,
            },
            5,
        )
        .unwrap()
    }

    fn graph() -> Graph {
        Graph::new(
            "g",
            Array2::from_shape_fn((5, 2), |(i, j)| ((i * 7 + j * 3) % 5) as f64 * 0.4 - 0.6),
            vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)],
            None,
            0,
        )
        .unwrap()
    }

    /// Context whose probabilities are supplied directly, for formula checks.
    fn ctx_with_full<'a>(m: &'a ModelParams, g: &'a Graph, p_full: f64) -> AttributionContext<'a> {
        let mut ctx = AttributionContext::new(m, g).unwrap();
        ctx.p_full = p_full;
        ctx
    }

    #[test]
    fn edge_effect_formula_values() {
        let (m, g) = (model(), graph());
        let ctx = ctx_with_full(&m, &g, 1.0);
        assert!((ctx.ice_from_probs(0.72, 0.95) - 0.277_210_772_584_485_5).abs() < 1e-12);
        let ctx = ctx_with_full(&m, &g, 0.8);
        assert!((ctx.ice_from_probs(0.9, 0.5) - -0.470_229_331_921_695_25).abs() < 1e-12);
        assert_eq!(ctx.ice_from_probs(0.37, 0.37), 0.0);
    }

    #[test]
    fn reward_modes() {
        let (m, g) = (model(), graph());
        let ctx = ctx_with_full(&m, &g, 1.0);
        let hit = SubgraphEval {
            prob: 0.95,
            predicted_class: ctx.target_class,
        };
        let miss = SubgraphEval {
            prob: 0.95,
            predicted_class: (ctx.target_class + 1) % 3,
        };
        let mi = ctx.reward_from(0.72, &hit, RewardMode::Mi);
        assert!((mi - 1.277_210_772_584_485_5).abs() < 1e-12);
        assert_eq!(ctx.reward_from(0.72, &miss, RewardMode::Binary), -1.0);
        let same = SubgraphEval { prob: 0.72, ..miss };
        assert_eq!(ctx.reward_from(0.72, &same, RewardMode::Mi), -1.0);
        let ce = ctx.reward_from(0.72, &hit, RewardMode::Ce);
        assert!((ce - ((0.95f64).ln() - (0.72f64).ln() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn full_selection_gives_p_full() {
        let (m, g) = (model(), graph());
        let ctx = AttributionContext::new(&m, &g).unwrap();
        assert_eq!(ctx.predict_prob(&EdgeSet::full(&g)).unwrap(), ctx.p_full);
        let direct = m.forward(&g.induce_subgraph(&EdgeSet::from_indices(&g, [4, 1]).unwrap()).unwrap()).unwrap();
        let sel = EdgeSet::from_indices(&g, [1, 4]).unwrap();
        assert_eq!(ctx.predict_prob(&sel).unwrap(), direct.probs[ctx.target_class]);
        assert_eq!(ctx.predict_prob(&sel).unwrap(), ctx.predict_prob(&sel).unwrap());
    }

    #[test]
    fn empty_subgraph_effect_is_zero() {
        let (m, g) = (model(), graph());
        let ctx = AttributionContext::new(&m, &g).unwrap();
        assert_eq!(ctx.ice_subgraph(&EdgeSet::empty(&g)).unwrap(), 0.0);
    }

    #[test]
    fn repeated_edge_is_an_invalid_action() {
        let (m, g) = (model(), graph());
        let ctx = AttributionContext::new(&m, &g).unwrap();
        let prev = EdgeSet::from_indices(&g, [2]).unwrap();
        assert!(matches!(ctx.ice_edge(&prev, 2), Err(Error::InvalidAction { edge: 2 })));
        assert!(matches!(ctx.reward(&prev, 2, RewardMode::Mi), Err(Error::InvalidAction { .. })));
    }

    #[test]
    fn mi_reward_minus_edge_effect_is_unit() {
        let (m, g) = (model(), graph());
        for target in 0..3 {
            let ctx = AttributionContext::with_target(&m, &g, target, DEFAULT_PROB_FLOOR).unwrap();
            let prev = EdgeSet::from_indices(&g, [0, 3]).unwrap();
            for e in [1, 2, 4, 5] {
                let d = ctx.reward(&prev, e, RewardMode::Mi).unwrap() - ctx.ice_edge(&prev, e).unwrap();
                assert!((d.abs() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn edge_effects_telescope_to_subgraph_effect() {
        let (m, g) = (model(), graph());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for target in 0..3 {
            let ctx = AttributionContext::with_target(&m, &g, target, DEFAULT_PROB_FLOOR).unwrap();
            for _ in 0..20 {
                let mut order: Vec<usize> = (0..g.num_edges()).collect();
                order.shuffle(&mut rng);
                order.truncate(1 + (order[0] % g.num_edges()));
                let mut prev = EdgeSet::empty(&g);
                let mut sum = 0.0;
                for &e in &order {
                    sum += ctx.ice_edge(&prev, e).unwrap();
                    prev.insert(e).unwrap();
                }
                assert!((sum - ctx.ice_subgraph(&prev).unwrap()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn clamping_keeps_values_finite() {
        let (m, g) = (model(), graph());
        let ctx = AttributionContext::with_target(&m, &g, 0, 0.5).unwrap();
        let v = ctx.ice_subgraph(&EdgeSet::full(&g)).unwrap();
        assert!(v.is_finite());
        assert!(ctx.p_full >= 0.5);
    }
}
