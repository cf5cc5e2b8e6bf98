//! Reference explainers: a seeded random ranking and single-edge occlusion.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::attribution::{AttributionContext, DEFAULT_PROB_FLOOR};
use crate::error::Result;
use crate::explain::{Explainer, RankedEdges};
use crate::gnn::ModelParams;
use crate::graph::Graph;

/// Uniformly random permutation of a graph's edges from `seed`, with
/// rank-position scores.
pub fn random_explainer(graph: &Graph, seed: u64) -> Result<RankedEdges> {
    let mut order: Vec<usize> = (0..graph.num_edges()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    RankedEdges::from_order(order)
}

/// Ignores the model and the class: each graph's permutation depends only on
/// the base seed and the graph id.
#[derive(Debug, Clone)]
pub struct RandomExplainer {
    pub seed: u64,
}

impl RandomExplainer {
    pub fn graph_seed(&self, graph_id: &str) -> u64 {
        // FNV-1a over the id, folded with the base seed.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.seed;
        for b in graph_id.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h
    }
}

impl Explainer for RandomExplainer {
    fn name(&self) -> &str {
        "random"
    }

    fn explain(&self, _model: &ModelParams, graph: &Graph, _target_class: usize) -> Result<RankedEdges> {
        random_explainer(graph, self.graph_seed(graph.graph_id()))
    }
}

/// Score of each edge: `p(c | G) − p(c | G ∖ {e})`, removing only that edge.
///
/// This is the opposite direction to screening, which builds subgraphs up
/// from nothing. Probabilities are clamped like every other attribution.
pub fn occlusion_scores(ctx: &AttributionContext<'_>) -> Result<Vec<f64>> {
    let n = ctx.graph.num_edges();
    (0..n)
        .into_par_iter()
        .map(|e| {
            let rest: Vec<usize> = (0..n).filter(|&i| i != e).collect();
            Ok(ctx.p_full - ctx.evaluate_indices(&rest)?.prob)
        })
        .collect()
}

/// Edges ranked by descending occlusion score, lower index first on ties.
pub fn occlusion_explainer(ctx: &AttributionContext<'_>) -> Result<RankedEdges> {
    RankedEdges::from_edge_scores(&occlusion_scores(ctx)?)
}

#[derive(Debug, Clone, Default)]
pub struct Occlusion;

impl Explainer for Occlusion {
    fn name(&self) -> &str {
        "occlusion"
    }

    fn explain(&self, model: &ModelParams, graph: &Graph, target_class: usize) -> Result<RankedEdges> {
        let ctx = AttributionContext::with_target(model, graph, target_class, DEFAULT_PROB_FLOOR)?;
        occlusion_explainer(&ctx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::{ModelSpec, Readout};
    use crate::graph::tests::five_edges;

    #[test]
    fn random_is_seeded_full_and_blind() {
        let g = five_edges();
        let a = random_explainer(&g, 4).unwrap();
        assert_eq!(a, random_explainer(&g, 4).unwrap());
        let mut sorted = a.order().to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
        let spec = ModelSpec::gin(g.feature_dim(), 4, 3);
        let m1 = ModelParams::init(&spec, 1).unwrap();
        let m2 = ModelParams::init(&spec, 2).unwrap();
        let r = RandomExplainer { seed: 9 };
        assert_eq!(r.explain(&m1, &g, 0).unwrap(), r.explain(&m2, &g, 2).unwrap());
    }

    #[test]
    fn first_place_is_uniform() {
        // χ² with 4 degrees of freedom; 13.277 is the p = 0.01 critical value.
        let g = five_edges();
        let draws = 10_000;
        let mut counts = [0usize; 5];
        for seed in 0..draws {
            counts[random_explainer(&g, seed).unwrap().order()[0]] += 1;
        }
        let expected = draws as f64 / 5.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 13.277, "χ² = {chi2}, counts {counts:?}");
    }

    #[test]
    fn occlusion_matches_manual_forwards() {
        let g = Graph::new(
            "four",
            ndarray::array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.0]],
            vec![(0, 1), (1, 2), (2, 3), (0, 3)],
            None,
            0,
        )
        .unwrap();
        let spec = ModelSpec {
            num_layers: 1,
            layer_dims: vec![2, 3],
            num_classes: 2,
            readout: Readout::Sum,
            predictor_hidden: 3,
        };
        let m = ModelParams::init(&spec, 11).unwrap();
        let ctx = AttributionContext::with_target(&m, &g, 1, DEFAULT_PROB_FLOOR).unwrap();
        let scores = occlusion_scores(&ctx).unwrap();
        let full = m.predict_proba(g.node_features(), g.edges()).unwrap()[1];
        for e in 0..4 {
            let rest: Vec<(usize, usize)> =
                g.edges().iter().enumerate().filter(|&(i, _)| i != e).map(|(_, &p)| p).collect();
            let without = m.predict_proba(g.node_features(), &rest).unwrap()[1];
            assert_eq!(scores[e], full - without);
        }
        let ranked = occlusion_explainer(&ctx).unwrap();
        let mut expect: Vec<usize> = (0..4).collect();
        expect.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        assert_eq!(ranked.order(), &expect[..]);
    }

    #[test]
    fn edge_that_changes_nothing_scores_zero() {
        // Zero weights make every output uniform regardless of edges.
        let g = five_edges();
        let spec = ModelSpec::gin(g.feature_dim(), 4, 2);
        let mut m = ModelParams::init(&spec, 0).unwrap();
        m.predictor_out.w.fill(0.0);
        let ctx = AttributionContext::with_target(&m, &g, 0, DEFAULT_PROB_FLOOR).unwrap();
        assert!(occlusion_scores(&ctx).unwrap().iter().all(|&s| s == 0.0));
        assert_eq!(occlusion_explainer(&ctx).unwrap().order(), &[0, 1, 2, 3, 4]);
    }
}
