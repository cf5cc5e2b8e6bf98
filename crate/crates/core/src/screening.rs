//! Parameter-free explainers: greedy causal screening and the exhaustive
//! subset oracle it approximates.

use itertools::Itertools;
use rayon::prelude::*;

use crate::attribution::{AttributionContext, RewardMode};
use crate::error::{Error, Result};
use crate::explain::{Explainer, RankedEdges, Step, Trajectory};
use crate::gnn::ModelParams;
use crate::graph::{EdgeSet, Graph};

/// Default refusal threshold for [`brute_force_best_subgraph`].
pub const DEFAULT_MAX_EDGES: usize = 16;

/// Greedy sequential exhaustive search.
///
/// Each step evaluates the causal effect of every remaining edge given the
/// picks so far and keeps the largest (lowest index on ties). A step costs
/// one forward pass per candidate; `p(c | picks)` is carried over from the
/// previous step. Screening continues to `k` even once every remaining
/// effect is negative. Rewards are recorded in `Mi` mode.
pub fn greedy_screening(ctx: &AttributionContext<'_>, k: usize) -> Result<Trajectory> {
    let num_edges = ctx.graph.num_edges();
    if k < 1 || k > num_edges {
        return Err(Error::OutOfRange {
            what: "K",
            reason: format!("K = {k} must be in 1..={num_edges}"),
        });
    }
    let mut picked = EdgeSet::empty(ctx.graph);
    let mut p_prev = ctx.evaluate_indices(&[])?.prob;
    let mut steps = Vec::with_capacity(k);
    for _ in 0..k {
        let candidates = ctx.graph.edge_complement(&picked)?;
        let evals = candidates
            .as_slice()
            .par_iter()
            .map(|&e| ctx.evaluate_with(&picked, e).map(|ev| (e, ev)))
            .collect::<Result<Vec<_>>>()?;
        let (mut best_edge, mut best_eval) = evals[0];
        let mut best_ice = ctx.ice_from_probs(p_prev, best_eval.prob);
        for &(e, ev) in &evals[1..] {
            let ice = ctx.ice_from_probs(p_prev, ev.prob);
            if ice > best_ice {
                best_edge = e;
                best_eval = ev;
                best_ice = ice;
            }
        }
        steps.push(Step {
            edge: best_edge,
            score: best_ice,
            reward: ctx.reward_from(p_prev, &best_eval, RewardMode::Mi),
            subgraph_prob: best_eval.prob,
            log_prob: None,
        });
        picked.insert(best_edge)?;
        p_prev = best_eval.prob;
    }
    Ok(Trajectory {
        graph_id: ctx.graph.graph_id().to_string(),
        target_class: ctx.target_class,
        steps,
    })
}

/// Exact maximizer of the subgraph causal effect over all `k`-edge subsets;
/// the lexicographically smallest subset wins ties.
pub fn brute_force_best_subgraph(ctx: &AttributionContext<'_>, k: usize, max_edges: usize) -> Result<EdgeSet> {
    let num_edges = ctx.graph.num_edges();
    if num_edges > max_edges {
        return Err(Error::TooManyEdges {
            edges: num_edges,
            limit: max_edges,
        });
    }
    if k < 1 || k > num_edges {
        return Err(Error::OutOfRange {
            what: "K",
            reason: format!("K = {k} must be in 1..={num_edges}"),
        });
    }
    let p_empty = ctx.evaluate_indices(&[])?.prob;
    let subsets: Vec<Vec<usize>> = (0..num_edges).combinations(k).collect();
    let values = subsets
        .par_iter()
        .map(|s| ctx.evaluate_indices(s).map(|ev| ctx.ice_from_probs(p_empty, ev.prob)))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    EdgeSet::from_indices(ctx.graph, subsets[best].iter().copied())
}

/// Greedy screening over every edge, ranked by selection order.
#[derive(Debug, Clone, Default)]
pub struct GreedyScreening;

impl Explainer for GreedyScreening {
    fn name(&self) -> &str {
        "greedy"
    }

    fn explain(&self, model: &ModelParams, graph: &Graph, target_class: usize) -> Result<RankedEdges> {
        if graph.num_edges() == 0 {
            return RankedEdges::new(vec![], vec![]);
        }
        let ctx = AttributionContext::with_target(model, graph, target_class, crate::attribution::DEFAULT_PROB_FLOOR)?;
        Ok(greedy_screening(&ctx, graph.num_edges())?.ranked_by_position())
    }
}
