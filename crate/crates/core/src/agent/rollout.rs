use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::policy::{PolicyEncoding, PolicyParams};
use crate::attribution::{AttributionContext, RewardMode, DEFAULT_PROB_FLOOR};
use crate::error::{Error, Result};
use crate::explain::{Explainer, RankedEdges, Step, Trajectory};
use crate::gnn::ModelParams;
use crate::graph::{EdgeSet, Graph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RolloutMode {
    /// Draw each action from the policy distribution.
    #[default]
    Sample,
    /// Take the most probable action; lowest edge index on ties.
    Greedy,
}

fn check_k(graph: &Graph, k: usize) -> Result<()> {
    if k < 1 || k > graph.num_edges() {
        return Err(Error::OutOfRange {
            what: "K",
            reason: format!("K = {k} must be in 1..={}", graph.num_edges()),
        });
    }
    Ok(())
}

/// Grows an explanation for `ctx.target_class` one edge at a time for `k`
/// steps, recording each pick's log-probability, causal effect and reward.
///
/// The seed only matters in sample mode.
pub fn rollout(
    policy: &PolicyParams,
    ctx: &AttributionContext<'_>,
    k: usize,
    mode: RolloutMode,
    reward_mode: RewardMode,
    seed: u64,
) -> Result<Trajectory> {
    check_k(ctx.graph, k)?;
    let enc = policy.encode(ctx.graph)?;
    rollout_encoded(policy, &enc, ctx, k, mode, reward_mode, seed)
}

pub(crate) fn rollout_encoded(
    policy: &PolicyParams,
    enc: &PolicyEncoding,
    ctx: &AttributionContext<'_>,
    k: usize,
    mode: RolloutMode,
    reward_mode: RewardMode,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected = EdgeSet::empty(ctx.graph);
    let mut p_prev = ctx.evaluate_indices(&[])?.prob;
    let mut steps = Vec::with_capacity(k);
    for _ in 0..k {
        let (dist, _) = policy.step(enc, &selected, ctx.target_class)?;
        let pos = match mode {
            RolloutMode::Greedy => dist.argmax(),
            RolloutMode::Sample => sample_index(&dist.probs, rng.gen::<f64>()),
        };
        let edge = dist.candidates[pos];
        let next = ctx.evaluate_with(&selected, edge)?;
        steps.push(Step {
            edge,
            score: ctx.ice_from_probs(p_prev, next.prob),
            reward: ctx.reward_from(p_prev, &next, reward_mode),
            subgraph_prob: next.prob,
            log_prob: Some(dist.log_probs[pos]),
        });
        selected.insert(edge)?;
        p_prev = next.prob;
    }
    Ok(Trajectory {
        graph_id: ctx.graph.graph_id().to_string(),
        target_class: ctx.target_class,
        steps,
    })
}

/// Inverse-CDF draw: the first index whose cumulative probability exceeds `u`.
fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave the total a hair below u; fall back to the last
    // candidate with positive mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Outcome of a beam search.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamResult {
    /// Winning sequence with rank-position scores.
    pub ranked: RankedEdges,
    pub cumulative_reward: f64,
    pub cumulative_log_prob: f64,
}

#[derive(Debug, Clone)]
struct Beam {
    edges: Vec<usize>,
    selected: EdgeSet,
    log_prob: f64,
    reward: f64,
    p_last: f64,
}

/// Keeps the `width` partial sequences with the highest cumulative
/// log-probability at each of `k` steps, then returns the finished sequence
/// with the highest cumulative reward.
///
/// Expansion ties break by parent rank, then by the step's own
/// log-probability, then by the lexicographically smaller sequence. Final
/// ties break by cumulative log-probability, then lexicographically. With
/// `width = 1` this is exactly the greedy rollout.
pub fn beam_explain(
    policy: &PolicyParams,
    ctx: &AttributionContext<'_>,
    k: usize,
    width: usize,
    reward_mode: RewardMode,
) -> Result<BeamResult> {
    if width < 1 {
        return Err(Error::OutOfRange {
            what: "beam width",
            reason: "width must be at least 1".into(),
        });
    }
    check_k(ctx.graph, k)?;
    let enc = policy.encode(ctx.graph)?;
    let mut beams = vec![Beam {
        edges: Vec::new(),
        selected: EdgeSet::empty(ctx.graph),
        log_prob: 0.0,
        reward: 0.0,
        p_last: ctx.evaluate_indices(&[])?.prob,
    }];
    for _ in 0..k {
        // (parent rank, edge, step log-prob, cumulative log-prob)
        let mut expansions: Vec<(usize, usize, f64, f64)> = Vec::new();
        for (rank, beam) in beams.iter().enumerate() {
            let (dist, _) = policy.step(&enc, &beam.selected, ctx.target_class)?;
            for (&e, &lp) in dist.candidates.iter().zip(&dist.log_probs) {
                expansions.push((rank, e, lp, beam.log_prob + lp));
            }
        }
        expansions.sort_by(|a, b| {
            b.3.total_cmp(&a.3)
                .then(a.0.cmp(&b.0))
                .then(b.2.total_cmp(&a.2))
                .then_with(|| {
                    let sa = beams[a.0].edges.iter().chain(std::iter::once(&a.1));
                    let sb = beams[b.0].edges.iter().chain(std::iter::once(&b.1));
                    sa.cmp(sb)
                })
        });
        expansions.truncate(width);
        let mut next = Vec::with_capacity(expansions.len());
        for (rank, edge, _, cum_lp) in expansions {
            let parent = &beams[rank];
            let eval = ctx.evaluate_with(&parent.selected, edge)?;
            let mut edges = parent.edges.clone();
            edges.push(edge);
            next.push(Beam {
                edges,
                selected: parent.selected.with(edge)?,
                log_prob: cum_lp,
                reward: parent.reward + ctx.reward_from(parent.p_last, &eval, reward_mode),
                p_last: eval.prob,
            });
        }
        beams = next;
    }
    let best = beams
        .into_iter()
        .min_by(final_order)
        .expect("at least one beam");
    Ok(BeamResult {
        ranked: RankedEdges::from_order(best.edges)?,
        cumulative_reward: best.reward,
        cumulative_log_prob: best.log_prob,
    })
}

fn final_order(a: &Beam, b: &Beam) -> Ordering {
    b.reward
        .total_cmp(&a.reward)
        .then(b.log_prob.total_cmp(&a.log_prob))
        .then_with(|| a.edges.cmp(&b.edges))
}

/// Greedy rollout over every edge; the `k`-th pick (from 1) scores
/// `(|E| − k + 1) / |E|`.
pub fn full_ranking(policy: &PolicyParams, ctx: &AttributionContext<'_>) -> Result<RankedEdges> {
    let n = ctx.graph.num_edges();
    if n == 0 {
        return RankedEdges::new(vec![], vec![]);
    }
    let enc = policy.encode(ctx.graph)?;
    let mut selected = EdgeSet::empty(ctx.graph);
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let (dist, _) = policy.step(&enc, &selected, ctx.target_class)?;
        let edge = dist.candidates[dist.argmax()];
        order.push(edge);
        selected.insert(edge)?;
    }
    RankedEdges::from_order(order)
}

/// A trained policy used as an explainer: full greedy ranking.
#[derive(Debug, Clone)]
pub struct RcExplainer {
    pub policy: PolicyParams,
}

impl Explainer for RcExplainer {
    fn name(&self) -> &str {
        "rc"
    }

    fn explain(&self, model: &ModelParams, graph: &Graph, target_class: usize) -> Result<RankedEdges> {
        let ctx = AttributionContext::with_target(model, graph, target_class, DEFAULT_PROB_FLOOR)?;
        full_ranking(&self.policy, &ctx)
    }
}
