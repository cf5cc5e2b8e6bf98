//! Explanation outputs shared by every explainer.

use crate::error::{Error, Result};
use crate::gnn::ModelParams;
use crate::graph::Graph;

/// Edges in explanation order with one attribution score each.
///
/// Scores need not decrease along the order: sequential attributions can dip.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedEdges {
    order: Vec<usize>,
    scores: Vec<f64>,
}

impl RankedEdges {
    pub fn new(order: Vec<usize>, scores: Vec<f64>) -> Result<Self> {
        if order.len() != scores.len() {
            return Err(Error::Validation(format!(
                "{} ranked edges but {} scores",
                order.len(),
                scores.len()
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(order.len());
        if let Some(dup) = order.iter().find(|&&e| !seen.insert(e)) {
            return Err(Error::Validation(format!("edge {dup} ranked twice")));
        }
        Ok(RankedEdges { order, scores })
    }

    /// Scores `(n − k) / n` for the edge at position `k` of an `n`-edge order:
    /// strictly decreasing, in `(0, 1]`.
    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        let n = order.len() as f64;
        let scores = (0..order.len()).map(|k| (n - k as f64) / n).collect();
        RankedEdges::new(order, scores)
    }

    /// Ranks edge indices by descending score; ties go to the lower index.
    pub fn from_edge_scores(scores: &[f64]) -> Result<Self> {
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("score of edge {i}")));
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let sorted = order.iter().map(|&i| scores[i]).collect();
        RankedEdges::new(order, sorted)
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn top_k(&self, k: usize) -> Result<&[usize]> {
        self.order.get(..k).ok_or_else(|| Error::OutOfRange {
            what: "ranking prefix",
            reason: format!("asked for top {k} of {} ranked edges", self.order.len()),
        })
    }

    /// Score per edge index; every one of the `num_edges` edges must be ranked.
    pub fn score_vector(&self, num_edges: usize) -> Result<Vec<f64>> {
        if self.order.len() != num_edges || self.order.iter().any(|&e| e >= num_edges) {
            return Err(Error::Validation(format!(
                "ranking covers {} edges, need a full ranking of {num_edges}",
                self.order.len()
            )));
        }
        let mut v = vec![0.0; num_edges];
        for (&e, &s) in self.order.iter().zip(&self.scores) {
            v[e] = s;
        }
        Ok(v)
    }
}

/// One screening step: the edge picked and what it did.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub edge: usize,
    /// Causal effect of the edge given the earlier picks.
    pub score: f64,
    pub reward: f64,
    /// Clamped target-class probability after adding the edge.
    pub subgraph_prob: f64,
    /// Policy log-probability of the pick, for learned explainers.
    pub log_prob: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub graph_id: String,
    pub target_class: usize,
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn edges(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.edge).collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Ranking with the per-step causal effects as scores.
    pub fn ranked_by_effect(&self) -> RankedEdges {
        RankedEdges::new(self.edges(), self.steps.iter().map(|s| s.score).collect())
            .expect("trajectory edges are distinct")
    }

    /// Ranking with rank-derived scores (earlier picks score higher).
    pub fn ranked_by_position(&self) -> RankedEdges {
        RankedEdges::from_order(self.edges()).expect("trajectory edges are distinct")
    }
}

/// Anything that can rank all edges of a graph for a model and a target class.
pub trait Explainer: Sync {
    fn name(&self) -> &str;

    /// Full ranking of `graph`'s edges explaining `target_class` under `model`.
    fn explain(&self, model: &ModelParams, graph: &Graph, target_class: usize) -> Result<RankedEdges>;
}
