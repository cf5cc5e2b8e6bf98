//! Scores for explanations: predictive accuracy of top-ranked edges,
//! contrastivity, the model-randomization sanity check, Spearman rank
//! correlation and ground-truth precision/recall.

use rayon::prelude::*;

use crate::dataset::{Dataset, SplitName};
use crate::error::{Error, Result};
use crate::explain::{Explainer, RankedEdges};
use crate::gnn::ModelParams;
use crate::graph::{EdgeSet, Graph};

/// Selection ratios of the accuracy curve: 0.1, 0.2, …, 1.0.
pub fn curve_ratios() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// `⌈μ·|E|⌉`, with a small tolerance so `0.3 · 10` gives 3 rather than 4.
pub fn top_k_count(num_edges: usize, ratio: f64) -> usize {
    ((ratio * num_edges as f64 - 1e-9).ceil().max(0.0) as usize).min(num_edges)
}

/// Fractional ranks from 1: tied values share the mean of their positions.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman's ρ: the Pearson correlation of fractional ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Validation(format!("spearman on lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedMetric(format!("spearman needs at least 2 values, got {}", x.len())));
    }
    if let Some(v) = x.iter().chain(y).find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("spearman input {v}")));
    }
    let rx = fractional_ranks(x);
    let ry = fractional_ranks(y);
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (da, db) = (a - mean, b - mean);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric("spearman with a constant ranking".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Whether the model's prediction on the top `⌈μ·|E|⌉` ranked edges alone
/// matches its prediction on the full graph.
pub fn acc_at_ratio(model: &ModelParams, graph: &Graph, ranked: &RankedEdges, ratio: f64) -> Result<bool> {
    let full = model.forward(graph)?.predicted_class();
    acc_at_ratio_for(model, graph, ranked, ratio, full)
}

fn acc_at_ratio_for(model: &ModelParams, graph: &Graph, ranked: &RankedEdges, ratio: f64, full: usize) -> Result<bool> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::OutOfRange {
            what: "selection ratio",
            reason: format!("{ratio} not in (0, 1]"),
        });
    }
    let k = top_k_count(graph.num_edges(), ratio);
    let top = EdgeSet::from_indices(graph, ranked.top_k(k)?.iter().copied())?;
    Ok(model.forward(&graph.induce_subgraph(&top)?)?.predicted_class() == full)
}

/// Split-mean accuracy at each ratio of [`curve_ratios`] and its mean.
#[derive(Debug, Clone, PartialEq)]
pub struct AccCurve {
    pub ratios: Vec<f64>,
    pub accuracy: Vec<f64>,
    pub auc: f64,
}

impl AccCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ratio,accuracy\n");
        for (r, a) in self.ratios.iter().zip(&self.accuracy) {
            out.push_str(&format!("{r},{a}\n"));
        }
        out
    }
}

/// Explains each split graph's predicted class and scores the rankings
/// along the accuracy curve.
pub fn acc_auc(model: &ModelParams, dataset: &Dataset, split: SplitName, explainer: &dyn Explainer) -> Result<AccCurve> {
    let idx = dataset.splits.get(split);
    if idx.is_empty() {
        return Err(Error::UndefinedMetric(format!("ACC-AUC on empty `{}` split", split.as_str())));
    }
    let ratios = curve_ratios();
    let hits: Vec<Vec<bool>> = idx
        .par_iter()
        .map(|&i| {
            let g = &dataset.graphs[i];
            let target = model.forward(g)?.predicted_class();
            let ranked = explainer.explain(model, g, target)?;
            ratios
                .iter()
                .map(|&r| acc_at_ratio_for(model, g, &ranked, r, target))
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<_>>()?;
    let accuracy: Vec<f64> = (0..ratios.len())
        .map(|j| hits.iter().filter(|h| h[j]).count() as f64 / hits.len() as f64)
        .collect();
    let auc = accuracy.iter().sum::<f64>() / accuracy.len() as f64;
    Ok(AccCurve { ratios, accuracy, auc })
}

/// Mean over graphs of a per-graph |ρ|, with graphs where ρ is undefined
/// (fewer than two edges or a constant score vector) skipped and counted.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSummary {
    pub mean_abs: f64,
    pub graphs_used: usize,
    pub graphs_skipped: usize,
}

fn summarize(per_graph: Vec<Result<Option<f64>>>, what: &str) -> Result<CorrelationSummary> {
    let mut used = Vec::new();
    let mut skipped = 0;
    for r in per_graph {
        match r? {
            Some(v) => used.push(v),
            None => skipped += 1,
        }
    }
    if used.is_empty() {
        return Err(Error::UndefinedMetric(format!("{what}: no graph with a defined rank correlation")));
    }
    Ok(CorrelationSummary {
        mean_abs: used.iter().sum::<f64>() / used.len() as f64,
        graphs_used: used.len(),
        graphs_skipped: skipped,
    })
}

fn abs_spearman_or_skip(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    match spearman(a, b) {
        Ok(r) => Ok(Some(r.abs())),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Mean |ρ| between the scores explaining the predicted class and those
/// explaining each other class. Lower is more class-discriminative.
pub fn contrastivity(
    explainer: &dyn Explainer,
    model: &ModelParams,
    dataset: &Dataset,
    split: SplitName,
) -> Result<CorrelationSummary> {
    let classes = model.spec.num_classes;
    if classes < 2 {
        return Err(Error::UndefinedMetric("contrastivity needs at least two classes".into()));
    }
    let per_graph = dataset
        .splits
        .get(split)
        .par_iter()
        .map(|&i| {
            let g = &dataset.graphs[i];
            if g.num_edges() < 2 {
                return Ok(None);
            }
            let pred = model.forward(g)?.predicted_class();
            let base = explainer.explain(model, g, pred)?.score_vector(g.num_edges())?;
            let mut vals = Vec::with_capacity(classes - 1);
            for s in (0..classes).filter(|&s| s != pred) {
                let other = explainer.explain(model, g, s)?.score_vector(g.num_edges())?;
                match abs_spearman_or_skip(&base, &other)? {
                    Some(v) => vals.push(v),
                    None => return Ok(None),
                }
            }
            Ok(Some(vals.iter().sum::<f64>() / vals.len() as f64))
        })
        .collect();
    summarize(per_graph, "contrastivity")
}

/// Mean |ρ| between the explainer's scores under the trained model and under
/// a randomly re-initialized model, each explaining its own prediction.
/// Learned explainers are not retrained for the randomized model.
pub fn sanity_check(
    explainer: &dyn Explainer,
    model: &ModelParams,
    randomized: &ModelParams,
    dataset: &Dataset,
    split: SplitName,
) -> Result<CorrelationSummary> {
    if model.spec != randomized.spec {
        return Err(Error::Validation("randomized model must share the trained model's spec".into()));
    }
    let per_graph = dataset
        .splits
        .get(split)
        .par_iter()
        .map(|&i| {
            let g = &dataset.graphs[i];
            if g.num_edges() < 2 {
                return Ok(None);
            }
            let a = explainer.explain(model, g, model.forward(g)?.predicted_class())?;
            let b = explainer.explain(randomized, g, randomized.forward(g)?.predicted_class())?;
            abs_spearman_or_skip(&a.score_vector(g.num_edges())?, &b.score_vector(g.num_edges())?)
        })
        .collect();
    summarize(per_graph, "sanity check")
}

/// Precision and recall of the top-`k` edges against a ground-truth edge set.
pub fn gt_precision_recall(ranked: &RankedEdges, truth: &EdgeSet, k: usize) -> Result<(f64, f64)> {
    if truth.is_empty() {
        return Err(Error::UndefinedMetric("ground-truth edge set is empty".into()));
    }
    if k == 0 {
        return Err(Error::OutOfRange {
            what: "K",
            reason: "precision needs K ≥ 1".into(),
        });
    }
    let hits = ranked.top_k(k)?.iter().filter(|&&e| truth.contains(e)).count() as f64;
    Ok((hits / k as f64, hits / truth.len() as f64))
}
