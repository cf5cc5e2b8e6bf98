//! Graphviz DOT export of an explanation.
//!
//! Ranked edges are drawn in red whose saturation and pen width grow with
//! the attribution score, min-max normalized over the ranked edges. Edges
//! the ranking does not cover are drawn thin, grey and dashed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::explain::RankedEdges;
use crate::graph::Graph;

pub const MIN_PEN_WIDTH: f64 = 1.0;
pub const MAX_PEN_WIDTH: f64 = 5.0;

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Normalized weight in `[0, 1]` per edge; `None` for unranked edges.
/// Uniform scores all map to 1.
fn edge_weights(graph: &Graph, ranked: &RankedEdges) -> Result<Vec<Option<f64>>> {
    let mut weights = vec![None; graph.num_edges()];
    let scores = ranked.scores();
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("attribution score {s}")));
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for (&e, &s) in ranked.order().iter().zip(scores) {
        if e >= graph.num_edges() {
            return Err(Error::InvalidEdgeSet {
                graph_id: graph.graph_id().to_string(),
                reason: format!("ranked edge {e} >= |E| = {}", graph.num_edges()),
            });
        }
        weights[e] = Some(if hi > lo { (s - lo) / (hi - lo) } else { 1.0 });
    }
    Ok(weights)
}

pub fn to_dot(graph: &Graph, ranked: &RankedEdges) -> Result<String> {
    let weights = edge_weights(graph, ranked)?;
    let mut out = String::new();
    writeln!(out, "graph {} {{", quote(graph.graph_id())).unwrap();
    writeln!(out, "  graph [label={}];", quote(&format!("{} (label {})", graph.graph_id(), graph.label()))).unwrap();
    writeln!(out, "  node [shape=circle];").unwrap();
    for v in 0..graph.num_nodes() {
        writeln!(out, "  n{v} [label=\"{v}\"];").unwrap();
    }
    let rank_of: std::collections::HashMap<usize, usize> =
        ranked.order().iter().enumerate().map(|(r, &e)| (e, r + 1)).collect();
    for (i, (&(a, b), w)) in graph.edges().iter().zip(&weights).enumerate() {
        match w {
            Some(t) => writeln!(
                out,
                "  n{a} -- n{b} [penwidth={:.3}, color=\"0.000 {:.3} 0.850\", label=\"{}\", tooltip=\"edge {i}\"];",
                MIN_PEN_WIDTH + (MAX_PEN_WIDTH - MIN_PEN_WIDTH) * t,
                t,
                rank_of[&i],
            )
            .unwrap(),
            None => writeln!(
                out,
                "  n{a} -- n{b} [penwidth={MIN_PEN_WIDTH:.3}, color=\"0.000 0.000 0.700\", style=dashed, tooltip=\"edge {i}\"];"
            )
            .unwrap(),
        }
    }
    out.push_str("}\n");
    Ok(out)
}

pub fn export_dot(graph: &Graph, ranked: &RankedEdges, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_dot(graph, ranked)?).map_err(|e| Error::io(path, e))
}
