//! Graph data model and edge-removal interventions.
//!
//! Edges are undirected and stored once in canonical `(min, max)` order. An
//! intervention on a graph keeps every node and its features and restricts
//! the edge list, so readout dimensionality never changes.

use ndarray::Array2;

use crate::error::{Error, Result};

/// An undirected simple graph with node features and a class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    graph_id: String,
    node_features: Array2<f64>,
    edges: Vec<(usize, usize)>,
    edge_features: Option<Array2<f64>>,
    label: usize,
}

impl Graph {
    /// Builds a graph, canonicalizing every edge to `(min, max)`.
    ///
    /// Rejects self-loops, duplicate unordered pairs, out-of-range endpoints,
    /// non-finite features and an edge-feature matrix whose row count differs
    /// from the edge count.
    pub fn new(
        graph_id: impl Into<String>,
        node_features: Array2<f64>,
        edges: Vec<(usize, usize)>,
        edge_features: Option<Array2<f64>>,
        label: usize,
    ) -> Result<Self> {
        let graph_id = graph_id.into();
        let invalid = |reason: String| Error::InvalidGraph {
            graph_id: graph_id.clone(),
            reason,
        };
        let n = node_features.nrows();
        let mut canonical = Vec::with_capacity(edges.len());
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for (i, &(a, b)) in edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(invalid(format!(
                    "edge {i} = ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if a == b {
                return Err(invalid(format!("edge {i} is a self-loop on node {a}")));
            }
            let pair = (a.min(b), a.max(b));
            if !seen.insert(pair) {
                return Err(invalid(format!("edge {i} duplicates ({}, {})", pair.0, pair.1)));
            }
            canonical.push(pair);
        }
        if node_features.iter().any(|v| !v.is_finite()) {
            return Err(invalid("node features contain a non-finite value".into()));
        }
        if let Some(ef) = &edge_features {
            if ef.nrows() != canonical.len() {
                return Err(invalid(format!(
                    "{} edge-feature rows for {} edges",
                    ef.nrows(),
                    canonical.len()
                )));
            }
            if ef.iter().any(|v| !v.is_finite()) {
                return Err(invalid("edge features contain a non-finite value".into()));
            }
        }
        Ok(Graph {
            graph_id,
            node_features,
            edges: canonical,
            edge_features,
            label,
        })
    }

    pub fn graph_id(&self) -> &str {
        &self.graph_id
    }

    pub fn node_features(&self) -> &Array2<f64> {
        &self.node_features
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_features(&self) -> Option<&Array2<f64>> {
        self.edge_features.as_ref()
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn num_nodes(&self) -> usize {
        self.node_features.nrows()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.node_features.ncols()
    }

    /// Width of the edge-feature rows, zero when the graph has none.
    pub fn edge_feature_dim(&self) -> usize {
        self.edge_features.as_ref().map_or(0, |ef| ef.ncols())
    }

    /// Graph with the same nodes, features, label and id, keeping only the
    /// selected edges in selection order.
    pub fn induce_subgraph(&self, selected: &EdgeSet) -> Result<Graph> {
        selected.check_parent(self)?;
        let edges = selected.iter().map(|i| self.edges[i]).collect();
        let edge_features = self
            .edge_features
            .as_ref()
            .map(|ef| ef.select(ndarray::Axis(0), selected.as_slice()));
        Ok(Graph {
            graph_id: self.graph_id.clone(),
            node_features: self.node_features.clone(),
            edges,
            edge_features,
            label: self.label,
        })
    }

    /// Edge indices not in `selected`, ascending.
    pub fn edge_complement(&self, selected: &EdgeSet) -> Result<EdgeSet> {
        selected.check_parent(self)?;
        let mut out = EdgeSet::empty(self);
        for i in 0..self.num_edges() {
            if !selected.contains(i) {
                out.push_unchecked(i);
            }
        }
        Ok(out)
    }

    /// Same graph with node `i` renamed to `perm[i]`; edges keep their order.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.num_nodes();
        let mut check = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut check[p], true)) {
            return Err(Error::Validation(format!(
                "node permutation for `{}` is not a permutation of 0..{n}",
                self.graph_id
            )));
        }
        let mut features = Array2::zeros(self.node_features.raw_dim());
        for (old, &new) in perm.iter().enumerate() {
            features.row_mut(new).assign(&self.node_features.row(old));
        }
        let edges = self.edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        Graph::new(
            self.graph_id.clone(),
            features,
            edges,
            self.edge_features.clone(),
            self.label,
        )
    }
}

/// Insertion-ordered set of edge indices into one parent graph.
///
/// The order is the selection order of a sequential explainer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSet {
    parent_id: String,
    order: Vec<usize>,
    member: Vec<bool>,
}

impl EdgeSet {
    pub fn empty(parent: &Graph) -> Self {
        EdgeSet {
            parent_id: parent.graph_id.clone(),
            order: Vec::new(),
            member: vec![false; parent.num_edges()],
        }
    }

    pub fn full(parent: &Graph) -> Self {
        EdgeSet {
            parent_id: parent.graph_id.clone(),
            order: (0..parent.num_edges()).collect(),
            member: vec![true; parent.num_edges()],
        }
    }

    pub fn from_indices(parent: &Graph, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut set = EdgeSet::empty(parent);
        for i in indices {
            set.insert(i)?;
        }
        Ok(set)
    }

    /// Appends an edge index; rejects duplicates and out-of-range indices.
    pub fn insert(&mut self, index: usize) -> Result<()> {
        if index >= self.member.len() {
            return Err(Error::InvalidEdgeSet {
                graph_id: self.parent_id.clone(),
                reason: format!("edge index {index} >= |E| = {}", self.member.len()),
            });
        }
        if self.member[index] {
            return Err(Error::InvalidEdgeSet {
                graph_id: self.parent_id.clone(),
                reason: format!("edge index {index} inserted twice"),
            });
        }
        self.push_unchecked(index);
        Ok(())
    }

    fn push_unchecked(&mut self, index: usize) {
        self.member[index] = true;
        self.order.push(index);
    }

    /// Copy of this set with `index` appended.
    pub fn with(&self, index: usize) -> Result<Self> {
        let mut next = self.clone();
        next.insert(index)?;
        Ok(next)
    }

    pub fn contains(&self, index: usize) -> bool {
        self.member.get(index).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn parent_id(&self) -> &str {
        &self.parent_id
    }

    /// Edge count of the parent graph.
    pub fn universe(&self) -> usize {
        self.member.len()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.order
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.order.iter().copied()
    }

    /// Indices in ascending order, ignoring insertion order.
    pub fn sorted(&self) -> Vec<usize> {
        let mut v = self.order.clone();
        v.sort_unstable();
        v
    }

    pub(crate) fn check_parent(&self, graph: &Graph) -> Result<()> {
        if self.member.len() != graph.num_edges() {
            return Err(Error::InvalidEdgeSet {
                graph_id: graph.graph_id.clone(),
                reason: format!(
                    "edge set built for {} edges, graph has {}",
                    self.member.len(),
                    graph.num_edges()
                ),
            });
        }
        Ok(())
    }
}
