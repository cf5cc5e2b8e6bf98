//! Datasets of labelled graphs: splits, ground truth and the JSON file format.
//!
//! File layout (`schema_version` 1, keys written in this order):
//!
//! ```text
//! {
//!   "schema_version": 1,
//!   "num_classes": C,
//!   "split_ratios": [train, valid, test] | null,
//!   "graphs": [
//!     { "graph_id", "num_nodes", "node_features": [[f64]], "edges": [[u, v]],
//!       "edge_features"?: [[f64]], "label", "ground_truth_edges"?: [edge index] }
//!   ],
//!   "splits": { "train": [graph index], "valid": [...], "test": [...] }
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so write-then-read is the
//! identity bit for bit.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::graph::{EdgeSet, Graph};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Valid, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Valid => "valid",
            SplitName::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "valid" => Ok(SplitName::Valid),
            "test" => Ok(SplitName::Test),
            other => Err(Error::Validation(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn get(&self, name: SplitName) -> &[usize] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Valid => &self.valid,
            SplitName::Test => &self.test,
        }
    }

    fn get_mut(&mut self, name: SplitName) -> &mut Vec<usize> {
        match name {
            SplitName::Train => &mut self.train,
            SplitName::Valid => &mut self.valid,
            SplitName::Test => &mut self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graphs: Vec<Graph>,
    pub splits: Splits,
    /// Motif edges per graph, aligned with `graphs`.
    pub ground_truth: Vec<Option<EdgeSet>>,
    pub num_classes: usize,
    /// Ratios the splits were drawn with, if they came from [`split`].
    pub split_ratios: Option<[f64; 3]>,
}

impl Dataset {
    /// Assembles a dataset with every graph in the training split.
    pub fn unsplit(graphs: Vec<Graph>, ground_truth: Vec<Option<EdgeSet>>, num_classes: usize) -> Result<Self> {
        let splits = Splits {
            train: (0..graphs.len()).collect(),
            ..Splits::default()
        };
        let ds = Dataset {
            graphs,
            splits,
            ground_truth,
            num_classes,
            split_ratios: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn split_graphs(&self, name: SplitName) -> impl Iterator<Item = &Graph> + '_ {
        self.splits.get(name).iter().map(move |&i| &self.graphs[i])
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs.first().map_or(0, Graph::feature_dim)
    }

    /// Checks every cross-graph and split invariant.
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::Validation("num_classes must be at least 1".into()));
        }
        if self.ground_truth.len() != self.graphs.len() {
            return Err(Error::Validation(format!(
                "{} ground-truth entries for {} graphs",
                self.ground_truth.len(),
                self.graphs.len()
            )));
        }
        let d = self.feature_dim();
        let mut ids = std::collections::HashSet::new();
        for (g, truth) in self.graphs.iter().zip(&self.ground_truth) {
            if g.feature_dim() != d {
                return Err(Error::Validation(format!(
                    "graph `{}` has feature dimension {}, expected {d}",
                    g.graph_id(),
                    g.feature_dim()
                )));
            }
            if g.label() >= self.num_classes {
                return Err(Error::Validation(format!(
                    "graph `{}` has label {} but num_classes = {}",
                    g.graph_id(),
                    g.label(),
                    self.num_classes
                )));
            }
            if !ids.insert(g.graph_id()) {
                return Err(Error::Validation(format!("duplicate graph_id `{}`", g.graph_id())));
            }
            if let Some(t) = truth {
                if t.parent_id() != g.graph_id() || t.universe() != g.num_edges() {
                    return Err(Error::Validation(format!(
                        "ground truth of `{}` does not belong to it",
                        g.graph_id()
                    )));
                }
            }
        }
        let n = self.graphs.len();
        let mut seen = vec![false; n];
        for name in SplitName::ALL {
            for &i in self.splits.get(name) {
                if i >= n {
                    return Err(Error::Validation(format!(
                        "split `{}` references graph index {i}, dataset has {n} graphs",
                        name.as_str()
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Validation(format!(
                        "graph index {i} appears in more than one split slot"
                    )));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Validation(format!(
                "graph index {missing} is not assigned to any split"
            )));
        }
        Ok(())
    }
}

/// Seeded split stratified by class label.
///
/// Overall split sizes follow the largest-remainder rounding of `n * ratio`;
/// every class lands within one graph of its exact per-split proportion.
pub fn split(dataset: &Dataset, ratios: [f64; 3], seed: u64) -> Result<Dataset> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!("split ratios {ratios:?} must be in [0,1] and sum to 1")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes];
    for (i, g) in dataset.graphs.iter().enumerate() {
        by_class[g.label()].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < 3 {
            return Err(Error::Validation(format!(
                "class {c} has {} graphs; stratified splitting needs at least 3",
                members.len()
            )));
        }
    }

    let totals = largest_remainder(dataset.graphs.len(), &ratios);
    let mut alloc: Vec<[usize; 3]> = Vec::with_capacity(by_class.len());
    let mut leftover: Vec<(usize, usize)> = Vec::new();
    let mut need = totals;
    for (c, members) in by_class.iter().enumerate() {
        let mut a = [0usize; 3];
        for s in 0..3 {
            a[s] = (members.len() as f64 * ratios[s]).floor() as usize;
            need[s] -= a[s];
        }
        leftover.push((members.len() - a.iter().sum::<usize>(), c));
        alloc.push(a);
    }
    // Gale–Ryser style fill: largest class leftovers first, each unit to a
    // distinct split with the most outstanding demand.
    leftover.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for (count, c) in leftover {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| need[b].cmp(&need[a]).then(a.cmp(&b)));
        for &s in order.iter().take(count) {
            if need[s] == 0 {
                return Err(Error::Validation("stratified split allocation failed".into()));
            }
            alloc[c][s] += 1;
            need[s] -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = Splits::default();
    for (c, members) in by_class.iter().enumerate() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        let mut rest = shuffled.as_slice();
        for (s, name) in SplitName::ALL.into_iter().enumerate() {
            let (take, tail) = rest.split_at(alloc[c][s]);
            splits.get_mut(name).extend_from_slice(take);
            rest = tail;
        }
    }
    for name in SplitName::ALL {
        splits.get_mut(name).sort_unstable();
    }
    let out = Dataset {
        splits,
        split_ratios: Some(ratios),
        ..dataset.clone()
    };
    out.validate()?;
    Ok(out)
}

fn largest_remainder(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| n as f64 * r).collect();
    let mut out = [0usize; 3];
    for s in 0..3 {
        out[s] = exact[s].floor() as usize;
    }
    let mut rem = n - out.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &s in order.iter().cycle() {
        if rem == 0 {
            break;
        }
        out[s] += 1;
        rem -= 1;
    }
    out
}

#[derive(Serialize)]
struct GraphRecordOut<'a> {
    graph_id: &'a str,
    num_nodes: usize,
    node_features: Vec<Vec<f64>>,
    edges: &'a [(usize, usize)],
    #[serde(skip_serializing_if = "Option::is_none")]
    edge_features: Option<Vec<Vec<f64>>>,
    label: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    ground_truth_edges: Option<&'a [usize]>,
}

#[derive(Serialize)]
struct DatasetOut<'a> {
    schema_version: u32,
    num_classes: usize,
    split_ratios: Option<[f64; 3]>,
    graphs: Vec<GraphRecordOut<'a>>,
    splits: &'a Splits,
}

pub(crate) fn matrix_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], cols_if_empty: usize) -> std::result::Result<Array2<f64>, String> {
    let cols = rows.first().map_or(cols_if_empty, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(format!("row {i} has {} entries, expected {cols}", r.len()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), cols), flat).map_err(|e| e.to_string())
}

pub fn to_json(dataset: &Dataset) -> Result<String> {
    dataset.validate()?;
    let graphs = dataset
        .graphs
        .iter()
        .zip(&dataset.ground_truth)
        .map(|(g, truth)| GraphRecordOut {
            graph_id: g.graph_id(),
            num_nodes: g.num_nodes(),
            node_features: matrix_rows(g.node_features()),
            edges: g.edges(),
            edge_features: g.edge_features().map(matrix_rows),
            label: g.label(),
            ground_truth_edges: truth.as_ref().map(EdgeSet::as_slice),
        })
        .collect();
    let doc = DatasetOut {
        schema_version: DATASET_SCHEMA_VERSION,
        num_classes: dataset.num_classes,
        split_ratios: dataset.split_ratios,
        graphs,
        splits: &dataset.splits,
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Validation(e.to_string()))
}

pub fn write_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let mut text = to_json(dataset)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}

const DOC: &str = "<dataset>";

fn parse_err(graph_id: &str, field: &str, reason: impl ToString) -> Error {
    Error::Parse {
        graph_id: graph_id.to_string(),
        field: field.to_string(),
        reason: reason.to_string(),
    }
}

fn field<T: for<'de> Deserialize<'de>>(obj: &Map<String, Value>, name: &str, graph_id: &str) -> Result<T> {
    let v = obj.get(name).ok_or_else(|| parse_err(graph_id, name, "missing"))?;
    T::deserialize(v).map_err(|e| parse_err(graph_id, name, e))
}

fn optional_field<T: for<'de> Deserialize<'de>>(
    obj: &Map<String, Value>,
    name: &str,
    graph_id: &str,
) -> Result<Option<T>> {
    match obj.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => T::deserialize(v).map(Some).map_err(|e| parse_err(graph_id, name, e)),
    }
}

pub fn from_json(text: &str) -> Result<Dataset> {
    let doc: Value = serde_json::from_str(text).map_err(|e| parse_err(DOC, "<document>", e))?;
    let root = doc
        .as_object()
        .ok_or_else(|| parse_err(DOC, "<document>", "top level is not an object"))?;
    let version: u32 = field(root, "schema_version", DOC)?;
    if version != DATASET_SCHEMA_VERSION {
        return Err(parse_err(
            DOC,
            "schema_version",
            format!("unsupported version {version}, expected {DATASET_SCHEMA_VERSION}"),
        ));
    }
    let num_classes: usize = field(root, "num_classes", DOC)?;
    let split_ratios: Option<[f64; 3]> = optional_field(root, "split_ratios", DOC)?;
    let splits: Splits = field(root, "splits", DOC)?;
    let records: Vec<Value> = field(root, "graphs", DOC)?;

    let mut graphs = Vec::with_capacity(records.len());
    let mut ground_truth = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let placeholder = format!("<graph #{i}>");
        let obj = rec
            .as_object()
            .ok_or_else(|| parse_err(&placeholder, "<record>", "graph record is not an object"))?;
        let graph_id: String = field(obj, "graph_id", &placeholder)?;
        let gid = graph_id.as_str();
        let num_nodes: usize = field(obj, "num_nodes", gid)?;
        let features: Vec<Vec<f64>> = field(obj, "node_features", gid)?;
        if features.len() != num_nodes {
            return Err(parse_err(
                gid,
                "node_features",
                format!("{} rows but num_nodes = {num_nodes}", features.len()),
            ));
        }
        let node_features = matrix_from_rows(&features, 0).map_err(|e| parse_err(gid, "node_features", e))?;
        let edges: Vec<(usize, usize)> = field(obj, "edges", gid)?;
        let edge_features = optional_field::<Vec<Vec<f64>>>(obj, "edge_features", gid)?
            .map(|rows| matrix_from_rows(&rows, 0).map_err(|e| parse_err(gid, "edge_features", e)))
            .transpose()?;
        let label: usize = field(obj, "label", gid)?;
        let truth: Option<Vec<usize>> = optional_field(obj, "ground_truth_edges", gid)?;

        let graph = Graph::new(graph_id.clone(), node_features, edges, edge_features, label)
            .map_err(|e| Error::Validation(e.to_string()))?;
        let truth = truth
            .map(|t| EdgeSet::from_indices(&graph, t).map_err(|e| Error::Validation(e.to_string())))
            .transpose()?;
        graphs.push(graph);
        ground_truth.push(truth);
    }
    let ds = Dataset {
        graphs,
        splits,
        ground_truth,
        num_classes,
        split_ratios,
    };
    ds.validate()?;
    Ok(ds)
}
