//! Planted-motif synthetic graphs with known explanatory edges.
//!
//! Each graph is a random tree plus a few chords (the base), with one motif
//! attached by a single bridge edge:
//!
//! | class | motif        | motif edges |
//! |-------|--------------|-------------|
//! | 0     | triangle     | 3           |
//! | 1     | square       | 4           |
//! | 2     | 5-star       | 5           |
//!
//! The base never contains a triangle, a 4-cycle or a star with five leaves:
//! chords only join nodes at distance ≥ 4 and base degrees are capped at 4.
//! The star hangs off the base by one of its leaves, so its center has degree
//! 5 like a saturated base anchor. Node features are the one-hot full-graph
//! degree, padded to [`DEGREE_FEATURES`] columns.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{EdgeSet, Graph};

/// Width of the degree one-hot; degrees at or above `DEGREE_FEATURES - 1` share the last column.
pub const DEGREE_FEATURES: usize = 8;

const BASE_MAX_DEGREE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motif {
    Triangle,
    Square,
    Star,
}

impl Motif {
    pub fn for_class(class: usize) -> Option<Motif> {
        match class {
            0 => Some(Motif::Triangle),
            1 => Some(Motif::Square),
            2 => Some(Motif::Star),
            _ => None,
        }
    }

    pub fn num_nodes(self) -> usize {
        match self {
            Motif::Triangle => 3,
            Motif::Square => 4,
            Motif::Star => 6,
        }
    }

    /// Edges over local node ids `0..num_nodes`, and the local node that
    /// carries the bridge to the base.
    fn edges(self) -> (Vec<(usize, usize)>, usize) {
        match self {
            Motif::Triangle => (vec![(0, 1), (1, 2), (0, 2)], 0),
            Motif::Square => (vec![(0, 1), (1, 2), (2, 3), (0, 3)], 0),
            Motif::Star => ((1..6).map(|leaf| (0, leaf)).collect(), 1),
        }
    }

    /// Whether `edges` (over any node ids) have exactly this motif's shape.
    pub fn matches(self, edges: &[(usize, usize)]) -> bool {
        let mut nodes: Vec<usize> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
        nodes.sort_unstable();
        nodes.dedup();
        let degree = |v: usize| edges.iter().filter(|&&(a, b)| a == v || b == v).count();
        let mut degrees: Vec<usize> = nodes.iter().map(|&v| degree(v)).collect();
        degrees.sort_unstable();
        let connected = is_connected(&nodes, edges);
        connected
            && match self {
                Motif::Triangle => edges.len() == 3 && degrees == [2, 2, 2],
                Motif::Square => edges.len() == 4 && degrees == [2, 2, 2, 2],
                Motif::Star => edges.len() == 5 && degrees == [1, 1, 1, 1, 1, 5],
            }
    }
}

fn is_connected(nodes: &[usize], edges: &[(usize, usize)]) -> bool {
    let Some(&start) = nodes.first() else {
        return true;
    };
    let mut seen = vec![start];
    let mut stack = vec![start];
    while let Some(v) = stack.pop() {
        for &(a, b) in edges {
            let other = if a == v {
                b
            } else if b == v {
                a
            } else {
                continue;
            };
            if !seen.contains(&other) {
                seen.push(other);
                stack.push(other);
            }
        }
    }
    seen.len() == nodes.len()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotifConfig {
    pub n_graphs: usize,
    pub n_classes: usize,
    pub base_nodes: usize,
    pub seed: u64,
}

/// Generates a balanced planted-motif dataset with every graph in the
/// training split; pass it through [`crate::dataset::split`] afterwards.
pub fn generate_planted_motif(config: &MotifConfig) -> Result<Dataset> {
    if config.n_graphs < 30 {
        return Err(Error::Validation(format!("need at least 30 graphs, got {}", config.n_graphs)));
    }
    if config.base_nodes < 8 {
        return Err(Error::Validation(format!(
            "need at least 8 base nodes, got {}",
            config.base_nodes
        )));
    }
    if !(2..=3).contains(&config.n_classes) {
        return Err(Error::Validation(format!(
            "planted-motif data supports 2 or 3 classes, got {}",
            config.n_classes
        )));
    }
    let items: Vec<(Graph, EdgeSet)> = (0..config.n_graphs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let class = i % config.n_classes;
            planted_graph(&format!("pm-{i:04}"), class, config.base_nodes, &mut rng)
        })
        .collect::<Result<_>>()?;
    let (graphs, truth): (Vec<Graph>, Vec<EdgeSet>) = items.into_iter().unzip();
    Dataset::unsplit(graphs, truth.into_iter().map(Some).collect(), config.n_classes)
}

fn planted_graph(id: &str, class: usize, base_nodes: usize, rng: &mut ChaCha8Rng) -> Result<(Graph, EdgeSet)> {
    let motif = Motif::for_class(class).expect("class checked by caller");
    let mut edges = base_graph(base_nodes, rng);

    let (local, bridge_local) = motif.edges();
    let offset = base_nodes;
    let motif_edges: Vec<(usize, usize)> = local.iter().map(|&(a, b)| (a + offset, b + offset)).collect();
    let degrees = degrees(base_nodes, &edges);
    let anchors: Vec<usize> = (0..base_nodes).filter(|&v| degrees[v] < BASE_MAX_DEGREE + 1).collect();
    let anchor = *anchors.choose(rng).expect("base degrees are capped below the anchor limit");
    edges.push((anchor, bridge_local + offset));
    edges.extend(&motif_edges);

    let n = base_nodes + motif.num_nodes();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut relabelled: Vec<(usize, usize)> = edges
        .iter()
        .map(|&(a, b)| {
            let (x, y) = (perm[a], perm[b]);
            (x.min(y), x.max(y))
        })
        .collect();
    relabelled.sort_unstable();
    let truth_pairs: Vec<(usize, usize)> = motif_edges
        .iter()
        .map(|&(a, b)| {
            let (x, y) = (perm[a], perm[b]);
            (x.min(y), x.max(y))
        })
        .collect();
    let features = degree_one_hot(n, &relabelled);
    let graph = Graph::new(id, features, relabelled, None, class)?;
    let truth = EdgeSet::from_indices(
        &graph,
        truth_pairs
            .iter()
            .map(|p| graph.edges().binary_search(p).expect("motif edge present")),
    )?;
    Ok((graph, truth))
}

/// Random tree with degrees ≤ 4 plus chords between nodes at distance ≥ 4.
fn base_graph(n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(n + n / 4);
    let mut deg = vec![0usize; n];
    for v in 1..n {
        let open: Vec<usize> = (0..v).filter(|&u| deg[u] < BASE_MAX_DEGREE).collect();
        let u = *open.choose(rng).expect("a tree with degree cap 4 always has an open node");
        edges.push((u, v));
        deg[u] += 1;
        deg[v] += 1;
    }
    let chords = rng.gen_range(1..=(n / 4).max(1));
    for _ in 0..chords {
        let candidates: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .filter(|&(a, b)| deg[a] < BASE_MAX_DEGREE && deg[b] < BASE_MAX_DEGREE)
            .filter(|&(a, b)| distance(n, &edges, a, b).is_none_or(|d| d >= 4))
            .collect();
        let Some(&(a, b)) = candidates.choose(rng) else {
            break;
        };
        edges.push((a, b));
        deg[a] += 1;
        deg[b] += 1;
    }
    edges
}

fn distance(n: usize, edges: &[(usize, usize)], from: usize, to: usize) -> Option<usize> {
    let mut dist = vec![usize::MAX; n];
    dist[from] = 0;
    let mut queue = std::collections::VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        if v == to {
            return Some(dist[v]);
        }
        for &(a, b) in edges {
            let other = if a == v {
                b
            } else if b == v {
                a
            } else {
                continue;
            };
            if dist[other] == usize::MAX {
                dist[other] = dist[v] + 1;
                queue.push_back(other);
            }
        }
    }
    None
}

fn degrees(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut deg = vec![0; n];
    for &(a, b) in edges {
        deg[a] += 1;
        deg[b] += 1;
    }
    deg
}

pub fn degree_one_hot(n: usize, edges: &[(usize, usize)]) -> Array2<f64> {
    let deg = degrees(n, edges);
    let mut x = Array2::zeros((n, DEGREE_FEATURES));
    for (v, &d) in deg.iter().enumerate() {
        x[[v, d.min(DEGREE_FEATURES - 1)]] = 1.0;
    }
    x
}

/// Connected random graph with exactly `num_edges` edges over `num_nodes`
/// nodes and degree one-hot features; used for scaling benchmarks.
pub fn random_connected_graph(id: &str, num_nodes: usize, num_edges: usize, seed: u64) -> Result<Graph> {
    let max_edges = num_nodes * num_nodes.saturating_sub(1) / 2;
    if num_nodes < 2 || num_edges + 1 < num_nodes || num_edges > max_edges {
        return Err(Error::Validation(format!(
            "cannot build a connected simple graph with {num_nodes} nodes and {num_edges} edges"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = (1..num_nodes).map(|v| (rng.gen_range(0..v), v)).collect();
    let mut present: std::collections::HashSet<(usize, usize)> = edges.iter().copied().collect();
    let mut rest: Vec<(usize, usize)> = (0..num_nodes)
        .flat_map(|a| (a + 1..num_nodes).map(move |b| (a, b)))
        .filter(|p| !present.contains(p))
        .collect();
    rest.shuffle(&mut rng);
    for p in rest.into_iter().take(num_edges - edges.len()) {
        present.insert(p);
        edges.push(p);
    }
    edges.sort_unstable();
    Graph::new(id, degree_one_hot(num_nodes, &edges), edges, None, 0)
}
