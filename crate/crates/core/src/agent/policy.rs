use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::Trajectory;
use crate::gnn::{log_softmax, softmax, Dense, Encoder, EncoderTrace, ModelSpec, Tensors};
use crate::gnn::dense::{relu, relu_backward};
use crate::graph::{EdgeSet, Graph};

/// Layer widths of a policy network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySpec {
    /// Node feature width followed by the output width of each encoder layer.
    pub encoder_dims: Vec<usize>,
    /// Width of edge features; 0 when the graphs carry none.
    pub edge_feature_dim: usize,
    pub mlp1_hidden: usize,
    /// Width of an edge representation.
    pub edge_dim: usize,
    pub mlp2_hidden: usize,
    pub num_classes: usize,
}

impl PolicySpec {
    /// Encoder as deep as the target model's, every hidden width `width`.
    pub fn for_model(model: &ModelSpec, edge_feature_dim: usize, width: usize) -> Self {
        let mut encoder_dims = vec![model.input_dim()];
        encoder_dims.extend(std::iter::repeat_n(width, model.num_layers));
        PolicySpec {
            encoder_dims,
            edge_feature_dim,
            mlp1_hidden: width,
            edge_dim: width,
            mlp2_hidden: width,
            num_classes: model.num_classes,
        }
    }

    pub fn node_dim(&self) -> usize {
        *self.encoder_dims.last().expect("validated spec")
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_dims.len() < 2 {
            return Err(Error::Validation("policy encoder needs at least one layer".into()));
        }
        if self.encoder_dims.contains(&0)
            || self.mlp1_hidden == 0
            || self.edge_dim == 0
            || self.mlp2_hidden == 0
            || self.num_classes == 0
        {
            return Err(Error::Validation("policy widths and class count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Trainable policy parameters. The explained classifier is never stored here.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub spec: PolicySpec,
    pub encoder: Encoder,
    /// `[z_v ‖ z_u ‖ x_e] → hidden`
    pub mlp1_hidden: Dense,
    /// `hidden → z_e`
    pub mlp1_out: Dense,
    /// Shared first layer of the class heads, `[z_e ‖ s] → hidden`.
    pub mlp2_hidden: Dense,
    /// Row `c` scores actions when explaining class `c`.
    pub heads: Dense,
    pub param_version: u64,
}

impl PolicyParams {
    pub fn init(spec: &PolicySpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = spec.node_dim();
        let encoder = Encoder::init(&spec.encoder_dims, &mut rng);
        let mlp1_hidden = Dense::glorot(2 * d + spec.edge_feature_dim, spec.mlp1_hidden, &mut rng);
        let mlp1_out = Dense::glorot(spec.mlp1_hidden, spec.edge_dim, &mut rng);
        let mlp2_hidden = Dense::glorot(spec.edge_dim + d, spec.mlp2_hidden, &mut rng);
        let heads = Dense::glorot(spec.mlp2_hidden, spec.num_classes, &mut rng);
        Ok(PolicyParams {
            spec: spec.clone(),
            encoder,
            mlp1_hidden,
            mlp1_out,
            mlp2_hidden,
            heads,
            param_version: 0,
        })
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        PolicyParams {
            spec: self.spec.clone(),
            encoder: self.encoder.zeros_like(),
            mlp1_hidden: self.mlp1_hidden.zeros_like(),
            mlp1_out: self.mlp1_out.zeros_like(),
            mlp2_hidden: self.mlp2_hidden.zeros_like(),
            heads: self.heads.zeros_like(),
            param_version: self.param_version,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.spec;
        s.validate()?;
        let d = s.node_dim();
        self.encoder.check_dims(&s.encoder_dims, "policy")?;
        self.mlp1_hidden.check_shape("policy mlp1 hidden", 2 * d + s.edge_feature_dim, s.mlp1_hidden)?;
        self.mlp1_out.check_shape("policy mlp1 out", s.mlp1_hidden, s.edge_dim)?;
        self.mlp2_hidden.check_shape("policy mlp2 hidden", s.edge_dim + d, s.mlp2_hidden)?;
        self.heads.check_shape("policy class heads", s.mlp2_hidden, s.num_classes)?;
        Ok(())
    }

    /// Node and edge representations of the full graph; computed once per
    /// graph and reused across every step of a rollout.
    pub fn encode(&self, graph: &Graph) -> Result<PolicyEncoding> {
        if graph.edge_feature_dim() != self.spec.edge_feature_dim {
            return Err(Error::Shape {
                layer: "policy mlp1 edge features".into(),
                expected: format!("{} edge feature columns", self.spec.edge_feature_dim),
                got: format!("{}", graph.edge_feature_dim()),
            });
        }
        let trace = self.encoder.encode(graph.node_features(), graph.edges())?;
        let z = &trace.nodes;
        let d = self.spec.node_dim();
        let width = 2 * d + self.spec.edge_feature_dim;
        let mut edge_inputs = Array2::zeros((graph.num_edges(), width));
        for (i, &(v, u)) in graph.edges().iter().enumerate() {
            let mut row = edge_inputs.row_mut(i);
            row.slice_mut(s![..d]).assign(&z.row(v));
            row.slice_mut(s![d..2 * d]).assign(&z.row(u));
            if let Some(x) = graph.edge_features() {
                row.slice_mut(s![2 * d..]).assign(&x.row(i));
            }
        }
        let mlp1_pre = self.mlp1_hidden.forward_rows(edge_inputs.view());
        let mlp1_act = relu(&mlp1_pre);
        let edge_reps = self.mlp1_out.forward_rows(mlp1_act.view());
        Ok(PolicyEncoding {
            graph_id: graph.graph_id().to_string(),
            num_edges: graph.num_edges(),
            edges: graph.edges().to_vec(),
            trace,
            edge_inputs,
            mlp1_pre,
            mlp1_act,
            edge_reps,
        })
    }

    /// Candidate scores for one state, plus what backward needs.
    pub(crate) fn step(
        &self,
        enc: &PolicyEncoding,
        selected: &EdgeSet,
        target_class: usize,
    ) -> Result<(ActionDistribution, StepCache)> {
        if target_class >= self.spec.num_classes {
            return Err(Error::OutOfRange {
                what: "target class",
                reason: format!("{target_class} >= {} policy heads", self.spec.num_classes),
            });
        }
        if selected.universe() != enc.num_edges || selected.parent_id() != enc.graph_id {
            return Err(Error::InvalidEdgeSet {
                graph_id: enc.graph_id.clone(),
                reason: format!("selection belongs to graph `{}`", selected.parent_id()),
            });
        }
        let candidates: Vec<usize> = (0..enc.num_edges).filter(|&e| !selected.contains(e)).collect();
        if candidates.is_empty() {
            return Err(Error::NoAction);
        }
        let (state, incident) = enc.state(selected);
        let d = self.spec.node_dim();
        let de = self.spec.edge_dim;
        let mut inputs = Array2::zeros((candidates.len(), de + d));
        for (i, &e) in candidates.iter().enumerate() {
            let mut row = inputs.row_mut(i);
            row.slice_mut(s![..de]).assign(&enc.edge_reps.row(e));
            row.slice_mut(s![de..]).assign(&state);
        }
        let hidden_pre = self.mlp2_hidden.forward_rows(inputs.view());
        let hidden = relu(&hidden_pre);
        let head = self.heads.w.row(target_class);
        let logits = hidden.dot(&head) + self.heads.b[target_class];
        let dist = ActionDistribution::from_logits(candidates, logits.to_vec());
        Ok((
            dist,
            StepCache {
                incident,
                inputs,
                hidden_pre,
                hidden,
            },
        ))
    }
}

impl Tensors for PolicyParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = self.encoder.tensors();
        out.extend(self.mlp1_hidden.tensors());
        out.extend(self.mlp1_out.tensors());
        out.extend(self.mlp2_hidden.tensors());
        out.extend(self.heads.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let PolicyParams {
            encoder,
            mlp1_hidden,
            mlp1_out,
            mlp2_hidden,
            heads,
            ..
        } = self;
        let mut out = encoder.tensors_mut();
        out.extend(mlp1_hidden.tensors_mut());
        out.extend(mlp1_out.tensors_mut());
        out.extend(mlp2_hidden.tensors_mut());
        out.extend(heads.tensors_mut());
        out
    }
}

/// The policy's view of one full graph.
#[derive(Debug, Clone)]
pub struct PolicyEncoding {
    graph_id: String,
    num_edges: usize,
    edges: Vec<(usize, usize)>,
    trace: EncoderTrace,
    edge_inputs: Array2<f64>,
    mlp1_pre: Array2<f64>,
    mlp1_act: Array2<f64>,
    /// `z_e` per edge, `|E| × d''`.
    pub edge_reps: Array2<f64>,
}

impl PolicyEncoding {
    /// Node representations `z_v` from the policy encoder on the full graph.
    pub fn node_reps(&self) -> &Array2<f64> {
        &self.trace.nodes
    }

    /// Mean node representation over nodes touched by `selected` (zero when
    /// empty), with those nodes in ascending order.
    fn state(&self, selected: &EdgeSet) -> (Array1<f64>, Vec<usize>) {
        let mut nodes: Vec<usize> = selected
            .iter()
            .flat_map(|e| {
                let (a, b) = self.edges[e];
                [a, b]
            })
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        let z = &self.trace.nodes;
        let mut state = Array1::zeros(z.ncols());
        for &v in &nodes {
            state += &z.row(v);
        }
        if !nodes.is_empty() {
            state /= nodes.len() as f64;
        }
        (state, nodes)
    }

    pub(crate) fn relu_pattern(&self) -> Vec<bool> {
        let mut p = self.trace.relu_pattern();
        p.extend(self.mlp1_pre.iter().map(|&v| v > 0.0));
        p
    }
}

pub(crate) struct StepCache {
    incident: Vec<usize>,
    inputs: Array2<f64>,
    hidden_pre: Array2<f64>,
    hidden: Array2<f64>,
}

/// Policy distribution over the edges not yet selected.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    /// Candidate edge indices in ascending order.
    pub candidates: Vec<usize>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn from_logits(candidates: Vec<usize>, logits: Vec<f64>) -> Self {
        let view = ArrayView1::from(&logits[..]);
        let probs = softmax(view).to_vec();
        let log_probs = log_softmax(view).to_vec();
        ActionDistribution {
            candidates,
            logits,
            probs,
            log_probs,
        }
    }

    pub fn position(&self, edge: usize) -> Option<usize> {
        self.candidates.binary_search(&edge).ok()
    }

    /// Highest log-probability candidate position; the lowest edge index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &lp) in self.log_probs.iter().enumerate().skip(1) {
            if lp > self.log_probs[best] {
                best = i;
            }
        }
        best
    }
}

/// `z_e` for one edge, with the encoder run on the full graph.
pub fn action_representation(policy: &PolicyParams, graph: &Graph, edge: usize) -> Result<Array1<f64>> {
    if edge >= graph.num_edges() {
        return Err(Error::OutOfRange {
            what: "edge index",
            reason: format!("{edge} >= |E| = {}", graph.num_edges()),
        });
    }
    Ok(policy.encode(graph)?.edge_reps.row(edge).to_owned())
}

pub fn state_representation(policy: &PolicyParams, graph: &Graph, selected: &EdgeSet) -> Result<Array1<f64>> {
    selected.check_parent(graph)?;
    Ok(policy.encode(graph)?.state(selected).0)
}

pub fn action_distribution(
    policy: &PolicyParams,
    graph: &Graph,
    selected: &EdgeSet,
    target_class: usize,
) -> Result<ActionDistribution> {
    selected.check_parent(graph)?;
    Ok(policy.step(&policy.encode(graph)?, selected, target_class)?.0)
}

/// REINFORCE loss `−(1/B) Σ_graphs Σ_k R_k · ln P(e_k | state_k)` over fixed
/// trajectories and its gradient with respect to every policy parameter.
///
/// Per-graph gradients are computed in parallel and summed in graph-id order.
pub fn policy_loss_and_grad(policy: &PolicyParams, batch: &[(&Graph, &Trajectory)]) -> Result<(f64, PolicyParams)> {
    if batch.is_empty() {
        return Err(Error::Validation("empty trajectory batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut parts: Vec<(&str, f64, PolicyParams)> = batch
        .par_iter()
        .map(|(g, t)| {
            let (loss, grad) = trajectory_grad(policy, g, t, scale)?;
            Ok((g.graph_id(), loss, grad))
        })
        .collect::<Result<_>>()?;
    parts.sort_by(|a, b| a.0.cmp(b.0));
    let mut total = policy.zeros_like();
    let mut loss = 0.0;
    for (_, l, g) in &parts {
        loss += l;
        for (acc, part) in total.tensors_mut().into_iter().zip(g.tensors()) {
            for (a, p) in acc.iter_mut().zip(part) {
                *a += p;
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("policy loss".into()));
    }
    Ok((loss, total))
}

fn trajectory_grad(policy: &PolicyParams, graph: &Graph, traj: &Trajectory, scale: f64) -> Result<(f64, PolicyParams)> {
    if traj.graph_id != graph.graph_id() {
        return Err(Error::Validation(format!(
            "trajectory for `{}` paired with graph `{}`",
            traj.graph_id,
            graph.graph_id()
        )));
    }
    let enc = policy.encode(graph)?;
    let mut grad = policy.zeros_like();
    let d = policy.spec.node_dim();
    let de = policy.spec.edge_dim;
    let c = traj.target_class;
    let mut d_edge_reps = Array2::<f64>::zeros(enc.edge_reps.raw_dim());
    let mut d_nodes = Array2::<f64>::zeros(enc.trace.nodes.raw_dim());
    let mut selected = EdgeSet::empty(graph);
    let mut loss = 0.0;
    for step in &traj.steps {
        let (dist, cache) = policy.step(&enc, &selected, c)?;
        let j = dist.position(step.edge).ok_or(Error::InvalidAction { edge: step.edge })?;
        loss -= scale * step.reward * dist.log_probs[j];
        let coef = scale * step.reward;
        if coef != 0.0 {
            let mut d_logits = Array1::from(dist.probs.clone());
            d_logits[j] -= 1.0;
            d_logits *= coef;
            // logits = hidden · w_c + b_c
            {
                let mut gw = grad.heads.w.row_mut(c);
                gw += &cache.hidden.t().dot(&d_logits);
            }
            grad.heads.b[c] += d_logits.sum();
            let head = policy.heads.w.row(c);
            let d_hidden = d_logits
                .view()
                .insert_axis(Axis(1))
                .dot(&head.insert_axis(Axis(0)));
            let d_pre = relu_backward(&cache.hidden_pre, &d_hidden);
            let d_inputs = policy
                .mlp2_hidden
                .backward_rows(cache.inputs.view(), d_pre.view(), &mut grad.mlp2_hidden);
            for (i, &e) in dist.candidates.iter().enumerate() {
                let mut row = d_edge_reps.row_mut(e);
                row += &d_inputs.slice(s![i, ..de]);
            }
            if !cache.incident.is_empty() {
                let d_state = d_inputs.slice(s![.., de..]).sum_axis(Axis(0)) / cache.incident.len() as f64;
                for &v in &cache.incident {
                    let mut row = d_nodes.row_mut(v);
                    row += &d_state;
                }
            }
        }
        selected.insert(step.edge)?;
    }
    let d_act = policy
        .mlp1_out
        .backward_rows(enc.mlp1_act.view(), d_edge_reps.view(), &mut grad.mlp1_out);
    let d_pre = relu_backward(&enc.mlp1_pre, &d_act);
    let d_in = policy
        .mlp1_hidden
        .backward_rows(enc.edge_inputs.view(), d_pre.view(), &mut grad.mlp1_hidden);
    for (i, &(v, u)) in enc.edges.iter().enumerate() {
        {
            let mut row = d_nodes.row_mut(v);
            row += &d_in.slice(s![i, ..d]);
        }
        let mut row = d_nodes.row_mut(u);
        row += &d_in.slice(s![i, d..2 * d]);
    }
    policy.encoder.backward(&enc.trace, &d_nodes, &mut grad.encoder);
    Ok((loss, grad))
}

/// Rectifier sign pattern of everything the loss on `batch` passes through;
/// finite-difference checks skip coordinates where it changes.
pub fn loss_relu_pattern(policy: &PolicyParams, batch: &[(&Graph, &Trajectory)]) -> Result<Vec<bool>> {
    let mut pattern = Vec::new();
    for (g, t) in batch {
        let enc = policy.encode(g)?;
        pattern.extend(enc.relu_pattern());
        let mut selected = EdgeSet::empty(g);
        for step in &t.steps {
            let (_, cache) = policy.step(&enc, &selected, t.target_class)?;
            pattern.extend(cache.hidden_pre.iter().map(|&v| v > 0.0));
            selected.insert(step.edge)?;
        }
    }
    Ok(pattern)
}
