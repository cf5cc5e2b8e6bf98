//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use itertools::Itertools;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rcx_core::agent::{action_distribution, loss_relu_pattern, policy_loss_and_grad, PolicyParams, PolicySpec};
use rcx_core::attribution::{AttributionContext, RewardMode};
use rcx_core::explain::{Step, Trajectory};
use rcx_core::gnn::{cross_entropy, ModelParams, ModelSpec, Readout, Tensors};
use rcx_core::{EdgeSet, Graph};

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for relative errors, so entries whose true gradient is
/// ~0 are judged on absolute error at this scale.
pub const REL_FLOOR: f64 = 1e-6;

/// Random simple graph with `n` nodes and up to `m` edges, continuous
/// node features of width `feat` and optional edge features.
pub fn random_graph(id: &str, rng: &mut ChaCha8Rng, n: usize, m: usize, feat: usize, edge_feat: usize) -> Graph {
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    pairs.shuffle(rng);
    pairs.truncate(m);
    pairs.sort_unstable();
    let x = Array2::from_shape_simple_fn((n, feat), || rng.gen_range(-1.0..1.0));
    let ef = (edge_feat > 0).then(|| Array2::from_shape_simple_fn((pairs.len(), edge_feat), || rng.gen_range(-1.0..1.0)));
    Graph::new(id, x, pairs, ef, rng.gen_range(0..3)).unwrap()
}

#[derive(Debug, Default, Clone, Copy)]
pub struct FdReport {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_err: f64,
}

impl FdReport {
    pub fn merge(&mut self, other: FdReport) {
        self.checked += other.checked;
        self.skipped_kinks += other.skipped_kinks;
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
    }
}

/// Central differences of `loss` at `theta` against `analytic`, skipping
/// coordinates where a rectifier changes side within ±h (the loss is not
/// differentiable there, so the difference quotient is meaningless).
pub fn central_differences<P: Tensors + Clone>(
    params: &P,
    analytic: &[f64],
    loss: impl Fn(&P) -> f64,
    pattern: impl Fn(&P) -> Vec<bool>,
) -> FdReport {
    let theta = params.to_flat();
    let base = pattern(params);
    let mut report = FdReport::default();
    let mut probe = params.clone();
    for i in 0..theta.len() {
        let mut t = theta.clone();
        t[i] = theta[i] + FD_STEP;
        probe.set_flat(&t);
        let up = loss(&probe);
        let up_pattern = pattern(&probe);
        t[i] = theta[i] - FD_STEP;
        probe.set_flat(&t);
        let down = loss(&probe);
        let down_pattern = pattern(&probe);
        if up_pattern != base || down_pattern != base {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * FD_STEP);
        let denom = analytic[i].abs().max(numeric.abs()).max(REL_FLOOR);
        report.max_rel_err = report.max_rel_err.max((analytic[i] - numeric).abs() / denom);
        report.checked += 1;
    }
    report
}

/// One finite-difference trial of the classifier's cross-entropy gradient.
pub fn target_gradient_trial(seed: u64) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let feat = rng.gen_range(2..5);
    let hidden = rng.gen_range(3..6);
    let layers = rng.gen_range(1..=2);
    let mut dims = vec![feat];
    dims.extend(std::iter::repeat_n(hidden, layers));
    let spec = ModelSpec {
        num_layers: layers,
        layer_dims: dims,
        num_classes: 3,
        readout: if rng.gen_bool(0.5) { Readout::Sum } else { Readout::Mean },
        predictor_hidden: rng.gen_range(3..6),
    };
    let mut params = ModelParams::init(&spec, rng.gen()).unwrap();
    // Nonzero biases so rectifiers are not all pinned at the same point.
    for layer in &mut params.encoder.layers {
        layer.inner.b.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
        layer.outer.b.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
    }
    let n = rng.gen_range(3..7);
    let m = rng.gen_range(0..=n * (n - 1) / 2);
    let g = random_graph(&format!("fd{seed}"), &mut rng, n, m, feat, 0);
    let label = g.label();
    let trace = params.forward(&g).unwrap();
    let (_, d_logits) = cross_entropy(&trace, label);
    let analytic = params.backward(&trace, &d_logits).unwrap().to_flat();
    central_differences(
        &params,
        &analytic,
        |p| cross_entropy(&p.forward(&g).unwrap(), label).0,
        |p| p.forward(&g).unwrap().relu_pattern(),
    )
}

/// One finite-difference trial of the REINFORCE loss gradient over a batch of
/// fixed random trajectories, through class heads, edge MLP and encoder.
pub fn policy_gradient_trial(seed: u64) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let feat = rng.gen_range(2..4);
    let edge_feat = rng.gen_range(0..3);
    let classes = 3;
    let spec = PolicySpec {
        encoder_dims: vec![feat, rng.gen_range(2..5), rng.gen_range(2..5)],
        edge_feature_dim: edge_feat,
        mlp1_hidden: rng.gen_range(2..5),
        edge_dim: rng.gen_range(2..4),
        mlp2_hidden: rng.gen_range(2..5),
        num_classes: classes,
    };
    let mut policy = PolicyParams::init(&spec, rng.gen()).unwrap();
    for layer in &mut policy.encoder.layers {
        layer.inner.b.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
        layer.outer.b.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
    }
    policy.mlp1_hidden.b.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
    policy.mlp2_hidden.b.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
    let batch_size = rng.gen_range(1..=2);
    let mut graphs = Vec::new();
    for b in 0..batch_size {
        let n = rng.gen_range(3..6);
        let m = rng.gen_range(2..=n * (n - 1) / 2);
        graphs.push(random_graph(&format!("pg{seed}-{b}"), &mut rng, n, m, feat, edge_feat));
    }
    let trajectories: Vec<Trajectory> = graphs
        .iter()
        .map(|g| {
            let mut order: Vec<usize> = (0..g.num_edges()).collect();
            order.shuffle(&mut rng);
            let k = rng.gen_range(1..=g.num_edges());
            Trajectory {
                graph_id: g.graph_id().to_string(),
                target_class: rng.gen_range(0..classes),
                steps: order[..k]
                    .iter()
                    .map(|&edge| Step {
                        edge,
                        score: 0.0,
                        reward: rng.gen_range(-2.0..2.0),
                        subgraph_prob: 0.5,
                        log_prob: None,
                    })
                    .collect(),
            }
        })
        .collect();
    let batch: Vec<(&Graph, &Trajectory)> = graphs.iter().zip(&trajectories).collect();
    let (_, grad) = policy_loss_and_grad(&policy, &batch).unwrap();
    central_differences(
        &policy,
        &grad.to_flat(),
        |p| policy_loss_and_grad(p, &batch).unwrap().0,
        |p| loss_relu_pattern(p, &batch).unwrap(),
    )
}

/// Every length-`k` edge sequence with its cumulative reward and policy
/// log-probability, computed step by step from the public operations.
pub fn enumerate_sequences(
    policy: &PolicyParams,
    ctx: &AttributionContext<'_>,
    k: usize,
    mode: RewardMode,
) -> Vec<(Vec<usize>, f64, f64)> {
    let n = ctx.graph.num_edges();
    let mut out = Vec::new();
    for seq in (0..n).permutations(k) {
        let mut selected = EdgeSet::empty(ctx.graph);
        let mut reward = 0.0;
        let mut log_prob = 0.0;
        for &e in &seq {
            let dist = action_distribution(policy, ctx.graph, &selected, ctx.target_class).unwrap();
            log_prob += dist.log_probs[dist.position(e).unwrap()];
            reward += ctx.reward(&selected, e, mode).unwrap();
            selected.insert(e).unwrap();
        }
        out.push((seq, reward, log_prob));
    }
    out
}

/// Best sequence by reward, then log-probability, then lexicographic order.
pub fn best_sequence(seqs: &[(Vec<usize>, f64, f64)]) -> &(Vec<usize>, f64, f64) {
    seqs.iter()
        .min_by(|a, b| b.1.total_cmp(&a.1).then(b.2.total_cmp(&a.2)).then_with(|| a.0.cmp(&b.0)))
        .unwrap()
}

/// Closed-form Spearman for tie-free data as an exactly rounded rational.
pub fn closed_form_spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<i64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as i64 + 1;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as i64;
    let d2: i64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    let denom = n * (n * n - 1);
    (denom - 6 * d2) as f64 / denom as f64
}
