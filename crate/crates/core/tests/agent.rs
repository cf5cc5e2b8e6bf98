use astro_float::{BigFloat, Consts, RoundingMode};
use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rcx_core::agent::{
    action_distribution, action_representation, beam_explain, full_ranking, policy_loss_and_grad, reinforce_update,
    rollout, state_representation, train_explainer, ActionDistribution, ExplainerHyper, PolicyParams, PolicySpec,
    RolloutMode,
};
use rcx_core::attribution::{AttributionContext, RewardMode, DEFAULT_PROB_FLOOR};
use rcx_core::dataset::split;
use rcx_core::explain::Trajectory;
use rcx_core::gnn::{ModelParams, ModelSpec, Tensors};
use rcx_core::metrics::spearman;
use rcx_core::optim::{Adam, AdamConfig};
use rcx_core::synth::{generate_planted_motif, MotifConfig};
use rcx_core::{EdgeSet, Graph};

fn random_graph(id: &str, n: usize, edges: &[(usize, usize)], feat: usize, edge_feat: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_simple_fn((n, feat), || rng.gen_range(-1.0..1.0));
    let ef = (edge_feat > 0).then(|| Array2::from_shape_simple_fn((edges.len(), edge_feat), || rng.gen_range(-1.0..1.0)));
    Graph::new(id, x, edges.to_vec(), ef, 0).unwrap()
}

fn spec(feat: usize, edge_feat: usize, classes: usize) -> PolicySpec {
    PolicySpec {
        encoder_dims: vec![feat, 4, 3],
        edge_feature_dim: edge_feat,
        mlp1_hidden: 5,
        edge_dim: 3,
        mlp2_hidden: 4,
        num_classes: classes,
    }
}

fn target_model(feat: usize, classes: usize, seed: u64) -> ModelParams {
    ModelParams::init(&ModelSpec::gin(feat, 6, classes), seed).unwrap()
}

fn four_cycle() -> Graph {
    random_graph("c4", 4, &[(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)], 3, 2, 21)
}

// Independent loop-based re-implementation of the policy's edge representation.
fn dense_edge_reps(p: &PolicyParams, g: &Graph) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    let mut adj = vec![vec![0.0; n]; n];
    for &(a, b) in g.edges() {
        adj[a][b] = 1.0;
        adj[b][a] = 1.0;
    }
    let affine = |w: &Array2<f64>, b: &Array1<f64>, x: &[f64]| -> Vec<f64> {
        (0..w.nrows())
            .map(|r| b[r] + (0..w.ncols()).map(|c| w[[r, c]] * x[c]).sum::<f64>())
            .collect()
    };
    let relu = |v: Vec<f64>| v.into_iter().map(|x| x.max(0.0)).collect::<Vec<f64>>();
    let mut z: Vec<Vec<f64>> = (0..n).map(|v| g.node_features().row(v).to_vec()).collect();
    for layer in &p.encoder.layers {
        let mixed: Vec<Vec<f64>> = (0..n)
            .map(|v| {
                (0..z[0].len())
                    .map(|k| z[v][k] + (0..n).map(|u| adj[v][u] * z[u][k]).sum::<f64>())
                    .collect()
            })
            .collect();
        z = mixed
            .iter()
            .map(|m| {
                let h = relu(affine(&layer.inner.w, &layer.inner.b, m));
                relu(affine(&layer.outer.w, &layer.outer.b, &h))
            })
            .collect();
    }
    g.edges()
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            let mut input = z[a].clone();
            input.extend(&z[b]);
            if let Some(x) = g.edge_features() {
                input.extend(x.row(i).iter());
            }
            let h = relu(affine(&p.mlp1_hidden.w, &p.mlp1_hidden.b, &input));
            affine(&p.mlp1_out.w, &p.mlp1_out.b, &h)
        })
        .collect()
}

#[test]
fn edge_representation_matches_dense_oracle() {
    let g = four_cycle();
    for seed in 0..5 {
        let p = PolicyParams::init(&spec(3, 2, 2), seed).unwrap();
        let oracle = dense_edge_reps(&p, &g);
        for (e, want) in oracle.iter().enumerate() {
            let got = action_representation(&p, &g, e).unwrap();
            for (a, b) in got.iter().zip(want) {
                assert!((a - b).abs() < 1e-10, "edge {e}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn zero_weights_give_zero_edge_reps() {
    let g = four_cycle();
    let mut p = PolicyParams::init(&spec(3, 2, 2), 1).unwrap();
    for t in p.tensors_mut() {
        t.fill(0.0);
    }
    for e in 0..g.num_edges() {
        assert!(action_representation(&p, &g, e).unwrap().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn symmetric_edges_share_representation() {
    // Star centred on 0 with identical leaves and no edge features.
    let g = Graph::new("star", array![[1.0, 0.5], [0.2, 0.3], [0.2, 0.3]], vec![(0, 1), (0, 2)], None, 0).unwrap();
    let p = PolicyParams::init(&spec(2, 0, 2), 3).unwrap();
    assert_eq!(action_representation(&p, &g, 0).unwrap(), action_representation(&p, &g, 1).unwrap());
}

#[test]
fn state_is_mean_of_touched_nodes() {
    let g = four_cycle();
    let p = PolicyParams::init(&spec(3, 2, 2), 2).unwrap();
    let z = p.encode(&g).unwrap().node_reps().clone();
    let empty = state_representation(&p, &g, &EdgeSet::empty(&g)).unwrap();
    assert!(empty.iter().all(|&v| v == 0.0));
    let one = state_representation(&p, &g, &EdgeSet::from_indices(&g, [1]).unwrap()).unwrap();
    let want = (&z.row(1) + &z.row(2)) / 2.0;
    assert_eq!(one, want);
    let ab = state_representation(&p, &g, &EdgeSet::from_indices(&g, [0, 3, 1]).unwrap()).unwrap();
    let ba = state_representation(&p, &g, &EdgeSet::from_indices(&g, [1, 0, 3]).unwrap()).unwrap();
    assert_eq!(ab, ba);
}

#[test]
fn distribution_supported_on_complement() {
    let g = four_cycle();
    let p = PolicyParams::init(&spec(3, 2, 3), 4).unwrap();
    let sel = EdgeSet::from_indices(&g, [2, 0]).unwrap();
    for class in 0..3 {
        let d = action_distribution(&p, &g, &sel, class).unwrap();
        assert_eq!(d.candidates, vec![1, 3, 4]);
        assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(d.probs.iter().all(|&q| q > 0.0 && q < 1.0));
    }
    let all = EdgeSet::full(&g);
    assert!(matches!(action_distribution(&p, &g, &all, 0), Err(rcx_core::Error::NoAction)));
    assert!(action_distribution(&p, &g, &sel, 3).is_err());
}

#[test]
fn equal_logits_are_uniform_and_shift_invariant() {
    let g = four_cycle();
    let mut p = PolicyParams::init(&spec(3, 2, 2), 5).unwrap();
    let sel = EdgeSet::from_indices(&g, [4]).unwrap();
    let before = action_distribution(&p, &g, &sel, 1).unwrap();
    p.heads.b[1] += 37.25;
    let after = action_distribution(&p, &g, &sel, 1).unwrap();
    for (a, b) in before.probs.iter().zip(&after.probs) {
        assert!((a - b).abs() <= 1e-12);
    }
    p.heads.w.row_mut(1).fill(0.0);
    let flat = action_distribution(&p, &g, &sel, 1).unwrap();
    assert!(flat.probs.iter().all(|&q| (q - 0.25).abs() < 1e-15));
}

fn big(x: f64) -> BigFloat {
    BigFloat::from_f64(x, 256)
}

/// Softmax in 256-bit arithmetic.
fn reference_softmax(logits: &[f64]) -> Vec<f64> {
    let mut cc = Consts::new().unwrap();
    let rm = RoundingMode::ToEven;
    let exps: Vec<BigFloat> = logits.iter().map(|&l| big(l).exp(256, rm, &mut cc)).collect();
    let mut total = big(0.0);
    for e in &exps {
        total = total.add(e, 256, rm);
    }
    exps.iter()
        .map(|e| {
            let q = e.div(&total, 256, rm);
            q.to_string().parse::<f64>().unwrap()
        })
        .collect()
}

#[test]
fn softmax_matches_high_precision_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let n = rng.gen_range(1..=6);
        let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-30.0..30.0)).collect();
        let d = ActionDistribution::from_logits((0..n).collect(), logits.clone());
        for (a, b) in d.probs.iter().zip(reference_softmax(&logits)) {
            assert!((a - b).abs() <= 1e-15 + 1e-13 * b, "{a} vs {b} for {logits:?}");
        }
    }
}

#[test]
fn greedy_rollout_is_deterministic_and_sampling_is_seeded() {
    let g = four_cycle();
    let m = target_model(3, 2, 9);
    let ctx = AttributionContext::new(&m, &g).unwrap();
    let p = PolicyParams::init(&spec(3, 2, 2), 6).unwrap();
    let a = rollout(&p, &ctx, 4, RolloutMode::Greedy, RewardMode::Mi, 0).unwrap();
    let b = rollout(&p, &ctx, 4, RolloutMode::Greedy, RewardMode::Mi, 123).unwrap();
    assert_eq!(a, b);
    let s1 = rollout(&p, &ctx, 3, RolloutMode::Sample, RewardMode::Mi, 77).unwrap();
    let s2 = rollout(&p, &ctx, 3, RolloutMode::Sample, RewardMode::Mi, 77).unwrap();
    assert_eq!(s1, s2);
    assert_eq!(s1.steps.len(), 3);
    assert!(s1.steps.iter().all(|s| s.log_prob.unwrap() <= 0.0));
    assert!(rollout(&p, &ctx, 0, RolloutMode::Greedy, RewardMode::Mi, 0).is_err());
    assert!(rollout(&p, &ctx, 6, RolloutMode::Greedy, RewardMode::Mi, 0).is_err());
}

#[test]
fn rollout_rewards_match_context() {
    let g = four_cycle();
    let m = target_model(3, 2, 9);
    let ctx = AttributionContext::new(&m, &g).unwrap();
    let p = PolicyParams::init(&spec(3, 2, 2), 6).unwrap();
    for mode in [RewardMode::Mi, RewardMode::Binary, RewardMode::Ce] {
        let t = rollout(&p, &ctx, 5, RolloutMode::Sample, mode, 3).unwrap();
        let mut prev = EdgeSet::empty(&g);
        for s in &t.steps {
            assert_eq!(s.reward, ctx.reward(&prev, s.edge, mode).unwrap());
            assert_eq!(s.score, ctx.ice_edge(&prev, s.edge).unwrap());
            prev.insert(s.edge).unwrap();
        }
    }
}

#[test]
fn sampling_frequencies_match_distribution() {
    let g = random_graph("three", 4, &[(0, 1), (1, 2), (2, 3)], 3, 0, 4);
    let m = target_model(3, 2, 1);
    let ctx = AttributionContext::new(&m, &g).unwrap();
    let p = PolicyParams::init(&spec(3, 0, 2), 12).unwrap();
    let dist = action_distribution(&p, &g, &EdgeSet::empty(&g), ctx.target_class).unwrap();
    let draws = 10_000;
    let mut counts = [0usize; 3];
    for seed in 0..draws {
        counts[rollout(&p, &ctx, 1, RolloutMode::Sample, RewardMode::Mi, seed).unwrap().steps[0].edge] += 1;
    }
    for (i, &q) in dist.probs.iter().enumerate() {
        let n = draws as f64;
        let sigma = (n * q * (1.0 - q)).sqrt();
        assert!((counts[i] as f64 - n * q).abs() <= 3.0 * sigma, "edge {i}: {} vs {}", counts[i], n * q);
    }
}

fn trajectory_with_rewards(g: &Graph, class: usize, edges: &[usize], rewards: &[f64]) -> Trajectory {
    Trajectory {
        graph_id: g.graph_id().to_string(),
        target_class: class,
        steps: edges
            .iter()
            .zip(rewards)
            .map(|(&edge, &reward)| rcx_core::explain::Step {
                edge,
                score: 0.0,
                reward,
                subgraph_prob: 0.5,
                log_prob: None,
            })
            .collect(),
    }
}

#[test]
fn zero_rewards_leave_policy_unchanged() {
    let g = four_cycle();
    let mut p = PolicyParams::init(&spec(3, 2, 2), 7).unwrap();
    let before = p.clone();
    let t = trajectory_with_rewards(&g, 0, &[3, 1, 0], &[0.0, 0.0, 0.0]);
    let mut adam = Adam::new(AdamConfig::default());
    let loss = reinforce_update(&mut p, &[(&g, &t)], &mut adam).unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!(p, before);
}

#[test]
fn forced_single_candidate_has_zero_gradient() {
    let g = Graph::new("pair", array![[1.0], [0.5]], vec![(0, 1)], None, 0).unwrap();
    let p = PolicyParams::init(&spec(1, 0, 2), 7).unwrap();
    let t = trajectory_with_rewards(&g, 1, &[0], &[2.5]);
    let (loss, grad) = policy_loss_and_grad(&p, &[(&g, &t)]).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grad.to_flat().iter().all(|&v| v == 0.0));
}

#[test]
fn loss_is_mean_weighted_negative_log_prob() {
    let g = four_cycle();
    let h = random_graph("other", 3, &[(0, 1), (1, 2)], 3, 2, 5);
    let p = PolicyParams::init(&spec(3, 2, 2), 8).unwrap();
    let t1 = trajectory_with_rewards(&g, 1, &[2, 4], &[1.5, -0.5]);
    let t2 = trajectory_with_rewards(&h, 0, &[1], &[2.0]);
    let (loss, _) = policy_loss_and_grad(&p, &[(&g, &t1), (&h, &t2)]).unwrap();
    let d0 = action_distribution(&p, &g, &EdgeSet::empty(&g), 1).unwrap();
    let d1 = action_distribution(&p, &g, &EdgeSet::from_indices(&g, [2]).unwrap(), 1).unwrap();
    let d2 = action_distribution(&p, &h, &EdgeSet::empty(&h), 0).unwrap();
    let want = -(1.5 * d0.probs[2].ln() - 0.5 * d1.probs[3].ln() + 2.0 * d2.probs[1].ln()) / 2.0;
    assert!((loss - want).abs() < 1e-12, "{loss} vs {want}");
}

#[test]
fn beam_of_width_one_is_greedy() {
    let g = four_cycle();
    let m = target_model(3, 2, 2);
    let ctx = AttributionContext::new(&m, &g).unwrap();
    let p = PolicyParams::init(&spec(3, 2, 2), 9).unwrap();
    for k in 1..=5 {
        let greedy = rollout(&p, &ctx, k, RolloutMode::Greedy, RewardMode::Mi, 0).unwrap();
        let beam = beam_explain(&p, &ctx, k, 1, RewardMode::Mi).unwrap();
        assert_eq!(beam.ranked.order(), &greedy.edges()[..]);
        assert_eq!(beam.cumulative_reward, greedy.steps.iter().fold(0.0, |a, s| a + s.reward));
    }
}

#[test]
fn full_ranking_covers_every_edge_with_decreasing_scores() {
    let g = four_cycle();
    let m = target_model(3, 2, 2);
    let ctx = AttributionContext::with_target(&m, &g, 1, DEFAULT_PROB_FLOOR).unwrap();
    let p = PolicyParams::init(&spec(3, 2, 2), 10).unwrap();
    let r = full_ranking(&p, &ctx).unwrap();
    let mut seen = r.order().to_vec();
    seen.sort_unstable();
    assert_eq!(seen, vec![0, 1, 2, 3, 4]);
    assert!(r.scores().windows(2).all(|w| w[0] > w[1]));
    assert_eq!(r.scores()[0], 1.0);
    let greedy = rollout(&p, &ctx, 5, RolloutMode::Greedy, RewardMode::Mi, 0).unwrap();
    assert_eq!(r.order(), &greedy.edges()[..]);
    let v = r.score_vector(5).unwrap();
    assert_eq!(spearman(&v, &v).unwrap(), 1.0);
}

fn small_dataset() -> rcx_core::dataset::Dataset {
    let ds = generate_planted_motif(&MotifConfig {
        n_graphs: 30,
        n_classes: 3,
        base_nodes: 8,
        seed: 3,
    })
    .unwrap();
    split(&ds, [0.8, 0.1, 0.1], 3).unwrap()
}

#[test]
fn explainer_training_is_deterministic_and_leaves_model_alone() {
    let ds = small_dataset();
    let m = ModelParams::init(&ModelSpec::gin(ds.feature_dim(), 8, 3), 1).unwrap();
    let frozen = m.clone();
    let pspec = PolicySpec::for_model(&m.spec, 0, 8);
    let init = PolicyParams::init(&pspec, 2).unwrap();
    let hyper = ExplainerHyper {
        epochs: 2,
        batch_size: 8,
        lr: 0.01,
        seed: 4,
        ..ExplainerHyper::default()
    };
    let a = train_explainer(&init, &m, &ds, &hyper).unwrap();
    let b = train_explainer(&init, &m, &ds, &hyper).unwrap();
    assert_eq!(a.policy, b.policy);
    assert_eq!(a.log, b.log);
    assert_eq!(a.log.len(), 2);
    assert_eq!(m, frozen);

    let zero = train_explainer(&init, &m, &ds, &ExplainerHyper { epochs: 0, ..hyper }).unwrap();
    assert_eq!(zero.policy, init);
}
