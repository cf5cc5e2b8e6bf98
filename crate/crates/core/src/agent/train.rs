use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::policy::{policy_loss_and_grad, PolicyParams};
use super::rollout::{rollout_encoded, RcExplainer, RolloutMode};
use crate::attribution::{AttributionContext, RewardMode};
use crate::dataset::{Dataset, SplitName};
use crate::error::{Error, Result};
use crate::explain::Trajectory;
use crate::gnn::{ModelParams, Tensors};
use crate::graph::Graph;
use crate::metrics::acc_auc;
use crate::optim::{Adam, AdamConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainerHyper {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Training graphs per policy update.
    pub batch_size: usize,
    /// Training rollouts pick `max(1, ⌈ratio · |E|⌉)` edges.
    pub train_ratio: f64,
    pub reward_mode: RewardMode,
    pub rollout_mode: RolloutMode,
    /// Extension, off by default: subtract a moving average of past step
    /// rewards with this momentum.
    pub baseline_momentum: Option<f64>,
    pub seed: u64,
}

impl Default for ExplainerHyper {
    fn default() -> Self {
        ExplainerHyper {
            epochs: 50,
            lr: 1e-3,
            weight_decay: 1e-5,
            batch_size: 32,
            train_ratio: 0.25,
            reward_mode: RewardMode::Mi,
            rollout_mode: RolloutMode::Sample,
            baseline_momentum: None,
            seed: 0,
        }
    }
}

impl ExplainerHyper {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Validation("batch size must be at least 1".into()));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio <= 1.0) {
            return Err(Error::Validation(format!("train ratio {} not in (0, 1]", self.train_ratio)));
        }
        if let Some(m) = self.baseline_momentum {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::Validation(format!("baseline momentum {m} not in [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Edges picked per training rollout on a graph with `num_edges` edges.
pub fn train_steps(num_edges: usize, ratio: f64) -> usize {
    ((ratio * num_edges as f64 - 1e-9).ceil() as usize).clamp(1, num_edges.max(1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainerEpochLog {
    pub epoch: usize,
    pub loss: f64,
    /// Mean per-step reward of the epoch's training rollouts.
    pub mean_reward: f64,
    pub valid_acc_auc: f64,
}

pub const EXPLAINER_LOG_HEADER: &str = "epoch,loss,mean_reward,valid_acc_auc";

pub fn explainer_log_csv(log: &[ExplainerEpochLog]) -> String {
    let mut out = String::from(EXPLAINER_LOG_HEADER);
    out.push('\n');
    for r in log {
        out.push_str(&format!("{},{},{},{}\n", r.epoch, r.loss, r.mean_reward, r.valid_acc_auc));
    }
    out
}

#[derive(Debug, Clone)]
pub struct ExplainerOutcome {
    /// Policy from the epoch with the best validation ACC-AUC.
    pub policy: PolicyParams,
    pub best_epoch: Option<usize>,
    pub log: Vec<ExplainerEpochLog>,
}

/// One Adam step on the REINFORCE loss over `batch`; returns the loss.
///
/// When the gradient is exactly zero (all rewards zero, or every step forced)
/// no step is taken, so weight decay does not move the parameters either.
pub fn reinforce_update(policy: &mut PolicyParams, batch: &[(&Graph, &Trajectory)], adam: &mut Adam) -> Result<f64> {
    let (loss, grad) = policy_loss_and_grad(policy, batch)?;
    if !grad.all_finite() {
        return Err(Error::NonFinite("policy gradient".into()));
    }
    if grad.tensors().iter().all(|t| t.iter().all(|&g| g == 0.0)) {
        return Ok(loss);
    }
    adam.step(policy, &grad);
    policy.param_version += 1;
    if !policy.all_finite() {
        return Err(Error::NonFinite("policy parameters".into()));
    }
    Ok(loss)
}

/// Per-rollout seed from the run seed, epoch and graph index.
fn rollout_seed(seed: u64, epoch: usize, graph: usize) -> u64 {
    let mut z = seed ^ ((epoch as u64) << 32) ^ (graph as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Trains the policy on the training split to explain `model`'s own
/// predictions, keeping the checkpoint with the best validation ACC-AUC.
///
/// `model` is only read; its parameters are bit-compared after every epoch.
pub fn train_explainer(
    initial: &PolicyParams,
    model: &ModelParams,
    dataset: &Dataset,
    hyper: &ExplainerHyper,
) -> Result<ExplainerOutcome> {
    hyper.validate()?;
    initial.validate()?;
    if initial.spec.num_classes != model.spec.num_classes {
        return Err(Error::Validation(format!(
            "policy has {} class heads, model has {} classes",
            initial.spec.num_classes, model.spec.num_classes
        )));
    }
    let train = dataset.splits.get(SplitName::Train);
    if train.is_empty() || dataset.splits.get(SplitName::Valid).is_empty() {
        return Err(Error::Validation("explainer training needs non-empty train and valid splits".into()));
    }
    let mut outcome = ExplainerOutcome {
        policy: initial.clone(),
        best_epoch: None,
        log: Vec::new(),
    };
    if hyper.epochs == 0 {
        return Ok(outcome);
    }
    let frozen = model.to_flat();
    let mut policy = initial.clone();
    let mut adam = Adam::new(AdamConfig {
        lr: hyper.lr,
        weight_decay: hyper.weight_decay,
        ..AdamConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = train.iter().copied().filter(|&i| dataset.graphs[i].num_edges() > 0).collect();
    if order.is_empty() {
        return Err(Error::Validation("no training graph has edges".into()));
    }
    let mut baseline = 0.0;
    let mut best = f64::NEG_INFINITY;

    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut reward_sum = 0.0;
        let mut reward_steps = 0usize;
        for chunk in order.chunks(hyper.batch_size) {
            let snapshot = &policy;
            let mut trajectories: Vec<Trajectory> = chunk
                .par_iter()
                .map(|&i| {
                    let g = &dataset.graphs[i];
                    let ctx = AttributionContext::new(model, g)?;
                    let enc = snapshot.encode(g)?;
                    let k = train_steps(g.num_edges(), hyper.train_ratio);
                    let seed = rollout_seed(hyper.seed, epoch, i);
                    rollout_encoded(snapshot, &enc, &ctx, k, hyper.rollout_mode, hyper.reward_mode, seed)
                })
                .collect::<Result<_>>()?;
            let batch_rewards: Vec<f64> = trajectories.iter().flat_map(|t| t.steps.iter().map(|s| s.reward)).collect();
            reward_sum += batch_rewards.iter().sum::<f64>();
            reward_steps += batch_rewards.len();
            if let Some(m) = hyper.baseline_momentum {
                for t in &mut trajectories {
                    for s in &mut t.steps {
                        s.reward -= baseline;
                    }
                }
                let mean = batch_rewards.iter().sum::<f64>() / batch_rewards.len() as f64;
                baseline = m * baseline + (1.0 - m) * mean;
            }
            let batch: Vec<(&Graph, &Trajectory)> =
                chunk.iter().map(|&i| &dataset.graphs[i]).zip(trajectories.iter()).collect();
            loss_sum += reinforce_update(&mut policy, &batch, &mut adam)? * chunk.len() as f64;
        }
        if model.to_flat() != frozen {
            return Err(Error::Validation("explained model changed during explainer training".into()));
        }
        let explainer = RcExplainer { policy: policy.clone() };
        let valid = acc_auc(model, dataset, SplitName::Valid, &explainer)?.auc;
        outcome.log.push(ExplainerEpochLog {
            epoch,
            loss: loss_sum / order.len() as f64,
            mean_reward: reward_sum / reward_steps as f64,
            valid_acc_auc: valid,
        });
        if valid > best {
            best = valid;
            outcome.best_epoch = Some(epoch);
            outcome.policy = explainer.policy;
        }
    }
    Ok(outcome)
}
