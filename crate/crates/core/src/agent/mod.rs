//! Reinforced causal explainer: a policy network that learns to perform
//! causal screening.
//!
//! The policy scores every candidate edge from its endpoint representations
//! (from its own GNN encoder over the full graph), optional edge features and
//! the representation of the edges chosen so far, with one scoring head per
//! class. It is trained with REINFORCE on the causal-effect reward while the
//! classifier being explained stays frozen.

mod io;
mod policy;
mod rollout;
mod train;

pub use io::{policy_from_json, policy_to_json, read_policy, write_policy};
pub use policy::{
    action_distribution, action_representation, loss_relu_pattern, policy_loss_and_grad, state_representation, ActionDistribution,
    PolicyEncoding, PolicyParams, PolicySpec,
};
pub use rollout::{beam_explain, full_ranking, rollout, BeamResult, RcExplainer, RolloutMode};
pub use train::{
    explainer_log_csv, reinforce_update, train_explainer, train_steps, ExplainerEpochLog, ExplainerHyper,
    ExplainerOutcome, EXPLAINER_LOG_HEADER,
};
