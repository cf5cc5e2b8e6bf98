//! Explaining graph classifiers by causal screening of edge sequences.
//!
//! The crate trains small message-passing classifiers, measures the
//! individual causal effect of adding an edge to a partially built
//! explanation, and selects edges either greedily or with a policy trained
//! by REINFORCE. Metrics score explanations against the model and against
//! the planted ground truth of the synthetic datasets.

pub mod agent;
pub mod attribution;
pub mod baselines;
pub mod dataset;
pub mod dot;
pub mod error;
pub mod explain;
pub mod gnn;
pub mod graph;
pub mod metrics;
pub mod optim;
pub mod screening;
pub mod synth;
pub mod zoo;

pub use error::{Error, Result};
pub use graph::{EdgeSet, Graph};
