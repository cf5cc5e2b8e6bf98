//! Training and evaluation of the target classifier.

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{Dataset, SplitName};
use crate::error::{Error, Result};
use crate::gnn::{cross_entropy, ModelParams, ModelSpec, ParamGrads, Tensors};
use crate::graph::Graph;
use crate::optim::{Adam, AdamConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHyper {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Epochs without a strict validation-accuracy improvement before stopping.
    pub patience: usize,
    /// `None` trains full-batch: one optimizer step per epoch.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            epochs: 300,
            lr: 1e-3,
            weight_decay: 1e-5,
            patience: 50,
            batch_size: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub valid_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy.
    pub params: ModelParams,
    pub best_epoch: Option<usize>,
    pub log: Vec<EpochLog>,
}

pub const EPOCH_LOG_HEADER: &str = "epoch,loss,train_acc,valid_acc";

pub fn epoch_log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from(EPOCH_LOG_HEADER);
    out.push('\n');
    for row in log {
        out.push_str(&format!("{},{},{},{}\n", row.epoch, row.loss, row.train_acc, row.valid_acc));
    }
    out
}

/// Minimizes mean cross-entropy over the training split with Adam and keeps
/// the best-validation parameters. Deterministic for fixed inputs.
pub fn train_target(dataset: &Dataset, spec: &ModelSpec, hyper: &TrainHyper) -> Result<TrainOutcome> {
    if spec.input_dim() != dataset.feature_dim() {
        return Err(Error::Validation(format!(
            "model input dim {} but dataset features have {} columns",
            spec.input_dim(),
            dataset.feature_dim()
        )));
    }
    if spec.num_classes != dataset.num_classes {
        return Err(Error::Validation(format!(
            "model has {} classes, dataset has {}",
            spec.num_classes, dataset.num_classes
        )));
    }
    let train = dataset.splits.get(SplitName::Train);
    if train.is_empty() || dataset.splits.get(SplitName::Valid).is_empty() {
        return Err(Error::Validation("training needs non-empty train and valid splits".into()));
    }
    let mut params = ModelParams::init(spec, hyper.seed)?;
    let mut outcome = TrainOutcome {
        params: params.clone(),
        best_epoch: None,
        log: Vec::new(),
    };
    if hyper.epochs == 0 {
        return Ok(outcome);
    }
    let mut adam = Adam::new(AdamConfig {
        lr: hyper.lr,
        weight_decay: hyper.weight_decay,
        ..AdamConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x5eed_0f7a_26e7);
    let mut order: Vec<usize> = train.to_vec();
    let batch = hyper.batch_size.unwrap_or(order.len()).max(1);
    let mut best_valid = f64::NEG_INFINITY;
    let mut since_best = 0;

    for epoch in 1..=hyper.epochs {
        if hyper.batch_size.is_some() {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for chunk in order.chunks(batch) {
            let graphs: Vec<&Graph> = chunk.iter().map(|&i| &dataset.graphs[i]).collect();
            let (loss, grads) = batch_gradient(&params, &graphs)?;
            loss_sum += loss * chunk.len() as f64;
            adam.step(&mut params, &grads);
            params.param_version += 1;
        }
        if !params.all_finite() {
            return Err(Error::NonFinite(format!("model parameters after epoch {epoch}")));
        }
        let loss = loss_sum / order.len() as f64;
        let train_acc = evaluate_accuracy(&params, dataset, SplitName::Train)?;
        let valid_acc = evaluate_accuracy(&params, dataset, SplitName::Valid)?;
        outcome.log.push(EpochLog {
            epoch,
            loss,
            train_acc,
            valid_acc,
        });
        if valid_acc > best_valid {
            best_valid = valid_acc;
            since_best = 0;
            outcome.params = params.clone();
            outcome.best_epoch = Some(epoch);
        } else {
            since_best += 1;
            if since_best >= hyper.patience {
                break;
            }
        }
    }
    Ok(outcome)
}

/// Mean cross-entropy over `graphs` and its gradient; per-graph work runs in
/// parallel, the reduction is sequential in input order.
pub fn batch_gradient(params: &ModelParams, graphs: &[&Graph]) -> Result<(f64, ParamGrads)> {
    let per_graph: Vec<(f64, ParamGrads)> = graphs
        .par_iter()
        .map(|g| {
            let trace = params.forward(g)?;
            let (loss, d_logits) = cross_entropy(&trace, g.label());
            Ok((loss, params.backward(&trace, &d_logits)?))
        })
        .collect::<Result<_>>()?;
    let scale = 1.0 / graphs.len() as f64;
    let mut total = params.zero_grads();
    let mut loss = 0.0;
    for (l, g) in &per_graph {
        if !l.is_finite() {
            return Err(Error::NonFinite("cross-entropy loss".into()));
        }
        loss += l;
        for (acc, part) in total.tensors_mut().into_iter().zip(g.tensors()) {
            for (a, p) in acc.iter_mut().zip(part) {
                *a += p;
            }
        }
    }
    for t in total.tensors_mut() {
        t.iter_mut().for_each(|v| *v *= scale);
    }
    Ok((loss * scale, total))
}

/// Mean cross-entropy of the model on `graphs`.
pub fn mean_loss(params: &ModelParams, graphs: &[&Graph]) -> Result<f64> {
    let mut total = 0.0;
    for g in graphs {
        total += cross_entropy(&params.forward(g)?, g.label()).0;
    }
    Ok(total / graphs.len() as f64)
}

/// Predicted class per graph (argmax, lowest index on ties).
pub fn predict(params: &ModelParams, graph: &Graph) -> Result<usize> {
    Ok(params.forward(graph)?.predicted_class())
}

pub fn evaluate_accuracy(params: &ModelParams, dataset: &Dataset, split: SplitName) -> Result<f64> {
    let idx = dataset.splits.get(split);
    if idx.is_empty() {
        return Err(Error::UndefinedMetric(format!("accuracy on empty `{}` split", split.as_str())));
    }
    let hits: Vec<bool> = idx
        .par_iter()
        .map(|&i| {
            let g = &dataset.graphs[i];
            Ok(predict(params, g)? == g.label())
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / idx.len() as f64)
}

/// Same architecture, fresh weights from `ModelParams::init(spec, seed)`.
pub fn randomized_clone(params: &ModelParams, seed: u64) -> Result<ModelParams> {
    ModelParams::init(&params.spec, seed)
}

/// Class-probability vector of the model on a graph.
pub fn probabilities(params: &ModelParams, graph: &Graph) -> Result<Array1<f64>> {
    Ok(params.forward(graph)?.probs)
}
