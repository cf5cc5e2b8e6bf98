use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dense::{relu, relu_backward, softmax, Dense, Tensors};
use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    Sum,
    Mean,
}

/// Shape of a message-passing classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub num_layers: usize,
    /// `d₀ … d_L`; `d₀` is the node-feature width.
    pub layer_dims: Vec<usize>,
    pub num_classes: usize,
    pub readout: Readout,
    pub predictor_hidden: usize,
}

impl ModelSpec {
    /// Two GIN layers of width `hidden`, sum readout.
    pub fn gin(input_dim: usize, hidden: usize, num_classes: usize) -> Self {
        ModelSpec {
            num_layers: 2,
            layer_dims: vec![input_dim, hidden, hidden],
            num_classes,
            readout: Readout::Sum,
            predictor_hidden: hidden,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated spec")
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers < 1 {
            return Err(Error::Validation("model needs at least one layer".into()));
        }
        if self.layer_dims.len() != self.num_layers + 1 {
            return Err(Error::Validation(format!(
                "{} layer dims given for {} layers (need L + 1)",
                self.layer_dims.len(),
                self.num_layers
            )));
        }
        if self.layer_dims.contains(&0) || self.num_classes == 0 || self.predictor_hidden == 0 {
            return Err(Error::Validation("every dimension must be at least 1".into()));
        }
        Ok(())
    }
}

/// One GIN layer: `z' = relu(W₂ relu(W₁ (z_v + Σ_{u∈N(v)} z_u) + b₁) + b₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GinLayer {
    pub inner: Dense,
    pub outer: Dense,
}

impl GinLayer {
    fn zeros_like(&self) -> Self {
        GinLayer {
            inner: self.inner.zeros_like(),
            outer: self.outer.zeros_like(),
        }
    }
}

/// Stack of GIN layers producing node representations.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub layers: Vec<GinLayer>,
}

impl Encoder {
    pub fn init(dims: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let layers = dims
            .windows(2)
            .map(|w| GinLayer {
                inner: Dense::glorot(w[0], w[1], rng),
                outer: Dense::glorot(w[1], w[1], rng),
            })
            .collect();
        Encoder { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Encoder {
            layers: self.layers.iter().map(GinLayer::zeros_like).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inner.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty encoder").outer.output_dim()
    }

    pub(crate) fn check_dims(&self, dims: &[usize], owner: &str) -> Result<()> {
        if self.layers.len() + 1 != dims.len() {
            return Err(Error::Shape {
                layer: format!("{owner} encoder"),
                expected: format!("{} layers", dims.len() - 1),
                got: format!("{} layers", self.layers.len()),
            });
        }
        for (l, layer) in self.layers.iter().enumerate() {
            layer.inner.check_shape(&format!("{owner} layer {l} inner"), dims[l], dims[l + 1])?;
            layer.outer.check_shape(&format!("{owner} layer {l} outer"), dims[l + 1], dims[l + 1])?;
        }
        Ok(())
    }

    /// Runs message passing over `edges`, each used in both directions.
    pub fn encode(&self, features: &Array2<f64>, edges: &[(usize, usize)]) -> Result<EncoderTrace> {
        if features.ncols() != self.input_dim() {
            return Err(Error::Shape {
                layer: "encoder layer 0 input".into(),
                expected: format!("{} node features", self.input_dim()),
                got: format!("{}", features.ncols()),
            });
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut z = features.clone();
        for layer in &self.layers {
            let messages = aggregate(z.view(), edges);
            let combined = &z + &messages;
            let inner_pre = layer.inner.forward_rows(combined.view());
            let hidden = relu(&inner_pre);
            let outer_pre = layer.outer.forward_rows(hidden.view());
            let out = relu(&outer_pre);
            layers.push(LayerTrace {
                input: z,
                messages,
                combined,
                inner_pre,
                hidden,
                outer_pre,
            });
            z = out;
        }
        Ok(EncoderTrace {
            edges: edges.to_vec(),
            layers,
            nodes: z,
        })
    }

    /// Gradients of the encoder parameters given `∂L/∂z_v` for the final
    /// node representations; accumulated into `grad`.
    pub fn backward(&self, trace: &EncoderTrace, d_nodes: &Array2<f64>, grad: &mut Encoder) {
        let mut dz = d_nodes.clone();
        for (l, (layer, t)) in self.layers.iter().zip(&trace.layers).enumerate().rev() {
            let g = &mut grad.layers[l];
            let d_outer = relu_backward(&t.outer_pre, &dz);
            let d_hidden = layer.outer.backward_rows(t.hidden.view(), d_outer.view(), &mut g.outer);
            let d_inner = relu_backward(&t.inner_pre, &d_hidden);
            let d_combined = layer.inner.backward_rows(t.combined.view(), d_inner.view(), &mut g.inner);
            if l == 0 {
                break;
            }
            // combined = z + A z with A symmetric, so dz = dc + A dc.
            dz = &d_combined + &aggregate(d_combined.view(), &trace.edges);
        }
    }
}

impl Tensors for Encoder {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| l.inner.tensors().into_iter().chain(l.outer.tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let GinLayer { inner, outer } = l;
                inner.tensors_mut().into_iter().chain(outer.tensors_mut())
            })
            .collect()
    }
}

/// `a_v = Σ_{u ∈ N(v)} z_u` over undirected edges.
pub fn aggregate(z: ArrayView2<f64>, edges: &[(usize, usize)]) -> Array2<f64> {
    let mut out = Array2::zeros(z.raw_dim());
    for &(a, b) in edges {
        {
            let mut row = out.row_mut(a);
            row += &z.row(b);
        }
        let mut row = out.row_mut(b);
        row += &z.row(a);
    }
    out
}

#[derive(Debug, Clone)]
pub struct LayerTrace {
    /// `z^(l-1)`
    pub input: Array2<f64>,
    /// `a^(l)`
    pub messages: Array2<f64>,
    pub combined: Array2<f64>,
    pub inner_pre: Array2<f64>,
    pub hidden: Array2<f64>,
    pub outer_pre: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct EncoderTrace {
    pub edges: Vec<(usize, usize)>,
    pub layers: Vec<LayerTrace>,
    /// Final node representations `z_v = z_v^(L)`.
    pub nodes: Array2<f64>,
}

impl EncoderTrace {
    /// Sign pattern of every rectifier input, for detecting kinks.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.layers
            .iter()
            .flat_map(|l| l.inner_pre.iter().chain(l.outer_pre.iter()).map(|&v| v > 0.0))
            .collect()
    }
}

/// Parameters of a classifier `f = predictor ∘ encoder`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub spec: ModelSpec,
    pub encoder: Encoder,
    pub predictor_hidden: Dense,
    pub predictor_out: Dense,
    /// Bumped on every in-place update; traces remember the version they saw.
    pub param_version: u64,
}

/// Gradient container aligned with [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub encoder: Encoder,
    pub predictor_hidden: Dense,
    pub predictor_out: Dense,
}

impl ModelParams {
    /// Deterministic Glorot-uniform initialization with zero biases.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Encoder::init(&spec.layer_dims, &mut rng);
        let predictor_hidden = Dense::glorot(spec.output_dim(), spec.predictor_hidden, &mut rng);
        let predictor_out = Dense::glorot(spec.predictor_hidden, spec.num_classes, &mut rng);
        Ok(ModelParams {
            spec: spec.clone(),
            encoder,
            predictor_hidden,
            predictor_out,
            param_version: 0,
        })
    }

    pub fn zero_grads(&self) -> ParamGrads {
        ParamGrads {
            encoder: self.encoder.zeros_like(),
            predictor_hidden: self.predictor_hidden.zeros_like(),
            predictor_out: self.predictor_out.zeros_like(),
        }
    }

    /// Checks every tensor shape against the spec and that all values are finite.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.encoder.check_dims(&self.spec.layer_dims, "model")?;
        self.predictor_hidden
            .check_shape("predictor hidden", self.spec.output_dim(), self.spec.predictor_hidden)?;
        self.predictor_out
            .check_shape("predictor output", self.spec.predictor_hidden, self.spec.num_classes)?;
        if !self.all_finite() {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    pub fn forward(&self, graph: &Graph) -> Result<ForwardTrace> {
        self.forward_parts(graph.node_features(), graph.edges())
    }

    /// Forward pass on explicit node features and an edge list.
    pub fn forward_parts(&self, features: &Array2<f64>, edges: &[(usize, usize)]) -> Result<ForwardTrace> {
        let encoder = self.encoder.encode(features, edges)?;
        let readout = graph_readout(&encoder.nodes, self.spec.readout);
        let hidden_pre = self.predictor_hidden.forward_vec(readout.view());
        let hidden = relu(&hidden_pre);
        let logits = self.predictor_out.forward_vec(hidden.view());
        let probs = softmax(logits.view());
        Ok(ForwardTrace {
            encoder,
            readout,
            hidden_pre,
            hidden,
            logits,
            probs,
            param_version: self.param_version,
        })
    }

    /// Class probabilities only.
    pub fn predict_proba(&self, features: &Array2<f64>, edges: &[(usize, usize)]) -> Result<Array1<f64>> {
        Ok(self.forward_parts(features, edges)?.probs)
    }

    /// Reverse-mode gradient of a scalar loss given `∂L/∂logits`.
    pub fn backward(&self, trace: &ForwardTrace, d_logits: &Array1<f64>) -> Result<ParamGrads> {
        let mut grads = self.zero_grads();
        self.backward_into(trace, d_logits, &mut grads)?;
        Ok(grads)
    }

    /// As [`ModelParams::backward`], accumulating into `grads`.
    pub fn backward_into(&self, trace: &ForwardTrace, d_logits: &Array1<f64>, grads: &mut ParamGrads) -> Result<()> {
        if trace.param_version != self.param_version {
            return Err(Error::StaleTrace {
                trace: trace.param_version,
                params: self.param_version,
            });
        }
        if d_logits.len() != self.spec.num_classes {
            return Err(Error::Shape {
                layer: "loss gradient".into(),
                expected: format!("{} logits", self.spec.num_classes),
                got: format!("{}", d_logits.len()),
            });
        }
        let d_hidden = self
            .predictor_out
            .backward_vec(trace.hidden.view(), d_logits.view(), &mut grads.predictor_out);
        let d_hidden_pre = relu_backward(&trace.hidden_pre, &d_hidden);
        let d_readout =
            self.predictor_hidden
                .backward_vec(trace.readout.view(), d_hidden_pre.view(), &mut grads.predictor_hidden);
        let d_nodes = readout_backward(&d_readout, trace.encoder.nodes.nrows(), self.spec.readout);
        self.encoder.backward(&trace.encoder, &d_nodes, &mut grads.encoder);
        Ok(())
    }
}

pub fn graph_readout(nodes: &Array2<f64>, readout: Readout) -> Array1<f64> {
    let sum = nodes.sum_axis(Axis(0));
    match readout {
        Readout::Sum => sum,
        Readout::Mean if nodes.nrows() == 0 => sum,
        Readout::Mean => sum / nodes.nrows() as f64,
    }
}

fn readout_backward(d_readout: &Array1<f64>, n: usize, readout: Readout) -> Array2<f64> {
    let scale = match readout {
        Readout::Sum => 1.0,
        Readout::Mean => 1.0 / n.max(1) as f64,
    };
    let row = d_readout * scale;
    let mut out = Array2::zeros((n, row.len()));
    for mut r in out.rows_mut() {
        r.assign(&row);
    }
    out
}

impl Tensors for ModelParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.encoder.tensors();
        v.extend(self.predictor_hidden.tensors());
        v.extend(self.predictor_out.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.encoder.tensors_mut();
        v.extend(self.predictor_hidden.tensors_mut());
        v.extend(self.predictor_out.tensors_mut());
        v
    }
}

impl Tensors for ParamGrads {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.encoder.tensors();
        v.extend(self.predictor_hidden.tensors());
        v.extend(self.predictor_out.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.encoder.tensors_mut();
        v.extend(self.predictor_hidden.tensors_mut());
        v.extend(self.predictor_out.tensors_mut());
        v
    }
}

/// Everything a forward pass computed, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub encoder: EncoderTrace,
    /// `z_G`
    pub readout: Array1<f64>,
    pub hidden_pre: Array1<f64>,
    pub hidden: Array1<f64>,
    pub logits: Array1<f64>,
    pub probs: Array1<f64>,
    pub param_version: u64,
}

impl ForwardTrace {
    pub fn predicted_class(&self) -> usize {
        super::dense::argmax(self.probs.view())
    }

    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut p = self.encoder.relu_pattern();
        p.extend(self.hidden_pre.iter().map(|&v| v > 0.0));
        p
    }
}

/// Cross-entropy `-ln p(label)` and its gradient with respect to the logits.
pub fn cross_entropy(trace: &ForwardTrace, label: usize) -> (f64, Array1<f64>) {
    let lp = super::dense::log_softmax(trace.logits.view());
    let mut grad = trace.probs.clone();
    grad[label] -= 1.0;
    (-lp[label], grad)
}
