//! Message-passing graph classifier with hand-derived reverse-mode gradients.

pub mod dense;
pub mod io;
pub mod model;

pub use dense::{argmax, log_softmax, softmax, Dense, Tensors};
pub use io::{read_params, write_params};
pub use model::{
    cross_entropy, Encoder, EncoderTrace, ForwardTrace, GinLayer, ModelParams, ModelSpec, ParamGrads, Readout,
};
