//! JSON checkpoints for model parameters.
//!
//! ```text
//! { "schema_version": 1, "spec": ModelSpec, "param_version": u64,
//!   "encoder": [ { "inner": {"w": [[f64]], "b": [f64]}, "outer": {...} } ],
//!   "predictor_hidden": {...}, "predictor_out": {...} }
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::dense::Dense;
use super::model::{Encoder, GinLayer, ModelParams, ModelSpec};
use crate::dataset::{matrix_from_rows, matrix_rows};
use crate::error::{Error, Result};

pub const PARAMS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct DenseRecord {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl DenseRecord {
    pub(crate) fn from_dense(d: &Dense) -> Self {
        DenseRecord {
            w: matrix_rows(&d.w),
            b: d.b.to_vec(),
        }
    }

    /// Rebuilds the map, checking it is `output × input`.
    pub(crate) fn to_dense(&self, name: &str, input: usize, output: usize) -> Result<Dense> {
        let w = matrix_from_rows(&self.w, input)
            .map_err(|e| Error::Validation(format!("{name}: weight matrix {e}")))?;
        let d = Dense {
            w,
            b: Array1::from(self.b.clone()),
        };
        d.check_shape(name, input, output)
            .map_err(|e| Error::Validation(e.to_string()))?;
        Ok(d)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct GinRecord {
    inner: DenseRecord,
    outer: DenseRecord,
}

pub(crate) fn encoder_records(enc: &Encoder) -> Vec<GinRecord> {
    enc.layers
        .iter()
        .map(|l| GinRecord {
            inner: DenseRecord::from_dense(&l.inner),
            outer: DenseRecord::from_dense(&l.outer),
        })
        .collect()
}

pub(crate) fn encoder_from_records(records: &[GinRecord], dims: &[usize], owner: &str) -> Result<Encoder> {
    if records.len() + 1 != dims.len() {
        return Err(Error::Validation(format!(
            "{owner} encoder has {} layers, spec needs {}",
            records.len(),
            dims.len() - 1
        )));
    }
    let layers = records
        .iter()
        .enumerate()
        .map(|(l, r)| {
            Ok(GinLayer {
                inner: r.inner.to_dense(&format!("{owner} layer {l} inner"), dims[l], dims[l + 1])?,
                outer: r.outer.to_dense(&format!("{owner} layer {l} outer"), dims[l + 1], dims[l + 1])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Encoder { layers })
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamsFile {
    schema_version: u32,
    spec: ModelSpec,
    param_version: u64,
    encoder: Vec<GinRecord>,
    predictor_hidden: DenseRecord,
    predictor_out: DenseRecord,
}

pub fn params_to_json(params: &ModelParams) -> Result<String> {
    params.validate()?;
    let file = ParamsFile {
        schema_version: PARAMS_SCHEMA_VERSION,
        spec: params.spec.clone(),
        param_version: params.param_version,
        encoder: encoder_records(&params.encoder),
        predictor_hidden: DenseRecord::from_dense(&params.predictor_hidden),
        predictor_out: DenseRecord::from_dense(&params.predictor_out),
    };
    serde_json::to_string(&file).map_err(|e| Error::Validation(e.to_string()))
}

/// Parses a checkpoint; with `expected` set, a checkpoint for any other spec is rejected.
pub fn params_from_json(text: &str, expected: Option<&ModelSpec>) -> Result<ModelParams> {
    let file: ParamsFile =
        serde_json::from_str(text).map_err(|e| Error::Validation(format!("model checkpoint: {e}")))?;
    if file.schema_version != PARAMS_SCHEMA_VERSION {
        return Err(Error::Validation(format!(
            "model checkpoint schema version {} unsupported",
            file.schema_version
        )));
    }
    if let Some(spec) = expected {
        if *spec != file.spec {
            return Err(Error::Validation(format!(
                "checkpoint spec {:?} does not match expected {:?}",
                file.spec, spec
            )));
        }
    }
    file.spec.validate()?;
    let dims = &file.spec.layer_dims;
    let params = ModelParams {
        encoder: encoder_from_records(&file.encoder, dims, "model")?,
        predictor_hidden: file.predictor_hidden.to_dense(
            "predictor hidden",
            file.spec.output_dim(),
            file.spec.predictor_hidden,
        )?,
        predictor_out: file.predictor_out.to_dense(
            "predictor output",
            file.spec.predictor_hidden,
            file.spec.num_classes,
        )?,
        spec: file.spec,
        param_version: file.param_version,
    };
    params.validate()?;
    Ok(params)
}

pub fn write_params(path: impl AsRef<Path>, params: &ModelParams) -> Result<()> {
    let path = path.as_ref();
    let mut text = params_to_json(params)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_params(path: impl AsRef<Path>, expected: Option<&ModelSpec>) -> Result<ModelParams> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    params_from_json(&text, expected)
}
