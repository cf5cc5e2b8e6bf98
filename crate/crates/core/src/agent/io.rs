//! JSON checkpoints for policy parameters.
//!
//! ```text
//! { "schema_version": 1, "spec": PolicySpec, "param_version": u64,
//!   "encoder": [ { "inner": {"w", "b"}, "outer": {...} } ],
//!   "mlp1_hidden": {...}, "mlp1_out": {...}, "mlp2_hidden": {...}, "heads": {...} }
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::policy::{PolicyParams, PolicySpec};
use crate::error::{Error, Result};
use crate::gnn::io::{encoder_from_records, encoder_records, DenseRecord, GinRecord};

pub const POLICY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct PolicyFile {
    schema_version: u32,
    spec: PolicySpec,
    param_version: u64,
    encoder: Vec<GinRecord>,
    mlp1_hidden: DenseRecord,
    mlp1_out: DenseRecord,
    mlp2_hidden: DenseRecord,
    heads: DenseRecord,
}

pub fn policy_to_json(policy: &PolicyParams) -> Result<String> {
    policy.validate()?;
    let file = PolicyFile {
        schema_version: POLICY_SCHEMA_VERSION,
        spec: policy.spec.clone(),
        param_version: policy.param_version,
        encoder: encoder_records(&policy.encoder),
        mlp1_hidden: DenseRecord::from_dense(&policy.mlp1_hidden),
        mlp1_out: DenseRecord::from_dense(&policy.mlp1_out),
        mlp2_hidden: DenseRecord::from_dense(&policy.mlp2_hidden),
        heads: DenseRecord::from_dense(&policy.heads),
    };
    serde_json::to_string(&file).map_err(|e| Error::Validation(e.to_string()))
}

pub fn policy_from_json(text: &str) -> Result<PolicyParams> {
    let file: PolicyFile =
        serde_json::from_str(text).map_err(|e| Error::Validation(format!("policy checkpoint: {e}")))?;
    if file.schema_version != POLICY_SCHEMA_VERSION {
        return Err(Error::Validation(format!(
            "policy checkpoint schema version {} unsupported",
            file.schema_version
        )));
    }
    let s = &file.spec;
    s.validate()?;
    let d = s.node_dim();
    let policy = PolicyParams {
        encoder: encoder_from_records(&file.encoder, &s.encoder_dims, "policy")?,
        mlp1_hidden: file
            .mlp1_hidden
            .to_dense("policy mlp1 hidden", 2 * d + s.edge_feature_dim, s.mlp1_hidden)?,
        mlp1_out: file.mlp1_out.to_dense("policy mlp1 out", s.mlp1_hidden, s.edge_dim)?,
        mlp2_hidden: file.mlp2_hidden.to_dense("policy mlp2 hidden", s.edge_dim + d, s.mlp2_hidden)?,
        heads: file.heads.to_dense("policy class heads", s.mlp2_hidden, s.num_classes)?,
        spec: file.spec,
        param_version: file.param_version,
    };
    policy.validate()?;
    Ok(policy)
}

pub fn write_policy(path: impl AsRef<Path>, policy: &PolicyParams) -> Result<()> {
    let path = path.as_ref();
    let mut text = policy_to_json(policy)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_policy(path: impl AsRef<Path>) -> Result<PolicyParams> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    policy_from_json(&text)
}
