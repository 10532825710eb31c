//! Checkpoint document.
//!
//! ```text
//! {"format_version":1,
//!  "featurizer":{"dim":D,"hash_seed":S,"use_position":true},
//!  "hidden_dim":H,
//!  "step_count":N,
//!  "parameters":{"weights_in":[..],"bias_in":[..],"weights_out":[..],"bias_out":[..]},
//!  "optimizer":{"first_moment":[..],"second_moment":[..]}}
//! ```
//!
//! Matrices are row-major. Every real is written with 17 significant digits,
//! which round-trips an `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Deserialize;

use super::adam::AdamState;
use super::featurize::FeaturizerConfig;
use super::scorer::ScorerParameters;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

fn write_reals(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{v:.16e}").unwrap();
    }
    out.push(']');
}

fn render(params: &ScorerParameters) -> String {
    let layout = params.layout();
    let v = &params.values;
    let mut out = String::new();
    write!(
        out,
        "{{\"format_version\":{},\"featurizer\":{{\"dim\":{},\"hash_seed\":{},\"use_position\":{}}},\"hidden_dim\":{},\"step_count\":{},",
        CHECKPOINT_FORMAT_VERSION,
        params.featurizer.dim,
        params.featurizer.hash_seed,
        params.featurizer.use_position,
        params.hidden_dim,
        params.step_count
    )
    .unwrap();
    out.push_str("\n\"parameters\":{\"weights_in\":");
    write_reals(&mut out, &v[layout.weights_in()]);
    out.push_str(",\n\"bias_in\":");
    write_reals(&mut out, &v[layout.bias_in()]);
    out.push_str(",\n\"weights_out\":");
    write_reals(&mut out, &v[layout.weights_out()]);
    out.push_str(",\n\"bias_out\":");
    write_reals(&mut out, &v[layout.bias_out()]);
    out.push_str("},\n\"optimizer\":{\"first_moment\":");
    write_reals(&mut out, &params.optimizer.first_moment);
    out.push_str(",\n\"second_moment\":");
    write_reals(&mut out, &params.optimizer.second_moment);
    out.push_str("}}\n");
    out
}

/// Writes the checkpoint through a sibling temp file and a rename.
pub fn save_checkpoint(params: &ScorerParameters, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    params.validate()?;
    let body = render(params);
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(body.as_bytes())
        .map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format_version: u32,
    featurizer: FeaturizerConfig,
    hidden_dim: usize,
    step_count: u64,
    parameters: Blocks,
    optimizer: Moments,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Blocks {
    weights_in: Vec<f64>,
    bias_in: Vec<f64>,
    weights_out: Vec<f64>,
    bias_out: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Moments {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedCheckpoint(msg.into())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ScorerParameters> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Document = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    if doc.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(malformed(format!(
            "unsupported format_version {}",
            doc.format_version
        )));
    }
    let mut params = ScorerParameters::zeros(doc.featurizer, doc.hidden_dim)
        .map_err(|e| malformed(e.to_string()))?;
    let layout = params.layout();
    let blocks = [
        (
            "weights_in",
            layout.weights_in(),
            &doc.parameters.weights_in,
        ),
        ("bias_in", layout.bias_in(), &doc.parameters.bias_in),
        (
            "weights_out",
            layout.weights_out(),
            &doc.parameters.weights_out,
        ),
        ("bias_out", layout.bias_out(), &doc.parameters.bias_out),
    ];
    for (name, range, data) in blocks {
        if data.len() != range.len() {
            return Err(malformed(format!(
                "{name} has {} values, header implies {}",
                data.len(),
                range.len()
            )));
        }
        params.values[range].copy_from_slice(data);
    }
    if doc.optimizer.first_moment.len() != layout.len()
        || doc.optimizer.second_moment.len() != layout.len()
    {
        return Err(malformed("optimizer moments do not match parameter count"));
    }
    params.optimizer = AdamState {
        first_moment: doc.optimizer.first_moment,
        second_moment: doc.optimizer.second_moment,
    };
    params.step_count = doc.step_count;
    params.validate().map_err(|e| malformed(e.to_string()))?;
    Ok(params)
}

/// Loads a checkpoint and checks it was built for `expected`.
pub fn load_checkpoint_for(
    path: impl AsRef<Path>,
    expected: &FeaturizerConfig,
) -> Result<ScorerParameters> {
    let params = load_checkpoint(path)?;
    if params.featurizer.dim != expected.dim {
        return Err(Error::DimensionMismatch {
            expected: expected.dim,
            found: params.featurizer.dim,
        });
    }
    if params.featurizer != *expected {
        return Err(Error::InvalidInput(format!(
            "checkpoint featurizer {:?} differs from {:?}",
            params.featurizer, expected
        )));
    }
    Ok(params)
}
