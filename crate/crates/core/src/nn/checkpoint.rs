//! Checkpoint files.
//!
//! A checkpoint is a single JSON object:
//!
//! ```text
//! {"magic":"DISTILL-LAB-CKPT","version":1,"spec":{..},"epoch":3,"dev_metric":0.91,
//!  "seed":7,"weights":[{"rows":..,"cols":..,"data":[..]}],"biases":[[..]],"crc32":..}
//! ```
//!
//! Parameters are written as shortest round-trip decimals, so loading
//! reproduces every bit. `crc32` is always the last field. It holds the
//! CRC-32 (IEEE) of the file bytes with the `,"crc32":N` trailer removed, so
//! any byte edit is caught, including digit changes that would parse back
//! to the same float.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{MlpModel, MlpSpec};
use crate::numerics::Matrix;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "DISTILL-LAB-CKPT";
pub const CHECKPOINT_VERSION: u64 = 1;
pub const SUPPORTED_VERSIONS: &[u64] = &[CHECKPOINT_VERSION];

/// A model snapshot taken at the end of an epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// 1-based.
    pub epoch: usize,
    pub model: MlpModel,
    pub dev_metric: Option<f64>,
    /// Seed of the run that produced the model.
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    magic: String,
    version: u64,
    spec: MlpSpec,
    epoch: usize,
    dev_metric: Option<f64>,
    seed: u64,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    crc32: Option<u32>,
}

const TRAILER: &[u8] = b",\"crc32\":";

/// Splits `bytes` into the checksummed payload (with its closing brace
/// restored) and the stored checksum.
fn split_trailer(bytes: &[u8]) -> Option<(Vec<u8>, u64)> {
    let end = bytes.iter().rposition(|b| !b.is_ascii_whitespace())?;
    let body = &bytes[..end];
    if bytes[end] != b'}' {
        return None;
    }
    let at = body.windows(TRAILER.len()).rposition(|w| w == TRAILER)?;
    let digits = &body[at + TRAILER.len()..];
    if digits.is_empty() || digits.len() > 10 || !digits.iter().all(u8::is_ascii_digit) {
        return None;
    }
    let stored = std::str::from_utf8(digits).ok()?.parse().ok()?;
    let mut payload = body[..at].to_vec();
    payload.push(b'}');
    Some((payload, stored))
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    if ckpt.epoch == 0 {
        return Err(Error::Domain("checkpoint epochs are 1-based".into()));
    }
    let envelope = Envelope {
        magic: CHECKPOINT_MAGIC.to_string(),
        version: CHECKPOINT_VERSION,
        spec: ckpt.model.spec().clone(),
        epoch: ckpt.epoch,
        dev_metric: ckpt.dev_metric,
        seed: ckpt.seed,
        weights: ckpt.model.weights().to_vec(),
        biases: ckpt.model.biases().to_vec(),
        crc32: None,
    };
    let mut bytes = serde_json::to_vec(&envelope).map_err(|e| Error::json(path, e))?;
    let crc = crc32fast::hash(&bytes);
    bytes.pop();
    bytes.extend_from_slice(TRAILER);
    bytes.extend_from_slice(format!("{crc}}}").as_bytes());
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let integrity = |reason: String| Error::Integrity {
        path: path.to_path_buf(),
        reason,
    };

    let mut value: Value = serde_json::from_slice(&bytes).map_err(|e| integrity(format!("malformed JSON: {e}")))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| integrity("top level is not an object".into()))?;
    match obj.get("magic").and_then(Value::as_str) {
        Some(CHECKPOINT_MAGIC) => {}
        other => return Err(integrity(format!("bad magic {other:?}"))),
    }
    let version = obj
        .get("version")
        .and_then(Value::as_u64)
        .ok_or_else(|| integrity("missing version".into()))?;
    if !SUPPORTED_VERSIONS.contains(&version) {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: version,
            supported: SUPPORTED_VERSIONS,
        });
    }
    obj.remove("crc32");
    let (payload, stored) =
        split_trailer(&bytes).ok_or_else(|| integrity("checksum trailer missing or malformed".into()))?;
    let actual = crc32fast::hash(&payload);
    if u64::from(actual) != stored {
        return Err(integrity(format!(
            "checksum mismatch: stored {stored}, computed {actual}"
        )));
    }

    let envelope: Envelope = serde_json::from_value(value).map_err(|e| integrity(format!("bad payload: {e}")))?;
    if envelope.epoch == 0 {
        return Err(integrity("epoch must be >= 1".into()));
    }
    let model = MlpModel::from_parts(envelope.spec, envelope.weights, envelope.biases)
        .map_err(|e| integrity(format!("inconsistent parameters: {e}")))?;
    Ok(Checkpoint {
        epoch: envelope.epoch,
        model,
        dev_metric: envelope.dev_metric,
        seed: envelope.seed,
    })
}
