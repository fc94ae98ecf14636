//! Canonical JSON serialization for dataset manifests: sorted keys,
//! pretty-printed, newline-terminated, written atomically. Identical
//! manifests always produce identical bytes.

use std::path::Path;

use serde::Serialize;

use crate::dataset::{Manifest, MANIFEST_SCHEMA_VERSION};
use crate::error::{Error, Result};

/// Serialize any value as canonical JSON bytes (sorted object keys via an
/// intermediate `serde_json::Value`, trailing newline).
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let v = serde_json::to_value(value)
        .map_err(|e| Error::Manifest(format!("serialization failed: {e}")))?;
    let v = sort_value(v);
    let mut bytes = serde_json::to_vec_pretty(&v)
        .map_err(|e| Error::Manifest(format!("serialization failed: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn sort_value(v: serde_json::Value) -> serde_json::Value {
    match v {
        serde_json::Value::Object(map) => {
            // BTreeMap iteration gives sorted keys
            let sorted: std::collections::BTreeMap<String, serde_json::Value> =
                map.into_iter().map(|(k, v)| (k, sort_value(v))).collect();
            serde_json::to_value(sorted).unwrap()
        }
        serde_json::Value::Array(items) => {
            serde_json::Value::Array(items.into_iter().map(sort_value).collect())
        }
        other => other,
    }
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    manifest.validate()?;
    super::atomic_write(path, &to_canonical_json(manifest)?)
}

pub fn manifest_from_json(text: &str) -> Result<Manifest> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::JsonParse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let found = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Manifest("missing field `schema_version`".into()))?
        as u32;
    if found != MANIFEST_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found,
            expected: MANIFEST_SCHEMA_VERSION,
        });
    }
    let manifest: Manifest =
        serde_json::from_value(value).map_err(|e| Error::Manifest(e.to_string()))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    manifest_from_json(&std::fs::read_to_string(path)?)
}
