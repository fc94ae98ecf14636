//! Shared CLI plumbing: input resolution against the data root, NPY tensor
//! loading, provenance sidecars, and flag parsing helpers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use con360::error::{Error, Result};
use con360::io::npy::{read_npy, TensorFile};
use ndarray::{Array2, Array3};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const DATA_ROOT_ENV: &str = "CON360_DATA_ROOT";

/// Resolve an input path: absolute and existing relative paths win; other
/// relative paths are tried under `$CON360_DATA_ROOT`.
pub fn resolve_input(path: &Path) -> PathBuf {
    if path.is_absolute() || path.exists() {
        return path.to_path_buf();
    }
    match std::env::var_os(DATA_ROOT_ENV) {
        Some(root) => PathBuf::from(root).join(path),
        None => path.to_path_buf(),
    }
}

/// Resolve an output path under the run directory when `--run-id` is set.
pub fn resolve_output(path: &Path, run_id: Option<&str>) -> PathBuf {
    match run_id {
        Some(id) if path.is_relative() => PathBuf::from("runs").join(id).join(path),
        _ => path.to_path_buf(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

pub fn digest_file(path: &Path) -> Result<String> {
    Ok(format!("sha256:{}", sha256_hex(&std::fs::read(path)?)))
}

/// Provenance record written next to every output: the exact command,
/// its parameters, and a digest of every input consumed.
#[derive(Serialize)]
pub struct Sidecar {
    pub command: String,
    pub params: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl Sidecar {
    pub fn new(command: &str, params: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            params,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(path.display().to_string(), digest_file(path)?);
        Ok(())
    }

    pub fn record_output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    /// Write as `<file>.sidecar.json` for a file target, `sidecar.json`
    /// inside a directory target.
    pub fn write(&self, target: &Path) -> Result<()> {
        let path = if target.is_dir() {
            target.join("sidecar.json")
        } else {
            let mut name = target.file_name().unwrap_or_default().to_os_string();
            name.push(".sidecar.json");
            target.with_file_name(name)
        };
        con360::io::atomic_write(&path, &con360::io::manifest::to_canonical_json(self)?)
    }
}

/// Load an NPY file as a flat f32 buffer plus shape.
pub fn load_f32(path: &Path) -> Result<(Vec<usize>, Vec<f32>)> {
    let tf = read_npy(path)?;
    Ok((tf.shape().to_vec(), tf.to_f32_vec()?))
}

/// Load an NPY file holding either one frame (H, W) or a sequence
/// (T, H, W); always returns a sequence.
pub fn load_frames(path: &Path) -> Result<Vec<Array2<f32>>> {
    let (shape, data) = load_f32(path)?;
    match shape.as_slice() {
        [h, w] => Ok(vec![Array2::from_shape_vec((*h, *w), data).unwrap()]),
        [t, h, w] => {
            let arr = Array3::from_shape_vec((*t, *h, *w), data).unwrap();
            Ok(arr
                .outer_iter()
                .map(|frame| frame.to_owned())
                .collect())
        }
        other => Err(Error::ShapeMismatch(format!(
            "{}: expected (H, W) or (T, H, W), got {other:?}",
            path.display()
        ))),
    }
}

pub fn write_f32_npy(path: &Path, shape: Vec<usize>, data: Vec<f32>) -> Result<()> {
    let tf = TensorFile::from_f32(shape, data)?;
    con360::io::npy::write_npy(&tf, path)
}

/// Parse "HxV" field-of-view degrees, e.g. "90x90".
pub fn parse_fov_deg(s: &str) -> Result<(f64, f64)> {
    let (h, v) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::Parameter(format!("fov must look like 90x90, got {s:?}")))?;
    let h: f64 = h
        .trim()
        .parse()
        .map_err(|_| Error::Parameter(format!("bad horizontal fov {h:?}")))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| Error::Parameter(format!("bad vertical fov {v:?}")))?;
    Ok((h, v))
}

/// Parse "WxH" output size, e.g. "256x256".
pub fn parse_size(s: &str) -> Result<(usize, usize)> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::Parameter(format!("size must look like 256x256, got {s:?}")))?;
    let w: usize = w
        .trim()
        .parse()
        .map_err(|_| Error::Parameter(format!("bad width {w:?}")))?;
    let h: usize = h
        .trim()
        .parse()
        .map_err(|_| Error::Parameter(format!("bad height {h:?}")))?;
    Ok((w, h))
}

/// Write a JSON document canonically (sorted keys, trailing newline).
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    con360::io::atomic_write(path, &con360::io::manifest::to_canonical_json(value)?)
}
