//! NPY version 1.0 reader/writer for little-endian C-order tensors.
//! Supported dtypes: f32, f64, u8. Anything else is a typed error, never a
//! panic: fuzzed headers must fail cleanly.

use std::path::Path;

use ndarray::ArrayD;

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
    U8,
}

impl Dtype {
    pub fn descr(&self) -> &'static str {
        match self {
            Dtype::F32 => "<f4",
            Dtype::F64 => "<f8",
            Dtype::U8 => "|u1",
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
            Dtype::U8 => 1,
        }
    }

    fn from_descr(s: &str) -> Result<Self> {
        match s {
            "<f4" => Ok(Dtype::F32),
            "<f8" => Ok(Dtype::F64),
            "|u1" | "<u1" => Ok(Dtype::U8),
            other => Err(Error::UnsupportedLayout(format!("dtype descr {other:?}"))),
        }
    }
}

/// An in-memory tensor file: dtype, shape, and the raw little-endian
/// C-order payload.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorFile {
    dtype: Dtype,
    shape: Vec<usize>,
    data: Vec<u8>,
}

impl TensorFile {
    pub fn new(dtype: Dtype, shape: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        let count: usize = shape.iter().product();
        if data.len() != count * dtype.size() {
            return Err(Error::ShapeMismatch(format!(
                "payload {} bytes, shape {:?} needs {}",
                data.len(),
                shape,
                count * dtype.size()
            )));
        }
        Ok(Self { dtype, shape, data })
    }

    pub fn from_f32(shape: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        let mut data = Vec::with_capacity(values.len() * 4);
        for v in &values {
            data.extend_from_slice(&v.to_le_bytes());
        }
        Self::new(Dtype::F32, shape, data)
    }

    pub fn from_f64(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let mut data = Vec::with_capacity(values.len() * 8);
        for v in &values {
            data.extend_from_slice(&v.to_le_bytes());
        }
        Self::new(Dtype::F64, shape, data)
    }

    pub fn from_u8(shape: Vec<usize>, values: Vec<u8>) -> Result<Self> {
        Self::new(Dtype::U8, shape, values)
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn to_f32_vec(&self) -> Result<Vec<f32>> {
        if self.dtype != Dtype::F32 {
            return Err(Error::UnsupportedLayout(format!(
                "expected f32 payload, file is {:?}",
                self.dtype
            )));
        }
        Ok(self
            .data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    }

    pub fn to_f64_vec(&self) -> Result<Vec<f64>> {
        if self.dtype != Dtype::F64 {
            return Err(Error::UnsupportedLayout(format!(
                "expected f64 payload, file is {:?}",
                self.dtype
            )));
        }
        Ok(self
            .data
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]))
            .collect())
    }

    pub fn to_f32_array(&self) -> Result<ArrayD<f32>> {
        ArrayD::from_shape_vec(self.shape.clone(), self.to_f32_vec()?)
            .map_err(|e| Error::NpyFormat(e.to_string()))
    }

    pub fn to_f64_array(&self) -> Result<ArrayD<f64>> {
        ArrayD::from_shape_vec(self.shape.clone(), self.to_f64_vec()?)
            .map_err(|e| Error::NpyFormat(e.to_string()))
    }
}

/// Serialize to the NPY v1.0 byte layout (header space-padded to a 64-byte
/// multiple, newline-terminated).
pub fn to_npy_bytes(t: &TensorFile) -> Vec<u8> {
    let shape_str = match t.shape.len() {
        0 => "()".to_string(),
        1 => format!("({},)", t.shape[0]),
        _ => format!(
            "({})",
            t.shape
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        t.dtype.descr(),
        shape_str
    );
    // total header (magic + version + len + dict + padding + newline) is a
    // multiple of 64
    let prefix = MAGIC.len() + 2 + 2;
    let unpadded = prefix + dict.len() + 1;
    let padding = (64 - unpadded % 64) % 64;
    let header_len = dict.len() + padding + 1;
    let mut out = Vec::with_capacity(prefix + header_len + t.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[0x01, 0x00]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend(std::iter::repeat_n(b' ', padding));
    out.push(b'\n');
    out.extend_from_slice(&t.data);
    out
}

pub fn write_npy(t: &TensorFile, path: &Path) -> Result<()> {
    super::atomic_write(path, &to_npy_bytes(t))
}

/// Parse NPY v1.0 bytes. Every malformed input yields a typed error.
pub fn from_npy_bytes(bytes: &[u8]) -> Result<TensorFile> {
    if bytes.len() < 10 {
        return Err(Error::NpyFormat("file shorter than the fixed header".into()));
    }
    if &bytes[..6] != MAGIC {
        return Err(Error::NpyFormat("bad magic".into()));
    }
    if bytes[6] != 1 || bytes[7] != 0 {
        return Err(Error::UnsupportedLayout(format!(
            "npy version {}.{} (only 1.0 supported)",
            bytes[6], bytes[7]
        )));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = 10 + header_len;
    if bytes.len() < data_start {
        return Err(Error::NpyFormat("truncated header".into()));
    }
    let header = std::str::from_utf8(&bytes[10..data_start])
        .map_err(|_| Error::NpyFormat("header is not valid UTF-8".into()))?;

    let descr = extract_quoted(header, "descr")?;
    let dtype = Dtype::from_descr(&descr)?;
    let fortran = extract_bool(header, "fortran_order")?;
    if fortran {
        return Err(Error::UnsupportedLayout("fortran_order=True".into()));
    }
    let shape = extract_shape(header)?;

    let count: usize = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::NpyFormat("shape overflow".into()))?;
    let need = count
        .checked_mul(dtype.size())
        .ok_or_else(|| Error::NpyFormat("payload size overflow".into()))?;
    let data = &bytes[data_start..];
    if data.len() != need {
        return Err(Error::NpyFormat(format!(
            "payload is {} bytes, shape {:?} needs {}",
            data.len(),
            shape,
            need
        )));
    }
    TensorFile::new(dtype, shape, data.to_vec())
}

pub fn read_npy(path: &Path) -> Result<TensorFile> {
    from_npy_bytes(&std::fs::read(path)?)
}

fn find_key<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    let pat = format!("'{key}'");
    let pos = header
        .find(&pat)
        .ok_or_else(|| Error::NpyFormat(format!("header missing key {key}")))?;
    let rest = &header[pos + pat.len()..];
    let rest = rest.trim_start();
    let rest = rest
        .strip_prefix(':')
        .ok_or_else(|| Error::NpyFormat(format!("no colon after key {key}")))?;
    Ok(rest.trim_start())
}

fn extract_quoted(header: &str, key: &str) -> Result<String> {
    let rest = find_key(header, key)?;
    let rest = rest
        .strip_prefix('\'')
        .ok_or_else(|| Error::NpyFormat(format!("{key} value is not quoted")))?;
    let end = rest
        .find('\'')
        .ok_or_else(|| Error::NpyFormat(format!("{key} value is unterminated")))?;
    Ok(rest[..end].to_string())
}

fn extract_bool(header: &str, key: &str) -> Result<bool> {
    let rest = find_key(header, key)?;
    if rest.starts_with("True") {
        Ok(true)
    } else if rest.starts_with("False") {
        Ok(false)
    } else {
        Err(Error::NpyFormat(format!("{key} is not a boolean")))
    }
}

fn extract_shape(header: &str) -> Result<Vec<usize>> {
    let rest = find_key(header, "shape")?;
    let rest = rest
        .strip_prefix('(')
        .ok_or_else(|| Error::NpyFormat("shape is not a tuple".into()))?;
    let end = rest
        .find(')')
        .ok_or_else(|| Error::NpyFormat("shape tuple is unterminated".into()))?;
    let inner = &rest[..end];
    let mut shape = Vec::new();
    for part in inner.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let d: usize = part
            .parse()
            .map_err(|_| Error::NpyFormat(format!("bad shape element {part:?}")))?;
        shape.push(d);
    }
    Ok(shape)
}
