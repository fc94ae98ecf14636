//! Binary PGM (P5) with 16-bit samples, used for signed-map visualization.
//! Samples are big-endian per the PGM spec; maxval is always 65535.

use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImageFile {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    /// Row-major samples, length width * height.
    pub samples: Vec<u16>,
}

impl GrayImageFile {
    pub fn new16(width: usize, height: usize, samples: Vec<u16>) -> Result<Self> {
        if samples.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} samples for {}x{}",
                samples.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            bit_depth: 16,
            samples,
        })
    }
}

pub fn to_pgm16_bytes(img: &GrayImageFile) -> Result<Vec<u8>> {
    if img.bit_depth != 16 {
        return Err(Error::PgmFormat(format!(
            "only 16-bit output supported, image is {}-bit",
            img.bit_depth
        )));
    }
    let header = format!("P5\n{} {}\n65535\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.samples.len() * 2);
    out.extend_from_slice(header.as_bytes());
    for s in &img.samples {
        out.extend_from_slice(&s.to_be_bytes());
    }
    Ok(out)
}

pub fn write_pgm16(img: &GrayImageFile, path: &Path) -> Result<()> {
    super::atomic_write(path, &to_pgm16_bytes(img)?)
}

pub fn from_pgm16_bytes(bytes: &[u8]) -> Result<GrayImageFile> {
    let mut pos = 0usize;

    fn skip_ws_and_comments(bytes: &[u8], pos: &mut usize) {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            } else {
                return;
            }
        }
    }

    fn token(bytes: &[u8], pos: &mut usize) -> Result<String> {
        skip_ws_and_comments(bytes, pos);
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::PgmFormat("unexpected end of header".into()));
        }
        std::str::from_utf8(&bytes[start..*pos])
            .map(|s| s.to_string())
            .map_err(|_| Error::PgmFormat("non-ASCII header token".into()))
    }

    let magic = token(bytes, &mut pos)?;
    if magic != "P5" {
        return Err(Error::PgmFormat(format!("bad magic {magic:?}")));
    }
    let width: usize = token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::PgmFormat("bad width".into()))?;
    let height: usize = token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::PgmFormat("bad height".into()))?;
    let maxval: u32 = token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::PgmFormat("bad maxval".into()))?;
    if maxval != 65535 {
        return Err(Error::PgmFormat(format!(
            "maxval {maxval}, only 65535 supported"
        )));
    }
    // exactly one whitespace byte separates header and payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::PgmFormat("missing header terminator".into()));
    }
    pos += 1;
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::PgmFormat("dimension overflow".into()))?;
    let need = count
        .checked_mul(2)
        .ok_or_else(|| Error::PgmFormat("payload size overflow".into()))?;
    let data = &bytes[pos..];
    if data.len() != need {
        return Err(Error::PgmFormat(format!(
            "payload is {} bytes, {}x{} needs {}",
            data.len(),
            width,
            height,
            need
        )));
    }
    let samples = data
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect();
    GrayImageFile::new16(width, height, samples)
}

pub fn read_pgm16(path: &Path) -> Result<GrayImageFile> {
    from_pgm16_bytes(&std::fs::read(path)?)
}

/// Affine packing parameters for signed maps stored as PGM16:
/// sample 0 maps to `lo`, sample 65535 maps to `hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackingParams {
    pub lo: f32,
    pub hi: f32,
}

/// Pack a signed map symmetrically: 0 -> -max|v|, 65535 -> +max|v|.
pub fn pack_signed_to_pgm16(values: &ArrayView2<f32>) -> Result<(GrayImageFile, PackingParams)> {
    let (h, w) = values.dim();
    let m = values.iter().fold(0.0f32, |a, &v| a.max(v.abs()));
    let params = PackingParams { lo: -m, hi: m };
    let samples = values
        .iter()
        .map(|&v| {
            if m == 0.0 {
                32767u16
            } else {
                (((v + m) / (2.0 * m)) * 65535.0).round().clamp(0.0, 65535.0) as u16
            }
        })
        .collect();
    Ok((GrayImageFile::new16(w, h, samples)?, params))
}

/// Invert [`pack_signed_to_pgm16`].
pub fn unpack_signed_from_pgm16(img: &GrayImageFile, params: &PackingParams) -> ndarray::Array2<f32> {
    ndarray::Array2::from_shape_fn((img.height, img.width), |(r, c)| {
        let s = img.samples[r * img.width + c] as f32 / 65535.0;
        params.lo + s * (params.hi - params.lo)
    })
}
