//! Bit-exact file I/O shared across the pipeline and with downstream
//! trainers: NPY tensors, 16-bit PGM images, canonical JSON manifests.
//! All writes go through a temp file and an atomic rename.

pub mod manifest;
pub mod npy;
pub mod pgm;

use std::path::Path;

use crate::error::Result;

/// Write a file atomically: temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    if !dir.as_os_str().is_empty() {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = tempfile::NamedTempFile::new_in(if dir.as_os_str().is_empty() {
        Path::new(".")
    } else {
        dir
    })?;
    use std::io::Write;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
