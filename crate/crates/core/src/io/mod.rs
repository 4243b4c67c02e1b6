//! File formats, image rendering and the command-line front end.
//!
//! Binary payloads are little-endian `f32` with a JSON header stored next to
//! them as `<payload>.json`. Every writer goes through [`write_atomic`], so a
//! failed write never leaves a partial file behind.

pub mod annotations;
pub mod bscan;
pub mod cli;
pub mod poses;
pub mod render;
pub mod scene;
pub mod volume;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub use annotations::{read_annotations, write_annotations, AnnotatedBox, AnnotationEntry};
pub use bscan::{read_bscan, write_bscan, write_bscan_with_provenance, BScanHeader};
pub use poses::{read_poses, write_poses};
pub use render::{hot_colormap, render_bscan_image};
pub use scene::{read_scene, write_scene, SceneFile};
pub use volume::{read_volume, write_volume, VolumeFormat};

/// Path of the JSON header that accompanies a binary payload.
pub fn header_path(payload: &Path) -> PathBuf {
    let mut s = OsString::from(payload.as_os_str());
    s.push(".json");
    PathBuf::from(s)
}

/// Writes through a temporary file in the destination directory and renames
/// it into place once `fill` succeeds.
pub fn write_atomic(
    path: &Path,
    fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    write_atomic(path, |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")
    })
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn f32_payload(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(|v| (v as f32).to_le_bytes()).collect()
}

/// Decodes a little-endian `f32` payload of exactly `count` values.
pub(crate) fn read_f32_payload(path: &Path, count: usize) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = count as u64 * 4;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    bytes
        .chunks_exact(4)
        .enumerate()
        .map(|(i, c)| {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if v.is_finite() {
                Ok(v as f64)
            } else {
                Err(Error::NonFinitePayload {
                    path: path.to_path_buf(),
                    offset: i as u64 * 4,
                })
            }
        })
        .collect()
}
