//! B-scan files: `f32` trace-major payload plus a JSON header.
//!
//! Samples are held as `f64` in memory and stored as `f32`; anything that
//! was read from disk (or is otherwise `f32`-representable) round-trips
//! bit for bit.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{AScan, BScan};
use crate::pose::Pose;

use super::{
    f32_payload, header_path, read_f32_payload, read_json, read_poses, write_atomic, write_json,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub timestamp: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BScanHeader {
    pub n_traces: usize,
    pub n_samples: usize,
    pub dt_seconds: f64,
    /// Inline poses, one per trace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poses: Option<Vec<PoseRecord>>,
    /// Pose CSV, relative to the header's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_file: Option<PathBuf>,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

pub fn write_bscan(b: &BScan, path: &Path) -> Result<()> {
    write_bscan_with_provenance(b, path, serde_json::Value::Null)
}

pub fn write_bscan_with_provenance(
    b: &BScan,
    path: &Path,
    provenance: serde_json::Value,
) -> Result<()> {
    for (i, t) in b.traces().iter().enumerate() {
        if let Some(k) = t.samples.iter().position(|v| !(v.abs() <= f32::MAX as f64)) {
            return Err(Error::invalid(
                "B-scan",
                format!("trace {i} sample {k} does not fit in a 32-bit float"),
            ));
        }
    }
    let header = BScanHeader {
        n_traces: b.n_traces(),
        n_samples: b.n_samples(),
        dt_seconds: b.dt(),
        poses: Some(
            b.poses()
                .map(|p| PoseRecord {
                    timestamp: p.timestamp,
                    x: p.position[0],
                    y: p.position[1],
                    z: p.position[2],
                    heading: p.heading,
                })
                .collect(),
        ),
        pose_file: None,
        provenance,
    };
    let payload = f32_payload(b.traces().iter().flat_map(|t| t.samples.iter().copied()));
    write_atomic(path, |w| w.write_all(&payload))?;
    write_json(&header_path(path), &header)
}

/// Reads the payload at `path` and its header at `<path>.json`.
pub fn read_bscan(path: &Path) -> Result<BScan> {
    let hpath = header_path(path);
    let h: BScanHeader = read_json(&hpath)?;
    let field = |field: &str, reason: String| Error::Header {
        path: hpath.clone(),
        field: field.into(),
        reason,
    };
    if !(h.dt_seconds.is_finite() && h.dt_seconds > 0.0) {
        return Err(field(
            "dt_seconds",
            format!("{} is not a positive duration", h.dt_seconds),
        ));
    }
    if h.n_traces == 0 {
        return Err(field("n_traces", "must be at least 1".into()));
    }
    if h.n_samples == 0 {
        return Err(field("n_samples", "must be at least 1".into()));
    }
    let poses: Vec<Pose> = match (&h.poses, &h.pose_file) {
        (Some(list), None) => list
            .iter()
            .enumerate()
            .map(|(i, r)| {
                Pose::new([r.x, r.y, r.z], r.heading, r.timestamp)
                    .map_err(|e| field("poses", format!("pose {i}: {e}")))
            })
            .collect::<Result<_>>()?,
        (None, Some(file)) => {
            let base = hpath.parent().unwrap_or(Path::new("."));
            read_poses(&base.join(file))?.poses().to_vec()
        }
        (Some(_), Some(_)) => {
            return Err(field(
                "poses",
                "give either inline poses or pose_file, not both".into(),
            ))
        }
        (None, None) => return Err(Error::MissingPose { trace: 0 }),
    };
    if poses.len() < h.n_traces {
        return Err(Error::MissingPose { trace: poses.len() });
    }
    if poses.len() > h.n_traces {
        return Err(field(
            "poses",
            format!("{} poses for {} traces", poses.len(), h.n_traces),
        ));
    }
    let values = read_f32_payload(path, h.n_traces * h.n_samples)?;
    let traces = values
        .chunks_exact(h.n_samples)
        .zip(poses)
        .map(|(s, pose)| AScan {
            samples: s.to_vec(),
            dt: h.dt_seconds,
            pose,
        })
        .collect();
    BScan::new(traces)
}
