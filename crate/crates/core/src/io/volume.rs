//! Volume export: `f32` x-fastest payload with a JSON header, or legacy ASCII
//! VTK structured points for external viewers.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::migrate::{GridSpec, VoxelVolume};

use super::{f32_payload, header_path, read_f32_payload, read_json, write_atomic, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VolumeFormat {
    /// Binary payload at the path, header at `<path>.json`.
    RawJson,
    VtkLegacy,
}

impl std::str::FromStr for VolumeFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" | "raw+json" | "raw-json" => Ok(Self::RawJson),
            "vtk" | "vtk-legacy" => Ok(Self::VtkLegacy),
            other => Err(Error::invalid(
                "volume format",
                format!("{other:?} is not one of raw, vtk"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct VolumeHeader {
    origin: [f64; 3],
    voxel_size: f64,
    dims: [usize; 3],
}

pub fn write_volume(v: &VoxelVolume, path: &Path, format: VolumeFormat) -> Result<()> {
    v.validate()?;
    if let Some(i) = v.values.iter().position(|x| !(x.abs() <= f32::MAX as f64)) {
        return Err(Error::invalid(
            "volume",
            format!("voxel {i} does not fit in a 32-bit float"),
        ));
    }
    match format {
        VolumeFormat::RawJson => {
            let payload = f32_payload(v.values.iter().copied());
            write_atomic(path, |w| w.write_all(&payload))?;
            write_json(
                &header_path(path),
                &VolumeHeader {
                    origin: v.grid.origin,
                    voxel_size: v.grid.voxel_size,
                    dims: v.grid.dims,
                },
            )
        }
        VolumeFormat::VtkLegacy => write_atomic(path, |w| write_vtk(v, w)),
    }
}

fn write_vtk(v: &VoxelVolume, w: &mut dyn Write) -> std::io::Result<()> {
    let g = &v.grid;
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "gpr-volume migration image")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} {}", g.dims[0], g.dims[1], g.dims[2])?;
    writeln!(w, "ORIGIN {} {} {}", g.origin[0], g.origin[1], g.origin[2])?;
    writeln!(w, "SPACING {0} {0} {0}", g.voxel_size)?;
    writeln!(w, "POINT_DATA {}", g.len())?;
    writeln!(w, "SCALARS amplitude float 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for row in v.values.chunks(g.dims[0]) {
        let line: Vec<String> = row.iter().map(|x| (*x as f32).to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Reads a raw+json volume. Hit counts are not stored and come back as zero.
pub fn read_volume(path: &Path) -> Result<VoxelVolume> {
    let hpath = header_path(path);
    let h: VolumeHeader = read_json(&hpath)?;
    let grid = GridSpec::new(h.origin, h.voxel_size, h.dims).map_err(|e| Error::Header {
        path: hpath.clone(),
        field: "dims".into(),
        reason: e.to_string(),
    })?;
    let values = read_f32_payload(path, grid.len())?;
    Ok(VoxelVolume {
        hit_count: vec![0; grid.len()],
        grid,
        values,
    })
}
