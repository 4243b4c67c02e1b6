//! Pose-aware 3D back-projection migration.
//!
//! Each voxel gathers, from every trace whose aperture cone contains it, the
//! trace amplitude at the two-way time `2 r / v` to the antenna. Summing the
//! gathers is the adjoint of spreading each sample over a semi-hemisphere of
//! radius `v t / 2`; the two orders agree up to floating-point reassociation
//! (see [`backproject_trace_major`]).

use std::collections::VecDeque;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{envelope, mask_bscan, BoundingBox};
use crate::error::{ensure_finite, Error, Result};
use crate::forward::BScan;
use crate::medium::MediumModel;
use crate::pose::antenna_world_position;

/// Voxel lattice: voxel `(i, j, k)` sits at `origin + (i, j, k) · voxel_size`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 3],
    pub voxel_size: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: [f64; 3], voxel_size: f64, dims: [usize; 3]) -> Result<Self> {
        let g = Self {
            origin,
            voxel_size,
            dims,
        };
        g.validate()?;
        Ok(g)
    }

    /// Grid spanning `[min, max]` (inclusive where the spacing divides evenly).
    pub fn spanning(min: [f64; 3], max: [f64; 3], voxel_size: f64) -> Result<Self> {
        ensure_finite("voxel size", voxel_size)?;
        if voxel_size <= 0.0 {
            return Err(Error::invalid("voxel size", "must be positive"));
        }
        let mut dims = [0; 3];
        for a in 0..3 {
            let span = max[a] - min[a];
            if !(span >= 0.0) {
                return Err(Error::invalid("grid extent", format!("axis {a} is empty")));
            }
            dims[a] = (span / voxel_size + 1e-9).floor() as usize + 1;
        }
        Self::new(min, voxel_size, dims)
    }

    pub fn validate(&self) -> Result<()> {
        for v in self.origin {
            ensure_finite("grid origin", v)?;
        }
        ensure_finite("voxel size", self.voxel_size)?;
        if self.voxel_size <= 0.0 {
            return Err(Error::invalid("voxel size", "must be positive"));
        }
        if self.dims.contains(&0) {
            return Err(Error::invalid(
                "grid dims",
                "every axis needs at least one voxel",
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index, x fastest.
    pub fn index(&self, [i, j, k]: [usize; 3]) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    pub fn position(&self, [i, j, k]: [usize; 3]) -> [f64; 3] {
        [
            self.origin[0] + i as f64 * self.voxel_size,
            self.origin[1] + j as f64 * self.voxel_size,
            self.origin[2] + k as f64 * self.voxel_size,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelVolume {
    pub grid: GridSpec,
    /// Accumulated amplitude, x fastest.
    pub values: Vec<f64>,
    pub hit_count: Vec<u32>,
}

impl VoxelVolume {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            values: vec![0.0; grid.len()],
            hit_count: vec![0; grid.len()],
            grid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.values.len() != self.grid.len() || self.hit_count.len() != self.grid.len() {
            return Err(Error::invalid(
                "volume",
                "buffer length does not match dims",
            ));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("volume", format!("voxel {i} is not finite")));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Voxel with the largest `|value|`; first in x-fastest order on ties.
    pub fn argmax_abs(&self) -> Option<[usize; 3]> {
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in self.values.iter().enumerate() {
            if best.is_none_or(|(_, b)| v.abs() > b) {
                best = Some((i, v.abs()));
            }
        }
        best.filter(|&(_, b)| b > 0.0)
            .map(|(i, _)| self.grid.coords(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    #[default]
    None,
    InverseR,
    InverseRSquared,
}

impl Weighting {
    fn apply(self, r: f64) -> f64 {
        match self {
            Weighting::None => 1.0,
            Weighting::InverseR => 1.0 / r,
            Weighting::InverseRSquared => 1.0 / (r * r),
        }
    }
}

impl std::str::FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Weighting::None),
            "inverse-r" => Ok(Weighting::InverseR),
            "inverse-r-squared" => Ok(Weighting::InverseRSquared),
            other => Err(Error::invalid(
                "weighting",
                format!("{other:?} is not one of none, inverse-r, inverse-r-squared"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MigrationConfig {
    pub medium: MediumModel,
    /// Largest angle from vertical at which a trace sees a voxel, radians.
    pub aperture_half_angle: f64,
    pub weighting: Weighting,
    pub normalize_by_hits: bool,
    /// Migrate the trace envelope instead of the signed amplitude.
    pub envelope_first: bool,
    pub antenna_offset: [f64; 2],
}

impl MigrationConfig {
    pub fn new(medium: MediumModel) -> Self {
        Self {
            medium,
            aperture_half_angle: 60f64.to_radians(),
            weighting: Weighting::None,
            normalize_by_hits: true,
            envelope_first: false,
            antenna_offset: [0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = ensure_finite("aperture half-angle", self.aperture_half_angle)?;
        if !(a > 0.0 && a <= std::f64::consts::FRAC_PI_2) {
            return Err(Error::OutOfRange {
                what: "aperture half-angle".into(),
                value: a,
                min: 0.0,
                max: std::f64::consts::FRAC_PI_2,
            });
        }
        for v in self.antenna_offset {
            ensure_finite("antenna offset", v)?;
        }
        Ok(())
    }
}

/// Per-trace data the gather kernel needs.
struct Shot<'a> {
    antenna: [f64; 3],
    samples: &'a [f64],
}

struct Kernel<'a> {
    shots: Vec<Shot<'a>>,
    /// Samples per metre of range: `2 / (v dt)`.
    samples_per_metre: f64,
    tan_aperture: f64,
    weighting: Weighting,
}

impl Kernel<'_> {
    /// Contribution of one shot to the voxel at `q`, if it sees it.
    fn contribution(&self, shot: &Shot, q: [f64; 3]) -> Option<f64> {
        let dz = q[2] - shot.antenna[2];
        if dz <= 0.0 {
            return None;
        }
        let h = ((q[0] - shot.antenna[0]).powi(2) + (q[1] - shot.antenna[1]).powi(2)).sqrt();
        if h > dz * self.tan_aperture {
            return None;
        }
        let r = (h * h + dz * dz).sqrt();
        let s = r * self.samples_per_metre;
        let last = shot.samples.len() - 1;
        if s > last as f64 {
            return None;
        }
        let k = (s.floor() as usize).min(last);
        let frac = s - k as f64;
        let amp = if k == last {
            shot.samples[k]
        } else {
            shot.samples[k] * (1.0 - frac) + shot.samples[k + 1] * frac
        };
        Some(amp * self.weighting.apply(r))
    }

    fn gather(&self, q: [f64; 3]) -> (f64, u32) {
        let mut sum = 0.0;
        let mut hits = 0;
        for shot in &self.shots {
            if let Some(c) = self.contribution(shot, q) {
                sum += c;
                hits += 1;
            }
        }
        (sum, hits)
    }
}

fn prepare<'a>(b: &'a BScan, grid: &GridSpec, cfg: &MigrationConfig) -> Result<Kernel<'a>> {
    grid.validate()?;
    cfg.validate()?;
    let v = cfg.medium.velocity();
    let samples_per_metre = 2.0 / (v * b.dt());
    let max_range = (b.n_samples() - 1) as f64 / samples_per_metre;
    let lo = grid.origin;
    let hi = grid.position([grid.dims[0] - 1, grid.dims[1] - 1, grid.dims[2] - 1]);
    let mut blind = 0;
    let shots: Vec<Shot> = b
        .traces()
        .iter()
        .map(|t| {
            let antenna = antenna_world_position(&t.pose, cfg.antenna_offset);
            let nearest: f64 = (0..3)
                .map(|a| (antenna[a] - antenna[a].clamp(lo[a], hi[a])).powi(2))
                .sum::<f64>()
                .sqrt();
            if nearest > max_range {
                blind += 1;
            }
            Shot {
                antenna,
                samples: &t.samples,
            }
        })
        .collect();
    if blind > 0 {
        warn!(
            "{blind} of {} traces record too briefly to reach any voxel; they contribute nothing",
            b.n_traces()
        );
    }
    Ok(Kernel {
        shots,
        samples_per_metre,
        tan_aperture: cfg.aperture_half_angle.tan(),
        weighting: cfg.weighting,
    })
}

fn finish(mut vol: VoxelVolume, cfg: &MigrationConfig) -> VoxelVolume {
    if cfg.normalize_by_hits {
        for (v, &h) in vol.values.iter_mut().zip(&vol.hit_count) {
            *v /= h.max(1) as f64;
        }
    }
    vol
}

/// Voxel-driven migration. Depth slabs are filled independently in parallel;
/// the worker count honours `GPR_VOLUME_THREADS`.
pub fn migrate_bscan(b: &BScan, grid: &GridSpec, cfg: &MigrationConfig) -> Result<VoxelVolume> {
    let env;
    let b = if cfg.envelope_first {
        env = envelope(b);
        &env
    } else {
        b
    };
    let kernel = prepare(b, grid, cfg)?;
    let mut vol = VoxelVolume::zeros(*grid);
    let slab = grid.dims[0] * grid.dims[1];
    crate::parallel::install(|| {
        vol.values
            .par_chunks_mut(slab)
            .zip(vol.hit_count.par_chunks_mut(slab))
            .enumerate()
            .for_each(|(k, (vals, hits))| {
                for (off, (v, h)) in vals.iter_mut().zip(hits.iter_mut()).enumerate() {
                    let q = grid.position(grid.coords(k * slab + off));
                    (*v, *h) = kernel.gather(q);
                }
            });
    });
    Ok(finish(vol, cfg))
}

/// Trace-driven reference: each trace scatters into every voxel it sees.
/// Sequential; kept as the oracle for the gather formulation.
pub fn backproject_trace_major(
    b: &BScan,
    grid: &GridSpec,
    cfg: &MigrationConfig,
) -> Result<VoxelVolume> {
    let env;
    let b = if cfg.envelope_first {
        env = envelope(b);
        &env
    } else {
        b
    };
    let kernel = prepare(b, grid, cfg)?;
    let mut vol = VoxelVolume::zeros(*grid);
    for shot in &kernel.shots {
        for idx in 0..grid.len() {
            if let Some(c) = kernel.contribution(shot, grid.position(grid.coords(idx))) {
                vol.values[idx] += c;
                vol.hit_count[idx] += 1;
            }
        }
    }
    Ok(finish(vol, cfg))
}

/// Migrates the data inside the boxes and the remainder separately. The two
/// volumes sum to the full migration.
pub fn migrate_with_rois(
    b: &BScan,
    boxes: &[BoundingBox],
    grid: &GridSpec,
    cfg: &MigrationConfig,
) -> Result<(VoxelVolume, VoxelVolume)> {
    let inside = mask_bscan(b, boxes, true)?;
    let outside = mask_bscan(b, boxes, false)?;
    Ok((
        migrate_bscan(&inside, grid, cfg)?,
        migrate_bscan(&outside, grid, cfg)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractedTarget {
    /// Amplitude-weighted centroid, metres.
    pub position: [f64; 3],
    /// Largest `|value|` in the component.
    pub amplitude: f64,
    pub voxels: usize,
}

/// Face-connected components of voxels with `|value| >= threshold_fraction · max`.
pub fn extract_targets(v: &VoxelVolume, threshold_fraction: f64) -> Result<Vec<ExtractedTarget>> {
    v.validate()?;
    ensure_finite("threshold fraction", threshold_fraction)?;
    if !(threshold_fraction > 0.0 && threshold_fraction <= 1.0) {
        return Err(Error::OutOfRange {
            what: "threshold fraction".into(),
            value: threshold_fraction,
            min: 0.0,
            max: 1.0,
        });
    }
    let max = v.max_abs();
    if max == 0.0 {
        return Ok(Vec::new());
    }
    let thr = threshold_fraction * max;
    let g = &v.grid;
    let mut seen = vec![false; g.len()];
    let mut out = Vec::new();
    for start in 0..g.len() {
        if seen[start] || v.values[start].abs() < thr {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let (mut wsum, mut centroid, mut peak, mut count) = (0.0, [0.0; 3], 0.0f64, 0);
        while let Some(idx) = queue.pop_front() {
            let a = v.values[idx].abs();
            let c = g.coords(idx);
            let p = g.position(c);
            for ax in 0..3 {
                centroid[ax] += a * p[ax];
            }
            wsum += a;
            peak = peak.max(a);
            count += 1;
            for ax in 0..3 {
                for step in [-1isize, 1] {
                    let n = c[ax] as isize + step;
                    if n < 0 || n as usize >= g.dims[ax] {
                        continue;
                    }
                    let mut nc = c;
                    nc[ax] = n as usize;
                    let ni = g.index(nc);
                    if !seen[ni] && v.values[ni].abs() >= thr {
                        seen[ni] = true;
                        queue.push_back(ni);
                    }
                }
            }
        }
        out.push(ExtractedTarget {
            position: centroid.map(|c| c / wsum),
            amplitude: peak,
            voxels: count,
        });
    }
    out.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
    Ok(out)
}
