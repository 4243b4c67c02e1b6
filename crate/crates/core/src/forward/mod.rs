//! Synthetic B-scan generation.
//!
//! Two forward models are provided: a fast analytic point-scatterer model that
//! places a Ricker pulse at every target's two-way travel time, and a 2D
//! TM-mode FDTD solver in [`fdtd`].

pub mod fdtd;

use std::f64::consts::PI;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::detect::BoundingBox;
use crate::error::{ensure_finite, Error, Result};
use crate::medium::MediumModel;
use crate::pose::{antenna_world_position, Pose, Trajectory};

/// Default source centre frequency, Hz.
pub const DEFAULT_FREQUENCY: f64 = 1.5e9;
/// Default number of time samples per trace.
pub const DEFAULT_SAMPLES: usize = 512;
/// Default time sampling interval, s.
pub const DEFAULT_DT: f64 = 1e-10;

/// Ricker wavelet `(1 - 2π²f²t²)·exp(-π²f²t²)`, peak 1 at `t = 0`.
pub fn ricker_wavelet(t: f64, f_c: f64) -> f64 {
    let a = (PI * f_c * t).powi(2);
    (1.0 - 2.0 * a) * (-a).exp()
}

/// Nominal temporal width of a Ricker pulse, one period of its centre frequency.
pub fn wavelet_width(f_c: f64) -> f64 {
    1.0 / f_c
}

/// One recorded trace.
#[derive(Debug, Clone, PartialEq)]
pub struct AScan {
    pub samples: Vec<f64>,
    pub dt: f64,
    pub pose: Pose,
}

/// Radargram: traces with a shared sample count and interval.
#[derive(Debug, Clone, PartialEq)]
pub struct BScan {
    traces: Vec<AScan>,
}

impl BScan {
    pub fn new(traces: Vec<AScan>) -> Result<Self> {
        let first = traces
            .first()
            .ok_or_else(|| Error::invalid("B-scan", "needs at least one trace"))?;
        let (n, dt) = (first.samples.len(), first.dt);
        if n == 0 {
            return Err(Error::invalid(
                "B-scan",
                "traces must hold at least one sample",
            ));
        }
        ensure_finite("dt", dt)?;
        if dt <= 0.0 {
            return Err(Error::invalid("dt", format!("{dt} s must be positive")));
        }
        for (i, tr) in traces.iter().enumerate() {
            if tr.samples.len() != n {
                return Err(Error::invalid(
                    "B-scan",
                    format!("trace {i} has {} samples, expected {n}", tr.samples.len()),
                ));
            }
            if tr.dt != dt {
                return Err(Error::invalid(
                    "B-scan",
                    format!("trace {i} has dt {} s, expected {dt} s", tr.dt),
                ));
            }
            if let Some(k) = tr.samples.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(
                    "B-scan",
                    format!("trace {i} sample {k} is not finite"),
                ));
            }
        }
        Ok(Self { traces })
    }

    /// Builds a B-scan from per-trace sample vectors and matching poses.
    pub fn from_rows(rows: Vec<Vec<f64>>, dt: f64, poses: &[Pose]) -> Result<Self> {
        if rows.len() != poses.len() {
            return Err(Error::invalid(
                "B-scan",
                format!("{} traces but {} poses", rows.len(), poses.len()),
            ));
        }
        let traces = rows
            .into_iter()
            .zip(poses)
            .map(|(samples, &pose)| AScan { samples, dt, pose })
            .collect();
        Self::new(traces)
    }

    pub fn traces(&self) -> &[AScan] {
        &self.traces
    }

    pub fn n_traces(&self) -> usize {
        self.traces.len()
    }

    pub fn n_samples(&self) -> usize {
        self.traces[0].samples.len()
    }

    pub fn dt(&self) -> f64 {
        self.traces[0].dt
    }

    pub fn poses(&self) -> impl Iterator<Item = &Pose> {
        self.traces.iter().map(|t| &t.pose)
    }

    /// Same geometry, new sample values computed per trace.
    pub fn map_traces(&self, mut f: impl FnMut(usize, &[f64]) -> Vec<f64>) -> Self {
        let traces = self
            .traces
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let samples = f(i, &t.samples);
                debug_assert_eq!(samples.len(), t.samples.len());
                AScan {
                    samples,
                    dt: t.dt,
                    pose: t.pose,
                }
            })
            .collect();
        Self { traces }
    }

    /// Sample-wise sum; geometry must match.
    pub fn add(&self, other: &BScan) -> Result<BScan> {
        if self.n_traces() != other.n_traces()
            || self.n_samples() != other.n_samples()
            || self.dt() != other.dt()
        {
            return Err(Error::invalid("B-scan sum", "geometries differ"));
        }
        Ok(self.map_traces(|i, s| {
            s.iter()
                .zip(&other.traces[i].samples)
                .map(|(a, b)| a + b)
                .collect()
        }))
    }

    pub fn max_abs(&self) -> f64 {
        self.traces
            .iter()
            .flat_map(|t| t.samples.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> f64 {
        self.traces
            .iter()
            .flat_map(|t| t.samples.iter())
            .map(|v| v * v)
            .sum()
    }

    /// Mean along-track distance between consecutive antenna positions.
    pub fn mean_trace_spacing(&self, antenna_offset: [f64; 2]) -> f64 {
        if self.traces.len() < 2 {
            return 0.0;
        }
        let pos: Vec<[f64; 3]> = self
            .poses()
            .map(|p| antenna_world_position(p, antenna_offset))
            .collect();
        let total: f64 = pos
            .windows(2)
            .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
            .sum();
        total / (pos.len() - 1) as f64
    }
}

/// Point scatterer below the surface (`position[2]` is depth, positive down).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointTarget {
    pub position: [f64; 3],
    #[serde(default = "unit_reflectivity")]
    pub reflectivity: f64,
}

fn unit_reflectivity() -> f64 {
    1.0
}

/// Relative-permittivity raster on the FDTD (x, z) plane. Cell `(i, k)` sits
/// at `(i·dx, k·dz)`; values are stored x-fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialMap {
    pub nx: usize,
    pub nz: usize,
    pub dx: f64,
    pub dz: f64,
    pub permittivity: Vec<f64>,
    /// Electric conductivity per cell, S/m. Empty means lossless.
    #[serde(default)]
    pub conductivity: Vec<f64>,
}

impl MaterialMap {
    pub fn uniform(nx: usize, nz: usize, dx: f64, dz: f64, permittivity: f64) -> Self {
        Self {
            nx,
            nz,
            dx,
            dz,
            permittivity: vec![permittivity; nx * nz],
            conductivity: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 3 || self.nz < 3 {
            return Err(Error::invalid("material map", "needs at least 3x3 cells"));
        }
        if !(self.dx > 0.0 && self.dz > 0.0 && self.dx.is_finite() && self.dz.is_finite()) {
            return Err(Error::invalid(
                "material map",
                "cell sizes must be positive",
            ));
        }
        if self.permittivity.len() != self.nx * self.nz {
            return Err(Error::invalid(
                "material map",
                format!(
                    "{} permittivity values for {}x{} cells",
                    self.permittivity.len(),
                    self.nx,
                    self.nz
                ),
            ));
        }
        if let Some(i) = self
            .permittivity
            .iter()
            .position(|&e| !(e.is_finite() && e >= 1.0))
        {
            return Err(Error::invalid(
                "material map",
                format!(
                    "permittivity {} at cell {i} is below 1",
                    self.permittivity[i]
                ),
            ));
        }
        if !self.conductivity.is_empty() {
            if self.conductivity.len() != self.permittivity.len() {
                return Err(Error::invalid("material map", "conductivity size mismatch"));
            }
            if self
                .conductivity
                .iter()
                .any(|s| !(s.is_finite() && *s >= 0.0))
            {
                return Err(Error::invalid("material map", "conductivity must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn eps(&self, i: usize, k: usize) -> f64 {
        self.permittivity[k * self.nx + i]
    }

    pub fn sigma(&self, i: usize, k: usize) -> f64 {
        if self.conductivity.is_empty() {
            0.0
        } else {
            self.conductivity[k * self.nx + i]
        }
    }

    /// Mirror image about the vertical mid-line.
    pub fn mirrored_x(&self) -> Self {
        let flip = |v: &Vec<f64>| {
            if v.is_empty() {
                return Vec::new();
            }
            let mut out = Vec::with_capacity(v.len());
            for k in 0..self.nz {
                out.extend(v[k * self.nx..(k + 1) * self.nx].iter().rev());
            }
            out
        };
        Self {
            permittivity: flip(&self.permittivity),
            conductivity: flip(&self.conductivity),
            ..*self
        }
    }
}

/// Targets embedded in a homogeneous medium, optionally with an explicit
/// permittivity raster for the FDTD model.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub targets: Vec<PointTarget>,
    pub medium: MediumModel,
    pub material_map: Option<MaterialMap>,
}

impl Scene {
    pub fn new(targets: Vec<PointTarget>, medium: MediumModel) -> Result<Self> {
        let scene = Self {
            targets,
            medium,
            material_map: None,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.targets.iter().enumerate() {
            for v in t.position {
                ensure_finite("target position", v)?;
            }
            ensure_finite("target reflectivity", t.reflectivity)?;
            if t.position[2] <= 0.0 {
                return Err(Error::invalid(
                    "scene",
                    format!(
                        "target {i} depth {} m is not below the surface",
                        t.position[2]
                    ),
                ));
            }
        }
        if let Some(map) = &self.material_map {
            map.validate()?;
        }
        Ok(())
    }
}

/// Sampling and antenna parameters for [`synth_hyperbola_bscan`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub dt: f64,
    pub frequency: f64,
    pub antenna_offset: [f64; 2],
    /// Lower clamp on range for 1/r spreading; `None` uses one range cell `v·dt/2`.
    pub r_min: Option<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_samples: DEFAULT_SAMPLES,
            dt: DEFAULT_DT,
            frequency: DEFAULT_FREQUENCY,
            antenna_offset: [0.0, 0.0],
            r_min: None,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        ensure_finite("dt", self.dt)?;
        if self.dt <= 0.0 {
            return Err(Error::invalid(
                "dt",
                format!("{} s must be positive", self.dt),
            ));
        }
        if self.n_samples == 0 {
            return Err(Error::invalid("n_samples", "must be at least 1"));
        }
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(Error::invalid("frequency", "must be positive"));
        }
        Ok(())
    }

    pub fn range_clamp(&self, medium: &MediumModel) -> f64 {
        self.r_min.unwrap_or(medium.velocity() * self.dt / 2.0)
    }
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Analytic point-scatterer B-scan.
///
/// Every pose records `Σ reflectivity / max(r, r_min) · ricker(t - 2r/v)`
/// where `r` is the 3D range from the antenna to each target.
pub fn synth_hyperbola_bscan(
    scene: &Scene,
    trajectory: &Trajectory,
    cfg: &SynthConfig,
) -> Result<BScan> {
    cfg.validate()?;
    scene.validate()?;
    let v = scene.medium.velocity();
    let r_min = cfg.range_clamp(&scene.medium);
    let window = cfg.n_samples as f64 * cfg.dt;
    // Samples beyond this many seconds from the arrival are below 1e-12.
    let half_support = 2.0 / cfg.frequency;

    let mut visible = vec![false; scene.targets.len()];
    let mut rows = Vec::with_capacity(trajectory.len());
    for pose in trajectory.poses() {
        let antenna = antenna_world_position(pose, cfg.antenna_offset);
        let mut samples = vec![0.0; cfg.n_samples];
        for (ti, target) in scene.targets.iter().enumerate() {
            let r = distance(antenna, target.position);
            let arrival = 2.0 * r / v;
            if arrival < window {
                visible[ti] = true;
            }
            let amp = target.reflectivity / r.max(r_min);
            let lo = ((arrival - half_support) / cfg.dt).floor().max(0.0) as usize;
            let hi = (((arrival + half_support) / cfg.dt).ceil() as usize).min(cfg.n_samples);
            for (k, s) in samples.iter_mut().enumerate().take(hi).skip(lo) {
                *s += amp * ricker_wavelet(k as f64 * cfg.dt - arrival, cfg.frequency);
            }
        }
        rows.push(samples);
    }
    for (i, seen) in visible.iter().enumerate() {
        if !seen {
            warn!("target {i} arrives after the {window:e} s recording window at every pose");
        }
    }
    BScan::from_rows(rows, cfg.dt, trajectory.poses())
}

/// Adds white Gaussian noise at `snr_db` relative to the mean signal power
/// (mean of squared samples over the whole B-scan).
pub fn add_noise(bscan: &BScan, snr_db: f64, seed: u64) -> Result<BScan> {
    ensure_finite("snr_db", snr_db)?;
    let n = (bscan.n_traces() * bscan.n_samples()) as f64;
    let power = bscan.energy() / n;
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid("noise", e.to_string()))?;
    Ok(bscan.map_traces(|_, s| s.iter().map(|v| v + normal.sample(&mut rng)).collect()))
}

/// Labels the visible hyperbola of every target with a bounding box.
///
/// A trace belongs to a target's footprint when the target's peak amplitude
/// `reflectivity / max(r, r_min)` there reaches `amplitude_fraction` of the
/// strongest peak of any target in the scan and the pulse arrives inside the
/// window. The box spans those traces ±1 and their arrival times ± one
/// wavelet width, clipped to the scan, in (trace, sample) coordinates.
pub fn ground_truth_boxes(
    scene: &Scene,
    trajectory: &Trajectory,
    cfg: &SynthConfig,
    amplitude_fraction: f64,
) -> Result<Vec<Option<BoundingBox>>> {
    cfg.validate()?;
    let v = scene.medium.velocity();
    let r_min = cfg.range_clamp(&scene.medium);
    let window = cfg.n_samples as f64 * cfg.dt;
    let per_target: Vec<Vec<(f64, f64)>> = scene
        .targets
        .iter()
        .map(|t| {
            trajectory
                .poses()
                .iter()
                .map(|p| {
                    let r = distance(antenna_world_position(p, cfg.antenna_offset), t.position);
                    (t.reflectivity.abs() / r.max(r_min), 2.0 * r / v)
                })
                .collect()
        })
        .collect();
    let global = per_target
        .iter()
        .flatten()
        .filter(|(_, t)| *t < window)
        .fold(0.0f64, |m, (a, _)| m.max(*a));
    let pad = wavelet_width(cfg.frequency) / cfg.dt;
    let n_tr = trajectory.len() as f64;
    let n_s = cfg.n_samples as f64;
    Ok(per_target
        .iter()
        .map(|peaks| {
            let hits: Vec<(usize, f64)> = peaks
                .iter()
                .enumerate()
                .filter(|(_, (a, t))| *t < window && *a >= amplitude_fraction * global)
                .map(|(i, (_, t))| (i, t / cfg.dt))
                .collect();
            if hits.is_empty() {
                return None;
            }
            let x0 = hits.iter().map(|h| h.0).min().unwrap() as f64;
            let x1 = hits.iter().map(|h| h.0).max().unwrap() as f64;
            let y0 = hits.iter().map(|h| h.1).fold(f64::INFINITY, f64::min);
            let y1 = hits.iter().map(|h| h.1).fold(f64::NEG_INFINITY, f64::max);
            BoundingBox::new(
                (x0 - 1.0).max(0.0),
                (y0 - pad).max(0.0),
                (x1 + 1.0).min(n_tr - 1.0),
                (y1 + pad).min(n_s - 1.0),
                1.0,
            )
            .ok()
        })
        .collect())
}
