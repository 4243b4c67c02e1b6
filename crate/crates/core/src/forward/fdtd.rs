//! 2D TM-mode FDTD solver on a Yee grid with split-field PML.
//!
//! Field layout on an `nx × nz` grid of `E_y` nodes:
//!
//! * `E_y(i, k)` at `(i·dx, k·dz)`, split as `E_yx + E_yz` everywhere.
//! * `H_x(i, k)` at `(i·dx, (k+½)·dz)`, `nx × (nz-1)` values.
//! * `H_z(i, k)` at `((i+½)·dx, k·dz)`, `(nx-1) × nz` values.
//!
//! Update equations (lossy form, semi-implicit in the loss terms):
//!
//! ```text
//! μ0 ∂H_x/∂t + σ*_z H_x =  ∂E_y/∂z
//! μ0 ∂H_z/∂t + σ*_x H_z = -∂E_y/∂x
//! ε  ∂E_yx/∂t + (σ + σ_x) E_yx = -∂H_z/∂x
//! ε  ∂E_yz/∂t + (σ + σ_z) E_yz =  ∂H_x/∂z
//! ```
//!
//! The PML grading uses a rate profile `s(d)` so that `σ_x = ε0 εr s` and
//! `σ*_x = μ0 s`, which keeps the layer impedance-matched for any
//! permittivity. The outermost `E_y` nodes are held at zero (PEC backing).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ricker_wavelet, wavelet_width, AScan, BScan, MaterialMap, DEFAULT_FREQUENCY};
use crate::error::{ensure_finite, Error, Result};
use crate::medium::SPEED_OF_LIGHT;
use crate::pose::{antenna_world_position, Trajectory};

pub const EPS0: f64 = 8.854_187_812_8e-12;
pub const MU0: f64 = 1.256_637_062_12e-6;

/// Default PML thickness in cells.
pub const DEFAULT_PML_THICKNESS: usize = 10;

const PML_ORDER: f64 = 3.0;
const PML_REFLECTION: f64 = 1e-6;

/// Ricker point source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RickerSource {
    pub frequency: f64,
    pub amplitude: f64,
    /// Injection cell `(i, k)`. Trajectory runs replace `i` with the pose column.
    pub cell: [usize; 2],
    /// Time of the pulse peak; `None` means one wavelet width.
    pub delay: Option<f64>,
}

impl RickerSource {
    pub fn delay(&self) -> f64 {
        self.delay.unwrap_or_else(|| wavelet_width(self.frequency))
    }

    /// Source current at time `t`; zero after twice the delay.
    pub fn value_at(&self, t: f64) -> f64 {
        if t > 2.0 * self.delay() {
            0.0
        } else {
            self.amplitude * ricker_wavelet(t - self.delay(), self.frequency)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdtdConfig {
    pub dx: f64,
    pub dz: f64,
    pub dt: f64,
    pub steps: usize,
    pub source: RickerSource,
    pub pml_thickness: usize,
}

impl FdtdConfig {
    /// Config at 90% of the Courant limit of `map`, source at the top of the
    /// non-PML region.
    pub fn for_map(map: &MaterialMap, steps: usize) -> Self {
        let pml = DEFAULT_PML_THICKNESS;
        let mut cfg = Self {
            dx: map.dx,
            dz: map.dz,
            dt: 0.0,
            steps,
            source: RickerSource {
                frequency: DEFAULT_FREQUENCY,
                amplitude: 1.0,
                cell: [map.nx / 2, pml + 1],
                delay: None,
            },
            pml_thickness: pml,
        };
        cfg.dt = 0.9 * courant_limit(map, cfg.dx, cfg.dz);
        cfg
    }

    fn validate(&self, map: &MaterialMap) -> Result<()> {
        map.validate()?;
        for (what, v) in [("dx", self.dx), ("dz", self.dz), ("dt", self.dt)] {
            ensure_finite(what, v)?;
            if v <= 0.0 {
                return Err(Error::invalid(what, "must be positive"));
            }
        }
        if (self.dx - map.dx).abs() > 1e-12 * map.dx || (self.dz - map.dz).abs() > 1e-12 * map.dz {
            return Err(Error::invalid(
                "FDTD config",
                "cell size differs from the material map",
            ));
        }
        if !(self.source.frequency > 0.0 && self.source.frequency.is_finite()) {
            return Err(Error::invalid("source frequency", "must be positive"));
        }
        ensure_finite("source amplitude", self.source.amplitude)?;
        let limit = courant_limit(map, self.dx, self.dz);
        if self.dt > limit {
            return Err(Error::Courant { dt: self.dt, limit });
        }
        if 2 * self.pml_thickness + 3 > map.nx.min(map.nz) {
            return Err(Error::invalid(
                "FDTD config",
                format!(
                    "PML of {} cells leaves no interior in a {}x{} grid",
                    self.pml_thickness, map.nx, map.nz
                ),
            ));
        }
        Ok(())
    }

    fn check_cell(&self, map: &MaterialMap, cell: [usize; 2]) -> Result<()> {
        let p = self.pml_thickness;
        let inside = |c: usize, n: usize| c > p && c + p + 1 < n;
        if !inside(cell[0], map.nx) || !inside(cell[1], map.nz) {
            return Err(Error::invalid(
                "source cell",
                format!(
                    "({}, {}) is outside the non-PML interior of the {}x{} grid",
                    cell[0], cell[1], map.nx, map.nz
                ),
            ));
        }
        Ok(())
    }
}

/// Largest stable time step `1 / (c_max · sqrt(1/dx² + 1/dz²))`.
pub fn courant_limit(map: &MaterialMap, dx: f64, dz: f64) -> f64 {
    let eps_min = map
        .permittivity
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let c_max = SPEED_OF_LIGHT / eps_min.max(1.0).sqrt();
    1.0 / (c_max * (1.0 / (dx * dx) + 1.0 / (dz * dz)).sqrt())
}

/// One additive `E_y` injection for a single time step.
#[derive(Debug, Clone, Copy)]
pub struct Injection {
    pub cell: [usize; 2],
    pub value: f64,
}

/// Time-stepping state of a single simulation.
pub struct FdtdSolver {
    nx: usize,
    nz: usize,
    dx: f64,
    dz: f64,
    dt: f64,
    eyx: Vec<f64>,
    eyz: Vec<f64>,
    hx: Vec<f64>,
    hz: Vec<f64>,
    ca_x: Vec<f64>,
    cb_x: Vec<f64>,
    ca_z: Vec<f64>,
    cb_z: Vec<f64>,
    da_hx: Vec<f64>,
    db_hx: Vec<f64>,
    da_hz: Vec<f64>,
    db_hz: Vec<f64>,
    eps: Vec<f64>,
    step: usize,
}

// Graded PML rate at fractional grid coordinate `pos` along an axis of `n` nodes.
fn pml_rate(pos: f64, n: usize, thickness: usize, s_max: f64) -> f64 {
    if thickness == 0 {
        return 0.0;
    }
    let t = thickness as f64;
    let last = (n - 1) as f64;
    let depth = if pos < t {
        t - pos
    } else if pos > last - t {
        pos - (last - t)
    } else {
        return 0.0;
    };
    s_max * (depth / t).powf(PML_ORDER)
}

fn loss_coeffs(rate_dt_half: f64, scale: f64) -> (f64, f64) {
    let denom = 1.0 + rate_dt_half;
    ((1.0 - rate_dt_half) / denom, scale / denom)
}

impl FdtdSolver {
    pub fn new(map: &MaterialMap, dt: f64, pml_thickness: usize) -> Result<Self> {
        map.validate()?;
        let limit = courant_limit(map, map.dx, map.dz);
        if dt > limit {
            return Err(Error::Courant { dt, limit });
        }
        let (nx, nz, dx, dz) = (map.nx, map.nz, map.dx, map.dz);
        let eps_min = map
            .permittivity
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let c_max = SPEED_OF_LIGHT / eps_min.sqrt();
        let s_max = |h: f64| {
            (PML_ORDER + 1.0) * c_max * (1.0 / PML_REFLECTION).ln()
                / (2.0 * pml_thickness.max(1) as f64 * h)
        };
        let (sx_max, sz_max) = (s_max(dx), s_max(dz));

        let n_e = nx * nz;
        let mut ca_x = vec![0.0; n_e];
        let mut cb_x = vec![0.0; n_e];
        let mut ca_z = vec![0.0; n_e];
        let mut cb_z = vec![0.0; n_e];
        let mut eps = vec![0.0; n_e];
        for k in 0..nz {
            for i in 0..nx {
                let idx = k * nx + i;
                let e = EPS0 * map.eps(i, k);
                eps[idx] = e;
                let sigma = map.sigma(i, k);
                let sx = pml_rate(i as f64, nx, pml_thickness, sx_max) * e;
                let sz = pml_rate(k as f64, nz, pml_thickness, sz_max) * e;
                (ca_x[idx], cb_x[idx]) = loss_coeffs((sigma + sx) * dt / (2.0 * e), dt / e);
                (ca_z[idx], cb_z[idx]) = loss_coeffs((sigma + sz) * dt / (2.0 * e), dt / e);
            }
        }
        let mut da_hx = vec![0.0; nx * (nz - 1)];
        let mut db_hx = vec![0.0; nx * (nz - 1)];
        for k in 0..nz - 1 {
            let s = pml_rate(k as f64 + 0.5, nz, pml_thickness, sz_max);
            let (a, b) = loss_coeffs(s * dt / 2.0, dt / MU0);
            for i in 0..nx {
                da_hx[k * nx + i] = a;
                db_hx[k * nx + i] = b;
            }
        }
        let mut da_hz = vec![0.0; (nx - 1) * nz];
        let mut db_hz = vec![0.0; (nx - 1) * nz];
        for i in 0..nx - 1 {
            let s = pml_rate(i as f64 + 0.5, nx, pml_thickness, sx_max);
            let (a, b) = loss_coeffs(s * dt / 2.0, dt / MU0);
            for k in 0..nz {
                da_hz[k * (nx - 1) + i] = a;
                db_hz[k * (nx - 1) + i] = b;
            }
        }
        Ok(Self {
            nx,
            nz,
            dx,
            dz,
            dt,
            eyx: vec![0.0; n_e],
            eyz: vec![0.0; n_e],
            hx: vec![0.0; nx * (nz - 1)],
            hz: vec![0.0; (nx - 1) * nz],
            ca_x,
            cb_x,
            ca_z,
            cb_z,
            da_hx,
            db_hx,
            da_hz,
            db_hz,
            eps,
            step: 0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Current time `n·dt` of the electric field.
    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn ey(&self, i: usize, k: usize) -> f64 {
        let idx = k * self.nx + i;
        self.eyx[idx] + self.eyz[idx]
    }

    /// Advances `E_y` from step `n` to `n+1`, injecting `sources` into the new
    /// field. Returns the discrete energy at step `n`:
    ///
    /// `Σ ε E_yⁿ² + μ0 (H^{n-½} · H^{n+½})`, times the cell area.
    ///
    /// For a lossless interior with PEC walls this quantity is exactly
    /// conserved by the leapfrog scheme; loss and PML can only decrease it.
    pub fn step(&mut self, sources: &[Injection]) -> f64 {
        let (nx, nz) = (self.nx, self.nz);
        let (idx_, idz) = (1.0 / self.dx, 1.0 / self.dz);

        let mut h_energy = 0.0;
        for k in 0..nz - 1 {
            for i in 0..nx {
                let h = k * nx + i;
                let curl = (self.ey(i, k + 1) - self.ey(i, k)) * idz;
                let old = self.hx[h];
                let new = self.da_hx[h] * old + self.db_hx[h] * curl;
                self.hx[h] = new;
                h_energy += old * new;
            }
        }
        for k in 0..nz {
            for i in 0..nx - 1 {
                let h = k * (nx - 1) + i;
                let curl = (self.ey(i + 1, k) - self.ey(i, k)) * idx_;
                let old = self.hz[h];
                let new = self.da_hz[h] * old - self.db_hz[h] * curl;
                self.hz[h] = new;
                h_energy += old * new;
            }
        }
        let e_energy: f64 = (0..nx * nz)
            .map(|idx| {
                let e = self.eyx[idx] + self.eyz[idx];
                self.eps[idx] * e * e
            })
            .sum();

        for k in 1..nz - 1 {
            for i in 1..nx - 1 {
                let idx = k * nx + i;
                let dhz = (self.hz[k * (nx - 1) + i] - self.hz[k * (nx - 1) + i - 1]) * idx_;
                let dhx = (self.hx[k * nx + i] - self.hx[(k - 1) * nx + i]) * idz;
                self.eyx[idx] = self.ca_x[idx] * self.eyx[idx] - self.cb_x[idx] * dhz;
                self.eyz[idx] = self.ca_z[idx] * self.eyz[idx] + self.cb_z[idx] * dhx;
            }
        }
        for s in sources {
            let idx = s.cell[1] * nx + s.cell[0];
            self.eyx[idx] += 0.5 * s.value;
            self.eyz[idx] += 0.5 * s.value;
        }
        self.step += 1;
        (e_energy + MU0 * h_energy) * self.dx * self.dz
    }
}

/// Runs one monostatic FDTD shot per pose and assembles the recordings.
///
/// The source and receiver share the cell in column `round(x / dx)` of the
/// pose's antenna position and row `config.source.cell[1]`. Traces are
/// aligned so that sample 0 coincides with the source pulse peak. Shots run
/// in parallel and are gathered in trajectory order.
pub fn fdtd_simulate(
    config: &FdtdConfig,
    map: &MaterialMap,
    trajectory: &Trajectory,
    antenna_offset: [f64; 2],
) -> Result<BScan> {
    config.validate(map)?;
    let cells = trajectory
        .poses()
        .iter()
        .map(|p| {
            let x = antenna_world_position(p, antenna_offset)[0];
            let col = (x / config.dx).round();
            if !(col >= 0.0 && col < map.nx as f64) {
                return Err(Error::invalid(
                    "source cell",
                    format!("antenna x = {x} m falls outside the grid"),
                ));
            }
            let cell = [col as usize, config.source.cell[1]];
            config.check_cell(map, cell)?;
            Ok(cell)
        })
        .collect::<Result<Vec<_>>>()?;

    let shift = (config.source.delay() / config.dt).round() as usize;
    let traces = crate::parallel::install(|| {
        cells
            .par_iter()
            .zip(trajectory.poses().par_iter())
            .map(|(&cell, &pose)| {
                let mut solver = FdtdSolver::new(map, config.dt, config.pml_thickness)?;
                let mut rec = Vec::with_capacity(config.steps + shift);
                for _ in 0..config.steps + shift {
                    rec.push(solver.ey(cell[0], cell[1]));
                    let t = solver.time() + 0.5 * config.dt;
                    let value = config.source.value_at(t);
                    solver.step(&[Injection { cell, value }]);
                }
                Ok(AScan {
                    samples: rec[shift..].to_vec(),
                    dt: config.dt,
                    pose,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    BScan::new(traces)
}
