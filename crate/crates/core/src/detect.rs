//! Hyperbola detection in B-scans.
//!
//! The detector emits the same region-of-interest contract a learned
//! detector would: axis-aligned boxes in (trace, sample) coordinates with a
//! confidence score. Each box comes from a least-squares fit of the
//! point-scatterer moveout `t(x)² = t0² + (2 (x - x0) Δx / v)²`.
//!
//! Pipeline: [`remove_background`] → [`envelope`] → [`detect_hyperbolas`].

use std::collections::{BTreeMap, HashSet};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::forward::{wavelet_width, BScan, DEFAULT_FREQUENCY};
use crate::medium::SPEED_OF_LIGHT;

/// Region of interest in (trace index, sample index) coordinates.
///
/// A sample `(i, k)` lies inside when `x_min <= i <= x_max` and
/// `y_min <= k <= y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub score: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64, score: f64) -> Result<Self> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
            score,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("x_min", self.x_min),
            ("y_min", self.y_min),
            ("x_max", self.x_max),
            ("y_max", self.y_max),
            ("score", self.score),
        ] {
            ensure_finite(what, v)?;
        }
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return Err(Error::invalid(
                "bounding box",
                format!(
                    "({}, {}, {}, {}) is empty",
                    self.x_min, self.y_min, self.x_max, self.y_max
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::OutOfRange {
                what: "box score".into(),
                value: self.score,
                min: 0.0,
                max: 1.0,
            });
        }
        Ok(())
    }

    /// Checks the box against a scan of `n_traces × n_samples`.
    pub fn check_bounds(&self, n_traces: usize, n_samples: usize) -> Result<()> {
        self.validate()?;
        if self.x_min < 0.0
            || self.y_min < 0.0
            || self.x_max > n_traces as f64
            || self.y_max > n_samples as f64
        {
            return Err(Error::invalid(
                "bounding box",
                format!(
                    "({}, {}, {}, {}) exceeds the {n_traces} x {n_samples} scan",
                    self.x_min, self.y_min, self.x_max, self.y_max
                ),
            ));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn contains(&self, trace: f64, sample: f64) -> bool {
        trace >= self.x_min && trace <= self.x_max && sample >= self.y_min && sample <= self.y_max
    }
}

/// Fitted point-scatterer moveout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperbolaFit {
    /// Fractional trace index of the apex.
    pub apex_trace: f64,
    /// Two-way time at the apex, s.
    pub apex_time: f64,
    /// Propagation velocity implied by the curvature, m/s.
    pub velocity_estimate: f64,
    /// RMS misfit of the picked arrival times, s.
    pub residual: f64,
}

impl HyperbolaFit {
    pub fn validate(&self) -> Result<()> {
        if !(self.apex_time > 0.0 && self.apex_time.is_finite()) {
            return Err(Error::invalid(
                "hyperbola fit",
                "apex time must be positive",
            ));
        }
        if !(self.velocity_estimate > 0.0 && self.velocity_estimate <= SPEED_OF_LIGHT) {
            return Err(Error::invalid(
                "hyperbola fit",
                format!("velocity {} m/s outside (0, C]", self.velocity_estimate),
            ));
        }
        if !(self.residual >= 0.0) {
            return Err(Error::invalid("hyperbola fit", "residual must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub fit: HyperbolaFit,
}

/// Subtracts the mean trace (per-sample mean across traces) from every trace.
pub fn remove_background(b: &BScan) -> Result<BScan> {
    if b.n_traces() < 2 {
        return Err(Error::invalid(
            "background removal",
            "needs at least two traces",
        ));
    }
    let mean = mean_trace(b);
    Ok(b.map_traces(|_, s| s.iter().zip(&mean).map(|(v, m)| v - m).collect()))
}

pub fn mean_trace(b: &BScan) -> Vec<f64> {
    let mut mean = vec![0.0; b.n_samples()];
    for t in b.traces() {
        for (m, v) in mean.iter_mut().zip(&t.samples) {
            *m += v;
        }
    }
    let n = b.n_traces() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Per-trace magnitude of the analytic signal (FFT Hilbert transform).
pub fn envelope(b: &BScan) -> BScan {
    let n = b.n_samples();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    // One-sided spectrum weights: keep DC (and Nyquist), double positive bins.
    let weights: Vec<f64> = (0..n)
        .map(|k| {
            if k == 0 || (n % 2 == 0 && k == n / 2) {
                1.0
            } else if k < n.div_ceil(2) {
                2.0
            } else {
                0.0
            }
        })
        .collect();
    b.map_traces(|_, s| {
        let mut buf: Vec<Complex<f64>> = s.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fwd.process(&mut buf);
        for (c, w) in buf.iter_mut().zip(&weights) {
            *c *= *w;
        }
        inv.process(&mut buf);
        buf.iter().map(|c| c.norm() / n as f64).collect()
    })
}

/// Zeroes samples outside (`keep_inside`) or inside (`!keep_inside`) the
/// union of `boxes`. The two outputs sum to the input exactly.
pub fn mask_bscan(b: &BScan, boxes: &[BoundingBox], keep_inside: bool) -> Result<BScan> {
    for bx in boxes {
        bx.check_bounds(b.n_traces(), b.n_samples())?;
    }
    Ok(b.map_traces(|i, s| {
        s.iter()
            .enumerate()
            .map(|(k, &v)| {
                let inside = boxes.iter().any(|bx| bx.contains(i as f64, k as f64));
                if inside == keep_inside {
                    v
                } else {
                    0.0
                }
            })
            .collect()
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    /// Peaks below this fraction of the global maximum are ignored.
    pub threshold_fraction: f64,
    /// Minimum number of traces supporting a hyperbola.
    pub min_support: usize,
    /// Source centre frequency; sets the pulse width used for tracking and padding.
    pub frequency: f64,
    /// Metres between traces; `None` uses the mean spacing of the poses.
    pub trace_spacing: Option<f64>,
    pub antenna_offset: [f64; 2],
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            threshold_fraction: 0.3,
            min_support: 5,
            frequency: DEFAULT_FREQUENCY,
            trace_spacing: None,
            antenna_offset: [0.0, 0.0],
        }
    }
}

impl DetectConfig {
    fn validate(&self) -> Result<()> {
        if !(self.threshold_fraction > 0.0 && self.threshold_fraction < 1.0) {
            return Err(Error::OutOfRange {
                what: "threshold fraction".into(),
                value: self.threshold_fraction,
                min: 0.0,
                max: 1.0,
            });
        }
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(Error::invalid("frequency", "must be positive"));
        }
        if let Some(s) = self.trace_spacing {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid("trace spacing", "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Peak {
    trace: usize,
    /// Sub-sample time index.
    time: f64,
    amp: f64,
}

/// Moveout in sample units: `t(x) = sqrt(t0² + s² (x - x0)²)`.
#[derive(Debug, Clone, Copy)]
struct Moveout {
    t0: f64,
    x0: f64,
    slope: f64,
}

impl Moveout {
    fn at(&self, x: f64) -> f64 {
        (self.t0 * self.t0 + (self.slope * (x - self.x0)).powi(2)).sqrt()
    }
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for c in col..3 {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for c in row + 1..3 {
            s -= a[row][c] * x[c];
        }
        x[row] = s / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn sse(m: &Moveout, pts: &[(f64, f64)]) -> f64 {
    pts.iter().map(|&(x, t)| (m.at(x) - t).powi(2)).sum()
}

/// Linear least squares on `t² = a + b x + c x²`, then Gauss–Newton on the
/// time-domain residuals.
fn fit_moveout(pts: &[(f64, f64)]) -> Option<Moveout> {
    let n = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let xs = pts
        .iter()
        .map(|p| (p.0 - xm).abs())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for &(x, t) in pts {
        let u = (x - xm) / xs;
        let row = [1.0, u, u * u];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            atb[i] += row[i] * t * t;
        }
    }
    let [a, b, c] = solve3(ata, atb)?;
    if c <= 0.0 {
        return None;
    }
    let u0 = -b / (2.0 * c);
    let t0_sq = a - c * u0 * u0;
    if t0_sq <= 0.0 {
        return None;
    }
    let mut m = Moveout {
        t0: t0_sq.sqrt(),
        x0: xm + u0 * xs,
        slope: c.sqrt() / xs,
    };

    let mut err = sse(&m, pts);
    for _ in 0..8 {
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for &(x, t) in pts {
            let h = m.at(x).max(1e-12);
            let dx = x - m.x0;
            let jac = [m.t0 / h, -m.slope * m.slope * dx / h, m.slope * dx * dx / h];
            let r = h - t;
            for i in 0..3 {
                for j in 0..3 {
                    jtj[i][j] += jac[i] * jac[j];
                }
                jtr[i] += jac[i] * r;
            }
        }
        let Some(delta) = solve3(jtj, jtr) else { break };
        let next = Moveout {
            t0: m.t0 - delta[0],
            x0: m.x0 - delta[1],
            slope: (m.slope - delta[2]).abs(),
        };
        let next_err = sse(&next, pts);
        if !(next.t0 > 0.0 && next_err < err) {
            break;
        }
        let converged = err - next_err <= 1e-12 * err.max(1e-30);
        m = next;
        err = next_err;
        if converged {
            break;
        }
    }
    Some(m)
}

fn pick_peaks(b: &BScan, threshold: f64, nms_radius: f64) -> Vec<Vec<Peak>> {
    b.traces()
        .iter()
        .enumerate()
        .map(|(i, tr)| {
            let s = &tr.samples;
            let n = s.len();
            let mut cands: Vec<Peak> = (0..n)
                .filter(|&k| {
                    s[k] >= threshold
                        && (k == 0 || s[k] >= s[k - 1])
                        && (k + 1 == n || s[k] > s[k + 1])
                })
                .map(|k| {
                    let delta = if k > 0 && k + 1 < n {
                        let den = s[k - 1] - 2.0 * s[k] + s[k + 1];
                        if den < 0.0 {
                            (0.5 * (s[k - 1] - s[k + 1]) / den).clamp(-0.5, 0.5)
                        } else {
                            0.0
                        }
                    } else {
                        0.0
                    };
                    Peak {
                        trace: i,
                        time: k as f64 + delta,
                        amp: s[k],
                    }
                })
                .collect();
            cands.sort_by(|a, b| b.amp.total_cmp(&a.amp));
            let mut kept: Vec<Peak> = Vec::new();
            for p in cands {
                if kept.iter().all(|q| (q.time - p.time).abs() > nms_radius) {
                    kept.push(p);
                }
            }
            kept.sort_by(|a, b| a.time.total_cmp(&b.time));
            kept
        })
        .collect()
}

type PeakId = (usize, usize);

struct Tracker<'a> {
    peaks: &'a [Vec<Peak>],
    tol: f64,
    max_gap: usize,
}

impl Tracker<'_> {
    fn peak(&self, id: PeakId) -> Peak {
        self.peaks[id.0][id.1]
    }

    /// Follows one flank of a hyperbola away from its apex. Arrival times may
    /// only grow with distance from the apex, which keeps the track on its own
    /// branch where two hyperbolas cross.
    fn follow(&self, apex: PeakId, dir: isize) -> Vec<PeakId> {
        let mut out = Vec::new();
        let mut prev = self.peak(apex);
        let mut slope = 0.0f64;
        let mut x = apex.0 as isize;
        let mut gap = 0;
        loop {
            x += dir;
            if x < 0 || x as usize >= self.peaks.len() {
                break;
            }
            let steps = (x - prev.trace as isize).unsigned_abs() as f64;
            let pred = prev.time + slope * steps;
            let best = self.peaks[x as usize]
                .iter()
                .enumerate()
                .filter(|(_, q)| (q.time - pred).abs() <= self.tol && q.time >= prev.time - 0.5)
                .min_by(|a, b| (a.1.time - pred).abs().total_cmp(&(b.1.time - pred).abs()));
            match best {
                Some((j, q)) => {
                    slope = ((q.time - prev.time) / steps).max(0.0);
                    prev = *q;
                    out.push((x as usize, j));
                    gap = 0;
                }
                None => {
                    gap += 1;
                    if gap > self.max_gap {
                        break;
                    }
                }
            }
        }
        out
    }

    /// Re-selects, outward from the fitted apex, the peak closest to the model.
    fn reselect(&self, m: &Moveout, apex: PeakId) -> Vec<PeakId> {
        let mut out = vec![apex];
        for dir in [-1isize, 1] {
            let mut x = apex.0 as isize;
            let mut gap = 0;
            loop {
                x += dir;
                if x < 0 || x as usize >= self.peaks.len() {
                    break;
                }
                let pred = m.at(x as f64);
                let best = self.peaks[x as usize]
                    .iter()
                    .enumerate()
                    .filter(|(_, q)| (q.time - pred).abs() <= self.tol)
                    .min_by(|a, b| (a.1.time - pred).abs().total_cmp(&(b.1.time - pred).abs()));
                match best {
                    Some((j, _)) => {
                        out.push((x as usize, j));
                        gap = 0;
                    }
                    None => {
                        gap += 1;
                        if gap > self.max_gap {
                            break;
                        }
                    }
                }
            }
        }
        out
    }

    fn points(&self, ids: &[PeakId]) -> Vec<(f64, f64)> {
        ids.iter()
            .map(|&id| {
                let p = self.peak(id);
                (p.trace as f64, p.time)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
struct Cluster {
    apex: PeakId,
    members: Vec<PeakId>,
    model: Moveout,
}

/// Finds hyperbolic events in a background-removed, enveloped B-scan.
///
/// 1. Peaks above `threshold_fraction · max` are picked per trace.
/// 2. Peaks that arrive no later than their linked neighbours seed apexes;
///    each seed is tracked outwards along both flanks to form a cluster.
/// 3. Clusters with at least `min_support` traces are fitted with the
///    moveout model (linear LS in `t²`, then Gauss–Newton).
/// 4. Clusters that share an apex and overlap with IoU > 0.5 are merged.
/// 5. Boxes span the cluster ±1 trace and ± one wavelet width in time;
///    `score = 1 / (1 + residual / t0)`. Output is sorted by score.
pub fn detect_hyperbolas(b: &BScan, cfg: &DetectConfig) -> Result<Vec<Detection>> {
    cfg.validate()?;
    let gmax = b.max_abs();
    if gmax == 0.0 {
        return Ok(Vec::new());
    }
    let dx = match cfg.trace_spacing {
        Some(s) => s,
        None => b.mean_trace_spacing(cfg.antenna_offset),
    };
    if !(dx > 0.0) {
        return Ok(Vec::new());
    }
    let dt = b.dt();
    let width = wavelet_width(cfg.frequency) / dt;
    let peaks = pick_peaks(b, cfg.threshold_fraction * gmax, 0.5 * width);
    let tracker = Tracker {
        peaks: &peaks,
        tol: (0.5 * width).max(2.0),
        max_gap: 3,
    };

    // Apex seeds: no linked neighbour arrives earlier.
    let mut seeds: Vec<PeakId> = Vec::new();
    for (x, row) in peaks.iter().enumerate() {
        for (j, p) in row.iter().enumerate() {
            let earlier = |nx: Option<usize>| {
                nx.and_then(|nx| peaks.get(nx)).is_some_and(|r| {
                    r.iter()
                        .any(|q| (q.time - p.time).abs() <= tracker.tol && q.time < p.time - 0.1)
                })
            };
            if !earlier(x.checked_sub(1)) && !earlier(Some(x + 1)) {
                seeds.push((x, j));
            }
        }
    }
    seeds.sort_by(|a, b| tracker.peak(*b).amp.total_cmp(&tracker.peak(*a).amp));

    let mut claimed: HashSet<PeakId> = HashSet::new();
    let mut clusters: Vec<Cluster> = Vec::new();
    for seed in seeds {
        if claimed.contains(&seed) {
            continue;
        }
        let mut members = vec![seed];
        members.extend(tracker.follow(seed, -1));
        members.extend(tracker.follow(seed, 1));
        let Some(model) = fit_moveout(&tracker.points(&members)) else {
            continue;
        };
        let members = tracker.reselect(&model, seed);
        if members.len() < cfg.min_support {
            continue;
        }
        let Some(model) = fit_moveout(&tracker.points(&members)) else {
            continue;
        };
        // A seed riding on the flank of an accepted event is not a new event.
        let shared = members.iter().filter(|m| claimed.contains(m)).count();
        if 2 * shared > members.len() {
            continue;
        }
        claimed.extend(members.iter().copied());
        clusters.push(Cluster {
            apex: seed,
            members,
            model,
        });
    }

    let n_tr = b.n_traces() as f64;
    let n_s = b.n_samples() as f64;
    let bbox_of = |c: &Cluster| -> BoundingBox {
        let xs = c.members.iter().map(|m| m.0 as f64);
        let ts = c.members.iter().map(|&m| tracker.peak(m).time);
        let x0 = xs.clone().fold(f64::INFINITY, f64::min);
        let x1 = xs.fold(f64::NEG_INFINITY, f64::max);
        let t0 = ts.clone().fold(f64::INFINITY, f64::min);
        let t1 = ts.fold(f64::NEG_INFINITY, f64::max);
        BoundingBox {
            x_min: (x0 - 1.0).max(0.0),
            y_min: (t0 - width).max(0.0),
            x_max: (x1 + 1.0).min(n_tr - 1.0),
            y_max: (t1 + width).min(n_s - 1.0),
            score: 1.0,
        }
    };

    // Merge duplicates seeded on the same event.
    loop {
        let mut merged = false;
        'outer: for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let (a, c) = (&clusters[i], &clusters[j]);
                let share_apex = a.members.contains(&c.apex) || c.members.contains(&a.apex);
                if share_apex && crate::eval::iou(&bbox_of(a), &bbox_of(c)) > 0.5 {
                    let mut by_trace: BTreeMap<usize, PeakId> = BTreeMap::new();
                    for &m in c.members.iter().chain(&a.members) {
                        by_trace.insert(m.0, m);
                    }
                    let members: Vec<PeakId> = by_trace.into_values().collect();
                    if let Some(model) = fit_moveout(&tracker.points(&members)) {
                        let apex = a.apex;
                        clusters[i] = Cluster {
                            apex,
                            members,
                            model,
                        };
                    }
                    clusters.remove(j);
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            break;
        }
    }

    let mut out: Vec<Detection> = clusters
        .iter()
        .filter_map(|c| {
            let pts = tracker.points(&c.members);
            let rms = (sse(&c.model, &pts) / pts.len() as f64).sqrt();
            let apex_time = c.model.t0 * dt;
            let velocity = (2.0 * dx / (c.model.slope * dt)).min(SPEED_OF_LIGHT);
            let fit = HyperbolaFit {
                apex_trace: c.model.x0,
                apex_time,
                velocity_estimate: velocity,
                residual: rms * dt,
            };
            fit.validate().ok()?;
            let mut bbox = bbox_of(c);
            bbox.score = 1.0 / (1.0 + fit.residual / fit.apex_time);
            bbox.validate().ok()?;
            Some(Detection { bbox, fit })
        })
        .collect();
    out.sort_by(|a, b| b.bbox.score.total_cmp(&a.bbox.score));
    Ok(out)
}

/// Background removal, envelope and detection in one call.
pub fn detect_pipeline(b: &BScan, cfg: &DetectConfig) -> Result<Vec<Detection>> {
    let clean = remove_background(b)?;
    detect_hyperbolas(&envelope(&clean), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{synth_hyperbola_bscan, PointTarget, Scene, SynthConfig};
    use crate::medium::{depth_to_twtt, MediumModel};
    use crate::pose::{synth_trajectory, Pose, SurveySpec, Trajectory, TrajectoryPattern};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn line(length: f64, step: f64) -> Trajectory {
        synth_trajectory(&SurveySpec::new(
            TrajectoryPattern::StraightLines,
            [length, 0.0],
            1.0,
            step,
        ))
        .unwrap()
    }

    fn scan_of(targets: &[[f64; 3]], dielectric: f64, traj: &Trajectory) -> BScan {
        let scene = Scene::new(
            targets
                .iter()
                .map(|&position| PointTarget {
                    position,
                    reflectivity: 1.0,
                })
                .collect(),
            MediumModel::new(dielectric).unwrap(),
        )
        .unwrap();
        synth_hyperbola_bscan(&scene, traj, &SynthConfig::default()).unwrap()
    }

    fn rows(rows: Vec<Vec<f64>>) -> BScan {
        let poses: Vec<Pose> = (0..rows.len())
            .map(|i| Pose::new([i as f64 * 0.1, 0.0, 0.0], 0.0, i as f64).unwrap())
            .collect();
        BScan::from_rows(rows, 1e-10, &poses).unwrap()
    }

    #[test]
    fn identical_traces_fully_removed() {
        let b = rows(vec![vec![1.0, -2.0, 3.5]; 4]);
        let out = remove_background(&b).unwrap();
        assert_eq!(out.max_abs(), 0.0);
        assert!(remove_background(&rows(vec![vec![1.0, 2.0]])).is_err());
    }

    #[test]
    fn background_plus_mean_reconstructs_input() {
        let b = rows(vec![
            vec![1.0, 2.0, 3.0],
            vec![0.5, -1.0, 7.0],
            vec![0.0, 0.25, 1.0],
        ]);
        let out = remove_background(&b).unwrap();
        let mean = mean_trace(&b);
        for (o, i) in out.traces().iter().zip(b.traces()) {
            for k in 0..3 {
                assert_eq!(o.samples[k] + mean[k], i.samples[k]);
            }
        }
        for m in mean_trace(&out) {
            assert!(m.abs() <= 1e-9);
        }
    }

    #[test]
    fn background_removal_suppresses_flat_layer() {
        let traj = line(3.0, 0.02);
        let hyper = scan_of(&[[1.5, 0.0, 0.6]], 9.0, &traj);
        let layer_time = 12e-9;
        let layer = hyper.map_traces(|_, s| {
            (0..s.len())
                .map(|k| 0.5 * crate::forward::ricker_wavelet(k as f64 * 1e-10 - layer_time, 1.5e9))
                .collect()
        });
        let mixed = hyper.add(&layer).unwrap();
        let clean = remove_background(&mixed).unwrap();
        // Layer energy: samples near the layer time, away from the hyperbola.
        let window = |b: &BScan| -> f64 {
            b.traces()
                .iter()
                .map(|t| t.samples[110..130].iter().map(|v| v * v).sum::<f64>())
                .sum()
        };
        let hyper_layer_part = window(&remove_background(&hyper).unwrap());
        let before = window(&layer);
        let after = (window(&clean) - hyper_layer_part).abs().max(1e-300);
        assert!(10.0 * (before / after).log10() >= 20.0);
        let apex_before = hyper.traces()[75]
            .samples
            .iter()
            .cloned()
            .fold(0.0, f64::max);
        let apex_after = clean.traces()[75]
            .samples
            .iter()
            .cloned()
            .fold(0.0, f64::max);
        assert!(20.0 * (apex_before / apex_after).log10().abs() <= 3.0);
    }

    #[test]
    fn envelope_examples() {
        let zero = rows(vec![vec![0.0; 64]; 2]);
        assert_eq!(envelope(&zero).max_abs(), 0.0);

        // 8 whole cycles over 256 samples; amplitude 2.5.
        let n = 256;
        let cosine: Vec<f64> = (0..n)
            .map(|k| 2.5 * (2.0 * std::f64::consts::PI * 8.0 * k as f64 / n as f64 + 0.3).cos())
            .collect();
        let env = envelope(&rows(vec![cosine.clone(), cosine.clone()]));
        for v in &env.traces()[0].samples[n / 8..7 * n / 8] {
            assert!((v - 2.5).abs() <= 0.02 * 2.5);
        }
        // A cosine that does not close on the window: interior still within 2%.
        let m = 300;
        let open: Vec<f64> = (0..m).map(|k| 1.7 * (0.37 * k as f64).cos()).collect();
        let env = envelope(&rows(vec![open.clone(), open]));
        for v in &env.traces()[0].samples[m / 4..3 * m / 4] {
            assert!((v - 1.7).abs() <= 0.02 * 1.7, "{v}");
        }
    }

    #[test]
    fn empty_scan_has_no_detections() {
        let b = rows(vec![vec![0.0; 64]; 10]);
        assert!(detect_hyperbolas(&b, &DetectConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn single_target_fit() {
        let traj = line(3.0, 0.02);
        let b = scan_of(&[[1.5, 0.0, 0.9]], 9.0, &traj);
        let dets = detect_pipeline(&b, &DetectConfig::default()).unwrap();
        assert_eq!(dets.len(), 1, "{dets:?}");
        let fit = dets[0].fit;
        let twtt = depth_to_twtt(0.9, &MediumModel::new(9.0).unwrap())
            .unwrap()
            .seconds();
        assert!((fit.apex_time - twtt).abs() <= 2.0 * 1e-10, "{fit:?}");
        let v = SPEED_OF_LIGHT / 3.0;
        assert!((fit.velocity_estimate - v).abs() <= 0.05 * v, "{fit:?}");
        assert_abs_diff_eq!(fit.apex_trace, 75.0, epsilon = 0.5);
    }

    #[test]
    fn two_targets_resolved() {
        let traj = line(3.0, 0.02);
        let b = scan_of(&[[1.0, 0.0, 0.9], [2.0, 0.0, 0.9]], 9.0, &traj);
        let dets = detect_pipeline(&b, &DetectConfig::default()).unwrap();
        assert_eq!(dets.len(), 2, "{dets:?}");
        let mut apexes: Vec<f64> = dets.iter().map(|d| d.fit.apex_trace).collect();
        apexes.sort_by(f64::total_cmp);
        assert!((apexes[0] - 50.0).abs() <= 1.0, "{apexes:?}");
        assert!((apexes[1] - 100.0).abs() <= 1.0, "{apexes:?}");
    }

    #[test]
    fn mask_examples() {
        let b = rows(vec![vec![1.0, 2.0, 3.0, 4.0]; 3]);
        assert_eq!(mask_bscan(&b, &[], true).unwrap().max_abs(), 0.0);
        let full = BoundingBox::new(0.0, 0.0, 2.0, 3.0, 1.0).unwrap();
        assert_eq!(mask_bscan(&b, &[full], true).unwrap(), b);
        let outside = BoundingBox::new(0.0, 0.0, 5.0, 3.0, 1.0).unwrap();
        assert!(mask_bscan(&b, &[outside], true).is_err());
    }

    #[test]
    fn box_invariants() {
        assert!(BoundingBox::new(1.0, 0.0, 1.0, 2.0, 0.5).is_err());
        assert!(BoundingBox::new(0.0, 3.0, 1.0, 2.0, 0.5).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 1.0, 2.0, 1.5).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 1.0, f64::NAN, 0.5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn mask_partition_is_exact(
            data in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 16), 2..6),
            raw in prop::collection::vec((0.0f64..5.0, 0.0f64..15.0, 0.1f64..3.0, 0.1f64..8.0), 0..4),
        ) {
            let b = rows(data);
            let boxes: Vec<BoundingBox> = raw
                .iter()
                .map(|&(x, y, w, h)| BoundingBox::new(
                    x.min(b.n_traces() as f64 - 0.2),
                    y,
                    (x + w).min(b.n_traces() as f64),
                    (y + h).min(16.0),
                    0.5,
                ))
                .filter_map(|r| r.ok())
                .collect();
            let inside = mask_bscan(&b, &boxes, true).unwrap();
            let outside = mask_bscan(&b, &boxes, false).unwrap();
            let sum = inside.add(&outside).unwrap();
            for (s, o) in sum.traces().iter().zip(b.traces()) {
                for (u, v) in s.samples.iter().zip(&o.samples) {
                    prop_assert_eq!(u.to_bits(), v.to_bits());
                }
            }
        }

        #[test]
        fn envelope_bounds_magnitude(data in prop::collection::vec(-10.0f64..10.0, 8..80)) {
            let b = rows(vec![data.clone(), data]);
            let env = envelope(&b);
            let eps = 1e-6 * b.max_abs();
            for (e, s) in env.traces()[0].samples.iter().zip(&b.traces()[0].samples) {
                prop_assert!(*e >= 0.0);
                prop_assert!(*e >= s.abs() - eps - 1e-12);
            }
        }
    }

    #[test]
    fn detection_is_translation_covariant() {
        let traj = line(4.0, 0.02);
        let base = scan_of(&[[1.6, 0.0, 0.5]], 4.0, &traj);
        let a0 = detect_pipeline(&base, &DetectConfig::default()).unwrap()[0]
            .fit
            .apex_trace;
        for k in [3usize, 10, 27] {
            let shifted = scan_of(&[[1.6 + k as f64 * 0.02, 0.0, 0.5]], 4.0, &traj);
            let a = detect_pipeline(&shifted, &DetectConfig::default()).unwrap()[0]
                .fit
                .apex_trace;
            assert!((a - a0 - k as f64).abs() <= 0.5, "k {k}: {a0} -> {a}");
        }
    }
}
