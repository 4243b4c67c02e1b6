//! Antenna poses and survey trajectories.
//!
//! A pose is reduced to a world-frame position plus a heading about the
//! vertical axis. The heading rotates the antenna lever arm from the cart
//! frame into the world frame with the usual planar rotation
//! `[cos θ, -sin θ; sin θ, cos θ]`.

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Wrap an angle into `[-π, π)`.
pub fn normalize_heading(theta: f64) -> f64 {
    let wrapped = theta - TAU * ((theta + PI) / TAU).floor();
    // floor() can land exactly on the open end after rounding.
    if wrapped >= PI {
        wrapped - TAU
    } else if wrapped < -PI {
        wrapped + TAU
    } else {
        wrapped
    }
}

/// Antenna pose at one trigger: world position (z positive downwards),
/// heading about world z, and acquisition time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 3],
    pub heading: f64,
    pub timestamp: f64,
}

impl Pose {
    /// Builds a validated pose; the heading is wrapped into `[-π, π)`.
    pub fn new(position: [f64; 3], heading: f64, timestamp: f64) -> Result<Self> {
        for (axis, v) in ["x", "y", "z"].iter().zip(position) {
            ensure_finite(&format!("pose {axis}"), v)?;
        }
        ensure_finite("pose heading", heading)?;
        ensure_finite("pose timestamp", timestamp)?;
        Ok(Self {
            position,
            heading: normalize_heading(heading),
            timestamp,
        })
    }
}

/// Rotate a planar point by `theta` radians (counter-clockwise).
pub fn rotate_antenna(point: [f64; 2], theta: f64) -> Result<[f64; 2]> {
    ensure_finite("point x", point[0])?;
    ensure_finite("point y", point[1])?;
    ensure_finite("rotation angle", theta)?;
    let (s, c) = theta.sin_cos();
    Ok([c * point[0] - s * point[1], s * point[0] + c * point[1]])
}

/// World position of an antenna mounted at `offset` in the cart frame.
pub fn antenna_world_position(pose: &Pose, offset: [f64; 2]) -> [f64; 3] {
    let (s, c) = pose.heading.sin_cos();
    [
        pose.position[0] + c * offset[0] - s * offset[1],
        pose.position[1] + s * offset[0] + c * offset[1],
        pose.position[2],
    ]
}

/// Ordered sequence of at least two poses with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Pose>", into = "Vec<Pose>")]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl TryFrom<Vec<Pose>> for Trajectory {
    type Error = Error;

    fn try_from(poses: Vec<Pose>) -> Result<Self> {
        Trajectory::new(poses)
    }
}

impl From<Trajectory> for Vec<Pose> {
    fn from(t: Trajectory) -> Self {
        t.poses
    }
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        if poses.len() < 2 {
            return Err(Error::invalid(
                "trajectory",
                format!("needs at least 2 poses, got {}", poses.len()),
            ));
        }
        for (i, w) in poses.windows(2).enumerate() {
            if w[1].timestamp <= w[0].timestamp {
                return Err(Error::invalid(
                    "trajectory",
                    format!(
                        "timestamps must be strictly increasing (pose {} at {} s follows {} s)",
                        i + 1,
                        w[1].timestamp,
                        w[0].timestamp
                    ),
                ));
            }
        }
        let poses = poses
            .into_iter()
            .map(|p| Pose::new(p.position, p.heading, p.timestamp))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Rigidly rotates the whole survey by `theta` about the vertical axis
    /// through `pivot`, turning every heading by the same angle.
    pub fn rotated_about(&self, pivot: [f64; 2], theta: f64) -> Result<Self> {
        let poses = self
            .poses
            .iter()
            .map(|p| {
                let rel = [p.position[0] - pivot[0], p.position[1] - pivot[1]];
                let r = rotate_antenna(rel, theta)?;
                Pose::new(
                    [pivot[0] + r[0], pivot[1] + r[1], p.position[2]],
                    p.heading + theta,
                    p.timestamp,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(poses)
    }

    /// Rigid translation of every pose.
    pub fn translated(&self, by: [f64; 3]) -> Self {
        let poses = self
            .poses
            .iter()
            .map(|p| Pose {
                position: [
                    p.position[0] + by[0],
                    p.position[1] + by[1],
                    p.position[2] + by[2],
                ],
                ..*p
            })
            .collect();
        Self { poses }
    }
}

/// Pose at an arbitrary timestamp: linear in position, shortest arc in heading.
pub fn interpolate_pose(trajectory: &Trajectory, timestamp: f64) -> Result<Pose> {
    let poses = trajectory.poses();
    let first = poses[0].timestamp;
    let last = poses[poses.len() - 1].timestamp;
    ensure_finite("timestamp", timestamp)?;
    if timestamp < first || timestamp > last {
        return Err(Error::OutOfRange {
            what: "timestamp".into(),
            value: timestamp,
            min: first,
            max: last,
        });
    }
    let upper = poses.partition_point(|p| p.timestamp < timestamp);
    if poses[upper].timestamp == timestamp {
        return Ok(poses[upper]);
    }
    let (a, b) = (&poses[upper - 1], &poses[upper]);
    let f = (timestamp - a.timestamp) / (b.timestamp - a.timestamp);
    let lerp = |u: f64, v: f64| u + (v - u) * f;
    let dh = normalize_heading(b.heading - a.heading);
    Pose::new(
        [
            lerp(a.position[0], b.position[0]),
            lerp(a.position[1], b.position[1]),
            lerp(a.position[2], b.position[2]),
        ],
        a.heading + dh * f,
        timestamp,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryPattern {
    /// Boustrophedon lines along x, alternating direction.
    Zigzag,
    /// Parallel lines along x, always in +x.
    StraightLines,
    /// Seeded random walk with wandering heading.
    RandomHeading,
}

impl std::str::FromStr for TrajectoryPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zigzag" => Ok(Self::Zigzag),
            "straight-lines" | "straight" => Ok(Self::StraightLines),
            "random-heading" | "random" => Ok(Self::RandomHeading),
            other => Err(Error::invalid(
                "trajectory pattern",
                format!("unknown pattern `{other}` (zigzag, straight-lines, random-heading)"),
            )),
        }
    }
}

/// Survey layout for [`synth_trajectory`].
///
/// Lines run along x over `extent[0]` metres and are stacked along y every
/// `spacing` metres while they fit inside `extent[1]`. Poses are `step`
/// metres apart along a line. Timestamps follow path length at `speed` m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurveySpec {
    pub pattern: TrajectoryPattern,
    pub origin: [f64; 2],
    pub extent: [f64; 2],
    pub spacing: f64,
    pub step: f64,
    pub surface_z: f64,
    pub speed: f64,
    pub seed: u64,
}

impl SurveySpec {
    pub fn new(pattern: TrajectoryPattern, extent: [f64; 2], spacing: f64, step: f64) -> Self {
        Self {
            pattern,
            origin: [0.0, 0.0],
            extent,
            spacing,
            step,
            surface_z: 0.0,
            speed: 1.0,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("origin x", self.origin[0]),
            ("origin y", self.origin[1]),
            ("extent x", self.extent[0]),
            ("extent y", self.extent[1]),
            ("line spacing", self.spacing),
            ("step", self.step),
            ("surface z", self.surface_z),
            ("speed", self.speed),
        ] {
            ensure_finite(what, v)?;
        }
        if self.extent[0] <= 0.0 || self.extent[1] < 0.0 {
            return Err(Error::invalid(
                "survey extent",
                format!(
                    "{} x {} m is degenerate (x must be > 0, y >= 0)",
                    self.extent[0], self.extent[1]
                ),
            ));
        }
        if self.spacing <= 0.0 || self.step <= 0.0 || self.speed <= 0.0 {
            return Err(Error::invalid(
                "survey",
                "spacing, step and speed must be positive",
            ));
        }
        if self.step > self.extent[0] {
            return Err(Error::invalid(
                "survey",
                format!(
                    "step {} m exceeds line length {} m",
                    self.step, self.extent[0]
                ),
            ));
        }
        Ok(())
    }
}

// Tolerates extents that are an exact multiple of the increment up to rounding.
fn count_steps(length: f64, increment: f64) -> usize {
    (length / increment + 1e-9).floor() as usize
}

/// Deterministic survey trajectory covering `spec.extent`.
pub fn synth_trajectory(spec: &SurveySpec) -> Result<Trajectory> {
    spec.validate()?;
    let n_lines = count_steps(spec.extent[1], spec.spacing) + 1;
    let n_per_line = count_steps(spec.extent[0], spec.step) + 1;
    let [ox, oy] = spec.origin;

    let mut poses = Vec::with_capacity(n_lines * n_per_line);
    let mut path = 0.0;
    let mut last: Option<[f64; 2]> = None;
    let mut push = |xy: [f64; 2], heading: f64, poses: &mut Vec<Pose>| -> Result<()> {
        if let Some(prev) = last {
            path += ((xy[0] - prev[0]).powi(2) + (xy[1] - prev[1]).powi(2)).sqrt();
        }
        last = Some(xy);
        poses.push(Pose::new(
            [xy[0], xy[1], spec.surface_z],
            heading,
            path / spec.speed,
        )?);
        Ok(())
    };

    match spec.pattern {
        TrajectoryPattern::Zigzag | TrajectoryPattern::StraightLines => {
            for line in 0..n_lines {
                let y = oy + line as f64 * spec.spacing;
                let reverse = spec.pattern == TrajectoryPattern::Zigzag && line % 2 == 1;
                let heading = if reverse { PI } else { 0.0 };
                for i in 0..n_per_line {
                    let k = if reverse { n_per_line - 1 - i } else { i };
                    push([ox + k as f64 * spec.step, y], heading, &mut poses)?;
                }
            }
        }
        TrajectoryPattern::RandomHeading => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let (w, h) = (spec.extent[0], spec.extent[1]);
            let center = [ox + 0.5 * w, oy + 0.5 * h];
            let inside = |p: [f64; 2]| p[0] >= ox && p[0] <= ox + w && p[1] >= oy && p[1] <= oy + h;
            let mut pos = center;
            let mut heading: f64 = rng.random_range(-PI..PI);
            push(pos, heading, &mut poses)?;
            for _ in 1..n_lines * n_per_line {
                heading += rng.random_range(-FRAC_PI_4..FRAC_PI_4);
                let mut next = [
                    pos[0] + spec.step * heading.cos(),
                    pos[1] + spec.step * heading.sin(),
                ];
                if !inside(next) {
                    // Turn back towards the middle of the survey area.
                    heading = (center[1] - pos[1]).atan2(center[0] - pos[0])
                        + rng.random_range(-FRAC_PI_4..FRAC_PI_4);
                    next = [
                        (pos[0] + spec.step * heading.cos()).clamp(ox, ox + w),
                        (pos[1] + spec.step * heading.sin()).clamp(oy, oy + h),
                    ];
                }
                if next == pos {
                    // Clamping can pin a step against a wall of a zero-height extent.
                    next[0] = (pos[0] + spec.step).min(ox + w);
                    if next == pos {
                        next[0] = pos[0] - spec.step;
                    }
                }
                pos = next;
                push(pos, heading, &mut poses)?;
            }
        }
    }
    Trajectory::new(poses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn angle_dist(a: f64, b: f64) -> f64 {
        normalize_heading(a - b).abs()
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(rotate_antenna([1.0, 0.0], 0.0).unwrap(), [1.0, 0.0]);
        let q = rotate_antenna([1.0, 0.0], FRAC_PI_2).unwrap();
        assert_abs_diff_eq!(q[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q[1], 1.0, epsilon = 1e-15);
        let q = rotate_antenna([1.0, 0.0], PI / 6.0).unwrap();
        assert_abs_diff_eq!(q[0], 0.8660254037844387, epsilon = 1e-12);
        assert_abs_diff_eq!(q[1], 0.5, epsilon = 1e-12);
        assert!(rotate_antenna([f64::NAN, 0.0], 0.0).is_err());
        assert!(rotate_antenna([0.0, 0.0], f64::INFINITY).is_err());
    }

    #[test]
    fn lever_arm_examples() {
        let p = Pose::new([0.3, -0.2, 0.0], 1.0, 0.0).unwrap();
        assert_eq!(antenna_world_position(&p, [0.0, 0.0]), p.position);
        let p = Pose::new([0.0, 0.0, 0.0], 0.0, 0.0).unwrap();
        assert_eq!(antenna_world_position(&p, [0.2, 0.0]), [0.2, 0.0, 0.0]);
        let p = Pose::new([1.0, 1.0, 0.0], FRAC_PI_2, 0.0).unwrap();
        let a = antenna_world_position(&p, [0.2, 0.0]);
        assert_abs_diff_eq!(a[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1], 1.2, epsilon = 1e-12);
        assert_eq!(a[2], 0.0);
    }

    #[test]
    fn heading_normalisation() {
        assert_abs_diff_eq!(normalize_heading(7.0), 0.7168146928204138, epsilon = 1e-12);
        assert_eq!(normalize_heading(PI), -PI);
        assert_eq!(normalize_heading(-PI), -PI);
        assert_eq!(normalize_heading(0.0), 0.0);
    }

    #[test]
    fn zigzag_layout() {
        let spec = SurveySpec::new(TrajectoryPattern::Zigzag, [2.0, 2.0], 1.0, 0.5);
        let t = synth_trajectory(&spec).unwrap();
        assert_eq!(t.len(), 15);
        for (line, chunk) in t.poses().chunks(5).enumerate() {
            let expected_heading = if line % 2 == 0 { 0.0 } else { PI };
            let xs: Vec<f64> = chunk.iter().map(|p| p.position[0]).collect();
            let want: Vec<f64> = if line % 2 == 0 {
                vec![0.0, 0.5, 1.0, 1.5, 2.0]
            } else {
                vec![2.0, 1.5, 1.0, 0.5, 0.0]
            };
            assert_eq!(xs, want);
            for p in chunk {
                assert_eq!(p.position[1], line as f64);
                assert!(angle_dist(p.heading, expected_heading) < 1e-12);
            }
        }
    }

    #[test]
    fn straight_single_line() {
        let spec = SurveySpec::new(TrajectoryPattern::StraightLines, [1.0, 0.0], 1.0, 0.5);
        let t = synth_trajectory(&spec).unwrap();
        let xs: Vec<f64> = t.poses().iter().map(|p| p.position[0]).collect();
        assert_eq!(xs, vec![0.0, 0.5, 1.0]);
        assert!(t.poses().iter().all(|p| p.heading == 0.0));
    }

    #[test]
    fn random_heading_is_seeded() {
        let mut spec = SurveySpec::new(TrajectoryPattern::RandomHeading, [2.0, 1.0], 0.5, 0.1);
        spec.seed = 42;
        let a = synth_trajectory(&spec).unwrap();
        let b = synth_trajectory(&spec).unwrap();
        assert_eq!(a, b);
        spec.seed = 43;
        assert_ne!(a, synth_trajectory(&spec).unwrap());
        for p in a.poses() {
            assert!((0.0..=2.0).contains(&p.position[0]));
            assert!((0.0..=1.0).contains(&p.position[1]));
        }
    }

    #[test]
    fn degenerate_surveys_rejected() {
        let bad = [
            SurveySpec::new(TrajectoryPattern::Zigzag, [0.0, 1.0], 0.5, 0.1),
            SurveySpec::new(TrajectoryPattern::Zigzag, [1.0, -1.0], 0.5, 0.1),
            SurveySpec::new(TrajectoryPattern::Zigzag, [1.0, 1.0], 0.0, 0.1),
            SurveySpec::new(TrajectoryPattern::Zigzag, [1.0, 1.0], 0.5, -0.1),
            SurveySpec::new(TrajectoryPattern::Zigzag, [1.0, 1.0], 0.5, f64::NAN),
        ];
        for spec in bad {
            assert!(synth_trajectory(&spec).is_err(), "{spec:?}");
        }
    }

    #[test]
    fn trajectory_invariants_enforced() {
        let p = |t| Pose::new([0.0; 3], 0.0, t).unwrap();
        assert!(Trajectory::new(vec![p(0.0)]).is_err());
        assert!(Trajectory::new(vec![p(0.0), p(0.0)]).is_err());
        assert!(Trajectory::new(vec![p(1.0), p(0.5)]).is_err());
        assert!(Trajectory::new(vec![p(0.0), p(0.5)]).is_ok());
    }

    #[test]
    fn interpolation_examples() {
        let a = Pose::new([0.0, 0.0, 0.0], 0.0, 0.0).unwrap();
        let b = Pose::new([1.0, 0.0, 0.0], 0.0, 1.0).unwrap();
        let t = Trajectory::new(vec![a, b]).unwrap();
        assert_eq!(interpolate_pose(&t, 0.0).unwrap(), a);
        assert_eq!(interpolate_pose(&t, 1.0).unwrap(), b);
        let mid = interpolate_pose(&t, 0.5).unwrap();
        assert_eq!(mid.position, [0.5, 0.0, 0.0]);
        assert_eq!(mid.heading, 0.0);
        assert!(matches!(
            interpolate_pose(&t, 1.5),
            Err(Error::OutOfRange { .. })
        ));
        assert!(interpolate_pose(&t, -0.1).is_err());

        let a = Pose::new([0.0; 3], -3.0, 0.0).unwrap();
        let b = Pose::new([0.0; 3], 3.0, 1.0).unwrap();
        let t = Trajectory::new(vec![a, b]).unwrap();
        let mid = interpolate_pose(&t, 0.5).unwrap();
        assert!(
            angle_dist(mid.heading, PI) < 1e-9,
            "heading {}",
            mid.heading
        );
    }

    #[test]
    fn rotated_trajectory_turns_headings() {
        let spec = SurveySpec::new(TrajectoryPattern::Zigzag, [1.0, 1.0], 0.5, 0.25);
        let t = synth_trajectory(&spec).unwrap();
        let r = t.rotated_about([0.5, 0.5], FRAC_PI_4).unwrap();
        for (p, q) in t.poses().iter().zip(r.poses()) {
            assert!(angle_dist(q.heading, p.heading + FRAC_PI_4) < 1e-12);
            let d0 = (p.position[0] - 0.5).hypot(p.position[1] - 0.5);
            let d1 = (q.position[0] - 0.5).hypot(q.position[1] - 0.5);
            assert_abs_diff_eq!(d0, d1, epsilon = 1e-12);
        }
    }

    fn survey_strategy() -> impl Strategy<Value = SurveySpec> {
        (
            prop_oneof![
                Just(TrajectoryPattern::Zigzag),
                Just(TrajectoryPattern::StraightLines),
                Just(TrajectoryPattern::RandomHeading)
            ],
            0.2f64..5.0,
            0.0f64..5.0,
            0.05f64..1.0,
            0.01f64..0.2,
            any::<u64>(),
        )
            .prop_map(|(pattern, ex, ey, spacing, step, seed)| {
                let mut s = SurveySpec::new(pattern, [ex, ey], spacing, step);
                s.seed = seed;
                s
            })
    }

    proptest! {
        #[test]
        fn rotation_preserves_norm(x in -100.0f64..100.0, y in -100.0f64..100.0, th in -10.0f64..10.0) {
            let r = rotate_antenna([x, y], th).unwrap();
            prop_assert!((r[0].hypot(r[1]) - x.hypot(y)).abs() <= 1e-12 * (1.0 + x.hypot(y)));
            let back = rotate_antenna(r, -th).unwrap();
            prop_assert!((back[0] - x).abs() <= 1e-12 * (1.0 + x.abs().max(y.abs())));
            prop_assert!((back[1] - y).abs() <= 1e-12 * (1.0 + x.abs().max(y.abs())));
        }

        #[test]
        fn synthetic_surveys_are_valid(spec in survey_strategy()) {
            let t = synth_trajectory(&spec).unwrap();
            prop_assert!(t.len() >= 2);
            for w in t.poses().windows(2) {
                prop_assert!(w[1].timestamp > w[0].timestamp);
            }
            for p in t.poses() {
                prop_assert!(p.heading >= -PI && p.heading < PI);
            }
        }
    }
}
