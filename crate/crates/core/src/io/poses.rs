//! Pose CSV: header `timestamp,x,y,z,heading`, one pose per row.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{Pose, Trajectory};

use super::write_atomic;

#[derive(Debug, Serialize, Deserialize)]
struct PoseRow {
    timestamp: f64,
    x: f64,
    y: f64,
    z: f64,
    heading: f64,
}

/// Reads a trajectory; headings are wrapped into `[-π, π)`. Row numbers in
/// errors count data rows from 1.
pub fn read_poses(path: &Path) -> Result<Trajectory> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, 0, e))?;
    let mut poses: Vec<Pose> = Vec::new();
    for (i, rec) in rdr.deserialize::<PoseRow>().enumerate() {
        let row = i + 1;
        let r = rec.map_err(|e| csv_error(path, row, e))?;
        let pose = Pose::new([r.x, r.y, r.z], r.heading, r.timestamp).map_err(|e| Error::Row {
            path: path.to_path_buf(),
            row,
            reason: e.to_string(),
        })?;
        if let Some(prev) = poses.last() {
            if pose.timestamp <= prev.timestamp {
                return Err(Error::Row {
                    path: path.to_path_buf(),
                    row,
                    reason: format!(
                        "timestamp {} does not increase on the previous row ({})",
                        pose.timestamp, prev.timestamp
                    ),
                });
            }
        }
        poses.push(pose);
    }
    Trajectory::new(poses)
}

pub fn write_poses(trajectory: &Trajectory, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        let mut wtr = csv::Writer::from_writer(w);
        for p in trajectory.poses() {
            wtr.serialize(PoseRow {
                timestamp: p.timestamp,
                x: p.position[0],
                y: p.position[1],
                z: p.position[2],
                heading: p.heading,
            })
            .map_err(std::io::Error::other)?;
        }
        wtr.flush()
    })
}

fn csv_error(path: &Path, row: usize, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => return Error::io(path, io),
            _ => unreachable!(),
        }
    }
    Error::Row {
        path: path.to_path_buf(),
        row,
        reason: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, text: &str) -> std::path::PathBuf {
        let p = dir.join("poses.csv");
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn minimal_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "timestamp,x,y,z,heading\n0,0,0,0,0\n1,0.5,0,0,0\n",
        );
        assert_eq!(read_poses(&p).unwrap().len(), 2);
    }

    #[test]
    fn duplicate_timestamp_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "timestamp,x,y,z,heading\n0,0,0,0,0\n1,1,0,0,0\n1,2,0,0,0\n",
        );
        match read_poses(&p) {
            Err(Error::Row { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn heading_wrapped_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "timestamp,x,y,z,heading\n0,0,0,0,7.0\n1,1,0,0,0\n",
        );
        let t = read_poses(&p).unwrap();
        assert!((t.poses()[0].heading - (7.0 - std::f64::consts::TAU)).abs() < 1e-12);
        assert!((t.poses()[0].heading - 0.7168).abs() < 1e-4);
    }

    #[test]
    fn missing_column_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "timestamp,x,y,z\n0,0,0,0\n1,1,0,0\n");
        assert!(matches!(read_poses(&p), Err(Error::Row { .. })));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let t = Trajectory::new(vec![
            Pose::new([0.1, 0.2, 0.0], 0.3, 0.0).unwrap(),
            Pose::new([1.0 / 3.0, -2.5e-7, 0.01], -3.0, 0.123456789).unwrap(),
        ])
        .unwrap();
        let p = dir.path().join("t.csv");
        write_poses(&t, &p).unwrap();
        assert_eq!(read_poses(&p).unwrap(), t);
    }
}
