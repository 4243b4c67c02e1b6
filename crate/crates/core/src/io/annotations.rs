//! Annotation JSON shared by ground-truth labels and detector output:
//! a list of `{bscan_id, boxes: [{x_min, y_min, x_max, y_max, score?, dielectric?}]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::BoundingBox;
use crate::error::{Error, Result};

use super::{read_json, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dielectric: Option<f64>,
}

impl AnnotatedBox {
    /// Missing scores count as 1 (ground truth).
    pub fn to_box(&self) -> Result<BoundingBox> {
        BoundingBox::new(
            self.x_min,
            self.y_min,
            self.x_max,
            self.y_max,
            self.score.unwrap_or(1.0),
        )
    }

    pub fn from_box(b: &BoundingBox, with_score: bool, dielectric: Option<f64>) -> Self {
        Self {
            x_min: b.x_min,
            y_min: b.y_min,
            x_max: b.x_max,
            y_max: b.y_max,
            score: with_score.then_some(b.score),
            dielectric,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.to_box()?;
        if let Some(d) = self.dielectric {
            if !(d.is_finite() && d >= 1.0) {
                return Err(Error::invalid(
                    "annotation",
                    format!("dielectric {d} is below 1"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationEntry {
    pub bscan_id: String,
    pub boxes: Vec<AnnotatedBox>,
}

impl AnnotationEntry {
    pub fn boxes(&self) -> Result<Vec<BoundingBox>> {
        self.boxes.iter().map(AnnotatedBox::to_box).collect()
    }
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationEntry>> {
    let entries: Vec<AnnotationEntry> = read_json(path)?;
    for e in &entries {
        for b in &e.boxes {
            b.validate()
                .map_err(|err| Error::invalid("annotation", format!("{}: {err}", e.bscan_id)))?;
        }
    }
    Ok(entries)
}

pub fn write_annotations(entries: &[AnnotationEntry], path: &Path) -> Result<()> {
    for e in entries {
        for b in &e.boxes {
            b.validate()?;
        }
    }
    write_json(path, &entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_invariants() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        let entries = vec![AnnotationEntry {
            bscan_id: "scan-1".into(),
            boxes: vec![
                AnnotatedBox {
                    x_min: 1.0,
                    y_min: 2.5,
                    x_max: 7.0,
                    y_max: 100.1,
                    score: Some(0.75),
                    dielectric: Some(9.0),
                },
                AnnotatedBox {
                    x_min: 0.0,
                    y_min: 0.0,
                    x_max: 1.0,
                    y_max: 1.0,
                    score: None,
                    dielectric: None,
                },
            ],
        }];
        write_annotations(&entries, &p).unwrap();
        assert_eq!(read_annotations(&p).unwrap(), entries);

        std::fs::write(
            &p,
            r#"[{"bscan_id": "a", "boxes": [{"x_min": 0, "y_min": 0, "x_max": 1, "y_max": 1, "dielectric": 0.5}]}]"#,
        )
        .unwrap();
        assert!(read_annotations(&p).is_err());
        std::fs::write(
            &p,
            r#"[{"bscan_id": "a", "boxes": [{"x_min": 2, "y_min": 0, "x_max": 1, "y_max": 1}]}]"#,
        )
        .unwrap();
        assert!(read_annotations(&p).is_err());
    }
}
