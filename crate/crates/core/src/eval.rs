//! Detection metrics: IoU, average precision and average recall.
//!
//! Single class, so mAP equals AP. Precision–recall curves use all-points
//! interpolation and AR sweeps IoU thresholds 0.50, 0.55, …, 0.95.

use serde::{Deserialize, Serialize};

use crate::detect::BoundingBox;
use crate::error::{Error, Result};

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = w * h;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Ground truth and scored predictions for one B-scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetItem {
    pub bscan_id: String,
    pub ground_truth: Vec<BoundingBox>,
    /// Confidence is carried in each box's `score`.
    pub predictions: Vec<BoundingBox>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionDataset {
    pub items: Vec<DatasetItem>,
}

impl DetectionDataset {
    pub fn validate(&self) -> Result<()> {
        for item in &self.items {
            for b in item.ground_truth.iter().chain(&item.predictions) {
                b.validate()?;
            }
        }
        if self.items.iter().all(|i| i.ground_truth.is_empty()) {
            return Err(Error::invalid("dataset", "no ground-truth boxes"));
        }
        Ok(())
    }
}

/// AR thresholds 0.50, 0.55, …, 0.95.
pub fn recall_thresholds() -> [f64; 10] {
    std::array::from_fn(|k| (50 + 5 * k) as f64 / 100.0)
}

/// Indices of `preds` by descending score; ties keep input order.
fn ranked(preds: &[BoundingBox]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..preds.len()).collect();
    idx.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    idx
}

/// Greedy matching of one prediction: the unmatched ground truth with the
/// highest IoU at or above `threshold` (lowest index on ties).
fn match_one(pred: &BoundingBox, gts: &[BoundingBox], taken: &mut [bool], threshold: f64) -> bool {
    let mut best: Option<(usize, f64)> = None;
    for (g, gt) in gts.iter().enumerate() {
        if taken[g] {
            continue;
        }
        let o = iou(pred, gt);
        if o >= threshold && best.is_none_or(|(_, bo)| o > bo) {
            best = Some((g, o));
        }
    }
    match best {
        Some((g, _)) => {
            taken[g] = true;
            true
        }
        None => false,
    }
}

/// Area under the all-points interpolated precision–recall curve given the
/// true/false-positive flags of the ranked predictions. Recall steps by
/// `1 / n_gt` at every true positive, so the area is the sum of the
/// interpolated precision at those ranks divided by `n_gt`.
pub fn ap_from_flags(flags: &[bool], n_gt: usize) -> f64 {
    let mut tp = 0usize;
    let precision: Vec<f64> = flags
        .iter()
        .enumerate()
        .map(|(k, &hit)| {
            tp += hit as usize;
            tp as f64 / (k + 1) as f64
        })
        .collect();
    let mut interpolated = precision.clone();
    for i in (0..interpolated.len().saturating_sub(1)).rev() {
        interpolated[i] = interpolated[i].max(interpolated[i + 1]);
    }
    let mut sum = 0.0;
    for (k, &hit) in flags.iter().enumerate() {
        if hit {
            sum += interpolated[k];
        }
    }
    sum / n_gt as f64
}

pub fn average_precision(ds: &DetectionDataset, iou_threshold: f64) -> Result<f64> {
    ds.validate()?;
    let n_gt: usize = ds.items.iter().map(|i| i.ground_truth.len()).sum();
    let mut all: Vec<(usize, usize)> = ds
        .items
        .iter()
        .enumerate()
        .flat_map(|(s, item)| (0..item.predictions.len()).map(move |p| (s, p)))
        .collect();
    let score = |&(s, p): &(usize, usize)| ds.items[s].predictions[p].score;
    all.sort_by(|a, b| score(b).total_cmp(&score(a)));
    let mut taken: Vec<Vec<bool>> = ds
        .items
        .iter()
        .map(|i| vec![false; i.ground_truth.len()])
        .collect();
    let flags: Vec<bool> = all
        .iter()
        .map(|&(s, p)| {
            let item = &ds.items[s];
            match_one(
                &item.predictions[p],
                &item.ground_truth,
                &mut taken[s],
                iou_threshold,
            )
        })
        .collect();
    Ok(ap_from_flags(&flags, n_gt))
}

fn item_recall(item: &DatasetItem, max_detections: usize, threshold: f64) -> f64 {
    let mut taken = vec![false; item.ground_truth.len()];
    let hits = ranked(&item.predictions)
        .into_iter()
        .take(max_detections)
        .filter(|&p| {
            match_one(
                &item.predictions[p],
                &item.ground_truth,
                &mut taken,
                threshold,
            )
        })
        .count();
    hits as f64 / item.ground_truth.len() as f64
}

fn item_ar(item: &DatasetItem, max_detections: usize) -> f64 {
    let th = recall_thresholds();
    th.iter()
        .map(|&t| item_recall(item, max_detections, t))
        .sum::<f64>()
        / th.len() as f64
}

/// Recall at `max_detections` per B-scan, averaged over the IoU sweep and
/// then over B-scans that hold ground truth.
pub fn average_recall(ds: &DetectionDataset, max_detections: usize) -> Result<f64> {
    ds.validate()?;
    let scans: Vec<&DatasetItem> = ds
        .items
        .iter()
        .filter(|i| !i.ground_truth.is_empty())
        .collect();
    Ok(scans
        .iter()
        .map(|i| item_ar(i, max_detections))
        .sum::<f64>()
        / scans.len() as f64)
}

/// Recall of the full prediction list at one IoU threshold over all scans.
pub fn recall_at(ds: &DetectionDataset, iou_threshold: f64) -> Result<f64> {
    ds.validate()?;
    let mut hits = 0usize;
    let mut n_gt = 0usize;
    for item in &ds.items {
        let mut taken = vec![false; item.ground_truth.len()];
        for p in ranked(&item.predictions) {
            hits += match_one(
                &item.predictions[p],
                &item.ground_truth,
                &mut taken,
                iou_threshold,
            ) as usize;
        }
        n_gt += item.ground_truth.len();
    }
    Ok(hits as f64 / n_gt as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanMetrics {
    pub bscan_id: String,
    pub n_ground_truth: usize,
    pub n_predictions: usize,
    #[serde(rename = "ap@0.50")]
    pub ap50: Option<f64>,
    #[serde(rename = "ap@0.75")]
    pub ap75: Option<f64>,
    #[serde(rename = "ar@10")]
    pub ar10: Option<f64>,
    #[serde(rename = "ar@100")]
    pub ar100: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub interpolation: String,
    pub ar_iou_thresholds: Vec<f64>,
    #[serde(rename = "ap@0.50")]
    pub ap50: f64,
    #[serde(rename = "ap@0.75")]
    pub ap75: f64,
    #[serde(rename = "ar@10")]
    pub ar10: f64,
    #[serde(rename = "ar@100")]
    pub ar100: f64,
    pub per_bscan: Vec<ScanMetrics>,
}

pub fn report(ds: &DetectionDataset) -> Result<MetricsReport> {
    let per_bscan = ds
        .items
        .iter()
        .map(|item| {
            let single = DetectionDataset {
                items: vec![item.clone()],
            };
            let has_gt = !item.ground_truth.is_empty();
            let opt = |f: &dyn Fn() -> Result<f64>| if has_gt { f().ok() } else { None };
            ScanMetrics {
                bscan_id: item.bscan_id.clone(),
                n_ground_truth: item.ground_truth.len(),
                n_predictions: item.predictions.len(),
                ap50: opt(&|| average_precision(&single, 0.5)),
                ap75: opt(&|| average_precision(&single, 0.75)),
                ar10: opt(&|| average_recall(&single, 10)),
                ar100: opt(&|| average_recall(&single, 100)),
            }
        })
        .collect();
    Ok(MetricsReport {
        interpolation: "all-points".into(),
        ar_iou_thresholds: recall_thresholds().to_vec(),
        ap50: average_precision(ds, 0.5)?,
        ap75: average_precision(ds, 0.75)?,
        ar10: average_recall(ds, 10)?,
        ar100: average_recall(ds, 100)?,
        per_bscan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64, s: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1, s).unwrap()
    }

    fn item(gt: Vec<BoundingBox>, pred: Vec<BoundingBox>) -> DatasetItem {
        DatasetItem {
            bscan_id: "a".into(),
            ground_truth: gt,
            predictions: pred,
        }
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 2.0, 2.0, 1.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(5.0, 5.0, 6.0, 6.0, 1.0)), 0.0);
        assert_eq!(iou(&a, &bx(1.0, 0.0, 3.0, 2.0, 1.0)), 1.0 / 3.0);
        // Touching edges share no area.
        assert_eq!(iou(&a, &bx(2.0, 0.0, 3.0, 2.0, 1.0)), 0.0);
    }

    #[test]
    fn ap_examples() {
        let gt = vec![
            bx(0.0, 0.0, 10.0, 10.0, 1.0),
            bx(20.0, 20.0, 30.0, 30.0, 1.0),
        ];
        let perfect = DetectionDataset {
            items: vec![item(gt.clone(), gt.clone())],
        };
        assert_eq!(average_precision(&perfect, 0.5).unwrap(), 1.0);
        assert_eq!(average_recall(&perfect, 10).unwrap(), 1.0);
        let none = DetectionDataset {
            items: vec![item(gt.clone(), vec![])],
        };
        assert_eq!(average_precision(&none, 0.5).unwrap(), 0.0);
        assert_eq!(average_recall(&none, 10).unwrap(), 0.0);

        // IoU 0.8 for the first prediction, a miss for the second.
        let p1 = bx(0.0, 0.0, 10.0, 8.0, 0.9);
        let p2 = bx(50.0, 50.0, 60.0, 60.0, 0.8);
        assert!((iou(&p1, &gt[0]) - 0.8).abs() < 1e-12);
        let ds = DetectionDataset {
            items: vec![item(gt.clone(), vec![p1, p2])],
        };
        assert_eq!(average_precision(&ds, 0.5).unwrap(), 0.5);

        let empty = DetectionDataset {
            items: vec![item(vec![], vec![p1])],
        };
        assert!(average_precision(&empty, 0.5).is_err());
        assert!(average_recall(&empty, 10).is_err());
    }

    #[test]
    fn ar_example() {
        let gt = bx(0.0, 0.0, 10.0, 10.0, 1.0);
        let p = bx(0.0, 0.0, 10.0, 7.0, 0.5);
        assert!((iou(&p, &gt) - 0.7).abs() < 1e-12);
        let ds = DetectionDataset {
            items: vec![item(vec![gt], vec![p])],
        };
        assert_eq!(average_recall(&ds, 10).unwrap(), 0.5);
    }

    #[test]
    fn report_keys() {
        let gt = bx(0.0, 0.0, 10.0, 10.0, 1.0);
        let ds = DetectionDataset {
            items: vec![item(vec![gt], vec![gt])],
        };
        let json = serde_json::to_value(report(&ds).unwrap()).unwrap();
        for key in [
            "ap@0.50",
            "ap@0.75",
            "ar@10",
            "ar@100",
            "per_bscan",
            "interpolation",
        ] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(json["interpolation"], "all-points");
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (
            0.0f64..20.0,
            0.0f64..20.0,
            1.0f64..10.0,
            1.0f64..10.0,
            0.01f64..1.0,
        )
            .prop_map(|(x, y, w, h, s)| bx(x, y, x + w, y + h, s))
    }

    fn arb_dataset() -> impl Strategy<Value = DetectionDataset> {
        prop::collection::vec(
            (
                prop::collection::vec(arb_box(), 1..4),
                prop::collection::vec(arb_box(), 0..4),
            ),
            1..4,
        )
        .prop_map(|v| DetectionDataset {
            items: v.into_iter().map(|(g, p)| item(g, p)).collect(),
        })
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let o = iou(&a, &b);
            prop_assert_eq!(o, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&o));
        }

        #[test]
        fn metrics_depend_only_on_ranking(ds in arb_dataset(), k in 0.01f64..1.0) {
            let mut scaled = ds.clone();
            for it in &mut scaled.items {
                for p in &mut it.predictions {
                    p.score *= k;
                }
            }
            prop_assert_eq!(average_precision(&ds, 0.5).unwrap(), average_precision(&scaled, 0.5).unwrap());
            prop_assert_eq!(average_recall(&ds, 2).unwrap(), average_recall(&scaled, 2).unwrap());
        }

        #[test]
        fn ap_non_increasing_in_threshold(ds in arb_dataset()) {
            let mut prev = f64::INFINITY;
            for t in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let ap = average_precision(&ds, t).unwrap();
                prop_assert!(ap <= prev + 1e-12);
                prev = ap;
            }
        }
    }
}
