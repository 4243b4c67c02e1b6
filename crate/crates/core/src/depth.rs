//! Dielectric and depth estimation from fitted hyperbolas, plus the
//! weighted depth/dielectric loss used to score predictions.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::detect::HyperbolaFit;
use crate::error::{ensure_finite, Error, Result};
use crate::medium::SPEED_OF_LIGHT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthPrediction {
    pub target_id: usize,
    pub depth: f64,
    pub dielectric: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthEvalRecord {
    pub ground_truth_depth: f64,
    pub predicted_depth: f64,
    pub ground_truth_dielectric: f64,
    pub predicted_dielectric: f64,
}

impl DepthEvalRecord {
    pub fn new(
        ground_truth_depth: f64,
        predicted_depth: f64,
        ground_truth_dielectric: f64,
        predicted_dielectric: f64,
    ) -> Result<Self> {
        for (what, v) in [
            ("ground-truth depth", ground_truth_depth),
            ("predicted depth", predicted_depth),
            ("ground-truth dielectric", ground_truth_dielectric),
            ("predicted dielectric", predicted_dielectric),
        ] {
            ensure_finite(what, v)?;
            if v <= 0.0 {
                return Err(Error::invalid(what, format!("{v} must be positive")));
            }
        }
        Ok(Self {
            ground_truth_depth,
            predicted_depth,
            ground_truth_dielectric,
            predicted_dielectric,
        })
    }
}

/// Dielectric estimate and whether it had to be clamped up to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DielectricEstimate {
    pub dielectric: f64,
    pub clamped: bool,
}

/// `D̂ = (C / v)²`, never below 1.
pub fn estimate_dielectric(fit: &HyperbolaFit) -> Result<DielectricEstimate> {
    let v = ensure_finite("velocity estimate", fit.velocity_estimate)?;
    if v <= 0.0 {
        return Err(Error::invalid(
            "velocity estimate",
            format!("{v} m/s must be positive"),
        ));
    }
    let d = (SPEED_OF_LIGHT / v).powi(2);
    if d < 1.0 {
        warn!("velocity {v} m/s exceeds C; dielectric clamped to 1");
        return Ok(DielectricEstimate {
            dielectric: 1.0,
            clamped: true,
        });
    }
    Ok(DielectricEstimate {
        dielectric: d,
        clamped: false,
    })
}

/// Depth `(C / sqrt(D̂)) · t0 / 2`.
pub fn predict_depth(target_id: usize, fit: &HyperbolaFit, d_hat: f64) -> Result<DepthPrediction> {
    fit.validate()?;
    ensure_finite("dielectric", d_hat)?;
    if d_hat < 1.0 {
        return Err(Error::OutOfRange {
            what: "dielectric".into(),
            value: d_hat,
            min: 1.0,
            max: f64::INFINITY,
        });
    }
    Ok(DepthPrediction {
        target_id,
        depth: SPEED_OF_LIGHT / d_hat.sqrt() * fit.apex_time / 2.0,
        dielectric: d_hat,
    })
}

/// One dielectric per B-scan (the mean of the per-target estimates), then
/// a depth per fit.
pub fn predict_scan(fits: &[HyperbolaFit]) -> Result<Vec<DepthPrediction>> {
    if fits.is_empty() {
        return Ok(Vec::new());
    }
    let mut sum = 0.0;
    for f in fits {
        sum += estimate_dielectric(f)?.dielectric;
    }
    let d_hat = sum / fits.len() as f64;
    fits.iter()
        .enumerate()
        .map(|(i, f)| predict_depth(i, f, d_hat))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthLoss {
    /// Weighted sum of signed mean errors; positive and negative errors cancel.
    pub signed: f64,
    /// Same weighting over mean squared errors.
    pub mse: f64,
}

pub fn depth_loss(
    records: &[DepthEvalRecord],
    lambda_dielectric: f64,
    lambda_depth: f64,
) -> Result<DepthLoss> {
    if records.is_empty() {
        return Err(Error::invalid("depth loss", "no records"));
    }
    for (what, l) in [
        ("lambda_dielectric", lambda_dielectric),
        ("lambda_depth", lambda_depth),
    ] {
        ensure_finite(what, l)?;
        if l < 0.0 {
            return Err(Error::invalid(what, "must be non-negative"));
        }
    }
    let n = records.len() as f64;
    let mean = |f: &dyn Fn(&DepthEvalRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    let de = |r: &DepthEvalRecord| r.ground_truth_dielectric - r.predicted_dielectric;
    let dd = |r: &DepthEvalRecord| r.ground_truth_depth - r.predicted_depth;
    Ok(DepthLoss {
        signed: lambda_dielectric * mean(&de) + lambda_depth * mean(&dd),
        mse: lambda_dielectric * mean(&|r| de(r).powi(2)) + lambda_depth * mean(&|r| dd(r).powi(2)),
    })
}

/// Mean of `|true depth − predicted depth|`, in metres.
pub fn mean_abs_depth_error(records: &[DepthEvalRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::invalid("mean depth error", "no records"));
    }
    Ok(records
        .iter()
        .map(|r| (r.ground_truth_depth - r.predicted_depth).abs())
        .sum::<f64>()
        / records.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fit(apex_time: f64, velocity_estimate: f64) -> HyperbolaFit {
        HyperbolaFit {
            apex_trace: 0.0,
            apex_time,
            velocity_estimate,
            residual: 0.0,
        }
    }

    fn rec(gt_depth: f64, depth: f64, gt_d: f64, d: f64) -> DepthEvalRecord {
        DepthEvalRecord::new(gt_depth, depth, gt_d, d).unwrap()
    }

    #[test]
    fn dielectric_examples() {
        let e = estimate_dielectric(&fit(1e-8, SPEED_OF_LIGHT)).unwrap();
        assert_eq!(e.dielectric, 1.0);
        assert!(!e.clamped);
        let e = estimate_dielectric(&fit(1e-8, SPEED_OF_LIGHT / 3.0)).unwrap();
        assert_relative_eq!(e.dielectric, 9.0, max_relative = 1e-14);
        let e = estimate_dielectric(&fit(1e-8, SPEED_OF_LIGHT * (1.0 + 1e-12))).unwrap();
        assert_eq!(e.dielectric, 1.0);
        assert!(e.clamped);
        assert!(estimate_dielectric(&fit(1e-8, 0.0)).is_err());
        assert!(estimate_dielectric(&fit(1e-8, -1.0)).is_err());
    }

    #[test]
    fn depth_examples() {
        let p = predict_depth(0, &fit(1.8012461140700214e-8, SPEED_OF_LIGHT / 3.0), 9.0).unwrap();
        assert_relative_eq!(p.depth, 0.9, max_relative = 1e-12);
        let tiny = predict_depth(0, &fit(1e-18, SPEED_OF_LIGHT), 1.0).unwrap();
        assert!(tiny.depth > 0.0 && tiny.depth < 1e-9);
        assert!(predict_depth(0, &fit(1e-8, SPEED_OF_LIGHT), 0.5).is_err());
        assert!(predict_depth(0, &fit(0.0, SPEED_OF_LIGHT), 1.0).is_err());
    }

    #[test]
    fn scan_dielectric_is_mean_of_targets() {
        let fits = [
            fit(1e-8, SPEED_OF_LIGHT / 2.0),
            fit(2e-8, SPEED_OF_LIGHT / 3.0),
        ];
        let preds = predict_scan(&fits).unwrap();
        assert_relative_eq!(preds[0].dielectric, 6.5, max_relative = 1e-12);
        assert_eq!(preds[1].target_id, 1);
        assert!(predict_scan(&[]).unwrap().is_empty());
    }

    #[test]
    fn loss_examples() {
        let perfect = [rec(0.5, 0.5, 4.0, 4.0)];
        assert_eq!(
            depth_loss(&perfect, 1.0, 1.0).unwrap(),
            DepthLoss {
                signed: 0.0,
                mse: 0.0
            }
        );
        let one = [rec(0.7, 0.5, 4.0, 4.0)];
        let l = depth_loss(&one, 1.0, 1.0).unwrap();
        assert_relative_eq!(l.signed, 0.2, max_relative = 1e-12);
        assert_relative_eq!(l.mse, 0.04, max_relative = 1e-12);
        let two = [rec(0.6, 0.5, 4.0, 4.0), rec(0.5, 0.6, 4.0, 4.0)];
        let l = depth_loss(&two, 1.0, 1.0).unwrap();
        assert!(l.signed.abs() < 1e-15);
        assert_relative_eq!(l.mse, 0.01, max_relative = 1e-12);
        assert!(depth_loss(&[], 1.0, 1.0).is_err());
        assert!(depth_loss(&one, -1.0, 1.0).is_err());
    }

    #[test]
    fn mean_abs_error_examples() {
        assert_eq!(
            mean_abs_depth_error(&[rec(0.5, 0.5, 4.0, 4.0)]).unwrap(),
            0.0
        );
        let two = [rec(0.6, 0.5, 4.0, 4.0), rec(0.5, 0.6, 4.0, 4.0)];
        assert_relative_eq!(
            mean_abs_depth_error(&two).unwrap(),
            0.1,
            max_relative = 1e-12
        );
        assert!(mean_abs_depth_error(&[]).is_err());
    }

    fn arb_records() -> impl Strategy<Value = Vec<DepthEvalRecord>> {
        prop::collection::vec(
            (0.1f64..2.0, 0.1f64..2.0, 1.0f64..20.0, 1.0f64..20.0),
            1..12,
        )
        .prop_map(|v| v.into_iter().map(|(a, b, c, d)| rec(a, b, c, d)).collect())
    }

    proptest! {
        #[test]
        fn loss_is_permutation_invariant(records in arb_records(), rot in 0usize..12) {
            let mut shuffled = records.clone();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            let a = depth_loss(&records, 0.7, 1.3).unwrap();
            let b = depth_loss(&shuffled, 0.7, 1.3).unwrap();
            prop_assert!((a.signed - b.signed).abs() <= 1e-12 * (1.0 + a.signed.abs()));
            prop_assert!((a.mse - b.mse).abs() <= 1e-12 * (1.0 + a.mse.abs()));
        }

        #[test]
        fn loss_scales_with_weights(records in arb_records(), k in 0.0f64..10.0) {
            let a = depth_loss(&records, 0.7, 1.3).unwrap();
            let b = depth_loss(&records, 0.7 * k, 1.3 * k).unwrap();
            prop_assert!((b.signed - k * a.signed).abs() <= 1e-12 * (1.0 + (k * a.signed).abs()));
            prop_assert!((b.mse - k * a.mse).abs() <= 1e-12 * (1.0 + k * a.mse));
        }
    }
}
