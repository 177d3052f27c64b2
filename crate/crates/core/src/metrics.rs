//! Depth evaluation metrics: threshold accuracies, absolute relative error,
//! RMSE, mean log10 error and SILog.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::focal_net::{silog_value, LossConfig};
use crate::numerics::Plane2D;

/// Ground-truth depth range `(d_min, d_max]` counted by [`evaluate`].
pub const DEFAULT_DEPTH_CAP: (f64, f64) = (1e-3, 10.0);

/// Predictions are floored here before ratios and logarithms.
pub const PRED_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub abs_rel: f64,
    pub rmse: f64,
    pub log10_err: f64,
    pub silog: f64,
    pub valid_pixels: usize,
    pub depth_cap: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Means weighted by valid pixel count; RMSE from the pooled MSE.
    #[default]
    Pooled,
    /// Unweighted mean of per-image values.
    PerImage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub cap: (f64, f64),
    pub pred_floor: f64,
    pub loss: LossConfig,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_DEPTH_CAP,
            pred_floor: PRED_FLOOR,
            loss: LossConfig::default(),
        }
    }
}

fn check_cap(cap: (f64, f64)) -> Result<()> {
    if !(cap.0 >= 0.0 && cap.1 > cap.0) {
        return Err(Error::arg("cap", format!("need 0 <= d_min < d_max, got {cap:?}")));
    }
    Ok(())
}

/// Metrics over pixels with `mask == 1` and `gt` in `(cap.0, cap.1]`.
pub fn evaluate(pred: &Plane2D, gt: &Plane2D, mask: &Plane2D, cap: (f64, f64)) -> Result<MetricsReport> {
    evaluate_with(
        pred,
        gt,
        mask,
        &EvalOptions {
            cap,
            ..EvalOptions::default()
        },
    )
}

pub fn evaluate_with(pred: &Plane2D, gt: &Plane2D, mask: &Plane2D, opts: &EvalOptions) -> Result<MetricsReport> {
    check_cap(opts.cap)?;
    if pred.dims() != gt.dims() || pred.dims() != mask.dims() {
        return Err(Error::Dimension(format!(
            "evaluate: pred {:?}, gt {:?}, mask {:?}",
            pred.dims(),
            gt.dims(),
            mask.dims()
        )));
    }
    let (d_min, d_max) = opts.cap;
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for ((&p, &t), &m) in pred.data().iter().zip(gt.data()).zip(mask.data()) {
        if m == 1.0 && t > d_min && t <= d_max {
            preds.push(p);
            gts.push(t);
        }
    }
    if preds.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let n = preds.len() as f64;
    let floored: Vec<f64> = preds.iter().map(|&p| p.max(opts.pred_floor)).collect();
    let thresholds = [1.25, 1.25 * 1.25, 1.25 * 1.25 * 1.25];
    let mut hits = [0usize; 3];
    let (mut rel, mut sq, mut l10) = (0.0, 0.0, 0.0);
    for ((&p, &pf), &t) in preds.iter().zip(&floored).zip(&gts) {
        let ratio = (pf / t).max(t / pf);
        for (h, &th) in hits.iter_mut().zip(&thresholds) {
            if ratio < th {
                *h += 1;
            }
        }
        rel += (p - t).abs() / t;
        sq += (p - t) * (p - t);
        l10 += (pf.log10() - t.log10()).abs();
    }
    Ok(MetricsReport {
        delta1: hits[0] as f64 / n,
        delta2: hits[1] as f64 / n,
        delta3: hits[2] as f64 / n,
        abs_rel: rel / n,
        rmse: (sq / n).sqrt(),
        log10_err: l10 / n,
        silog: silog_value(&floored, &gts, &opts.loss),
        valid_pixels: preds.len(),
        depth_cap: opts.cap,
    })
}

/// Pixel-weighted aggregation; see [`aggregate_with`].
pub fn aggregate(reports: &[MetricsReport]) -> Result<MetricsReport> {
    aggregate_with(reports, Aggregation::Pooled)
}

/// Combines per-image reports. All reports must share one depth cap.
///
/// Pooled aggregation reproduces evaluation over the concatenated pixels for
/// every field except `silog`, which is the weighted mean of per-image values.
pub fn aggregate_with(reports: &[MetricsReport], mode: Aggregation) -> Result<MetricsReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::arg("reports", "cannot aggregate an empty list"))?;
    if let Some(r) = reports.iter().find(|r| r.depth_cap != first.depth_cap) {
        return Err(Error::arg(
            "reports",
            format!("mixed depth caps {:?} and {:?}", first.depth_cap, r.depth_cap),
        ));
    }
    if reports.len() == 1 {
        return Ok(*first);
    }
    let total: usize = reports.iter().map(|r| r.valid_pixels).sum();
    let weight = |r: &MetricsReport| match mode {
        Aggregation::Pooled => r.valid_pixels as f64 / total as f64,
        Aggregation::PerImage => 1.0 / reports.len() as f64,
    };
    let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(|r| weight(r) * f(r)).sum::<f64>();
    let rmse = match mode {
        Aggregation::Pooled => mean(|r| r.rmse * r.rmse).sqrt(),
        Aggregation::PerImage => mean(|r| r.rmse),
    };
    Ok(MetricsReport {
        delta1: mean(|r| r.delta1),
        delta2: mean(|r| r.delta2),
        delta3: mean(|r| r.delta3),
        abs_rel: mean(|r| r.abs_rel),
        rmse,
        log10_err: mean(|r| r.log10_err),
        silog: mean(|r| r.silog),
        valid_pixels: total,
        depth_cap: first.depth_cap,
    })
}
