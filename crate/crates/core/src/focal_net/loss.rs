//! Scale-invariant log loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{FeatureStack, GradTape, Plane2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub silog_lambda: f64,
    pub silog_alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            silog_lambda: 0.85,
            silog_alpha: 10.0,
        }
    }
}

impl LossConfig {
    pub fn new(silog_lambda: f64, silog_alpha: f64) -> Result<Self> {
        let cfg = Self {
            silog_lambda,
            silog_alpha,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.silog_lambda) {
            return Err(Error::arg("silog_lambda", format!("must lie in [0, 1], got {}", self.silog_lambda)));
        }
        if !(self.silog_alpha > 0.0 && self.silog_alpha.is_finite()) {
            return Err(Error::arg("silog_alpha", format!("must be positive, got {}", self.silog_alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiLogResult {
    pub loss: f64,
    /// d loss / d pred; zero outside the mask.
    pub grad: Plane2D,
    /// The variance term was below the clamp floor (e.g. `lambda = 1` with `pred = c gt`).
    pub degenerate: bool,
}

/// Loss and gradient with respect to `pred` over pixels where `mask > 0.5`.
pub fn silog_loss(pred: &Plane2D, gt: &Plane2D, mask: &Plane2D, cfg: &LossConfig) -> Result<SiLogResult> {
    cfg.validate()?;
    if pred.dims() != gt.dims() || pred.dims() != mask.dims() {
        return Err(Error::Dimension(format!(
            "silog: pred {:?}, gt {:?}, mask {:?}",
            pred.dims(),
            gt.dims(),
            mask.dims()
        )));
    }
    let mut tape = GradTape::new();
    let p = tape.param(FeatureStack::from_plane(pred.clone()));
    let out = tape.silog(p, gt.data(), mask.data(), cfg.silog_lambda, cfg.silog_alpha)?;
    let loss = tape.value(out.loss).data()[0];
    let grads = tape.backward(out.loss, 1.0)?;
    let g = grads.wrt(p).expect("registered parameter").plane(0);
    Ok(SiLogResult {
        loss,
        grad: g,
        degenerate: out.degenerate,
    })
}

/// Loss value only, over already-masked positive depths.
pub fn silog_value(pred: &[f64], gt: &[f64], cfg: &LossConfig) -> f64 {
    crate::numerics::tape::silog_value(pred, gt, cfg.silog_lambda, cfg.silog_alpha)
}
