//! Finite-difference verification of the model's analytic gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::loss::LossConfig;
use super::model::{FocalDepthModel, FocalNormalization, ForwardOptions, ModelConfig, SampleInput};
use crate::error::Result;
use crate::numerics::{AdjointFault, FeatureStack, GradTape, Plane2D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub loss: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error() < tolerance
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorCheck> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    pub height: usize,
    pub width: usize,
    /// Coordinates probed per tensor; smaller tensors are probed exhaustively.
    pub coords_per_tensor: usize,
    /// Relative step: `h = step * max(1, |theta|)`.
    pub step: f64,
    /// Denominator floor in `|a - n| / max(|a|, |n|, floor)`.
    pub floor: f64,
    pub fault: Option<AdjointFault>,
    pub loss: LossConfig,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            height: 24,
            width: 32,
            coords_per_tensor: 48,
            step: 1e-5,
            floor: 1e-5,
            fault: None,
            loss: LossConfig::default(),
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// A randomly initialized model with non-trivial head statistics, a random
/// image, ground truth and mask.
fn random_problem(seed: u64, opts: &GradcheckOptions) -> Result<(FocalDepthModel, SampleInput, Plane2D, Plane2D)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ModelConfig {
        focal_normalization: FocalNormalization::ImageWidth,
        ..ModelConfig::default()
    };
    let mut model = FocalDepthModel::new(cfg, rng.random())?;
    let wn = Normal::new(0.0, 0.3).expect("valid normal");
    let bn = Normal::new(0.0, 0.5).expect("valid normal");
    for (name, dist) in [("head.weight", wn), ("head.bias", wn), ("head.bin_widths", bn)] {
        let p = model.parameter_mut(name).expect("head tensor");
        p.value.data_mut().iter_mut().for_each(|x| *x = dist.sample(&mut rng));
    }
    let (h, w) = (opts.height, opts.width);
    let rgb = FeatureStack::new(3, h, w, (0..3 * h * w).map(|_| rng.random_range(0.0..1.0)).collect())?;
    let input = SampleInput::from_rgb(&rgb, rng.random_range(0.6..1.4) * w as f64)?;
    let gt = Plane2D::from_fn(h, w, |_, _| rng.random_range(0.5..8.0));
    let mask = Plane2D::from_fn(h, w, |_, _| if rng.random_bool(0.9) { 1.0 } else { 0.0 });
    Ok((model, input, gt, mask))
}

/// Central differences against tape gradients for every parameter tensor,
/// through backbone, focal pyramid, fusion, bin head and SILog.
pub fn gradcheck(seed: u64) -> Result<GradcheckReport> {
    gradcheck_with(seed, &GradcheckOptions::default())
}

pub fn gradcheck_with(seed: u64, opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let (model, input, gt, mask) = random_problem(seed, opts)?;
    let (loss, grads) = model.loss_and_gradients(&input, &gt, &mask, &opts.loss, &ForwardOptions::default(), opts.fault)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut tensors = Vec::new();
    for (idx, p) in model.parameters().iter().enumerate() {
        let n = p.value.len();
        let coords: Vec<usize> = if n <= opts.coords_per_tensor {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, opts.coords_per_tensor).into_vec();
            c.sort_unstable();
            c
        };
        let mut check = TensorCheck {
            name: p.name.clone(),
            checked: coords.len(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
        };
        for &i in &coords {
            let theta = p.value.data()[i];
            let h = opts.step * theta.abs().max(1.0);
            let eval = |v: f64| -> Result<f64> {
                let mut m = model.clone();
                m.params_mut()[idx].value.data_mut()[i] = v;
                m.loss(&input, &gt, &mask, &opts.loss)
            };
            let numeric = (eval(theta + h)? - eval(theta - h)?) / (2.0 * h);
            let analytic = grads[idx].data()[i];
            check.max_abs_error = check.max_abs_error.max((analytic - numeric).abs());
            check.max_rel_error = check.max_rel_error.max(relative_error(analytic, numeric, opts.floor));
        }
        tensors.push(check);
    }
    Ok(GradcheckReport { seed, loss, tensors })
}

/// Relative error of the identity path `y = x`, whose gradient is exactly 1.
pub fn pass_through_error(x: f64) -> Result<f64> {
    let mut tape = GradTape::new();
    let v = tape.param(FeatureStack::scalar(x));
    let s = tape.sum(v)?;
    let g = tape.backward(s, 1.0)?;
    let analytic = g.wrt(v).expect("registered").data()[0];
    let h = 1e-5 * x.abs().max(1.0);
    let numeric = ((x + h) - (x - h)) / (2.0 * h);
    Ok(relative_error(analytic, numeric, 1e-7))
}
