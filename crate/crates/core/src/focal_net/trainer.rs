//! Two-group training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::LossConfig;
use super::model::{FocalDepthModel, ForwardOptions, ParamGroup, SampleInput};
use super::optimizer::{AdamW, AdamWConfig};
use crate::dataset_io::RgbdSample;
use crate::error::{Error, Result};
use crate::numerics::{FeatureStack, Plane2D};

/// Multiplier applied to `base_lr` over the run; both groups share it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// `0.5 (1 + cos(pi t / T))` for step `t` of `T`.
    Cosine,
}

impl LrSchedule {
    pub fn factor(&self, step: usize, total_steps: usize) -> f64 {
        match self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine => 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total_steps.max(1) as f64).cos()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub base_lr: f64,
    /// Backbone learning rate as a fraction of `base_lr`; 0 freezes the backbone.
    pub backbone_lr_ratio: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub schedule: LrSchedule,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            base_lr: 1.6e-4,
            backbone_lr_ratio: 1.0 / 50.0,
            weight_decay: 0.01,
            betas: (0.9, 0.999),
            epsilon: 1e-8,
            epochs: 5,
            batch_size: 4,
            seed: 0,
            schedule: LrSchedule::Constant,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::arg("base_lr", format!("must be positive, got {}", self.base_lr)));
        }
        if !(0.0..=1.0).contains(&self.backbone_lr_ratio) {
            return Err(Error::arg(
                "backbone_lr_ratio",
                format!("must lie in [0, 1], got {}", self.backbone_lr_ratio),
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::arg("epochs", "epochs and batch size must be at least 1"));
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.betas.0,
            beta2: self.betas.1,
            epsilon: self.epsilon,
            weight_decay: self.weight_decay,
        }
    }

    pub fn group_scale(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Head => 1.0,
            ParamGroup::Backbone => self.backbone_lr_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub source_id: String,
    pub input: SampleInput,
    pub gt: Plane2D,
    pub mask: Plane2D,
}

impl TrainingSample {
    /// Uses `fx` as the focal length.
    pub fn from_rgbd(sample: &RgbdSample) -> Result<Self> {
        Ok(Self {
            source_id: sample.source_id.clone(),
            input: SampleInput::from_image(&sample.rgb, sample.intrinsics.fx)?,
            gt: sample.depth.clone(),
            mask: sample.valid_mask.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: FocalDepthModel,
    pub losses: Vec<StepLoss>,
}

/// Mean batch SILog minimized with AdamW; the backbone group runs at
/// `base_lr * backbone_lr_ratio`, the encoding matrix and head at `base_lr`.
pub fn train(
    mut model: FocalDepthModel,
    dataset: &[TrainingSample],
    cfg: &TrainerConfig,
    loss_cfg: &LossConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    loss_cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::arg("dataset", "cannot train on an empty dataset"));
    }
    let sizes: Vec<usize> = model.parameters().iter().map(|p| p.value.len()).collect();
    let mut opt = AdamW::new(cfg.adamw(), &sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut losses = Vec::new();
    let opts = ForwardOptions::default();
    let total_steps = cfg.epochs * dataset.len().div_ceil(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let step = losses.len();
            let results: Vec<Result<(f64, Vec<FeatureStack>)>> = batch
                .par_iter()
                .map(|&i| {
                    let s = &dataset[i];
                    model.loss_and_gradients(&s.input, &s.gt, &s.mask, loss_cfg, &opts, None)
                })
                .collect();
            let mut total = 0.0;
            let mut acc: Option<Vec<FeatureStack>> = None;
            for (&i, r) in batch.iter().zip(results) {
                let (loss, grads) = r?;
                if !loss.is_finite() || grads.iter().any(|g| !g.all_finite()) {
                    return Err(Error::NonFiniteLoss {
                        step,
                        sample_id: dataset[i].source_id.clone(),
                    });
                }
                total += loss;
                match &mut acc {
                    None => acc = Some(grads),
                    Some(a) => {
                        for (x, g) in a.iter_mut().zip(&grads) {
                            for (u, v) in x.data_mut().iter_mut().zip(g.data()) {
                                *u += v;
                            }
                        }
                    }
                }
            }
            let n = batch.len() as f64;
            let grads = acc.expect("non-empty batch");
            opt.begin_step();
            let lr = cfg.base_lr * cfg.schedule.factor(step, total_steps);
            for idx in 0..sizes.len() {
                if !model.is_trainable(idx) {
                    continue;
                }
                let scale = cfg.group_scale(model.parameters()[idx].group);
                let g: Vec<f64> = grads[idx].data().iter().map(|v| v / n).collect();
                let p = &mut model.params_mut()[idx].value;
                opt.apply(idx, p.data_mut(), &g, lr, scale)?;
            }
            let loss = total / n;
            log::debug!("epoch {epoch} step {step} loss {loss:.6}");
            losses.push(StepLoss { step, epoch, loss });
        }
    }
    Ok(TrainOutcome { model, losses })
}
