//! Focal generalization experiment on synthetic textured planes.
//!
//! Training scenes are rendered at one focal length and augmented with the
//! focal-change / depth-rescale mix. Held-out scenes are rendered at unseen
//! focal lengths. The model is trained with and without focal features from
//! identical seeds and compared by RMSE.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{apply_recipe, plan_recipes, KRange, MixPolicy};
use crate::camera::CameraIntrinsics;
use crate::dataset_io::RgbdSample;
use crate::error::Result;
use crate::focal_net::{
    train, FocalDepthModel, FocalNormalization, LossConfig, ModelConfig, TrainerConfig, TrainingSample,
};
use crate::metrics::{aggregate, evaluate, MetricsReport, DEFAULT_DEPTH_CAP};
use crate::synthetic::{random_plane, render_plane, WorldConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub height: usize,
    pub width: usize,
    /// Training focal length in pixels.
    pub base_focal: f64,
    pub train_scenes: usize,
    pub test_scenes: usize,
    /// Test focal lengths as multiples of `base_focal`.
    pub test_focal_factors: Vec<f64>,
    pub seeds: Vec<u64>,
    pub world: WorldConfig,
    pub policy: MixPolicy,
    pub k_range: KRange,
    pub trainer: TrainerConfig,
    pub loss: LossConfig,
    pub n_bins: usize,
    pub focal_normalization: FocalNormalization,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            height: 48,
            width: 64,
            base_focal: 64.0,
            train_scenes: 600,
            test_scenes: 48,
            test_focal_factors: vec![0.75, 1.3, 1.0],
            seeds: vec![0, 1, 2],
            world: WorldConfig::default(),
            policy: MixPolicy::default(),
            k_range: KRange::default(),
            trainer: TrainerConfig {
                base_lr: 0.01,
                epochs: 5,
                batch_size: 4,
                ..TrainerConfig::default()
            },
            loss: LossConfig::default(),
            n_bins: 64,
            focal_normalization: FocalNormalization::ImageWidth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocalComparison {
    pub focal_factor: f64,
    pub with_focal: MetricsReport,
    pub ablated: MetricsReport,
}

impl FocalComparison {
    /// `1 - rmse_with / rmse_ablated`.
    pub fn rmse_improvement(&self) -> f64 {
        1.0 - self.with_focal.rmse / self.ablated.rmse
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub comparisons: Vec<FocalComparison>,
    /// Ablated predictions are bit-identical when only the focal length changes.
    pub ablated_focal_invariant: bool,
    /// Mean absolute change of the with-focal prediction under a 10% focal perturbation.
    pub with_focal_sensitivity: f64,
    pub final_loss_with: f64,
    pub final_loss_ablated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedOutcome>,
}

impl ExperimentReport {
    /// Seed-averaged `(rmse_with, rmse_ablated)` for one focal factor.
    pub fn mean_rmse(&self, focal_factor: f64) -> Option<(f64, f64)> {
        let rows: Vec<&FocalComparison> = self
            .seeds
            .iter()
            .filter_map(|s| s.comparisons.iter().find(|c| c.focal_factor == focal_factor))
            .collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        Some((
            rows.iter().map(|c| c.with_focal.rmse).sum::<f64>() / n,
            rows.iter().map(|c| c.ablated.rmse).sum::<f64>() / n,
        ))
    }
}

fn camera(cfg: &ExperimentConfig, factor: f64) -> Result<CameraIntrinsics> {
    CameraIntrinsics::centered(cfg.base_focal * factor, cfg.height, cfg.width)
}

/// Training set: scenes rendered at the base focal, then augmented.
pub fn training_set(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<RgbdSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cam = camera(cfg, 1.0)?;
    let originals = (0..cfg.train_scenes)
        .map(|i| render_plane(&random_plane(&mut rng, &cfg.world), &cam, cfg.height, cfg.width, format!("train{i}")))
        .collect::<Result<Vec<_>>>()?;
    let policy = MixPolicy {
        seed: rng.random(),
        ..cfg.policy
    };
    let recipes = plan_recipes(originals.len(), &policy, cfg.k_range)?;
    originals
        .iter()
        .zip(&recipes)
        .map(|(s, r)| apply_recipe(s, r, false))
        .collect()
}

/// The same held-out scenes rendered at `base_focal * factor`.
pub fn test_set(cfg: &ExperimentConfig, seed: u64, factor: f64) -> Result<Vec<RgbdSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57_5eed);
    let cam = camera(cfg, factor)?;
    (0..cfg.test_scenes)
        .map(|i| render_plane(&random_plane(&mut rng, &cfg.world), &cam, cfg.height, cfg.width, format!("test{i}")))
        .collect()
}

fn model_config(cfg: &ExperimentConfig, ablate: bool) -> ModelConfig {
    ModelConfig {
        n_bins: cfg.n_bins,
        focal_normalization: cfg.focal_normalization,
        ablate_focal: ablate,
        ..ModelConfig::default()
    }
}

fn to_training(samples: &[RgbdSample]) -> Result<Vec<TrainingSample>> {
    samples.par_iter().map(TrainingSample::from_rgbd).collect()
}

/// Pooled metrics of `model` on `samples`.
pub fn evaluate_model(model: &FocalDepthModel, samples: &[TrainingSample]) -> Result<MetricsReport> {
    let reports = samples
        .par_iter()
        .map(|s| evaluate(&model.predict(&s.input)?, &s.gt, &s.mask, DEFAULT_DEPTH_CAP))
        .collect::<Result<Vec<_>>>()?;
    aggregate(&reports)
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
    let train_data = to_training(&training_set(cfg, seed)?)?;
    let trainer = TrainerConfig { seed, ..cfg.trainer };
    let fit = |ablate: bool| -> Result<(FocalDepthModel, f64)> {
        let model = FocalDepthModel::new(model_config(cfg, ablate), seed)?;
        let out = train(model, &train_data, &trainer, &cfg.loss)?;
        let last = out.losses.last().map_or(f64::NAN, |l| l.loss);
        Ok((out.model, last))
    };
    let (with_model, final_loss_with) = fit(false)?;
    let (ablated_model, final_loss_ablated) = fit(true)?;

    let mut comparisons = Vec::new();
    let mut ablated_focal_invariant = true;
    let mut sensitivity = 0.0;
    for &factor in &cfg.test_focal_factors {
        let test = to_training(&test_set(cfg, seed, factor)?)?;
        comparisons.push(FocalComparison {
            focal_factor: factor,
            with_focal: evaluate_model(&with_model, &test)?,
            ablated: evaluate_model(&ablated_model, &test)?,
        });
        for s in &test {
            let moved = s.input.with_focal(s.input.focal_px * 1.1);
            ablated_focal_invariant &= ablated_model.predict(&s.input)? == ablated_model.predict(&moved)?;
            let (a, b) = (with_model.predict(&s.input)?, with_model.predict(&moved)?);
            sensitivity += (b.mean() - a.mean()).abs() / (test.len() * cfg.test_focal_factors.len()) as f64;
        }
    }
    Ok(SeedOutcome {
        seed,
        comparisons,
        ablated_focal_invariant,
        with_focal_sensitivity: sensitivity,
        final_loss_with,
        final_loss_ablated,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let seeds = cfg.seeds.iter().map(|&s| run_seed(cfg, s)).collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        config: cfg.clone(),
        seeds,
    })
}
