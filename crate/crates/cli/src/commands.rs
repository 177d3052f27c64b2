use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use focaldepth::augment::{augment_dataset, AugmentMode, DatasetOptions, KRange, MixPolicy};
use focaldepth::camera::{backproject_indexed, deformation_ratio, export_ply, CameraIntrinsics, WorldPoint};
use focaldepth::dataset_io::{write_sample, AugmentationTag, Manifest, RgbdSample};
use focaldepth::experiment::{run_experiment, ExperimentConfig};
use focaldepth::focal_net::{
    gradcheck, train, Checkpoint, FocalDepthModel, FocalNormalization, GradcheckReport, LossConfig, ModelConfig,
    SampleInput, TrainerConfig, TrainingSample,
};
use focaldepth::metrics::{aggregate_with, evaluate, Aggregation, MetricsReport};
use focaldepth::numerics::Plane2D;
use focaldepth::synthetic::{random_plane, render_plane, WorldConfig};

use crate::{
    AugmentArgs, Cli, CliError, Command, EvalArgs, ExperimentArgs, GradcheckArgs, Normalization, PredictArgs,
    ReconstructArgs, SynthArgs, ToyTrainArgs, SCHEMA_VERSION,
};

type CmdResult = Result<(), CliError>;

pub fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Augment(a) => augment(cli, a),
        Command::Eval(a) => eval(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::ToyTrain(a) => toy_train(cli, a),
        Command::Predict(a) => predict(a),
        Command::Gradcheck(a) => run_gradcheck(cli, a),
        Command::Synth(a) => synth(cli, a),
        Command::Experiment(a) => experiment(cli, a),
    }
}

/// Parses `a:b` into two numbers.
pub fn parse_pair(flag: &str, text: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::usage(format!("--{flag} expects `a:b`, got `{text}`"));
    let (a, b) = text.split_once(':').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::data(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))
}

fn load_manifest(path: &Path) -> Result<Manifest, CliError> {
    let m = Manifest::load(path)?;
    log::info!("loaded {} records from {}", m.len(), path.display());
    Ok(m)
}

fn load_all(manifest: &Manifest) -> Result<Vec<RgbdSample>, CliError> {
    (0..manifest.len())
        .into_par_iter()
        .map(|i| manifest.load_sample(i))
        .collect::<focaldepth::Result<Vec<_>>>()
        .map_err(CliError::from)
}

#[derive(Serialize)]
struct FailureEntry<'a> {
    source_id: &'a str,
    message: &'a str,
}

#[derive(Serialize)]
struct AugmentReport<'a> {
    schema_version: u32,
    inputs: usize,
    outputs: usize,
    focal_change: usize,
    depth_rescale: usize,
    clamped_pixels: usize,
    failures: Vec<FailureEntry<'a>>,
}

fn augment(cli: &Cli, a: &AugmentArgs) -> CmdResult {
    let (fc, dr) = parse_pair("ratio", &a.ratio)?;
    let total = fc + dr;
    if !(fc >= 0.0 && dr >= 0.0 && total > 0.0) {
        return Err(CliError::usage(format!("--ratio needs non-negative parts with a positive sum, got `{}`", a.ratio)));
    }
    let policy = MixPolicy::new(fc / total, dr / total, cli.seed)?;
    let options = DatasetOptions {
        k_range: KRange {
            min: a.k_min,
            max: a.k_max,
        },
        keep_originals: a.keep_originals,
        bilinear_color: a.bilinear_color,
        jobs: cli.jobs,
    };
    let manifest = load_manifest(&a.manifest)?;
    let summary = augment_dataset(&manifest, &policy, &options, &a.out)?;
    summary.manifest.save(&a.out.join("manifest.jsonl"))?;
    let report = AugmentReport {
        schema_version: SCHEMA_VERSION,
        inputs: manifest.len(),
        outputs: summary.manifest.len(),
        focal_change: summary.count(AugmentMode::FocalChange),
        depth_rescale: summary.count(AugmentMode::DepthRescale),
        clamped_pixels: summary.clamped_pixels,
        failures: summary
            .failures
            .iter()
            .map(|f| FailureEntry {
                source_id: &f.source_id,
                message: &f.message,
            })
            .collect(),
    };
    write_json(&a.out.join("augment_report.json"), &report)?;
    if summary.clamped_pixels > 0 {
        log::warn!("{} depth values clamped to the 16-bit range", summary.clamped_pixels);
    }
    println!(
        "augmented {} samples: {} focal-change, {} depth-rescale, {} failed",
        manifest.len(),
        report.focal_change,
        report.depth_rescale,
        report.failures.len()
    );
    if !summary.failures.is_empty() {
        for f in &summary.failures {
            eprintln!("  {}: {}", f.source_id, f.message);
        }
        return Err(CliError::data(format!("{} of {} samples failed", summary.failures.len(), manifest.len())));
    }
    Ok(())
}

/// One CSV row of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct MetricsRow {
    pub source_id: String,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub abs_rel: f64,
    pub rmse: f64,
    pub log10_err: f64,
    pub silog: f64,
    pub valid_pixels: usize,
}

impl MetricsRow {
    fn new(source_id: &str, r: &MetricsReport) -> Self {
        Self {
            source_id: source_id.into(),
            delta1: r.delta1,
            delta2: r.delta2,
            delta3: r.delta3,
            abs_rel: r.abs_rel,
            rmse: r.rmse,
            log10_err: r.log10_err,
            silog: r.silog,
            valid_pixels: r.valid_pixels,
        }
    }
}

/// Source id of the aggregate row in evaluation CSVs.
pub const OVERALL_ROW: &str = "__overall__";

#[derive(Serialize)]
struct EvalReport {
    schema_version: u32,
    aggregation: Aggregation,
    depth_cap: (f64, f64),
    overall: MetricsReport,
    samples: Vec<MetricsRow>,
    skipped: Vec<String>,
}

fn eval(a: &EvalArgs) -> CmdResult {
    let cap = parse_pair("cap", &a.cap)?;
    let aggregation = if a.per_image { Aggregation::PerImage } else { Aggregation::Pooled };
    let gt = load_manifest(&a.gt_manifest)?;
    let pred = load_manifest(&a.pred_manifest)?;
    let pred_index: HashMap<&str, usize> =
        pred.records.iter().enumerate().map(|(i, r)| (r.source_id.as_str(), i)).collect();
    let pairs = gt
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            pred_index
                .get(r.source_id.as_str())
                .map(|&j| (i, j))
                .ok_or_else(|| CliError::data(format!("no prediction for `{}`", r.source_id)))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let results = pairs
        .par_iter()
        .map(|&(i, j)| -> focaldepth::Result<Option<MetricsReport>> {
            let g = gt.load_sample(i)?;
            let p = pred.load_sample(j)?;
            match evaluate(&p.depth, &g.depth, &g.valid_mask, cap) {
                Ok(r) => Ok(Some(r)),
                Err(focaldepth::Error::EmptyEvaluation) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<focaldepth::Result<Vec<_>>>()?;

    let mut samples = Vec::new();
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for (&(i, _), r) in pairs.iter().zip(results) {
        let id = &gt.records[i].source_id;
        match r {
            Some(r) => {
                samples.push(MetricsRow::new(id, &r));
                reports.push(r);
            }
            None => {
                log::warn!("`{id}` has no valid pixels inside the depth cap; skipped");
                skipped.push(id.clone());
            }
        }
    }
    if reports.is_empty() {
        return Err(CliError::data("no sample has valid pixels to evaluate"));
    }
    let overall = aggregate_with(&reports, aggregation)?;

    create_dir(&a.out)?;
    let csv_path = a.out.join("eval_report.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| CliError::data(e.to_string()))?;
    for row in samples.iter().cloned().chain([MetricsRow::new(OVERALL_ROW, &overall)]) {
        w.serialize(row).map_err(|e| CliError::data(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::data(e.to_string()))?;
    let report = EvalReport {
        schema_version: SCHEMA_VERSION,
        aggregation,
        depth_cap: cap,
        overall,
        samples,
        skipped,
    };
    write_json(&a.out.join("eval_report.json"), &report)?;
    println!(
        "delta1 {:.4}  delta2 {:.4}  delta3 {:.4}  abs_rel {:.4}  rmse {:.4}  log10 {:.4}  silog {:.4}  ({} samples, {} pixels)",
        overall.delta1,
        overall.delta2,
        overall.delta3,
        overall.abs_rel,
        overall.rmse,
        overall.log10_err,
        overall.silog,
        report.samples.len(),
        overall.valid_pixels
    );
    Ok(())
}

#[derive(Serialize)]
struct ReconstructEntry {
    source_id: String,
    ply: String,
    vertices: usize,
    fx: f64,
    fy: f64,
    /// Lateral stretch relative to the recorded intrinsics.
    deformation_ratio: Option<f64>,
}

#[derive(Serialize)]
struct ReconstructReport {
    schema_version: u32,
    samples: Vec<ReconstructEntry>,
}

fn camera_for(sample: &RgbdSample, a: &ReconstructArgs) -> Result<CameraIntrinsics, CliError> {
    let cam = sample.intrinsics;
    let factor = match (a.override_fx, sample.augmentation) {
        (Some(fx), _) => fx / cam.fx,
        (None, AugmentationTag::FocalChange(k)) if a.uncorrected => k,
        _ => 1.0,
    };
    let out = cam.with_focal_scaled(factor);
    out.validate()?;
    Ok(out)
}

fn reconstruct(a: &ReconstructArgs) -> CmdResult {
    if let Some(fx) = a.override_fx {
        if !(fx > 0.0 && fx.is_finite()) {
            return Err(CliError::usage(format!("--override-fx must be positive, got {fx}")));
        }
    }
    let manifest = load_manifest(&a.manifest)?;
    create_dir(&a.out_dir)?;
    let entries = (0..manifest.len())
        .into_par_iter()
        .map(|i| -> Result<ReconstructEntry, CliError> {
            let sample = manifest.load_sample(i)?;
            let cam = camera_for(&sample, a)?;
            let indexed = backproject_indexed(&sample.depth, &sample.valid_mask, &cam)?;
            let points: Vec<WorldPoint> = indexed.iter().map(|p| p.point).collect();
            let colors: Vec<[u8; 3]> =
                indexed.iter().map(|p| sample.rgb.get_pixel(p.col as u32, p.row as u32).0).collect();
            let name = format!("{}.ply", focaldepth::dataset_io::file_stem(&sample.source_id));
            export_ply(&points, Some(&colors), &a.out_dir.join(&name))?;
            let ratio = if points.is_empty() {
                log::warn!("`{}` has an empty mask; wrote an empty point cloud", sample.source_id);
                None
            } else {
                let reference = backproject_indexed(&sample.depth, &sample.valid_mask, &sample.intrinsics)?;
                let reference: Vec<WorldPoint> = reference.iter().map(|p| p.point).collect();
                deformation_ratio(&reference, &points).ok()
            };
            Ok(ReconstructEntry {
                source_id: sample.source_id,
                ply: name,
                vertices: points.len(),
                fx: cam.fx,
                fy: cam.fy,
                deformation_ratio: ratio,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    for e in &entries {
        match e.deformation_ratio {
            Some(r) => println!("{}: {} points, deformation_ratio {r:.4}", e.source_id, e.vertices),
            None => println!("{}: {} points, deformation_ratio n/a", e.source_id, e.vertices),
        }
    }
    write_json(
        &a.out_dir.join("reconstruct_report.json"),
        &ReconstructReport {
            schema_version: SCHEMA_VERSION,
            samples: entries,
        },
    )
}

fn training_samples(samples: &[RgbdSample]) -> Result<Vec<TrainingSample>, CliError> {
    samples
        .par_iter()
        .map(TrainingSample::from_rgbd)
        .collect::<focaldepth::Result<Vec<_>>>()
        .map_err(CliError::from)
}

fn evaluate_all(model: &FocalDepthModel, samples: &[TrainingSample]) -> Result<MetricsReport, CliError> {
    let reports = samples
        .par_iter()
        .map(|s| model.predict(&s.input).and_then(|p| evaluate(&p, &s.gt, &s.mask, focaldepth::metrics::DEFAULT_DEPTH_CAP)))
        .collect::<focaldepth::Result<Vec<_>>>()?;
    if reports.iter().any(|r| !r.rmse.is_finite()) {
        return Err(CliError::numerical("non-finite evaluation metric"));
    }
    Ok(aggregate_with(&reports, Aggregation::Pooled)?)
}

#[derive(Serialize)]
struct TrainReport {
    schema_version: u32,
    ablate_focal: bool,
    steps: usize,
    final_loss: Option<f64>,
    eval_manifest: String,
    eval: MetricsReport,
}

fn toy_train(cli: &Cli, a: &ToyTrainArgs) -> CmdResult {
    let trainer = TrainerConfig {
        base_lr: a.base_lr,
        backbone_lr_ratio: a.backbone_ratio,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: cli.seed,
        ..TrainerConfig::default()
    };
    trainer.validate()?;
    let config = ModelConfig {
        n_bins: a.bins,
        focal_normalization: match a.focal_normalization {
            Normalization::Raw => FocalNormalization::Raw,
            Normalization::ImageWidth => FocalNormalization::ImageWidth,
        },
        ablate_focal: a.ablate_focal,
        ..ModelConfig::default()
    };
    let model = FocalDepthModel::new(config, cli.seed)?;
    let data = training_samples(&load_all(&load_manifest(&a.manifest)?)?)?;
    if data.is_empty() {
        return Err(CliError::data("training manifest is empty"));
    }
    log::info!("training {} samples for {} epochs", data.len(), a.epochs);
    let out = train(model, &data, &trainer, &LossConfig::default())?;

    create_dir(&a.out_dir)?;
    Checkpoint::from_model(&out.model).save(&a.out_dir.join("checkpoint.json"))?;
    let curve = a.out_dir.join("loss_curve.csv");
    let mut w = csv::Writer::from_path(&curve).map_err(|e| CliError::data(e.to_string()))?;
    w.write_record(["step", "loss"]).map_err(|e| CliError::data(e.to_string()))?;
    for l in &out.losses {
        w.write_record([l.step.to_string(), l.loss.to_string()])
            .map_err(|e| CliError::data(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::data(e.to_string()))?;

    let eval_path = a.eval_manifest.as_ref().unwrap_or(&a.manifest);
    let eval_data = match &a.eval_manifest {
        Some(p) => training_samples(&load_all(&load_manifest(p)?)?)?,
        None => data,
    };
    let metrics = evaluate_all(&out.model, &eval_data)?;
    let report = TrainReport {
        schema_version: SCHEMA_VERSION,
        ablate_focal: a.ablate_focal,
        steps: out.losses.len(),
        final_loss: out.losses.last().map(|l| l.loss),
        eval_manifest: eval_path.display().to_string(),
        eval: metrics,
    };
    write_json(&a.out_dir.join("train_report.json"), &report)?;
    println!(
        "trained {} steps, final loss {:.4}; eval rmse {:.4}, delta1 {:.4}",
        report.steps,
        report.final_loss.unwrap_or(f64::NAN),
        metrics.rmse,
        metrics.delta1
    );
    Ok(())
}

fn predict(a: &PredictArgs) -> CmdResult {
    let model = Checkpoint::load(&a.checkpoint)?.into_model()?;
    let manifest = load_manifest(&a.manifest)?;
    create_dir(&a.out)?;
    let records = (0..manifest.len())
        .into_par_iter()
        .map(|i| -> focaldepth::Result<_> {
            let s = manifest.load_sample(i)?;
            let depth = model.predict(&SampleInput::from_image(&s.rgb, s.intrinsics.fx)?)?;
            let (h, w) = depth.dims();
            let pred = RgbdSample {
                depth,
                valid_mask: Plane2D::filled(h, w, 1.0),
                ..s
            };
            Ok(write_sample(&pred, &a.out, manifest.records[i].depth_scale)?.record)
        })
        .collect::<focaldepth::Result<Vec<_>>>()?;
    Manifest::new(&a.out, records)?.save(&a.out.join("manifest.jsonl"))?;
    println!("wrote {} predictions to {}", manifest.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct GradcheckSummary {
    schema_version: u32,
    tolerance: f64,
    passed: bool,
    max_rel_error: f64,
    runs: Vec<GradcheckReport>,
}

fn run_gradcheck(cli: &Cli, a: &GradcheckArgs) -> CmdResult {
    if a.seeds == 0 {
        return Err(CliError::usage("--seeds must be at least 1"));
    }
    let runs = (cli.seed..cli.seed + a.seeds)
        .map(gradcheck)
        .collect::<focaldepth::Result<Vec<_>>>()?;
    let max = runs.iter().map(GradcheckReport::max_rel_error).fold(0.0, f64::max);
    let passed = runs.iter().all(|r| r.passed(a.tolerance));
    let summary = GradcheckSummary {
        schema_version: SCHEMA_VERSION,
        tolerance: a.tolerance,
        passed,
        max_rel_error: max,
        runs,
    };
    match &a.out {
        Some(p) => write_json(p, &summary)?,
        None => println!("{}", serde_json::to_string_pretty(&summary).map_err(|e| CliError::data(e.to_string()))?),
    }
    eprintln!("gradcheck {}: max relative error {max:.3e} (tolerance {:e})", if passed { "PASS" } else { "FAIL" }, a.tolerance);
    if passed {
        Ok(())
    } else {
        Err(CliError::numerical("gradient check failed"))
    }
}

fn synth(cli: &Cli, a: &SynthArgs) -> CmdResult {
    let cam = CameraIntrinsics::centered(a.focal, a.height, a.width)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let world = WorldConfig::default();
    let planes: Vec<_> = (0..a.count).map(|_| random_plane(&mut rng, &world)).collect();
    let records = planes
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let s = render_plane(p, &cam, a.height, a.width, format!("scene{i:04}"))?;
            Ok(write_sample(&s, &a.out, focaldepth::dataset_io::DEFAULT_DEPTH_SCALE)?.record)
        })
        .collect::<focaldepth::Result<Vec<_>>>()?;
    Manifest::new(&a.out, records)?.save(&a.out.join("manifest.jsonl"))?;
    println!("rendered {} scenes to {}", a.count, a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct ExperimentRow {
    seed: u64,
    focal_factor: f64,
    rmse_with_focal: f64,
    rmse_ablated: f64,
    improvement: f64,
}

fn experiment(cli: &Cli, a: &ExperimentArgs) -> CmdResult {
    let defaults = ExperimentConfig::default();
    let cfg = ExperimentConfig {
        seeds: (cli.seed..cli.seed + a.seeds).collect(),
        train_scenes: a.train_scenes.unwrap_or(defaults.train_scenes),
        trainer: TrainerConfig {
            epochs: a.epochs.unwrap_or(defaults.trainer.epochs),
            ..defaults.trainer
        },
        ..defaults
    };
    log::info!("experiment config: {}", serde_json::to_string(&cfg).unwrap_or_default());
    let report = run_experiment(&cfg)?;
    create_dir(&a.out_dir)?;
    write_json(&a.out_dir.join("experiment.json"), &report)?;
    let mut w = csv::Writer::from_path(a.out_dir.join("experiment.csv")).map_err(|e| CliError::data(e.to_string()))?;
    for s in &report.seeds {
        for c in &s.comparisons {
            w.serialize(ExperimentRow {
                seed: s.seed,
                focal_factor: c.focal_factor,
                rmse_with_focal: c.with_focal.rmse,
                rmse_ablated: c.ablated.rmse,
                improvement: c.rmse_improvement(),
            })
            .map_err(|e| CliError::data(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| CliError::data(e.to_string()))?;
    println!("focal factor  rmse with  rmse ablated  improvement");
    for &f in &cfg.test_focal_factors {
        if let Some((with, abl)) = report.mean_rmse(f) {
            println!("{f:>12}  {with:>9.4}  {abl:>12.4}  {:>10.1}%", 100.0 * (1.0 - with / abl));
        }
    }
    Ok(())
}
