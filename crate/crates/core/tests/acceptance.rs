//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use focaldepth::augment::{
    augment_dataset, augment_depth_rescale, augment_focal_change, plan_recipes, source_pixel_map, AugmentMode,
    DatasetOptions, KRange, MixPolicy,
};
use focaldepth::camera::{backproject_indexed, deformation_ratio, unproject, CameraIntrinsics, PixelCoord, WorldPoint};
use focaldepth::dataset_io::{write_sample, Manifest, RgbdSample};
use focaldepth::experiment::{run_experiment, ExperimentConfig, ExperimentReport};
use focaldepth::focal_net::{
    gradcheck, gradcheck_with, make_focal_pyramid, train, AdamW, FocalDepthModel, FocalEncodingMatrix,
    FocalNormalization, GradcheckOptions, LossConfig, ModelConfig, ParamGroup, SampleInput, TrainerConfig,
    TrainingSample,
};
use focaldepth::metrics::{evaluate, DEFAULT_DEPTH_CAP, PRED_FLOOR};
use focaldepth::numerics::{AdjointFault, FeatureStack, OpKind, Plane2D};
use focaldepth::synthetic::{random_plane, render_plane, TexturedPlane, WorldConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(elapsed: Duration, limit_s: f64) -> Check {
    let s = elapsed.as_secs_f64();
    ensure!(s < limit_s, "runtime {s:.2}s exceeds {limit_s}s");
    Ok(format!("{s:.2}s < {limit_s}s"))
}

fn slanted_scene(h: usize, w: usize, f: f64) -> RgbdSample {
    let plane = TexturedPlane {
        slope_x: 0.35,
        slope_y: -0.2,
        phase_x: 0.4,
        phase_y: 1.1,
        ..TexturedPlane::fronto_parallel(2.5, 0.3)
    };
    let cam = CameraIntrinsics::centered(f, h, w).unwrap();
    render_plane(&plane, &cam, h, w, "scene").unwrap()
}

fn world_point(s: &RgbdSample, row: usize, col: usize) -> WorldPoint {
    let pc = PixelCoord::from_image(col as f64, row as f64, &s.intrinsics);
    unproject(pc, s.depth.get(row, col), &s.intrinsics)
}

fn focal_change_geometry() -> Check {
    let start = Instant::now();
    let (h, w, f) = (120, 160, 150.0);
    let src = slanted_scene(h, w, f);
    let mut details = Vec::new();
    for k in [0.7, 0.8, 0.9] {
        let out = augment_focal_change(&src, k).map_err(|e| e.to_string())?;
        ensure!(
            (out.intrinsics.fx - f / k).abs() < 1e-9 && (out.intrinsics.fy - f / k).abs() < 1e-9,
            "k={k}: focal {} is not fx/k",
            out.intrinsics.fx
        );
        let (rows, cols) = source_pixel_map(h, w, &src.intrinsics, k).map_err(|e| e.to_string())?;
        let corrected = backproject_indexed(&out.depth, &out.valid_mask, &out.intrinsics).map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        let mut originals = Vec::with_capacity(corrected.len());
        for p in &corrected {
            let truth = world_point(&src, rows[p.row], cols[p.col]);
            ensure!(p.point.z == truth.z, "k={k}: depth changed at ({}, {})", p.row, p.col);
            let lateral = (p.point.x - truth.x).hypot(p.point.y - truth.y);
            // One source pixel spans z / f meters at depth z.
            worst = worst.max(lateral / (truth.z / f));
            originals.push(truth);
        }
        ensure!(worst <= 1.0, "k={k}: lateral mismatch {worst:.3} px exceeds one pixel");
        let uncorrected_cam = CameraIntrinsics { fx: f, fy: f, ..out.intrinsics };
        let uncorrected: Vec<WorldPoint> = backproject_indexed(&out.depth, &out.valid_mask, &uncorrected_cam)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|p| p.point)
            .collect();
        let ratio = deformation_ratio(&originals, &uncorrected).map_err(|e| e.to_string())?;
        ensure!(
            (ratio * k - 1.0).abs() <= 0.02,
            "k={k}: uncorrected deformation ratio {ratio:.4} not within 2% of 1/k = {:.4}",
            1.0 / k
        );
        details.push(format!("k={k}: max lateral {worst:.3}px, ratio {ratio:.4} (1/k {:.4})", 1.0 / k));
    }
    let t = within(start.elapsed(), 5.0)?;
    Ok(format!("{}; {t}", details.join("; ")))
}

fn depth_rescale_geometry() -> Check {
    let start = Instant::now();
    let (h, w, f) = (40, 80, 70.0);
    let mut worst_uniform = 0.0f64;
    let mut worst_vs_fc = 0.0f64;
    let mut worst_lateral = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in [0.5, 0.75, 0.8] {
        // Grid-aligned: k h and k w are integers.
        assert_eq!((k * h as f64).fract(), 0.0);
        for _ in 0..5 {
            let cam = CameraIntrinsics::centered(f, h, w).unwrap();
            let flat = TexturedPlane {
                phase_x: rng.random_range(0.0..6.0),
                ..TexturedPlane::fronto_parallel(rng.random_range(1.0..5.0), 0.3)
            };
            let src = render_plane(&flat, &cam, h, w, "flat").map_err(|e| e.to_string())?;
            let out = augment_depth_rescale(&src, k).map_err(|e| e.to_string())?;
            ensure!(out.intrinsics == src.intrinsics, "intrinsics changed");
            let a = backproject_indexed(&out.depth, &out.valid_mask, &out.intrinsics).map_err(|e| e.to_string())?;
            let b = backproject_indexed(&src.depth, &src.valid_mask, &src.intrinsics).map_err(|e| e.to_string())?;
            for (pa, pb) in a.iter().zip(&b) {
                let expect = pb.point.scaled(k);
                let err = ((pa.point.x - expect.x).powi(2) + (pa.point.y - expect.y).powi(2) + (pa.point.z - expect.z).powi(2)).sqrt()
                    / (expect.x.powi(2) + expect.y.powi(2) + expect.z.powi(2)).sqrt();
                worst_uniform = worst_uniform.max(err);
            }
        }
        // Any scene: the rescaled cloud is the focal-changed content scaled by k.
        let src = slanted_scene(h, w, f);
        let dr = augment_depth_rescale(&src, k).map_err(|e| e.to_string())?;
        let fc = augment_focal_change(&src, k).map_err(|e| e.to_string())?;
        let a = backproject_indexed(&dr.depth, &dr.valid_mask, &dr.intrinsics).map_err(|e| e.to_string())?;
        let b = backproject_indexed(&fc.depth, &fc.valid_mask, &src.intrinsics).map_err(|e| e.to_string())?;
        for (pa, pb) in a.iter().zip(&b) {
            let expect = pb.point.scaled(k);
            worst_vs_fc = worst_vs_fc.max((pa.point.z - expect.z).abs().max((pa.point.x - expect.x).abs()).max((pa.point.y - expect.y).abs()) / expect.z);
        }
        // Matched by content: depth scales by k, lateral position within one pixel.
        let (rows, cols) = source_pixel_map(h, w, &src.intrinsics, k).map_err(|e| e.to_string())?;
        for p in &a {
            let truth = world_point(&src, rows[p.row], cols[p.col]);
            ensure!(p.point.z == k * truth.z, "content-matched depth is not k z");
            worst_lateral = worst_lateral.max((p.point.x - truth.x).hypot(p.point.y - truth.y) / (p.point.z / f));
        }
    }
    ensure!(worst_uniform < 1e-9, "per-pixel uniform scaling error {worst_uniform:e}");
    ensure!(worst_vs_fc < 1e-9, "scaling relative to focal-changed cloud {worst_vs_fc:e}");
    ensure!(worst_lateral <= 1.0, "content-matched lateral offset {worst_lateral:.3} px");
    let t = within(start.elapsed(), 5.0)?;
    Ok(format!(
        "per-pixel k-scaling rel err {worst_uniform:.1e}; vs focal-changed cloud {worst_vs_fc:.1e}; content-matched lateral {worst_lateral:.3}px; {t}"
    ))
}

fn sample_bytes_equal(a: &RgbdSample, b: &RgbdSample) -> bool {
    let bits = |p: &Plane2D| p.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    a.rgb.as_raw() == b.rgb.as_raw() && bits(&a.depth) == bits(&b.depth) && bits(&a.valid_mask) == bits(&b.valid_mask)
}

fn tree_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap());
    }
    out
}

fn augmentation_identity_and_determinism() -> Check {
    let src = slanted_scene(36, 48, 40.0);
    for out in [augment_focal_change(&src, 1.0), augment_depth_rescale(&src, 1.0)] {
        let out = out.map_err(|e| e.to_string())?;
        ensure!(sample_bytes_equal(&src, &out), "k=1 changed sample content");
        ensure!(out.intrinsics == src.intrinsics, "k=1 changed intrinsics");
    }

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = tmp.path().join("input");
    std::fs::create_dir_all(&input).unwrap();
    let cam = CameraIntrinsics::centered(40.0, 36, 48).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut records = Vec::new();
    for i in 0..10 {
        let s = render_plane(&random_plane(&mut rng, &WorldConfig::default()), &cam, 36, 48, format!("s{i}")).unwrap();
        records.push(write_sample(&s, &input, 1000.0).map_err(|e| e.to_string())?.record);
    }
    let manifest = Manifest::new(&input, records).map_err(|e| e.to_string())?;
    let policy = MixPolicy { seed: 77, ..MixPolicy::default() };
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let summary = augment_dataset(&manifest, &policy, &DatasetOptions::default(), &out).map_err(|e| e.to_string())?;
        ensure!(summary.failures.is_empty(), "augmentation failures: {:?}", summary.failures);
        ensure!(
            summary.count(AugmentMode::FocalChange) == 6 && summary.count(AugmentMode::DepthRescale) == 4,
            "N=10 split is not 6/4"
        );
        summary.manifest.save(&out.join("manifest.jsonl")).map_err(|e| e.to_string())?;
        trees.push(tree_bytes(&out));
    }
    ensure!(trees[0] == trees[1], "same seed produced different trees");
    ensure!(trees[0].len() == 21, "expected 20 files and a manifest, got {}", trees[0].len());

    for n in (5..=100).step_by(5) {
        let recipes = plan_recipes(n, &MixPolicy::default(), KRange::default()).map_err(|e| e.to_string())?;
        let fc = recipes.iter().filter(|r| r.mode == AugmentMode::FocalChange).count();
        ensure!(fc * 5 == n * 3, "N={n}: {fc} focal-change samples");
    }
    Ok("k=1 no-op in both modes; reruns byte-identical (21 files); 60:40 exact for N=5..100 step 5".into())
}

/// Per-pixel loop, written independently of the library.
fn oracle(pred: &Plane2D, gt: &Plane2D, mask: &Plane2D) -> Option<[f64; 7]> {
    let cfg = LossConfig::default();
    let (mut n, mut d1, mut d2, mut d3, mut rel, mut sq, mut l10) = (0usize, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let mut logs = Vec::new();
    for r in 0..gt.height() {
        for c in 0..gt.width() {
            let (p, t) = (pred.get(r, c), gt.get(r, c));
            if mask.get(r, c) != 1.0 || !(t > 1e-3 && t <= 10.0) {
                continue;
            }
            n += 1;
            let pf = if p < PRED_FLOOR { PRED_FLOOR } else { p };
            let ratio = if pf / t > t / pf { pf / t } else { t / pf };
            if ratio < 1.25 {
                d1 += 1.0;
            }
            if ratio < 1.5625 {
                d2 += 1.0;
            }
            if ratio < 1.953125 {
                d3 += 1.0;
            }
            rel += (p - t).abs() / t;
            sq += (p - t).powi(2);
            l10 += (pf.log10() - t.log10()).abs();
            logs.push(pf.ln() - t.ln());
        }
    }
    if n == 0 {
        return None;
    }
    let nf = n as f64;
    let mg = logs.iter().sum::<f64>() / nf;
    let mg2 = logs.iter().map(|g| g * g).sum::<f64>() / nf;
    let silog = cfg.silog_alpha * (mg2 - cfg.silog_lambda * mg * mg).max(0.0).sqrt();
    Some([d1 / nf, d2 / nf, d3 / nf, rel / nf, (sq / nf).sqrt(), l10 / nf, silog])
}

fn metrics_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut compared = 0;
    while compared < 100 {
        let gt = Plane2D::from_fn(8, 8, |_, _| rng.random_range(0.0..12.0));
        let pred = Plane2D::from_fn(8, 8, |_, _| rng.random_range(0.0005..12.0));
        let mask = Plane2D::from_fn(8, 8, |_, _| if rng.random_bool(0.8) { 1.0 } else { 0.0 });
        let Some(o) = oracle(&pred, &gt, &mask) else { continue };
        let r = evaluate(&pred, &gt, &mask, DEFAULT_DEPTH_CAP).map_err(|e| e.to_string())?;
        let got = [r.delta1, r.delta2, r.delta3, r.abs_rel, r.rmse, r.log10_err, r.silog];
        for (a, b) in got.iter().zip(o) {
            worst = worst.max((a - b).abs());
        }
        compared += 1;
    }
    ensure!(worst <= 1e-12, "oracle mismatch {worst:e}");
    for _ in 0..1000 {
        let gt = Plane2D::from_fn(8, 8, |_, _| rng.random_range(0.01..5.0));
        let pred = Plane2D::from_fn(8, 8, |_, _| rng.random_range(0.01..5.0));
        let mask = Plane2D::filled(8, 8, 1.0);
        let c = rng.random_range(0.5..2.0);
        let r = evaluate(&pred, &gt, &mask, DEFAULT_DEPTH_CAP).map_err(|e| e.to_string())?;
        ensure!(r.delta1 <= r.delta2 && r.delta2 <= r.delta3, "delta monotonicity violated");
        let s = evaluate(&pred.scaled(c), &gt.scaled(c), &mask, DEFAULT_DEPTH_CAP).map_err(|e| e.to_string())?;
        ensure!(
            (r.delta1, r.delta2, r.delta3) == (s.delta1, s.delta2, s.delta3),
            "delta changed under common scaling by {c}"
        );
    }
    let t = within(start.elapsed(), 10.0)?;
    Ok(format!("100 random 8x8 instances, max deviation {worst:.1e}; 1000 monotonicity/scale checks; {t}"))
}

fn gradient_correctness() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let r = gradcheck(seed).map_err(|e| e.to_string())?;
        for t in &r.tensors {
            ensure!(t.max_rel_error < 1e-4, "seed {seed}, {}: relative error {:e}", t.name, t.max_rel_error);
        }
        worst = worst.max(r.max_rel_error());
    }
    let mutant = gradcheck_with(
        0,
        &GradcheckOptions {
            fault: Some(AdjointFault {
                kind: OpKind::BinCenters,
                factor: 1.05,
            }),
            ..GradcheckOptions::default()
        },
    )
    .map_err(|e| e.to_string())?;
    ensure!(!mutant.passed(1e-4), "a 5% adjoint error on bin centers went undetected");
    let t = within(start.elapsed(), 60.0)?;
    Ok(format!(
        "10 seeds, 14 tensors each, max rel err {worst:.2e}; mutant detected (rel err {:.2e}); {t}",
        mutant.max_rel_error()
    ))
}

fn focal_homogeneity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let m = FocalEncodingMatrix::seeded(seed);
        let f = rng.random_range(1.0..1000.0);
        let k = rng.random_range(0.1..10.0);
        let target = (rng.random_range(16..400), rng.random_range(16..520));
        let a = make_focal_pyramid(k * f, &m, target).map_err(|e| e.to_string())?;
        let b = make_focal_pyramid(f, &m, target).map_err(|e| e.to_string())?;
        for (la, lb) in a.levels().iter().zip(b.levels()) {
            for (&x, &y) in la.data().iter().zip(lb.data()) {
                worst = worst.max((x - k * y).abs() / x.abs().max(1.0));
            }
        }
    }
    ensure!(worst <= 1e-12, "homogeneity error {worst:e}");
    Ok(format!("50 random (M, f, k, size): max elementwise error {worst:.1e} (relative to max(1, |value|))"))
}

fn bin_head_contracts() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rgb = FeatureStack::new(3, 24, 32, (0..3 * 24 * 32).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let input = SampleInput::from_rgb(&rgb, 30.0).map_err(|e| e.to_string())?;
    let mut worst_sum = 0.0f64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let cfg = ModelConfig::default();
    for draw in 0..100 {
        let mut model = FocalDepthModel::new(cfg, draw).map_err(|e| e.to_string())?;
        let scale = rng.random_range(0.1..20.0);
        for name in ["head.weight", "head.bias", "head.bin_widths", "M"] {
            let p = model.parameter_mut(name).unwrap();
            p.value.data_mut().iter_mut().for_each(|x| *x = scale * rng.random_range(-1.0..1.0));
        }
        let probs = model.probabilities(&input).map_err(|e| e.to_string())?;
        let (c, h, w) = probs.shape();
        for px in 0..h * w {
            let s: f64 = (0..c).map(|ch| probs.channel(ch)[px]).sum();
            worst_sum = worst_sum.max((s - 1.0).abs());
        }
        let depth = model.predict(&input).map_err(|e| e.to_string())?;
        lo = lo.min(depth.min());
        hi = hi.max(depth.max());
    }
    ensure!(worst_sum <= 1e-9, "probabilities sum off by {worst_sum:e}");
    ensure!(lo >= cfg.d_min && hi <= cfg.d_max, "depth range [{lo}, {hi}] escapes [{}, {}]", cfg.d_min, cfg.d_max);
    Ok(format!("100 draws: max |sum p - 1| {worst_sum:.1e}; depth in [{lo:.4}, {hi:.4}]"))
}

fn learning_rate_grouping() -> Check {
    let ratio = 1.0 / 50.0;
    let cfg = TrainerConfig::default();
    let mut opt = AdamW::new(cfg.adamw(), &[1, 1]);
    let (theta, g) = (0.37, -0.81);
    let mut deltas = Vec::new();
    for step in 0..5 {
        opt.begin_step();
        let grad = g * (1.0 + step as f64);
        let head = opt
            .compute_update(0, &[theta], &[grad], cfg.base_lr, cfg.group_scale(ParamGroup::Head))
            .map_err(|e| e.to_string())?[0];
        let backbone = opt.compute_update(1, &[theta], &[grad], cfg.base_lr, ratio).map_err(|e| e.to_string())?[0];
        ensure!(backbone == ratio * head, "step {step}: backbone {backbone:e} != ratio x head {:e}", ratio * head);
        ensure!(backbone.abs() / head.abs() == ratio, "magnitude ratio drifted at step {step}");
        deltas.push(head);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let data: Vec<TrainingSample> = (0..6)
        .map(|i| {
            let rgb = FeatureStack::new(3, 16, 24, (0..3 * 16 * 24).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
            TrainingSample {
                source_id: format!("t{i}"),
                input: SampleInput::from_rgb(&rgb, 20.0).unwrap(),
                gt: Plane2D::filled(16, 24, 1.0 + 0.3 * i as f64),
                mask: Plane2D::filled(16, 24, 1.0),
            }
        })
        .collect();
    let model = FocalDepthModel::new(
        ModelConfig {
            n_bins: 16,
            focal_normalization: FocalNormalization::ImageWidth,
            ..ModelConfig::default()
        },
        1,
    )
    .map_err(|e| e.to_string())?;
    let frozen_cfg = TrainerConfig {
        backbone_lr_ratio: 0.0,
        base_lr: 1e-2,
        epochs: 2,
        ..TrainerConfig::default()
    };
    let out = train(model.clone(), &data, &frozen_cfg, &LossConfig::default()).map_err(|e| e.to_string())?;
    for (a, b) in model.parameters().iter().zip(out.model.parameters()) {
        match a.group {
            ParamGroup::Backbone => ensure!(a.value == b.value, "{} moved with ratio 0", a.name),
            ParamGroup::Head => ensure!(a.value != b.value, "{} did not train", a.name),
        }
    }
    Ok(format!(
        "5 steps: backbone update == (1/50) x head update bitwise (head deltas {:.3e}..{:.3e}); ratio 0 keeps all backbone tensors bit-identical",
        deltas.iter().cloned().fold(f64::INFINITY, f64::min),
        deltas.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    ))
}

fn experiment() -> &'static (Result<ExperimentReport, String>, Duration) {
    static CELL: OnceLock<(Result<ExperimentReport, String>, Duration)> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let r = run_experiment(&ExperimentConfig::default()).map_err(|e| e.to_string());
        (r, start.elapsed())
    })
}

fn generalization() -> Check {
    let (report, elapsed) = experiment();
    let report = report.as_ref().map_err(|e| e.clone())?;
    let mut details = Vec::new();
    for factor in [0.75, 1.3] {
        let (with, ablated) = report.mean_rmse(factor).ok_or("missing focal factor")?;
        let gain = 1.0 - with / ablated;
        ensure!(gain >= 0.10, "f0 x {factor}: RMSE {with:.4} vs ablated {ablated:.4}, only {:.1}% better", 100.0 * gain);
        details.push(format!("f0 x {factor}: RMSE {with:.4} vs {ablated:.4} ({:.1}% better)", 100.0 * gain));
    }
    for s in &report.seeds {
        ensure!(s.ablated_focal_invariant, "seed {}: ablated predictions depend on focal length", s.seed);
        ensure!(s.with_focal_sensitivity > 0.0, "seed {}: with-focal predictions ignore focal length", s.seed);
    }
    let min_sens = report.seeds.iter().map(|s| s.with_focal_sensitivity).fold(f64::INFINITY, f64::min);
    let t = within(*elapsed, 600.0)?;
    Ok(format!(
        "{}; ablated bit-identical under focal change, with-focal mean depth shift >= {min_sens:.3} m at +10% focal; {} seeds; {t}",
        details.join("; "),
        report.seeds.len()
    ))
}

fn seen_focal_non_regression() -> Check {
    let (report, _) = experiment();
    let report = report.as_ref().map_err(|e| e.clone())?;
    let (with, ablated) = report.mean_rmse(1.0).ok_or("missing base focal")?;
    ensure!(with <= 1.03 * ablated, "seen focal RMSE {with:.4} exceeds 1.03 x ablated {ablated:.4}");
    Ok(format!("seen focal RMSE {with:.4} vs ablated {ablated:.4} (ratio {:.3} <= 1.03)", with / ablated))
}

fn main() {
    let checks: [(&str, fn() -> Check); 10] = [
        ("focal-change geometry", focal_change_geometry),
        ("depth-rescale geometry", depth_rescale_geometry),
        ("augmentation identity and determinism", augmentation_identity_and_determinism),
        ("metrics oracle equivalence", metrics_oracle),
        ("gradient correctness", gradient_correctness),
        ("focal homogeneity", focal_homogeneity),
        ("bin-head contracts", bin_head_contracts),
        ("learning-rate grouping", learning_rate_grouping),
        ("unseen-focal generalization", generalization),
        ("seen-focal non-regression", seen_focal_non_regression),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("[PASS] {:>2}. {name}: {detail}", i + 1),
            Err(reason) => {
                failed += 1;
                println!("[FAIL] {:>2}. {name}: {reason}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
