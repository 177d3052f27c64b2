//! Focal-diversity augmentation.
//!
//! A sample of size `h x w` captured at focal `f` is center-cropped to
//! `round(k h) x round(k w)` and upsampled back to `h x w` with nearest-neighbor
//! sampling. Keeping the depth values yields a sample equivalent to a capture
//! at focal `f / k` ([`augment_focal_change`]); multiplying the depth values by
//! `k` yields one equivalent to a capture at the original focal
//! ([`augment_depth_rescale`]). A dataset is augmented with a stratified mix of
//! the two, 60:40 by default.

use std::path::Path;

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::dataset_io::{load_sample, write_sample, AugmentationTag, Manifest, RgbdSample};
use crate::error::{Error, Result};
use crate::numerics::{linear_taps, nearest_indices, Plane2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    FocalChange,
    DepthRescale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationRecipe {
    pub k: f64,
    pub mode: AugmentMode,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixPolicy {
    pub focal_change_fraction: f64,
    pub depth_rescale_fraction: f64,
    pub seed: u64,
}

impl Default for MixPolicy {
    fn default() -> Self {
        Self {
            focal_change_fraction: 0.6,
            depth_rescale_fraction: 0.4,
            seed: 0,
        }
    }
}

impl MixPolicy {
    pub fn new(focal_change_fraction: f64, depth_rescale_fraction: f64, seed: u64) -> Result<Self> {
        let p = Self {
            focal_change_fraction,
            depth_rescale_fraction,
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = (self.focal_change_fraction, self.depth_rescale_fraction);
        if !(a >= 0.0 && b >= 0.0) {
            return Err(Error::arg("ratio", "fractions must be non-negative"));
        }
        if (a + b - 1.0).abs() > 1e-9 {
            return Err(Error::arg("ratio", format!("fractions must sum to 1, got {}", a + b)));
        }
        Ok(())
    }
}

/// Inclusive range `k` is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KRange {
    pub min: f64,
    pub max: f64,
}

impl Default for KRange {
    fn default() -> Self {
        Self { min: 0.7, max: 1.0 }
    }
}

impl KRange {
    pub fn validate(&self) -> Result<()> {
        if !(self.min > 0.0 && self.min <= self.max && self.max <= 1.0) {
            return Err(Error::arg(
                "k_range",
                format!("need 0 < k_min <= k_max <= 1, got [{}, {}]", self.min, self.max),
            ));
        }
        Ok(())
    }
}

/// Integer crop rectangle in source pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

fn check_k(k: f64) -> Result<()> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::arg("k", format!("must lie in (0, 1], got {k}")));
    }
    Ok(())
}

/// Start of a window of `len` pixels whose center is nearest `center`
/// (ties toward the lower index), kept inside `[0, full)`.
fn centered_start(center: f64, len: usize, full: usize) -> usize {
    let start = (center - (len as f64 - 1.0) / 2.0 - 0.5).ceil();
    (start.max(0.0) as usize).min(full - len)
}

/// The crop window for factor `k`, centered on the principal point.
pub fn crop_window(height: usize, width: usize, cam: &CameraIntrinsics, k: f64) -> Result<CropWindow> {
    check_k(k)?;
    let ch = (k * height as f64).round() as usize;
    let cw = (k * width as f64).round() as usize;
    if ch == 0 || cw == 0 {
        return Err(Error::arg(
            "k",
            format!("k = {k} gives an empty crop of a {height}x{width} image"),
        ));
    }
    Ok(CropWindow {
        x0: centered_start(cam.cx, cw, width),
        y0: centered_start(cam.cy, ch, height),
        width: cw,
        height: ch,
    })
}

fn remap_plane(src: &Plane2D, rows: &[usize], cols: &[usize]) -> Plane2D {
    Plane2D::from_fn(rows.len(), cols.len(), |r, c| src.get(rows[r], cols[c]))
}

fn remap_rgb(src: &RgbImage, rows: &[usize], cols: &[usize]) -> RgbImage {
    RgbImage::from_fn(cols.len() as u32, rows.len() as u32, |x, y| {
        *src.get_pixel(cols[x as usize] as u32, rows[y as usize] as u32)
    })
}

fn bilinear_rgb(src: &RgbImage, win: &CropWindow, out_h: usize, out_w: usize) -> RgbImage {
    let rt = linear_taps(win.height, out_h);
    let ct = linear_taps(win.width, out_w);
    RgbImage::from_fn(out_w as u32, out_h as u32, |x, y| {
        let (r, c) = (rt[y as usize], ct[x as usize]);
        let px = |yy: usize, xx: usize| src.get_pixel((win.x0 + xx) as u32, (win.y0 + yy) as u32).0;
        let (a, b, cc, d) = (px(r.lo, c.lo), px(r.lo, c.hi), px(r.hi, c.lo), px(r.hi, c.hi));
        let mut out = [0u8; 3];
        for i in 0..3 {
            let v = r.w_lo * (c.w_lo * a[i] as f64 + c.w_hi * b[i] as f64)
                + r.w_hi * (c.w_lo * cc[i] as f64 + c.w_hi * d[i] as f64);
            out[i] = v.round().clamp(0.0, 255.0) as u8;
        }
        Rgb(out)
    })
}

/// Crops `sample` to the centered `k` window. Focal lengths are unchanged and
/// the principal point shifts by the crop offset.
pub fn center_crop(sample: &RgbdSample, k: f64) -> Result<RgbdSample> {
    let win = crop_window(sample.height(), sample.width(), &sample.intrinsics, k)?;
    let rows: Vec<usize> = (win.y0..win.y0 + win.height).collect();
    let cols: Vec<usize> = (win.x0..win.x0 + win.width).collect();
    let cam = sample.intrinsics;
    Ok(RgbdSample {
        rgb: remap_rgb(&sample.rgb, &rows, &cols),
        depth: remap_plane(&sample.depth, &rows, &cols),
        valid_mask: remap_plane(&sample.valid_mask, &rows, &cols),
        intrinsics: CameraIntrinsics {
            cx: cam.cx - win.x0 as f64,
            cy: cam.cy - win.y0 as f64,
            ..cam
        },
        source_id: sample.source_id.clone(),
        augmentation: sample.augmentation,
    })
}

fn crop_and_upsample(sample: &RgbdSample, k: f64, bilinear_color: bool) -> Result<RgbdSample> {
    let (h, w) = (sample.height(), sample.width());
    let win = crop_window(h, w, &sample.intrinsics, k)?;
    if (win.height, win.width) == (h, w) {
        return Ok(sample.clone());
    }
    let rows: Vec<usize> = nearest_indices(win.height, h).into_iter().map(|i| i + win.y0).collect();
    let cols: Vec<usize> = nearest_indices(win.width, w).into_iter().map(|i| i + win.x0).collect();
    let rgb = if bilinear_color {
        bilinear_rgb(&sample.rgb, &win, h, w)
    } else {
        remap_rgb(&sample.rgb, &rows, &cols)
    };
    // Pixel centers: crop coordinate c maps to output (c + 0.5) * n / crop - 0.5.
    let (sx, sy) = (w as f64 / win.width as f64, h as f64 / win.height as f64);
    let cam = sample.intrinsics;
    let intrinsics = CameraIntrinsics {
        fx: cam.fx * sx,
        fy: cam.fy * sy,
        cx: (cam.cx - win.x0 as f64 + 0.5) * sx - 0.5,
        cy: (cam.cy - win.y0 as f64 + 0.5) * sy - 0.5,
    };
    Ok(RgbdSample {
        rgb,
        depth: remap_plane(&sample.depth, &rows, &cols),
        valid_mask: remap_plane(&sample.valid_mask, &rows, &cols),
        intrinsics,
        source_id: sample.source_id.clone(),
        augmentation: sample.augmentation,
    })
}

/// Source pixel `(row, col)` that output pixel `(row, col)` copies under the `k` crop + upsample.
pub fn source_pixel_map(height: usize, width: usize, cam: &CameraIntrinsics, k: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    let win = crop_window(height, width, cam, k)?;
    Ok((
        nearest_indices(win.height, height).into_iter().map(|i| i + win.y0).collect(),
        nearest_indices(win.width, width).into_iter().map(|i| i + win.x0).collect(),
    ))
}

/// Crop by `k`, upsample back, keep depth values. The output intrinsics use
/// the realized crop ratio, i.e. `fx * w / crop_w` (`fx / k` when `k w` is integral).
pub fn augment_focal_change(sample: &RgbdSample, k: f64) -> Result<RgbdSample> {
    augment_focal_change_with(sample, k, false)
}

pub fn augment_focal_change_with(sample: &RgbdSample, k: f64, bilinear_color: bool) -> Result<RgbdSample> {
    let mut out = crop_and_upsample(sample, k, bilinear_color)?;
    out.augmentation = AugmentationTag::FocalChange(k);
    Ok(out)
}

/// Crop by `k`, upsample back, multiply depth by `k`. Intrinsics are unchanged.
pub fn augment_depth_rescale(sample: &RgbdSample, k: f64) -> Result<RgbdSample> {
    augment_depth_rescale_with(sample, k, false)
}

pub fn augment_depth_rescale_with(sample: &RgbdSample, k: f64, bilinear_color: bool) -> Result<RgbdSample> {
    let mut out = crop_and_upsample(sample, k, bilinear_color)?;
    out.depth.data_mut().iter_mut().for_each(|d| *d *= k);
    out.intrinsics = sample.intrinsics;
    out.augmentation = AugmentationTag::DepthRescale(k);
    Ok(out)
}

pub fn apply_recipe(sample: &RgbdSample, recipe: &AugmentationRecipe, bilinear_color: bool) -> Result<RgbdSample> {
    match recipe.mode {
        AugmentMode::FocalChange => augment_focal_change_with(sample, recipe.k, bilinear_color),
        AugmentMode::DepthRescale => augment_depth_rescale_with(sample, recipe.k, bilinear_color),
    }
}

/// Stratified mode assignment: exactly `round(n * focal_change_fraction)`
/// focal-change slots, placed by a seeded shuffle.
pub fn assign_modes(n: usize, policy: &MixPolicy, rng: &mut ChaCha8Rng) -> Result<Vec<AugmentMode>> {
    policy.validate()?;
    let n_fc = ((n as f64) * policy.focal_change_fraction).round() as usize;
    let n_fc = n_fc.min(n);
    let mut modes: Vec<AugmentMode> = std::iter::repeat_n(AugmentMode::FocalChange, n_fc)
        .chain(std::iter::repeat_n(AugmentMode::DepthRescale, n - n_fc))
        .collect();
    modes.shuffle(rng);
    Ok(modes)
}

/// One recipe per input sample, fully determined by `(n, policy, k_range)`.
pub fn plan_recipes(n: usize, policy: &MixPolicy, k_range: KRange) -> Result<Vec<AugmentationRecipe>> {
    k_range.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let modes = assign_modes(n, policy, &mut rng)?;
    Ok(modes
        .into_iter()
        .map(|mode| {
            let k = if k_range.min == k_range.max {
                k_range.min
            } else {
                rng.random_range(k_range.min..=k_range.max)
            };
            AugmentationRecipe {
                k,
                mode,
                seed: rng.random(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DatasetOptions {
    pub k_range: KRange,
    /// Also emit every input sample unchanged (tagged `Original`).
    pub keep_originals: bool,
    /// Bilinear instead of nearest-neighbor RGB upsampling.
    pub bilinear_color: bool,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleFailure {
    pub source_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentSummary {
    pub manifest: Manifest,
    pub recipes: Vec<AugmentationRecipe>,
    pub failures: Vec<SampleFailure>,
    pub clamped_pixels: usize,
}

impl AugmentSummary {
    pub fn count(&self, mode: AugmentMode) -> usize {
        self.manifest
            .records
            .iter()
            .filter(|r| {
                matches!(
                    (mode, r.augmentation),
                    (AugmentMode::FocalChange, AugmentationTag::FocalChange(_))
                        | (AugmentMode::DepthRescale, AugmentationTag::DepthRescale(_))
                )
            })
            .count()
    }
}

pub fn augmented_id(source_id: &str, mode: AugmentMode) -> String {
    match mode {
        AugmentMode::FocalChange => format!("{source_id}__focal"),
        AugmentMode::DepthRescale => format!("{source_id}__depth"),
    }
}

/// Augments every record of `manifest` into `out_dir`.
///
/// Per-sample failures are collected in the summary instead of aborting the
/// batch. Output records keep input order.
pub fn augment_dataset(
    manifest: &Manifest,
    policy: &MixPolicy,
    options: &DatasetOptions,
    out_dir: &Path,
) -> Result<AugmentSummary> {
    policy.validate()?;
    let recipes = plan_recipes(manifest.len(), policy, options.k_range)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    type Outcome = (Vec<crate::dataset_io::WrittenSample>, Option<SampleFailure>);
    let work = |i: usize| -> Outcome {
        let rec = &manifest.records[i];
        let run = || -> Result<Vec<crate::dataset_io::WrittenSample>> {
            let sample = load_sample(rec, &manifest.base_dir)?;
            let mut written = Vec::new();
            if options.keep_originals {
                let mut orig = sample.clone();
                orig.augmentation = AugmentationTag::Original;
                written.push(write_sample(&orig, out_dir, rec.depth_scale)?);
            }
            let mut aug = apply_recipe(&sample, &recipes[i], options.bilinear_color)?;
            aug.source_id = augmented_id(&rec.source_id, recipes[i].mode);
            written.push(write_sample(&aug, out_dir, rec.depth_scale)?);
            Ok(written)
        };
        match run() {
            Ok(w) => (w, None),
            Err(e) => (
                Vec::new(),
                Some(SampleFailure {
                    source_id: rec.source_id.clone(),
                    message: e.to_string(),
                }),
            ),
        }
    };

    let outcomes: Vec<Outcome> = match options.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::State(format!("thread pool: {e}")))?
            .install(|| (0..manifest.len()).into_par_iter().map(work).collect()),
        None => (0..manifest.len()).into_par_iter().map(work).collect(),
    };

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut clamped_pixels = 0;
    for (written, failure) in outcomes {
        for w in written {
            clamped_pixels += w.clamped_pixels;
            records.push(w.record);
        }
        failures.extend(failure);
    }
    Ok(AugmentSummary {
        manifest: Manifest::new(out_dir, records)?,
        recipes,
        failures,
        clamped_pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(h: usize, w: usize, cam: CameraIntrinsics) -> RgbdSample {
        RgbdSample {
            rgb: RgbImage::from_fn(w as u32, h as u32, |x, y| {
                Rgb([(x * 7 % 256) as u8, (y * 13 % 256) as u8, ((x + y) * 3 % 256) as u8])
            }),
            depth: Plane2D::from_fn(h, w, |r, c| 1.0 + 0.01 * r as f64 + 0.003 * c as f64),
            valid_mask: Plane2D::from_fn(h, w, |r, c| if (r * 3 + c) % 11 == 0 { 0.0 } else { 1.0 }),
            intrinsics: cam,
            source_id: "s".into(),
            augmentation: AugmentationTag::Original,
        }
    }

    #[test]
    fn crop_identity_at_k_one() {
        let s = textured(20, 30, CameraIntrinsics::centered(25.0, 20, 30).unwrap());
        assert_eq!(center_crop(&s, 1.0).unwrap(), s);
        let fc = augment_focal_change(&s, 1.0).unwrap();
        assert_eq!((fc.rgb.clone(), fc.depth.clone(), fc.valid_mask.clone(), fc.intrinsics), (s.rgb.clone(), s.depth.clone(), s.valid_mask.clone(), s.intrinsics));
        assert_eq!(fc.augmentation, AugmentationTag::FocalChange(1.0));
        let dr = augment_depth_rescale(&s, 1.0).unwrap();
        assert_eq!(dr.depth, s.depth);
        assert_eq!(dr.rgb, s.rgb);
    }

    #[test]
    fn half_crop_of_hundred_pixels() {
        for c in [49.5, 50.0] {
            let cam = CameraIntrinsics::pinhole(80.0, c, c).unwrap();
            let s = textured(100, 100, cam);
            let cr = center_crop(&s, 0.5).unwrap();
            assert_eq!(cr.depth.dims(), (50, 50));
            assert_eq!(cr.intrinsics.cx, c - 25.0);
            assert_eq!(cr.intrinsics.cy, c - 25.0);
            assert_eq!(cr.intrinsics.fx, 80.0);
            assert_eq!(cr.depth.get(0, 0), s.depth.get(25, 25));
        }
    }

    #[test]
    fn cropped_pixels_match_source_exhaustively() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (h, w) = (rng.random_range(5..40), rng.random_range(5..40));
            let cam = CameraIntrinsics::pinhole(30.0, rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64)).unwrap();
            let s = textured(h, w, cam);
            let k = rng.random_range(0.2..1.0);
            let win = crop_window(h, w, &cam, k).unwrap();
            let cr = center_crop(&s, k).unwrap();
            for r in 0..win.height {
                for c in 0..win.width {
                    assert_eq!(cr.depth.get(r, c), s.depth.get(r + win.y0, c + win.x0));
                    assert_eq!(cr.valid_mask.get(r, c), s.valid_mask.get(r + win.y0, c + win.x0));
                    assert_eq!(
                        cr.rgb.get_pixel(c as u32, r as u32),
                        s.rgb.get_pixel((c + win.x0) as u32, (r + win.y0) as u32)
                    );
                }
            }
        }
    }

    #[test]
    fn empty_crop_is_an_argument_error() {
        let s = textured(3, 3, CameraIntrinsics::centered(5.0, 3, 3).unwrap());
        assert!(matches!(center_crop(&s, 0.1), Err(Error::Argument { .. })));
        assert!(augment_focal_change(&s, 0.0).is_err());
        assert!(augment_depth_rescale(&s, 1.2).is_err());
    }

    #[test]
    fn focal_change_copies_depth_values() {
        let s = textured(24, 32, CameraIntrinsics::centered(30.0, 24, 32).unwrap());
        let k = 0.75;
        let out = augment_focal_change(&s, k).unwrap();
        let cr = center_crop(&s, k).unwrap();
        let pool: std::collections::HashSet<u64> = cr.depth.data().iter().map(|d| d.to_bits()).collect();
        assert!(out.depth.data().iter().all(|d| pool.contains(&d.to_bits())));
        assert!((out.intrinsics.fx - 30.0 / k).abs() < 1e-12);
        assert!((out.intrinsics.cx - s.intrinsics.cx).abs() < 1e-12);
    }

    #[test]
    fn depth_rescale_scales_copied_values_exactly() {
        let s = textured(24, 32, CameraIntrinsics::centered(30.0, 24, 32).unwrap());
        let k = 0.8;
        let out = augment_depth_rescale(&s, k).unwrap();
        let (rows, cols) = source_pixel_map(24, 32, &s.intrinsics, k).unwrap();
        for r in 0..24 {
            for c in 0..32 {
                let src = s.depth.get(rows[r], cols[c]);
                if s.valid_mask.get(rows[r], cols[c]) > 0.5 {
                    assert_eq!(out.depth.get(r, c), k * src);
                }
            }
        }
        assert_eq!(out.intrinsics, s.intrinsics);
    }

    #[test]
    fn stratified_assignment_is_exact() {
        let policy = MixPolicy::default();
        let recipes = plan_recipes(10, &policy, KRange::default()).unwrap();
        let fc = recipes.iter().filter(|r| r.mode == AugmentMode::FocalChange).count();
        assert_eq!(fc, 6);
        assert!(recipes.iter().all(|r| (0.7..=1.0).contains(&r.k)));
        for n in 1..40 {
            let recipes = plan_recipes(n, &policy, KRange::default()).unwrap();
            let fc = recipes.iter().filter(|r| r.mode == AugmentMode::FocalChange).count();
            assert!((fc as f64 / n as f64 - 0.6).abs() <= 1.0 / n as f64);
        }
        let all_fc = MixPolicy::new(1.0, 0.0, 9).unwrap();
        assert!(plan_recipes(7, &all_fc, KRange::default())
            .unwrap()
            .iter()
            .all(|r| r.mode == AugmentMode::FocalChange));
        assert!(MixPolicy::new(0.7, 0.4, 0).is_err());
        assert_eq!(plan_recipes(12, &policy, KRange::default()).unwrap(), plan_recipes(12, &policy, KRange::default()).unwrap());
    }
}
