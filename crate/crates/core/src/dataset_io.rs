//! RGB-D samples on disk.
//!
//! A manifest is a JSON Lines file, one record per sample. Paths are relative
//! to the directory containing the manifest. RGB is an 8-bit 3-channel PNG,
//! depth a 16-bit grayscale PNG holding `meters * depth_scale`; raw 0 marks an
//! invalid pixel.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, RgbImage};
use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::numerics::Plane2D;

pub const DEFAULT_DEPTH_SCALE: f64 = 1000.0;

/// How a sample was produced.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "k", rename_all = "snake_case")]
pub enum AugmentationTag {
    #[default]
    Original,
    /// Center crop + upsample with depth kept: equivalent to focal `f / k`.
    FocalChange(f64),
    /// Center crop + upsample with depth scaled by `k`: same focal `f`.
    DepthRescale(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgbdSample {
    pub rgb: RgbImage,
    /// Meters along the optical axis.
    pub depth: Plane2D,
    /// 1.0 where the depth is valid, 0.0 elsewhere.
    pub valid_mask: Plane2D,
    pub intrinsics: CameraIntrinsics,
    pub source_id: String,
    pub augmentation: AugmentationTag,
}

impl RgbdSample {
    pub fn height(&self) -> usize {
        self.depth.height()
    }

    pub fn width(&self) -> usize {
        self.depth.width()
    }

    pub fn valid_count(&self) -> usize {
        self.valid_mask.data().iter().filter(|&&m| m > 0.5).count()
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.depth.dims();
        let rgb_dims = (self.rgb.height() as usize, self.rgb.width() as usize);
        if rgb_dims != dims || self.valid_mask.dims() != dims {
            return Err(Error::Dimension(format!(
                "sample {}: rgb {:?}, depth {:?}, mask {:?}",
                self.source_id,
                rgb_dims,
                dims,
                self.valid_mask.dims()
            )));
        }
        for (&d, &m) in self.depth.data().iter().zip(self.valid_mask.data()) {
            if m > 0.5 && !(d > 0.0 && d.is_finite()) {
                return Err(Error::arg(
                    "depth",
                    format!("sample {}: valid pixel with depth {d}", self.source_id),
                ));
            }
        }
        self.intrinsics.validate()
    }
}

fn default_depth_scale() -> f64 {
    DEFAULT_DEPTH_SCALE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub rgb_path: String,
    pub depth_path: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Raw depth units per meter.
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
    pub source_id: String,
    #[serde(default)]
    pub augmentation: AugmentationTag,
}

impl ManifestRecord {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    /// Directory record paths are resolved against.
    pub base_dir: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn new(base_dir: impl Into<PathBuf>, records: Vec<ManifestRecord>) -> Result<Self> {
        let m = Self {
            base_dir: base_dir.into(),
            records,
        };
        m.check_unique()?;
        Ok(m)
    }

    fn check_unique(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.source_id.as_str()) {
                return Err(Error::DuplicateSourceId(r.source_id.clone()));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base, path)
    }

    /// Parses JSON Lines text. `origin` is only used in error messages.
    pub fn parse(text: &str, base_dir: PathBuf, origin: &Path) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestRecord = serde_json::from_str(line).map_err(|e| Error::Manifest {
                path: origin.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?;
            if !(rec.depth_scale > 0.0 && rec.depth_scale.is_finite()) {
                return Err(Error::Manifest {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    reason: format!("depth_scale must be positive, got {}", rec.depth_scale),
                });
            }
            records.push(rec);
        }
        Self::new(base_dir, records)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()?).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }

    pub fn load_sample(&self, index: usize) -> Result<RgbdSample> {
        load_sample(&self.records[index], &self.base_dir)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

fn color_name(img: &DynamicImage) -> String {
    format!("{:?}", img.color())
}

pub fn load_sample(record: &ManifestRecord, base_dir: &Path) -> Result<RgbdSample> {
    let rgb_path = base_dir.join(&record.rgb_path);
    let depth_path = base_dir.join(&record.depth_path);
    let rgb = match open_image(&rgb_path)? {
        DynamicImage::ImageRgb8(img) => img,
        img @ (DynamicImage::ImageRgba8(_) | DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_)) => {
            img.to_rgb8()
        }
        other => {
            return Err(Error::UnsupportedBitDepth {
                path: rgb_path,
                expected: "8-bit RGB",
                found: color_name(&other),
            })
        }
    };
    let raw = match open_image(&depth_path)? {
        DynamicImage::ImageLuma16(img) => img,
        other => {
            return Err(Error::UnsupportedBitDepth {
                path: depth_path,
                expected: "16-bit grayscale",
                found: color_name(&other),
            })
        }
    };
    if rgb.dimensions() != raw.dimensions() {
        return Err(Error::SizeMismatch {
            source_id: record.source_id.clone(),
            rgb_w: rgb.width(),
            rgb_h: rgb.height(),
            depth_w: raw.width(),
            depth_h: raw.height(),
        });
    }
    let (w, h) = (raw.width() as usize, raw.height() as usize);
    let scale = record.depth_scale;
    let depth = Plane2D::new(h, w, raw.as_raw().iter().map(|&r| r as f64 / scale).collect())?;
    let valid_mask = Plane2D::new(
        h,
        w,
        raw.as_raw().iter().map(|&r| if r > 0 { 1.0 } else { 0.0 }).collect(),
    )?;
    Ok(RgbdSample {
        rgb,
        depth,
        valid_mask,
        intrinsics: record.intrinsics()?,
        source_id: record.source_id.clone(),
        augmentation: record.augmentation,
    })
}

/// A sample written by [`write_sample`].
#[derive(Debug, Clone, PartialEq)]
pub struct WrittenSample {
    pub record: ManifestRecord,
    /// Valid pixels whose depth fell outside `[1, 65535]` raw units and were clamped.
    pub clamped_pixels: usize,
}

/// File stem for a source id: anything outside `[A-Za-z0-9._-]` becomes `_`.
pub fn file_stem(source_id: &str) -> String {
    source_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect()
}

/// Quantizes depth to raw 16-bit units. Valid pixels are kept in `[1, 65535]`
/// so they stay valid; invalid pixels become 0.
pub fn quantize_depth(depth: &Plane2D, mask: &Plane2D, depth_scale: f64) -> (Vec<u16>, usize) {
    let mut clamped = 0;
    let raw = depth
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&d, &m)| {
            if m <= 0.5 {
                return 0;
            }
            let q = (d * depth_scale).round();
            if q < 1.0 {
                clamped += 1;
                1
            } else if q > u16::MAX as f64 {
                clamped += 1;
                u16::MAX
            } else {
                q as u16
            }
        })
        .collect();
    (raw, clamped)
}

pub fn write_sample(sample: &RgbdSample, dir: &Path, depth_scale: f64) -> Result<WrittenSample> {
    if !(depth_scale > 0.0) {
        return Err(Error::arg("depth_scale", "must be positive"));
    }
    sample.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = file_stem(&sample.source_id);
    let rgb_name = format!("{stem}.rgb.png");
    let depth_name = format!("{stem}.depth.png");

    let rgb_path = dir.join(&rgb_name);
    sample
        .rgb
        .save_with_format(&rgb_path, ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: rgb_path.clone(),
            source,
        })?;

    let (raw, clamped_pixels) = quantize_depth(&sample.depth, &sample.valid_mask, depth_scale);
    let depth_img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(sample.width() as u32, sample.height() as u32, raw)
            .ok_or_else(|| Error::Dimension("depth buffer size".into()))?;
    let depth_path = dir.join(&depth_name);
    depth_img
        .save_with_format(&depth_path, ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: depth_path.clone(),
            source,
        })?;
    if clamped_pixels > 0 {
        log::warn!(
            "{}: {clamped_pixels} depth values clamped to the 16-bit range at scale {depth_scale}",
            sample.source_id
        );
    }

    let cam = sample.intrinsics;
    Ok(WrittenSample {
        record: ManifestRecord {
            rgb_path: rgb_name,
            depth_path: depth_name,
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            depth_scale,
            source_id: sample.source_id.clone(),
            augmentation: sample.augmentation,
        },
        clamped_pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn sample(h: usize, w: usize) -> RgbdSample {
        RgbdSample {
            rgb: RgbImage::from_fn(w as u32, h as u32, |x, y| Rgb([x as u8 * 10, y as u8 * 20, 7])),
            depth: Plane2D::from_fn(h, w, |r, c| 1.0 + 0.0137 * (r * w + c) as f64),
            valid_mask: Plane2D::from_fn(h, w, |r, c| if (r + c) % 5 == 0 { 0.0 } else { 1.0 }),
            intrinsics: CameraIntrinsics::centered(40.0, h, w).unwrap(),
            source_id: "scene/01".into(),
            augmentation: AugmentationTag::FocalChange(0.8),
        }
    }

    #[test]
    fn tag_round_trips_through_json() {
        for tag in [
            AugmentationTag::Original,
            AugmentationTag::FocalChange(0.8),
            AugmentationTag::DepthRescale(0.7312345678901234),
        ] {
            let s = serde_json::to_string(&tag).unwrap();
            assert_eq!(serde_json::from_str::<AugmentationTag>(&s).unwrap(), tag);
        }
        assert_eq!(
            serde_json::to_string(&AugmentationTag::FocalChange(0.8)).unwrap(),
            r#"{"kind":"focal_change","k":0.8}"#
        );
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let s = sample(6, 9);
        let written = write_sample(&s, dir.path(), 1000.0).unwrap();
        assert_eq!(written.clamped_pixels, 0);
        assert_eq!(written.record.rgb_path, "scene_01.rgb.png");
        let back = load_sample(&written.record, dir.path()).unwrap();
        assert_eq!(back.rgb, s.rgb);
        assert_eq!(back.valid_mask, s.valid_mask);
        assert_eq!(back.augmentation, s.augmentation);
        for ((a, b), m) in back.depth.data().iter().zip(s.depth.data()).zip(s.valid_mask.data()) {
            if *m > 0.5 {
                assert!((a - b).abs() <= 0.5 / 1000.0 + 1e-12);
            } else {
                assert_eq!(*a, 0.0);
            }
        }
    }

    #[test]
    fn unit_conversion_and_sentinel() {
        let dir = tempfile::tempdir().unwrap();
        let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(2, 1, vec![5000, 0]).unwrap();
        img.save_with_format(dir.path().join("d.png"), ImageFormat::Png).unwrap();
        RgbImage::new(2, 1)
            .save_with_format(dir.path().join("c.png"), ImageFormat::Png)
            .unwrap();
        let rec = ManifestRecord {
            rgb_path: "c.png".into(),
            depth_path: "d.png".into(),
            fx: 10.0,
            fy: 10.0,
            cx: 0.5,
            cy: 0.0,
            depth_scale: 1000.0,
            source_id: "a".into(),
            augmentation: AugmentationTag::Original,
        };
        let s = load_sample(&rec, dir.path()).unwrap();
        assert_eq!(s.depth.data(), &[5.0, 0.0]);
        assert_eq!(s.valid_mask.data(), &[1.0, 0.0]);
    }

    #[test]
    fn distinct_load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = ManifestRecord {
            rgb_path: "c.png".into(),
            depth_path: "d.png".into(),
            fx: 10.0,
            fy: 10.0,
            cx: 0.5,
            cy: 0.5,
            depth_scale: 1000.0,
            source_id: "a".into(),
            augmentation: AugmentationTag::Original,
        };
        assert!(matches!(load_sample(&rec, dir.path()), Err(Error::MissingFile(_))));

        RgbImage::new(2, 2).save_with_format(dir.path().join("c.png"), ImageFormat::Png).unwrap();
        image::GrayImage::new(2, 2)
            .save_with_format(dir.path().join("d8.png"), ImageFormat::Png)
            .unwrap();
        rec.depth_path = "d8.png".into();
        assert!(matches!(load_sample(&rec, dir.path()), Err(Error::UnsupportedBitDepth { .. })));

        let d: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::new(3, 2);
        d.save_with_format(dir.path().join("d.png"), ImageFormat::Png).unwrap();
        rec.depth_path = "d.png".into();
        assert!(matches!(load_sample(&rec, dir.path()), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn all_invalid_sample_writes_zeros_and_clamps_are_counted() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = sample(3, 4);
        s.valid_mask = Plane2D::zeros(3, 4);
        let w = write_sample(&s, dir.path(), 1000.0).unwrap();
        let back = load_sample(&w.record, dir.path()).unwrap();
        assert!(back.depth.data().iter().all(|&d| d == 0.0));

        let mut s = sample(3, 4);
        s.valid_mask = Plane2D::filled(3, 4, 1.0);
        s.depth.set(0, 0, 100.0);
        s.depth.set(0, 1, 1e-5);
        let w = write_sample(&s, dir.path(), 1000.0).unwrap();
        assert_eq!(w.clamped_pixels, 2);
    }

    #[test]
    fn manifest_preserves_order_and_rejects_duplicates() {
        let line = |id: &str| {
            format!(
                r#"{{"rgb_path":"{id}.png","depth_path":"{id}.d.png","fx":1,"fy":1,"cx":0,"cy":0,"depth_scale":1000,"source_id":"{id}","extra":true}}"#
            )
        };
        let text = [line("b"), line("a"), String::new(), line("c")].join("\n");
        let m = Manifest::parse(&text, PathBuf::from("/x"), Path::new("m.jsonl")).unwrap();
        let ids: Vec<_> = m.records.iter().map(|r| r.source_id.as_str()).collect();
        assert_eq!(ids, ["b", "a", "c"]);
        assert_eq!(m.resolve("a.png"), PathBuf::from("/x/a.png"));

        let dup = [line("a"), line("a")].join("\n");
        assert!(matches!(
            Manifest::parse(&dup, PathBuf::new(), Path::new("m")),
            Err(Error::DuplicateSourceId(_))
        ));
        let bad = line("a").replace("\"depth_scale\":1000", "\"depth_scale\":0");
        assert!(matches!(
            Manifest::parse(&bad, PathBuf::new(), Path::new("m")),
            Err(Error::Manifest { line: 1, .. })
        ));
    }
}
