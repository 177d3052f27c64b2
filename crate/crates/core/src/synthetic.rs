//! Procedural RGB-D scenes: a single textured plane in front of a pinhole camera.

use image::{Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::dataset_io::{AugmentationTag, RgbdSample};
use crate::error::{Error, Result};
use crate::numerics::Plane2D;

/// Plane `Z = z0 + slope_x X + slope_y Y` carrying the gray texture
/// `0.5 + contrast sin(2 pi X / P + phase_x) sin(2 pi Y / P + phase_y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TexturedPlane {
    pub z0: f64,
    pub slope_x: f64,
    pub slope_y: f64,
    /// Texture period in meters.
    pub period: f64,
    pub phase_x: f64,
    pub phase_y: f64,
    pub contrast: f64,
}

impl TexturedPlane {
    pub fn fronto_parallel(z: f64, period: f64) -> Self {
        Self {
            z0: z,
            slope_x: 0.0,
            slope_y: 0.0,
            period,
            phase_x: 0.0,
            phase_y: 0.0,
            contrast: 0.35,
        }
    }

    /// Depth along the ray through normalized image coordinates `(xn, yn)`;
    /// `None` when the ray misses the plane in front of the camera.
    pub fn depth_on_ray(&self, xn: f64, yn: f64) -> Option<f64> {
        let denom = 1.0 - self.slope_x * xn - self.slope_y * yn;
        let z = self.z0 / denom;
        (denom > 0.0 && z > 0.0 && z.is_finite()).then_some(z)
    }

    pub fn intensity(&self, x: f64, y: f64) -> f64 {
        let w = std::f64::consts::TAU / self.period;
        0.5 + self.contrast * (w * x + self.phase_x).sin() * (w * y + self.phase_y).sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub depth_range: (f64, f64),
    pub period: f64,
    pub contrast: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            depth_range: (1.5, 4.0),
            period: 0.3,
            contrast: 0.35,
        }
    }
}

/// Fronto-parallel plane with uniform depth and texture phase.
pub fn random_plane<R: Rng>(rng: &mut R, cfg: &WorldConfig) -> TexturedPlane {
    TexturedPlane {
        z0: rng.random_range(cfg.depth_range.0..=cfg.depth_range.1),
        slope_x: 0.0,
        slope_y: 0.0,
        period: cfg.period,
        phase_x: rng.random_range(0.0..std::f64::consts::TAU),
        phase_y: rng.random_range(0.0..std::f64::consts::TAU),
        contrast: cfg.contrast,
    }
}

/// Renders `plane` by point-sampling every pixel center.
pub fn render_plane(
    plane: &TexturedPlane,
    cam: &CameraIntrinsics,
    height: usize,
    width: usize,
    source_id: impl Into<String>,
) -> Result<RgbdSample> {
    cam.validate()?;
    if height == 0 || width == 0 {
        return Err(Error::Dimension(format!("cannot render a {height}x{width} image")));
    }
    let mut depth = Plane2D::zeros(height, width);
    let mut mask = Plane2D::zeros(height, width);
    let mut rgb = RgbImage::new(width as u32, height as u32);
    for r in 0..height {
        for c in 0..width {
            let xn = (c as f64 - cam.cx) / cam.fx;
            let yn = (r as f64 - cam.cy) / cam.fy;
            let Some(z) = plane.depth_on_ray(xn, yn) else { continue };
            depth.set(r, c, z);
            mask.set(r, c, 1.0);
            let g = (plane.intensity(xn * z, yn * z).clamp(0.0, 1.0) * 255.0).round() as u8;
            rgb.put_pixel(c as u32, r as u32, Rgb([g, g, g]));
        }
    }
    Ok(RgbdSample {
        rgb,
        depth,
        valid_mask: mask,
        intrinsics: *cam,
        source_id: source_id.into(),
        augmentation: AugmentationTag::Original,
    })
}
