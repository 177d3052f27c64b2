//! Pinhole camera model.
//!
//! A world point `(x_w, y_w, z_w)` projects to `(x_s, y_s)` relative to the
//! principal point with `x_w / x_s = y_w / y_s = z_w / f`. Scaling `(x_s, y_s, f)`
//! together leaves the world point unchanged; scaling `(x_s, y_s)` alone by `k`
//! requires `z_w` to scale by `1 / k`. Depth is z-depth along the optical axis.
//!
//! Image indices use the pixel-center convention: pixel `(row v, col u)` sits at
//! image coordinate `(u, v)`, so the principal point is `(cx, cy)` in those units.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Plane2D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let cam = Self { fx, fy, cx, cy };
        cam.validate()?;
        Ok(cam)
    }

    /// Square pixels, single focal length.
    pub fn pinhole(f: f64, cx: f64, cy: f64) -> Result<Self> {
        Self::new(f, f, cx, cy)
    }

    /// Single focal length with the principal point at the image center.
    pub fn centered(f: f64, height: usize, width: usize) -> Result<Self> {
        Self::new(f, f, (width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fx.is_finite()) {
            return Err(Error::arg("fx", format!("must be positive and finite, got {}", self.fx)));
        }
        if !(self.fy > 0.0 && self.fy.is_finite()) {
            return Err(Error::arg("fy", format!("must be positive and finite, got {}", self.fy)));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::arg("cx", "principal point must be finite"));
        }
        Ok(())
    }

    /// Checks that the principal point lies inside an image of the given size.
    pub fn check_bound(&self, height: usize, width: usize) -> Result<()> {
        self.validate()?;
        if !(0.0..width as f64).contains(&self.cx) {
            return Err(Error::arg("cx", format!("{} outside [0, {width})", self.cx)));
        }
        if !(0.0..height as f64).contains(&self.cy) {
            return Err(Error::arg("cy", format!("{} outside [0, {height})", self.cy)));
        }
        Ok(())
    }

    /// The same camera with both focal lengths multiplied by `factor`.
    pub fn with_focal_scaled(&self, factor: f64) -> Self {
        Self {
            fx: self.fx * factor,
            fy: self.fy * factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }
}

/// Image-plane coordinate relative to the principal point, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub x: f64,
    pub y: f64,
}

impl PixelCoord {
    /// Column/row image coordinates `(u, v)`.
    pub fn to_image(self, cam: &CameraIntrinsics) -> (f64, f64) {
        (self.x + cam.cx, self.y + cam.cy)
    }

    pub fn from_image(u: f64, v: f64, cam: &CameraIntrinsics) -> Self {
        Self {
            x: u - cam.cx,
            y: v - cam.cy,
        }
    }
}

pub fn project(p: &WorldPoint, cam: &CameraIntrinsics) -> Result<PixelCoord> {
    if !(p.z > 0.0) {
        return Err(Error::BehindCamera { z: p.z });
    }
    Ok(PixelCoord {
        x: cam.fx * p.x / p.z,
        y: cam.fy * p.y / p.z,
    })
}

/// Inverse of [`project`] given the z-depth.
pub fn unproject(pc: PixelCoord, z: f64, cam: &CameraIntrinsics) -> WorldPoint {
    WorldPoint::new(pc.x * z / cam.fx, pc.y * z / cam.fy, z)
}

/// A backprojected point together with the pixel it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelPoint {
    pub row: usize,
    pub col: usize,
    pub point: WorldPoint,
}

/// Backprojects every pixel with `mask > 0.5`, in row-major order.
pub fn backproject_indexed(
    depth: &Plane2D,
    mask: &Plane2D,
    cam: &CameraIntrinsics,
) -> Result<Vec<PixelPoint>> {
    if depth.dims() != mask.dims() {
        return Err(Error::Dimension(format!(
            "depth {:?} and mask {:?} differ",
            depth.dims(),
            mask.dims()
        )));
    }
    cam.check_bound(depth.height(), depth.width())?;
    let mut out = Vec::new();
    for row in 0..depth.height() {
        for col in 0..depth.width() {
            if mask.get(row, col) > 0.5 {
                let z = depth.get(row, col);
                let pc = PixelCoord::from_image(col as f64, row as f64, cam);
                out.push(PixelPoint {
                    row,
                    col,
                    point: unproject(pc, z, cam),
                });
            }
        }
    }
    Ok(out)
}

pub fn backproject(depth: &Plane2D, mask: &Plane2D, cam: &CameraIntrinsics) -> Result<Vec<WorldPoint>> {
    Ok(backproject_indexed(depth, mask, cam)?
        .into_iter()
        .map(|p| p.point)
        .collect())
}

/// Writes an ASCII PLY point cloud.
pub fn write_ply<W: Write>(mut out: W, points: &[WorldPoint], colors: Option<&[[u8; 3]]>) -> std::io::Result<()> {
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "element vertex {}", points.len())?;
    writeln!(out, "property double x")?;
    writeln!(out, "property double y")?;
    writeln!(out, "property double z")?;
    if colors.is_some() {
        writeln!(out, "property uchar red")?;
        writeln!(out, "property uchar green")?;
        writeln!(out, "property uchar blue")?;
    }
    writeln!(out, "end_header")?;
    match colors {
        Some(cs) => {
            for (p, c) in points.iter().zip(cs) {
                writeln!(out, "{} {} {} {} {} {}", p.x, p.y, p.z, c[0], c[1], c[2])?;
            }
        }
        None => {
            for p in points {
                writeln!(out, "{} {} {}", p.x, p.y, p.z)?;
            }
        }
    }
    out.flush()
}

pub fn export_ply(points: &[WorldPoint], colors: Option<&[[u8; 3]]>, path: &Path) -> Result<()> {
    if let Some(cs) = colors {
        if cs.len() != points.len() {
            return Err(Error::arg(
                "colors",
                format!("{} colors for {} points", cs.len(), points.len()),
            ));
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_ply(BufWriter::new(file), points, colors).map_err(|e| Error::io(path, e))
}

/// Median lateral stretch of `b` relative to `a` at equal depth.
///
/// For each corresponded pair the lateral extent is `sqrt(x^2 + y^2) / z`; the
/// result is the median of `extent_b / extent_a`. Points on the optical axis of
/// `a` carry no lateral information and are skipped. 1.0 means no deformation.
pub fn deformation_ratio(a: &[WorldPoint], b: &[WorldPoint]) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::arg("cloud_a", "empty point cloud"));
    }
    if a.len() != b.len() {
        return Err(Error::arg(
            "cloud_b",
            format!("{} points do not correspond to {}", b.len(), a.len()),
        ));
    }
    let extent = |p: &WorldPoint| p.x.hypot(p.y) / p.z;
    let mut ratios: Vec<f64> = a
        .iter()
        .zip(b)
        .filter_map(|(pa, pb)| {
            let ea = extent(pa);
            (ea > 1e-12 && ea.is_finite()).then(|| extent(pb) / ea)
        })
        .collect();
    if ratios.is_empty() {
        return Ok(1.0);
    }
    ratios.sort_by(f64::total_cmp);
    let n = ratios.len();
    Ok(if n % 2 == 1 {
        ratios[n / 2]
    } else {
        0.5 * (ratios[n / 2 - 1] + ratios[n / 2])
    })
}
