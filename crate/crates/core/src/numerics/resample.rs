//! Pixel-center (align-corners = false) resampling.
//!
//! Output pixel `i` of an axis of length `out` maps to the continuous source
//! coordinate `(i + 0.5) * src / out - 0.5`, so pixel centers line up and
//! resizing a plane to its own size is the identity.

use super::plane::{FeatureStack, Plane2D};
use crate::error::{Error, Result};

#[inline]
fn source_coord(i: usize, src_len: usize, out_len: usize) -> f64 {
    (i as f64 + 0.5) * (src_len as f64 / out_len as f64) - 0.5
}

/// Source index chosen by nearest-neighbor sampling for every output index of one axis.
///
/// Ties round down (toward the lower source index).
pub fn nearest_indices(src_len: usize, out_len: usize) -> Vec<usize> {
    (0..out_len)
        .map(|i| {
            let s = (source_coord(i, src_len, out_len) - 0.5).ceil();
            (s.max(0.0) as usize).min(src_len - 1)
        })
        .collect()
}

/// Two-tap linear interpolation weights along one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearTap {
    pub lo: usize,
    pub hi: usize,
    pub w_lo: f64,
    pub w_hi: f64,
}

pub fn linear_taps(src_len: usize, out_len: usize) -> Vec<LinearTap> {
    (0..out_len)
        .map(|i| {
            let s = source_coord(i, src_len, out_len).clamp(0.0, (src_len - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src_len - 1);
            let w_hi = s - lo as f64;
            LinearTap {
                lo,
                hi,
                w_lo: 1.0 - w_hi,
                w_hi,
            }
        })
        .collect()
}

fn check_dims(h: usize, w: usize, out_h: usize, out_w: usize) -> Result<()> {
    if h == 0 || w == 0 {
        return Err(Error::Dimension("cannot resample a zero-sized plane".into()));
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::Dimension(format!(
            "output size must be at least 1x1, got {out_h}x{out_w}"
        )));
    }
    Ok(())
}

pub fn resample_nearest(src: &Plane2D, out_h: usize, out_w: usize) -> Result<Plane2D> {
    let (h, w) = src.dims();
    check_dims(h, w, out_h, out_w)?;
    let rows = nearest_indices(h, out_h);
    let cols = nearest_indices(w, out_w);
    Ok(Plane2D::from_fn(out_h, out_w, |r, c| src.get(rows[r], cols[c])))
}

/// Bilinear resampling of one channel buffer into `out`.
pub(crate) fn bilinear_into(
    src: &[f64],
    src_w: usize,
    rows: &[LinearTap],
    cols: &[LinearTap],
    out: &mut [f64],
) {
    let out_w = cols.len();
    for (r, rt) in rows.iter().enumerate() {
        let top = &src[rt.lo * src_w..(rt.lo + 1) * src_w];
        let bot = &src[rt.hi * src_w..(rt.hi + 1) * src_w];
        let dst = &mut out[r * out_w..(r + 1) * out_w];
        for (d, ct) in dst.iter_mut().zip(cols) {
            let t = top[ct.lo] * ct.w_lo + top[ct.hi] * ct.w_hi;
            let b = bot[ct.lo] * ct.w_lo + bot[ct.hi] * ct.w_hi;
            *d = t * rt.w_lo + b * rt.w_hi;
        }
    }
}

/// Adjoint of [`bilinear_into`]: scatters `grad_out` back onto `grad_src`.
pub(crate) fn bilinear_adjoint_into(
    grad_out: &[f64],
    src_w: usize,
    rows: &[LinearTap],
    cols: &[LinearTap],
    grad_src: &mut [f64],
) {
    let out_w = cols.len();
    for (r, rt) in rows.iter().enumerate() {
        let g_row = &grad_out[r * out_w..(r + 1) * out_w];
        for (&g, ct) in g_row.iter().zip(cols) {
            let gt = g * rt.w_lo;
            let gb = g * rt.w_hi;
            grad_src[rt.lo * src_w + ct.lo] += gt * ct.w_lo;
            grad_src[rt.lo * src_w + ct.hi] += gt * ct.w_hi;
            grad_src[rt.hi * src_w + ct.lo] += gb * ct.w_lo;
            grad_src[rt.hi * src_w + ct.hi] += gb * ct.w_hi;
        }
    }
}

pub fn resample_bilinear(src: &Plane2D, out_h: usize, out_w: usize) -> Result<Plane2D> {
    let (h, w) = src.dims();
    check_dims(h, w, out_h, out_w)?;
    let rows = linear_taps(h, out_h);
    let cols = linear_taps(w, out_w);
    let mut out = vec![0.0; out_h * out_w];
    bilinear_into(src.data(), w, &rows, &cols, &mut out);
    Plane2D::new(out_h, out_w, out)
}

/// Bilinear resampling applied to every channel of a stack.
pub fn resample_stack_bilinear(src: &FeatureStack, out_h: usize, out_w: usize) -> Result<FeatureStack> {
    let (c, h, w) = src.shape();
    check_dims(h, w, out_h, out_w)?;
    let rows = linear_taps(h, out_h);
    let cols = linear_taps(w, out_w);
    let mut out = FeatureStack::zeros(c, out_h, out_w);
    for ch in 0..c {
        bilinear_into(src.channel(ch), w, &rows, &cols, out.channel_mut(ch));
    }
    Ok(out)
}

/// Box-filter (area-average) resampling. Each output pixel averages the
/// source pixels its footprint touches; constants are preserved.
pub fn resample_area(src: &Plane2D, out_h: usize, out_w: usize) -> Result<Plane2D> {
    let (h, w) = src.dims();
    check_dims(h, w, out_h, out_w)?;
    let span = |i: usize, src_len: usize, out_len: usize| {
        let lo = i * src_len / out_len;
        let hi = ((i + 1) * src_len).div_ceil(out_len).max(lo + 1);
        (lo, hi.min(src_len))
    };
    Ok(Plane2D::from_fn(out_h, out_w, |r, c| {
        let (r0, r1) = span(r, h, out_h);
        let (c0, c1) = span(c, w, out_w);
        let mut acc = 0.0;
        for rr in r0..r1 {
            for cc in c0..c1 {
                acc += src.get(rr, cc);
            }
        }
        acc / ((r1 - r0) * (c1 - c0)) as f64
    }))
}

/// Channel concatenation; `a`'s channels come first.
pub fn concat_channels(a: &FeatureStack, b: &FeatureStack) -> Result<FeatureStack> {
    if a.spatial() != b.spatial() {
        return Err(Error::Dimension(format!(
            "cannot concatenate {}x{} with {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    FeatureStack::new(a.channels() + b.channels(), a.height(), a.width(), data)
}
