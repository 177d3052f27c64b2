//! Stand-in for a pretrained relative-depth network: fixed image descriptors
//! pooled to every pyramid level, followed by a per-level linear mix.

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::pyramid::{level_dims, ScalePyramid, PYRAMID_LEVELS};
use crate::error::{Error, Result};
use crate::numerics::{resample_area, FeatureStack, GradTape, Plane2D, Var};

/// Channels per level before mixing: r, g, b, log gradient energy.
pub const DESCRIPTOR_CHANNELS: usize = 4;

const ENERGY_OFFSET: f64 = 1e-3;

pub fn rgb_to_stack(img: &RgbImage) -> FeatureStack {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0; 3 * h * w];
    for (x, y, p) in img.enumerate_pixels() {
        let i = y as usize * w + x as usize;
        for c in 0..3 {
            data[c * h * w + i] = p.0[c] as f64 / 255.0;
        }
    }
    FeatureStack::new(3, h, w, data).expect("consistent size")
}

fn check_rgb(rgb: &FeatureStack) -> Result<()> {
    if rgb.channels() != 3 || rgb.height() == 0 || rgb.width() == 0 {
        return Err(Error::Dimension(format!("expected a non-empty 3-channel image, got {:?}", rgb.shape())));
    }
    Ok(())
}

pub fn luminance(rgb: &FeatureStack) -> Plane2D {
    let (h, w) = rgb.spatial();
    let (r, g, b) = (rgb.channel(0), rgb.channel(1), rgb.channel(2));
    Plane2D::from_fn(h, w, |y, x| {
        let i = y * w + x;
        0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i]
    })
}

/// Min-max normalized luminance; 0.5 everywhere for a flat image.
pub fn relative_depth(rgb: &FeatureStack) -> Result<Plane2D> {
    check_rgb(rgb)?;
    let lum = luminance(rgb);
    let (lo, hi) = (lum.min(), lum.max());
    if hi - lo <= 1e-12 {
        return Ok(Plane2D::filled(lum.height(), lum.width(), 0.5));
    }
    Ok(lum.map(|v| (v - lo) / (hi - lo)))
}

/// Mean absolute forward difference of luminance (zero past the border).
fn gradient_energy(lum: &Plane2D) -> Plane2D {
    let (h, w) = lum.dims();
    Plane2D::from_fn(h, w, |r, c| {
        let v = lum.get(r, c);
        let dx = if c + 1 < w { (lum.get(r, c + 1) - v).abs() } else { 0.0 };
        let dy = if r + 1 < h { (lum.get(r + 1, c) - v).abs() } else { 0.0 };
        0.5 * (dx + dy)
    })
}

/// Parameter-free descriptors `[r, g, b, ln(1e-3 + energy)]` area-pooled to each level.
pub fn descriptor_pyramid(rgb: &FeatureStack) -> Result<Vec<FeatureStack>> {
    check_rgb(rgb)?;
    let (h, w) = rgb.spatial();
    let energy = gradient_energy(&luminance(rgb));
    let mut base = rgb.planes();
    base.push(energy);
    level_dims(h, w)
        .iter()
        .map(|&(lh, lw)| {
            let mut planes = base
                .iter()
                .map(|p| resample_area(p, lh, lw))
                .collect::<Result<Vec<_>>>()?;
            planes[3] = planes[3].map(|e| (ENERGY_OFFSET + e).ln());
            FeatureStack::from_planes(&planes)
        })
        .collect()
}

/// Per-level `1 x C x 4` weight and `1 x 1 x C` bias.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneWeights {
    pub weights: Vec<FeatureStack>,
    pub biases: Vec<FeatureStack>,
}

impl BackboneWeights {
    /// Weights drawn from `N(0, 0.5^2)`, zero biases.
    pub fn seeded(seed: u64, channels: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.5).expect("valid normal");
        let weights = (0..PYRAMID_LEVELS)
            .map(|_| {
                let data = (0..channels * DESCRIPTOR_CHANNELS).map(|_| normal.sample(&mut rng)).collect();
                FeatureStack::new(1, channels, DESCRIPTOR_CHANNELS, data).expect("consistent size")
            })
            .collect();
        let biases = (0..PYRAMID_LEVELS).map(|_| FeatureStack::zeros(1, 1, channels)).collect();
        Self { weights, biases }
    }

    pub fn channels(&self) -> usize {
        self.weights[0].height()
    }
}

pub(crate) fn mix_on_tape(tape: &mut GradTape, descriptors: &[Var], weights: &[Var], biases: &[Var]) -> Result<Vec<Var>> {
    descriptors
        .iter()
        .zip(weights.iter().zip(biases))
        .map(|(&d, (&w, &b))| tape.channel_mix(w, b, d))
        .collect()
}

/// Relative depth and the five feature levels `N_j` for a `[0, 1]` RGB stack.
pub fn toy_backbone(rgb: &FeatureStack, seed: u64, channels: usize) -> Result<(Plane2D, ScalePyramid)> {
    let weights = BackboneWeights::seeded(seed, channels);
    apply_backbone(rgb, &weights)
}

pub fn apply_backbone(rgb: &FeatureStack, weights: &BackboneWeights) -> Result<(Plane2D, ScalePyramid)> {
    let rel = relative_depth(rgb)?;
    let desc = descriptor_pyramid(rgb)?;
    let mut tape = GradTape::new();
    let d: Vec<Var> = desc.into_iter().map(|s| tape.constant(s)).collect();
    let w: Vec<Var> = weights.weights.iter().map(|s| tape.constant(s.clone())).collect();
    let b: Vec<Var> = weights.biases.iter().map(|s| tape.constant(s.clone())).collect();
    let out = mix_on_tape(&mut tape, &d, &w, &b)?;
    let levels = out.iter().map(|&v| tape.value(v).clone()).collect();
    Ok((rel, ScalePyramid::new(levels, rgb.spatial())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_rgb(rng: &mut ChaCha8Rng, h: usize, w: usize) -> FeatureStack {
        FeatureStack::new(3, h, w, (0..3 * h * w).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn constant_image_gives_constant_features() {
        let rgb = FeatureStack::new(3, 20, 28, [0.2, 0.5, 0.9].iter().flat_map(|&v| vec![v; 560]).collect()).unwrap();
        let (rel, feats) = toy_backbone(&rgb, 3, 4).unwrap();
        assert!(rel.data().iter().all(|&v| v == 0.5));
        for l in feats.levels() {
            for c in 0..l.channels() {
                let ch = l.channel(c);
                assert!(ch.iter().all(|&v| (v - ch[0]).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn deterministic_and_shaped() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let (h, w) = (rng.random_range(1..70), rng.random_range(1..70));
            let rgb = random_rgb(&mut rng, h, w);
            let a = toy_backbone(&rgb, 9, 4).unwrap();
            let b = toy_backbone(&rgb, 9, 4).unwrap();
            assert_eq!(a, b);
            for (l, d) in a.1.levels().iter().zip(level_dims(h, w)) {
                assert_eq!(l.shape(), (4, d.0, d.1));
            }
            assert!(a.0.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        assert!(toy_backbone(&FeatureStack::zeros(1, 4, 4), 0, 4).is_err());
    }

    #[test]
    fn finer_texture_has_more_energy() {
        let stripes = |period: usize| {
            let data: Vec<f64> = (0..3)
                .flat_map(|_| (0..32 * 32).map(move |i| if (i % 32) / period % 2 == 0 { 0.2 } else { 0.8 }))
                .collect();
            FeatureStack::new(3, 32, 32, data).unwrap()
        };
        let fine = descriptor_pyramid(&stripes(2)).unwrap();
        let coarse = descriptor_pyramid(&stripes(8)).unwrap();
        assert!(fine[4].channel(3)[0] > coarse[4].channel(3)[0]);
    }
}
