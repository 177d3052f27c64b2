//! Bin weighted-sum depth head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::pyramid::ScalePyramid;
use crate::error::{Error, Result};
use crate::numerics::tape::bin_centers_from_raw;
use crate::numerics::{resample_area, FeatureStack, GradTape, Plane2D, Var};

pub const DEFAULT_BINS: usize = 64;
pub const DEFAULT_D_MIN: f64 = 1e-3;
pub const DEFAULT_D_MAX: f64 = 10.0;

/// Per-pixel bin logits from a `1 x n_bins x in` projection, and bin centers
/// from `n_bins` unnormalized widths.
#[derive(Debug, Clone, PartialEq)]
pub struct BinHead {
    pub d_min: f64,
    pub d_max: f64,
    pub weight: FeatureStack,
    pub bias: FeatureStack,
    pub bin_widths: FeatureStack,
}

impl BinHead {
    /// Projection weights from `N(0, 0.01^2)`, zero biases, equal bin widths.
    pub fn new(n_bins: usize, in_channels: usize, d_min: f64, d_max: f64, seed: u64) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::arg("n_bins", format!("need at least 2 bins, got {n_bins}")));
        }
        if !(d_min >= 0.0 && d_max > d_min) {
            return Err(Error::arg("d_max", format!("need 0 <= d_min < d_max, got ({d_min}, {d_max})")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        let data = (0..n_bins * in_channels).map(|_| normal.sample(&mut rng)).collect();
        Ok(Self {
            d_min,
            d_max,
            weight: FeatureStack::new(1, n_bins, in_channels, data)?,
            bias: FeatureStack::zeros(1, 1, n_bins),
            bin_widths: FeatureStack::zeros(1, 1, n_bins),
        })
    }

    pub fn n_bins(&self) -> usize {
        self.weight.height()
    }

    pub fn in_channels(&self) -> usize {
        self.weight.width()
    }

    pub fn centers(&self) -> Vec<f64> {
        bin_centers_from_raw(self.bin_widths.data(), self.d_min, self.d_max - self.d_min)
    }
}

pub(crate) struct HeadVars {
    pub weight: Var,
    pub bias: Var,
    pub bin_widths: Var,
}

pub(crate) struct HeadTrace {
    pub depth: Var,
    pub probs: Var,
    pub centers: Var,
}

/// Upsamples every fused level to the finest level, appends the relative
/// depth channel, projects to bin logits and takes the expected bin center.
/// The result is bilinearly resized to `base`.
pub(crate) fn head_on_tape(
    tape: &mut GradTape,
    fused: &[Var],
    relative_depth: Var,
    vars: &HeadVars,
    range: (f64, f64),
    base: (usize, usize),
) -> Result<HeadTrace> {
    let (th, tw) = tape.value(fused[0]).spatial();
    let mut parts = Vec::with_capacity(fused.len() + 1);
    for &f in fused {
        parts.push(tape.resample_bilinear(f, th, tw)?);
    }
    parts.push(relative_depth);
    let x = tape.concat(&parts)?;
    let logits = tape.channel_mix(vars.weight, vars.bias, x)?;
    let probs = tape.softmax(logits)?;
    let centers = tape.bin_centers(vars.bin_widths, range.0, range.1)?;
    let depth = tape.bin_expectation(probs, centers)?;
    let depth = tape.resample_bilinear(depth, base.0, base.1)?;
    Ok(HeadTrace { depth, probs, centers })
}

pub(crate) fn check_head_channels(fused_channels: usize, head: &BinHead) -> Result<()> {
    if head.in_channels() != fused_channels + 1 {
        return Err(Error::Dimension(format!(
            "head expects {} input channels, fused features give {} plus 1 relative-depth channel",
            head.in_channels(),
            fused_channels
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    /// Depth at the pyramid's base resolution.
    pub depth: Plane2D,
    /// Bin probabilities at the finest pyramid level.
    pub probabilities: FeatureStack,
    pub centers: Vec<f64>,
}

pub fn predict_depth(fused: &ScalePyramid, relative_depth: &Plane2D, head: &BinHead) -> Result<Plane2D> {
    Ok(predict_depth_detailed(fused, relative_depth, head)?.depth)
}

pub fn predict_depth_detailed(fused: &ScalePyramid, relative_depth: &Plane2D, head: &BinHead) -> Result<HeadOutput> {
    check_head_channels(fused.channel_counts().iter().sum(), head)?;
    let base = fused.base_resolution();
    if relative_depth.dims() != base {
        return Err(Error::Dimension(format!(
            "relative depth is {:?}, pyramid base is {base:?}",
            relative_depth.dims()
        )));
    }
    let (th, tw) = fused.level(1).spatial();
    let mut tape = GradTape::new();
    let levels: Vec<Var> = fused.levels().iter().map(|l| tape.constant(l.clone())).collect();
    let rel = tape.constant(FeatureStack::from_plane(resample_area(relative_depth, th, tw)?));
    let vars = HeadVars {
        weight: tape.constant(head.weight.clone()),
        bias: tape.constant(head.bias.clone()),
        bin_widths: tape.constant(head.bin_widths.clone()),
    };
    let trace = head_on_tape(&mut tape, &levels, rel, &vars, (head.d_min, head.d_max), base)?;
    Ok(HeadOutput {
        depth: tape.value(trace.depth).plane(0),
        probabilities: tape.value(trace.probs).clone(),
        centers: tape.value(trace.centers).data().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::focal_net::pyramid::{level_dims, ScalePyramid};
    use rand::Rng;

    fn random_pyramid(rng: &mut ChaCha8Rng, base: (usize, usize), c: usize) -> ScalePyramid {
        let levels = level_dims(base.0, base.1)
            .iter()
            .map(|&(h, w)| FeatureStack::new(c, h, w, (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        ScalePyramid::new(levels, base).unwrap()
    }

    #[test]
    fn equal_logits_give_mean_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fused = random_pyramid(&mut rng, (24, 32), 3);
        let mut head = BinHead::new(64, 16, 0.0, 10.0, 0).unwrap();
        head.weight = FeatureStack::zeros(1, 64, 16);
        let out = predict_depth_detailed(&fused, &Plane2D::filled(24, 32, 0.3), &head).unwrap();
        // Uniform widths: centers (i + 1/2) * 10 / 64, whose mean is exactly 5.
        let expected: f64 = (0..64).map(|i| (i as f64 + 0.5) * 10.0 / 64.0).sum::<f64>() / 64.0;
        assert!((expected - 5.0).abs() < 1e-15);
        assert!(out.depth.data().iter().all(|&d| (d - expected).abs() < 1e-12));
    }

    #[test]
    fn saturated_logit_selects_its_bin() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fused = random_pyramid(&mut rng, (24, 32), 2);
        let mut head = BinHead::new(8, 11, 0.001, 10.0, 0).unwrap();
        head.weight = FeatureStack::zeros(1, 8, 11);
        head.bias.data_mut()[5] = 50.0;
        head.bin_widths = FeatureStack::vector((0..8).map(|_| rng.random_range(-1.0..1.0)).collect());
        let out = predict_depth_detailed(&fused, &Plane2D::filled(24, 32, 0.0), &head).unwrap();
        let c5 = head.centers()[5];
        assert!(out.depth.data().iter().all(|&d| (d - c5).abs() < 1e-9));
    }

    #[test]
    fn probabilities_and_range_hold_for_random_heads() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fused = random_pyramid(&mut rng, (24, 32), 4);
        let rel = Plane2D::from_fn(24, 32, |r, c| ((r * 32 + c) % 7) as f64 / 6.0);
        for seed in 0..20 {
            let mut head = BinHead::new(16, 21, 0.001, 10.0, seed).unwrap();
            head.weight.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-5.0..5.0));
            head.bin_widths.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-3.0..3.0));
            let out = predict_depth_detailed(&fused, &rel, &head).unwrap();
            let (c, h, w) = out.probabilities.shape();
            for p in 0..h * w {
                let s: f64 = (0..c).map(|ch| out.probabilities.channel(ch)[p]).sum();
                assert!((s - 1.0).abs() < 1e-9);
            }
            assert!(out.centers.windows(2).all(|w| w[0] <= w[1]));
            assert!(out.depth.min() >= 0.001 && out.depth.max() <= 10.0);
            assert_eq!(out.depth.dims(), (24, 32));
        }
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fused = random_pyramid(&mut rng, (24, 32), 4);
        let head = BinHead::new(16, 20, 0.001, 10.0, 0).unwrap();
        assert!(matches!(
            predict_depth(&fused, &Plane2D::zeros(24, 32), &head),
            Err(Error::Dimension(_))
        ));
        assert!(BinHead::new(1, 4, 0.0, 1.0, 0).is_err());
    }
}
