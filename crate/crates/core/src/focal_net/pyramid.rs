//! Focal encoding matrix and multi-scale focal features.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::{concat_channels, FeatureStack, GradTape, Plane2D, Var};

pub const MATRIX_HEIGHT: usize = 12;
pub const MATRIX_WIDTH: usize = 16;
pub const PYRAMID_LEVELS: usize = 5;

/// Learnable 12x16 grid; focal features are `f * M` at every scale.
#[derive(Debug, Clone, PartialEq)]
pub struct FocalEncodingMatrix {
    values: Plane2D,
    init_seed: u64,
}

impl FocalEncodingMatrix {
    /// `1 + 0.1 N(0, 1)` per entry.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.1).expect("valid normal");
        Self {
            values: Plane2D::from_fn(MATRIX_HEIGHT, MATRIX_WIDTH, |_, _| 1.0 + normal.sample(&mut rng)),
            init_seed: seed,
        }
    }

    pub fn zeros() -> Self {
        Self {
            values: Plane2D::zeros(MATRIX_HEIGHT, MATRIX_WIDTH),
            init_seed: 0,
        }
    }

    pub fn from_plane(values: Plane2D, init_seed: u64) -> Result<Self> {
        if values.dims() != (MATRIX_HEIGHT, MATRIX_WIDTH) {
            return Err(Error::Dimension(format!(
                "focal encoding matrix must be {MATRIX_HEIGHT}x{MATRIX_WIDTH}, got {:?}",
                values.dims()
            )));
        }
        Ok(Self { values, init_seed })
    }

    pub fn values(&self) -> &Plane2D {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        self.values.data_mut()
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn as_stack(&self) -> FeatureStack {
        FeatureStack::from_plane(self.values.clone())
    }
}

/// Dims of levels 1..=5, i.e. scales 1/2 .. 1/32: `max(1, round(H / 2^j))`.
pub fn level_dims(height: usize, width: usize) -> [(usize, usize); PYRAMID_LEVELS] {
    std::array::from_fn(|i| {
        let s = (1u64 << (i + 1)) as f64;
        let d = |n: usize| ((n as f64 / s).round() as usize).max(1);
        (d(height), d(width))
    })
}

/// Five feature levels at 1/2 .. 1/32 of a base resolution, finest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalePyramid {
    levels: Vec<FeatureStack>,
    base_resolution: (usize, usize),
}

impl ScalePyramid {
    pub fn new(levels: Vec<FeatureStack>, base_resolution: (usize, usize)) -> Result<Self> {
        if levels.len() != PYRAMID_LEVELS {
            return Err(Error::Dimension(format!(
                "a scale pyramid has {PYRAMID_LEVELS} levels, got {}",
                levels.len()
            )));
        }
        let dims = level_dims(base_resolution.0, base_resolution.1);
        for (j, (l, d)) in levels.iter().zip(dims).enumerate() {
            if l.spatial() != d {
                return Err(Error::Dimension(format!(
                    "level {} is {:?}, expected {:?} for base {:?}",
                    j + 1,
                    l.spatial(),
                    d,
                    base_resolution
                )));
            }
        }
        Ok(Self {
            levels,
            base_resolution,
        })
    }

    pub fn levels(&self) -> &[FeatureStack] {
        &self.levels
    }

    /// Level `j` in `1..=5`.
    pub fn level(&self, j: usize) -> &FeatureStack {
        &self.levels[j - 1]
    }

    pub fn base_resolution(&self) -> (usize, usize) {
        self.base_resolution
    }

    pub fn channel_counts(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.channels()).collect()
    }
}

/// Records the focal pyramid of `m` on `tape`: the 1/32 level is `m` resized to
/// its dims, each finer level is the bilinear upsample of the next coarser one,
/// and every level is multiplied by `f`.
pub(crate) fn focal_levels_on_tape(
    tape: &mut GradTape,
    m: Var,
    f: f64,
    base: (usize, usize),
) -> Result<Vec<Var>> {
    let dims = level_dims(base.0, base.1);
    let mut unit = vec![m; PYRAMID_LEVELS];
    let mut prev = m;
    for j in (0..PYRAMID_LEVELS).rev() {
        prev = tape.resample_bilinear(prev, dims[j].0, dims[j].1)?;
        unit[j] = prev;
    }
    unit.into_iter().map(|u| tape.scale(u, f)).collect()
}

/// Focal feature pyramid `F_j` for focal length `f` (pixels) at input size `target`.
pub fn make_focal_pyramid(f: f64, m: &FocalEncodingMatrix, target: (usize, usize)) -> Result<ScalePyramid> {
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::arg("f", format!("focal length must be positive, got {f}")));
    }
    make_focal_pyramid_unchecked(f, m, target)
}

/// [`make_focal_pyramid`] without the `f > 0` check.
pub fn make_focal_pyramid_unchecked(f: f64, m: &FocalEncodingMatrix, target: (usize, usize)) -> Result<ScalePyramid> {
    if target.0 == 0 || target.1 == 0 {
        return Err(Error::Dimension(format!("empty target {target:?}")));
    }
    let mut tape = GradTape::new();
    let mv = tape.constant(m.as_stack());
    let vars = focal_levels_on_tape(&mut tape, mv, f, target)?;
    ScalePyramid::new(vars.iter().map(|&v| tape.value(v).clone()).collect(), target)
}

/// Per-level channel concatenation `[N_j, F_j]`.
pub fn fuse(features: &ScalePyramid, focal: &ScalePyramid) -> Result<ScalePyramid> {
    if features.base_resolution != focal.base_resolution {
        return Err(Error::Dimension(format!(
            "fuse: feature base {:?} vs focal base {:?}",
            features.base_resolution, focal.base_resolution
        )));
    }
    let levels = features
        .levels
        .iter()
        .zip(&focal.levels)
        .map(|(n, f)| concat_channels(n, f))
        .collect::<Result<Vec<_>>>()?;
    ScalePyramid::new(levels, features.base_resolution)
}
