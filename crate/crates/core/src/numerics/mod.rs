//! Dense planes and stacks, pixel-center resampling, and a small reverse-mode tape.

mod plane;
mod resample;
pub mod tape;

pub use plane::{FeatureStack, Plane2D};
pub use resample::{
    concat_channels, linear_taps, nearest_indices, resample_area, resample_bilinear,
    resample_nearest, resample_stack_bilinear, LinearTap,
};
pub use tape::{AdjointFault, GradTape, Gradients, OpKind, SiLogOutput, Var};
