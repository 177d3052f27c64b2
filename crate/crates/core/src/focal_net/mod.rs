//! Focal-conditioned monocular depth model at toy scale.
//!
//! A learnable 12x16 matrix `M` is multiplied by the focal length and
//! upsampled to five scales; each scale is concatenated with the backbone
//! features of that scale, and a bin head turns the fused features plus a
//! relative-depth channel into metric depth. All gradients come from the
//! reverse-mode tape in [`crate::numerics`].

mod backbone;
mod checkpoint;
mod gradcheck;
mod head;
mod loss;
mod model;
mod optimizer;
mod pyramid;
mod trainer;

pub use backbone::{
    apply_backbone, descriptor_pyramid, luminance, relative_depth, rgb_to_stack, toy_backbone, BackboneWeights,
    DESCRIPTOR_CHANNELS,
};
pub use checkpoint::{Checkpoint, TensorRecord, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gradcheck::{gradcheck, gradcheck_with, pass_through_error, relative_error, GradcheckOptions, GradcheckReport, TensorCheck};
pub use head::{predict_depth, predict_depth_detailed, BinHead, HeadOutput, DEFAULT_BINS, DEFAULT_D_MAX, DEFAULT_D_MIN};
pub use loss::{silog_loss, silog_value, LossConfig, SiLogResult};
pub use model::{FocalDepthModel, FocalNormalization, ForwardOptions, ModelConfig, ParamGroup, Parameter, SampleInput, MATRIX_SHAPE};
pub use optimizer::{AdamW, AdamWConfig, MomentState};
pub use pyramid::{
    fuse, level_dims, make_focal_pyramid, make_focal_pyramid_unchecked, FocalEncodingMatrix, ScalePyramid, MATRIX_HEIGHT,
    MATRIX_WIDTH, PYRAMID_LEVELS,
};
pub use trainer::{train, LrSchedule, StepLoss, TrainOutcome, TrainerConfig, TrainingSample};
