//! The complete toy model: backbone, focal pyramid, fusion and bin head.

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backbone::{descriptor_pyramid, mix_on_tape, relative_depth, rgb_to_stack, BackboneWeights, DESCRIPTOR_CHANNELS};
use super::head::{head_on_tape, BinHead, HeadVars, DEFAULT_BINS, DEFAULT_D_MAX, DEFAULT_D_MIN};
use super::loss::LossConfig;
use super::pyramid::{focal_levels_on_tape, level_dims, FocalEncodingMatrix, MATRIX_HEIGHT, MATRIX_WIDTH, PYRAMID_LEVELS};
use crate::error::{Error, Result};
use crate::numerics::{resample_area, AdjointFault, FeatureStack, GradTape, Plane2D, Var};

/// How the focal length is scaled before it multiplies the encoding matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocalNormalization {
    /// Focal length in pixels.
    #[default]
    Raw,
    /// Focal length divided by the image width.
    ImageWidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_bins: usize,
    pub d_min: f64,
    pub d_max: f64,
    pub backbone_channels: usize,
    pub focal_normalization: FocalNormalization,
    /// Zero and freeze the encoding matrix.
    pub ablate_focal: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_bins: DEFAULT_BINS,
            d_min: DEFAULT_D_MIN,
            d_max: DEFAULT_D_MAX,
            backbone_channels: 4,
            focal_normalization: FocalNormalization::Raw,
            ablate_focal: false,
        }
    }
}

impl ModelConfig {
    pub fn head_in_channels(&self) -> usize {
        PYRAMID_LEVELS * (self.backbone_channels + 1) + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Backbone,
    Head,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub group: ParamGroup,
    pub value: FeatureStack,
}

const M_INDEX: usize = 0;
const HEAD_WEIGHT: usize = 1;
const HEAD_BIAS: usize = 2;
const HEAD_WIDTHS: usize = 3;
const BACKBONE_START: usize = 4;

/// Parameter-free per-image inputs, computed once per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleInput {
    pub descriptors: Vec<FeatureStack>,
    /// Relative depth pooled to the finest pyramid level.
    pub relative_depth: Plane2D,
    pub focal_px: f64,
    pub resolution: (usize, usize),
}

impl SampleInput {
    pub fn from_rgb(rgb: &FeatureStack, focal_px: f64) -> Result<Self> {
        let (h, w) = rgb.spatial();
        let (lh, lw) = level_dims(h, w)[0];
        Ok(Self {
            descriptors: descriptor_pyramid(rgb)?,
            relative_depth: resample_area(&relative_depth(rgb)?, lh, lw)?,
            focal_px,
            resolution: (h, w),
        })
    }

    pub fn from_image(img: &RgbImage, focal_px: f64) -> Result<Self> {
        Self::from_rgb(&rgb_to_stack(img), focal_px)
    }

    pub fn with_focal(&self, focal_px: f64) -> Self {
        Self {
            focal_px,
            ..self.clone()
        }
    }
}

/// Which pyramid levels receive focal features; disabled levels get zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForwardOptions {
    pub focal_levels: [bool; PYRAMID_LEVELS],
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            focal_levels: [true; PYRAMID_LEVELS],
        }
    }
}

pub(crate) struct ForwardTrace {
    pub params: Vec<Var>,
    pub depth: Var,
    pub probs: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FocalDepthModel {
    config: ModelConfig,
    params: Vec<Parameter>,
}

impl FocalDepthModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        if config.backbone_channels == 0 {
            return Err(Error::arg("backbone_channels", "must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m_seed, head_seed, backbone_seed): (u64, u64, u64) = (rng.random(), rng.random(), rng.random());
        let matrix = if config.ablate_focal {
            FocalEncodingMatrix::zeros()
        } else {
            FocalEncodingMatrix::seeded(m_seed)
        };
        let head = BinHead::new(config.n_bins, config.head_in_channels(), config.d_min, config.d_max, head_seed)?;
        let backbone = BackboneWeights::seeded(backbone_seed, config.backbone_channels);
        let mut params = vec![
            Parameter {
                name: "M".into(),
                group: ParamGroup::Head,
                value: matrix.as_stack(),
            },
            Parameter {
                name: "head.weight".into(),
                group: ParamGroup::Head,
                value: head.weight,
            },
            Parameter {
                name: "head.bias".into(),
                group: ParamGroup::Head,
                value: head.bias,
            },
            Parameter {
                name: "head.bin_widths".into(),
                group: ParamGroup::Head,
                value: head.bin_widths,
            },
        ];
        for (j, (w, b)) in backbone.weights.into_iter().zip(backbone.biases).enumerate() {
            params.push(Parameter {
                name: format!("backbone.level{}.weight", j + 1),
                group: ParamGroup::Backbone,
                value: w,
            });
            params.push(Parameter {
                name: format!("backbone.level{}.bias", j + 1),
                group: ParamGroup::Backbone,
                value: b,
            });
        }
        Ok(Self { config, params })
    }

    /// Rebuilds a model from named tensors, checking every expected name and shape.
    pub fn from_parameters(config: ModelConfig, tensors: Vec<(String, FeatureStack)>) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if tensors.len() != model.params.len() {
            return Err(Error::State(format!(
                "expected {} tensors, got {}",
                model.params.len(),
                tensors.len()
            )));
        }
        for (name, value) in tensors {
            let p = model
                .params
                .iter_mut()
                .find(|p| p.name == name)
                .ok_or_else(|| Error::State(format!("unknown tensor {name}")))?;
            if p.value.shape() != value.shape() {
                return Err(Error::State(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    value.shape(),
                    p.value.shape()
                )));
            }
            p.value = value;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.params
    }

    pub fn parameter(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn parameter_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    /// False only for the encoding matrix of an ablated model.
    pub fn is_trainable(&self, index: usize) -> bool {
        !(index == M_INDEX && self.config.ablate_focal)
    }

    pub fn matrix(&self) -> FocalEncodingMatrix {
        FocalEncodingMatrix::from_plane(self.params[M_INDEX].value.plane(0), 0).expect("12x16 matrix")
    }

    pub fn set_matrix(&mut self, m: &FocalEncodingMatrix) {
        self.params[M_INDEX].value = m.as_stack();
    }

    pub fn head(&self) -> BinHead {
        BinHead {
            d_min: self.config.d_min,
            d_max: self.config.d_max,
            weight: self.params[HEAD_WEIGHT].value.clone(),
            bias: self.params[HEAD_BIAS].value.clone(),
            bin_widths: self.params[HEAD_WIDTHS].value.clone(),
        }
    }

    pub fn backbone(&self) -> BackboneWeights {
        let levels = &self.params[BACKBONE_START..];
        BackboneWeights {
            weights: levels.iter().step_by(2).map(|p| p.value.clone()).collect(),
            biases: levels.iter().skip(1).step_by(2).map(|p| p.value.clone()).collect(),
        }
    }

    /// The scalar that multiplies `M` for a given input.
    pub fn focal_input(&self, input: &SampleInput) -> f64 {
        match self.config.focal_normalization {
            FocalNormalization::Raw => input.focal_px,
            FocalNormalization::ImageWidth => input.focal_px / input.resolution.1 as f64,
        }
    }

    fn check_input(&self, input: &SampleInput) -> Result<()> {
        let dims = level_dims(input.resolution.0, input.resolution.1);
        if input.descriptors.len() != PYRAMID_LEVELS
            || input
                .descriptors
                .iter()
                .zip(dims)
                .any(|(d, (h, w))| d.shape() != (DESCRIPTOR_CHANNELS, h, w))
        {
            return Err(Error::Dimension("sample descriptors do not match its resolution".into()));
        }
        if input.relative_depth.dims() != dims[0] {
            return Err(Error::Dimension("relative depth is not at the finest pyramid level".into()));
        }
        Ok(())
    }

    pub(crate) fn forward_on_tape(&self, tape: &mut GradTape, input: &SampleInput, opts: &ForwardOptions) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let params: Vec<Var> = self.params.iter().map(|p| tape.param(p.value.clone())).collect();
        let descriptors: Vec<Var> = input.descriptors.iter().map(|d| tape.constant(d.clone())).collect();
        let bw: Vec<Var> = params[BACKBONE_START..].iter().step_by(2).copied().collect();
        let bb: Vec<Var> = params[BACKBONE_START..].iter().skip(1).step_by(2).copied().collect();
        let features = mix_on_tape(tape, &descriptors, &bw, &bb)?;
        let focal = focal_levels_on_tape(tape, params[M_INDEX], self.focal_input(input), input.resolution)?;
        let dims = level_dims(input.resolution.0, input.resolution.1);
        let mut fused = Vec::with_capacity(PYRAMID_LEVELS);
        for j in 0..PYRAMID_LEVELS {
            let f = if opts.focal_levels[j] {
                focal[j]
            } else {
                tape.constant(FeatureStack::zeros(1, dims[j].0, dims[j].1))
            };
            fused.push(tape.concat(&[features[j], f])?);
        }
        let rel = tape.constant(FeatureStack::from_plane(input.relative_depth.clone()));
        let vars = HeadVars {
            weight: params[HEAD_WEIGHT],
            bias: params[HEAD_BIAS],
            bin_widths: params[HEAD_WIDTHS],
        };
        let trace = head_on_tape(tape, &fused, rel, &vars, (self.config.d_min, self.config.d_max), input.resolution)?;
        Ok(ForwardTrace {
            params,
            depth: trace.depth,
            probs: trace.probs,
        })
    }

    pub fn predict(&self, input: &SampleInput) -> Result<Plane2D> {
        self.predict_with(input, &ForwardOptions::default())
    }

    pub fn predict_with(&self, input: &SampleInput, opts: &ForwardOptions) -> Result<Plane2D> {
        let mut tape = GradTape::new();
        let trace = self.forward_on_tape(&mut tape, input, opts)?;
        Ok(tape.value(trace.depth).plane(0))
    }

    /// Per-pixel bin probabilities at the finest pyramid level.
    pub fn probabilities(&self, input: &SampleInput) -> Result<FeatureStack> {
        let mut tape = GradTape::new();
        let trace = self.forward_on_tape(&mut tape, input, &ForwardOptions::default())?;
        Ok(tape.value(trace.probs).clone())
    }

    /// SILog loss of one sample.
    pub fn loss(&self, input: &SampleInput, gt: &Plane2D, mask: &Plane2D, loss_cfg: &LossConfig) -> Result<f64> {
        let mut tape = GradTape::new();
        let trace = self.forward_on_tape(&mut tape, input, &ForwardOptions::default())?;
        let out = tape.silog(trace.depth, gt.data(), mask.data(), loss_cfg.silog_lambda, loss_cfg.silog_alpha)?;
        Ok(tape.value(out.loss).data()[0])
    }

    /// SILog loss of one sample and its gradient for every parameter, in [`Self::parameters`] order.
    pub fn loss_and_gradients(
        &self,
        input: &SampleInput,
        gt: &Plane2D,
        mask: &Plane2D,
        loss_cfg: &LossConfig,
        opts: &ForwardOptions,
        fault: Option<AdjointFault>,
    ) -> Result<(f64, Vec<FeatureStack>)> {
        let mut tape = match fault {
            Some(f) => GradTape::with_fault(f),
            None => GradTape::new(),
        };
        let trace = self.forward_on_tape(&mut tape, input, opts)?;
        let out = tape.silog(trace.depth, gt.data(), mask.data(), loss_cfg.silog_lambda, loss_cfg.silog_alpha)?;
        let loss = tape.value(out.loss).data()[0];
        let grads = tape.backward(out.loss, 1.0)?;
        let g = trace
            .params
            .iter()
            .zip(&self.params)
            .map(|(&v, p)| {
                grads
                    .wrt(v)
                    .cloned()
                    .unwrap_or_else(|| FeatureStack::zeros(p.value.channels(), p.value.height(), p.value.width()))
            })
            .collect();
        Ok((loss, g))
    }
}

/// Shape of the encoding matrix tensor.
pub const MATRIX_SHAPE: (usize, usize, usize) = (1, MATRIX_HEIGHT, MATRIX_WIDTH);
