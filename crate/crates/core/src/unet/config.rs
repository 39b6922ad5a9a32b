use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{KERNEL, LEAKY_SLOPE, PADDING, STRIDE};

pub const DEFAULT_CHANNEL_CAP: usize = 512;

/// Shape-determining hyperparameters of the style-conditioned U-Net.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Side of the square input and output bitmaps.
    pub input_size: usize,
    /// Number of stride-2 downsampling stages.
    pub depth: usize,
    pub base_channels: usize,
    pub channel_cap: usize,
    /// Length of the style vector concatenated at the bottleneck.
    pub style_count: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(input_size: usize, depth: usize, base_channels: usize, style_count: usize) -> Self {
        Self {
            input_size,
            depth,
            base_channels,
            channel_cap: DEFAULT_CHANNEL_CAP,
            style_count,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.channel_cap = cap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::ConfigInvalid(msg));
        if self.input_size == 0 || !self.input_size.is_power_of_two() {
            return fail(format!("input_size {} is not a power of two", self.input_size));
        }
        if self.depth < 2 {
            return fail(format!("depth {} must be at least 2", self.depth));
        }
        if self.depth >= usize::BITS as usize || self.input_size >> self.depth == 0 {
            return fail(format!(
                "bottleneck side input_size / 2^depth = {} / 2^{} is below 1",
                self.input_size, self.depth
            ));
        }
        if self.base_channels == 0 {
            return fail("base_channels must be at least 1".into());
        }
        if self.channel_cap == 0 {
            return fail("channel_cap must be at least 1".into());
        }
        if self.style_count == 0 {
            return fail("style_count must be at least 1".into());
        }
        Ok(())
    }

    /// Output channels of encoder stage `i`: `min(cap, base * 2^i)`.
    pub fn channels(&self, stage: usize) -> usize {
        let doubled = self
            .base_channels
            .checked_shl(stage as u32)
            .filter(|v| v >> stage == self.base_channels)
            .unwrap_or(usize::MAX);
        doubled.min(self.channel_cap)
    }

    pub fn bottleneck_side(&self) -> usize {
        self.input_size >> self.depth
    }

    pub fn bottleneck_channels(&self) -> usize {
        self.channels(self.depth - 1)
    }

    /// Every stage in evaluation order: encoder stages, then decoder stages.
    pub fn stages(&self) -> Vec<StageSpec> {
        let d = self.depth;
        let mut out = Vec::with_capacity(2 * d);
        for i in 0..d {
            let in_side = self.input_size >> i;
            let out_side = in_side / 2;
            out.push(StageSpec {
                direction: Direction::Down,
                index: i,
                in_channels: if i == 0 { 1 } else { self.channels(i - 1) },
                out_channels: self.channels(i),
                in_side,
                out_side,
                // A 1x1 map has no spatial extent to normalize over.
                normalized: out_side > 1,
                activation: Activation::LeakyRelu,
            });
        }
        for j in 0..d {
            let in_side = self.bottleneck_side() << j;
            let last = j == d - 1;
            out.push(StageSpec {
                direction: Direction::Up,
                index: j,
                in_channels: if j == 0 {
                    self.bottleneck_channels() + self.style_count
                } else {
                    2 * self.channels(d - 1 - j)
                },
                out_channels: if last { 1 } else { self.channels(d - 2 - j) },
                in_side,
                out_side: in_side * 2,
                // The first decoder stage sees the spatially constant style
                // planes; per-sample normalization would subtract them away.
                normalized: j > 0 && !last,
                activation: if last { Activation::Squash } else { Activation::Relu },
            });
        }
        out
    }

    /// Names and shapes of every learnable array, in storage order.
    pub fn parameter_specs(&self) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        for stage in self.stages() {
            let prefix = stage.name();
            let weight_shape = match stage.direction {
                Direction::Down => vec![stage.out_channels, stage.in_channels, KERNEL, KERNEL],
                Direction::Up => vec![stage.in_channels, stage.out_channels, KERNEL, KERNEL],
            };
            specs.push(ParamSpec::new(format!("{prefix}.weight"), weight_shape, ParamRole::Weight));
            if stage.normalized {
                specs.push(ParamSpec::new(format!("{prefix}.gamma"), vec![stage.out_channels], ParamRole::Scale));
                specs.push(ParamSpec::new(format!("{prefix}.beta"), vec![stage.out_channels], ParamRole::Shift));
            } else {
                specs.push(ParamSpec::new(format!("{prefix}.bias"), vec![stage.out_channels], ParamRole::Bias));
            }
        }
        specs
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_specs().iter().map(ParamSpec::len).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Down,
    Up,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    LeakyRelu,
    Relu,
    Squash,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageSpec {
    pub direction: Direction,
    pub index: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_side: usize,
    pub out_side: usize,
    pub normalized: bool,
    pub activation: Activation,
}

impl StageSpec {
    pub fn name(&self) -> String {
        match self.direction {
            Direction::Down => format!("enc{}", self.index),
            Direction::Up => format!("dec{}", self.index),
        }
    }

    /// Number of parameter arrays the stage owns.
    pub fn param_arrays(&self) -> usize {
        if self.normalized {
            3
        } else {
            2
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
    Scale,
    Shift,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: ParamRole,
}

impl ParamSpec {
    fn new(name: String, shape: Vec<usize>, role: ParamRole) -> Self {
        Self { name, shape, role }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fixed architectural choices, recorded in checkpoints so a forward pass can
/// be reconstructed without this crate's defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub downsample: String,
    pub upsample: String,
    pub normalization: String,
    pub encoder_activation: String,
    pub decoder_activation: String,
    pub output: String,
    pub style_injection: String,
    pub skip_connections: String,
}

impl Architecture {
    pub fn current() -> Self {
        Self {
            kernel: KERNEL,
            stride: STRIDE,
            padding: PADDING,
            downsample: "conv".into(),
            upsample: "conv_transpose".into(),
            normalization: "instance(eps=1e-5); encoder stages with side>1, decoder stages 1..depth-2".into(),
            encoder_activation: format!("leaky_relu({LEAKY_SLOPE})"),
            decoder_activation: "relu".into(),
            output: "sigmoid(margin=2^-20)".into(),
            style_injection: "bottleneck_concat".into(),
            skip_connections: "enc[i] -> dec[depth-1-i] channel concat".into(),
        }
    }
}
