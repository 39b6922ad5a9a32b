//! Layer primitives with hand-written backward passes.
//!
//! Activations are kept channel-major (`C x N x H x W`) so a convolution over a
//! whole batch is a single matrix product and channel concatenation is a plain
//! append.

mod act;
mod conv;
mod element;
mod norm;

pub use act::{
    leaky_relu, leaky_relu_backward, relu, relu_backward, squash, squash_backward, LEAKY_SLOPE,
    SQUASH_MARGIN,
};
pub use conv::{
    col2im, conv_down, conv_down_backward, conv_up, conv_up_backward, im2col, KERNEL, PADDING,
    STRIDE,
};
pub use element::Element;
pub use norm::{instance_norm, instance_norm_backward, NormCache, NORM_EPS};

/// Square feature map in channel-major layout.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T> {
    pub channels: usize,
    pub batch: usize,
    pub side: usize,
    pub data: Vec<T>,
}

impl<T: Element> FeatureMap<T> {
    pub fn zeros(channels: usize, batch: usize, side: usize) -> Self {
        Self {
            channels,
            batch,
            side,
            data: vec![T::ZERO; channels * batch * side * side],
        }
    }

    pub fn from_data(channels: usize, batch: usize, side: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), channels * batch * side * side, "feature map size");
        Self {
            channels,
            batch,
            side,
            data,
        }
    }

    /// Elements per channel (all samples).
    pub fn plane(&self) -> usize {
        self.batch * self.side * self.side
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let p = self.plane();
        &self.data[c * p..(c + 1) * p]
    }

    /// Stacks `other` below `self` along the channel axis.
    pub fn concat(mut self, other: &FeatureMap<T>) -> Self {
        assert_eq!((self.batch, self.side), (other.batch, other.side));
        self.data.extend_from_slice(&other.data);
        self.channels += other.channels;
        self
    }

    /// Inverse of [`FeatureMap::concat`]: splits off the first `channels`.
    pub fn split(mut self, channels: usize) -> (Self, Self) {
        let tail = self.data.split_off(channels * self.plane());
        let rest = FeatureMap {
            channels: self.channels - channels,
            batch: self.batch,
            side: self.side,
            data: tail,
        };
        self.channels = channels;
        (self, rest)
    }

    pub fn add_bias(&mut self, bias: &[T]) {
        let p = self.plane();
        for (row, &b) in self.data.chunks_mut(p).zip(bias) {
            row.iter_mut().for_each(|v| *v += b);
        }
    }

    /// Per-channel sum, the gradient of a bias.
    pub fn channel_sums(&self) -> Vec<T> {
        self.data.chunks(self.plane()).map(|row| row.iter().copied().sum()).collect()
    }
}
