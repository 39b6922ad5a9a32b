//! Forward and backward evaluation of the style-conditioned U-Net.

use super::config::{Activation, Direction, StageSpec};
use super::params::Parameters;
use crate::error::{Error, Result};
use crate::mixer::StyleWeights;
use crate::nn::{
    self, conv_down, conv_down_backward, conv_up, conv_up_backward, instance_norm,
    instance_norm_backward, Element, FeatureMap, NormCache,
};
use crate::tensor::Tensor;

/// Encoder output: the bottleneck and the skip activations of every
/// non-innermost encoder stage, outermost first.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoded<T = f32> {
    pub bottleneck: Tensor<T>,
    pub skips: Vec<Tensor<T>>,
}

/// Parameter-array positions of one stage.
#[derive(Clone, Copy, Debug)]
struct Slots {
    weight: usize,
    // (gamma, beta) when normalized, otherwise the bias.
    norm: Option<(usize, usize)>,
    bias: Option<usize>,
}

#[derive(Debug)]
struct StageTrace<T> {
    input: FeatureMap<T>,
    norm: Option<NormCache<T>>,
    // Post-norm values before the nonlinearity (sigmoid values for the output).
    pre: Vec<T>,
}

/// Everything the backward pass needs from a training forward pass.
#[derive(Debug)]
pub struct Trace<T> {
    stages: Vec<StageTrace<T>>,
}

/// Gradients laid out like [`Parameters::tensors`].
pub type Gradients<T> = Vec<Vec<T>>;

impl<T: Element> Parameters<T> {
    fn stage_slots(&self) -> Vec<(StageSpec, Slots)> {
        let mut next = 0;
        self.config()
            .stages()
            .into_iter()
            .map(|stage| {
                let weight = next;
                let slots = if stage.normalized {
                    Slots {
                        weight,
                        norm: Some((weight + 1, weight + 2)),
                        bias: None,
                    }
                } else {
                    Slots {
                        weight,
                        norm: None,
                        bias: Some(weight + 1),
                    }
                };
                next += stage.param_arrays();
                (stage, slots)
            })
            .collect()
    }

    fn run_stage(
        &self,
        stage: &StageSpec,
        slots: Slots,
        input: FeatureMap<T>,
        trace: Option<&mut Vec<StageTrace<T>>>,
    ) -> FeatureMap<T> {
        let weight = self.array(slots.weight);
        let mut z = match stage.direction {
            Direction::Down => conv_down(&input, weight, stage.out_channels),
            Direction::Up => conv_up(&input, weight, stage.out_channels),
        };
        let mut norm_cache = None;
        if let Some((g, b)) = slots.norm {
            let (y, cache) = instance_norm(&z, self.array(g), self.array(b));
            z = y;
            norm_cache = Some(cache);
        }
        if let Some(b) = slots.bias {
            z.add_bias(self.array(b));
        }
        let pre = match stage.activation {
            Activation::Squash => nn::squash(&mut z.data),
            Activation::LeakyRelu | Activation::Relu if trace.is_some() => {
                let pre = z.data.clone();
                activate(stage.activation, &mut z.data);
                pre
            }
            other => {
                activate(other, &mut z.data);
                Vec::new()
            }
        };
        if let Some(t) = trace {
            t.push(StageTrace {
                input,
                norm: norm_cache,
                pre,
            });
        }
        z
    }

    fn run_encoder(
        &self,
        x: FeatureMap<T>,
        mut trace: Option<&mut Vec<StageTrace<T>>>,
    ) -> Vec<FeatureMap<T>> {
        let depth = self.config().depth;
        let mut outputs: Vec<FeatureMap<T>> = Vec::with_capacity(depth);
        for (stage, slots) in self.stage_slots().into_iter().take(depth) {
            let input = outputs.last().cloned().unwrap_or_else(|| x.clone());
            let out = self.run_stage(&stage, slots, input, trace.as_deref_mut());
            outputs.push(out);
        }
        outputs
    }

    fn run_decoder(
        &self,
        conditioned: FeatureMap<T>,
        skips: &[FeatureMap<T>],
        mut trace: Option<&mut Vec<StageTrace<T>>>,
    ) -> FeatureMap<T> {
        let depth = self.config().depth;
        let mut h = conditioned;
        for (stage, slots) in self.stage_slots().into_iter().skip(depth) {
            let input = if stage.index == 0 {
                h
            } else {
                h.concat(&skips[depth - 1 - stage.index])
            };
            h = self.run_stage(&stage, slots, input, trace.as_deref_mut());
        }
        h
    }

    fn check_input(&self, batch: &Tensor<T>) -> Result<()> {
        let s = self.config().input_size;
        let [b, c, h, w] = batch.shape();
        if c != 1 || h != s || w != s || b == 0 {
            return Err(Error::ShapeMismatch(format!(
                "expected Bx1x{s}x{s} input with B >= 1, got {b}x{c}x{h}x{w}"
            )));
        }
        Ok(())
    }

    /// Runs the encoder. The bottleneck is `B x C x s x s` with
    /// `s = input_size / 2^depth`.
    pub fn encode(&self, batch: &Tensor<T>) -> Result<Encoded<T>> {
        self.check_input(batch)?;
        let mut outputs = self.run_encoder(batch.to_feature_map()?, None);
        let bottleneck = outputs.pop().expect("depth >= 2");
        Ok(Encoded {
            bottleneck: Tensor::from_feature_map(&bottleneck),
            skips: outputs.iter().map(Tensor::from_feature_map).collect(),
        })
    }

    /// Runs the decoder on a style-conditioned bottleneck.
    pub fn decode(&self, conditioned: &Tensor<T>, skips: &[Tensor<T>]) -> Result<Tensor<T>> {
        let cfg = self.config();
        let [b, c, h, w] = conditioned.shape();
        let want_c = cfg.bottleneck_channels() + cfg.style_count;
        let side = cfg.bottleneck_side();
        if c != want_c || h != side || w != side || b == 0 {
            return Err(Error::ShapeMismatch(format!(
                "conditioned bottleneck must be Bx{want_c}x{side}x{side}, got {b}x{c}x{h}x{w}"
            )));
        }
        if skips.len() != cfg.depth - 1 {
            return Err(Error::ShapeMismatch(format!(
                "expected {} skip activations, got {}",
                cfg.depth - 1,
                skips.len()
            )));
        }
        for (i, skip) in skips.iter().enumerate() {
            let s = cfg.input_size >> (i + 1);
            let want = [b, cfg.channels(i), s, s];
            if skip.shape() != want {
                return Err(Error::ShapeMismatch(format!(
                    "skip {i} must be {want:?}, got {:?}",
                    skip.shape()
                )));
            }
        }
        let skip_maps = skips
            .iter()
            .map(Tensor::to_feature_map)
            .collect::<Result<Vec<_>>>()?;
        let out = self.run_decoder(conditioned.to_feature_map()?, &skip_maps, None);
        Ok(Tensor::from_feature_map(&out))
    }

    /// `decode(inject_style(encode(batch), weights), skips)`.
    pub fn forward(&self, batch: &Tensor<T>, weights: &StyleWeights) -> Result<Tensor<T>> {
        weights.expect_len(self.config().style_count)?;
        let per_sample = vec![weights.clone(); batch.shape()[0]];
        self.forward_each(batch, &per_sample)
    }

    /// Forward pass with a separate style vector for every sample.
    pub fn forward_each(&self, batch: &Tensor<T>, weights: &[StyleWeights]) -> Result<Tensor<T>> {
        self.check_input(batch)?;
        let map = batch.to_feature_map()?;
        let out = self.forward_map(map, weights, None)?;
        Ok(Tensor::from_feature_map(&out))
    }

    fn forward_map(
        &self,
        x: FeatureMap<T>,
        weights: &[StyleWeights],
        mut trace: Option<&mut Vec<StageTrace<T>>>,
    ) -> Result<FeatureMap<T>> {
        let k = self.config().style_count;
        if weights.len() != x.batch {
            return Err(Error::ShapeMismatch(format!(
                "{} style vectors for a batch of {}",
                weights.len(),
                x.batch
            )));
        }
        for w in weights {
            w.expect_len(k)?;
        }
        let mut outputs = self.run_encoder(x, trace.as_deref_mut());
        let bottleneck = outputs.pop().expect("depth >= 2");
        let side = self.config().bottleneck_side();
        let conditioned = bottleneck.concat(&style_planes(weights, k, side));
        Ok(self.run_decoder(conditioned, &outputs, trace))
    }

    /// Training forward pass: returns the output map and the saved activations.
    pub fn forward_traced(
        &self,
        batch: &Tensor<T>,
        weights: &[StyleWeights],
    ) -> Result<(Tensor<T>, Trace<T>)> {
        self.check_input(batch)?;
        let mut stages = Vec::with_capacity(2 * self.config().depth);
        let out = self.forward_map(batch.to_feature_map()?, weights, Some(&mut stages))?;
        Ok((Tensor::from_feature_map(&out), Trace { stages }))
    }

    /// Signs of every rectifier input in a traced pass. Two passes with equal
    /// patterns lie on the same smooth piece of the network.
    pub(crate) fn kink_pattern(&self, trace: &Trace<T>) -> Vec<bool> {
        self.stage_slots()
            .iter()
            .zip(&trace.stages)
            .filter(|((stage, _), _)| stage.activation != Activation::Squash)
            .flat_map(|(_, st)| st.pre.iter().map(|&v| v > T::ZERO))
            .collect()
    }

    /// Backpropagates `d_output` (same shape as the forward output) through
    /// a traced forward pass.
    pub fn backward(&self, trace: &Trace<T>, d_output: &Tensor<T>) -> Result<Gradients<T>> {
        let cfg = self.config();
        let depth = cfg.depth;
        let slots = self.stage_slots();
        if trace.stages.len() != slots.len() {
            return Err(Error::ShapeMismatch("trace does not belong to this model".into()));
        }
        let mut grads = self.zeros_like();
        let mut d = d_output.to_feature_map()?;
        let mut skip_grads: Vec<Option<FeatureMap<T>>> = vec![None; depth - 1];

        for (pos, (stage, slot)) in slots.iter().enumerate().rev() {
            let st = &trace.stages[pos];
            if stage.direction == Direction::Down && stage.index < depth - 1 {
                if let Some(extra) = skip_grads[stage.index].take() {
                    d.data.iter_mut().zip(&extra.data).for_each(|(a, &b)| *a += b);
                }
            }
            match stage.activation {
                Activation::Squash => nn::squash_backward(&st.pre, &mut d.data),
                Activation::Relu => nn::relu_backward(&st.pre, &mut d.data),
                Activation::LeakyRelu => nn::leaky_relu_backward(&st.pre, &mut d.data),
            }
            if let (Some((g, b)), Some(cache)) = (slot.norm, &st.norm) {
                let (dg, db) = two_mut(&mut grads, g, b);
                d = instance_norm_backward(cache, self.array(g), &d, dg, db);
            }
            if let Some(b) = slot.bias {
                for (acc, v) in grads[b].iter_mut().zip(d.channel_sums()) {
                    *acc += v;
                }
            }
            let weight = self.array(slot.weight);
            let d_input = match stage.direction {
                Direction::Down => conv_down_backward(&st.input, weight, &d, &mut grads[slot.weight]),
                Direction::Up => conv_up_backward(&st.input, weight, &d, &mut grads[slot.weight]),
            };
            d = match stage.direction {
                Direction::Up if stage.index == 0 => d_input.split(cfg.bottleneck_channels()).0,
                Direction::Up => {
                    let prev = d_input.channels / 2;
                    let (d_prev, d_skip) = d_input.split(prev);
                    skip_grads[depth - 1 - stage.index] = Some(d_skip);
                    d_prev
                }
                Direction::Down => d_input,
            };
        }
        Ok(grads)
    }
}

fn activate<T: Element>(act: Activation, data: &mut [T]) {
    match act {
        Activation::LeakyRelu => nn::leaky_relu(data),
        Activation::Relu => nn::relu(data),
        Activation::Squash => {
            nn::squash(data);
        }
    }
}

fn two_mut<T>(v: &mut [Vec<T>], a: usize, b: usize) -> (&mut [T], &mut [T]) {
    assert!(a < b);
    let (lo, hi) = v.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

/// `K x B x s x s` planes, plane `k` of sample `n` filled with `weights[n][k]`.
fn style_planes<T: Element>(weights: &[StyleWeights], k: usize, side: usize) -> FeatureMap<T> {
    let area = side * side;
    let mut planes = FeatureMap::zeros(k, weights.len(), side);
    for ki in 0..k {
        for (n, w) in weights.iter().enumerate() {
            let v = T::from_f64(w.as_slice()[ki] as f64);
            planes.data[(ki * weights.len() + n) * area..][..area].fill(v);
        }
    }
    planes
}

/// Appends `K` spatially constant planes holding `weights` to every sample of
/// a `B x C x s x s` bottleneck. The original channels are copied unchanged.
pub fn inject_style<T: Element>(bottleneck: &Tensor<T>, weights: &StyleWeights, k: usize) -> Result<Tensor<T>> {
    weights.expect_len(k)?;
    let [b, c, h, w] = bottleneck.shape();
    let area = h * w;
    let mut data = Vec::with_capacity(b * (c + k) * area);
    for n in 0..b {
        data.extend_from_slice(bottleneck.sample(n));
        for &v in weights.as_slice() {
            data.extend(std::iter::repeat_n(T::from_f64(v as f64), area));
        }
    }
    Tensor::new([b, c + k, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixer::one_hot;
    use crate::unet::ModelConfig;

    fn input(cfg: &ModelConfig, batch: usize) -> Tensor<f32> {
        let s = cfg.input_size;
        let data = (0..batch * s * s)
            .map(|i| ((i * 37 % 101) as f32 / 100.0).powi(2))
            .collect();
        Tensor::new([batch, 1, s, s], data).unwrap()
    }

    #[test]
    fn encode_shapes_for_size_64() {
        let cfg = ModelConfig::new(64, 4, 32, 4);
        let p = Parameters::init(&cfg).unwrap();
        let enc = p.encode(&input(&cfg, 2)).unwrap();
        assert_eq!(enc.bottleneck.shape(), [2, 256, 4, 4]);
        let sides: Vec<_> = enc.skips.iter().map(|s| s.shape()).collect();
        assert_eq!(sides, vec![[2, 32, 32, 32], [2, 64, 16, 16], [2, 128, 8, 8]]);
    }

    #[test]
    fn encode_rejects_wrong_size() {
        let cfg = ModelConfig::new(64, 4, 32, 4);
        let p = Parameters::init(&cfg).unwrap();
        let small = Tensor::<f32>::zeros([1, 1, 32, 32]);
        assert!(matches!(p.encode(&small), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn inject_style_appends_constant_planes() {
        let bottleneck = Tensor::<f32>::new([1, 2, 2, 2], (0..8).map(|v| v as f32).collect()).unwrap();
        let w = StyleWeights::new(vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let out = inject_style(&bottleneck, &w, 4).unwrap();
        assert_eq!(out.shape(), [1, 6, 2, 2]);
        assert_eq!(&out.data()[..8], bottleneck.data());
        assert_eq!(&out.data()[8..], &[0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0., 0., 0., 0., 0., 0., 0., 0.]);
        assert!(matches!(
            inject_style(&bottleneck, &w, 3),
            Err(Error::StyleDimMismatch { expected: 3, got: 4 })
        ));
    }

    #[test]
    fn forward_equals_explicit_composition() {
        let cfg = ModelConfig::new(16, 3, 4, 3).with_seed(5);
        let p = Parameters::init(&cfg).unwrap();
        let x = input(&cfg, 2);
        let w = StyleWeights::new(vec![0.2, 0.5, 0.7]).unwrap();
        let enc = p.encode(&x).unwrap();
        let cond = inject_style(&enc.bottleneck, &w, 3).unwrap();
        let composed = p.decode(&cond, &enc.skips).unwrap();
        let direct = p.forward(&x, &w).unwrap();
        assert_eq!(composed, direct);
        assert!(direct.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn decode_rejects_inconsistent_skips() {
        let cfg = ModelConfig::new(16, 3, 4, 2);
        let p = Parameters::init(&cfg).unwrap();
        let enc2 = p.encode(&input(&cfg, 2)).unwrap();
        let enc1 = p.encode(&input(&cfg, 1)).unwrap();
        let cond = inject_style(&enc2.bottleneck, &one_hot(0, 2).unwrap(), 2).unwrap();
        assert!(matches!(p.decode(&cond, &enc1.skips), Err(Error::ShapeMismatch(_))));
        assert!(matches!(p.decode(&cond, &enc2.skips[..1]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(p.decode(&enc2.bottleneck, &enc2.skips), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn zeroing_a_skip_changes_the_output() {
        let cfg = ModelConfig::new(16, 3, 4, 2).with_seed(3);
        let p = Parameters::init(&cfg).unwrap();
        let x = input(&cfg, 1);
        let enc = p.encode(&x).unwrap();
        let cond = inject_style(&enc.bottleneck, &one_hot(1, 2).unwrap(), 2).unwrap();
        let base = p.decode(&cond, &enc.skips).unwrap();
        for i in 0..enc.skips.len() {
            let mut skips = enc.skips.clone();
            skips[i] = Tensor::zeros(skips[i].shape());
            let out = p.decode(&cond, &skips).unwrap();
            assert_ne!(out, base, "skip {i} has no effect");
        }
    }

    #[test]
    fn forward_is_deterministic_and_per_sample_independent() {
        let cfg = ModelConfig::new(16, 3, 4, 2).with_seed(9);
        let p = Parameters::init(&cfg).unwrap();
        let x = input(&cfg, 3);
        let w = one_hot(0, 2).unwrap();
        let a = p.forward(&x, &w).unwrap();
        let b = p.forward(&x, &w).unwrap();
        assert_eq!(a, b);
        let single = Tensor::new([1, 1, 16, 16], x.sample(1).to_vec()).unwrap();
        let alone = p.forward(&single, &w).unwrap();
        assert_eq!(alone.data(), a.sample(1));
    }
}
