use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{Direction, ModelConfig, ParamRole, ParamSpec};
use crate::error::{Error, Result};
use crate::nn::{Element, KERNEL, STRIDE};

#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// All learnable arrays of one model, in [`ModelConfig::parameter_specs`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters<T = f32> {
    config: ModelConfig,
    tensors: Vec<ParamTensor<T>>,
}

impl Parameters<f32> {
    /// Fan-in scaled normal kernels, zero biases and shifts, unit scales.
    /// Deterministic in `config.seed`.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let stages = config.stages();
        let mut tensors = Vec::new();
        let mut specs = config.parameter_specs().into_iter();
        for stage in &stages {
            for _ in 0..stage.param_arrays() {
                let spec = specs.next().expect("spec per stage array");
                let data = match spec.role {
                    ParamRole::Weight => {
                        // Each output pixel of a stride-2 transposed conv sees
                        // only (k/stride)^2 taps per input channel.
                        let taps = match stage.direction {
                            Direction::Down => KERNEL * KERNEL,
                            Direction::Up => (KERNEL / STRIDE) * (KERNEL / STRIDE),
                        };
                        let std = (2.0 / (stage.in_channels * taps) as f64).sqrt();
                        (0..spec.len())
                            .map(|_| {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                (z * std) as f32
                            })
                            .collect()
                    }
                    ParamRole::Scale => vec![1.0; spec.len()],
                    ParamRole::Bias | ParamRole::Shift => vec![0.0; spec.len()],
                };
                tensors.push(ParamTensor {
                    name: spec.name,
                    shape: spec.shape,
                    data,
                });
            }
        }
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }
}

impl<T: Element> Parameters<T> {
    /// Assembles parameters from named arrays, checking names and shapes.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<ParamTensor<T>>) -> Result<Self> {
        config.validate()?;
        let specs = config.parameter_specs();
        if specs.len() != tensors.len() {
            return Err(Error::ShapeMismatch(format!(
                "config needs {} parameter arrays, got {}",
                specs.len(),
                tensors.len()
            )));
        }
        for (spec, t) in specs.iter().zip(&tensors) {
            check_tensor(spec, t)?;
        }
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[ParamTensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [ParamTensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Element>(&self) -> Parameters<U> {
        Parameters {
            config: self.config.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| ParamTensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
                })
                .collect(),
        }
    }

    /// Zero-filled arrays with the same layout, for gradients.
    pub fn zeros_like(&self) -> Vec<Vec<T>> {
        self.tensors.iter().map(|t| vec![T::ZERO; t.data.len()]).collect()
    }

    pub(crate) fn array(&self, index: usize) -> &[T] {
        &self.tensors[index].data
    }
}

fn check_tensor<T>(spec: &ParamSpec, t: &ParamTensor<T>) -> Result<()> {
    if spec.name != t.name || spec.shape != t.shape || spec.len() != t.data.len() {
        return Err(Error::ShapeMismatch(format!(
            "parameter `{}` {:?} ({} values) does not match expected `{}` {:?}",
            t.name,
            t.shape,
            t.data.len(),
            spec.name,
            spec.shape
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_in_seed() {
        let cfg = ModelConfig::new(8, 2, 4, 2).with_seed(1);
        let a = Parameters::init(&cfg).unwrap();
        let b = Parameters::init(&cfg).unwrap();
        assert_eq!(a, b);
        let c = Parameters::init(&cfg.clone().with_seed(2)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_rejects_invalid_config() {
        let cfg = ModelConfig::new(8, 4, 4, 2).with_seed(1);
        assert!(matches!(Parameters::init(&cfg), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn biases_start_at_zero_and_weights_are_finite() {
        let p = Parameters::init(&ModelConfig::new(16, 3, 4, 3)).unwrap();
        for t in p.tensors() {
            if t.name.ends_with(".bias") || t.name.ends_with(".beta") {
                assert!(t.data.iter().all(|&v| v == 0.0), "{}", t.name);
            }
        }
        assert!(p.all_finite());
    }

    #[test]
    fn from_tensors_rejects_shape_drift() {
        let cfg = ModelConfig::new(8, 2, 4, 2);
        let p = Parameters::init(&cfg).unwrap();
        let mut tensors = p.tensors().to_vec();
        tensors[0].shape = vec![1, 2, 3];
        assert!(matches!(
            Parameters::from_tensors(&cfg, tensors),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
