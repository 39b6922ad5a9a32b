use crate::error::{Error, Result};
use crate::nn::{Element, FeatureMap};

/// Dense batch of square images in `B x C x H x W` order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        let want: usize = shape.iter().product();
        if data.len() != want {
            return Err(Error::ShapeMismatch(format!(
                "tensor {shape:?} needs {want} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![T::ZERO; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// One `C x H x W` sample.
    pub fn sample(&self, index: usize) -> &[T] {
        let len = self.shape[1] * self.shape[2] * self.shape[3];
        &self.data[index * len..(index + 1) * len]
    }

    /// Stacks single-channel images of equal side into a `B x 1 x S x S` batch.
    pub fn stack_images<'a>(side: usize, images: impl IntoIterator<Item = &'a [T]>) -> Result<Self> {
        let mut data = Vec::new();
        let mut batch = 0;
        for img in images {
            if img.len() != side * side {
                return Err(Error::ShapeMismatch(format!(
                    "image has {} pixels, expected {side}x{side}",
                    img.len()
                )));
            }
            data.extend_from_slice(img);
            batch += 1;
        }
        Ok(Self {
            shape: [batch, 1, side, side],
            data,
        })
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub(crate) fn to_feature_map(&self) -> Result<FeatureMap<T>> {
        let [b, c, h, w] = self.shape;
        if h != w {
            return Err(Error::ShapeMismatch(format!("expected square images, got {h}x{w}")));
        }
        let area = h * w;
        let mut data = Vec::with_capacity(self.data.len());
        for ci in 0..c {
            for bi in 0..b {
                data.extend_from_slice(&self.data[(bi * c + ci) * area..][..area]);
            }
        }
        Ok(FeatureMap::from_data(c, b, h, data))
    }

    pub(crate) fn from_feature_map(map: &FeatureMap<T>) -> Self {
        let (c, b, s) = (map.channels, map.batch, map.side);
        let area = s * s;
        let mut data = Vec::with_capacity(map.data.len());
        for bi in 0..b {
            for ci in 0..c {
                data.extend_from_slice(&map.data[(ci * b + bi) * area..][..area]);
            }
        }
        Self {
            shape: [b, c, s, s],
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_map_round_trip_preserves_layout() {
        let t = Tensor::<f32>::new([2, 3, 2, 2], (0..24).map(|v| v as f32).collect()).unwrap();
        let map = t.to_feature_map().unwrap();
        // channel 1 of sample 0 starts at NCHW offset 4
        assert_eq!(&map.channel(1)[..4], &[4.0, 5.0, 6.0, 7.0]);
        assert_eq!(Tensor::from_feature_map(&map), t);
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(Tensor::<f32>::new([1, 1, 2, 2], vec![0.0; 3]).is_err());
    }
}
