use super::{Element, FeatureMap};

pub const NORM_EPS: f64 = 1e-5;

/// Saved state of an instance-normalization forward pass.
#[derive(Clone, Debug)]
pub struct NormCache<T> {
    normalized: Vec<T>,
    inv_std: Vec<T>,
}

/// Per-sample, per-channel normalization followed by a learned affine map.
pub fn instance_norm<T: Element>(
    x: &FeatureMap<T>,
    gamma: &[T],
    beta: &[T],
) -> (FeatureMap<T>, NormCache<T>) {
    let area = x.side * x.side;
    let count = T::from_f64(area as f64);
    let eps = T::from_f64(NORM_EPS);
    let mut normalized = Vec::with_capacity(x.data.len());
    let mut inv_std = Vec::with_capacity(x.channels * x.batch);
    let mut y = Vec::with_capacity(x.data.len());
    for (g, group) in x.data.chunks(area).enumerate() {
        let c = g / x.batch;
        let mean = group.iter().copied().sum::<T>() / count;
        let var = group.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / count;
        let inv = T::ONE / (var + eps).sqrt();
        inv_std.push(inv);
        for &v in group {
            let h = (v - mean) * inv;
            normalized.push(h);
            y.push(gamma[c] * h + beta[c]);
        }
    }
    (
        FeatureMap::from_data(x.channels, x.batch, x.side, y),
        NormCache { normalized, inv_std },
    )
}

/// Returns the input gradient; accumulates into `d_gamma` / `d_beta`.
pub fn instance_norm_backward<T: Element>(
    cache: &NormCache<T>,
    gamma: &[T],
    dy: &FeatureMap<T>,
    d_gamma: &mut [T],
    d_beta: &mut [T],
) -> FeatureMap<T> {
    let area = dy.side * dy.side;
    let count = T::from_f64(area as f64);
    let mut dx = Vec::with_capacity(dy.data.len());
    for (g, (dgroup, hgroup)) in dy
        .data
        .chunks(area)
        .zip(cache.normalized.chunks(area))
        .enumerate()
    {
        let c = g / dy.batch;
        let mut sum_dy = T::ZERO;
        let mut sum_dy_h = T::ZERO;
        for (&d, &h) in dgroup.iter().zip(hgroup) {
            sum_dy += d;
            sum_dy_h += d * h;
        }
        d_beta[c] += sum_dy;
        d_gamma[c] += sum_dy_h;
        let mean_dh = gamma[c] * sum_dy / count;
        let mean_dh_h = gamma[c] * sum_dy_h / count;
        let inv = cache.inv_std[g];
        for (&d, &h) in dgroup.iter().zip(hgroup) {
            dx.push(inv * (gamma[c] * d - mean_dh - h * mean_dh_h));
        }
    }
    FeatureMap::from_data(dy.channels, dy.batch, dy.side, dx)
}
