use super::{Element, FeatureMap};

pub const KERNEL: usize = 4;
pub const STRIDE: usize = 2;
pub const PADDING: usize = 1;

const TAPS: usize = KERNEL * KERNEL;

/// Unfolds a map of side `s` into the `(C*16) x (N*(s/2)^2)` patch matrix of a
/// 4x4, stride-2, pad-1 convolution.
pub fn im2col<T: Element>(x: &FeatureMap<T>) -> Vec<T> {
    let (c, n, s) = (x.channels, x.batch, x.side);
    let o = s / STRIDE;
    let cols = n * o * o;
    let mut out = vec![T::ZERO; c * TAPS * cols];
    for ci in 0..c {
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut out[((ci * TAPS) + ky * KERNEL + kx) * cols..][..cols];
                for ni in 0..n {
                    let src = &x.data[(ci * n + ni) * s * s..][..s * s];
                    for oy in 0..o {
                        let iy = (oy * STRIDE + ky) as isize - PADDING as isize;
                        if iy < 0 || iy >= s as isize {
                            continue;
                        }
                        let src_row = &src[iy as usize * s..][..s];
                        let dst = &mut row[(ni * o + oy) * o..][..o];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * STRIDE + kx) as isize - PADDING as isize;
                            if ix >= 0 && ix < s as isize {
                                *d = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: folds a patch matrix back onto a map of side `side`,
/// summing overlapping taps.
pub fn col2im<T: Element>(col: &[T], channels: usize, batch: usize, side: usize) -> FeatureMap<T> {
    let (c, n, s) = (channels, batch, side);
    let o = s / STRIDE;
    let cols = n * o * o;
    assert_eq!(col.len(), c * TAPS * cols, "col2im: patch matrix size");
    let mut out = FeatureMap::zeros(c, n, s);
    for ci in 0..c {
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &col[((ci * TAPS) + ky * KERNEL + kx) * cols..][..cols];
                for ni in 0..n {
                    let dst = &mut out.data[(ci * n + ni) * s * s..][..s * s];
                    for oy in 0..o {
                        let iy = (oy * STRIDE + ky) as isize - PADDING as isize;
                        if iy < 0 || iy >= s as isize {
                            continue;
                        }
                        let dst_row = &mut dst[iy as usize * s..][..s];
                        let src = &row[(ni * o + oy) * o..][..o];
                        for (ox, &v) in src.iter().enumerate() {
                            let ix = (ox * STRIDE + kx) as isize - PADDING as isize;
                            if ix >= 0 && ix < s as isize {
                                dst_row[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Stride-2 convolution halving the side. `weight` is `cout x (cin*16)`.
pub fn conv_down<T: Element>(x: &FeatureMap<T>, weight: &[T], cout: usize) -> FeatureMap<T> {
    let o = x.side / STRIDE;
    let cols = x.batch * o * o;
    let k = x.channels * TAPS;
    let col = im2col(x);
    let mut y = FeatureMap::zeros(cout, x.batch, o);
    T::gemm(false, false, cout, cols, k, T::ONE, weight, &col, T::ZERO, &mut y.data);
    y
}

/// Returns the input gradient and accumulates into `d_weight`.
pub fn conv_down_backward<T: Element>(
    x: &FeatureMap<T>,
    weight: &[T],
    dy: &FeatureMap<T>,
    d_weight: &mut [T],
) -> FeatureMap<T> {
    let cout = dy.channels;
    let cols = dy.plane();
    let k = x.channels * TAPS;
    let col = im2col(x);
    T::gemm(false, true, cout, k, cols, T::ONE, &dy.data, &col, T::ONE, d_weight);
    let mut d_col = vec![T::ZERO; k * cols];
    T::gemm(true, false, k, cols, cout, T::ONE, weight, &dy.data, T::ZERO, &mut d_col);
    col2im(&d_col, x.channels, x.batch, x.side)
}

/// Stride-2 transposed convolution doubling the side. `weight` is
/// `cin x (cout*16)`.
pub fn conv_up<T: Element>(x: &FeatureMap<T>, weight: &[T], cout: usize) -> FeatureMap<T> {
    let cols = x.plane();
    let rows = cout * TAPS;
    let mut col = vec![T::ZERO; rows * cols];
    T::gemm(true, false, rows, cols, x.channels, T::ONE, weight, &x.data, T::ZERO, &mut col);
    col2im(&col, cout, x.batch, x.side * STRIDE)
}

/// Returns the input gradient and accumulates into `d_weight`.
pub fn conv_up_backward<T: Element>(
    x: &FeatureMap<T>,
    weight: &[T],
    dy: &FeatureMap<T>,
    d_weight: &mut [T],
) -> FeatureMap<T> {
    let cin = x.channels;
    let cols = x.plane();
    let rows = dy.channels * TAPS;
    let d_col = im2col(dy);
    T::gemm(false, true, cin, rows, cols, T::ONE, &x.data, &d_col, T::ONE, d_weight);
    let mut dx = FeatureMap::zeros(cin, x.batch, x.side);
    T::gemm(false, false, cin, cols, rows, T::ONE, weight, &d_col, T::ZERO, &mut dx.data);
    dx
}
