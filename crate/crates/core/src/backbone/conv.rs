//! 3x3 same-padding convolution and 2x2 max pooling over channel-major maps.
//!
//! Convolutions are lowered to `im2col` + GEMM over horizontal stripes of the
//! output. Stripe boundaries depend only on the map shape, so results do not
//! depend on how many threads execute the stripes.

use num_traits::Float;
use rayon::prelude::*;

/// Upper bound on elements in one stripe's column matrix.
const STRIPE_BUDGET: usize = 1 << 22;

pub trait Scalar: Float + Send + Sync + Default + std::fmt::Debug + 'static {
    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn of_f32(v: f32) -> Self;

    /// `c = a * b` for row-major `a: m x k`, `b: k x n`, `c` with row stride `ldc`.
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], b: &[Self], c: &mut [Self], ldc: usize);
}

impl Scalar for f32 {
    fn of_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
    fn of_f32(v: f32) -> Self {
        v
    }
    fn gemm(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32], ldc: usize) {
        assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= (m - 1) * ldc + n);
        // SAFETY: bounds asserted above; strides describe row-major layouts.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                k as isize,
                1,
                b.as_ptr(),
                n as isize,
                1,
                0.0,
                c.as_mut_ptr(),
                ldc as isize,
                1,
            );
        }
    }
}

impl Scalar for f64 {
    fn of_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn of_f32(v: f32) -> Self {
        f64::from(v)
    }
    fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], ldc: usize) {
        assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= (m - 1) * ldc + n);
        // SAFETY: bounds asserted above; strides describe row-major layouts.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                k as isize,
                1,
                b.as_ptr(),
                n as isize,
                1,
                0.0,
                c.as_mut_ptr(),
                ldc as isize,
                1,
            );
        }
    }
}

/// Kernel in `[out][in][3][3]` order with its bias, converted to `T`.
#[derive(Debug, Clone)]
pub struct Kernel<T> {
    pub out_channels: usize,
    pub in_channels: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Kernel<T> {
    pub fn from_f32(
        out_channels: usize,
        in_channels: usize,
        weights: &[f32],
        bias: &[f32],
    ) -> Self {
        Self {
            out_channels,
            in_channels,
            weights: weights.iter().map(|&w| T::of_f32(w)).collect(),
            bias: bias.iter().map(|&b| T::of_f32(b)).collect(),
        }
    }

    /// The kernel whose correlation computes the input gradient of `self`:
    /// channels swapped, taps rotated by 180 degrees, zero bias.
    pub fn transposed(&self) -> Self {
        let (co_n, ci_n) = (self.out_channels, self.in_channels);
        let mut weights = vec![T::zero(); self.weights.len()];
        for co in 0..co_n {
            for ci in 0..ci_n {
                for t in 0..9 {
                    weights[(ci * co_n + co) * 9 + (8 - t)] =
                        self.weights[(co * ci_n + ci) * 9 + t];
                }
            }
        }
        Self {
            out_channels: ci_n,
            in_channels: co_n,
            weights,
            bias: vec![T::zero(); ci_n],
        }
    }
}

/// Stride-1, zero-padded 3x3 cross-correlation plus bias.
pub fn conv3x3<T: Scalar>(input: &[T], height: usize, width: usize, kernel: &Kernel<T>) -> Vec<T> {
    let plane = height * width;
    let c_in = kernel.in_channels;
    let c_out = kernel.out_channels;
    debug_assert_eq!(input.len(), c_in * plane);
    let k = c_in * 9;
    let rows_per_stripe = (STRIPE_BUDGET / (k * width).max(1)).clamp(1, height.max(1));
    let stripes: Vec<(usize, usize)> = (0..height)
        .step_by(rows_per_stripe)
        .map(|y0| (y0, (y0 + rows_per_stripe).min(height)))
        .collect();

    let partials: Vec<Vec<T>> = stripes
        .par_iter()
        .map(|&(y0, y1)| {
            let n = (y1 - y0) * width;
            let mut col = vec![T::zero(); k * n];
            for ci in 0..c_in {
                let src = &input[ci * plane..(ci + 1) * plane];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let row = &mut col[(ci * 9 + ky * 3 + kx) * n..][..n];
                        for y in y0..y1 {
                            let sy = y as isize + ky as isize - 1;
                            if sy < 0 || sy >= height as isize {
                                continue;
                            }
                            let src_row = &src[sy as usize * width..][..width];
                            let dst = &mut row[(y - y0) * width..][..width];
                            match kx {
                                0 => dst[1..].copy_from_slice(&src_row[..width - 1]),
                                1 => dst.copy_from_slice(src_row),
                                _ => dst[..width - 1].copy_from_slice(&src_row[1..]),
                            }
                        }
                    }
                }
            }
            let mut out = vec![T::zero(); c_out * n];
            T::gemm(c_out, k, n, &kernel.weights, &col, &mut out, n);
            for (co, chunk) in out.chunks_mut(n).enumerate() {
                let b = kernel.bias[co];
                for v in chunk {
                    *v = *v + b;
                }
            }
            out
        })
        .collect();

    let mut output = vec![T::zero(); c_out * plane];
    for (&(y0, y1), part) in stripes.iter().zip(&partials) {
        let n = (y1 - y0) * width;
        for co in 0..c_out {
            output[co * plane + y0 * width..][..n].copy_from_slice(&part[co * n..][..n]);
        }
    }
    output
}

pub fn relu_in_place<T: Scalar>(data: &mut [T]) {
    for v in data {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
}

/// 2x2 stride-2 max pooling with floor semantics. Returns pooled values and the
/// in-plane index of each winner; ties go to the first element in row-major order.
pub fn max_pool2x2<T: Scalar>(
    input: &[T],
    channels: usize,
    height: usize,
    width: usize,
) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = (height / 2, width / 2);
    let mut out = Vec::with_capacity(channels * oh * ow);
    let mut arg = Vec::with_capacity(channels * oh * ow);
    for c in 0..channels {
        let src = &input[c * height * width..(c + 1) * height * width];
        for y in 0..oh {
            for x in 0..ow {
                let candidates = [
                    2 * y * width + 2 * x,
                    2 * y * width + 2 * x + 1,
                    (2 * y + 1) * width + 2 * x,
                    (2 * y + 1) * width + 2 * x + 1,
                ];
                let mut best = candidates[0];
                for &i in &candidates[1..] {
                    if src[i] > src[best] {
                        best = i;
                    }
                }
                out.push(src[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

pub fn max_unpool2x2<T: Scalar>(
    grad: &[T],
    argmax: &[u32],
    channels: usize,
    height: usize,
    width: usize,
) -> Vec<T> {
    let pooled = (height / 2) * (width / 2);
    let mut out = vec![T::zero(); channels * height * width];
    for c in 0..channels {
        for j in 0..pooled {
            let i = c * pooled + j;
            let dst = c * height * width + argmax[i] as usize;
            out[dst] = out[dst] + grad[i];
        }
    }
    out
}
