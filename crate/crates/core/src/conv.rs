//! Stride-1, same-padded dilated 2-D convolution on NCHW tensors.
//!
//! Implemented as cross-correlation, `y(i, j) = Σ x(i + m·r − p, j + n·r − p) k(m, n)`,
//! with zero padding `p = r·(k − 1)/2` per side. The textbook convolution
//! flips the kernel (negative offsets); since kernels are learned the two are
//! interchangeable, and every oracle in this crate uses the same orientation.
//!
//! Each sample is computed tap-major: channels are projected first,
//! `Z = K'·x` with `K'` of shape `(O·k·k) × C`, and each output plane sums the
//! `k·k` shifted planes of `Z`. Zero padding is identical across channels, so
//! projecting before shifting is exact, and the work is one well-shaped matrix
//! product per sample rather than a product over a lowered column matrix.

use crate::error::{Error, Result};
use crate::parallel::Exec;
use crate::tensor::{Real, Tensor};

/// Resolved sizes of one convolution call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], kernel: &[usize], dilation: usize) -> Result<Self> {
        let [batch, in_channels, height, width] = *input else {
            return Err(Error::InvalidShape(format!(
                "convolution input must be NCHW, got {input:?}"
            )));
        };
        let [out_channels, k_in, kh, kw] = *kernel else {
            return Err(Error::InvalidShape(format!(
                "convolution kernel must be O×I×kH×kW, got {kernel:?}"
            )));
        };
        if dilation < 1 {
            return Err(Error::InvalidDilation(dilation));
        }
        if k_in != in_channels {
            return Err(Error::ChannelMismatch(format!(
                "kernel expects {k_in} input channels, input has {in_channels}"
            )));
        }
        if kh != kw {
            return Err(Error::InvalidShape(format!(
                "kernel must be square, got {kh}×{kw}"
            )));
        }
        if kh % 2 == 0 {
            return Err(Error::EvenKernel(kh));
        }
        // r·(k−1) is even for odd k, so the padding is always integral here.
        let pad = dilation * (kh - 1) / 2;
        Ok(Self {
            batch,
            in_channels,
            out_channels,
            height,
            width,
            kernel: kh,
            dilation,
            pad,
        })
    }

    #[inline]
    fn plane(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    fn patch(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.out_channels, self.height, self.width]
    }

    /// Side length of the input window seen by one output position.
    pub fn receptive_field(&self) -> usize {
        (self.kernel - 1) * self.dilation + 1
    }

    /// Output columns `[lo, hi)` whose tap at kernel offset `tap` lands inside
    /// an axis of length `len`.
    #[inline]
    fn valid_range(&self, tap: usize, len: usize) -> (usize, usize) {
        let shift = tap * self.dilation;
        let lo = self.pad.saturating_sub(shift).min(len);
        let hi = (len + self.pad).saturating_sub(shift).min(len);
        (lo, hi.max(lo))
    }

    /// Visit every in-bounds row segment of every tap: `f(tap, oh, ow, ih, iw, len)`
    /// pairs output row `oh` columns `ow..ow+len` with input row `ih` columns
    /// `iw..iw+len`.
    #[inline]
    fn for_each_segment(&self, mut f: impl FnMut(usize, usize, usize, usize, usize, usize)) {
        let k = self.kernel;
        for ki in 0..k {
            let (oh_lo, oh_hi) = self.valid_range(ki, self.height);
            for kj in 0..k {
                let (ow_lo, ow_hi) = self.valid_range(kj, self.width);
                if ow_lo == ow_hi {
                    continue;
                }
                let iw0 = ow_lo + kj * self.dilation - self.pad;
                for oh in oh_lo..oh_hi {
                    let ih = oh + ki * self.dilation - self.pad;
                    f(ki * k + kj, oh, ow_lo, ih, iw0, ow_hi - ow_lo);
                }
            }
        }
    }

    /// Kernel rearranged to `(O·k·k) × C`, rows ordered by output channel then tap.
    fn tap_major_kernel<T: Real>(&self, kd: &[T]) -> Vec<T> {
        let (c, kk) = (self.in_channels, self.kernel * self.kernel);
        let mut out = vec![T::zero(); self.out_channels * kk * c];
        for o in 0..self.out_channels {
            for ci in 0..c {
                for t in 0..kk {
                    out[(o * kk + t) * c + ci] = kd[(o * c + ci) * kk + t];
                }
            }
        }
        out
    }

    /// `y[o] = Σ_tap shift_tap(Z[o, tap])` where `Z = K'·x`.
    fn tap_forward<T: Real>(&self, x: &[T], kt: &[T], y: &mut [T]) {
        let (w, plane, c, kk) = (self.width, self.plane(), self.in_channels, self.kernel * self.kernel);
        let rows = self.out_channels * kk;
        let mut z = vec![T::zero(); rows * plane];
        unsafe { gemm_nn(rows, c, plane, kt, x, &mut z) };
        for o in 0..self.out_channels {
            let yo = &mut y[o * plane..(o + 1) * plane];
            let zo = &z[o * kk * plane..(o + 1) * kk * plane];
            self.for_each_segment(|tap, oh, ow, ih, iw, len| {
                let src = &zo[tap * plane + ih * w + iw..tap * plane + ih * w + iw + len];
                for (d, &v) in yo[oh * w + ow..oh * w + ow + len].iter_mut().zip(src) {
                    *d += v;
                }
            });
        }
    }

    /// `S[o, tap]`: the upstream gradient moved back onto input positions.
    fn tap_scatter<T: Real>(&self, dy: &[T]) -> Vec<T> {
        let (w, plane, kk) = (self.width, self.plane(), self.kernel * self.kernel);
        let mut s = vec![T::zero(); self.out_channels * kk * plane];
        for o in 0..self.out_channels {
            let dyo = &dy[o * plane..(o + 1) * plane];
            let so = &mut s[o * kk * plane..(o + 1) * kk * plane];
            self.for_each_segment(|tap, oh, ow, ih, iw, len| {
                so[tap * plane + ih * w + iw..tap * plane + ih * w + iw + len]
                    .copy_from_slice(&dyo[oh * w + ow..oh * w + ow + len]);
            });
        }
        s
    }
}

/// Row-major `c = a·b` for `a: m×k`, `b: k×n`.
unsafe fn gemm_nn<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    T::gemm(m, k, n, T::one(), a.as_ptr(), k as isize, 1, b.as_ptr(), n as isize, 1, T::zero(), c.as_mut_ptr(), n as isize, 1);
}

/// `c = a·bᵀ` for `a: m×k`, stored `b: n×k`.
unsafe fn gemm_nt<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    T::gemm(m, k, n, T::one(), a.as_ptr(), k as isize, 1, b.as_ptr(), 1, k as isize, T::zero(), c.as_mut_ptr(), n as isize, 1);
}

/// Forward pass: returns an `N × O × H × W` tensor.
pub fn conv2d_forward<T: Real>(
    exec: Exec,
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    dilation: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(input.shape(), kernel.shape(), dilation)?;
    let (plane, o) = (g.plane(), g.out_channels);
    let x = input.data();
    let kd = kernel.data();
    let (cin, kt) = (g.in_channels, g.tap_major_kernel(kd));
    let mut out = vec![T::zero(); g.batch * o * plane];
    exec.for_each_chunk_mut(&mut out, o * plane, |n, y| {
        g.tap_forward(&x[n * cin * plane..(n + 1) * cin * plane], &kt, y);
    });
    Tensor::new(&g.output_shape(), out)
}

/// Gradients of a convolution with respect to its input and kernel.
pub struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub kernel: Option<Vec<T>>,
}

/// Backward pass given the upstream gradient of the output.
///
/// Per-sample kernel gradients are reduced in sample order, so every
/// execution strategy produces bitwise-identical results.
pub fn conv2d_backward<T: Real>(
    exec: Exec,
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    dilation: usize,
    grad_out: &[T],
    need_input: bool,
    need_kernel: bool,
) -> Result<ConvGrads<T>> {
    let g = ConvGeometry::new(input.shape(), kernel.shape(), dilation)?;
    let (plane, patch, o, cin) = (g.plane(), g.patch(), g.out_channels, g.in_channels);
    if grad_out.len() != g.batch * o * plane {
        return Err(Error::InvalidShape(
            "upstream gradient does not match convolution output".into(),
        ));
    }
    let x = input.data();
    let kd = kernel.data();
    let kk = g.kernel * g.kernel;
    let ktt = need_input.then(|| {
        // K'ᵀ stored contiguously as C × (O·kk)
        let kt = g.tap_major_kernel(kd);
        let rows = o * kk;
        let mut t = vec![T::zero(); cin * rows];
        for r in 0..rows {
            for c in 0..cin {
                t[c * rows + r] = kt[r * cin + c];
            }
        }
        t
    });

    let per_sample = exec.map_collect(g.batch, |n| {
        let dy = &grad_out[n * o * plane..(n + 1) * o * plane];
        let xn = &x[n * cin * plane..(n + 1) * cin * plane];
        let rows = o * kk;
        let s = g.tap_scatter(dy);
        // dx (C × HW) = K'ᵀ (C × O·kk) · S (O·kk × HW)
        let dx = need_input.then(|| {
            let mut dx = vec![T::zero(); cin * plane];
            unsafe { gemm_nn(cin, rows, plane, ktt.as_ref().unwrap(), &s, &mut dx) };
            dx
        });
        // dK' (O·kk × C) = S · xᵀ, then back to O × C × kk
        let dk = need_kernel.then(|| {
            let mut dkt = vec![T::zero(); rows * cin];
            unsafe { gemm_nt(rows, plane, cin, &s, xn, &mut dkt) };
            let mut dk = vec![T::zero(); o * patch];
            for oi in 0..o {
                for ci in 0..cin {
                    for t in 0..kk {
                        dk[(oi * cin + ci) * kk + t] = dkt[(oi * kk + t) * cin + ci];
                    }
                }
            }
            dk
        });
        (dx, dk)
    });

    let mut grads = ConvGrads {
        input: need_input.then(|| Vec::with_capacity(g.batch * cin * plane)),
        kernel: need_kernel.then(|| vec![T::zero(); o * patch]),
    };
    for (dx, dk) in per_sample {
        if let (Some(acc), Some(dx)) = (grads.input.as_mut(), dx) {
            acc.extend_from_slice(&dx);
        }
        if let (Some(acc), Some(dk)) = (grads.kernel.as_mut(), dk) {
            for (a, b) in acc.iter_mut().zip(dk) {
                *a += b;
            }
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(shape: &[usize]) -> Tensor<f64> {
        Tensor::full(shape, 1.0)
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = Tensor::<f64>::from_fn(&[1, 1, 5, 5], |i| i as f64 * 0.5 - 3.0);
        let mut k = Tensor::<f64>::zeros(&[1, 1, 3, 3]);
        k.data_mut()[4] = 1.0;
        for r in [1, 2] {
            let y = conv2d_forward(Exec::Sequential, &x, &k, r).unwrap();
            assert_eq!(y, x);
        }
    }

    #[test]
    fn all_ones_counts_overlap() {
        let y = conv2d_forward(Exec::Sequential, &ones(&[1, 1, 5, 5]), &ones(&[1, 1, 3, 3]), 1)
            .unwrap();
        assert_eq!(y.at4(0, 0, 0, 0), 4.0);
        assert_eq!(y.at4(0, 0, 4, 4), 4.0);
        assert_eq!(y.at4(0, 0, 0, 2), 6.0);
        assert_eq!(y.at4(0, 0, 2, 2), 9.0);
        assert_eq!(y.at4(0, 0, 1, 3), 9.0);
    }

    #[test]
    fn dilation_two_counts_strided_taps() {
        let y = conv2d_forward(Exec::Sequential, &ones(&[1, 1, 5, 5]), &ones(&[1, 1, 3, 3]), 2)
            .unwrap();
        // corner: taps at offsets {0, 2} on each axis are inside
        assert_eq!(y.at4(0, 0, 0, 0), 4.0);
        assert_eq!(y.at4(0, 0, 2, 2), 9.0);
        assert_eq!(y.at4(0, 0, 1, 1), 4.0);
    }

    #[test]
    fn geometry_errors() {
        let x = [1, 2, 5, 5];
        assert!(matches!(
            ConvGeometry::new(&x, &[1, 3, 3, 3], 1),
            Err(Error::ChannelMismatch(_))
        ));
        assert!(matches!(
            ConvGeometry::new(&x, &[1, 2, 3, 3], 0),
            Err(Error::InvalidDilation(0))
        ));
        assert!(matches!(
            ConvGeometry::new(&x, &[1, 2, 2, 2], 1),
            Err(Error::EvenKernel(2))
        ));
        let g = ConvGeometry::new(&x, &[4, 2, 3, 3], 2).unwrap();
        assert_eq!(g.receptive_field(), 5);
        assert_eq!(g.pad, 2);
        assert_eq!(g.output_shape(), [1, 4, 5, 5]);
    }

    #[test]
    fn tiny_images_smaller_than_receptive_field() {
        let x = Tensor::<f64>::from_fn(&[1, 1, 1, 2], |i| i as f64 + 1.0);
        let y = conv2d_forward(Exec::Sequential, &x, &ones(&[1, 1, 3, 3]), 2).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }
}
