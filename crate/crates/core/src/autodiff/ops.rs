//! Differentiable primitives recorded on a [`Tape`].

use super::tape::{Tape, Var};
use crate::conv;
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::{Real, Tensor};

/// Lower clamp of [`Tape::bce_loss`] predictions.
pub const BCE_EPSILON: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pool {
    Avg,
    Max,
}

/// Logistic function, numerically stable on both tails and clamped so the
/// result stays strictly inside (0, 1) at the working precision.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    let one = T::one();
    let s = if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    };
    let half_eps = T::epsilon() / (one + one);
    s.max(half_eps).min(one - half_eps)
}

impl<T: Real> Tape<T> {
    /// Dilated, stride-1, same-padded convolution (cross-correlation).
    pub fn conv2d(&mut self, input: Var, kernel: Var, dilation: usize) -> Result<Var> {
        let exec = self.exec;
        let y = conv::conv2d_forward(exec, self.value(input), self.value(kernel), dilation)?;
        Ok(self.push_op(
            y,
            &[input, kernel],
            Box::new(move |nodes, g, grads| {
                let x = &nodes[input.0].value;
                let k = &nodes[kernel.0].value;
                let (wx, wk) = (grads.wants(input), grads.wants(kernel));
                let d = conv::conv2d_backward(exec, x, k, dilation, g, wx, wk)?;
                if let Some(dx) = d.input {
                    grads.accumulate(input, &dx);
                }
                if let Some(dk) = d.kernel {
                    grads.accumulate(kernel, &dk);
                }
                Ok(())
            }),
        ))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Var {
        match kind {
            Activation::Relu => self.relu(input),
            Activation::Sigmoid => self.sigmoid(input),
        }
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let y = self.value(input).map(|v| v.max(T::zero()));
        let signs: Vec<u64> = self
            .value(input)
            .data()
            .chunks(64)
            .map(|c| c.iter().enumerate().fold(0u64, |w, (i, &v)| w | (u64::from(v > T::zero()) << i)))
            .collect();
        self.record_branches(signs);
        self.push_op(
            y,
            &[input],
            Box::new(move |nodes, g, grads| {
                let x = nodes[input.0].value.data();
                grads.accumulate_with(input, x.len(), |dx| {
                    for ((d, &xv), &gv) in dx.iter_mut().zip(x).zip(g) {
                        if xv > T::zero() {
                            *d += gv;
                        }
                    }
                });
                Ok(())
            }),
        )
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        let y = self.value(input).map(sigmoid);
        let out = Var(self.nodes.len());
        self.push_op(
            y,
            &[input],
            Box::new(move |nodes, g, grads| {
                let y = nodes[out.0].value.data();
                grads.accumulate_with(input, y.len(), |dx| {
                    for ((d, &s), &gv) in dx.iter_mut().zip(y).zip(g) {
                        *d += gv * s * (T::one() - s);
                    }
                });
                Ok(())
            }),
        )
    }

    /// Reduce each channel of an NCHW tensor to one value, giving `N × C`.
    pub fn pool_global(&mut self, input: Var, mode: Pool) -> Result<Var> {
        let (n, c, h, w) = self.value(input).dims4()?;
        let plane = h * w;
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(n * c);
        let mut argmax = Vec::new();
        for ch in x.chunks(plane) {
            match mode {
                Pool::Avg => {
                    out.push(ch.iter().copied().sum::<T>() / T::from_usize(plane).unwrap())
                }
                Pool::Max => {
                    let (idx, &m) = ch
                        .iter()
                        .enumerate()
                        .fold((0, &ch[0]), |best, cur| if *cur.1 > *best.1 { cur } else { best });
                    out.push(m);
                    argmax.push(idx);
                }
            }
        }
        let y = Tensor::new(&[n, c], out)?;
        self.record_branches(argmax.iter().map(|&i| i as u64));
        Ok(self.push_op(
            y,
            &[input],
            Box::new(move |_, g, grads| {
                grads.accumulate_with(input, n * c * plane, |dx| match mode {
                    Pool::Avg => {
                        let scale = T::one() / T::from_usize(plane).unwrap();
                        for (chunk, &gv) in dx.chunks_mut(plane).zip(g) {
                            let v = gv * scale;
                            chunk.iter_mut().for_each(|d| *d += v);
                        }
                    }
                    Pool::Max => {
                        for ((chunk, &gv), &i) in dx.chunks_mut(plane).zip(g).zip(&argmax) {
                            chunk[i] += gv;
                        }
                    }
                });
                Ok(())
            }),
        ))
    }

    /// Affine map `input · weight + bias` for `input: N × F`, `weight: F × G`,
    /// `bias: G`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (xs, ws, bs) = (
            self.value(input).shape(),
            self.value(weight).shape(),
            self.value(bias).shape(),
        );
        let (n, f) = match *xs {
            [n, f] => (n, f),
            _ => return Err(Error::InvalidShape(format!("dense input must be N×F, got {xs:?}"))),
        };
        let g_out = match *ws {
            [wf, g] if wf == f => g,
            _ => {
                return Err(Error::InvalidShape(format!(
                    "dense weight {ws:?} does not match input width {f}"
                )))
            }
        };
        if bs.iter().product::<usize>() != g_out {
            return Err(Error::InvalidShape(format!(
                "dense bias {bs:?} does not match output width {g_out}"
            )));
        }
        let x = self.value(input).data();
        let w = self.value(weight).data();
        let b = self.value(bias).data();
        let mut out = Vec::with_capacity(n * g_out);
        for row in x.chunks(f) {
            for j in 0..g_out {
                let mut acc = b[j];
                for (i, &xv) in row.iter().enumerate() {
                    acc += xv * w[i * g_out + j];
                }
                out.push(acc);
            }
        }
        let y = Tensor::new(&[n, g_out], out)?;
        Ok(self.push_op(
            y,
            &[input, weight, bias],
            Box::new(move |nodes, g, grads| {
                let x = nodes[input.0].value.data();
                let w = nodes[weight.0].value.data();
                grads.accumulate_with(input, n * f, |dx| {
                    for (s, gr) in g.chunks(g_out).enumerate() {
                        for i in 0..f {
                            let mut acc = T::zero();
                            for (j, &gv) in gr.iter().enumerate() {
                                acc += gv * w[i * g_out + j];
                            }
                            dx[s * f + i] += acc;
                        }
                    }
                });
                grads.accumulate_with(weight, f * g_out, |dw| {
                    for (row, gr) in x.chunks(f).zip(g.chunks(g_out)) {
                        for (i, &xv) in row.iter().enumerate() {
                            for (j, &gv) in gr.iter().enumerate() {
                                dw[i * g_out + j] += xv * gv;
                            }
                        }
                    }
                });
                grads.accumulate_with(bias, g_out, |db| {
                    for gr in g.chunks(g_out) {
                        for (d, &gv) in db.iter_mut().zip(gr) {
                            *d += gv;
                        }
                    }
                });
                Ok(())
            }),
        ))
    }

    /// Channel-wise concatenation; channels of `a` come first.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, ca, ha, wa) = self.value(a).dims4()?;
        let (nb, cb, hb, wb) = self.value(b).dims4()?;
        if (na, ha, wa) != (nb, hb, wb) {
            return Err(Error::InvalidShape(format!(
                "cannot concatenate {:?} with {:?}: batch and spatial extents differ",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let (sa, sb) = (ca * ha * wa, cb * hb * wb);
        let (xa, xb) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(na * (sa + sb));
        for s in 0..na {
            out.extend_from_slice(&xa[s * sa..(s + 1) * sa]);
            out.extend_from_slice(&xb[s * sb..(s + 1) * sb]);
        }
        let y = Tensor::new(&[na, ca + cb, ha, wa], out)?;
        Ok(self.push_op(
            y,
            &[a, b],
            Box::new(move |_, g, grads| {
                grads.accumulate_with(a, na * sa, |da| {
                    for s in 0..na {
                        let src = &g[s * (sa + sb)..s * (sa + sb) + sa];
                        for (d, &v) in da[s * sa..(s + 1) * sa].iter_mut().zip(src) {
                            *d += v;
                        }
                    }
                });
                grads.accumulate_with(b, na * sb, |db| {
                    for s in 0..na {
                        let src = &g[s * (sa + sb) + sa..(s + 1) * (sa + sb)];
                        for (d, &v) in db[s * sb..(s + 1) * sb].iter_mut().zip(src) {
                            *d += v;
                        }
                    }
                });
                Ok(())
            }),
        ))
    }

    /// Multiply every element of sample `n` by `scale[n]`.
    pub fn scale_by_scalar(&mut self, input: Var, scale: Var) -> Result<Var> {
        let x = self.value(input);
        let s = self.value(scale).data();
        let n = x.shape()[0];
        if s.len() != n {
            return Err(Error::InvalidShape(format!(
                "{} scale factors for a batch of {n}",
                s.len()
            )));
        }
        let per = x.numel() / n;
        let mut out = x.data().to_vec();
        for (chunk, &sv) in out.chunks_mut(per).zip(s) {
            chunk.iter_mut().for_each(|v| *v *= sv);
        }
        let y = Tensor::new(x.shape(), out)?;
        Ok(self.push_op(
            y,
            &[input, scale],
            Box::new(move |nodes, g, grads| {
                let x = nodes[input.0].value.data();
                let s = nodes[scale.0].value.data();
                grads.accumulate_with(input, x.len(), |dx| {
                    for ((d, gr), &sv) in dx.chunks_mut(per).zip(g.chunks(per)).zip(s) {
                        for (dv, &gv) in d.iter_mut().zip(gr) {
                            *dv += gv * sv;
                        }
                    }
                });
                grads.accumulate_with(scale, n, |ds| {
                    for ((dv, xr), gr) in ds.iter_mut().zip(x.chunks(per)).zip(g.chunks(per)) {
                        *dv += xr.iter().zip(gr).map(|(&a, &b)| a * b).sum::<T>();
                    }
                });
                Ok(())
            }),
        ))
    }

    /// `1 − x` element-wise.
    pub fn one_minus(&mut self, input: Var) -> Var {
        let y = self.value(input).map(|v| T::one() - v);
        self.push_op(
            y,
            &[input],
            Box::new(move |_, g, grads| {
                grads.accumulate_with(input, g.len(), |dx| {
                    for (d, &gv) in dx.iter_mut().zip(g) {
                        *d -= gv;
                    }
                });
                Ok(())
            }),
        )
    }

    /// Element-wise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::InvalidShape("element-wise product of unequal shapes".into()));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let y = Tensor::new(self.value(a).shape(), data)?;
        Ok(self.push_op(
            y,
            &[a, b],
            Box::new(move |nodes, g, grads| {
                let (xa, xb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                grads.accumulate_with(a, g.len(), |d| {
                    for ((dv, &gv), &o) in d.iter_mut().zip(g).zip(xb) {
                        *dv += gv * o;
                    }
                });
                grads.accumulate_with(b, g.len(), |d| {
                    for ((dv, &gv), &o) in d.iter_mut().zip(g).zip(xa) {
                        *dv += gv * o;
                    }
                });
                Ok(())
            }),
        ))
    }

    /// Sum of all elements as a `[1]` tensor.
    pub fn sum(&mut self, input: Var) -> Var {
        let y = Tensor::scalar(self.value(input).sum());
        let len = self.value(input).numel();
        self.push_op(
            y,
            &[input],
            Box::new(move |_, g, grads| {
                let gv = g[0];
                grads.accumulate_with(input, len, |d| d.iter_mut().for_each(|v| *v += gv));
                Ok(())
            }),
        )
    }

    /// Inverted dropout: during training each element is zeroed with
    /// probability `rate` and survivors are scaled by `1/(1 − rate)`.
    /// Outside training (or at rate 0) the input var is returned unchanged.
    pub fn dropout(&mut self, input: Var, rate: f64, training: bool, rng_seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(input);
        }
        let keep_scale = T::from_f64_lossy(1.0 / (1.0 - rate));
        // drop when a uniform 32-bit draw falls below rate·2³²
        let cutoff = (rate * 4_294_967_296.0).round() as u64;
        let x = self.value(input);
        let mut mask = vec![keep_scale; x.numel()];
        for (i, pair) in mask.chunks_mut(2).enumerate() {
            let z = seed::counter(rng_seed, i as u64);
            for (m, bits) in pair.iter_mut().zip([z & 0xFFFF_FFFF, z >> 32]) {
                if bits < cutoff {
                    *m = T::zero();
                }
            }
        }
        let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let y = Tensor::new(x.shape(), data)?;
        Ok(self.push_op(
            y,
            &[input],
            Box::new(move |_, g, grads| {
                grads.accumulate_with(input, g.len(), |d| {
                    for ((dv, &gv), &m) in d.iter_mut().zip(g).zip(&mask) {
                        *dv += gv * m;
                    }
                });
                Ok(())
            }),
        ))
    }

    /// Mean binary cross-entropy of per-sample probabilities against 0/1
    /// labels, with predictions clamped to `[ε, 1 − ε]`.
    pub fn bce_loss(&mut self, prediction: Var, labels: &[T]) -> Result<Var> {
        let p = self.value(prediction).data();
        if p.len() != labels.len() {
            return Err(Error::InvalidShape(format!(
                "{} predictions for {} labels",
                p.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y != T::zero() && y != T::one()) {
            return Err(Error::InvalidLabel(bad.to_string()));
        }
        let eps = T::from_f64_lossy(BCE_EPSILON);
        let (lo, hi) = (eps, T::one() - eps);
        let count = T::from_usize(p.len()).unwrap();
        let total: T = p
            .iter()
            .zip(labels)
            .map(|(&pv, &y)| {
                let q = pv.max(lo).min(hi);
                -(y * q.ln() + (T::one() - y) * (T::one() - q).ln())
            })
            .sum();
        let regions: Vec<u64> = p.iter().map(|&pv| u64::from(pv < lo) + 2 * u64::from(pv > hi)).collect();
        self.record_branches(regions);
        let labels = labels.to_vec();
        Ok(self.push_op(
            Tensor::scalar(total / count),
            &[prediction],
            Box::new(move |nodes, g, grads| {
                let p = nodes[prediction.0].value.data();
                let scale = g[0] / count;
                grads.accumulate_with(prediction, p.len(), |d| {
                    for ((dv, &pv), &y) in d.iter_mut().zip(p).zip(&labels) {
                        // the clamp is flat outside [ε, 1 − ε]
                        if pv >= lo && pv <= hi {
                            *dv += scale * (-y / pv + (T::one() - y) / (T::one() - pv));
                        }
                    }
                });
                Ok(())
            }),
        ))
    }
}
