//! One gated-dilated layer.
//!
//! A one-filter 3×3 convolution, ReLU, global average pooling and a single
//! sigmoid neuron turn the layer input `X` into a per-sample attention scalar
//! `α`. The input is then split by two soft gates, `I₁ = αX` and
//! `I₂ = (1 − α)X`, which feed a dilation-1 and a dilation-2 convolution
//! respectively. Both branches pass through ReLU and are concatenated along
//! the channel axis, so the layer emits `2·S` channels at the input's spatial
//! size.

use crate::autodiff::{Pool, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const KERNEL_SIZE: usize = 3;
pub const NARROW_DILATION: usize = 1;
pub const WIDE_DILATION: usize = 2;

/// Weights of the attention sub-network.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextSubnetParams<T> {
    /// `1 × C_in × 3 × 3`
    pub attn_kernel: Tensor<T>,
    /// `1 × 1`
    pub neuron_weight: Tensor<T>,
    /// `[1]`
    pub neuron_bias: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GdLayerParams<T> {
    /// `S × C_in × 3 × 3`, applied at dilation 1.
    pub k1: Tensor<T>,
    /// `S × C_in × 3 × 3`, applied at dilation 2.
    pub k2: Tensor<T>,
    pub subnet: ContextSubnetParams<T>,
}

impl<T: Real> ContextSubnetParams<T> {
    pub fn zeros(in_channels: usize) -> Self {
        Self {
            attn_kernel: Tensor::zeros(&[1, in_channels, KERNEL_SIZE, KERNEL_SIZE]),
            neuron_weight: Tensor::zeros(&[1, 1]),
            neuron_bias: Tensor::zeros(&[1]),
        }
    }
}

impl<T: Real> GdLayerParams<T> {
    pub fn zeros(in_channels: usize, branch_width: usize) -> Self {
        let k = [branch_width, in_channels, KERNEL_SIZE, KERNEL_SIZE];
        Self {
            k1: Tensor::zeros(&k),
            k2: Tensor::zeros(&k),
            subnet: ContextSubnetParams::zeros(in_channels),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.k1.shape()[1]
    }

    pub fn branch_width(&self) -> usize {
        self.k1.shape()[0]
    }

    pub fn out_channels(&self) -> usize {
        2 * self.branch_width()
    }

    /// Check the layer's internal shape contract.
    pub fn validate(&self) -> Result<()> {
        let c = self.in_channels();
        let expect = [self.branch_width(), c, KERNEL_SIZE, KERNEL_SIZE];
        for (name, t, want) in [
            ("k1", &self.k1, &expect[..]),
            ("k2", &self.k2, &expect[..]),
            ("attn_kernel", &self.subnet.attn_kernel, &[1, c, KERNEL_SIZE, KERNEL_SIZE][..]),
            ("neuron_weight", &self.subnet.neuron_weight, &[1, 1][..]),
            ("neuron_bias", &self.subnet.neuron_bias, &[1][..]),
        ] {
            if t.shape() != want {
                return Err(Error::ShapeInconsistent {
                    name: name.into(),
                    found: t.shape().to_vec(),
                    expected: want.to_vec(),
                });
            }
        }
        Ok(())
    }

    /// Parameters in serialization order with their local names.
    pub fn named(&self) -> [(&'static str, &Tensor<T>); 5] {
        [
            ("k1", &self.k1),
            ("k2", &self.k2),
            ("attn_kernel", &self.subnet.attn_kernel),
            ("neuron_weight", &self.subnet.neuron_weight),
            ("neuron_bias", &self.subnet.neuron_bias),
        ]
    }

    pub fn named_mut(&mut self) -> [(&'static str, &mut Tensor<T>); 5] {
        [
            ("k1", &mut self.k1),
            ("k2", &mut self.k2),
            ("attn_kernel", &mut self.subnet.attn_kernel),
            ("neuron_weight", &mut self.subnet.neuron_weight),
            ("neuron_bias", &mut self.subnet.neuron_bias),
        ]
    }

    /// Record the parameters on `tape`, trainable or frozen.
    pub fn register(&self, tape: &mut Tape<T>, trainable: bool) -> GdLayerVars {
        let mut leaf = |t: &Tensor<T>| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        GdLayerVars {
            k1: leaf(&self.k1),
            k2: leaf(&self.k2),
            subnet: SubnetVars {
                attn_kernel: leaf(&self.subnet.attn_kernel),
                neuron_weight: leaf(&self.subnet.neuron_weight),
                neuron_bias: leaf(&self.subnet.neuron_bias),
            },
        }
    }

    /// Tape-free inference: `(features, α per sample)`.
    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>)> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let x = tape.constant(input.clone());
        let out = gd_forward(&mut tape, x, &vars)?;
        Ok((
            tape.value(out.features).clone(),
            tape.value(out.alpha).data().to_vec(),
        ))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SubnetVars {
    pub attn_kernel: Var,
    pub neuron_weight: Var,
    pub neuron_bias: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct GdLayerVars {
    pub k1: Var,
    pub k2: Var,
    pub subnet: SubnetVars,
}

impl GdLayerVars {
    /// Same order as [`GdLayerParams::named`].
    pub fn all(&self) -> [Var; 5] {
        [
            self.k1,
            self.k2,
            self.subnet.attn_kernel,
            self.subnet.neuron_weight,
            self.subnet.neuron_bias,
        ]
    }
}

/// `α = σ(w · mean(relu(conv3×3(X))) + b)`, one value per sample (`N × 1`).
pub fn context_attention<T: Real>(tape: &mut Tape<T>, x: Var, p: &SubnetVars) -> Result<Var> {
    let response = tape.conv2d(x, p.attn_kernel, NARROW_DILATION)?;
    let response = tape.relu(response);
    let pooled = tape.pool_global(response, Pool::Avg)?;
    let logit = tape.dense(pooled, p.neuron_weight, p.neuron_bias)?;
    Ok(tape.sigmoid(logit))
}

/// Soft gates `(αX, (1 − α)X)`.
pub fn gate_split<T: Real>(tape: &mut Tape<T>, x: Var, alpha: Var) -> Result<(Var, Var)> {
    let narrow = tape.scale_by_scalar(x, alpha)?;
    let rest = tape.one_minus(alpha);
    let wide = tape.scale_by_scalar(x, rest)?;
    Ok((narrow, wide))
}

#[derive(Clone, Copy, Debug)]
pub struct GdOutput {
    /// `N × 2S × H × W`
    pub features: Var,
    /// `N × 1`
    pub alpha: Var,
}

pub fn gd_forward<T: Real>(tape: &mut Tape<T>, x: Var, p: &GdLayerVars) -> Result<GdOutput> {
    let alpha = context_attention(tape, x, &p.subnet)?;
    let (narrow_in, wide_in) = gate_split(tape, x, alpha)?;
    let narrow = tape.conv2d(narrow_in, p.k1, NARROW_DILATION)?;
    let narrow = tape.relu(narrow);
    let wide = tape.conv2d(wide_in, p.k2, WIDE_DILATION)?;
    let wide = tape.relu(wide);
    let features = tape.concat_channels(narrow, wide)?;
    Ok(GdOutput { features, alpha })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn random_tensor(shape: &[usize], rng: &mut seed::Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    fn random_layer(c: usize, s: usize, rng: &mut seed::Rng) -> GdLayerParams<f64> {
        GdLayerParams {
            k1: random_tensor(&[s, c, 3, 3], rng),
            k2: random_tensor(&[s, c, 3, 3], rng),
            subnet: ContextSubnetParams {
                attn_kernel: random_tensor(&[1, c, 3, 3], rng),
                neuron_weight: random_tensor(&[1, 1], rng),
                neuron_bias: random_tensor(&[1], rng),
            },
        }
    }

    #[test]
    fn zero_input_gives_half_attention() {
        let mut rng = seed::rng(1);
        let mut p = random_layer(2, 3, &mut rng);
        p.subnet.neuron_bias = Tensor::zeros(&[1]);
        let (_, alpha) = p.forward(&Tensor::zeros(&[2, 2, 8, 8])).unwrap();
        assert_eq!(alpha, vec![0.5, 0.5]);
    }

    #[test]
    fn saturated_bias_stays_below_one() {
        let mut rng = seed::rng(2);
        let mut p = random_layer(1, 2, &mut rng);
        p.subnet.neuron_weight = Tensor::zeros(&[1, 1]);
        p.subnet.neuron_bias = Tensor::full(&[1], 20.0);
        let (_, alpha) = p.forward(&random_tensor(&[1, 1, 6, 6], &mut rng)).unwrap();
        assert!(alpha[0] > 1.0 - 1e-8 && alpha[0] < 1.0);

        let p32: GdLayerParams<f32> = GdLayerParams {
            k1: p.k1.cast(),
            k2: p.k2.cast(),
            subnet: ContextSubnetParams {
                attn_kernel: p.subnet.attn_kernel.cast(),
                neuron_weight: p.subnet.neuron_weight.cast(),
                neuron_bias: p.subnet.neuron_bias.cast(),
            },
        };
        let (_, alpha) = p32.forward(&Tensor::full(&[1, 1, 6, 6], 0.3)).unwrap();
        assert!(alpha[0] < 1.0);
    }

    #[test]
    fn output_channels_are_twice_branch_width() {
        let mut rng = seed::rng(3);
        let p = random_layer(1, 16, &mut rng);
        let (y, alpha) = p.forward(&random_tensor(&[1, 1, 32, 32], &mut rng)).unwrap();
        assert_eq!(y.shape(), &[1, 32, 32, 32]);
        assert_eq!(alpha.len(), 1);
        assert_eq!(p.out_channels(), 32);
        p.validate().unwrap();
    }

    #[test]
    fn zero_kernels_give_zero_features() {
        let mut rng = seed::rng(4);
        let mut p = random_layer(3, 4, &mut rng);
        p.k1 = Tensor::zeros(&[4, 3, 3, 3]);
        p.k2 = Tensor::zeros(&[4, 3, 3, 3]);
        let (y, _) = p.forward(&random_tensor(&[2, 3, 7, 7], &mut rng)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let mut rng = seed::rng(5);
        let p = random_layer(2, 4, &mut rng);
        assert!(matches!(
            p.forward(&random_tensor(&[1, 3, 8, 8], &mut rng)),
            Err(Error::ChannelMismatch(_))
        ));
    }

    #[test]
    fn validate_catches_mismatched_branches() {
        let mut p = GdLayerParams::<f32>::zeros(2, 4);
        p.k2 = Tensor::zeros(&[5, 2, 3, 3]);
        assert!(matches!(p.validate(), Err(Error::ShapeInconsistent { .. })));
    }
}
