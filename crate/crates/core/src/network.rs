//! The full classifier: five gated-dilated layers with interleaved dropout,
//! global max pooling and a single sigmoid output neuron.

use rand::distr::{Distribution, Uniform};

use crate::autodiff::{Pool, Tape, Var};
use crate::error::{Error, Result};
use crate::gd_layer::{self, ContextSubnetParams, GdLayerParams, GdLayerVars, KERNEL_SIZE};
use crate::parallel::Exec;
use crate::seed;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct GdNetConfig {
    /// Per-layer branch width `S`; each layer emits `2·S` channels.
    pub branch_widths: Vec<usize>,
    /// Dropout rate applied after each layer (0 means none).
    pub dropout: Vec<f64>,
    pub input_channels: usize,
    pub image_size: usize,
}

impl Default for GdNetConfig {
    fn default() -> Self {
        Self {
            branch_widths: vec![16, 16, 32, 32, 32],
            dropout: vec![0.0, 0.25, 0.0, 0.25, 0.5],
            input_channels: 1,
            image_size: 32,
        }
    }
}

impl GdNetConfig {
    pub fn num_layers(&self) -> usize {
        self.branch_widths.len()
    }

    pub fn layer_output_channels(&self) -> Vec<usize> {
        self.branch_widths.iter().map(|s| 2 * s).collect()
    }

    pub fn layer_input_channels(&self) -> Vec<usize> {
        std::iter::once(self.input_channels)
            .chain(self.layer_output_channels())
            .take(self.num_layers())
            .collect()
    }

    pub fn head_width(&self) -> usize {
        self.layer_output_channels().last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.branch_widths.is_empty() || self.branch_widths.contains(&0) {
            return Err(Error::InvalidArgument(
                "network needs at least one layer and positive branch widths".into(),
            ));
        }
        if self.dropout.len() != self.branch_widths.len() {
            return Err(Error::InvalidArgument(format!(
                "{} dropout rates for {} layers",
                self.dropout.len(),
                self.branch_widths.len()
            )));
        }
        if let Some(r) = self.dropout.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(Error::InvalidArgument(format!("dropout rate {r} outside [0, 1)")));
        }
        if self.input_channels == 0 || self.image_size == 0 {
            return Err(Error::InvalidArgument("empty input geometry".into()));
        }
        Ok(())
    }

    /// Closed-form trainable parameter count: per layer `2·S·C_in·9` branch
    /// weights plus `C_in·9 + 2` for the attention sub-network, plus the head.
    pub fn parameter_count(&self) -> usize {
        let taps = KERNEL_SIZE * KERNEL_SIZE;
        let layers: usize = self
            .layer_input_channels()
            .iter()
            .zip(&self.branch_widths)
            .map(|(&c, &s)| 2 * s * c * taps + c * taps + 2)
            .sum();
        layers + self.head_width() + 1
    }

    /// Tensor names and shapes in serialization order.
    pub fn tensor_layout(&self) -> Vec<(String, Vec<usize>)> {
        let k = KERNEL_SIZE;
        let mut out = Vec::new();
        for (i, (&c, &s)) in self
            .layer_input_channels()
            .iter()
            .zip(&self.branch_widths)
            .enumerate()
        {
            let l = i + 1;
            out.push((format!("gd{l}.k1"), vec![s, c, k, k]));
            out.push((format!("gd{l}.k2"), vec![s, c, k, k]));
            out.push((format!("gd{l}.attn_kernel"), vec![1, c, k, k]));
            out.push((format!("gd{l}.neuron_weight"), vec![1, 1]));
            out.push((format!("gd{l}.neuron_bias"), vec![1]));
        }
        out.push(("head.weight".into(), vec![self.head_width(), 1]));
        out.push(("head.bias".into(), vec![1]));
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GdNetParams<T> {
    pub config: GdNetConfig,
    pub layers: Vec<GdLayerParams<T>>,
    /// `64 × 1`
    pub head_weight: Tensor<T>,
    /// `[1]`
    pub head_bias: Tensor<T>,
}

/// Xavier-uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn xavier<T: Real>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut seed::Rng) -> Tensor<T> {
    let bound = xavier_bound(fan_in, fan_out);
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Tensor::from_fn(shape, |_| T::from_f64_lossy(dist.sample(rng)))
}

/// Xavier-uniform weights, zero biases, deterministic per seed.
pub fn init_network<T: Real>(config: &GdNetConfig, seed: u64) -> Result<GdNetParams<T>> {
    config.validate()?;
    let mut rng = seed::rng(seed);
    let taps = KERNEL_SIZE * KERNEL_SIZE;
    let k = KERNEL_SIZE;
    let layers = config
        .layer_input_channels()
        .iter()
        .zip(&config.branch_widths)
        .map(|(&c, &s)| GdLayerParams {
            k1: xavier(&[s, c, k, k], c * taps, s * taps, &mut rng),
            k2: xavier(&[s, c, k, k], c * taps, s * taps, &mut rng),
            subnet: ContextSubnetParams {
                attn_kernel: xavier(&[1, c, k, k], c * taps, taps, &mut rng),
                neuron_weight: xavier(&[1, 1], 1, 1, &mut rng),
                neuron_bias: Tensor::zeros(&[1]),
            },
        })
        .collect();
    let head = config.head_width();
    Ok(GdNetParams {
        config: config.clone(),
        layers,
        head_weight: xavier(&[head, 1], head, 1, &mut rng),
        head_bias: Tensor::zeros(&[1]),
    })
}

/// Vars of a network registered on a tape.
#[derive(Clone, Debug)]
pub struct NetVars {
    pub layers: Vec<GdLayerVars>,
    pub head_weight: Var,
    pub head_bias: Var,
}

impl NetVars {
    /// Same order as [`GdNetParams::named_tensors`].
    pub fn all(&self) -> Vec<Var> {
        self.layers
            .iter()
            .flat_map(|l| l.all())
            .chain([self.head_weight, self.head_bias])
            .collect()
    }
}

/// Tape handles produced by a forward pass.
#[derive(Clone, Debug)]
pub struct NetForward {
    /// `N × 1` probabilities.
    pub probabilities: Var,
    /// One `N × 1` attention var per layer.
    pub alphas: Vec<Var>,
    /// Output of each layer before dropout.
    pub layer_outputs: Vec<Var>,
}

/// Plain-value result of [`GdNetParams::forward`].
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput<T> {
    pub probabilities: Vec<T>,
    /// `N × L` attention matrix (row per sample).
    pub alphas: Tensor<T>,
    pub layer_shapes: Vec<Vec<usize>>,
}

impl<T: Real> GdNetParams<T> {
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, t) in layer.named() {
                out.push((format!("gd{}.{name}", i + 1), t));
            }
        }
        out.push(("head.weight".into(), &self.head_weight));
        out.push(("head.bias".into(), &self.head_bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = Vec::new();
        for layer in &mut self.layers {
            out.extend(layer.named_mut().into_iter().map(|(_, t)| t));
        }
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    /// Rebuild from named tensors, checking them against `config`.
    pub fn from_named(config: &GdNetConfig, tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        config.validate()?;
        let layout = config.tensor_layout();
        if tensors.len() != layout.len() {
            return Err(Error::TensorCountMismatch {
                found: tensors.len(),
                expected: layout.len(),
            });
        }
        for ((name, t), (want_name, want_shape)) in tensors.iter().zip(&layout) {
            if name != want_name || t.shape() != want_shape.as_slice() {
                return Err(Error::ShapeInconsistent {
                    name: if name == want_name {
                        name.clone()
                    } else {
                        format!("{name} (expected {want_name})")
                    },
                    found: t.shape().to_vec(),
                    expected: want_shape.clone(),
                });
            }
        }
        let mut it = tensors.into_iter().map(|(_, t)| t);
        let mut next = || it.next().expect("count checked");
        let layers = (0..config.num_layers())
            .map(|_| GdLayerParams {
                k1: next(),
                k2: next(),
                subnet: ContextSubnetParams {
                    attn_kernel: next(),
                    neuron_weight: next(),
                    neuron_bias: next(),
                },
            })
            .collect();
        let head_weight = next();
        let head_bias = next();
        Ok(Self {
            config: config.clone(),
            layers,
            head_weight,
            head_bias,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn cast<U: Real>(&self) -> GdNetParams<U> {
        let tensors = self
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.cast::<U>()))
            .collect();
        GdNetParams::from_named(&self.config, tensors).expect("same layout")
    }

    pub fn register(&self, tape: &mut Tape<T>, trainable: bool) -> NetVars {
        let layers = self.layers.iter().map(|l| l.register(tape, trainable)).collect();
        let mut leaf = |t: &Tensor<T>| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        NetVars {
            layers,
            head_weight: leaf(&self.head_weight),
            head_bias: leaf(&self.head_bias),
        }
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let c = &self.config;
        match *shape {
            [n, ch, h, w] if n >= 1 && ch == c.input_channels && h == c.image_size && w == c.image_size => {
                Ok(())
            }
            _ => Err(Error::InvalidShape(format!(
                "network input must be N×{}×{}×{}, got {shape:?}",
                c.input_channels, c.image_size, c.image_size
            ))),
        }
    }

    /// Record a forward pass. Dropout draws from seeds derived from
    /// `(seed, layer index)` and is active only when `training`.
    pub fn forward_tape(
        &self,
        tape: &mut Tape<T>,
        vars: &NetVars,
        batch: Var,
        training: bool,
        seed: u64,
    ) -> Result<NetForward> {
        self.check_input(tape.value(batch).shape())?;
        let mut x = batch;
        let mut alphas = Vec::with_capacity(vars.layers.len());
        let mut layer_outputs = Vec::with_capacity(vars.layers.len());
        for (i, (layer, &rate)) in vars.layers.iter().zip(&self.config.dropout).enumerate() {
            let out = gd_layer::gd_forward(tape, x, layer)?;
            alphas.push(out.alpha);
            layer_outputs.push(out.features);
            x = tape.dropout(out.features, rate, training, seed::derive(seed, &[i as u64]))?;
        }
        let pooled = tape.pool_global(x, Pool::Max)?;
        let logit = tape.dense(pooled, vars.head_weight, vars.head_bias)?;
        let probabilities = tape.sigmoid(logit);
        Ok(NetForward {
            probabilities,
            alphas,
            layer_outputs,
        })
    }

    pub fn forward(&self, batch: &Tensor<T>, training: bool, seed: u64) -> Result<ForwardOutput<T>> {
        self.forward_with(Exec::default(), batch, training, seed)
    }

    pub fn forward_with(
        &self,
        exec: Exec,
        batch: &Tensor<T>,
        training: bool,
        seed: u64,
    ) -> Result<ForwardOutput<T>> {
        let mut tape = Tape::with_exec(exec);
        let vars = self.register(&mut tape, false);
        let x = tape.constant(batch.clone());
        let out = self.forward_tape(&mut tape, &vars, x, training, seed)?;
        let n = batch.shape()[0];
        let layers = out.alphas.len();
        let mut alphas = vec![T::zero(); n * layers];
        for (l, &a) in out.alphas.iter().enumerate() {
            for (s, &v) in tape.value(a).data().iter().enumerate() {
                alphas[s * layers + l] = v;
            }
        }
        Ok(ForwardOutput {
            probabilities: tape.value(out.probabilities).data().to_vec(),
            alphas: Tensor::new(&[n, layers], alphas)?,
            layer_shapes: out
                .layer_outputs
                .iter()
                .map(|&v| tape.value(v).shape().to_vec())
                .collect(),
        })
    }

    /// Mean inference probability over several views of one object.
    pub fn predict_views(&self, views: &[Tensor<T>]) -> Result<T> {
        self.predict_views_with(Exec::default(), views)
    }

    pub fn predict_views_with(&self, exec: Exec, views: &[Tensor<T>]) -> Result<T> {
        if views.is_empty() {
            return Err(Error::InvalidArgument("no views to average".into()));
        }
        let refs: Vec<&Tensor<T>> = views.iter().collect();
        let batch = Tensor::stack(&refs)?;
        let probs = self.forward_with(exec, &batch, false, 0)?.probabilities;
        Ok(probs.iter().copied().sum::<T>() / T::from_usize(probs.len()).unwrap())
    }

    /// View-averaged probabilities for many objects, fanned out over samples.
    pub fn predict_many(&self, exec: Exec, objects: &[Vec<Tensor<T>>]) -> Result<Vec<T>> {
        exec.map_collect(objects.len(), |i| {
            self.predict_views_with(Exec::Sequential, &objects[i])
        })
        .into_iter()
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout() {
        let c = GdNetConfig::default();
        assert_eq!(c.layer_output_channels(), vec![32, 32, 64, 64, 64]);
        assert_eq!(c.layer_input_channels(), vec![1, 32, 32, 64, 64]);
        assert_eq!(c.head_width(), 64);
        assert_eq!(c.tensor_layout().len(), 27);
    }

    #[test]
    fn parameter_count_closed_form() {
        let c = GdNetConfig::default();
        // 299 + 9506 + 18722 + 37442 + 37442 + 65
        assert_eq!(c.parameter_count(), 103_476);
        let p = init_network::<f32>(&c, 0).unwrap();
        assert_eq!(p.parameter_count(), c.parameter_count());
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let c = GdNetConfig::default();
        let a = init_network::<f32>(&c, 11).unwrap();
        let b = init_network::<f32>(&c, 11).unwrap();
        assert_eq!(a, b);
        let l = xavier_bound(9, 16 * 9);
        assert!((l - (6.0f64 / 153.0).sqrt()).abs() < 1e-15);
        assert!(a.layers[0].k1.data().iter().all(|&w| (w as f64).abs() <= l + 1e-7));
        assert!(a.layers.iter().all(|l| l.subnet.neuron_bias.data() == [0.0]));
        assert_eq!(a.head_bias.data(), &[0.0]);
        let c2 = init_network::<f32>(&c, 12).unwrap();
        assert_ne!(a, c2);
    }

    #[test]
    fn rejects_bad_input_shape() {
        let p = init_network::<f32>(&GdNetConfig::default(), 0).unwrap();
        let bad = Tensor::zeros(&[1, 1, 16, 16]);
        assert!(matches!(p.forward(&bad, false, 0), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn empty_view_list_rejected() {
        let p = init_network::<f32>(&GdNetConfig::default(), 0).unwrap();
        assert!(p.predict_views(&[]).is_err());
    }

    #[test]
    fn from_named_detects_count_and_shape() {
        let c = GdNetConfig::default();
        let p = init_network::<f32>(&c, 0).unwrap();
        let mut named: Vec<_> = p
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        named.pop();
        assert!(matches!(
            GdNetParams::from_named(&c, named.clone()),
            Err(Error::TensorCountMismatch { .. })
        ));
        named.push(("head.bias".into(), Tensor::zeros(&[2])));
        assert!(matches!(
            GdNetParams::from_named(&c, named),
            Err(Error::ShapeInconsistent { .. })
        ));
    }
}
