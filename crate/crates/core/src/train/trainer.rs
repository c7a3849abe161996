use rand::seq::SliceRandom;
use rand::Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use crate::autodiff::Tape;
use crate::data::{augment_training, rotate_views, Label, Sample, ZScore};
use crate::error::{Error, Result};
use crate::network::GdNetParams;
use crate::parallel::Exec;
use crate::seed;
use crate::tensor::Tensor;

/// Which augmented views of each object an epoch visits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViewPolicy {
    /// Every view of every object, shuffled together.
    All,
    /// One seeded choice of view per object per epoch.
    OnePerEpoch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_initial: f64,
    pub lr_after: f64,
    /// Last epoch (1-based) trained at `lr_initial`.
    pub switch_epoch: usize,
    pub views: ViewPolicy,
    pub adam: AdamConfig,
    pub seed: u64,
}

pub const FULL_EPOCHS: usize = 50;
pub const FULL_SWITCH_EPOCH: usize = 20;

/// The learning-rate switch scaled to a shorter schedule,
/// `round(20 · epochs / 50)`, at least 1.
pub fn scaled_switch_epoch(epochs: usize) -> usize {
    ((FULL_SWITCH_EPOCH * epochs + FULL_EPOCHS / 2) / FULL_EPOCHS).clamp(1, epochs.max(1))
}

impl TrainConfig {
    /// Batch 256, 50 epochs, step-down after epoch 20, every view each epoch.
    pub fn full() -> Self {
        Self {
            batch_size: 256,
            epochs: FULL_EPOCHS,
            lr_initial: 1e-3,
            lr_after: 1e-4,
            switch_epoch: FULL_SWITCH_EPOCH,
            views: ViewPolicy::All,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }

    /// Batch 32, 15 epochs, step-down after epoch 6, one view per object
    /// per epoch.
    pub fn desk() -> Self {
        Self {
            batch_size: 32,
            epochs: 15,
            switch_epoch: scaled_switch_epoch(15),
            views: ViewPolicy::OnePerEpoch,
            ..Self::full()
        }
    }

    /// Change the epoch count and rescale the learning-rate switch.
    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self.switch_epoch = scaled_switch_epoch(epochs);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument("batch size and epochs must be positive".into()));
        }
        if !(self.lr_initial >= 0.0 && self.lr_after >= 0.0) {
            return Err(Error::InvalidArgument("learning rates must be non-negative".into()));
        }
        if self.switch_epoch > self.epochs {
            return Err(Error::InvalidArgument(format!(
                "switch epoch {} exceeds {} epochs",
                self.switch_epoch, self.epochs
            )));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Learning rate for a 1-based epoch; the switch epoch itself still uses
/// the initial rate.
pub fn lr_at_epoch(config: &TrainConfig, epoch: usize) -> Result<f64> {
    if epoch < 1 || epoch > config.epochs {
        return Err(Error::InvalidArgument(format!(
            "epoch {epoch} outside 1..={}",
            config.epochs
        )));
    }
    Ok(if epoch <= config.switch_epoch {
        config.lr_initial
    } else {
        config.lr_after
    })
}

/// Normalized training images grouped by object.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub views: Vec<Vec<Tensor<f32>>>,
    pub labels: Vec<Label>,
    pub zscore: ZScore,
}

impl TrainingSet {
    /// Augment every sample, fit z-score statistics over all augmented
    /// training pixels and normalize.
    pub fn prepare(samples: &[Sample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        let raw = samples
            .iter()
            .map(|s| augment_training(&s.image))
            .collect::<Result<Vec<_>>>()?;
        let zscore = ZScore::fit(raw.iter().flatten())?;
        Ok(Self {
            views: raw
                .iter()
                .map(|v| v.iter().map(|t| zscore.apply(t)).collect())
                .collect(),
            labels: samples.iter().map(|s| s.label).collect(),
            zscore,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// The four rotations of a sample, normalized with training statistics.
pub fn test_views(sample: &Sample, zscore: &ZScore) -> Result<Vec<Tensor<f32>>> {
    Ok(rotate_views(&sample.image)?
        .iter()
        .map(|t| zscore.apply(t))
        .collect())
}

/// View-averaged malignancy probabilities for `samples`.
pub fn score_samples(
    params: &GdNetParams<f32>,
    samples: &[Sample],
    zscore: &ZScore,
    exec: Exec,
) -> Result<Vec<f64>> {
    let objects = samples
        .iter()
        .map(|s| test_views(s, zscore))
        .collect::<Result<Vec<_>>>()?;
    Ok(params
        .predict_many(exec, &objects)?
        .into_iter()
        .map(f64::from)
        .collect())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: GdNetParams<f32>,
    /// Mean per-image loss of each epoch.
    pub losses: Vec<f64>,
}

/// Minibatch Adam on binary cross-entropy. Shuffling, view choice and
/// dropout masks all derive from `config.seed`, so the run is a pure
/// function of its inputs.
pub fn train(params: GdNetParams<f32>, data: &TrainingSet, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(Exec::default(), params, data, config)
}

pub fn train_with(
    exec: Exec,
    mut params: GdNetParams<f32>,
    data: &TrainingSet,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let lengths: Vec<usize> = params.named_tensors().iter().map(|(_, t)| t.numel()).collect();
    let mut adam = AdamState::<f32>::new(config.adam, lengths);
    let mut losses = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let lr = lr_at_epoch(config, epoch)? as f32;
        let e = epoch as u64;
        let mut order: Vec<(usize, usize)> = match config.views {
            ViewPolicy::All => (0..data.len())
                .flat_map(|o| (0..data.views[o].len()).map(move |v| (o, v)))
                .collect(),
            ViewPolicy::OnePerEpoch => {
                let mut rng = seed::derived_rng(config.seed, &[10, e]);
                (0..data.len())
                    .map(|o| (o, rng.random_range(0..data.views[o].len())))
                    .collect()
            }
        };
        order.shuffle(&mut seed::derived_rng(config.seed, &[11, e]));

        let mut loss_sum = 0.0f64;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let images: Vec<&Tensor<f32>> = chunk.iter().map(|&(o, v)| &data.views[o][v]).collect();
            let labels: Vec<f32> = chunk.iter().map(|&(o, _)| data.labels[o].as_f32()).collect();
            let batch = Tensor::stack(&images)?;

            let mut tape = Tape::with_exec(exec);
            let vars = params.register(&mut tape, true);
            let x = tape.constant(batch);
            let fwd = params.forward_tape(
                &mut tape,
                &vars,
                x,
                true,
                seed::derive(config.seed, &[12, e, b as u64]),
            )?;
            let loss = tape.bce_loss(fwd.probabilities, &labels)?;
            loss_sum += tape.value(loss).data()[0] as f64 * chunk.len() as f64;
            let grads = tape.backward(loss)?;

            let all = vars.all();
            let grad_bufs: Vec<Vec<f32>> = all
                .iter()
                .map(|&v| {
                    grads
                        .get(v)
                        .map(<[f32]>::to_vec)
                        .unwrap_or_else(|| vec![0.0; tape.value(v).numel()])
                })
                .collect();
            drop(tape);
            let grad_refs: Vec<&[f32]> = grad_bufs.iter().map(Vec::as_slice).collect();
            let mut tensors = params.tensors_mut();
            let mut bufs: Vec<&mut [f32]> = tensors.iter_mut().map(|t| t.data_mut()).collect();
            adam_step(&mut bufs, &grad_refs, &mut adam, lr)?;
        }
        losses.push(loss_sum / order.len() as f64);
    }
    Ok(TrainOutcome { params, losses })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_boundaries() {
        let full = TrainConfig::full();
        assert_eq!(lr_at_epoch(&full, 1).unwrap(), 1e-3);
        assert_eq!(lr_at_epoch(&full, 20).unwrap(), 1e-3);
        assert_eq!(lr_at_epoch(&full, 21).unwrap(), 1e-4);
        assert!(lr_at_epoch(&full, 0).is_err());
        assert!(lr_at_epoch(&full, 51).is_err());
        let desk = TrainConfig::desk();
        assert_eq!(desk.switch_epoch, 6);
        assert_eq!(lr_at_epoch(&desk, 6).unwrap(), 1e-3);
        assert_eq!(lr_at_epoch(&desk, 7).unwrap(), 1e-4);
    }

    #[test]
    fn scaled_switch() {
        assert_eq!(scaled_switch_epoch(50), 20);
        assert_eq!(scaled_switch_epoch(15), 6);
        assert_eq!(scaled_switch_epoch(1), 1);
        assert_eq!(scaled_switch_epoch(2), 1);
    }

    #[test]
    fn invalid_configs() {
        let mut c = TrainConfig::desk();
        c.switch_epoch = 16;
        assert!(c.validate().is_err());
        c = TrainConfig::desk();
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }
}
