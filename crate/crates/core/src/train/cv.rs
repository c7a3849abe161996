use super::metrics::{evaluate_metrics, MetricsReport, DECISION_THRESHOLD};
use super::trainer::{score_samples, train_with, TrainConfig, TrainingSet};
use crate::data::{labels, stratified_kfold, FoldSplit, Label, Sample, ZScore};
use crate::error::Result;
use crate::network::{init_network, GdNetConfig};
use crate::parallel::Exec;
use crate::seed;

#[derive(Clone, Debug)]
pub struct FoldResult {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub zscore: ZScore,
    pub losses: Vec<f64>,
    pub scores: Vec<f64>,
    pub metrics: MetricsReport,
}

/// Unweighted mean of the per-fold metrics (folds lacking a value are
/// skipped for that metric).
#[derive(Clone, Debug, PartialEq)]
pub struct FoldAverage {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub sensitivity: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct CvReport {
    pub split: FoldSplit,
    pub folds: Vec<FoldResult>,
    /// Out-of-fold score for every sample, in dataset order.
    pub scores: Vec<f64>,
    pub pooled: MetricsReport,
    pub averaged: FoldAverage,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Stratified k-fold cross-validation. Each fold augments and normalizes its
/// own training portion, trains a freshly initialized network and scores the
/// held-out samples with rotation averaging. Folds are independent and fan
/// out under `exec`.
pub fn cross_validate(
    exec: Exec,
    samples: &[Sample],
    net: &GdNetConfig,
    config: &TrainConfig,
    k: usize,
) -> Result<CvReport> {
    config.validate()?;
    let all_labels = labels(samples);
    let split = stratified_kfold(&all_labels, k, seed::derive(config.seed, &[20]))?;

    let folds = exec
        .map_collect(k, |fold| -> Result<FoldResult> {
            let train_samples: Vec<Sample> = split
                .train_indices(fold)
                .iter()
                .map(|&i| samples[i].clone())
                .collect();
            let test_indices = split.test_indices(fold).to_vec();
            let test_samples: Vec<Sample> = test_indices.iter().map(|&i| samples[i].clone()).collect();

            let data = TrainingSet::prepare(&train_samples)?;
            let fold_seed = seed::derive(config.seed, &[21, fold as u64]);
            let params = init_network::<f32>(net, fold_seed)?;
            let fold_config = TrainConfig {
                seed: fold_seed,
                ..config.clone()
            };
            let outcome = train_with(Exec::Sequential, params, &data, &fold_config)?;
            let scores = score_samples(&outcome.params, &test_samples, &data.zscore, Exec::Sequential)?;
            let test_labels: Vec<Label> = test_samples.iter().map(|s| s.label).collect();
            let metrics = evaluate_metrics(&scores, &test_labels, DECISION_THRESHOLD)?;
            Ok(FoldResult {
                fold,
                test_indices,
                zscore: data.zscore,
                losses: outcome.losses,
                scores,
                metrics,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut scores = vec![f64::NAN; samples.len()];
    for f in &folds {
        for (&i, &s) in f.test_indices.iter().zip(&f.scores) {
            scores[i] = s;
        }
    }
    let pooled = evaluate_metrics(&scores, &all_labels, DECISION_THRESHOLD)?;
    let averaged = FoldAverage {
        accuracy: folds.iter().map(|f| f.metrics.accuracy).sum::<f64>() / folds.len() as f64,
        precision: mean_of(folds.iter().map(|f| f.metrics.precision)),
        sensitivity: mean_of(folds.iter().map(|f| f.metrics.sensitivity)),
        auc: mean_of(folds.iter().map(|f| f.metrics.auc)),
    };
    Ok(CvReport {
        split,
        folds,
        scores,
        pooled,
        averaged,
    })
}
