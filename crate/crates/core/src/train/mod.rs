//! Optimizer, schedule, training loop, metrics and cross-validation.

mod adam;
mod cv;
mod metrics;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use cv::{cross_validate, CvReport, FoldAverage, FoldResult};
pub use metrics::{
    evaluate_metrics, predict_positive, roc_auc, BucketAccuracy, MetricsReport, DECISION_THRESHOLD,
};
pub(crate) use metrics::require_both_classes;
pub use trainer::{
    lr_at_epoch, scaled_switch_epoch, score_samples, test_views, train, train_with, TrainConfig,
    TrainOutcome, TrainingSet, ViewPolicy, FULL_EPOCHS, FULL_SWITCH_EPOCH,
};
