//! Synthetic dataset, augmentation, normalization and fold splitting.

mod augment;
mod folds;
mod io;
mod synth;

pub use augment::{
    augment_training, gaussian_blur, gaussian_kernel, reflect_index, rotate90, rotate_views,
    zscore_fit_apply, ZScore, BLUR_SIGMA, TRAINING_VIEWS,
};
pub use folds::{stratified_kfold, FoldSplit};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, write_manifest};
pub use synth::{
    generate_dataset, generate_dataset_with, object_area, BBox, DiameterModel, Label, Sample,
    SyntheticSpec,
};

/// Labels of `samples` in order.
pub fn labels(samples: &[Sample]) -> Vec<Label> {
    samples.iter().map(|s| s.label).collect()
}
