use rand::seq::SliceRandom;

use super::synth::Label;
use crate::error::{Error, Result};
use crate::seed;

/// Disjoint index sets covering a dataset, one per fold. Indices inside a
/// fold are sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldSplit {
    pub folds: Vec<Vec<usize>>,
}

impl FoldSplit {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn test_indices(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    /// Every index outside `fold`, ascending.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        idx.sort_unstable();
        idx
    }
}

/// Shuffle each class with a seeded permutation and deal its members
/// round-robin over the folds. The dealing position carries over from one
/// class to the next, so fold sizes differ by at most one.
pub fn stratified_kfold(labels: &[Label], k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    let mut folds = vec![Vec::new(); k];
    let mut slot = 0usize;
    for (ci, class) in [Label::Benign, Label::Malignant].into_iter().enumerate() {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() < k {
            return Err(Error::ClassTooSmall {
                label: class.as_u8(),
                count: members.len(),
                k,
            });
        }
        members.shuffle(&mut seed::derived_rng(seed, &[ci as u64]));
        for i in members {
            folds[slot % k].push(i);
            slot += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldSplit { folds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(benign: usize, malignant: usize) -> Vec<Label> {
        let mut v = vec![Label::Benign; benign];
        v.extend(vec![Label::Malignant; malignant]);
        v
    }

    #[test]
    fn ten_per_class_gives_one_each() {
        let l = labels(10, 10);
        let split = stratified_kfold(&l, 10, 3).unwrap();
        for f in &split.folds {
            assert_eq!(f.len(), 2);
            assert_eq!(f.iter().filter(|&&i| l[i] == Label::Benign).count(), 1);
        }
    }

    #[test]
    fn small_class_rejected() {
        assert!(matches!(
            stratified_kfold(&labels(9, 20), 10, 0),
            Err(Error::ClassTooSmall { label: 0, count: 9, k: 10 })
        ));
    }

    #[test]
    fn train_indices_complement_test_fold() {
        let split = stratified_kfold(&labels(12, 14), 3, 1).unwrap();
        for f in 0..3 {
            let mut all = split.train_indices(f);
            all.extend_from_slice(split.test_indices(f));
            all.sort_unstable();
            assert_eq!(all, (0..26).collect::<Vec<_>>());
        }
    }
}
