use serde::{Deserialize, Serialize};

use super::{Dataset, TuError};
use crate::numkit::Rng;

/// A partition of graph indices into test folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
    pub stratified: bool,
    labels: Vec<usize>,
}

/// Train/validation/test indices for one fold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Orders `indices` so that consecutive runs deal evenly: class by class,
/// each class shuffled, or the whole list shuffled when not stratifying.
fn dealing_order(indices: &[usize], labels: &[usize], stratify: bool, rng: &mut Rng) -> Vec<usize> {
    if !stratify {
        let mut all = indices.to_vec();
        rng.shuffle(&mut all);
        return all;
    }
    let num_classes = indices.iter().map(|&i| labels[i] + 1).max().unwrap_or(0);
    let mut order = Vec::with_capacity(indices.len());
    for c in 0..num_classes {
        let mut members: Vec<usize> = indices.iter().copied().filter(|&i| labels[i] == c).collect();
        rng.shuffle(&mut members);
        order.extend(members);
    }
    order
}

/// Splits the dataset into `num_folds` disjoint folds.
///
/// With stratification each class is shuffled and dealt round-robin, so every
/// fold holds ⌊n_c/F⌋ or ⌈n_c/F⌉ graphs of class `c` and fold sizes differ by
/// at most one.
pub fn make_folds(ds: &Dataset, num_folds: usize, seed: u64, stratify: bool) -> Result<FoldPlan, TuError> {
    let needed = num_folds.max(2);
    if ds.len() < needed {
        return Err(TuError::TooSmall {
            graphs: ds.len(),
            needed,
        });
    }
    let labels = ds.labels();
    let mut rng = Rng::derive(seed, 0xF01D);
    let all: Vec<usize> = (0..ds.len()).collect();
    let order = dealing_order(&all, &labels, stratify, &mut rng);
    let mut folds = vec![Vec::new(); num_folds];
    for (i, idx) in order.into_iter().enumerate() {
        folds[i % num_folds].push(idx);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan {
        folds,
        seed,
        stratified: stratify,
        labels,
    })
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    /// Test fold `fold`; the remaining graphs split 9:1 into train and
    /// validation.
    pub fn split(&self, fold: usize) -> FoldSplit {
        let test = self.folds[fold].clone();
        let rest: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        let mut rng = Rng::derive(self.seed, 0x5A11_0000 + fold as u64);
        let order = dealing_order(&rest, &self.labels, self.stratified, &mut rng);
        let (mut train, mut val) = (Vec::new(), Vec::new());
        for (i, idx) in order.into_iter().enumerate() {
            if i % 10 == 9 {
                val.push(idx);
            } else {
                train.push(idx);
            }
        }
        train.sort_unstable();
        val.sort_unstable();
        FoldSplit { fold, train, val, test }
    }
}
