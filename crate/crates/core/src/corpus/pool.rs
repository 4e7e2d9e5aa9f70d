use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

/// Pool membership by corpus index.
///
/// `unlabeled` stays sorted ascending; `labeled` keeps acquisition order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pool {
    unlabeled: Vec<usize>,
    labeled: Vec<(usize, usize)>,
    test: Vec<usize>,
}

impl Pool {
    pub fn new(mut unlabeled: Vec<usize>, mut test: Vec<usize>) -> Result<Self> {
        unlabeled.sort_unstable();
        unlabeled.dedup();
        test.sort_unstable();
        test.dedup();
        let test_set: HashSet<usize> = test.iter().copied().collect();
        if let Some(i) = unlabeled.iter().find(|i| test_set.contains(i)) {
            return Err(Error::InvalidArgument(format!(
                "index {i} is in both the unlabeled and test sets"
            )));
        }
        Ok(Pool {
            unlabeled,
            labeled: Vec::new(),
            test,
        })
    }

    /// Every index in `0..n` unlabeled, no test set.
    pub fn all_unlabeled(n: usize) -> Self {
        Pool {
            unlabeled: (0..n).collect(),
            labeled: Vec::new(),
            test: Vec::new(),
        }
    }

    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    pub fn labeled(&self) -> &[(usize, usize)] {
        &self.labeled
    }

    pub fn test(&self) -> &[usize] {
        &self.test
    }

    /// Training pool size, labeled plus unlabeled.
    pub fn train_size(&self) -> usize {
        self.unlabeled.len() + self.labeled.len()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self
            .unlabeled
            .iter()
            .copied()
            .chain(self.labeled.iter().map(|&(i, _)| i))
            .collect();
        all.sort_unstable();
        all
    }

    /// Move `batch` from unlabeled to labeled, asking `oracle` for each label.
    /// Nothing is moved if any index is invalid.
    pub fn label_batch(
        &mut self,
        batch: &[usize],
        mut oracle: impl FnMut(usize) -> Option<usize>,
    ) -> Result<()> {
        let mut wanted = HashSet::with_capacity(batch.len());
        for &i in batch {
            if !wanted.insert(i) {
                return Err(Error::InvalidArgument(format!("index {i} queried twice")));
            }
            if self.unlabeled.binary_search(&i).is_err() {
                return Err(Error::InvalidArgument(format!(
                    "index {i} is not in the unlabeled pool"
                )));
            }
        }
        let mut labels = Vec::with_capacity(batch.len());
        for &i in batch {
            let y = oracle(i).ok_or_else(|| Error::MissingLabel(i.to_string()))?;
            labels.push((i, y));
        }
        self.unlabeled.retain(|i| !wanted.contains(i));
        self.labeled.extend(labels);
        Ok(())
    }
}

/// Stratified train/test split; every training record starts unlabeled.
pub fn split_pool(labels: &[Option<usize>], test_fraction: f64, seed: u64) -> Result<Pool> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, y) in labels.iter().enumerate() {
        let y = y.ok_or_else(|| Error::MissingLabel(i.to_string()))?;
        by_class.entry(y).or_default().push(i);
    }
    let mut rng = seed::rng(seed);
    let mut unlabeled = Vec::new();
    let mut test = Vec::new();
    for (class, mut members) in by_class {
        if members.len() < 2 {
            return Err(Error::ClassTooSmall {
                class,
                count: members.len(),
            });
        }
        members.shuffle(&mut rng);
        let n_test = ((members.len() as f64 * test_fraction).round() as usize)
            .clamp(1, members.len() - 1);
        test.extend_from_slice(&members[..n_test]);
        unlabeled.extend_from_slice(&members[n_test..]);
    }
    Pool::new(unlabeled, test)
}
