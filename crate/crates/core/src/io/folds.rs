use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FOLDS: usize = 5;

/// Whether folds split whole records or individual segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldUnit {
    Record,
    Segment,
}

impl FoldUnit {
    /// Records when there are at least `k` of them, else segments.
    pub fn choose(records: usize, k: usize) -> Self {
        if records >= k {
            Self::Record
        } else {
            Self::Segment
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Item indices per fold, each sorted.
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn items(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }

    pub fn test(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    /// Every item outside `fold`, sorted.
    pub fn train(&self, fold: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        v.sort_unstable();
        v
    }

    /// `train=..` and `test=..` lines for one fold.
    pub fn manifest(&self, fold: usize) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "fold={}\nk={}\nseed={}", fold + 1, self.k, self.seed);
        let _ = writeln!(s, "train={}", join(&self.train(fold)));
        let _ = writeln!(s, "test={}", join(self.test(fold)));
        s
    }
}

/// Shuffles `0..items` with the seed and deals them round-robin, so fold
/// sizes differ by at most one.
pub fn make_folds(items: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid("need at least two folds"));
    }
    if items < k {
        return Err(Error::TooFewItems { items, folds: k });
    }
    let mut order: Vec<usize> = (0..items).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::with_capacity(items / k + 1); k];
    for (i, item) in order.into_iter().enumerate() {
        folds[i % k].push(item);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan { k, seed, folds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_records_five_folds() {
        let p = make_folds(10, 5, 1).unwrap();
        assert!(p.folds.iter().all(|f| f.len() == 2));
        assert_eq!(p, make_folds(10, 5, 1).unwrap());
        assert_ne!(p, make_folds(10, 5, 2).unwrap());
        assert_eq!(p.train(0).len(), 8);
        assert!(p.manifest(0).starts_with("fold=1\n"));
    }

    #[test]
    fn too_few_items() {
        assert!(matches!(make_folds(4, 5, 0), Err(Error::TooFewItems { items: 4, folds: 5 })));
    }

    #[test]
    fn unit_choice() {
        assert_eq!(FoldUnit::choose(5, 5), FoldUnit::Record);
        assert_eq!(FoldUnit::choose(1, 5), FoldUnit::Segment);
    }
}
