use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fold index for each item of a corpus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    pub seed: u64,
    pub assignment: Vec<usize>,
}

/// Seeded shuffle followed by round-robin assignment into `k` folds.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::Spec(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::Validation(format!("{n} items cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n];
    for (pos, &item) in order.iter().enumerate() {
        assignment[item] = pos % k;
    }
    Ok(FoldSplit { k, seed, assignment })
}

impl FoldSplit {
    /// Items of fold `i`, ascending.
    pub fn fold(&self, i: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&j| self.assignment[j] == i).collect()
    }

    /// (train, validate) item lists with fold `i` held out.
    pub fn split(&self, i: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignment.len()).partition(|&j| self.assignment[j] != i)
    }

    pub fn splits(&self) -> impl Iterator<Item = (Vec<usize>, Vec<usize>)> + '_ {
        (0..self.k).map(|i| self.split(i))
    }
}
