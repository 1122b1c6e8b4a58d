//! Seeded fold partitions for cross-fitting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A partition of `n` observations into `v` folds of near-equal size,
/// reproducible from its seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPartition {
    v: usize,
    assignment: Vec<u16>,
}

impl FoldPartition {
    /// Randomly deal observations into `v` folds; sizes differ by at most one.
    pub fn new(n: usize, v: usize, seed: u64) -> Result<FoldPartition> {
        if v == 0 {
            return Err(Error::validation("fold count must be at least 1"));
        }
        if v > n {
            return Err(Error::validation(format!(
                "cannot split {n} observations into {v} folds"
            )));
        }
        if v > u16::MAX as usize {
            return Err(Error::validation("fold count exceeds supported maximum"));
        }
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let mut assignment = vec![0u16; n];
        for (pos, &obs) in order.iter().enumerate() {
            assignment[obs] = (pos % v) as u16;
        }
        Ok(FoldPartition { v, assignment })
    }

    /// Trivial single-fold partition (fit-on-all / predict-on-all).
    pub fn single(n: usize) -> FoldPartition {
        FoldPartition { v: 1, assignment: vec![0u16; n] }
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    /// Fold of observation `i`.
    pub fn fold_of(&self, i: usize) -> u16 {
        self.assignment[i]
    }

    pub fn assignment(&self) -> &[u16] {
        &self.assignment
    }

    /// Number of observations in each fold.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.v];
        for &f in &self.assignment {
            sizes[f as usize] += 1;
        }
        sizes
    }
}
