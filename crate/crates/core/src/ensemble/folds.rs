//! Random balanced (optionally stratified) V-fold assignment.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    n_folds: usize,
}

impl FoldAssignment {
    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }

    /// (training rows, held-out rows) for fold `v`, each in increasing order.
    pub fn split(&self, v: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::with_capacity(self.fold_of.len());
        let mut test = Vec::new();
        for (i, &f) in self.fold_of.iter().enumerate() {
            if f == v {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

/// Partitions `0..n` into `v` folds. With `labels`, each class is shuffled
/// and dealt round-robin separately, continuing the deal where the previous
/// class stopped so overall fold sizes also stay within one of each other.
pub fn make_folds(n: usize, v: usize, labels: Option<&[f64]>, seed: u64) -> Result<FoldAssignment> {
    if v < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {v}")));
    }
    if n < v {
        return Err(Error::TooFewObservations(format!("{n} rows cannot fill {v} folds")));
    }
    let mut rng = seed::rng(seed);
    let mut fold_of = vec![0usize; n];
    match labels {
        None => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            for (k, &i) in idx.iter().enumerate() {
                fold_of[i] = k % v;
            }
        }
        Some(labels) => {
            if labels.len() != n {
                return Err(Error::InvalidData(format!(
                    "{} labels for {n} rows",
                    labels.len()
                )));
            }
            let mut next = 0usize;
            for class in [0.0, 1.0] {
                let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
                if members.len() < v {
                    return Err(Error::TooFewObservations(format!(
                        "class {class} has {} members, fewer than {v} folds",
                        members.len()
                    )));
                }
                members.shuffle(&mut rng);
                for &i in &members {
                    fold_of[i] = next % v;
                    next += 1;
                }
            }
            if labels.iter().any(|&l| l != 0.0 && l != 1.0) {
                return Err(Error::InvalidData("stratification labels must be 0 or 1".into()));
            }
        }
    }
    Ok(FoldAssignment { fold_of, n_folds: v })
}
