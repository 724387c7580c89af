//! Bootstrap-aggregated regression / probability forests.

use nalgebra::DMatrix;
use rand::Rng;

use super::tree::{BinnedMatrix, Tree, TreeGrower, TreeParams};
use crate::seed;

const MAX_BINS: usize = 65_536;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_node_size: usize,
    /// Candidate features per split; defaults to floor(sqrt(p)).
    pub mtry: Option<usize>,
}

impl ForestParams {
    pub fn new(n_trees: usize, min_node_size: usize) -> Self {
        ForestParams {
            n_trees,
            min_node_size,
            mtry: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    importance: Vec<f64>,
    n_features: usize,
    min_node_size: usize,
    gini: bool,
}

impl Forest {
    /// Grows `params.n_trees` trees, each on a size-n bootstrap resample.
    /// `gini` rescales the importance to Gini-decrease units for 0/1 outcomes.
    ///
    /// The bootstrap samples and per-node feature draws depend only on `seed`,
    /// so forests differing only in `min_node_size` are nested: see
    /// [`Forest::with_min_node_size`].
    pub fn fit(x: &DMatrix<f64>, y: &[f64], params: ForestParams, gini: bool, seed: u64) -> Forest {
        let n = x.nrows();
        let p = x.ncols();
        let mtry = params
            .mtry
            .unwrap_or_else(|| ((p as f64).sqrt().floor() as usize).max(1));
        let binned = BinnedMatrix::new(x, MAX_BINS);
        let tree_params = TreeParams {
            max_depth: usize::MAX,
            min_split: params.min_node_size,
            min_leaf: 1,
            mtry: Some(mtry),
        };
        let mut grower = TreeGrower::new(&binned, tree_params);
        let mut rows = vec![0u32; n];
        let mut leaves = Vec::new();
        let mut trees = Vec::with_capacity(params.n_trees);
        for t in 0..params.n_trees {
            let tree_seed = seed::derive_index(seed, "tree", t as u64);
            let mut rng = seed::rng(tree_seed);
            for r in rows.iter_mut() {
                *r = rng.random_range(0..n as u32);
            }
            trees.push(grower.grow(y, &mut rows, seed::derive(tree_seed, "nodes"), &mut leaves));
        }
        Forest::from_trees(trees, p, params.min_node_size, gini)
    }

    fn from_trees(trees: Vec<Tree>, n_features: usize, min_node_size: usize, gini: bool) -> Forest {
        let mut importance = vec![0.0; n_features];
        for t in &trees {
            t.add_importance(&mut importance);
        }
        let scale = if gini { 2.0 } else { 1.0 } / trees.len().max(1) as f64;
        importance.iter_mut().for_each(|v| *v *= scale);
        Forest {
            trees,
            importance,
            n_features,
            min_node_size,
            gini,
        }
    }

    /// The forest a fit with a larger minimum node size (and the same seed)
    /// would have produced, obtained by pruning.
    pub fn with_min_node_size(&self, min_node_size: usize) -> Option<Forest> {
        if min_node_size < self.min_node_size {
            return None;
        }
        let trees = self.trees.iter().map(|t| t.pruned(min_node_size)).collect();
        Some(Forest::from_trees(trees, self.n_features, min_node_size, self.gini))
    }

    pub fn min_node_size(&self) -> usize {
        self.min_node_size
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let mut out = vec![0.0; x.nrows()];
        let scale = 1.0 / self.trees.len().max(1) as f64;
        for tree in &self.trees {
            tree.accumulate(x, scale, &mut out);
        }
        out
    }

    /// Split-criterion decrease per feature, averaged over trees.
    pub fn importance(&self) -> &[f64] {
        &self.importance
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Features used by at least one split.
    pub fn used_features(&self) -> Vec<bool> {
        let mut used = vec![false; self.n_features];
        for t in &self.trees {
            for f in t.split_features() {
                used[f] = true;
            }
        }
        used
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_outcome_predicts_constant() {
        let x = DMatrix::from_fn(60, 3, |i, j| ((i * (j + 3)) % 17) as f64);
        let y = vec![4.25; 60];
        let f = Forest::fit(&x, &y, ForestParams::new(20, 5), false, 9);
        assert!(f.predict(&x).iter().all(|&v| (v - 4.25).abs() < 1e-12));
        assert!(f.importance().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unused_features_have_zero_importance() {
        let n = 200;
        let x = DMatrix::from_fn(n, 3, |i, j| if j == 0 { i as f64 } else { 7.0 });
        let y: Vec<f64> = (0..n).map(|i| (i as f64 / 20.0).floor()).collect();
        let f = Forest::fit(&x, &y, ForestParams { mtry: Some(3), ..ForestParams::new(10, 5) }, false, 2);
        let used = f.used_features();
        assert!(used[0] && !used[1] && !used[2]);
        assert_eq!(f.importance()[1], 0.0);
        assert!(f.importance()[0] > 0.0);
    }

    #[test]
    fn same_seed_same_forest() {
        let x = DMatrix::from_fn(80, 4, |i, j| ((i * 31 + j * 7) % 23) as f64);
        let y: Vec<f64> = (0..80).map(|i| (i % 5) as f64).collect();
        let a = Forest::fit(&x, &y, ForestParams::new(15, 5), false, 77);
        let b = Forest::fit(&x, &y, ForestParams::new(15, 5), false, 77);
        assert_eq!(a, b);
        let c = Forest::fit(&x, &y, ForestParams::new(15, 5), false, 78);
        assert_ne!(a, c);
    }

    #[test]
    fn pruning_reproduces_larger_node_sizes() {
        let x = DMatrix::from_fn(150, 5, |i, j| (((i + 3) * (j + 11) * 7919) % 101) as f64);
        let y: Vec<f64> = (0..150).map(|i| x[(i, 0)] * 0.1 + x[(i, 2)].sqrt() + (i % 3) as f64).collect();
        let base = Forest::fit(&x, &y, ForestParams::new(25, 1), false, 5);
        for m in [5, 20, 50] {
            let direct = Forest::fit(&x, &y, ForestParams::new(25, m), false, 5);
            assert_eq!(base.with_min_node_size(m).unwrap(), direct);
        }
        assert!(direct_is_none(&base));
    }

    fn direct_is_none(f: &Forest) -> bool {
        f.with_min_node_size(5).unwrap().with_min_node_size(1).is_none()
    }
}
