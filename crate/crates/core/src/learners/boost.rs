//! Stagewise gradient boosting with shallow regression trees.

use nalgebra::DMatrix;

use super::tree::{BinnedMatrix, Tree, TreeGrower, TreeParams};

const MAX_BINS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostParams {
    pub n_trees: usize,
    pub shrinkage: f64,
    pub max_depth: usize,
    pub min_obs_node: usize,
}

impl BoostParams {
    pub fn new(n_trees: usize, shrinkage: f64) -> Self {
        BoostParams {
            n_trees,
            shrinkage,
            max_depth: 4,
            min_obs_node: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Booster {
    init: f64,
    shrinkage: f64,
    logistic: bool,
    trees: Vec<Tree>,
    train_loss: Vec<f64>,
}

fn sigmoid(f: f64) -> f64 {
    1.0 / (1.0 + (-f).exp())
}

fn loss(y: &[f64], f: &[f64], logistic: bool) -> f64 {
    let n = y.len() as f64;
    if logistic {
        // mean negative log-likelihood, written stably
        y.iter()
            .zip(f)
            .map(|(&yi, &fi)| fi.max(0.0) - yi * fi + (-fi.abs()).exp().ln_1p())
            .sum::<f64>()
            / n
    } else {
        y.iter().zip(f).map(|(&yi, &fi)| (yi - fi) * (yi - fi)).sum::<f64>() / n
    }
}

impl Booster {
    /// Squared-error boosting for continuous outcomes, Bernoulli deviance
    /// with one-step Newton leaf values when `logistic` is set.
    pub fn fit(x: &DMatrix<f64>, y: &[f64], params: BoostParams, logistic: bool, seed: u64) -> Booster {
        let n = x.nrows();
        let ybar = y.iter().sum::<f64>() / n as f64;
        let init = if logistic {
            let q = ybar.clamp(1e-10, 1.0 - 1e-10);
            (q / (1.0 - q)).ln()
        } else {
            ybar
        };
        let binned = BinnedMatrix::new(x, MAX_BINS);
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_split: 2 * params.min_obs_node,
            min_leaf: params.min_obs_node,
            mtry: None,
        };
        let mut grower = TreeGrower::new(&binned, tree_params);
        let mut f = vec![init; n];
        let mut grad = vec![0.0; n];
        let mut prob = vec![0.0; n];
        let mut rows: Vec<u32> = (0..n as u32).collect();
        let mut leaves = Vec::new();
        let mut trees = Vec::with_capacity(params.n_trees);
        let mut train_loss = Vec::with_capacity(params.n_trees + 1);
        train_loss.push(loss(y, &f, logistic));
        // no row or column subsampling, so the seed plays no role
        let _ = seed;
        for _ in 0..params.n_trees {
            for i in 0..n {
                if logistic {
                    prob[i] = sigmoid(f[i]);
                    grad[i] = y[i] - prob[i];
                } else {
                    grad[i] = y[i] - f[i];
                }
            }
            let mut tree = grower.grow(&grad, &mut rows, 0, &mut leaves);
            for leaf in &leaves {
                let members = &rows[leaf.start..leaf.end];
                let value = if logistic {
                    let (mut num, mut den) = (0.0, 0.0);
                    for &r in members {
                        let r = r as usize;
                        num += grad[r];
                        den += prob[r] * (1.0 - prob[r]);
                    }
                    num / den.max(1e-10)
                } else {
                    tree.nodes[leaf.node].value
                };
                tree.nodes[leaf.node].value = value;
                let step = params.shrinkage * value;
                for &r in members {
                    f[r as usize] += step;
                }
            }
            train_loss.push(loss(y, &f, logistic));
            trees.push(tree);
        }
        Booster {
            init,
            shrinkage: params.shrinkage,
            logistic,
            trees,
            train_loss,
        }
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// The model formed by the first `n_trees` stages.
    pub fn truncated(&self, n_trees: usize) -> Booster {
        let k = n_trees.min(self.trees.len());
        Booster {
            init: self.init,
            shrinkage: self.shrinkage,
            logistic: self.logistic,
            trees: self.trees[..k].to_vec(),
            train_loss: self.train_loss[..=k].to_vec(),
        }
    }

    /// Training loss after each stage, starting with the constant model.
    pub fn train_loss(&self) -> &[f64] {
        &self.train_loss
    }

    pub fn decision_function(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let mut out = vec![self.init; x.nrows()];
        for tree in &self.trees {
            tree.accumulate(x, self.shrinkage, &mut out);
        }
        out
    }

    /// Predictions on the response scale (probabilities for logistic models).
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let mut f = self.decision_function(x);
        if self.logistic {
            f.iter_mut().for_each(|v| *v = sigmoid(*v));
        }
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> (DMatrix<f64>, Vec<f64>) {
        let x = DMatrix::from_fn(n, 3, |i, j| ((i * (2 * j + 5) + j) % 41) as f64 / 41.0);
        let y = (0..n).map(|i| if x[(i, 0)] > 0.5 { 2.0 } else { -1.0 } + x[(i, 1)]).collect();
        (x, y)
    }

    #[test]
    fn zero_shrinkage_keeps_initial_prediction() {
        let (x, y) = toy(100);
        let b = Booster::fit(&x, &y, BoostParams::new(50, 0.0), false, 1);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!(b.predict(&x).iter().all(|&v| (v - mean).abs() < 1e-12));
    }

    #[test]
    fn training_loss_never_increases() {
        let (x, y) = toy(300);
        let b = Booster::fit(&x, &y, BoostParams::new(100, 0.1), false, 1);
        for w in b.train_loss().windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        let yb: Vec<f64> = y.iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect();
        let b = Booster::fit(&x, &yb, BoostParams::new(100, 0.1), true, 1);
        for w in b.train_loss().windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(b.predict(&x).iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn truncation_matches_shorter_fit() {
        let (x, y) = toy(200);
        let long = Booster::fit(&x, &y, BoostParams::new(60, 0.1), false, 3);
        let short = Booster::fit(&x, &y, BoostParams::new(20, 0.1), false, 3);
        assert_eq!(long.truncated(20), short);
    }

    #[test]
    fn single_full_step_tree_fits_step_function() {
        let n = 320;
        let x = DMatrix::from_fn(n, 1, |i, _| i as f64);
        // 16 equal plateaus of 20 rows: a depth-4 tree represents this exactly
        let y: Vec<f64> = (0..n).map(|i| ((i / 20) % 5) as f64 * 1.5).collect();
        let b = Booster::fit(&x, &y, BoostParams::new(1, 1.0), false, 0);
        let pred = b.predict(&x);
        let mse: f64 = y.iter().zip(&pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
        assert!(mse < b.train_loss()[0]);
        assert!(pred.iter().all(|v| v.is_finite()));
    }
}
