//! L1-penalized linear and logistic regression by cyclic coordinate descent.
//!
//! Columns are centered and scaled to unit (1/n) variance before fitting;
//! coefficients are reported on the original scale. The squared-error path
//! uses covariance updates with lazily computed Gram columns; the logistic
//! path runs iteratively reweighted least squares with naive residual
//! updates inside. Both use warm starts along the penalty path and cycle the
//! active set to convergence before re-checking every coordinate.

use nalgebra::DMatrix;

use crate::data::column;
use crate::ensemble::folds::make_folds;
use crate::error::{Error, Result};
use crate::seed;

pub const PATH_LENGTH: usize = 100;
pub const TOLERANCE: f64 = 1e-7;
/// Largest weighted squared coordinate move at convergence, relative to the
/// null deviance per row.
const LOGISTIC_TOLERANCE: f64 = 1e-7;
const MAX_PASSES: usize = 100_000;
const MAX_IRLS: usize = 100;
const MIN_WEIGHT: f64 = 1e-5;
const PROB_CLIP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoPath {
    /// Strictly decreasing penalties.
    pub lambdas: Vec<f64>,
    pub intercepts: Vec<f64>,
    /// Original-scale slopes for each penalty.
    pub coefficients: Vec<Vec<f64>>,
    /// Mean held-out loss per penalty (squared error or binomial deviance).
    pub cv_loss: Vec<f64>,
    pub selected: usize,
}

impl LassoPath {
    pub fn selected_lambda(&self) -> f64 {
        self.lambdas[self.selected]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub logistic: bool,
    pub path: Option<LassoPath>,
}

impl LassoModel {
    pub fn linear_predictor(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let mut eta = vec![self.intercept; x.nrows()];
        for (j, &b) in self.coefficients.iter().enumerate() {
            if b != 0.0 {
                for (e, &v) in eta.iter_mut().zip(column(x, j)) {
                    *e += b * v;
                }
            }
        }
        eta
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let mut eta = self.linear_predictor(x);
        if self.logistic {
            eta.iter_mut().for_each(|v| *v = sigmoid(*v));
        }
        eta
    }

    pub fn nonzero(&self) -> Vec<usize> {
        (0..self.coefficients.len())
            .filter(|&j| self.coefficients[j] != 0.0)
            .collect()
    }
}

fn sigmoid(f: f64) -> f64 {
    1.0 / (1.0 + (-f).exp())
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    // a relative slack keeps rounding at the boundary (e.g. lambda = lambda_max) at zero
    let lambda = lambda * (1.0 + 1e-12);
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Centered, unit-variance copy of the non-constant columns.
struct Standardized {
    n: usize,
    p: usize,
    /// Original column index of each kept column.
    kept: Vec<usize>,
    means: Vec<f64>,
    sds: Vec<f64>,
    z: Vec<f64>,
}

impl Standardized {
    fn new(x: &DMatrix<f64>, rows: Option<&[usize]>) -> Self {
        let n = rows.map_or(x.nrows(), <[usize]>::len);
        let mut kept = Vec::new();
        let mut means = Vec::new();
        let mut sds = Vec::new();
        let mut z = Vec::new();
        let mut buf = vec![0.0; n];
        for j in 0..x.ncols() {
            let col = column(x, j);
            match rows {
                Some(r) => buf.iter_mut().zip(r).for_each(|(b, &i)| *b = col[i]),
                None => buf.copy_from_slice(col),
            }
            let m = buf.iter().sum::<f64>() / n as f64;
            let var = buf.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            if !(sd > 1e-12 * m.abs().max(1.0)) {
                continue;
            }
            kept.push(j);
            means.push(m);
            sds.push(sd);
            z.extend(buf.iter().map(|v| (v - m) / sd));
        }
        Standardized {
            n,
            p: kept.len(),
            kept,
            means,
            sds,
            z,
        }
    }

    fn col(&self, k: usize) -> &[f64] {
        &self.z[k * self.n..(k + 1) * self.n]
    }

    /// max_k |<z_k, y - ybar>| / n
    fn lambda_max(&self, y: &[f64]) -> f64 {
        let ybar = y.iter().sum::<f64>() / self.n as f64;
        (0..self.p)
            .map(|k| {
                let s: f64 = self.col(k).iter().zip(y).map(|(z, yi)| z * (yi - ybar)).sum();
                (s / self.n as f64).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Converts standardized (intercept, slopes) to original-scale coefficients
    /// over `p_total` columns.
    fn unscale(&self, b0: f64, beta: &[f64], p_total: usize) -> (f64, Vec<f64>) {
        let mut coef = vec![0.0; p_total];
        let mut intercept = b0;
        for k in 0..self.p {
            if beta[k] != 0.0 {
                let c = beta[k] / self.sds[k];
                coef[self.kept[k]] = c;
                intercept -= c * self.means[k];
            }
        }
        (intercept, coef)
    }
}

struct GaussianSolver<'a> {
    s: &'a Standardized,
    beta: Vec<f64>,
    grad: Vec<f64>,
    gram: Vec<Option<Vec<f64>>>,
}

impl<'a> GaussianSolver<'a> {
    fn new(s: &'a Standardized, y: &[f64]) -> Self {
        let n = s.n as f64;
        let ybar = y.iter().sum::<f64>() / n;
        let grad = (0..s.p)
            .map(|k| s.col(k).iter().zip(y).map(|(z, yi)| z * (yi - ybar)).sum::<f64>() / n)
            .collect();
        GaussianSolver {
            s,
            beta: vec![0.0; s.p],
            grad,
            gram: vec![None; s.p],
        }
    }

    fn ensure_gram(&mut self, j: usize) {
        if self.gram[j].is_none() {
            let s = self.s;
            let zj = s.col(j);
            let col = (0..s.p)
                .map(|k| s.col(k).iter().zip(zj).map(|(a, b)| a * b).sum::<f64>() / s.n as f64)
                .collect();
            self.gram[j] = Some(col);
        }
    }

    fn update(&mut self, j: usize, lambda: f64) -> f64 {
        let old = self.beta[j];
        let new = soft_threshold(self.grad[j] + old, lambda);
        let delta = new - old;
        if delta != 0.0 {
            self.beta[j] = new;
            self.ensure_gram(j);
            let g = self.gram[j].as_deref().unwrap();
            for (gr, gk) in self.grad.iter_mut().zip(g) {
                *gr -= gk * delta;
            }
        }
        delta.abs()
    }

    fn solve(&mut self, lambda: f64) {
        let p = self.s.p;
        for _ in 0..MAX_PASSES {
            let mut change = 0.0f64;
            for j in 0..p {
                change = change.max(self.update(j, lambda));
            }
            if change < TOLERANCE {
                return;
            }
            let active: Vec<usize> = (0..p).filter(|&j| self.beta[j] != 0.0).collect();
            for _ in 0..MAX_PASSES {
                let mut c = 0.0f64;
                for &j in &active {
                    c = c.max(self.update(j, lambda));
                }
                if c < TOLERANCE {
                    break;
                }
            }
        }
        log::warn!("lasso coordinate descent hit the pass limit at lambda {lambda}");
    }
}

/// Penalized IRLS with covariance-style coordinate descent: within one
/// quadratic approximation the gradient is kept current through cached
/// weighted Gram columns, so a pass costs O(p) per moving coordinate.
struct LogisticSolver<'a> {
    s: &'a Standardized,
    y: &'a [f64],
    b0: f64,
    beta: Vec<f64>,
    eta: Vec<f64>,
    w: Vec<f64>,
    /// Weighted variance of each column; index p is the intercept.
    v: Vec<f64>,
    /// Gradient of the quadratic approximation; index p is the intercept.
    g: Vec<f64>,
    /// Weighted Gram columns, filled on first use within an IRLS step.
    gram: Vec<Option<Vec<f64>>>,
    /// Convergence threshold on weighted squared coordinate moves.
    tol: f64,
}

impl<'a> LogisticSolver<'a> {
    fn new(s: &'a Standardized, y: &'a [f64]) -> Self {
        let ybar = (y.iter().sum::<f64>() / s.n as f64).clamp(PROB_CLIP, 1.0 - PROB_CLIP);
        let b0 = (ybar / (1.0 - ybar)).ln();
        let mut solver = LogisticSolver {
            s,
            y,
            b0,
            beta: vec![0.0; s.p],
            eta: vec![b0; s.n],
            w: vec![0.0; s.n],
            v: vec![0.0; s.p + 1],
            g: vec![0.0; s.p + 1],
            gram: vec![None; s.p + 1],
            tol: 0.0,
        };
        // moves are measured in deviance units, as v_j * (step)^2
        solver.tol = LOGISTIC_TOLERANCE * solver.deviance() / s.n as f64;
        solver
    }

    fn column_or_ones(&self, k: usize) -> Option<&[f64]> {
        (k < self.s.p).then(|| self.s.col(k))
    }

    fn weighted_dot(&self, a: Option<&[f64]>, b: Option<&[f64]>) -> f64 {
        let n = self.s.n;
        let sum: f64 = match (a, b) {
            (Some(a), Some(b)) => (0..n).map(|i| self.w[i] * a[i] * b[i]).sum(),
            (Some(c), None) | (None, Some(c)) => (0..n).map(|i| self.w[i] * c[i]).sum(),
            (None, None) => self.w.iter().sum(),
        };
        sum / n as f64
    }

    fn move_coordinate(&mut self, j: usize, delta: f64) {
        if self.gram[j].is_none() {
            let cj = self.column_or_ones(j);
            let col = (0..=self.s.p)
                .map(|k| self.weighted_dot(self.column_or_ones(k), cj))
                .collect();
            self.gram[j] = Some(col);
        }
        let col = self.gram[j].as_ref().expect("filled above");
        self.g.iter_mut().zip(col).for_each(|(g, c)| *g -= delta * c);
    }

    fn update(&mut self, j: usize, lambda: f64) -> f64 {
        if self.v[j] <= 0.0 {
            return 0.0;
        }
        let old = self.beta[j];
        let new = soft_threshold(self.g[j] + self.v[j] * old, lambda) / self.v[j];
        let delta = new - old;
        if delta != 0.0 {
            self.beta[j] = new;
            self.move_coordinate(j, delta);
        }
        self.v[j] * delta * delta
    }

    fn update_intercept(&mut self) -> f64 {
        let p = self.s.p;
        let delta = self.g[p] / self.v[p];
        if delta != 0.0 {
            self.b0 += delta;
            self.move_coordinate(p, delta);
        }
        self.v[p] * delta * delta
    }

    fn pass(&mut self, coords: &[usize], lambda: f64) -> f64 {
        let mut change = self.update_intercept();
        for &j in coords {
            change = change.max(self.update(j, lambda));
        }
        change
    }

    /// Binomial deviance at the current linear predictor.
    fn deviance(&self) -> f64 {
        self.eta
            .iter()
            .zip(self.y)
            .map(|(&e, &y)| 2.0 * (e.max(0.0) - y * e + (-e.abs()).exp().ln_1p()))
            .sum()
    }

    /// Sets weights and gradient at the current linear predictor.
    fn expand(&mut self) {
        let (n, p) = (self.s.n, self.s.p);
        let mut resid = vec![0.0; n];
        for i in 0..n {
            let q = sigmoid(self.eta[i]);
            let w = (q * (1.0 - q)).max(MIN_WEIGHT);
            self.w[i] = w;
            // weight times working residual
            resid[i] = self.y[i] - q;
        }
        for k in 0..p {
            let zk = self.s.col(k);
            self.v[k] = self.weighted_dot(Some(zk), Some(zk));
            self.g[k] = zk.iter().zip(&resid).map(|(z, r)| z * r).sum::<f64>() / n as f64;
        }
        self.v[p] = self.weighted_dot(None, None);
        self.g[p] = resid.iter().sum::<f64>() / n as f64;
        self.gram.iter_mut().for_each(|c| *c = None);
    }

    fn solve(&mut self, lambda: f64) {
        let p = self.s.p;
        let all: Vec<usize> = (0..p).collect();
        for _ in 0..MAX_IRLS {
            let start_b0 = self.b0;
            let start_beta = self.beta.clone();
            self.expand();
            for _ in 0..MAX_PASSES {
                if self.pass(&all, lambda) < self.tol {
                    break;
                }
                let active: Vec<usize> = (0..p).filter(|&j| self.beta[j] != 0.0).collect();
                for _ in 0..MAX_PASSES {
                    if self.pass(&active, lambda) < self.tol {
                        break;
                    }
                }
            }
            let db0 = self.b0 - start_b0;
            let mut change = self.v[p] * db0 * db0;
            self.eta.iter_mut().for_each(|e| *e += db0);
            for j in 0..p {
                let d = self.beta[j] - start_beta[j];
                change = change.max(self.v[j] * d * d);
                if d != 0.0 {
                    self.eta.iter_mut().zip(self.s.col(j)).for_each(|(e, z)| *e += d * z);
                }
            }
            if change < self.tol {
                return;
            }
        }
        log::warn!("logistic lasso IRLS hit the iteration limit at lambda {lambda}");
    }
}

/// The logistic path stops once the fit explains this share of the deviance,
/// or once a step gains less than `MIN_DEVIANCE_GAIN` of it, from the
/// `MIN_PATH_POINTS`-th penalty on. Later penalties reuse the last solution.
const MAX_DEVIANCE_RATIO: f64 = 0.999;
const MIN_DEVIANCE_GAIN: f64 = 1e-5;
const MIN_PATH_POINTS: usize = 5;

/// Original-scale (intercept, slopes) at each penalty, warm-started in order.
fn solve_path(
    x: &DMatrix<f64>,
    y: &[f64],
    rows: Option<&[usize]>,
    logistic: bool,
    lambdas: &[f64],
    early_stop: bool,
) -> Vec<(f64, Vec<f64>)> {
    let s = Standardized::new(x, rows);
    let ysub: Vec<f64> = match rows {
        Some(r) => r.iter().map(|&i| y[i]).collect(),
        None => y.to_vec(),
    };
    let p_total = x.ncols();
    let ybar = ysub.iter().sum::<f64>() / ysub.len() as f64;
    let mut out = Vec::with_capacity(lambdas.len());
    if logistic {
        if ysub.iter().all(|&v| v == ysub[0]) {
            let q = ybar.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            let b0 = (q / (1.0 - q)).ln();
            return lambdas.iter().map(|_| (b0, vec![0.0; p_total])).collect();
        }
        let mut solver = LogisticSolver::new(&s, &ysub);
        let null_dev = solver.deviance();
        let mut prev_ratio = 0.0;
        for &lam in lambdas {
            solver.solve(lam);
            out.push(s.unscale(solver.b0, &solver.beta, p_total));
            let ratio = 1.0 - solver.deviance() / null_dev;
            if early_stop
                && out.len() >= MIN_PATH_POINTS
                && (ratio > MAX_DEVIANCE_RATIO || ratio - prev_ratio < MIN_DEVIANCE_GAIN * ratio)
            {
                let last = out.last().cloned().expect("nonempty path");
                out.resize(lambdas.len(), last);
                break;
            }
            prev_ratio = ratio;
        }
    } else {
        let mut solver = GaussianSolver::new(&s, &ysub);
        for &lam in lambdas {
            solver.solve(lam);
            out.push(s.unscale(ybar, &solver.beta, p_total));
        }
    }
    out
}

/// Penalty sequence: 100 log-spaced values from the smallest penalty that
/// zeroes every slope down to a fraction 1e-4 (n > p) or 1e-2 of it.
pub fn lambda_sequence(x: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let s = Standardized::new(x, None);
    let mut lmax = s.lambda_max(y);
    if !(lmax > 0.0) {
        lmax = 1.0;
    }
    let ratio: f64 = if x.nrows() > x.ncols() { 1e-4 } else { 1e-2 };
    (0..PATH_LENGTH)
        .map(|k| lmax * ratio.powf(k as f64 / (PATH_LENGTH - 1) as f64))
        .collect()
}

/// Smallest penalty at which every slope is zero, on standardized columns.
pub fn lambda_max(x: &DMatrix<f64>, y: &[f64]) -> f64 {
    Standardized::new(x, None).lambda_max(y)
}

/// Lasso at a single fixed penalty (no cross-validation).
pub fn fit_lasso_at(x: &DMatrix<f64>, y: &[f64], logistic: bool, lambda: f64) -> LassoModel {
    let path = if lambda > 0.0 {
        // warm start from the null model makes large penalties cheap
        let lmax = lambda_max(x, y);
        let mut seq: Vec<f64> = Vec::new();
        if lmax > lambda {
            let steps = 10;
            for k in 0..steps {
                seq.push(lmax * (lambda / lmax).powf(k as f64 / steps as f64));
            }
        }
        seq.push(lambda);
        seq
    } else {
        vec![0.0]
    };
    let (intercept, coefficients) = solve_path(x, y, None, logistic, &path, false).pop().unwrap();
    LassoModel {
        intercept,
        coefficients,
        lambda,
        logistic,
        path: None,
    }
}

fn fold_loss(logistic: bool, y: f64, eta: f64) -> f64 {
    if logistic {
        let q = sigmoid(eta).clamp(PROB_CLIP, 1.0 - PROB_CLIP);
        -2.0 * (y * q.ln() + (1.0 - y) * (1.0 - q).ln())
    } else {
        (y - eta) * (y - eta)
    }
}

/// Lasso with the penalty chosen by `folds`-fold cross-validation
/// (stratified for logistic fits), refit at the CV-minimizing penalty.
pub fn fit_lasso_cv(
    x: &DMatrix<f64>,
    y: &[f64],
    logistic: bool,
    folds: usize,
    seed: u64,
) -> Result<LassoModel> {
    let n = x.nrows();
    if n < 20 {
        return Err(Error::TooFewObservations(format!(
            "lasso cross-validation needs at least 20 rows, got {n}"
        )));
    }
    let lambdas = lambda_sequence(x, y);
    let full = solve_path(x, y, None, logistic, &lambdas, true);
    let constant = y.iter().all(|&v| v == y[0]);
    let mut cv_loss = vec![0.0; lambdas.len()];
    if !constant {
        // stratify unless a class is too small to appear in every fold
        let smallest = y.iter().filter(|&&v| v == 1.0).count().min(y.iter().filter(|&&v| v != 1.0).count());
        let labels = (logistic && smallest >= folds).then_some(y);
        let assignment = make_folds(n, folds, labels, seed::derive(seed, "lasso-cv"))?;
        let mut eta = vec![0.0; lambdas.len()];
        for v in 0..assignment.n_folds() {
            let (train, test) = assignment.split(v);
            let fits = solve_path(x, y, Some(&train), logistic, &lambdas, true);
            for &i in &test {
                for (k, (b0, coef)) in fits.iter().enumerate() {
                    let mut e = *b0;
                    for (j, &c) in coef.iter().enumerate() {
                        if c != 0.0 {
                            e += c * x[(i, j)];
                        }
                    }
                    eta[k] = e;
                }
                for k in 0..lambdas.len() {
                    cv_loss[k] += fold_loss(logistic, y[i], eta[k]);
                }
            }
        }
        cv_loss.iter_mut().for_each(|l| *l /= n as f64);
    }
    let mut selected = 0;
    for k in 1..cv_loss.len() {
        if cv_loss[k] < cv_loss[selected] {
            selected = k;
        }
    }
    let (intercepts, coefficients): (Vec<f64>, Vec<Vec<f64>>) = full.into_iter().unzip();
    let path = LassoPath {
        lambdas,
        intercepts,
        coefficients,
        cv_loss,
        selected,
    };
    Ok(LassoModel {
        intercept: path.intercepts[selected],
        coefficients: path.coefficients[selected].clone(),
        lambda: path.selected_lambda(),
        logistic,
        path: Some(path),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_problem(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = seed::rng(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = (0..n)
            .map(|i| 1.0 + 2.0 * x[(i, 0)] - x[(i, 1)] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        (x, y)
    }

    #[test]
    fn penalty_at_lambda_max_gives_null_model() {
        let (x, y) = random_problem(100, 4, 1);
        let lmax = lambda_max(&x, &y);
        for lam in [lmax, 1.5 * lmax] {
            let m = fit_lasso_at(&x, &y, false, lam);
            assert!(m.coefficients.iter().all(|&c| c == 0.0));
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            assert!(m.predict(&x).iter().all(|&v| (v - mean).abs() < 1e-12));
        }
        // just below the threshold something enters
        let m = fit_lasso_at(&x, &y, false, 0.99 * lmax);
        assert!(m.coefficients.iter().any(|&c| c != 0.0));
    }

    #[test]
    fn path_is_decreasing_and_starts_at_zero() {
        let (x, y) = random_problem(80, 6, 2);
        let m = fit_lasso_cv(&x, &y, false, 10, 5).unwrap();
        let path = m.path.as_ref().unwrap();
        assert_eq!(path.lambdas.len(), PATH_LENGTH);
        assert!(path.lambdas.windows(2).all(|w| w[1] < w[0]));
        assert!(path.coefficients[0].iter().all(|&c| c == 0.0));
        let ratio = path.lambdas[99] / path.lambdas[0];
        assert!((ratio - 1e-4).abs() < 1e-12);
        // the signal columns survive cross-validation
        assert!(m.coefficients[0] > 1.5 && m.coefficients[1] < -0.5);
    }

    #[test]
    fn logistic_lambda_max_gives_intercept_only() {
        let (x, y) = random_problem(200, 3, 3);
        let yb: Vec<f64> = y.iter().map(|&v| if v > 1.0 { 1.0 } else { 0.0 }).collect();
        let lmax = lambda_max(&x, &yb);
        let m = fit_lasso_at(&x, &yb, true, lmax);
        assert!(m.coefficients.iter().all(|&c| c == 0.0));
        let mean = yb.iter().sum::<f64>() / yb.len() as f64;
        assert!(m.predict(&x).iter().all(|&v| (v - mean).abs() < 1e-9));
        let cv = fit_lasso_cv(&x, &yb, true, 10, 1).unwrap();
        assert!(cv.coefficients[0] > 0.0);
        assert!(cv.predict(&x).iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn unpenalized_logistic_matches_newton() {
        let (x, y) = random_problem(300, 2, 4);
        let yb: Vec<f64> = y.iter().map(|&v| if v > 1.0 { 1.0 } else { 0.0 }).collect();
        let m = fit_lasso_at(&x, &yb, true, 0.0);
        // score equations vanish at the maximum-likelihood estimate
        let p = m.predict(&x);
        let mut score = [0.0; 3];
        for i in 0..300 {
            let r = yb[i] - p[i];
            score[0] += r;
            score[1] += r * x[(i, 0)];
            score[2] += r * x[(i, 1)];
        }
        assert!(score.iter().all(|s| s.abs() / 300.0 < 1e-4), "{score:?}");
    }

    #[test]
    fn constant_columns_are_excluded() {
        let (mut x, y) = random_problem(60, 3, 5);
        x.column_mut(2).fill(3.0);
        let m = fit_lasso_cv(&x, &y, false, 10, 0).unwrap();
        assert_eq!(m.coefficients[2], 0.0);
    }

    #[test]
    fn too_few_rows() {
        let (x, y) = random_problem(19, 2, 6);
        assert!(matches!(
            fit_lasso_cv(&x, &y, false, 10, 0),
            Err(Error::TooFewObservations(_))
        ));
    }
}
