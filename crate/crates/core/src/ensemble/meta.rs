//! Meta-learners turning cross-validated predictions into simplex weights.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const KKT_TOLERANCE: f64 = 1e-10;
pub const PROB_CLIP: f64 = 1e-6;
const NLL_TOLERANCE: f64 = 1e-10;
const NLL_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct MetaWeights {
    /// Normalized weights on the simplex.
    pub weights: Vec<f64>,
    /// Solution before normalization (equal to `weights` for the log-loss learner).
    pub raw: Vec<f64>,
    /// Set when the raw solution was all zero and uniform weights were used.
    pub degenerate: bool,
    pub iterations: usize,
}

fn normalized(raw: Vec<f64>, iterations: usize) -> MetaWeights {
    let total: f64 = raw.iter().sum();
    let k = raw.len();
    if total > 0.0 && total.is_finite() {
        MetaWeights {
            weights: raw.iter().map(|w| w / total).collect(),
            raw,
            degenerate: false,
            iterations,
        }
    } else {
        log::warn!("meta-learner returned all-zero weights; using uniform weights");
        MetaWeights {
            weights: vec![1.0 / k as f64; k],
            raw,
            degenerate: true,
            iterations,
        }
    }
}

/// Least squares on the columns in `passive`, by Householder QR.
fn passive_solve(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[usize]) -> Option<Vec<f64>> {
    let sub = a.select_columns(passive);
    let qr = sub.qr();
    let qtb = qr.q().transpose() * b;
    let r = qr.r();
    if (0..r.nrows().min(r.ncols())).any(|i| r[(i, i)].abs() < 1e-12 * r.norm().max(1e-300)) {
        return None;
    }
    r.solve_upper_triangular(&qtb).map(|s| s.iter().copied().collect())
}

/// Lawson–Hanson active-set solution of min ‖b − A x‖² subject to x ≥ 0.
pub fn nnls(a: &DMatrix<f64>, b: &[f64]) -> (Vec<f64>, usize) {
    let k = a.ncols();
    let b = DVector::from_column_slice(b);
    let mut x = vec![0.0; k];
    let mut passive = vec![false; k];
    let scale = (a.transpose() * &b).amax().max(1.0);
    let tol = KKT_TOLERANCE * scale;
    let gradient = |x: &[f64]| -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        let resid = &b - a * xv;
        (a.transpose() * resid).iter().copied().collect()
    };
    let mut w = gradient(&x);
    // columns that cannot join the passive set until it changes (collinear)
    let mut blocked = vec![false; k];
    let mut iterations = 0;
    let max_outer = 10 * k.max(1) + 10;
    while iterations < max_outer {
        let candidate = (0..k)
            .filter(|&j| !passive[j] && !blocked[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]).then(j.cmp(&i)));
        let Some(j) = candidate else { break };
        iterations += 1;
        passive[j] = true;
        let mut progressed = false;
        loop {
            let idx: Vec<usize> = (0..k).filter(|&c| passive[c]).collect();
            let Some(s) = passive_solve(a, &b, &idx) else {
                passive[j] = false;
                blocked[j] = true;
                break;
            };
            if s.iter().all(|&v| v > 0.0) {
                for (pos, &c) in idx.iter().enumerate() {
                    x[c] = s[pos];
                }
                progressed = true;
                break;
            }
            let mut alpha = f64::INFINITY;
            let mut leaving = idx[0];
            for (pos, &c) in idx.iter().enumerate() {
                if s[pos] <= 0.0 {
                    let denom = x[c] - s[pos];
                    let a_c = if denom > 0.0 { x[c] / denom } else { 0.0 };
                    if a_c < alpha {
                        alpha = a_c;
                        leaving = c;
                    }
                }
            }
            for (pos, &c) in idx.iter().enumerate() {
                x[c] += alpha * (s[pos] - x[c]);
                if c == leaving || x[c] <= 0.0 {
                    x[c] = 0.0;
                    passive[c] = false;
                }
            }
            progressed = true;
            if !idx.iter().any(|&c| passive[c]) {
                break;
            }
        }
        if progressed {
            blocked.iter_mut().for_each(|v| *v = false);
        }
        w = gradient(&x);
    }
    (x, iterations)
}

fn check_finite(z: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if z.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: z.nrows(),
            got: y.len(),
        });
    }
    if z.ncols() == 0 {
        return Err(Error::InvalidData("no candidate columns".into()));
    }
    if z.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite value in meta-learner input".into()));
    }
    Ok(())
}

/// Non-negative least-squares weights, rescaled to sum to one.
pub fn meta_nnls(z: &DMatrix<f64>, y: &[f64]) -> Result<MetaWeights> {
    check_finite(z, y)?;
    let (raw, iterations) = nnls(z, y);
    Ok(normalized(raw, iterations))
}

fn mix(z: &DMatrix<f64>, w: &[f64], q: &mut [f64]) {
    q.iter_mut().for_each(|v| *v = 0.0);
    for (c, &wc) in w.iter().enumerate() {
        if wc != 0.0 {
            for (qi, zi) in q.iter_mut().zip(z.column(c).iter()) {
                *qi += wc * zi;
            }
        }
    }
}

/// Mean Bernoulli negative log-likelihood of the mixture `z w`, clipped.
pub fn nll_loss(z: &DMatrix<f64>, y: &[f64], w: &[f64]) -> f64 {
    let mut q = vec![0.0; y.len()];
    mix(z, w, &mut q);
    clipped_loss(&q, y)
}

fn clipped_loss(q: &[f64], y: &[f64]) -> f64 {
    let total: f64 = q
        .iter()
        .zip(y)
        .map(|(&qi, &yi)| {
            let qi = qi.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            -(yi * qi.ln() + (1.0 - yi) * (1.0 - qi).ln())
        })
        .sum();
    total / y.len() as f64
}

/// Simplex weights minimizing the mean clipped log-loss, by exponentiated
/// gradient from uniform weights with a halving step search.
pub fn meta_nll(z: &DMatrix<f64>, y: &[f64]) -> Result<MetaWeights> {
    check_finite(z, y)?;
    if z.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::InvalidData("meta-learner probabilities must lie in [0, 1]".into()));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidData("binary outcome must be 0 or 1".into()));
    }
    let (n, k) = (z.nrows(), z.ncols());
    let mut w = vec![1.0 / k as f64; k];
    let mut q = vec![0.0; n];
    mix(z, &w, &mut q);
    let mut loss = clipped_loss(&q, y);
    let mut grad = vec![0.0; k];
    let mut trial = vec![0.0; k];
    let mut trial_q = vec![0.0; n];
    let mut iterations = 0;
    while iterations < NLL_MAX_ITER {
        iterations += 1;
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..n {
            let qi = q[i].clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            let d = -(y[i] / qi - (1.0 - y[i]) / (1.0 - qi)) / n as f64;
            for (c, g) in grad.iter_mut().enumerate() {
                *g += d * z[(i, c)];
            }
        }
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-20 {
            let shift = grad.iter().map(|g| -step * g).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for c in 0..k {
                trial[c] = w[c] * (-step * grad[c] - shift).exp();
                total += trial[c];
            }
            trial.iter_mut().for_each(|v| *v /= total);
            mix(z, &trial, &mut trial_q);
            let trial_loss = clipped_loss(&trial_q, y);
            if trial_loss < loss {
                accepted = Some(trial_loss);
                break;
            }
            step *= 0.5;
        }
        let Some(new_loss) = accepted else { break };
        let improvement = loss - new_loss;
        w.copy_from_slice(&trial);
        std::mem::swap(&mut q, &mut trial_q);
        loss = new_loss;
        if improvement < NLL_TOLERANCE {
            break;
        }
    }
    // a vertex optimum is only approached geometrically; take it when better
    for c in 0..k {
        let mut vertex = vec![0.0; k];
        vertex[c] = 1.0;
        let vl = nll_loss(z, y, &vertex);
        if vl < loss {
            loss = vl;
            w = vertex;
        }
    }
    Ok(MetaWeights {
        raw: w.clone(),
        weights: w,
        degenerate: false,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_column_gets_full_weight() {
        let z = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let m = meta_nnls(&z, &[1.0, 2.0, 2.5, 4.5]).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-12);
        let zp = DMatrix::from_column_slice(4, 1, &[0.1, 0.9, 0.4, 0.6]);
        let m = meta_nll(&zp, &[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(m.weights, vec![1.0]);
    }

    #[test]
    fn negated_column_gets_zero_weight() {
        let y: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin()).collect();
        let z = DMatrix::from_fn(20, 2, |i, c| if c == 0 { y[i] } else { -y[i] });
        let m = meta_nnls(&z, &y).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-9);
        assert_eq!(m.weights[1], 0.0);
    }

    #[test]
    fn all_negative_columns_fall_back_to_uniform() {
        let y = [1.0, 2.0, 3.0];
        let z = DMatrix::from_fn(3, 2, |i, _| -y[i]);
        let m = meta_nnls(&z, &y).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn duplicate_columns_do_not_stall() {
        let y: Vec<f64> = (0..30).map(|i| i as f64 / 3.0).collect();
        let z = DMatrix::from_fn(30, 3, |i, c| if c < 2 { y[i] } else { (i % 4) as f64 });
        let m = meta_nnls(&z, &y).unwrap();
        assert!((m.weights[0] + m.weights[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_probabilities() {
        let z = DMatrix::from_column_slice(2, 1, &[0.5, 1.5]);
        assert!(meta_nll(&z, &[0.0, 1.0]).is_err());
    }
}
