use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use screenlearn::data::Dataset;
use screenlearn::learners::{self, lasso, mars, BoostParams, Booster, LearnerSpec};
use screenlearn::OutcomeKind;

fn gaussian(n: usize, p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

/// Centered columns, mutually orthogonal, with mean square one.
fn orthonormal_design(n: usize, p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut a = gaussian(n, p + 1, rng);
    a.column_mut(0).fill(1.0);
    let q = a.qr().q();
    q.columns(1, p).into_owned() * (n as f64).sqrt()
}

fn soft(z: f64, t: f64) -> f64 {
    z.signum() * (z.abs() - t).max(0.0)
}

#[test]
fn orthonormal_design_matches_soft_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let n = rng.random_range(30..120);
        let p = rng.random_range(1..8);
        let x = orthonormal_design(n, p, &mut rng);
        let y: Vec<f64> = (0..n).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal) + 1.0).collect();
        let lmax = lasso::lambda_max(&x, &y);
        let lambda = lmax * rng.random_range(0.05..0.95);
        let m = lasso::fit_lasso_at(&x, &y, false, lambda);
        let ybar = y.iter().sum::<f64>() / n as f64;
        for j in 0..p {
            let zy: f64 = (0..n).map(|i| x[(i, j)] * y[i]).sum::<f64>() / n as f64;
            assert!((m.coefficients[j] - soft(zy, lambda)).abs() < 1e-6);
        }
        assert!((m.intercept - ybar).abs() < 1e-6);
    }
}

#[test]
fn penalty_at_or_above_lambda_max_gives_null_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = gaussian(80, 6, &mut rng);
    let y: Vec<f64> = (0..80).map(|i| x[(i, 0)] - 2.0 * x[(i, 3)] + rng.sample::<f64, _>(StandardNormal)).collect();
    let lmax = lasso::lambda_max(&x, &y);
    let ybar = y.iter().sum::<f64>() / 80.0;
    for scale in [1.0, 1.5, 10.0] {
        let m = lasso::fit_lasso_at(&x, &y, false, lmax * scale);
        assert!(m.coefficients.iter().all(|&b| b == 0.0));
        assert!((m.intercept - ybar).abs() < 1e-12);
    }
    assert!(!lasso::fit_lasso_at(&x, &y, false, lmax * 0.9).nonzero().is_empty());
    let yb: Vec<f64> = y.iter().map(|&v| (v > ybar) as u8 as f64).collect();
    let m = lasso::fit_lasso_at(&x, &yb, true, lasso::lambda_max(&x, &yb));
    assert!(m.coefficients.iter().all(|&b| b == 0.0));
    let rate = yb.iter().sum::<f64>() / 80.0;
    assert!((m.intercept - (rate / (1.0 - rate)).ln()).abs() < 1e-8);
}

#[test]
fn zero_penalty_matches_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let (n, p) = (500, 5);
        let x = gaussian(n, p, &mut rng);
        let y: Vec<f64> = (0..n)
            .map(|i| 0.5 + (0..p).map(|j| (j as f64 - 2.0) * x[(i, j)]).sum::<f64>() + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
        let yv = nalgebra::DVector::from_column_slice(&y);
        let ols = (design.transpose() * &design).cholesky().unwrap().solve(&(design.transpose() * yv));
        let m = lasso::fit_lasso_at(&x, &y, false, 0.0);
        assert!((m.intercept - ols[0]).abs() < 1e-5);
        for j in 0..p {
            assert!((m.coefficients[j] - ols[j + 1]).abs() < 1e-5, "{} vs {}", m.coefficients[j], ols[j + 1]);
        }
    }
}

#[test]
fn lasso_path_moves_continuously() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = gaussian(100, 4, &mut rng);
    let y: Vec<f64> = (0..100).map(|i| 3.0 * x[(i, 1)] - x[(i, 2)] + rng.sample::<f64, _>(StandardNormal)).collect();
    let m = lasso::fit_lasso_cv(&x, &y, false, 10, 1).unwrap();
    let path = m.path.unwrap();
    for k in 1..path.lambdas.len() {
        let step = path.lambdas[k - 1] - path.lambdas[k];
        let moved = path.coefficients[k]
            .iter()
            .zip(&path.coefficients[k - 1])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(moved < 10.0 * step.max(1e-3), "step {k}: moved {moved}, lambda step {step}");
    }
}

#[test]
fn boosting_training_loss_is_nonincreasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = gaussian(300, 5, &mut rng);
    let f: Vec<f64> = (0..300).map(|i| (x[(i, 0)] * 2.0).sin() + x[(i, 1)] * x[(i, 2)]).collect();
    let y: Vec<f64> = f.iter().map(|v| v + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
    let yb: Vec<f64> = f.iter().map(|&v| (v > 0.0) as u8 as f64).collect();
    for (target, logistic) in [(&y, false), (&yb, true)] {
        for shrinkage in [0.01, 0.1] {
            let b = Booster::fit(&x, target, BoostParams::new(300, shrinkage), logistic, 1);
            for w in b.train_loss().windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }
}

#[test]
fn binary_predictions_are_probabilities_and_fits_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = gaussian(200, 4, &mut rng);
    let y: Vec<f64> = (0..200).map(|i| (x[(i, 0)] + 0.5 * rng.sample::<f64, _>(StandardNormal) > 0.0) as u8 as f64).collect();
    let d = Dataset::new(x.clone(), y, OutcomeKind::Binary).unwrap();
    let far = &x * 25.0;
    let specs = [
        LearnerSpec::Lasso,
        LearnerSpec::RandomForest { min_node_size: 5 },
        LearnerSpec::GradBoost { n_trees: 100, shrinkage: 0.1 },
        LearnerSpec::Mars,
    ];
    for spec in specs {
        let a = learners::fit(&d, &spec, 9).unwrap();
        let b = learners::fit(&d, &spec, 9).unwrap();
        assert_eq!(a, b, "{spec}");
        for pred in [a.predict(&x).unwrap(), a.predict(&far).unwrap()] {
            assert!(pred.iter().all(|v| (0.0..=1.0).contains(v)), "{spec}");
        }
    }
}

#[test]
fn mars_pruning_does_not_raise_gcv() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let n = rng.random_range(60..300);
        let x = gaussian(n, 4, &mut rng);
        let y: Vec<f64> = (0..n)
            .map(|i| (x[(i, 0)] - 0.3).max(0.0) * 2.0 - x[(i, 1)].abs() + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let m = mars::fit_mars(&x, &y, false);
        assert!(m.gcv <= m.forward_gcv + 1e-12);
        assert!(m.terms.len() <= m.forward_terms);
    }
}
