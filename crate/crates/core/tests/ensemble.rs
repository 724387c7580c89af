use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use screenlearn::bench::{evaluate_arms, EstimatorKind, EstimatorSpec};
use screenlearn::data::Dataset;
use screenlearn::ensemble::{
    cv_predictions, fit_superlearner, fit_superlearner_with, make_folds, meta_nll, meta_nnls, nll_loss, nnls,
    CandidateLibrary, Refit, SuperLearnerOptions,
};
use screenlearn::learners::LearnerSpec;
use screenlearn::metrics::r_squared;
use screenlearn::screens::{expand_screen_set, ScreenSetName, ScreenSpec};
use screenlearn::sim::{draw_dataset, generate_dataset, Correlation, Relationship, ScenarioConfig, Strength};
use screenlearn::OutcomeKind;

fn sse(z: &DMatrix<f64>, y: &[f64], w: &[f64]) -> f64 {
    (0..z.nrows())
        .map(|i| {
            let f: f64 = (0..z.ncols()).map(|j| z[(i, j)] * w[j]).sum();
            (y[i] - f).powi(2)
        })
        .sum()
}

fn vertex(k: usize, j: usize) -> Vec<f64> {
    (0..k).map(|i| (i == j) as u8 as f64).collect()
}

#[test]
fn held_out_rows_ignore_their_own_outcome() {
    let cfg = ScenarioConfig {
        n: 50,
        p: 6,
        relationship: Relationship::Nonlinear,
        strength: Strength::Strong,
        correlation: Correlation::Uncorrelated,
        outcome_kind: OutcomeKind::Continuous,
        seed: 4,
    };
    let d = generate_dataset(&cfg).unwrap();
    let lib = CandidateLibrary::new(&[ScreenSpec::AllVars], &[LearnerSpec::Lasso, LearnerSpec::Mars]).unwrap();
    let folds = make_folds(50, 5, None, 8).unwrap();
    let base = cv_predictions(&d, &lib, &folds, 1).unwrap();
    assert!(base.failures.is_empty());
    for i in 0..50 {
        let mut y = d.y().to_vec();
        y[i] += 25.0;
        let z = cv_predictions(&d.with_outcome(y).unwrap(), &lib, &folds, 1).unwrap().z;
        assert_eq!(z.row(i), base.z.row(i), "row {i}");
        assert_ne!(z, base.z);
    }
}

#[test]
fn nnls_recovers_nonnegative_solutions() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let a = DMatrix::from_fn(60, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
        let truth: Vec<f64> = (0..5).map(|j| if j % 2 == 0 { rng.random_range(0.1..2.0) } else { 0.0 }).collect();
        let b: Vec<f64> = (0..60).map(|i| (0..5).map(|j| a[(i, j)] * truth[j]).sum()).collect();
        let (x, _) = nnls(&a, &b);
        for (u, v) in x.iter().zip(&truth) {
            assert!((u - v).abs() < 1e-9);
        }
    }
}

#[test]
fn nnls_drops_an_anticorrelated_copy() {
    let y: Vec<f64> = (0..30).map(|i| (i as f64 * 0.7).sin() + 0.1).collect();
    let z = DMatrix::from_fn(30, 2, |i, j| if j == 0 { y[i] } else { -y[i] });
    let m = meta_nnls(&z, &y).unwrap();
    assert!((m.weights[0] - 1.0).abs() < 1e-12 && m.weights[1] == 0.0);
}

#[test]
fn nnls_dominates_every_single_candidate() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let n = 200;
        let y: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let k = rng.random_range(2..8);
        // candidates are noisy, differently shrunk predictions of y
        let z = DMatrix::from_fn(n, k, |i, j| {
            let shrink = 0.3 + 0.1 * j as f64;
            shrink * y[i] + (1.0 - shrink) * rng.sample::<f64, _>(StandardNormal)
        });
        let m = meta_nnls(&z, &y).unwrap();
        assert!(m.weights.iter().all(|&w| w >= 0.0));
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        let raw = sse(&z, &y, &m.raw);
        for j in 0..k {
            let v = sse(&z, &y, &vertex(k, j));
            assert!(raw <= v * (1.0 + 1e-12), "raw solution above vertex {j}");
        }
    }
}

fn probabilities(n: usize, k: usize, rng: &mut ChaCha8Rng) -> (DMatrix<f64>, Vec<f64>) {
    let f: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let y: Vec<f64> = f.iter().map(|&v| (rng.random::<f64>() < 1.0 / (1.0 + (-v).exp())) as u8 as f64).collect();
    let z = DMatrix::from_fn(n, k, |i, j| {
        let noisy = f[i] * (0.5 + 0.4 * j as f64) + 0.8 * rng.sample::<f64, _>(StandardNormal);
        1.0 / (1.0 + (-noisy).exp())
    });
    (z, y)
}

#[test]
fn log_loss_weights_beat_vertices_and_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..40 {
        let k = rng.random_range(2..6);
        let (z, y) = probabilities(150, k, &mut rng);
        let m = meta_nll(&z, &y).unwrap();
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        assert!(m.weights.iter().all(|&w| w >= 0.0));
        let best = nll_loss(&z, &y, &m.weights);
        for j in 0..k {
            assert!(best <= nll_loss(&z, &y, &vertex(k, j)) + 1e-12);
        }
        assert!(best <= nll_loss(&z, &y, &vec![1.0 / k as f64; k]) + 1e-12);
    }
}

#[test]
fn log_loss_weights_match_a_simplex_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let (z, y) = probabilities(200, 3, &mut rng);
        let m = meta_nll(&z, &y).unwrap();
        let steps = 200;
        let mut grid = f64::INFINITY;
        for a in 0..=steps {
            for b in 0..=steps - a {
                let w = [a as f64 / steps as f64, b as f64 / steps as f64, (steps - a - b) as f64 / steps as f64];
                grid = grid.min(nll_loss(&z, &y, &w));
            }
        }
        assert!(nll_loss(&z, &y, &m.weights) <= grid + 1e-6);
    }
}

#[test]
fn ensemble_tracks_the_correct_learner() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 300;
    let x = DMatrix::from_fn(n, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y: Vec<f64> = (0..n).map(|i| 2.0 * x[(i, 0)] - x[(i, 1)] + 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    let d = Dataset::new(x, y, OutcomeKind::Continuous).unwrap();
    let learners = [LearnerSpec::Lasso, LearnerSpec::RandomForest { min_node_size: 5 }, LearnerSpec::Mars];
    let m = fit_superlearner(&d, &[ScreenSpec::AllVars], &learners, 5, 7).unwrap();
    assert!(m.ensemble_cv_risk <= 1.01 * m.cv_risk[0], "{} vs {}", m.ensemble_cv_risk, m.cv_risk[0]);
    assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-8);
}

#[test]
fn shared_benchmark_arms_equal_standalone_fits() {
    let cfg = ScenarioConfig {
        n: 120,
        p: 12,
        relationship: Relationship::Linear,
        strength: Strength::Strong,
        correlation: Correlation::Correlated,
        outcome_kind: OutcomeKind::Continuous,
        seed: 21,
    };
    let train = generate_dataset(&cfg).unwrap();
    let test = draw_dataset(&cfg, 500, 99).unwrap();
    let arms = [
        EstimatorSpec::lasso(),
        EstimatorSpec::sl(EstimatorKind::SL, ScreenSetName::All),
        EstimatorSpec::sl(EstimatorKind::SLMinusLasso, ScreenSetName::NoScreens),
    ];
    let seed = 314;
    let shared = evaluate_arms(&train, &test, &arms, 5, Refit::All, seed);
    let standalone = |screens: Vec<ScreenSpec>, learners: Vec<LearnerSpec>| {
        let lib = CandidateLibrary::new(&screens, &learners).unwrap();
        let m = fit_superlearner_with(&train, lib, SuperLearnerOptions { folds: 5, refit: Refit::All }, seed).unwrap();
        r_squared(&m.predict(test.x()).unwrap(), test.y()).unwrap()
    };
    let expected = [
        standalone(vec![ScreenSpec::AllVars], vec![LearnerSpec::Lasso]),
        standalone(expand_screen_set(ScreenSetName::All, 12), LearnerSpec::library()),
        standalone(vec![ScreenSpec::AllVars], LearnerSpec::library_without_lasso()),
    ];
    for (got, want) in shared.iter().zip(expected) {
        let got = *got.as_ref().unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}
