use nalgebra::DMatrix;
use screenlearn::data::{load_csv, standardize_columns, subset_columns, write_csv, FeatureSubset};
use screenlearn::sim::{
    build_beta, build_sigma, draw_dataset, generate_dataset, oracle_test_set, Correlation, Relationship,
    ScenarioConfig, Strength,
};
use screenlearn::OutcomeKind;

fn cell(rel: Relationship, strength: Strength, cor: Correlation, kind: OutcomeKind, n: usize, p: usize) -> ScenarioConfig {
    ScenarioConfig {
        n,
        p,
        relationship: rel,
        strength,
        correlation: cor,
        outcome_kind: kind,
        seed: 11,
    }
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn strong_linear_outcome_variance_matches_coefficient_norm() {
    let c = cell(Relationship::Linear, Strength::Strong, Correlation::Uncorrelated, OutcomeKind::Continuous, 40_000, 10);
    let (d, f) = oracle_test_set(&c, 40_000).unwrap();
    let (_, var_f) = mean_var(&f);
    let (mean_y, var_y) = mean_var(d.y());
    // Var f = 9 + 1 + 1 + 2.25 + 0.25 + 0.25, plus unit noise for y
    assert!((var_f - 13.75).abs() < 0.35, "{var_f}");
    assert!((var_y - 14.75).abs() < 0.35, "{var_y}");
    assert!(mean_y.abs() < 0.06);
}

#[test]
fn covariates_have_the_configured_correlation() {
    let c = cell(Relationship::Linear, Strength::Strong, Correlation::Correlated, OutcomeKind::Continuous, 20_000, 10);
    let d = generate_dataset(&c).unwrap();
    let sigma = build_sigma(&c).unwrap().sigma;
    let x = d.x();
    for (a, b) in [(0, 1), (2, 5), (0, 7), (8, 9)] {
        let r = screenlearn::stats::pearson(d.column(a), d.column(b)).unwrap();
        assert!((r - sigma[(a, b)]).abs() < 0.03, "({a},{b}) {r} vs {}", sigma[(a, b)]);
    }
    let (_, v0) = mean_var(&x.column(0).iter().copied().collect::<Vec<_>>());
    assert!((v0 - 1.0).abs() < 0.04);
}

#[test]
fn sigma_is_a_valid_correlation_matrix() {
    for strength in [Strength::Weak, Strength::Strong] {
        for p in [10, 50] {
            let c = cell(Relationship::Linear, strength, Correlation::Correlated, OutcomeKind::Continuous, 10, p);
            let spec = build_sigma(&c).unwrap();
            let s = &spec.sigma;
            assert_eq!(s, &s.transpose());
            assert!((0..p).all(|i| s[(i, i)] == 1.0));
            let l = &spec.cholesky_factor;
            let err = (l * l.transpose() - s).abs().max();
            assert!(err < 1e-10, "{err}");
        }
    }
}

#[test]
fn active_sets_by_strength() {
    assert_eq!(build_beta(Strength::Strong, 10).unwrap().active_set(), (0..6).collect::<Vec<_>>());
    assert_eq!(build_beta(Strength::Weak, 50).unwrap().active_set(), vec![1, 5]);
    assert!(build_beta(Strength::Null, 10).unwrap().active_set().is_empty());
}

#[test]
fn binary_outcomes_are_zero_one() {
    for rel in [Relationship::Linear, Relationship::Nonlinear] {
        let c = cell(rel, Strength::Strong, Correlation::Correlated, OutcomeKind::Binary, 3000, 10);
        let d = generate_dataset(&c).unwrap();
        assert!(d.y().iter().all(|&v| v == 0.0 || v == 1.0));
        let rate = d.mean_outcome();
        assert!(rate > 0.0 && rate < 1.0);
        if rel == Relationship::Linear {
            // f is symmetric about 0, so P(y = 1) is one half
            assert!((rate - 0.5).abs() < 0.04, "{rate}");
        }
    }
}

#[test]
fn generation_is_bit_reproducible() {
    let c = cell(Relationship::Nonlinear, Strength::Weak, Correlation::Correlated, OutcomeKind::Continuous, 300, 50);
    let a = generate_dataset(&c).unwrap();
    let b = generate_dataset(&c).unwrap();
    assert_eq!(a.x(), b.x());
    assert_eq!(a.y(), b.y());
    assert_eq!(build_sigma(&c).unwrap(), build_sigma(&c).unwrap());
    let other = draw_dataset(&c, 300, c.seed + 1).unwrap();
    assert_ne!(a.y(), other.y());
}

#[test]
fn all_columns_subset_is_identity() {
    let c = cell(Relationship::Linear, Strength::Weak, Correlation::Uncorrelated, OutcomeKind::Continuous, 50, 12);
    let d = generate_dataset(&c).unwrap();
    let s = subset_columns(&d, &FeatureSubset::all(12)).unwrap();
    assert_eq!(s.x(), d.x());
    assert_eq!(s.y(), d.y());
    assert_eq!(s.names(), d.names());
}

#[test]
fn standardize_round_trip() {
    let x = DMatrix::from_fn(40, 4, |i, j| ((i * 7 + j * 3) % 11) as f64 * (j as f64 + 0.5) - 100.0 * j as f64);
    let (z, scaler) = standardize_columns(&x).unwrap();
    let back = scaler.inverse(&z).unwrap();
    for (a, b) in back.iter().zip(x.iter()) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

#[test]
fn csv_round_trip() {
    let c = cell(Relationship::Linear, Strength::Strong, Correlation::Uncorrelated, OutcomeKind::Binary, 25, 6);
    let d = generate_dataset(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_csv(&path, &d, "y").unwrap();
    let back = load_csv(&path, "y", OutcomeKind::Binary).unwrap();
    assert_eq!(back.x(), d.x());
    assert_eq!(back.y(), d.y());
}
