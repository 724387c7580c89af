//! Simulated data: multivariate normal covariates, linear or nonlinear mean
//! functions, and continuous or probit-binary outcomes.

use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, OutcomeKind};
use crate::error::{Error, Result};
use crate::seed;
use crate::stats::normal_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relationship {
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strength {
    Weak,
    Strong,
    /// All coefficients zero. Used to calibrate the no-signal baseline.
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Correlation {
    Uncorrelated,
    Correlated,
}

macro_rules! string_enum {
    ($ty:ty { $($variant:path => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($variant => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($name => Ok($variant),)+
                    other => Err(Error::Config(format!(
                        "unknown {} `{}`", stringify!($ty).to_ascii_lowercase(), other
                    ))),
                }
            }
        }
    };
}

string_enum!(Relationship {
    Relationship::Linear => "linear",
    Relationship::Nonlinear => "nonlinear",
});
string_enum!(Strength {
    Strength::Weak => "weak",
    Strength::Strong => "strong",
    Strength::Null => "null",
});
string_enum!(Correlation {
    Correlation::Uncorrelated => "uncorrelated",
    Correlation::Correlated => "correlated",
});

/// One cell of the simulation design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScenarioConfig {
    pub n: usize,
    pub p: usize,
    pub relationship: Relationship,
    pub strength: Strength,
    pub correlation: Correlation,
    pub outcome_kind: OutcomeKind,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p < 6 {
            return Err(Error::Config(format!("p must be at least 6, got {}", self.p)));
        }
        if self.n < 2 {
            return Err(Error::Config(format!("n must be at least 2, got {}", self.n)));
        }
        Ok(())
    }

    /// Canonical key of the design cell, excluding the seed.
    pub fn key(&self) -> String {
        format!(
            "n={}|p={}|{}|{}|{}|{}",
            self.n, self.p, self.relationship, self.strength, self.correlation, self.outcome_kind
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaVector {
    values: Vec<f64>,
}

impl BetaVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Zero-based indices of nonzero coefficients.
    pub fn active_set(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&j| self.values[j] != 0.0).collect()
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|b| b * b).sum()
    }
}

const WEAK_BETA: [f64; 6] = [0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
const STRONG_BETA: [f64; 6] = [-3.0, -1.0, 1.0, -1.5, -0.5, 0.5];
const ACTIVE_CORRELATION_STRONG: f64 = 0.9;
const ACTIVE_CORRELATION_WEAK: f64 = 0.95;
const BACKGROUND_CORRELATION: f64 = 0.3;

pub fn build_beta(strength: Strength, p: usize) -> Result<BetaVector> {
    if p < 6 {
        return Err(Error::Config(format!("p must be at least 6, got {p}")));
    }
    let head: [f64; 6] = match strength {
        Strength::Weak => WEAK_BETA,
        Strength::Strong => STRONG_BETA,
        Strength::Null => [0.0; 6],
    };
    let mut values = vec![0.0; p];
    values[..6].copy_from_slice(&head);
    Ok(BetaVector { values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSpec {
    pub sigma: DMatrix<f64>,
    pub cholesky_factor: DMatrix<f64>,
    identity: bool,
}

impl CovarianceSpec {
    pub fn from_sigma(sigma: DMatrix<f64>) -> Result<Self> {
        let chol = nalgebra::Cholesky::new(sigma.clone()).ok_or(Error::NotPositiveDefinite)?;
        let l = chol.l();
        let identity = sigma == DMatrix::identity(sigma.nrows(), sigma.ncols());
        Ok(CovarianceSpec {
            sigma,
            cholesky_factor: l,
            identity,
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    /// Draws one covariate row into `out` using `z` as scratch.
    fn draw_row<R: Rng>(&self, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        if self.identity {
            out.copy_from_slice(z);
            return;
        }
        let l = &self.cholesky_factor;
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &zk) in z.iter().enumerate().take(j + 1) {
                acc += l[(j, k)] * zk;
            }
            *o = acc;
        }
    }
}

pub fn build_sigma(config: &ScenarioConfig) -> Result<CovarianceSpec> {
    let p = config.p;
    let sigma = match config.correlation {
        Correlation::Uncorrelated => DMatrix::identity(p, p),
        Correlation::Correlated => {
            let beta = build_beta(config.strength, p)?;
            let active: Vec<bool> = beta.values().iter().map(|&b| b != 0.0).collect();
            let rho = match config.strength {
                Strength::Strong => ACTIVE_CORRELATION_STRONG,
                Strength::Weak => ACTIVE_CORRELATION_WEAK,
                Strength::Null => BACKGROUND_CORRELATION,
            };
            DMatrix::from_fn(p, p, |i, j| {
                if i == j {
                    1.0
                } else if active[i] && active[j] {
                    rho
                } else {
                    BACKGROUND_CORRELATION
                }
            })
        }
    };
    CovarianceSpec::from_sigma(sigma)
}

/// `n` rows of N(0, Sigma) covariates; row i is L z_i.
pub fn sample_covariates<R: Rng>(spec: &CovarianceSpec, n: usize, rng: &mut R) -> DMatrix<f64> {
    let p = spec.dim();
    let mut x = DMatrix::zeros(n, p);
    let mut z = vec![0.0; p];
    let mut row = vec![0.0; p];
    for i in 0..n {
        spec.draw_row(rng, &mut z, &mut row);
        for (j, &v) in row.iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    x
}

/// Mean function evaluated at one covariate row.
///
/// Covariates are already standardized at the population level (unit
/// diagonal covariance, zero mean), so no rescaling is applied.
pub fn regression_function(x: &[f64], beta: &BetaVector, relationship: Relationship) -> f64 {
    let b = beta.values();
    match relationship {
        Relationship::Linear => x.iter().zip(b).map(|(xi, bi)| xi * bi).sum(),
        Relationship::Nonlinear => {
            b[0] * (FRAC_PI_4 * x[0]).sin()
                + b[1] * x[1] * x[2]
                + b[2] * x[2]
                + b[3] * (FRAC_PI_4 * x[3]).cos()
                + b[4] * x[4] * x[0]
                + b[5] * x[5]
        }
    }
}

/// Draws rows of (x, f(x), y) one at a time. Training sets, oracle test sets
/// and streaming oracle evaluation all share this sequence.
struct RowSampler {
    spec: CovarianceSpec,
    beta: BetaVector,
    relationship: Relationship,
    kind: OutcomeKind,
    z: Vec<f64>,
    row: Vec<f64>,
}

impl RowSampler {
    fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let beta = build_beta(config.strength, config.p)?;
        Ok(RowSampler {
            spec: build_sigma(config)?,
            beta,
            relationship: config.relationship,
            kind: config.outcome_kind,
            z: vec![0.0; config.p],
            row: vec![0.0; config.p],
        })
    }

    /// Returns (f(x), y); the covariates are left in `self.row`.
    fn next<R: Rng>(&mut self, rng: &mut R) -> (f64, f64) {
        self.spec.draw_row(rng, &mut self.z, &mut self.row);
        let f = regression_function(&self.row, &self.beta, self.relationship);
        let y = match self.kind {
            OutcomeKind::Continuous => f + rng.sample::<f64, _>(StandardNormal),
            OutcomeKind::Binary => {
                let u: f64 = rng.random();
                if u < normal_cdf(f) {
                    1.0
                } else {
                    0.0
                }
            }
        };
        (f, y)
    }
}

fn draw(config: &ScenarioConfig, n: usize, seed: u64) -> Result<(Dataset, Vec<f64>)> {
    let mut sampler = RowSampler::new(config)?;
    let mut rng = seed::rng(seed);
    let p = config.p;
    let mut x = DMatrix::zeros(n, p);
    let mut f = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let (fi, yi) = sampler.next(&mut rng);
        for (j, &v) in sampler.row.iter().enumerate() {
            x[(i, j)] = v;
        }
        f.push(fi);
        y.push(yi);
    }
    Ok((Dataset::new(x, y, config.outcome_kind)?, f))
}

pub fn generate_dataset(config: &ScenarioConfig) -> Result<Dataset> {
    draw(config, config.n, config.seed).map(|(d, _)| d)
}

/// A dataset of `n` rows from the scenario's law, drawn with `seed` instead
/// of the configured one.
pub fn draw_dataset(config: &ScenarioConfig, n: usize, seed: u64) -> Result<Dataset> {
    draw(config, n, seed).map(|(d, _)| d)
}

pub(crate) fn oracle_seed(config: &ScenarioConfig) -> u64 {
    seed::derive(config.seed, "oracle-test")
}

/// Independent draw from the same law plus the true mean-function values.
pub fn oracle_test_set(config: &ScenarioConfig, n_test: usize) -> Result<(Dataset, Vec<f64>)> {
    draw(config, n_test, oracle_seed(config))
}

/// Same rows as [`oracle_test_set`] without materializing the covariates.
pub(crate) fn oracle_truth(config: &ScenarioConfig, n_test: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut sampler = RowSampler::new(config)?;
    let mut rng = seed::rng(oracle_seed(config));
    let mut f = Vec::with_capacity(n_test);
    let mut y = Vec::with_capacity(n_test);
    for _ in 0..n_test {
        let (fi, yi) = sampler.next(&mut rng);
        f.push(fi);
        y.push(yi);
    }
    Ok((f, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(
        relationship: Relationship,
        strength: Strength,
        correlation: Correlation,
        kind: OutcomeKind,
        n: usize,
        p: usize,
    ) -> ScenarioConfig {
        ScenarioConfig {
            n,
            p,
            relationship,
            strength,
            correlation,
            outcome_kind: kind,
            seed: 42,
        }
    }

    #[test]
    fn beta_vectors() {
        assert_eq!(
            build_beta(Strength::Weak, 10).unwrap().values(),
            &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(
            build_beta(Strength::Strong, 6).unwrap().values(),
            &[-3.0, -1.0, 1.0, -1.5, -0.5, 0.5]
        );
        assert_eq!(build_beta(Strength::Weak, 6).unwrap().active_set(), vec![1, 5]);
        assert_eq!(build_beta(Strength::Strong, 8).unwrap().active_set(), (0..6).collect::<Vec<_>>());
        assert!(build_beta(Strength::Weak, 5).is_err());
    }

    #[test]
    fn sigma_structure() {
        use Correlation::*;
        use Relationship::Linear;
        let c = config(Linear, Strength::Strong, Uncorrelated, OutcomeKind::Continuous, 10, 10);
        assert_eq!(build_sigma(&c).unwrap().sigma, DMatrix::identity(10, 10));

        let c = config(Linear, Strength::Strong, Correlated, OutcomeKind::Continuous, 10, 10);
        let s = build_sigma(&c).unwrap().sigma;
        assert_eq!(s[(0, 1)], 0.9);
        assert_eq!(s[(0, 6)], 0.3);
        assert_eq!(s[(6, 7)], 0.3);
        assert!((0..10).all(|i| s[(i, i)] == 1.0));

        let c = config(Linear, Strength::Weak, Correlated, OutcomeKind::Continuous, 10, 10);
        let s = build_sigma(&c).unwrap().sigma;
        assert_eq!(s[(1, 5)], 0.95);
        assert_eq!(s[(0, 1)], 0.3);
    }

    #[test]
    fn cholesky_reconstructs_sigma() {
        for strength in [Strength::Weak, Strength::Strong] {
            for p in [6, 10, 50] {
                let c = config(
                    Relationship::Linear,
                    strength,
                    Correlation::Correlated,
                    OutcomeKind::Continuous,
                    10,
                    p,
                );
                let spec = build_sigma(&c).unwrap();
                let l = &spec.cholesky_factor;
                let err = (l * l.transpose() - &spec.sigma).abs().max();
                assert!(err < 1e-10, "reconstruction error {err}");
                assert_eq!(spec.sigma, spec.sigma.transpose());
            }
        }
    }

    #[test]
    fn non_positive_definite_sigma_is_rejected() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(CovarianceSpec::from_sigma(s), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn regression_function_examples() {
        let strong = build_beta(Strength::Strong, 10).unwrap();
        let weak = build_beta(Strength::Weak, 10).unwrap();
        let mut e1 = vec![0.0; 10];
        e1[0] = 1.0;
        assert_eq!(regression_function(&e1, &strong, Relationship::Linear), -3.0);
        let zero = vec![0.0; 10];
        assert_eq!(regression_function(&zero, &strong, Relationship::Nonlinear), -1.5);
        assert_eq!(regression_function(&zero, &weak, Relationship::Nonlinear), 0.0);
        // x2 * x3 and x5 * x1 interactions
        let x = [1.0, 2.0, 3.0, 0.0, 5.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let expected = -3.0 * (FRAC_PI_4).sin() - 1.0 * 6.0 + 3.0 - 1.5 - 0.5 * 5.0;
        assert!((regression_function(&x, &strong, Relationship::Nonlinear) - expected).abs() < 1e-12);
    }

    #[test]
    fn single_row_is_reproducible() {
        let spec = CovarianceSpec::from_sigma(DMatrix::identity(6, 6)).unwrap();
        let a = sample_covariates(&spec, 1, &mut seed::rng(3));
        let b = sample_covariates(&spec, 1, &mut seed::rng(3));
        assert_eq!(a, b);
        assert_eq!(a.nrows(), 1);
    }

    #[test]
    fn generation_is_deterministic_and_binary_is_01() {
        let c = config(
            Relationship::Nonlinear,
            Strength::Strong,
            Correlation::Correlated,
            OutcomeKind::Binary,
            300,
            10,
        );
        let a = generate_dataset(&c).unwrap();
        let b = generate_dataset(&c).unwrap();
        assert_eq!(a, b);
        assert!(a.y().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn oracle_set_shape_and_linear_truth() {
        let c = config(
            Relationship::Linear,
            Strength::Strong,
            Correlation::Correlated,
            OutcomeKind::Continuous,
            50,
            10,
        );
        let (d, f) = oracle_test_set(&c, 1000).unwrap();
        assert_eq!(d.n(), 1000);
        assert_eq!(f.len(), 1000);
        let beta = build_beta(Strength::Strong, 10).unwrap();
        let mut row = [0.0; 10];
        for i in 0..1000 {
            for (j, r) in row.iter_mut().enumerate() {
                *r = d.x()[(i, j)];
            }
            let xb: f64 = row.iter().zip(beta.values()).map(|(a, b)| a * b).sum();
            assert_eq!(f[i], xb);
        }
        let (f2, y2) = oracle_truth(&c, 1000).unwrap();
        assert_eq!(f, f2);
        assert_eq!(d.y(), &y2[..]);
        // the oracle stream is independent of the training stream
        assert_ne!(generate_dataset(&ScenarioConfig { n: 1000, ..c }).unwrap().y(), d.y());
    }
}
