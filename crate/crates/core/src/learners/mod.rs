//! Base learners: lasso, random forests, gradient-boosted trees and MARS.

pub mod boost;
pub mod forest;
pub mod lasso;
pub mod mars;
pub(crate) mod tree;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::data::{Dataset, OutcomeKind};
use crate::error::{Error, Result};

pub use boost::{BoostParams, Booster};
pub use forest::{Forest, ForestParams};
pub use lasso::{LassoModel, LassoPath};
pub use mars::MarsModel;

pub const FOREST_TREES: usize = 1000;
pub const LASSO_CV_FOLDS: usize = 10;
pub const MIN_NODE_SIZES: [usize; 5] = [5, 20, 50, 100, 250];
pub const BOOST_TREES: [usize; 3] = [100, 500, 1000];
pub const BOOST_SHRINKAGE: [f64; 2] = [0.01, 0.1];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearnerSpec {
    Lasso,
    RandomForest { min_node_size: usize },
    GradBoost { n_trees: usize, shrinkage: f64 },
    Mars,
}

impl LearnerSpec {
    /// The full tuning grid: lasso, five forests, six boosting fits, MARS.
    pub fn library() -> Vec<LearnerSpec> {
        let mut out = vec![LearnerSpec::Lasso];
        out.extend(
            MIN_NODE_SIZES
                .iter()
                .map(|&min_node_size| LearnerSpec::RandomForest { min_node_size }),
        );
        for &n_trees in &BOOST_TREES {
            for &shrinkage in &BOOST_SHRINKAGE {
                out.push(LearnerSpec::GradBoost { n_trees, shrinkage });
            }
        }
        out.push(LearnerSpec::Mars);
        out
    }

    /// The grid without the lasso learner.
    pub fn library_without_lasso() -> Vec<LearnerSpec> {
        Self::library()
            .into_iter()
            .filter(|l| *l != LearnerSpec::Lasso)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LearnerSpec::RandomForest { min_node_size } if !MIN_NODE_SIZES.contains(&min_node_size) => {
                Err(Error::Config(format!("forest min node size {min_node_size} not in {MIN_NODE_SIZES:?}")))
            }
            LearnerSpec::GradBoost { n_trees, .. } if !BOOST_TREES.contains(&n_trees) => {
                Err(Error::Config(format!("boosting tree count {n_trees} not in {BOOST_TREES:?}")))
            }
            LearnerSpec::GradBoost { shrinkage, .. } if !BOOST_SHRINKAGE.contains(&shrinkage) => {
                Err(Error::Config(format!("boosting shrinkage {shrinkage} not in {BOOST_SHRINKAGE:?}")))
            }
            _ => Ok(()),
        }
    }

    /// Config string form: `lasso`, `rf:<min_node_size>`, `gbt:<n_trees>:<shrinkage>`, `mars`.
    pub fn key(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerSpec::Lasso => write!(f, "lasso"),
            LearnerSpec::RandomForest { min_node_size } => write!(f, "rf:{min_node_size}"),
            LearnerSpec::GradBoost { n_trees, shrinkage } => write!(f, "gbt:{n_trees}:{shrinkage}"),
            LearnerSpec::Mars => write!(f, "mars"),
        }
    }
}

impl FromStr for LearnerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unrecognized learner `{s}`"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let spec = match parts.as_slice() {
            ["lasso"] => LearnerSpec::Lasso,
            ["mars"] => LearnerSpec::Mars,
            ["rf", m] => LearnerSpec::RandomForest {
                min_node_size: m.parse().map_err(|_| bad())?,
            },
            ["gbt", t, s] => LearnerSpec::GradBoost {
                n_trees: t.parse().map_err(|_| bad())?,
                shrinkage: s.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelState {
    Lasso(LassoModel),
    Forest(Forest),
    Boost(Booster),
    Mars(MarsModel),
}

/// A trained learner. Predictions are on the response scale: real values for
/// continuous outcomes, probabilities in [0, 1] for binary outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub spec: LearnerSpec,
    pub outcome: OutcomeKind,
    n_features: usize,
    state: ModelState,
}

impl FittedModel {
    pub(crate) fn new(spec: LearnerSpec, outcome: OutcomeKind, n_features: usize, state: ModelState) -> Self {
        FittedModel {
            spec,
            outcome,
            n_features,
            state,
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        let mut out = match &self.state {
            ModelState::Lasso(m) => m.predict(x),
            ModelState::Forest(m) => m.predict(x),
            ModelState::Boost(m) => m.predict(x),
            ModelState::Mars(m) => m.predict(x),
        };
        if self.outcome == OutcomeKind::Binary {
            out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        }
        Ok(out)
    }

    /// The same forest with a larger minimum node size, by pruning.
    pub(crate) fn forest_pruned(&self, min_node_size: usize) -> Option<FittedModel> {
        match &self.state {
            ModelState::Forest(f) => Some(FittedModel {
                spec: LearnerSpec::RandomForest { min_node_size },
                outcome: self.outcome,
                n_features: self.n_features,
                state: ModelState::Forest(f.with_min_node_size(min_node_size)?),
            }),
            _ => None,
        }
    }

    /// Boosting model restricted to its first `n_trees` stages.
    pub(crate) fn boost_truncated(&self, n_trees: usize, shrinkage: f64) -> Option<FittedModel> {
        match &self.state {
            ModelState::Boost(b) if n_trees <= b.n_trees() => Some(FittedModel {
                spec: LearnerSpec::GradBoost { n_trees, shrinkage },
                outcome: self.outcome,
                n_features: self.n_features,
                state: ModelState::Boost(b.truncated(n_trees)),
            }),
            _ => None,
        }
    }
}

pub fn predict(model: &FittedModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    model.predict(x)
}

pub fn fit_lasso(d: &Dataset, folds: usize, seed: u64) -> Result<FittedModel> {
    let logistic = d.kind() == OutcomeKind::Binary;
    let m = lasso::fit_lasso_cv(d.x(), d.y(), logistic, folds, seed)?;
    Ok(FittedModel::new(LearnerSpec::Lasso, d.kind(), d.p(), ModelState::Lasso(m)))
}

pub fn fit_random_forest(d: &Dataset, min_node_size: usize, n_trees: usize, seed: u64) -> Result<FittedModel> {
    if d.n() < 2 {
        return Err(Error::TooFewObservations("forest needs at least 2 rows".into()));
    }
    let binary = d.kind() == OutcomeKind::Binary;
    let forest = Forest::fit(d.x(), d.y(), ForestParams::new(n_trees, min_node_size), binary, seed);
    Ok(FittedModel::new(
        LearnerSpec::RandomForest { min_node_size },
        d.kind(),
        d.p(),
        ModelState::Forest(forest),
    ))
}

pub fn rf_impurity_importance(model: &FittedModel) -> Result<Vec<f64>> {
    match &model.state {
        ModelState::Forest(f) => Ok(f.importance().to_vec()),
        _ => Err(Error::Unsupported(format!(
            "impurity importance requires a forest, got {}",
            model.spec
        ))),
    }
}

pub fn fit_grad_boost(d: &Dataset, params: BoostParams, seed: u64) -> Result<FittedModel> {
    if d.n() < 20 {
        return Err(Error::TooFewObservations(format!(
            "boosting needs at least 20 rows, got {}",
            d.n()
        )));
    }
    let logistic = d.kind() == OutcomeKind::Binary;
    let b = Booster::fit(d.x(), d.y(), params, logistic, seed);
    Ok(FittedModel::new(
        LearnerSpec::GradBoost {
            n_trees: params.n_trees,
            shrinkage: params.shrinkage,
        },
        d.kind(),
        d.p(),
        ModelState::Boost(b),
    ))
}

pub fn fit_mars(d: &Dataset) -> Result<FittedModel> {
    if d.n() < 20 {
        return Err(Error::TooFewObservations(format!(
            "MARS needs at least 20 rows, got {}",
            d.n()
        )));
    }
    let m = mars::fit_mars(d.x(), d.y(), d.kind() == OutcomeKind::Binary);
    Ok(FittedModel::new(LearnerSpec::Mars, d.kind(), d.p(), ModelState::Mars(m)))
}

/// Fits any learner from its spec with the standard settings.
pub fn fit(d: &Dataset, spec: &LearnerSpec, seed: u64) -> Result<FittedModel> {
    match *spec {
        LearnerSpec::Lasso => fit_lasso(d, LASSO_CV_FOLDS, seed),
        LearnerSpec::RandomForest { min_node_size } => fit_random_forest(d, min_node_size, FOREST_TREES, seed),
        LearnerSpec::GradBoost { n_trees, shrinkage } => {
            fit_grad_boost(d, BoostParams::new(n_trees, shrinkage), seed)
        }
        LearnerSpec::Mars => fit_mars(d),
    }
}
