//! Screened Super Learner: variable screens paired with base learners,
//! combined by cross-validated convex weighting, plus the simulation
//! benchmark that compares it with the lasso.

pub mod bench;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod learners;
pub mod metrics;
pub mod screens;
pub mod seed;
pub mod sim;
pub mod stats;

pub use data::{Dataset, FeatureSubset, OutcomeKind};
pub use ensemble::{fit_superlearner, predict_sl, SLModel};
pub use error::{Error, Result};
pub use learners::{FittedModel, LearnerSpec};
pub use screens::{ScreenSetName, ScreenSpec};
pub use sim::ScenarioConfig;
