//! Cross-validation folds, the screen × learner candidate library, and the
//! fitted Super Learner.

pub mod folds;
pub mod meta;
mod superlearner;

pub(crate) use superlearner::{cv_predictions_masked, meta_weights, sl_folds};

pub use folds::{make_folds, FoldAssignment};
pub use meta::{meta_nll, meta_nnls, nll_loss, nnls, MetaWeights};
pub use superlearner::{
    candidate_risk, cv_predictions, fit_on_split, fit_superlearner, fit_superlearner_with, predict_sl, Candidate,
    CandidateFailure, CandidateLibrary, CandidateModel, CvPredictions, Refit, SLModel, SplitFit, SuperLearnerOptions,
    MIN_ROWS,
};
