use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;

use super::folds::{make_folds, FoldAssignment};
use super::meta::{meta_nll, meta_nnls, nll_loss, MetaWeights};
use crate::data::{select_columns, select_rows, subset_columns, Dataset, FeatureSubset, OutcomeKind};
use crate::error::{Error, Result};
use crate::learners::{self, BoostParams, FittedModel, LearnerSpec, FOREST_TREES};
use crate::screens::{ScreenContext, ScreenSpec};
use crate::seed;

/// Smallest training set accepted by [`fit_superlearner`].
pub const MIN_ROWS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub screen: ScreenSpec,
    pub learner: LearnerSpec,
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.screen, self.learner)
    }
}

/// Screen-major list of screen × learner pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateLibrary {
    candidates: Vec<Candidate>,
}

impl CandidateLibrary {
    pub fn new(screens: &[ScreenSpec], learners: &[LearnerSpec]) -> Result<Self> {
        if screens.is_empty() || learners.is_empty() {
            return Err(Error::Config("candidate library needs at least one screen and one learner".into()));
        }
        for s in screens {
            s.validate()?;
        }
        for l in learners {
            l.validate()?;
        }
        let candidates = screens
            .iter()
            .flat_map(|&screen| learners.iter().map(move |&learner| Candidate { screen, learner }))
            .collect();
        Ok(CandidateLibrary { candidates })
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn position(&self, c: &Candidate) -> Option<usize> {
        self.candidates.iter().position(|x| x == c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateFailure {
    pub candidate: Candidate,
    /// Fold index, or `None` for the full-data refit.
    pub fold: Option<usize>,
    pub message: String,
}

/// A candidate trained on some rows: its screen's columns plus a model, or the
/// training mean when the screen or learner failed.
#[derive(Debug, Clone, PartialEq)]
pub enum CandidateModel {
    Fitted { subset: FeatureSubset, model: FittedModel },
    Constant(f64),
}

impl CandidateModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        match self {
            CandidateModel::Fitted { subset, model } => model.predict(&select_columns(x, subset.indices())),
            CandidateModel::Constant(v) => Ok(vec![*v; x.nrows()]),
        }
    }
}

/// Results of training the library on one set of rows.
#[derive(Debug, Clone, Default)]
pub struct SplitFit {
    /// Per-candidate predictions on the evaluation rows; empty when not requested.
    pub predictions: Vec<Vec<f64>>,
    pub models: Vec<Option<CandidateModel>>,
    pub subsets: Vec<Option<FeatureSubset>>,
    pub failures: Vec<CandidateFailure>,
}

fn fit_seed(root: u64, tag: &str, learner: &str, subset: &FeatureSubset) -> u64 {
    seed::derive(root, &format!("fit|{tag}|{learner}|{}", subset.key()))
}

/// Trains the wanted candidates on `train` and predicts `x_eval`.
///
/// Each distinct screen is fit once, and each distinct (subset, learner) pair
/// once; boosting fits sharing a subset and shrinkage come from one run
/// truncated to each requested length, and forests sharing a subset come from
/// one forest grown at the smallest requested node size and then pruned. The
/// importance forest behind the forest screens is seeded like the
/// all-columns forest candidate, so it doubles as that candidate.
///
/// Seeds depend only on `tag`, the learner and the subset contents, so the
/// same candidate gets the same fit in any library that contains it.
pub fn fit_on_split(
    train: &Dataset,
    x_eval: &DMatrix<f64>,
    lib: &CandidateLibrary,
    wanted: &[bool],
    keep_models: bool,
    root_seed: u64,
    tag: &str,
    fold: Option<usize>,
) -> SplitFit {
    let k = lib.len();
    let fallback = train.mean_outcome();
    let mut out = SplitFit {
        predictions: vec![Vec::new(); k],
        models: vec![None; k],
        subsets: vec![None; k],
        failures: Vec::new(),
    };
    let all = FeatureSubset::all(train.p());
    let ctx = ScreenContext::with_forest_seed(
        train,
        seed::derive(root_seed, &format!("screen|{tag}")),
        fit_seed(root_seed, tag, "rf", &all),
    );
    let mut screen_results: Vec<(ScreenSpec, std::result::Result<FeatureSubset, String>)> = Vec::new();
    // forest screens first, so their forest can serve the all-columns forest candidates
    for (cand, _) in lib.candidates().iter().zip(wanted).filter(|(_, &w)| w) {
        if matches!(cand.screen, ScreenSpec::RFImportanceTopK { .. })
            && !screen_results.iter().any(|(s, _)| *s == cand.screen)
        {
            screen_results.push((cand.screen, ctx.fit(&cand.screen).map_err(|e| e.to_string())));
        }
    }
    let smallest_node = lib
        .candidates()
        .iter()
        .zip(wanted)
        .filter_map(|(c, &w)| match c.learner {
            LearnerSpec::RandomForest { min_node_size } if w => Some(min_node_size),
            _ => None,
        })
        .min()
        .unwrap_or(1);
    let mut forest_runs: HashMap<FeatureSubset, std::result::Result<FittedModel, String>> = HashMap::new();
    // (subset, learner key) -> slot holding predictions and the model
    let mut fitted: HashMap<(FeatureSubset, String), std::result::Result<(Vec<f64>, Option<FittedModel>), String>> =
        HashMap::new();
    let mut boost_runs: HashMap<(FeatureSubset, u64), std::result::Result<FittedModel, String>> = HashMap::new();

    for (c, cand) in lib.candidates().iter().enumerate() {
        if !wanted[c] {
            continue;
        }
        let subset = match screen_results.iter().find(|(s, _)| *s == cand.screen) {
            Some((_, r)) => r.clone(),
            None => {
                let r = ctx.fit(&cand.screen).map_err(|e| e.to_string());
                screen_results.push((cand.screen, r.clone()));
                r
            }
        };
        let subset = match subset {
            Ok(s) => s,
            Err(message) => {
                out.failures.push(CandidateFailure {
                    candidate: *cand,
                    fold,
                    message: format!("screen {}: {message}", cand.screen),
                });
                out.predictions[c] = vec![fallback; x_eval.nrows()];
                out.models[c] = keep_models.then_some(CandidateModel::Constant(fallback));
                continue;
            }
        };
        let key = (subset.clone(), cand.learner.key());
        if !fitted.contains_key(&key) {
            let result = (|| -> Result<(Vec<f64>, Option<FittedModel>)> {
                let train_sub = subset_columns(train, &subset)?;
                let model = match cand.learner {
                    LearnerSpec::GradBoost { shrinkage, .. } => {
                        let longest = lib
                            .candidates()
                            .iter()
                            .zip(wanted)
                            .filter(|(o, &w)| w && o.screen == cand.screen)
                            .filter_map(|(o, _)| match o.learner {
                                LearnerSpec::GradBoost { n_trees, shrinkage: s } if s == shrinkage => Some(n_trees),
                                _ => None,
                            })
                            .max()
                            .expect("current candidate is a boosting fit");
                        let run_key = (subset.clone(), shrinkage.to_bits());
                        let run = boost_runs.entry(run_key).or_insert_with(|| {
                            let seed = fit_seed(root_seed, tag, &format!("gbt::{shrinkage}"), &subset);
                            learners::fit_grad_boost(&train_sub, BoostParams::new(longest, shrinkage), seed)
                                .map_err(|e| e.to_string())
                        });
                        let run = run.as_ref().map_err(|e| Error::InvalidData(e.clone()))?;
                        let LearnerSpec::GradBoost { n_trees, .. } = cand.learner else { unreachable!() };
                        match run.boost_truncated(n_trees, shrinkage) {
                            Some(m) => m,
                            None => {
                                // another screen produced this subset with a shorter run
                                let seed = fit_seed(root_seed, tag, &format!("gbt::{shrinkage}"), &subset);
                                learners::fit_grad_boost(&train_sub, BoostParams::new(n_trees, shrinkage), seed)?
                            }
                        }
                    }
                    LearnerSpec::RandomForest { min_node_size } => {
                        let shared = match ctx.grown_forest() {
                            Some(f) if subset == all => f,
                            _ => forest_runs
                                .entry(subset.clone())
                                .or_insert_with(|| {
                                    let seed = fit_seed(root_seed, tag, "rf", &subset);
                                    learners::fit_random_forest(&train_sub, smallest_node, FOREST_TREES, seed)
                                        .map_err(|e| e.to_string())
                                })
                                .as_ref()
                                .map_err(|e| Error::InvalidData(e.clone()))?,
                        };
                        shared.forest_pruned(min_node_size).ok_or_else(|| {
                            Error::InvalidData(format!("no forest grown below node size {min_node_size}"))
                        })?
                    }
                    learner => {
                        let seed = fit_seed(root_seed, tag, &learner.key(), &subset);
                        learners::fit(&train_sub, &learner, seed)?
                    }
                };
                let preds = model.predict(&select_columns(x_eval, subset.indices()))?;
                if preds.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidData("non-finite prediction".into()));
                }
                Ok((preds, keep_models.then_some(model)))
            })()
            .map_err(|e| e.to_string());
            fitted.insert(key.clone(), result);
        }
        match &fitted[&key] {
            Ok((preds, model)) => {
                out.predictions[c] = preds.clone();
                out.models[c] = model.clone().map(|model| CandidateModel::Fitted {
                    subset: subset.clone(),
                    model,
                });
            }
            Err(message) => {
                log::warn!("candidate {cand} failed{}: {message}", fold.map_or(String::new(), |v| format!(" in fold {v}")));
                out.failures.push(CandidateFailure {
                    candidate: *cand,
                    fold,
                    message: message.clone(),
                });
                out.predictions[c] = vec![fallback; x_eval.nrows()];
                out.models[c] = keep_models.then_some(CandidateModel::Constant(fallback));
            }
        }
        out.subsets[c] = Some(subset);
    }
    out
}

#[derive(Debug, Clone)]
pub struct CvPredictions {
    /// n × |library| matrix of held-out predictions.
    pub z: DMatrix<f64>,
    pub failures: Vec<CandidateFailure>,
}

/// Held-out predictions for every candidate: row i comes from screens and
/// learners trained without fold(i).
pub fn cv_predictions(d: &Dataset, lib: &CandidateLibrary, folds: &FoldAssignment, seed: u64) -> Result<CvPredictions> {
    cv_predictions_masked(d, lib, folds, &vec![true; lib.len()], seed)
}

/// As [`cv_predictions`], computing only the `wanted` columns (others stay zero).
pub(crate) fn cv_predictions_masked(
    d: &Dataset,
    lib: &CandidateLibrary,
    folds: &FoldAssignment,
    wanted: &[bool],
    seed: u64,
) -> Result<CvPredictions> {
    if folds.len() != d.n() {
        return Err(Error::DimensionMismatch {
            expected: d.n(),
            got: folds.len(),
        });
    }
    let mut z = DMatrix::zeros(d.n(), lib.len());
    let mut failures = Vec::new();
    for v in 0..folds.n_folds() {
        let (train_idx, test_idx) = folds.split(v);
        let train = d.select_rows(&train_idx);
        let x_test = select_rows(d.x(), &test_idx);
        let fit = fit_on_split(&train, &x_test, lib, wanted, false, seed, &format!("fold{v}"), Some(v));
        for (c, preds) in fit.predictions.iter().enumerate() {
            if !wanted[c] {
                continue;
            }
            for (pos, &i) in test_idx.iter().enumerate() {
                z[(i, c)] = preds[pos];
            }
        }
        failures.extend(fit.failures);
    }
    Ok(CvPredictions { z, failures })
}

/// Mean cross-validated loss of each column of `z`: squared error, or the
/// clipped log-loss for binary outcomes.
pub fn candidate_risk(z: &DMatrix<f64>, y: &[f64], kind: OutcomeKind) -> Vec<f64> {
    (0..z.ncols())
        .map(|c| {
            let mut w = vec![0.0; z.ncols()];
            w[c] = 1.0;
            match kind {
                OutcomeKind::Binary => nll_loss(z, y, &w),
                OutcomeKind::Continuous => {
                    z.column(c).iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refit {
    /// Refit every candidate on the full data.
    All,
    /// Refit only candidates with positive weight; the rest cannot contribute.
    NonzeroWeight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuperLearnerOptions {
    pub folds: usize,
    pub refit: Refit,
}

impl Default for SuperLearnerOptions {
    fn default() -> Self {
        SuperLearnerOptions {
            folds: 5,
            refit: Refit::All,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SLModel {
    pub library: CandidateLibrary,
    pub weights: Vec<f64>,
    pub meta: MetaWeights,
    /// Cross-validated loss per candidate.
    pub cv_risk: Vec<f64>,
    /// Cross-validated loss of the weighted combination.
    pub ensemble_cv_risk: f64,
    pub fitted: Vec<Option<CandidateModel>>,
    pub failures: Vec<CandidateFailure>,
    pub outcome: OutcomeKind,
    pub n_features: usize,
    pub options: SuperLearnerOptions,
    pub seed: u64,
}

impl SLModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        predict_sl(self, x)
    }
}

pub(crate) fn meta_weights(z: &DMatrix<f64>, y: &[f64], kind: OutcomeKind) -> Result<MetaWeights> {
    match kind {
        OutcomeKind::Continuous => meta_nnls(z, y),
        OutcomeKind::Binary => meta_nll(z, y),
    }
}

pub(crate) fn ensemble_risk(z: &DMatrix<f64>, y: &[f64], w: &[f64], kind: OutcomeKind) -> f64 {
    match kind {
        OutcomeKind::Binary => nll_loss(z, y, w),
        OutcomeKind::Continuous => {
            let pred = z * nalgebra::DVector::from_column_slice(w);
            pred.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
        }
    }
}

pub(crate) fn sl_folds(d: &Dataset, v: usize, seed: u64) -> Result<FoldAssignment> {
    let labels = (d.kind() == OutcomeKind::Binary).then_some(d.y());
    make_folds(d.n(), v, labels, seed::derive(seed, "sl-folds"))
}

/// Super Learner with the default five folds, refitting every candidate.
pub fn fit_superlearner(
    d: &Dataset,
    screens: &[ScreenSpec],
    learners: &[LearnerSpec],
    folds: usize,
    seed: u64,
) -> Result<SLModel> {
    let lib = CandidateLibrary::new(screens, learners)?;
    let options = SuperLearnerOptions {
        folds,
        ..SuperLearnerOptions::default()
    };
    fit_superlearner_with(d, lib, options, seed)
}

pub fn fit_superlearner_with(
    d: &Dataset,
    library: CandidateLibrary,
    options: SuperLearnerOptions,
    seed: u64,
) -> Result<SLModel> {
    if d.n() < MIN_ROWS {
        return Err(Error::TooFewObservations(format!(
            "Super Learner needs at least {MIN_ROWS} rows, got {}",
            d.n()
        )));
    }
    let folds = sl_folds(d, options.folds, seed)?;
    let cv = cv_predictions(d, &library, &folds, seed)?;
    let meta = meta_weights(&cv.z, d.y(), d.kind())?;
    let cv_risk = candidate_risk(&cv.z, d.y(), d.kind());
    let ensemble_cv_risk = ensemble_risk(&cv.z, d.y(), &meta.weights, d.kind());
    let wanted: Vec<bool> = match options.refit {
        Refit::All => vec![true; library.len()],
        Refit::NonzeroWeight => meta.weights.iter().map(|&w| w > 0.0).collect(),
    };
    let empty = DMatrix::zeros(0, d.p());
    let full = fit_on_split(d, &empty, &library, &wanted, true, seed, "full", None);
    let mut failures = cv.failures;
    failures.extend(full.failures);
    Ok(SLModel {
        weights: meta.weights.clone(),
        meta,
        cv_risk,
        ensemble_cv_risk,
        fitted: full.models,
        failures,
        outcome: d.kind(),
        n_features: d.p(),
        options,
        seed,
        library,
    })
}

/// Weighted sum of candidate predictions; candidates with zero weight are skipped.
pub fn predict_sl(m: &SLModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.ncols() != m.n_features {
        return Err(Error::DimensionMismatch {
            expected: m.n_features,
            got: x.ncols(),
        });
    }
    let mut out = vec![0.0; x.nrows()];
    for (c, &w) in m.weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let model = m.fitted[c].as_ref().ok_or_else(|| {
            Error::InvalidData(format!("candidate {} has weight {w} but no refit model", m.library.candidates()[c]))
        })?;
        for (o, p) in out.iter_mut().zip(model.predict(x)?) {
            *o += w * p;
        }
    }
    if m.outcome == OutcomeKind::Binary {
        out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
    Ok(out)
}
