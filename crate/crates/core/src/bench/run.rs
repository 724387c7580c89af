//! Replicate execution and the worker pool.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use super::config::{EstimatorKind, EstimatorSpec, RunConfig};
use super::records::{sort_records, BenchRecord};
use crate::data::{Dataset, OutcomeKind};
use crate::ensemble::{self, Candidate, CandidateLibrary, Refit};
use crate::error::{Error, Result};
use crate::learners::LearnerSpec;
use crate::metrics::{auc, r_squared, MetricName};
use crate::screens::{expand_screen_set, ScreenSpec};
use crate::seed;
use crate::sim::{self, ScenarioConfig};

/// Seed for one replicate of a design cell. All arms of the replicate share
/// it, so they see the same training data, test data and folds.
pub fn replicate_seed(cell: &ScenarioConfig, rep: usize, master_seed: u64) -> u64 {
    seed::seed_from_key(&format!("{}|{rep}|{master_seed}", cell.key()))
}

fn arm_learners(kind: EstimatorKind) -> Vec<LearnerSpec> {
    match kind {
        EstimatorKind::SLMinusLasso => LearnerSpec::library_without_lasso(),
        _ => LearnerSpec::library(),
    }
}

fn score(kind: OutcomeKind, pred: &[f64], y: &[f64]) -> Result<f64> {
    match kind {
        OutcomeKind::Continuous => r_squared(pred, y),
        OutcomeKind::Binary => auc(pred, y),
    }
}

/// Fits every arm on `train` and scores it on `test`.
///
/// Arms draw their candidates from one shared library, so a screen-learner
/// pair that appears in several arms is cross-validated and refit once.
/// Each Super Learner arm gets exactly the predictions it would get from
/// [`ensemble::fit_superlearner_with`] with the same seed.
pub fn evaluate_arms(
    train: &Dataset,
    test: &Dataset,
    arms: &[EstimatorSpec],
    folds: usize,
    refit: Refit,
    seed: u64,
) -> Vec<Result<f64>> {
    let p = train.p();
    let kind = train.kind();
    let mut screens: Vec<ScreenSpec> = Vec::new();
    let add_screen = |s: ScreenSpec, screens: &mut Vec<ScreenSpec>| {
        if !screens.contains(&s) {
            screens.push(s);
        }
    };
    for arm in arms {
        match arm.screen_set {
            Some(set) => expand_screen_set(set, p).into_iter().for_each(|s| add_screen(s, &mut screens)),
            None => add_screen(ScreenSpec::AllVars, &mut screens),
        }
    }
    let lib = match CandidateLibrary::new(&screens, &LearnerSpec::library()) {
        Ok(lib) => lib,
        Err(e) => return arms.iter().map(|_| Err(Error::Config(e.to_string()))).collect(),
    };
    let columns: Vec<Vec<usize>> = arms
        .iter()
        .map(|arm| match arm.screen_set {
            None => vec![lib
                .position(&Candidate {
                    screen: ScreenSpec::AllVars,
                    learner: LearnerSpec::Lasso,
                })
                .expect("lasso candidate in library")],
            Some(set) => {
                let learners = arm_learners(arm.kind);
                expand_screen_set(set, p)
                    .into_iter()
                    .flat_map(|screen| {
                        learners
                            .iter()
                            .map(move |&learner| Candidate { screen, learner })
                            .collect::<Vec<_>>()
                    })
                    .map(|c| lib.position(&c).expect("arm candidate in library"))
                    .collect()
            }
        })
        .collect();

    let is_sl: Vec<bool> = arms.iter().map(|a| a.kind != EstimatorKind::LassoAlone).collect();
    let mut weights: Vec<Option<Result<Vec<f64>>>> = arms.iter().map(|_| None).collect();
    if is_sl.iter().any(|&b| b) {
        let sl_result = (|| -> Result<ensemble::CvPredictions> {
            if train.n() < ensemble::MIN_ROWS {
                return Err(Error::TooFewObservations(format!(
                    "Super Learner needs at least {} rows, got {}",
                    ensemble::MIN_ROWS,
                    train.n()
                )));
            }
            let assignment = ensemble::sl_folds(train, folds, seed)?;
            let mut wanted = vec![false; lib.len()];
            for (a, cols) in columns.iter().enumerate() {
                if is_sl[a] {
                    cols.iter().for_each(|&c| wanted[c] = true);
                }
            }
            ensemble::cv_predictions_masked(train, &lib, &assignment, &wanted, seed)
        })();
        match sl_result {
            Ok(cv) => {
                for (a, cols) in columns.iter().enumerate() {
                    if is_sl[a] {
                        let z = cv.z.select_columns(cols);
                        weights[a] = Some(ensemble::meta_weights(&z, train.y(), kind).map(|m| m.weights));
                    }
                }
            }
            Err(e) => {
                let msg = e.to_string();
                for (a, w) in weights.iter_mut().enumerate() {
                    if is_sl[a] {
                        *w = Some(Err(Error::InvalidData(msg.clone())));
                    }
                }
            }
        }
    }

    let mut wanted = vec![false; lib.len()];
    for (a, cols) in columns.iter().enumerate() {
        match &weights[a] {
            None => cols.iter().for_each(|&c| wanted[c] = true),
            Some(Ok(w)) => {
                for (&c, &wc) in cols.iter().zip(w) {
                    if refit == Refit::All || wc > 0.0 {
                        wanted[c] = true;
                    }
                }
            }
            Some(Err(_)) => {}
        }
    }
    let full = ensemble::fit_on_split(train, test.x(), &lib, &wanted, false, seed, "full", None);

    arms.iter()
        .enumerate()
        .map(|(a, arm)| -> Result<f64> {
            let pred: Vec<f64> = match &weights[a] {
                None => {
                    let c = columns[a][0];
                    if let Some(f) = full.failures.iter().find(|f| lib.position(&f.candidate) == Some(c)) {
                        return Err(Error::InvalidData(format!("{arm}: {}", f.message)));
                    }
                    full.predictions[c].clone()
                }
                Some(Err(e)) => return Err(Error::InvalidData(e.to_string())),
                Some(Ok(w)) => {
                    let mut out = vec![0.0; test.n()];
                    for (&c, &wc) in columns[a].iter().zip(w) {
                        if wc > 0.0 {
                            for (o, v) in out.iter_mut().zip(&full.predictions[c]) {
                                *o += wc * v;
                            }
                        }
                    }
                    if kind == OutcomeKind::Binary {
                        out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
                    }
                    out
                }
            };
            score(kind, &pred, test.y())
        })
        .collect()
}

/// Runs every arm on one replicate of a design cell.
pub fn run_replicate(cell: &ScenarioConfig, rep: usize, config: &RunConfig) -> Vec<BenchRecord> {
    let start = Instant::now();
    let seed = replicate_seed(cell, rep, config.master_seed);
    let scenario = ScenarioConfig { seed, ..*cell };
    let results: Vec<Result<f64>> = (|| -> Result<Vec<Result<f64>>> {
        let train = sim::generate_dataset(&scenario)?;
        let test = sim::draw_dataset(&scenario, config.test_size, seed::derive(seed, "test"))?;
        Ok(evaluate_arms(&train, &test, &config.estimators, config.folds, config.refit, seed))
    })()
    .unwrap_or_else(|e| {
        let msg = e.to_string();
        config.estimators.iter().map(|_| Err(Error::InvalidData(msg.clone()))).collect()
    });
    let seconds = if config.timing { start.elapsed().as_secs_f64() } else { 0.0 };
    let metric = MetricName::for_outcome(cell.outcome_kind);
    config
        .estimators
        .iter()
        .zip(results)
        .map(|(arm, result)| {
            let (value, error) = match result {
                Ok(v) if v.is_finite() => (v, String::new()),
                Ok(v) => (f64::NAN, format!("non-finite metric {v}")),
                Err(e) => {
                    log::warn!("{} rep {rep} {arm}: {e}", cell.key());
                    (f64::NAN, e.to_string())
                }
            };
            BenchRecord {
                n: cell.n,
                p: cell.p,
                relationship: cell.relationship,
                strength: cell.strength,
                correlation: cell.correlation,
                outcome: cell.outcome_kind,
                estimator: arm.kind.as_str().to_string(),
                screen_set: arm.screen_set_str().to_string(),
                rep,
                seed,
                metric,
                value,
                seconds,
                error,
            }
        })
        .collect()
}

/// Runs `tasks` on `workers` threads, each item processed by exactly one worker.
pub(crate) fn parallel_map<T: Sync, R: Send>(tasks: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..tasks.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, tasks.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= tasks.len() {
                    break;
                }
                let r = f(&tasks[i]);
                results.lock().expect("result sink poisoned")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("result sink poisoned")
        .into_iter()
        .map(|r| r.expect("every task ran"))
        .collect()
}

/// Every (design cell, replicate) task, records sorted by key.
pub fn run_benchmark(config: &RunConfig) -> Result<Vec<BenchRecord>> {
    config.validate()?;
    let tasks: Vec<(ScenarioConfig, usize)> = config
        .scenarios()
        .into_iter()
        .flat_map(|cell| (0..config.replicates).map(move |rep| (cell, rep)))
        .collect();
    let done = AtomicUsize::new(0);
    let total = tasks.len();
    let batches = parallel_map(&tasks, config.workers, |(cell, rep)| {
        let records = run_replicate(cell, *rep, config);
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        log::info!("[{k}/{total}] {} rep {rep}", cell.key());
        records
    });
    let mut records: Vec<BenchRecord> = batches.into_iter().flatten().collect();
    sort_records(&mut records);
    Ok(records)
}
