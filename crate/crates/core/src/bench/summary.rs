//! Plot-ready summaries of benchmark records, and oracle performance per cell.

use std::collections::BTreeMap;
use std::path::Path;

use super::config::RunConfig;
use super::records::BenchRecord;
use super::run::parallel_map;
use crate::data::OutcomeKind;
use crate::error::{Error, Result};
use crate::metrics::{oracle_performance, MetricName};
use crate::seed;
use crate::sim::{Correlation, Relationship, ScenarioConfig, Strength};

pub const SUMMARY_COLUMNS: [&str; 14] = [
    "p",
    "relationship",
    "strength",
    "correlation",
    "outcome",
    "estimator",
    "screen_set",
    "n",
    "metric",
    "mean",
    "se",
    "replicates",
    "errors",
    "single_replicate",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub p: usize,
    pub relationship: Relationship,
    pub strength: Strength,
    pub correlation: Correlation,
    pub outcome: OutcomeKind,
    pub estimator: String,
    pub screen_set: String,
    pub n: usize,
    pub metric: MetricName,
    /// NaN when every replicate failed.
    pub mean: f64,
    /// Monte Carlo standard error; 0 with one usable replicate.
    pub se: f64,
    pub replicates: usize,
    pub errors: usize,
    pub single_replicate: bool,
}

type GroupKey = (OutcomeKind, Relationship, Strength, Correlation, usize, String, String, usize, MetricName);

/// Mean, standard error and replicate count per (cell without n, estimator,
/// screen set, n). Failed (NaN) replicates are counted but not averaged.
pub fn aggregate_plot_data(records: &[BenchRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::InvalidData("no benchmark records to summarize".into()));
    }
    let mut groups: BTreeMap<GroupKey, (Vec<f64>, usize)> = BTreeMap::new();
    for r in records {
        let key = (
            r.outcome,
            r.relationship,
            r.strength,
            r.correlation,
            r.p,
            r.estimator.clone(),
            r.screen_set.clone(),
            r.n,
            r.metric,
        );
        let entry = groups.entry(key).or_default();
        if r.value.is_finite() {
            entry.0.push(r.value);
        } else {
            entry.1 += 1;
        }
    }
    Ok(groups
        .into_iter()
        .map(|((outcome, relationship, strength, correlation, p, estimator, screen_set, n, metric), (vals, errors))| {
            let k = vals.len();
            let mean = if k == 0 { f64::NAN } else { vals.iter().sum::<f64>() / k as f64 };
            let se = if k < 2 {
                0.0
            } else {
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64;
                (var / k as f64).sqrt()
            };
            SummaryRow {
                p,
                relationship,
                strength,
                correlation,
                outcome,
                estimator,
                screen_set,
                n,
                metric,
                mean,
                se,
                replicates: k,
                errors,
                single_replicate: k == 1,
            }
        })
        .collect())
}

pub fn write_summary(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(SUMMARY_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.p.to_string(),
            r.relationship.to_string(),
            r.strength.to_string(),
            r.correlation.to_string(),
            r.outcome.to_string(),
            r.estimator.clone(),
            r.screen_set.clone(),
            r.n.to_string(),
            r.metric.to_string(),
            r.mean.to_string(),
            r.se.to_string(),
            r.replicates.to_string(),
            r.errors.to_string(),
            r.single_replicate.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub const ORACLE_COLUMNS: [&str; 8] = ["p", "relationship", "strength", "correlation", "outcome", "metric", "value", "n_test"];

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub cell: ScenarioConfig,
    pub metric: MetricName,
    pub value: f64,
    pub n_test: usize,
}

/// Oracle metric for every distinct design cell (sample size plays no role).
pub fn compute_oracles(config: &RunConfig) -> Result<Vec<OracleRow>> {
    config.validate()?;
    let mut cells: Vec<ScenarioConfig> = Vec::new();
    for cell in config.scenarios() {
        let cell = ScenarioConfig { n: config.oracle_n_test, ..cell };
        if !cells.contains(&cell) {
            cells.push(cell);
        }
    }
    let rows = parallel_map(&cells, config.workers, |cell| -> Result<OracleRow> {
        let key = format!(
            "oracle|p={}|{}|{}|{}|{}|{}",
            cell.p, cell.relationship, cell.strength, cell.correlation, cell.outcome_kind, config.master_seed
        );
        let cell = ScenarioConfig {
            seed: seed::seed_from_key(&key),
            ..*cell
        };
        let m = oracle_performance(&cell, config.oracle_n_test)?;
        Ok(OracleRow {
            cell,
            metric: m.name,
            value: m.value,
            n_test: config.oracle_n_test,
        })
    });
    rows.into_iter().collect()
}

pub fn write_oracles(path: impl AsRef<Path>, rows: &[OracleRow]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(ORACLE_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.cell.p.to_string(),
            r.cell.relationship.to_string(),
            r.cell.strength.to_string(),
            r.cell.correlation.to_string(),
            r.cell.outcome_kind.to_string(),
            r.metric.to_string(),
            r.value.to_string(),
            r.n_test.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(rep: usize, value: f64) -> BenchRecord {
        BenchRecord {
            n: 500,
            p: 10,
            relationship: Relationship::Linear,
            strength: Strength::Weak,
            correlation: Correlation::Correlated,
            outcome: OutcomeKind::Continuous,
            estimator: "lasso".into(),
            screen_set: "na".into(),
            rep,
            seed: 1,
            metric: MetricName::RSquared,
            value,
            seconds: 0.0,
            error: String::new(),
        }
    }

    #[test]
    fn mean_and_standard_error() {
        let rows = aggregate_plot_data(&[rec(0, 0.1), rec(1, 0.2), rec(2, 0.3)]).unwrap();
        assert_eq!(rows.len(), 1);
        assert!((rows[0].mean - 0.2).abs() < 1e-12);
        assert!((rows[0].se - 0.1 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(rows[0].replicates, 3);
    }

    #[test]
    fn single_replicate_and_failures() {
        let rows = aggregate_plot_data(&[rec(0, 0.4), rec(1, f64::NAN)]).unwrap();
        assert_eq!(rows[0].se, 0.0);
        assert!(rows[0].single_replicate);
        assert_eq!(rows[0].errors, 1);
        assert_eq!(rows[0].mean, 0.4);
        assert!(aggregate_plot_data(&[]).is_err());
    }
}
