//! R², AUC and best-possible (oracle) performance.

use std::fmt;
use std::str::FromStr;

use crate::data::OutcomeKind;
use crate::error::{Error, Result};
use crate::sim::{self, ScenarioConfig};
use crate::stats::{mid_ranks, normal_cdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricName {
    RSquared,
    Auc,
}

impl MetricName {
    pub fn for_outcome(kind: OutcomeKind) -> Self {
        match kind {
            OutcomeKind::Continuous => MetricName::RSquared,
            OutcomeKind::Binary => MetricName::Auc,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::RSquared => "r_squared",
            MetricName::Auc => "auc",
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r_squared" => Ok(MetricName::RSquared),
            "auc" => Ok(MetricName::Auc),
            _ => Err(Error::Config(format!("unrecognized metric `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValue {
    pub name: MetricName,
    pub value: f64,
}

fn same_length(pred: &[f64], y: &[f64]) -> Result<()> {
    if pred.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: pred.len(),
        });
    }
    Ok(())
}

/// 1 − SSE / SST.
pub fn r_squared(pred: &[f64], y: &[f64]) -> Result<f64> {
    same_length(pred, y)?;
    if y.len() < 2 {
        return Err(Error::TooFewObservations("R² needs at least 2 rows".into()));
    }
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    if sst <= 0.0 {
        return Err(Error::InvalidData("R² undefined for a constant outcome".into()));
    }
    let sse: f64 = pred.iter().zip(y).map(|(p, v)| (v - p) * (v - p)).sum();
    Ok(1.0 - sse / sst)
}

/// Mann–Whitney estimate of P(score⁺ > score⁻) + ½ P(tie).
pub fn auc(pred: &[f64], y: &[f64]) -> Result<f64> {
    same_length(pred, y)?;
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidData("AUC labels must be 0 or 1".into()));
    }
    let n_pos = y.iter().filter(|&&v| v == 1.0).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidData("AUC needs both classes present".into()));
    }
    let ranks = mid_ranks(pred);
    let rank_sum: f64 = ranks.iter().zip(y).filter(|(_, &v)| v == 1.0).map(|(r, _)| r).sum();
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Performance of the true mean function on a large independent draw:
/// R² of f(x) for continuous outcomes, AUC of Φ(f(x)) for binary ones.
pub fn oracle_performance(config: &ScenarioConfig, n_test: usize) -> Result<MetricValue> {
    config.validate()?;
    let (f, y) = sim::oracle_truth(config, n_test)?;
    let name = MetricName::for_outcome(config.outcome_kind);
    let value = match config.outcome_kind {
        OutcomeKind::Continuous => r_squared(&f, &y)?,
        OutcomeKind::Binary => {
            let prob: Vec<f64> = f.iter().map(|&v| normal_cdf(v)).collect();
            auc(&prob, &y)?
        }
    };
    Ok(MetricValue { name, value })
}
