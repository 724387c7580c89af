//! Run configuration: an INI-style file with `[run]`, `[scenarios]` and
//! `[estimators]` sections; any key can be overridden as `section.key=value`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::OutcomeKind;
use crate::ensemble::Refit;
use crate::error::{Error, Result};
use crate::screens::ScreenSetName;
use crate::sim::{Correlation, Relationship, ScenarioConfig, Strength};

pub const WORKERS_ENV: &str = "SCREENLEARN_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    LassoAlone,
    SL,
    SLMinusLasso,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::LassoAlone => "lasso",
            EstimatorKind::SL => "sl",
            EstimatorKind::SLMinusLasso => "sl-minus-lasso",
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "lasso" => Ok(EstimatorKind::LassoAlone),
            "sl" => Ok(EstimatorKind::SL),
            "sl-minus-lasso" => Ok(EstimatorKind::SLMinusLasso),
            other => Err(Error::Config(format!("unknown estimator `{other}`"))),
        }
    }
}

/// One estimator arm. The screen set is `None` for the lasso alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub screen_set: Option<ScreenSetName>,
}

/// Written in the `screen_set` column for estimators without screens.
pub const NO_SCREEN_SET: &str = "na";

impl EstimatorSpec {
    pub fn lasso() -> Self {
        EstimatorSpec {
            kind: EstimatorKind::LassoAlone,
            screen_set: None,
        }
    }

    pub fn sl(kind: EstimatorKind, set: ScreenSetName) -> Self {
        EstimatorSpec {
            kind,
            screen_set: Some(set),
        }
    }

    /// Lasso plus both Super Learner variants under each of the four screen sets.
    pub fn standard_arms() -> Vec<EstimatorSpec> {
        let mut arms = vec![EstimatorSpec::lasso()];
        for kind in [EstimatorKind::SL, EstimatorKind::SLMinusLasso] {
            for set in ScreenSetName::ALL_SETS {
                arms.push(EstimatorSpec::sl(kind, set));
            }
        }
        arms
    }

    pub fn screen_set_str(&self) -> &'static str {
        self.screen_set.map_or(NO_SCREEN_SET, ScreenSetName::as_str)
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.screen_set {
            None => f.write_str(self.kind.as_str()),
            Some(s) => write!(f, "{}:{}", self.kind.as_str(), s),
        }
    }
}

impl FromStr for EstimatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, set) = match s.trim().split_once(':') {
            Some((k, set)) => (k.parse::<EstimatorKind>()?, Some(set.parse::<ScreenSetName>()?)),
            None => (s.parse::<EstimatorKind>()?, None),
        };
        match (kind, set) {
            (EstimatorKind::LassoAlone, None) => Ok(EstimatorSpec::lasso()),
            (EstimatorKind::LassoAlone, Some(_)) => {
                Err(Error::Config("the lasso estimator takes no screen set".into()))
            }
            (k, Some(set)) => Ok(EstimatorSpec::sl(k, set)),
            (_, None) => Err(Error::Config(format!("estimator `{s}` needs a screen set, e.g. `{s}:all`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioGrid {
    pub n: Vec<usize>,
    pub p: Vec<usize>,
    pub relationship: Vec<Relationship>,
    pub strength: Vec<Strength>,
    pub correlation: Vec<Correlation>,
    pub outcome: Vec<OutcomeKind>,
}

impl Default for ScenarioGrid {
    fn default() -> Self {
        ScenarioGrid {
            n: vec![200, 500, 1000],
            p: vec![10, 50],
            relationship: vec![Relationship::Linear, Relationship::Nonlinear],
            strength: vec![Strength::Weak, Strength::Strong],
            correlation: vec![Correlation::Uncorrelated, Correlation::Correlated],
            outcome: vec![OutcomeKind::Continuous, OutcomeKind::Binary],
        }
    }
}

impl ScenarioGrid {
    /// Every design cell, with the seed left at zero.
    pub fn cells(&self) -> Vec<ScenarioConfig> {
        let mut out = Vec::new();
        for &outcome_kind in &self.outcome {
            for &relationship in &self.relationship {
                for &strength in &self.strength {
                    for &correlation in &self.correlation {
                        for &p in &self.p {
                            for &n in &self.n {
                                out.push(ScenarioConfig {
                                    n,
                                    p,
                                    relationship,
                                    strength,
                                    correlation,
                                    outcome_kind,
                                    seed: 0,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenarios: ScenarioGrid,
    pub estimators: Vec<EstimatorSpec>,
    pub replicates: usize,
    pub master_seed: u64,
    pub test_size: usize,
    pub oracle_n_test: usize,
    pub folds: usize,
    pub workers: usize,
    pub output: PathBuf,
    pub oracle_output: PathBuf,
    /// Record wall-clock seconds; when off the column is 0 so reruns are byte-identical.
    pub timing: bool,
    pub refit: Refit,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenarios: ScenarioGrid::default(),
            estimators: EstimatorSpec::standard_arms(),
            replicates: 50,
            master_seed: 1,
            test_size: 10_000,
            oracle_n_test: 1_000_000,
            folds: 5,
            workers: 1,
            output: PathBuf::from("results.csv"),
            oracle_output: PathBuf::from("oracles.csv"),
            timing: true,
            refit: Refit::NonzeroWeight,
        }
    }
}

fn list<T: FromStr<Err = Error>>(value: &str) -> Result<Vec<T>> {
    let items = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(T::from_str)
        .collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        return Err(Error::Config("empty list".into()));
    }
    Ok(items)
}

fn number<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}` expects a number, got `{value}`")))
}

fn usize_list(key: &str, value: &str) -> Result<Vec<usize>> {
    let items = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|v| number::<usize>(key, v))
        .collect::<Result<Vec<_>>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("`{key}` is empty")));
    }
    Ok(items)
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}` expects true or false, got `{value}`"))),
    }
}

impl RunConfig {
    /// Applies one `section.key = value` setting.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let full = format!("{section}.{key}");
        let value = value.trim();
        let ctx = |e: Error| match e {
            Error::Config(m) => Error::Config(format!("{full}: {m}")),
            other => other,
        };
        match (section, key) {
            ("run", "replicates") => self.replicates = number(&full, value)?,
            ("run", "master_seed") => self.master_seed = number(&full, value)?,
            ("run", "test_size") => self.test_size = number(&full, value)?,
            ("run", "oracle_n_test") => self.oracle_n_test = number(&full, value)?,
            ("run", "folds") => self.folds = number(&full, value)?,
            ("run", "workers") => self.workers = number(&full, value)?,
            ("run", "output") => self.output = PathBuf::from(value),
            ("run", "oracle_output") => self.oracle_output = PathBuf::from(value),
            ("run", "timing") => self.timing = boolean(&full, value)?,
            ("run", "refit") => {
                self.refit = match value {
                    "all" => Refit::All,
                    "nonzero" => Refit::NonzeroWeight,
                    _ => return Err(Error::Config(format!("{full}: expected `all` or `nonzero`, got `{value}`"))),
                }
            }
            ("scenarios", "n") => self.scenarios.n = usize_list(&full, value)?,
            ("scenarios", "p") => self.scenarios.p = usize_list(&full, value)?,
            ("scenarios", "relationship") => self.scenarios.relationship = list(value).map_err(ctx)?,
            ("scenarios", "strength") => self.scenarios.strength = list(value).map_err(ctx)?,
            ("scenarios", "correlation") => self.scenarios.correlation = list(value).map_err(ctx)?,
            ("scenarios", "outcome") => self.scenarios.outcome = list(value).map_err(ctx)?,
            ("estimators", "arms") => {
                self.estimators = if value == "standard" {
                    EstimatorSpec::standard_arms()
                } else {
                    list(value).map_err(ctx)?
                }
            }
            _ => return Err(Error::Config(format!("unknown setting `{full}`"))),
        }
        Ok(())
    }

    /// Applies a `section.key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (lhs, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form section.key=value")))?;
        let (section, key) = lhs
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("override key `{lhs}` needs a section, e.g. run.{lhs}")))?;
        self.set(section.trim(), key.trim(), value)
    }

    /// Parses configuration text on top of the defaults.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut section: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |m: String| Error::Config(format!("line {}: {m}", lineno + 1));
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| at(format!("malformed section header `{line}`")))?
                    .trim();
                if !["run", "scenarios", "estimators"].contains(&name) {
                    return Err(at(format!("unknown section `[{name}]`")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected `key = value`, got `{line}`")))?;
            let sec = section
                .as_deref()
                .ok_or_else(|| at("setting appears before any section".into()))?;
            cfg.set(sec, key.trim(), value).map_err(|e| match e {
                Error::Config(m) => at(m),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::Config("run.replicates must be at least 1".into()));
        }
        if self.workers < 1 {
            return Err(Error::Config("run.workers must be at least 1".into()));
        }
        if self.test_size < 2 || self.oracle_n_test < 2 {
            return Err(Error::Config("test sizes must be at least 2".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("run.folds must be at least 2".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimator arms configured".into()));
        }
        for cell in self.scenarios.cells() {
            cell.validate()?;
        }
        Ok(())
    }

    pub fn scenarios(&self) -> Vec<ScenarioConfig> {
        self.scenarios.cells()
    }

    /// Worker count from the environment, if set and valid.
    pub fn workers_from_env() -> Option<usize> {
        std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&w| w >= 1)
    }
}
