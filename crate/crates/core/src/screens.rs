//! Variable screens: each maps a training dataset to a feature subset.

use std::cell::OnceCell;
use std::fmt;
use std::str::FromStr;

use crate::data::{Dataset, FeatureSubset, OutcomeKind};
use crate::error::{Error, Result};
use crate::learners::{self, FittedModel, FOREST_TREES, LASSO_CV_FOLDS};
use crate::seed;
use crate::stats::{correlation_pvalue, mid_ranks, pearson};

/// Columns kept when a screen would otherwise select nothing.
pub const FALLBACK_COLUMNS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScreenSpec {
    AllVars,
    UnivarCorP { p_threshold: f64 },
    RankCorTopK { k: usize },
    RFImportanceTopK { k: usize },
    LassoNonzero,
}

impl ScreenSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ScreenSpec::UnivarCorP { p_threshold } if !(p_threshold > 0.0 && p_threshold < 1.0) => Err(
                Error::Config(format!("p-value threshold {p_threshold} outside (0, 1)")),
            ),
            ScreenSpec::RankCorTopK { k: 0 } | ScreenSpec::RFImportanceTopK { k: 0 } => {
                Err(Error::Config("screen size k must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn is_seeded(&self) -> bool {
        matches!(self, ScreenSpec::RFImportanceTopK { .. } | ScreenSpec::LassoNonzero)
    }
}

impl fmt::Display for ScreenSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScreenSpec::AllVars => write!(f, "all"),
            ScreenSpec::UnivarCorP { p_threshold } => write!(f, "corp:{p_threshold}"),
            ScreenSpec::RankCorTopK { k } => write!(f, "rankcor:{k}"),
            ScreenSpec::RFImportanceTopK { k } => write!(f, "rfimp:{k}"),
            ScreenSpec::LassoNonzero => write!(f, "lasso"),
        }
    }
}

impl FromStr for ScreenSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unrecognized screen `{s}`"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let spec = match parts.as_slice() {
            ["all"] => ScreenSpec::AllVars,
            ["lasso"] => ScreenSpec::LassoNonzero,
            ["corp", t] => ScreenSpec::UnivarCorP {
                p_threshold: t.parse().map_err(|_| bad())?,
            },
            ["rankcor", k] => ScreenSpec::RankCorTopK {
                k: k.parse().map_err(|_| bad())?,
            },
            ["rfimp", k] => ScreenSpec::RFImportanceTopK {
                k: k.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScreenSetName {
    NoScreens,
    LassoOnly,
    All,
    AllMinusLasso,
}

impl ScreenSetName {
    pub const ALL_SETS: [ScreenSetName; 4] = [
        ScreenSetName::NoScreens,
        ScreenSetName::LassoOnly,
        ScreenSetName::All,
        ScreenSetName::AllMinusLasso,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScreenSetName::NoScreens => "none",
            ScreenSetName::LassoOnly => "lasso",
            ScreenSetName::All => "all",
            ScreenSetName::AllMinusLasso => "all-minus-lasso",
        }
    }
}

impl fmt::Display for ScreenSetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScreenSetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScreenSetName::ALL_SETS
            .into_iter()
            .find(|n| n.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unrecognized screen set `{s}`")))
    }
}

/// The screens making up a named set. Small problems (p <= 10) use the
/// short list; larger ones add rank-correlation and forest screens.
pub fn expand_screen_set(name: ScreenSetName, p: usize) -> Vec<ScreenSpec> {
    use ScreenSpec::*;
    let many = if p <= 10 {
        vec![AllVars, UnivarCorP { p_threshold: 0.2 }, LassoNonzero]
    } else {
        vec![
            AllVars,
            RankCorTopK { k: 10 },
            RankCorTopK { k: 25 },
            RankCorTopK { k: 50 },
            UnivarCorP { p_threshold: 0.2 },
            UnivarCorP { p_threshold: 0.4 },
            RFImportanceTopK { k: 10 },
            RFImportanceTopK { k: 25 },
            LassoNonzero,
        ]
    };
    match name {
        ScreenSetName::NoScreens => vec![AllVars],
        ScreenSetName::LassoOnly => vec![LassoNonzero],
        ScreenSetName::All => many,
        ScreenSetName::AllMinusLasso => many.into_iter().filter(|s| *s != LassoNonzero).collect(),
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::TooFewObservations(format!(
            "correlation test needs at least 3 pairs, got {}",
            x.len()
        )));
    }
    Ok(())
}

/// Two-sided Pearson correlation test. Constant input yields 1.
pub fn pearson_cor_test_pvalue(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    Ok(match pearson(x, y) {
        Some(r) => correlation_pvalue(r, x.len()),
        None => {
            log::debug!("constant input to correlation test; p-value set to 1");
            1.0
        }
    })
}

/// Pearson test applied to mid-ranks.
pub fn spearman_cor_test_pvalue(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson_cor_test_pvalue(&mid_ranks(x), &mid_ranks(y))
}

fn top_k(order: Vec<usize>, k: usize, p: usize) -> Result<FeatureSubset> {
    FeatureSubset::new(order.into_iter().take(k).collect(), p)
}

/// Lazily computed per-dataset statistics, shared by every screen fit on
/// the same training rows so that e.g. both forest screens reuse one forest.
pub struct ScreenContext<'a> {
    d: &'a Dataset,
    seed: u64,
    forest_seed: u64,
    abs_pearson: OnceCell<Vec<f64>>,
    pearson_p: OnceCell<Vec<f64>>,
    spearman: OnceCell<Vec<(f64, f64)>>,
    forest: OnceCell<std::result::Result<FittedModel, String>>,
    lasso: OnceCell<std::result::Result<Vec<usize>, String>>,
}

impl<'a> ScreenContext<'a> {
    pub fn new(d: &'a Dataset, seed: u64) -> Self {
        Self::with_forest_seed(d, seed, seed::derive(seed, "rf-screen"))
    }

    /// Uses `forest_seed` for the importance forest, so the forest can double
    /// as a forest candidate fit with that seed on the same rows.
    pub fn with_forest_seed(d: &'a Dataset, seed: u64, forest_seed: u64) -> Self {
        ScreenContext {
            d,
            seed,
            forest_seed,
            abs_pearson: OnceCell::new(),
            pearson_p: OnceCell::new(),
            spearman: OnceCell::new(),
            forest: OnceCell::new(),
            lasso: OnceCell::new(),
        }
    }

    fn abs_pearson(&self) -> &[f64] {
        self.abs_pearson.get_or_init(|| {
            (0..self.d.p())
                .map(|j| pearson(self.d.column(j), self.d.y()).map_or(0.0, f64::abs))
                .collect()
        })
    }

    /// The columns with the largest absolute marginal correlation.
    fn fallback(&self) -> Result<FeatureSubset> {
        let r = self.abs_pearson();
        let mut order: Vec<usize> = (0..self.d.p()).collect();
        order.sort_by(|&a, &b| r[b].total_cmp(&r[a]).then(a.cmp(&b)));
        log::debug!("screen selected no columns; keeping the top {FALLBACK_COLUMNS} by correlation");
        top_k(order, FALLBACK_COLUMNS, self.d.p())
    }

    fn nonempty(&self, keep: Vec<usize>) -> Result<FeatureSubset> {
        if keep.is_empty() {
            self.fallback()
        } else {
            FeatureSubset::new(keep, self.d.p())
        }
    }

    fn pearson_p(&self) -> Result<&[f64]> {
        if self.pearson_p.get().is_none() {
            let ps = (0..self.d.p())
                .map(|j| pearson_cor_test_pvalue(self.d.column(j), self.d.y()))
                .collect::<Result<Vec<_>>>()?;
            let _ = self.pearson_p.set(ps);
        }
        Ok(self.pearson_p.get().expect("initialized"))
    }

    fn spearman(&self) -> Result<&[(f64, f64)]> {
        if self.spearman.get().is_none() {
            let ry = mid_ranks(self.d.y());
            let mut out = Vec::with_capacity(self.d.p());
            for j in 0..self.d.p() {
                let rx = mid_ranks(self.d.column(j));
                let pv = pearson_cor_test_pvalue(&rx, &ry)?;
                let rho = pearson(&rx, &ry).map_or(0.0, f64::abs);
                out.push((pv, rho));
            }
            let _ = self.spearman.set(out);
        }
        Ok(self.spearman.get().expect("initialized"))
    }

    /// Node size of the importance forest.
    pub fn forest_node_size(&self) -> usize {
        match self.d.kind() {
            OutcomeKind::Continuous => 5,
            OutcomeKind::Binary => 1,
        }
    }

    fn forest(&self) -> Result<&FittedModel> {
        let cached = self.forest.get_or_init(|| {
            learners::fit_random_forest(self.d, self.forest_node_size(), FOREST_TREES, self.forest_seed)
                .map_err(|e| e.to_string())
        });
        cached.as_ref().map_err(|e| Error::InvalidData(format!("forest screen failed: {e}")))
    }

    /// The importance forest, if a screen has already grown it.
    pub fn grown_forest(&self) -> Option<&FittedModel> {
        self.forest.get().and_then(|r| r.as_ref().ok())
    }

    fn lasso_nonzero(&self) -> Result<&[usize]> {
        let cached = self.lasso.get_or_init(|| {
            learners::fit_lasso(self.d, LASSO_CV_FOLDS, seed::derive(self.seed, "lasso-screen"))
                .map(|m| match m.state() {
                    learners::ModelState::Lasso(l) => l.nonzero(),
                    _ => unreachable!("lasso fit returns a lasso model"),
                })
                .map_err(|e| e.to_string())
        });
        cached.as_deref().map_err(|e| Error::InvalidData(format!("lasso screen failed: {e}")))
    }

    pub fn fit(&self, spec: &ScreenSpec) -> Result<FeatureSubset> {
        spec.validate()?;
        let p = self.d.p();
        match *spec {
            ScreenSpec::AllVars => Ok(FeatureSubset::all(p)),
            ScreenSpec::UnivarCorP { p_threshold } => {
                let ps = self.pearson_p()?;
                self.nonempty((0..p).filter(|&j| ps[j] <= p_threshold).collect())
            }
            ScreenSpec::RankCorTopK { k } => {
                if k >= p {
                    return Ok(FeatureSubset::all(p));
                }
                let s = self.spearman()?;
                let mut order: Vec<usize> = (0..p).collect();
                order.sort_by(|&a, &b| {
                    s[a].0
                        .total_cmp(&s[b].0)
                        .then(s[b].1.total_cmp(&s[a].1))
                        .then(a.cmp(&b))
                });
                top_k(order, k, p)
            }
            ScreenSpec::RFImportanceTopK { k } => {
                if k >= p {
                    return Ok(FeatureSubset::all(p));
                }
                if self.d.n() < 10 {
                    return Err(Error::TooFewObservations(format!(
                        "forest screen needs at least 10 rows, got {}",
                        self.d.n()
                    )));
                }
                let imp = learners::rf_impurity_importance(self.forest()?)?;
                let mut order: Vec<usize> = (0..p).collect();
                order.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));
                top_k(order, k, p)
            }
            ScreenSpec::LassoNonzero => {
                let keep = self.lasso_nonzero()?.to_vec();
                self.nonempty(keep)
            }
        }
    }
}

/// Fits one screen on `d`. Only the forest and lasso screens consult `seed`.
pub fn fit_screen(d: &Dataset, spec: &ScreenSpec, seed: u64) -> Result<FeatureSubset> {
    ScreenContext::new(d, seed).fit(spec)
}
