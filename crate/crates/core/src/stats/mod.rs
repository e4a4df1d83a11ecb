//! Trend tests over ordered experimental conditions: one-way ANOVA,
//! Spearman rank correlation and an OLS slope t-test.

mod special;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use special::{f_sf, ln_gamma, reg_inc_beta, t_two_sided};

/// Largest sample for which Spearman p-values are enumerated exactly (8! permutations).
pub const EXACT_SPEARMAN_MAX_N: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("need at least {need} groups, got {got}")]
    TooFewGroups { need: usize, got: usize },
    #[error("group {0:?} has no samples")]
    EmptyGroup(String),
    #[error("duplicate level {0:?}")]
    DuplicateLevel(String),
    #[error("need more samples ({n}) than groups ({k})")]
    NoWithinDf { n: usize, k: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("x is constant")]
    ConstantX,
    #[error("non-finite input value")]
    NonFinite,
}

fn check_finite(values: &[f64]) -> Result<(), StatsError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Scores per ordered condition level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedScores {
    levels: Vec<String>,
    samples: Vec<Vec<f64>>,
}

impl GroupedScores {
    pub fn new(levels: Vec<String>, samples: Vec<Vec<f64>>) -> Result<Self, StatsError> {
        if levels.len() != samples.len() {
            return Err(StatsError::LengthMismatch(levels.len(), samples.len()));
        }
        if levels.len() < 2 {
            return Err(StatsError::TooFewGroups { need: 2, got: levels.len() });
        }
        for (i, (l, s)) in levels.iter().zip(&samples).enumerate() {
            if s.is_empty() {
                return Err(StatsError::EmptyGroup(l.clone()));
            }
            check_finite(s)?;
            if levels[..i].contains(l) {
                return Err(StatsError::DuplicateLevel(l.clone()));
            }
        }
        Ok(Self { levels, samples })
    }

    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn means(&self) -> Vec<f64> {
        self.samples.iter().map(|s| mean(s)).collect()
    }

    /// Numeric value of each level ("20%" → 20) when every label has one,
    /// otherwise the ordinal position.
    pub fn level_values(&self) -> Vec<f64> {
        let parsed: Option<Vec<f64>> = self
            .levels
            .iter()
            .map(|l| l.trim().trim_end_matches('%').trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        parsed.unwrap_or_else(|| (0..self.levels.len()).map(|i| i as f64).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anova {
    /// `+∞` when groups differ but have no within-group spread.
    pub f: f64,
    pub p: f64,
    pub df_between: usize,
    pub df_within: usize,
}

pub fn anova_oneway(groups: &GroupedScores) -> Result<Anova, StatsError> {
    let k = groups.samples.len();
    let n: usize = groups.samples.iter().map(Vec::len).sum();
    if n <= k {
        return Err(StatsError::NoWithinDf { n, k });
    }
    let grand = groups.samples.iter().flatten().sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for s in &groups.samples {
        let m = mean(s);
        ssb += s.len() as f64 * (m - grand).powi(2);
        ssw += s.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let (df_between, df_within) = (k - 1, n - k);
    // relative tolerance so that rounding noise in identical groups reads as zero
    let scale = groups.samples.iter().flatten().map(|v| (v - grand).powi(2)).sum::<f64>().max(grand * grand) * 1e-24;
    let (f, p) = match (ssb <= scale, ssw <= scale) {
        (true, _) => (0.0, 1.0),
        (false, true) => (f64::INFINITY, 0.0),
        (false, false) => {
            let f = (ssb / df_between as f64) / (ssw / df_within as f64);
            (f, f_sf(f, df_between as f64, df_within as f64)?)
        }
    };
    Ok(Anova { f, p, df_between, df_within })
}

/// Mid-ranks (1-based), ties sharing their average rank.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    /// False when either input is constant; `rho` is then 0 and both p-values 1.
    pub defined: bool,
    pub rho: f64,
    /// Two-sided permutation p-value; `None` above [`EXACT_SPEARMAN_MAX_N`].
    pub p_exact: Option<f64>,
    /// Two-sided p from `t = rho·√((n−2)/(1−rho²))` with `n−2` df.
    pub p_asymptotic: f64,
}

fn for_each_permutation(items: &mut [f64], k: usize, visit: &mut impl FnMut(&[f64])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        for_each_permutation(items, k + 1, visit);
        items.swap(k, i);
    }
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Spearman, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewPoints { need: 3, got: x.len() });
    }
    check_finite(x)?;
    check_finite(y)?;
    let (rx, ry) = (mid_ranks(x), mid_ranks(y));
    let Some(rho) = pearson(&rx, &ry) else {
        return Ok(Spearman { defined: false, rho: 0.0, p_exact: Some(1.0), p_asymptotic: 1.0 });
    };
    let n = x.len();
    let p_exact = (n <= EXACT_SPEARMAN_MAX_N).then(|| {
        let (mut hits, mut total) = (0u64, 0u64);
        let mut perm = ry.clone();
        for_each_permutation(&mut perm, 0, &mut |p| {
            total += 1;
            if pearson(&rx, p).is_some_and(|r| r.abs() >= rho.abs() - 1e-12) {
                hits += 1;
            }
        });
        hits as f64 / total as f64
    });
    let df = (n - 2) as f64;
    let p_asymptotic = if rho.abs() >= 1.0 { 0.0 } else { t_two_sided(rho * (df / (1.0 - rho * rho)).sqrt(), df)? };
    Ok(Spearman { defined: true, rho, p_exact, p_asymptotic })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ols {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    /// Two-sided p for slope = 0 with `n−2` df.
    pub p: f64,
    pub df: usize,
}

pub fn ols_trend(x: &[f64], y: &[f64]) -> Result<Ols, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewPoints { need: 3, got: x.len() });
    }
    check_finite(x)?;
    check_finite(y)?;
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(StatsError::ConstantX);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let df = x.len() - 2;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let stderr = (sse / df as f64 / sxx).sqrt();
    let p = if slope == 0.0 || syy == 0.0 {
        1.0
    } else if sse <= syy * 1e-24 {
        0.0
    } else {
        t_two_sided(slope / stderr, df as f64)?
    };
    Ok(Ols { slope: if syy == 0.0 { 0.0 } else { slope }, intercept, stderr, p, df })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OlsMode {
    /// Regress level means on level values.
    #[default]
    PerMean,
    /// Regress every sample on its level value.
    PerSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrendConfig {
    pub alpha: f64,
    pub ols: OlsMode,
    /// Require `f_p < alpha` for the remark in addition to monotone means.
    pub remark_requires_significance: bool,
}

impl Default for TrendConfig {
    fn default() -> Self {
        Self { alpha: 0.05, ols: OlsMode::PerMean, remark_requires_significance: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub levels: Vec<String>,
    pub level_means: Vec<f64>,
    pub level_counts: Vec<usize>,
    /// `+inf` when the levels differ but have no within-level spread.
    #[serde(with = "extended_f64")]
    pub f_stat: f64,
    pub f_p: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub spearman_rho: f64,
    pub spearman_defined: bool,
    pub spearman_p_exact: Option<f64>,
    pub spearman_p_asymptotic: f64,
    pub ols_mode: OlsMode,
    pub ols_slope: f64,
    pub ols_p: f64,
    pub monotone_pass: bool,
    pub remark: bool,
}

/// All trend statistics for one model. Spearman runs over (level index,
/// level mean); the level means are monotone iff that rho is exactly 1.
pub fn trend_report(groups: &GroupedScores, config: &TrendConfig) -> Result<TrendReport, StatsError> {
    let anova = anova_oneway(groups)?;
    let means = groups.means();
    let index: Vec<f64> = (0..means.len()).map(|i| i as f64).collect();
    let sp = if means.len() >= 3 {
        spearman(&index, &means)?
    } else {
        // two levels: the sign of the difference is the whole story
        let d = means[1] - means[0];
        Spearman { defined: d != 0.0, rho: d.signum() * (d != 0.0) as u8 as f64, p_exact: Some(1.0), p_asymptotic: 1.0 }
    };
    let xs = groups.level_values();
    let ols = match config.ols {
        OlsMode::PerMean if means.len() >= 3 => ols_trend(&xs, &means)?,
        _ => {
            let (x, y): (Vec<f64>, Vec<f64>) =
                groups.samples.iter().zip(&xs).flat_map(|(s, &x)| s.iter().map(move |&v| (x, v))).unzip();
            ols_trend(&x, &y)?
        }
    };
    let ols_mode = if means.len() >= 3 { config.ols } else { OlsMode::PerSample };
    let monotone_pass = sp.defined && sp.rho == 1.0;
    let significant = anova.p < config.alpha;
    Ok(TrendReport {
        levels: groups.levels.clone(),
        level_means: means,
        level_counts: groups.samples.iter().map(Vec::len).collect(),
        f_stat: anova.f,
        f_p: anova.p,
        df_between: anova.df_between,
        df_within: anova.df_within,
        spearman_rho: sp.rho,
        spearman_defined: sp.defined,
        spearman_p_exact: sp.p_exact,
        spearman_p_asymptotic: sp.p_asymptotic,
        ols_mode,
        ols_slope: ols.slope,
        ols_p: ols.p,
        monotone_pass,
        remark: monotone_pass && (significant || !config.remark_requires_significance),
    })
}

/// JSON has no infinities: non-finite values travel as the strings `"inf"`, `"-inf"`, `"nan"`.
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string().to_lowercase())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}
