//! The forecaster families: lasso, 24 hourly AR, expert AR, univariate AR
//! and PCA-VAR, each with and without weekday effects. Every family fits on
//! a window of days and forecasts the 24 prices of the following day.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataio::{demean, weekday_of, HourMeans, PricePanel, HOURS, WEEKDAY_NAMES};
use crate::error::{ModelError, Result};
use crate::estim::{fit_ar_yule_walker, multivar_yule_walker, ols, pca_fit, ArFit, PcaFactorization, VarFit};
use crate::lasso::{expand, fit_lasso_path, standardize, unstandardize, GridSpec, LassoOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Lasso,
    HourlyAr,
    Expert,
    UnivariateAr,
    Pca,
}

impl ModelKind {
    fn base_name(self) -> &'static str {
        match self {
            ModelKind::Lasso => "lasso",
            ModelKind::HourlyAr => "24d.AR",
            ModelKind::Expert => "exp.AR",
            ModelKind::UnivariateAr => "AR(p)",
            ModelKind::Pca => "PCA*",
        }
    }
}

/// A model kind plus whether it carries weekday effects (`-wd`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Family {
    pub kind: ModelKind,
    pub weekdays: bool,
}

impl Family {
    pub const fn new(kind: ModelKind, weekdays: bool) -> Self {
        Self { kind, weekdays }
    }

    /// All ten families in reporting order.
    pub fn all() -> Vec<Family> {
        [ModelKind::Lasso, ModelKind::HourlyAr, ModelKind::Expert, ModelKind::UnivariateAr, ModelKind::Pca]
            .into_iter()
            .flat_map(|k| [Family::new(k, false), Family::new(k, true)])
            .collect()
    }

    pub fn name(&self) -> String {
        let base = self.kind.base_name();
        if self.weekdays {
            format!("{base}-wd")
        } else {
            base.to_string()
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Family {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (base, weekdays) = match s.strip_suffix("-wd") {
            Some(base) => (base, true),
            None => (s, false),
        };
        let kind = match base {
            "lasso" => ModelKind::Lasso,
            "24d.AR" => ModelKind::HourlyAr,
            "exp.AR" => ModelKind::Expert,
            "AR(p)" => ModelKind::UnivariateAr,
            "PCA*" | "PCA" => ModelKind::Pca,
            _ => return Err(ModelError::Invalid(format!("unknown model family {s:?}"))),
        };
        Ok(Family::new(kind, weekdays))
    }
}

impl Serialize for Family {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Family {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A regressor: a lagged price `Y_{d-lag, hour}` or a weekday dummy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegressorLabel {
    Lag { hour: usize, lag: usize },
    Weekday(usize),
}

impl fmt::Display for RegressorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegressorLabel::Lag { hour, lag } => write!(f, "{hour}@{lag}"),
            RegressorLabel::Weekday(k) => f.write_str(WEEKDAY_NAMES[*k]),
        }
    }
}

impl FromStr for RegressorLabel {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(k) = WEEKDAY_NAMES.iter().position(|n| *n == s) {
            return Ok(RegressorLabel::Weekday(k));
        }
        let bad = || ModelError::Invalid(format!("bad regressor label {s:?}"));
        let (hour, lag) = s.split_once('@').ok_or_else(bad)?;
        let hour: usize = hour.parse().map_err(|_| bad())?;
        let lag: usize = lag.parse().map_err(|_| bad())?;
        if hour >= HOURS || lag == 0 {
            return Err(bad());
        }
        Ok(RegressorLabel::Lag { hour, lag })
    }
}

impl Serialize for RegressorLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RegressorLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl RegressorLabel {
    /// Value of this regressor for target row `target` given earlier `rows`.
    fn value(&self, rows: &[[f64; HOURS]], target: usize, weekday: usize) -> f64 {
        match *self {
            RegressorLabel::Lag { hour, lag } => rows[target - lag][hour],
            RegressorLabel::Weekday(k) => f64::from(u8::from(weekday == k)),
        }
    }

    fn lag_days(&self) -> usize {
        match *self {
            RegressorLabel::Lag { lag, .. } => lag,
            RegressorLabel::Weekday(_) => 0,
        }
    }
}

/// Admissible day lags per (target hour, source hour): `1..=same_hour` when
/// they coincide and `1..=cross_hour` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagIndexSet {
    pub same_hour: usize,
    pub cross_hour: usize,
}

impl Default for LagIndexSet {
    fn default() -> Self {
        Self { same_hour: 36, cross_hour: 8 }
    }
}

impl LagIndexSet {
    pub fn lags(&self, h: usize, l: usize) -> RangeInclusive<usize> {
        if h == l {
            1..=self.same_hour
        } else {
            1..=self.cross_hour
        }
    }

    pub fn max_lag(&self) -> usize {
        self.same_hour.max(self.cross_hour)
    }

    /// Lag labels for target hour `h` in design column order.
    pub fn labels(&self, h: usize) -> Vec<RegressorLabel> {
        let same = self.lags(h, h).map(move |lag| RegressorLabel::Lag { hour: h, lag });
        let cross = (0..HOURS)
            .filter(move |&l| l != h)
            .flat_map(move |l| self.lags(h, l).map(move |lag| RegressorLabel::Lag { hour: l, lag }));
        same.chain(cross).collect()
    }
}

/// Response, regressors and column labels of one hour's regression.
#[derive(Debug, Clone)]
pub struct HourlyDesign {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub labels: Vec<RegressorLabel>,
}

/// Regression of `Y_{d,h}` on its admissible lags for `d = max_lag..D`
/// (0-based), plus Sun..Sat dummies when `weekdays` gives each row's weekday.
pub fn build_design(
    centered: &[[f64; HOURS]],
    h: usize,
    idx: &LagIndexSet,
    weekdays: Option<&[usize]>,
) -> Result<HourlyDesign> {
    let d = centered.len();
    let start = idx.max_lag();
    if d <= start {
        return Err(ModelError::Insufficient(format!("{d} days for lags up to {start}")));
    }
    if let Some(w) = weekdays {
        if w.len() != d {
            return Err(ModelError::Invalid("weekday list does not match rows".into()));
        }
    }
    let mut labels = idx.labels(h);
    if weekdays.is_some() {
        labels.extend((0..7).map(RegressorLabel::Weekday));
    }
    let n = d - start;
    let x = DMatrix::from_fn(n, labels.len(), |i, j| {
        let target = start + i;
        labels[j].value(centered, target, weekdays.map_or(0, |w| w[target]))
    });
    let y = DVector::from_fn(n, |i, _| centered[start + i][h]);
    Ok(HourlyDesign { y, x, labels })
}

/// Settings shared by all families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub lags: LagIndexSet,
    pub grid: GridSpec,
    pub lasso: LassoOptions,
    pub pmax_hourly: usize,
    pub pmax_univariate: usize,
    pub pmax_var: usize,
    /// Number of principal components for PCA fits.
    pub pca_k: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            lags: LagIndexSet::default(),
            grid: GridSpec::default(),
            lasso: LassoOptions::default(),
            pmax_hourly: 50,
            pmax_univariate: 700,
            pmax_var: 50,
            pca_k: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub label: RegressorLabel,
    /// Natural units.
    pub value: f64,
    /// Standardized-scale value, for lasso fits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardized: Option<f64>,
}

/// `P̂_{d,h} = intercept + Σ value · regressor`, regressors on raw prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyRegression {
    pub h: usize,
    pub intercept: f64,
    /// Nonzero coefficients only.
    pub coefficients: Vec<Coefficient>,
    /// Number of candidate regressors before selection.
    pub candidates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl HourlyRegression {
    /// Builds the intercept form of `P̂_h = μ_h + Σ β (P_{lag} - μ_l) + Σ ψ W`.
    pub fn from_centered(h: usize, mu: &HourMeans, coefficients: Vec<Coefficient>, candidates: usize) -> Self {
        let shift: f64 = coefficients
            .iter()
            .map(|c| match c.label {
                RegressorLabel::Lag { hour, .. } => c.value * mu.get(hour),
                RegressorLabel::Weekday(_) => 0.0,
            })
            .sum();
        Self { h, intercept: mu.get(h) - shift, coefficients, candidates, lambda: None }
    }

    fn predict(&self, rows: &[[f64; HOURS]], weekday: usize) -> f64 {
        let target = rows.len();
        self.intercept + self.coefficients.iter().map(|c| c.value * c.label.value(rows, target, weekday)).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyArModel {
    pub h: usize,
    /// AR fit of the (weekday-adjusted) series of hour `h`.
    pub ar: ArFit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weekday_levels: Option<[f64; 7]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum ModelBody {
    /// Lasso and expert families.
    Regression { hours: Vec<HourlyRegression> },
    HourlyAr { hours: Vec<HourlyArModel> },
    UnivariateAr {
        ar: ArFit,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weekday_levels: Option<[f64; 7]>,
    },
    Pca {
        k: usize,
        factorization: PcaFactorization,
        var: VarFit,
        /// Per-weekday score levels, `[weekday][component]`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weekday_levels: Option<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedForecaster {
    pub family: Family,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub mu: HourMeans,
    pub body: ModelBody,
}

/// Wraps an error with the window end and hour it occurred at.
fn at_hour(family: Family, day: NaiveDate, hour: usize) -> impl Fn(ModelError) -> ModelError {
    move |e| match e {
        e @ ModelError::Fit { .. } => e,
        e => ModelError::Fit { day, family: family.name(), hour: Some(hour), source: Box::new(e) },
    }
}

fn window_bounds(window: &PricePanel) -> Result<(NaiveDate, NaiveDate)> {
    match (window.first_date(), window.last_date()) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(ModelError::Insufficient("empty window".into())),
    }
}

fn weekdays_of(window: &PricePanel) -> Vec<usize> {
    window.dates().iter().map(|&d| weekday_of(d)).collect()
}

/// Least-squares levels on the seven weekday dummies, i.e. per-weekday means.
pub fn weekday_levels(values: &[f64], weekdays: &[usize]) -> Result<[f64; 7]> {
    let mut sum = [0.0; 7];
    let mut count = [0usize; 7];
    for (&v, &w) in values.iter().zip(weekdays) {
        sum[w] += v;
        count[w] += 1;
    }
    if let Some(column) = count.iter().position(|&c| c == 0) {
        return Err(ModelError::RankDeficient { column });
    }
    Ok(std::array::from_fn(|k| sum[k] / count[k] as f64))
}

pub fn fit(family: Family, window: &PricePanel, cfg: &ModelConfig) -> Result<FittedForecaster> {
    match family.kind {
        ModelKind::Lasso => fit_lasso_model(window, family.weekdays, cfg),
        ModelKind::HourlyAr => fit_24ar(window, family.weekdays, cfg),
        ModelKind::Expert => fit_expert(window, family.weekdays),
        ModelKind::UnivariateAr => fit_univariate_ar(window, family.weekdays, cfg),
        ModelKind::Pca => fit_pca_var(window, cfg.pca_k, family.weekdays, cfg),
    }
}

pub fn fit_lasso_model(window: &PricePanel, with_weekdays: bool, cfg: &ModelConfig) -> Result<FittedForecaster> {
    let family = Family::new(ModelKind::Lasso, with_weekdays);
    let (start, end) = window_bounds(window)?;
    let (mu, centered) = demean(window, 0..window.len())?;
    let weekdays = weekdays_of(window);
    let grid = cfg.grid.lambdas();
    let hours = (0..HOURS)
        .into_par_iter()
        .map(|h| {
            let mut design = build_design(&centered, h, &cfg.lags, with_weekdays.then_some(weekdays.as_slice()))?;
            let dummy_means = center_weekday_columns(&mut design);
            let prob = standardize(&design.x, &design.y)?;
            let path = fit_lasso_path(&prob, &grid, &cfg.lasso)?;
            let natural = unstandardize(&prob, path.selected_beta());
            let tilde = expand(&prob, path.selected_beta());
            let coefficients = design
                .labels
                .iter()
                .zip(natural.iter().zip(&tilde))
                .filter(|(_, (v, _))| **v != 0.0)
                .map(|(&label, (&value, &std))| Coefficient { label, value, standardized: Some(std) })
                .collect();
            let mut reg = HourlyRegression::from_centered(h, &mu, coefficients, design.labels.len());
            reg.intercept -= reg
                .coefficients
                .iter()
                .filter_map(|c| match c.label {
                    RegressorLabel::Weekday(k) => Some(c.value * dummy_means[k]),
                    RegressorLabel::Lag { .. } => None,
                })
                .sum::<f64>();
            reg.lambda = Some(path.selected_lambda());
            Ok(reg)
        })
        .enumerate()
        .map(|(h, r): (usize, Result<HourlyRegression>)| r.map_err(at_hour(family, end, h)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FittedForecaster { family, window_start: start, window_end: end, mu, body: ModelBody::Regression { hours } })
}

/// Subtracts the column mean from every weekday dummy so that a single
/// dummy can carry a weekday level against the demeaned response. Returns
/// the removed means, indexed by weekday.
fn center_weekday_columns(design: &mut HourlyDesign) -> [f64; 7] {
    let mut means = [0.0; 7];
    for (j, label) in design.labels.iter().enumerate() {
        if let RegressorLabel::Weekday(k) = *label {
            let mut col = design.x.column_mut(j);
            means[k] = col.mean();
            col.add_scalar_mut(-means[k]);
        }
    }
    means
}

pub fn fit_24ar(window: &PricePanel, with_weekdays: bool, cfg: &ModelConfig) -> Result<FittedForecaster> {
    let family = Family::new(ModelKind::HourlyAr, with_weekdays);
    let (start, end) = window_bounds(window)?;
    if window.len() <= cfg.pmax_hourly + 1 {
        return Err(ModelError::Insufficient(format!(
            "{} days for maximal order {}",
            window.len(),
            cfg.pmax_hourly
        )));
    }
    let (mu, _) = demean(window, 0..window.len())?;
    let weekdays = weekdays_of(window);
    let hours = (0..HOURS)
        .into_par_iter()
        .map(|h| -> Result<HourlyArModel> {
            let series = window.column(h);
            let (resid, levels) = remove_weekday_levels(&series, &weekdays, with_weekdays)?;
            let ar = fit_ar_yule_walker(&resid, cfg.pmax_hourly)?;
            Ok(HourlyArModel { h, ar, weekday_levels: levels })
        })
        .enumerate()
        .map(|(h, r)| r.map_err(at_hour(family, end, h)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FittedForecaster { family, window_start: start, window_end: end, mu, body: ModelBody::HourlyAr { hours } })
}

fn remove_weekday_levels(
    series: &[f64],
    weekdays: &[usize],
    with_weekdays: bool,
) -> Result<(Vec<f64>, Option<[f64; 7]>)> {
    if !with_weekdays {
        return Ok((series.to_vec(), None));
    }
    let levels = weekday_levels(series, weekdays)?;
    let resid = series.iter().zip(weekdays).map(|(v, &w)| v - levels[w]).collect();
    Ok((resid, Some(levels)))
}

/// Expert lags: the same hour one, two and seven days back.
const EXPERT_LAGS: [usize; 3] = [1, 2, 7];
/// Expert weekday dummies: Sunday, Monday, Saturday.
const EXPERT_WEEKDAYS: [usize; 3] = [0, 1, 6];

pub fn fit_expert(window: &PricePanel, with_weekdays: bool) -> Result<FittedForecaster> {
    let family = Family::new(ModelKind::Expert, with_weekdays);
    let (start, end) = window_bounds(window)?;
    let max_lag = EXPERT_LAGS[2];
    if window.len() <= max_lag {
        return Err(ModelError::Insufficient(format!("{} days for lag {max_lag}", window.len())));
    }
    let (mu, _) = demean(window, 0..window.len())?;
    let weekdays = weekdays_of(window);
    let rows = window.rows();
    let hours = (0..HOURS)
        .into_par_iter()
        .map(|h| -> Result<HourlyRegression> {
            let mut labels: Vec<RegressorLabel> =
                EXPERT_LAGS.iter().map(|&lag| RegressorLabel::Lag { hour: h, lag }).collect();
            if with_weekdays {
                labels.extend(EXPERT_WEEKDAYS.iter().map(|&k| RegressorLabel::Weekday(k)));
            }
            let n = rows.len() - max_lag;
            let x = DMatrix::from_fn(n, labels.len() + 1, |i, j| {
                let target = max_lag + i;
                if j == 0 {
                    1.0
                } else {
                    labels[j - 1].value(rows, target, weekdays[target])
                }
            });
            let y = DVector::from_fn(n, |i, _| rows[max_lag + i][h]);
            let beta = ols(&x, &y)?;
            let coefficients = labels
                .iter()
                .zip(beta.iter().skip(1))
                .map(|(&label, &value)| Coefficient { label, value, standardized: None })
                .collect();
            Ok(HourlyRegression { h, intercept: beta[0], coefficients, candidates: labels.len(), lambda: None })
        })
        .enumerate()
        .map(|(h, r)| r.map_err(at_hour(family, end, h)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FittedForecaster { family, window_start: start, window_end: end, mu, body: ModelBody::Regression { hours } })
}

/// Univariate AR on the hourly series `P_t`, `t = 24 d + h`. The weekday
/// variant first removes one level per weekday shared by all 24 hours.
pub fn fit_univariate_ar(window: &PricePanel, with_weekdays: bool, cfg: &ModelConfig) -> Result<FittedForecaster> {
    let family = Family::new(ModelKind::UnivariateAr, with_weekdays);
    let (start, end) = window_bounds(window)?;
    let series = window.hourly();
    if series.len() <= cfg.pmax_univariate {
        return Err(ModelError::Insufficient(format!(
            "{} hourly values for maximal order {}",
            series.len(),
            cfg.pmax_univariate
        )));
    }
    let (mu, _) = demean(window, 0..window.len())?;
    let hour_weekdays: Vec<usize> = window.dates().iter().flat_map(|&d| [weekday_of(d); HOURS]).collect();
    let (resid, weekday_levels) = remove_weekday_levels(&series, &hour_weekdays, with_weekdays)?;
    let ar = fit_ar_yule_walker(&resid, cfg.pmax_univariate)?;
    Ok(FittedForecaster {
        family,
        window_start: start,
        window_end: end,
        mu,
        body: ModelBody::UnivariateAr { ar, weekday_levels },
    })
}

/// PCA of the window, a VAR on the first `k` score series (after removing
/// per-weekday score levels in the weekday variant).
pub fn fit_pca_var(window: &PricePanel, k: usize, with_weekdays: bool, cfg: &ModelConfig) -> Result<FittedForecaster> {
    let family = Family::new(ModelKind::Pca, with_weekdays);
    let (start, end) = window_bounds(window)?;
    if k == 0 || k > HOURS {
        return Err(ModelError::Invalid(format!("number of factors {k} outside 1..={HOURS}")));
    }
    let (mu, _) = demean(window, 0..window.len())?;
    let factorization = pca_fit(window.rows())?;
    let mut scores = factorization.scores(window.rows(), k)?;
    let weekdays = weekdays_of(window);
    let weekday_levels = if with_weekdays {
        let levels: Vec<[f64; 7]> = (0..k)
            .map(|j| weekday_levels(&scores.iter().map(|s| s[j]).collect::<Vec<_>>(), &weekdays))
            .collect::<Result<_>>()?;
        for (row, &w) in scores.iter_mut().zip(&weekdays) {
            for j in 0..k {
                row[j] -= levels[j][w];
            }
        }
        Some((0..7).map(|w| (0..k).map(|j| levels[j][w]).collect()).collect())
    } else {
        None
    };
    let d = scores.len();
    let p_max = cfg.pmax_var.min((d - 1) / k);
    let var = multivar_yule_walker(&scores, p_max)?;
    Ok(FittedForecaster {
        family,
        window_start: start,
        window_end: end,
        mu,
        body: ModelBody::Pca { k, factorization, var, weekday_levels },
    })
}

impl FittedForecaster {
    /// Days of history needed to forecast the next day.
    pub fn required_history(&self) -> usize {
        match &self.body {
            ModelBody::Regression { hours } => hours
                .iter()
                .flat_map(|r| r.coefficients.iter().map(|c| c.label.lag_days()))
                .max()
                .unwrap_or(0),
            ModelBody::HourlyAr { hours } => hours.iter().map(|m| m.ar.order).max().unwrap_or(0),
            ModelBody::UnivariateAr { ar, .. } => ar.order.div_ceil(HOURS),
            ModelBody::Pca { var, .. } => var.order,
        }
    }

    /// Forecast of the 24 prices of the day after the last row of `history`.
    pub fn forecast_day(&self, history: &PricePanel) -> Result<[f64; HOURS]> {
        let need = self.required_history();
        if history.len() < need.max(1) {
            return Err(ModelError::Insufficient(format!("{} days of history, {need} required", history.len())));
        }
        let last = history.last_date().expect("non-empty history");
        let target = last.succ_opt().ok_or_else(|| ModelError::Invalid("date overflow".into()))?;
        let target_weekday = weekday_of(target);
        let rows = history.rows();
        let mut out = [0.0; HOURS];
        match &self.body {
            ModelBody::Regression { hours } => {
                for reg in hours {
                    out[reg.h] = reg.predict(rows, target_weekday);
                }
            }
            ModelBody::HourlyAr { hours } => {
                let tail = history.len() - need;
                for m in hours {
                    let resid: Vec<f64> = (tail..history.len())
                        .map(|d| rows[d][m.h] - m.weekday_levels.map_or(0.0, |l| l[history.weekday(d)]))
                        .collect();
                    out[m.h] = m.ar.predict(&resid) + m.weekday_levels.map_or(0.0, |l| l[target_weekday]);
                }
            }
            ModelBody::UnivariateAr { ar, weekday_levels } => {
                let tail = history.len() - need;
                let mut series: Vec<f64> = (tail..history.len())
                    .flat_map(|d| {
                        let level = weekday_levels.map_or(0.0, |l| l[history.weekday(d)]);
                        rows[d].iter().map(move |v| v - level)
                    })
                    .collect();
                let level = weekday_levels.map_or(0.0, |l| l[target_weekday]);
                for slot in out.iter_mut() {
                    let next = ar.predict(&series);
                    series.push(next);
                    *slot = next + level;
                }
            }
            ModelBody::Pca { k, factorization, var, weekday_levels } => {
                let level = |w: usize| weekday_levels.as_ref().map(|l| l[w].clone());
                let tail = history.len() - need;
                let scores: Vec<Vec<f64>> = (tail..history.len())
                    .map(|d| {
                        let mut s = factorization.score_row(&rows[d], *k);
                        if let Some(l) = level(history.weekday(d)) {
                            s.iter_mut().zip(&l).for_each(|(a, b)| *a -= b);
                        }
                        s
                    })
                    .collect();
                let mut next = var.predict(&scores);
                if let Some(l) = level(target_weekday) {
                    next.iter_mut().zip(&l).for_each(|(a, b)| *a += b);
                }
                out = factorization.reconstruct(&next);
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Invalid("non-finite forecast".into()));
        }
        Ok(out)
    }

    /// Labeled coefficients per hour for reporting. Autoregressive families
    /// report `h@k` for `φ_k` and the weekday levels under weekday labels.
    pub fn hour_coefficients(&self) -> Vec<HourCoefficients> {
        match &self.body {
            ModelBody::Regression { hours } => hours
                .iter()
                .map(|r| HourCoefficients {
                    h: r.h,
                    coefficients: r.coefficients.iter().map(|c| LabeledValue { label: c.label, value: c.value }).collect(),
                })
                .collect(),
            ModelBody::HourlyAr { hours } => hours
                .iter()
                .map(|m| HourCoefficients { h: m.h, coefficients: ar_labels(m.h, &m.ar, m.weekday_levels) })
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Standardized coefficients of one hour's lasso model, over all candidate
    /// regressors (zeros omitted). `None` for other families.
    pub fn standardized(&self, h: usize) -> Option<Vec<(RegressorLabel, f64)>> {
        let ModelBody::Regression { hours } = &self.body else {
            return None;
        };
        let reg = hours.iter().find(|r| r.h == h)?;
        reg.coefficients.iter().map(|c| c.standardized.map(|s| (c.label, s))).collect()
    }

    pub fn to_json(&self) -> String {
        let dump = ModelDump {
            family: self.family,
            window_start: self.window_start,
            window_end: self.window_end,
            mu: self.mu.0.to_vec(),
            hours: self.hour_coefficients(),
            extras: self.body.clone(),
        };
        serde_json::to_string_pretty(&dump).expect("model dump serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dump: ModelDump =
            serde_json::from_str(text).map_err(|e| ModelError::Invalid(format!("bad model dump: {e}")))?;
        let mu: [f64; HOURS] =
            dump.mu.try_into().map_err(|_| ModelError::Invalid("model dump mu must have 24 entries".into()))?;
        Ok(Self {
            family: dump.family,
            window_start: dump.window_start,
            window_end: dump.window_end,
            mu: HourMeans(mu),
            body: dump.extras,
        })
    }
}

fn ar_labels(h: usize, ar: &ArFit, levels: Option<[f64; 7]>) -> Vec<LabeledValue> {
    let lags = ar.phi.iter().enumerate().map(|(k, &value)| LabeledValue {
        label: RegressorLabel::Lag { hour: h, lag: k + 1 },
        value,
    });
    let wd = levels
        .into_iter()
        .flat_map(|l| (0..7).map(move |k| LabeledValue { label: RegressorLabel::Weekday(k), value: l[k] }));
    lags.chain(wd).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledValue {
    pub label: RegressorLabel,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourCoefficients {
    pub h: usize,
    pub coefficients: Vec<LabeledValue>,
}

/// On-disk model format: the labeled per-hour view plus the family-specific
/// parameters needed to forecast.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelDump {
    family: Family,
    window_start: NaiveDate,
    window_end: NaiveDate,
    mu: Vec<f64>,
    hours: Vec<HourCoefficients>,
    extras: ModelBody,
}
