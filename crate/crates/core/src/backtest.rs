//! Rolling-window evaluation, error metrics, day-row bootstrap and the
//! synthetic panel generator used for validation.

use std::ops::RangeInclusive;
use std::sync::atomic::{AtomicUsize, Ordering};

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{weekday_of, PricePanel, HOURS};
use crate::error::{ModelError, Result};
use crate::models::{fit, Family, LagIndexSet, ModelConfig, ModelKind, RegressorLabel};

/// Progress callback: `(family, completed days, total days)` of one backtest run.
pub type Progress<'a> = &'a (dyn Fn(&str, usize, usize) + Sync);

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    pub window: usize,
    pub families: Vec<Family>,
    pub bootstrap: usize,
    pub seed: u64,
    pub model: ModelConfig,
    /// Candidate numbers of PCA factors.
    pub pca_k: RangeInclusive<usize>,
    /// Refit the models every this many days; forecasts in between reuse the
    /// last fit with updated history.
    pub refit_every: usize,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            window: 730,
            families: Family::all(),
            bootstrap: 10_000,
            seed: 0,
            model: ModelConfig::default(),
            pca_k: 2..=12,
            refit_every: 1,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        let min_window = self.model.lags.max_lag() + 1;
        if self.window < min_window {
            return Err(ModelError::Invalid(format!("window {} shorter than {min_window} days", self.window)));
        }
        if self.bootstrap == 0 {
            return Err(ModelError::Invalid("bootstrap sample size must be at least 1".into()));
        }
        if self.refit_every == 0 {
            return Err(ModelError::Invalid("refit stride must be at least 1".into()));
        }
        if self.pca_k.is_empty() || *self.pca_k.start() == 0 || *self.pca_k.end() > HOURS {
            return Err(ModelError::Invalid(format!("PCA factor range {:?} outside 1..={HOURS}", self.pca_k)));
        }
        Ok(())
    }
}

/// Out-of-sample forecasts aligned with realized prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastMatrix {
    pub dates: Vec<NaiveDate>,
    pub forecasts: Vec<[f64; HOURS]>,
    pub actuals: Vec<[f64; HOURS]>,
}

impl ForecastMatrix {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Realized minus forecast, one row per day.
    pub fn errors(&self) -> Vec<[f64; HOURS]> {
        self.actuals
            .iter()
            .zip(&self.forecasts)
            .map(|(a, f)| std::array::from_fn(|h| a[h] - f[h]))
            .collect()
    }
}

/// Forecasts of one family with a fixed model configuration over every day
/// after the first `cfg.window` days.
pub fn rolling_backtest(
    panel: &PricePanel,
    family: Family,
    cfg: &BacktestConfig,
    progress: Option<Progress<'_>>,
) -> Result<ForecastMatrix> {
    cfg.validate()?;
    let d = cfg.window;
    if panel.len() <= d {
        return Err(ModelError::Insufficient(format!("panel of {} days needs more than the window {d}", panel.len())));
    }
    let n_out = panel.len() - d;
    let done = AtomicUsize::new(0);
    let name = family.name();
    let blocks: Vec<usize> = (0..n_out).step_by(cfg.refit_every).collect();
    let rows = blocks
        .par_iter()
        .map(|&first| -> Result<Vec<[f64; HOURS]>> {
            let target = panel.dates()[first + d];
            let context = |e: ModelError| match e {
                ModelError::Fit { family, hour, source, .. } => ModelError::Fit { day: target, family, hour, source },
                e => ModelError::Fit { day: target, family: name.clone(), hour: None, source: Box::new(e) },
            };
            let model = fit(family, &panel.slice(first..first + d), &cfg.model).map_err(context)?;
            let last = (first + cfg.refit_every).min(n_out);
            let mut out = Vec::with_capacity(last - first);
            for n in first..last {
                out.push(model.forecast_day(&panel.slice(n..n + d)).map_err(context)?);
                let finished = done.fetch_add(1, Ordering::Relaxed) + 1;
                if let Some(report) = progress {
                    report(&name, finished, n_out);
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForecastMatrix {
        dates: panel.dates()[d..].to_vec(),
        forecasts: rows.into_iter().flatten().collect(),
        actuals: panel.rows()[d..].to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaSelection {
    pub k: usize,
    pub scores: Vec<KScore>,
    pub matrix: ForecastMatrix,
}

/// Backtests every candidate number of factors and keeps the one with the
/// smallest overall MAE, ties going to fewer factors.
pub fn select_pca_k(
    panel: &PricePanel,
    with_weekdays: bool,
    cfg: &BacktestConfig,
    progress: Option<Progress<'_>>,
) -> Result<PcaSelection> {
    let family = Family::new(ModelKind::Pca, with_weekdays);
    let runs = cfg
        .pca_k
        .clone()
        .into_par_iter()
        .map(|k| {
            let mut c = cfg.clone();
            c.model.pca_k = k;
            rolling_backtest(panel, family, &c, progress).map(|m| (k, m))
        })
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<KScore> = runs.iter().map(|(k, m)| KScore { k: *k, mae: mae(&m.errors()) }).collect();
    let best = (0..scores.len()).fold(0, |b, i| if scores[i].mae < scores[b].mae { i } else { b });
    let (k, matrix) = runs.into_iter().nth(best).expect("non-empty K range");
    Ok(PcaSelection { k, scores, matrix })
}

/// Mean absolute error per hour over days.
pub fn mae_h<R: AsRef<[f64]>>(errors: &[R]) -> Vec<f64> {
    column_means(errors, f64::abs)
}

/// Root mean squared error per hour over days.
pub fn rmse_h<R: AsRef<[f64]>>(errors: &[R]) -> Vec<f64> {
    column_means(errors, |e| e * e).into_iter().map(f64::sqrt).collect()
}

/// `(1 / (H N)) Σ_n Σ_h |e_{n,h}|`.
pub fn mae<R: AsRef<[f64]>>(errors: &[R]) -> f64 {
    overall_mean(errors, f64::abs)
}

/// `sqrt((1 / (H N)) Σ_n Σ_h e_{n,h}²)`.
pub fn rmse<R: AsRef<[f64]>>(errors: &[R]) -> f64 {
    overall_mean(errors, |e| e * e).sqrt()
}

fn column_means<R: AsRef<[f64]>>(errors: &[R], f: impl Fn(f64) -> f64) -> Vec<f64> {
    let width = errors.first().map_or(0, |r| r.as_ref().len());
    let mut sums = vec![0.0; width];
    for row in errors {
        for (s, &e) in sums.iter_mut().zip(row.as_ref()) {
            *s += f(e);
        }
    }
    sums.iter().map(|s| s / errors.len() as f64).collect()
}

fn overall_mean<R: AsRef<[f64]>>(errors: &[R], f: impl Fn(f64) -> f64) -> f64 {
    let count: usize = errors.iter().map(|r| r.as_ref().len()).sum();
    errors.iter().flat_map(|r| r.as_ref().iter().map(|&e| f(e))).sum::<f64>() / count as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Mae,
    Rmse,
    MaeHour(usize),
    RmseHour(usize),
}

/// Bootstrap standard deviations of every reported statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSds {
    pub mae: f64,
    pub rmse: f64,
    pub mae_h: Vec<f64>,
    pub rmse_h: Vec<f64>,
}

impl BootstrapSds {
    pub fn get(&self, stat: Statistic) -> f64 {
        match stat {
            Statistic::Mae => self.mae,
            Statistic::Rmse => self.rmse,
            Statistic::MaeHour(h) => self.mae_h[h],
            Statistic::RmseHour(h) => self.rmse_h[h],
        }
    }
}

/// Resamples whole error rows `B` times and returns the sample standard
/// deviation of each statistic. Replicate `r` draws from the ChaCha stream
/// `r` of `seed`, so results do not depend on scheduling.
pub fn bootstrap(errors: &[[f64; HOURS]], replicates: usize, seed: u64) -> Result<BootstrapSds> {
    let n = errors.len();
    if n == 0 {
        return Err(ModelError::Insufficient("no forecast errors to resample".into()));
    }
    if replicates == 0 {
        return Err(ModelError::Invalid("bootstrap sample size must be at least 1".into()));
    }
    let stats: Vec<[f64; 2 * HOURS + 2]> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut abs = [0.0; HOURS];
            let mut sq = [0.0; HOURS];
            for _ in 0..n {
                let row = &errors[rng.random_range(0..n)];
                for h in 0..HOURS {
                    abs[h] += row[h].abs();
                    sq[h] += row[h] * row[h];
                }
            }
            let mut out = [0.0; 2 * HOURS + 2];
            let nf = n as f64;
            out[0] = abs.iter().sum::<f64>() / (nf * HOURS as f64);
            out[1] = (sq.iter().sum::<f64>() / (nf * HOURS as f64)).sqrt();
            for h in 0..HOURS {
                out[2 + h] = abs[h] / nf;
                out[2 + HOURS + h] = (sq[h] / nf).sqrt();
            }
            out
        })
        .collect();
    let sd = |i: usize| sample_sd(stats.iter().map(|s| s[i]));
    Ok(BootstrapSds {
        mae: sd(0),
        rmse: sd(1),
        mae_h: (0..HOURS).map(|h| sd(2 + h)).collect(),
        rmse_h: (0..HOURS).map(|h| sd(2 + HOURS + h)).collect(),
    })
}

pub fn bootstrap_sd(errors: &[[f64; HOURS]], stat: Statistic, replicates: usize, seed: u64) -> Result<f64> {
    Ok(bootstrap(errors, replicates, seed)?.get(stat))
}

/// Sample standard deviation with the `n - 1` denominator; 0 for one value.
fn sample_sd(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n < 2 {
        return 0.0;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricFlags {
    pub mae: bool,
    pub rmse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaReport {
    pub selected_k: usize,
    pub mae_per_k: Vec<KScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub name: String,
    pub n: usize,
    pub mae: f64,
    pub mae_sd: f64,
    pub rmse: f64,
    pub rmse_sd: f64,
    pub mae_h: Vec<f64>,
    pub rmse_h: Vec<f64>,
    pub mae_h_sd: Vec<f64>,
    pub rmse_h_sd: Vec<f64>,
    pub best: MetricFlags,
    pub not_worse: MetricFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca: Option<PcaReport>,
}

impl FamilyReport {
    pub fn from_errors(name: impl Into<String>, errors: &[[f64; HOURS]], replicates: usize, seed: u64) -> Result<Self> {
        let sds = bootstrap(errors, replicates, seed)?;
        Ok(Self {
            name: name.into(),
            n: errors.len(),
            mae: mae(errors),
            mae_sd: sds.mae,
            rmse: rmse(errors),
            rmse_sd: sds.rmse,
            mae_h: mae_h(errors),
            rmse_h: rmse_h(errors),
            mae_h_sd: sds.mae_h,
            rmse_h_sd: sds.rmse_h,
            best: MetricFlags::default(),
            not_worse: MetricFlags::default(),
            pca: None,
        })
    }
}

/// Marks the best family per metric (first on ties) and every family whose
/// value is at most `best + 2 sd(best)`.
pub fn significance_flags(families: &mut [FamilyReport]) {
    if families.is_empty() {
        return;
    }
    let flag = |families: &mut [FamilyReport],
                value: fn(&FamilyReport) -> (f64, f64),
                set: fn(&mut FamilyReport, bool, bool)| {
        let best = (0..families.len()).fold(0, |b, i| if value(&families[i]).0 < value(&families[b]).0 { i } else { b });
        let (best_value, best_sd) = value(&families[best]);
        let bound = best_value + 2.0 * best_sd;
        for (i, f) in families.iter_mut().enumerate() {
            let v = value(f).0;
            set(f, i == best, v <= bound);
        }
    };
    flag(families, |f| (f.mae, f.mae_sd), |f, best, ok| {
        f.best.mae = best;
        f.not_worse.mae = ok;
    });
    flag(families, |f| (f.rmse, f.rmse_sd), |f, best, ok| {
        f.best.rmse = best;
        f.not_worse.rmse = ok;
    });
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub window: usize,
    pub n: usize,
    pub bootstrap: usize,
    pub seed: u64,
    pub refit_every: usize,
    pub families: Vec<String>,
    pub lambda_exponents: [f64; 2],
    pub lambda_count: usize,
    pub pmax_hourly: usize,
    pub pmax_univariate: usize,
    pub pmax_var: usize,
    pub pca_k: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub market: String,
    pub config: ReportConfig,
    pub families: Vec<FamilyReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestOutput {
    pub report: BacktestReport,
    pub matrices: Vec<(Family, ForecastMatrix)>,
}

/// Backtests every configured family, computes metrics with bootstrap
/// standard deviations and applies the significance rule.
pub fn run_backtest(
    panel: &PricePanel,
    market: &str,
    cfg: &BacktestConfig,
    progress: Option<Progress<'_>>,
) -> Result<BacktestOutput> {
    cfg.validate()?;
    if cfg.families.is_empty() {
        return Err(ModelError::Invalid("no model families selected".into()));
    }
    let mut families = Vec::with_capacity(cfg.families.len());
    let mut matrices = Vec::with_capacity(cfg.families.len());
    for &family in &cfg.families {
        let (matrix, pca) = if family.kind == ModelKind::Pca {
            let sel = select_pca_k(panel, family.weekdays, cfg, progress)?;
            (sel.matrix, Some(PcaReport { selected_k: sel.k, mae_per_k: sel.scores }))
        } else {
            (rolling_backtest(panel, family, cfg, progress)?, None)
        };
        let mut report = FamilyReport::from_errors(family.name(), &matrix.errors(), cfg.bootstrap, cfg.seed)?;
        report.pca = pca;
        families.push(report);
        matrices.push((family, matrix));
    }
    significance_flags(&mut families);
    let grid = cfg.model.grid;
    let config = ReportConfig {
        window: cfg.window,
        n: panel.len() - cfg.window,
        bootstrap: cfg.bootstrap,
        seed: cfg.seed,
        refit_every: cfg.refit_every,
        families: cfg.families.iter().map(Family::name).collect(),
        lambda_exponents: [grid.exponent_hi, grid.exponent_lo],
        lambda_count: grid.count,
        pmax_hourly: cfg.model.pmax_hourly,
        pmax_univariate: cfg.model.pmax_univariate,
        pmax_var: cfg.model.pmax_var,
        pca_k: [*cfg.pca_k.start(), *cfg.pca_k.end()],
    };
    Ok(BacktestOutput { report: BacktestReport { market: market.to_string(), config, families }, matrices })
}

impl BacktestReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per family with overall MAE and RMSE and their bootstrap sds.
    /// `**` marks the best value, `*` a value within two sds of the best.
    pub fn summary_table(&self) -> String {
        let width = self.families.iter().map(|f| f.name.len()).max().unwrap_or(6).max(6);
        let mut out = format!("{:<width$}  {:>18}  {:>18}\n", "model", "MAE (sd)", "RMSE (sd)");
        let cell = |v: f64, sd: f64, best: bool, ok: bool| {
            let mark = if best {
                "**"
            } else if ok {
                "*"
            } else {
                ""
            };
            format!("{v:.3} ({sd:.3}){mark:<2}")
        };
        for f in &self.families {
            out.push_str(&format!(
                "{:<width$}  {:>18}  {:>18}\n",
                f.name,
                cell(f.mae, f.mae_sd, f.best.mae, f.not_worse.mae),
                cell(f.rmse, f.rmse_sd, f.best.rmse, f.not_worse.rmse),
            ));
        }
        out
    }
}

/// `date,family,h00..h23` rows for every family's forecasts.
pub fn forecast_csv(matrices: &[(Family, ForecastMatrix)]) -> String {
    let mut out = String::from("date,family");
    for h in 0..HOURS {
        out.push_str(&format!(",h{h:02}"));
    }
    out.push('\n');
    for (family, m) in matrices {
        for (date, row) in m.dates.iter().zip(&m.forecasts) {
            out.push_str(&format!("{date},{family}"));
            for v in row {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
    }
    out
}

/// A stationary VAR on the 24-hour price vector:
/// `P_d = mean + x_d`, `x_d = Σ_k Φ_k x_{d-k} + offset(W(d)) + ε_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub mean: [f64; HOURS],
    /// `phi[k-1]` is `Φ_k`, row-major 24 x 24.
    pub phi: Vec<DMatrix<f64>>,
    /// Level added on each weekday (0 = Sunday).
    pub weekday_offsets: [f64; 7],
    pub noise_sd: f64,
}

/// Discarded leading days of every simulation.
pub const BURN_IN: usize = 500;

impl SynthSpec {
    pub fn white_noise(mean: f64, noise_sd: f64) -> Self {
        Self { mean: [mean; HOURS], phi: Vec::new(), weekday_offsets: [0.0; 7], noise_sd }
    }

    /// Diagonal first-order dynamics `Φ_1 = phi · I`.
    pub fn diagonal(mean: f64, phi: f64, noise_sd: f64) -> Self {
        Self { phi: vec![DMatrix::identity(HOURS, HOURS) * phi], ..Self::white_noise(mean, noise_sd) }
    }

    pub fn preset(preset: SynthPreset) -> Self {
        match preset {
            SynthPreset::CrossHour => {
                // Hour 23 follows its own lag; hour 0 is driven by the previous
                // day's hour 23 alone and the other hours by both.
                let mut phi = DMatrix::identity(HOURS, HOURS) * 0.3;
                phi[(23, 23)] = 0.6;
                phi[(0, 0)] = 0.0;
                phi[(0, 23)] = 0.8;
                for h in 1..23 {
                    phi[(h, 23)] = 0.4;
                }
                Self { phi: vec![phi], weekday_offsets: WEEKDAY_PROFILE, ..Self::white_noise(40.0, 5.0) }
            }
            SynthPreset::Weekday => Self {
                weekday_offsets: WEEKDAY_PROFILE,
                ..Self::diagonal(40.0, 0.6, 5.0)
            },
            SynthPreset::SeasonalWeekly => {
                let mut phi = vec![DMatrix::zeros(HOURS, HOURS); 7];
                phi[0] = DMatrix::identity(HOURS, HOURS) * 0.4;
                phi[6] = DMatrix::identity(HOURS, HOURS) * 0.3;
                Self { phi, weekday_offsets: WEEKDAY_PROFILE, ..Self::white_noise(40.0, 5.0) }
            }
        }
    }

    /// Sum of the maximum absolute row sums of the `Φ_k`; below 1 implies
    /// stationarity.
    fn norm_bound(&self) -> f64 {
        self.phi
            .iter()
            .map(|m| m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max))
            .sum()
    }

    /// Spectral radius of the companion matrix.
    pub fn spectral_radius(&self) -> f64 {
        let p = self.phi.len();
        if p == 0 {
            return 0.0;
        }
        let size = HOURS * p;
        let mut companion = DMatrix::<f64>::zeros(size, size);
        for (k, m) in self.phi.iter().enumerate() {
            companion.view_mut((0, k * HOURS), (HOURS, HOURS)).copy_from(m);
        }
        for i in HOURS..size {
            companion[(i, i - HOURS)] = 1.0;
        }
        companion.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phi.iter().any(|m| m.shape() != (HOURS, HOURS)) {
            return Err(ModelError::Invalid("dynamics matrices must be 24 x 24".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(ModelError::Invalid(format!("noise level {} must be finite and non-negative", self.noise_sd)));
        }
        if self.norm_bound() < 1.0 {
            return Ok(());
        }
        let radius = self.spectral_radius();
        if !(radius < 1.0) {
            return Err(ModelError::NonStationary(radius));
        }
        Ok(())
    }
}

/// Weekday levels: lower prices on weekends.
const WEEKDAY_PROFILE: [f64; 7] = [-8.0, 1.0, 2.0, 2.0, 2.0, 1.0, -4.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthPreset {
    /// Prices driven by the previous day's hour 23 (hour 0 exclusively), weekday levels.
    CrossHour,
    /// Diagonal first-order dynamics with weekday levels.
    Weekday,
    /// Daily and weekly same-hour lags with weekday levels.
    SeasonalWeekly,
}

impl std::str::FromStr for SynthPreset {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross-hour" => Ok(SynthPreset::CrossHour),
            "weekday" => Ok(SynthPreset::Weekday),
            "seasonal-weekly" => Ok(SynthPreset::SeasonalWeekly),
            _ => Err(ModelError::Invalid(format!(
                "unknown preset {s:?} (expected cross-hour, weekday or seasonal-weekly)"
            ))),
        }
    }
}

/// Simulates `days` days starting at `start` after a burn-in of [`BURN_IN`] days.
pub fn synth_panel(spec: &SynthSpec, days: usize, start: NaiveDate, seed: u64) -> Result<PricePanel> {
    spec.validate()?;
    let p = spec.phi.len();
    let total = BURN_IN + days;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| ModelError::Invalid(e.to_string()))?;
    let mut x: Vec<[f64; HOURS]> = Vec::with_capacity(total);
    // Burn-in days keep the calendar so the weekday cycle is in phase at `start`.
    let first_weekday = weekday_of(start) + 6 * BURN_IN;
    for t in 0..total {
        let level = spec.weekday_offsets[(first_weekday + t) % 7];
        let mut row = [level; HOURS];
        for (k, m) in spec.phi.iter().enumerate().take(t.min(p)) {
            let past = &x[t - k - 1];
            for (i, slot) in row.iter_mut().enumerate() {
                *slot += (0..HOURS).map(|j| m[(i, j)] * past[j]).sum::<f64>();
            }
        }
        for slot in row.iter_mut() {
            *slot += noise.sample(&mut rng);
        }
        x.push(row);
    }
    let rows = x[BURN_IN..]
        .iter()
        .map(|dev| std::array::from_fn(|h| spec.mean[h] + dev[h]))
        .collect();
    Ok(PricePanel::from_rows(start, rows)?)
}

/// A lasso-style truth: for each hour, `per_hour` lags drawn without
/// replacement from the admissible set with coefficient magnitudes in
/// `magnitude` and random signs. Row sums of absolute coefficients must stay
/// below 1, which keeps the dynamics stationary.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTruth {
    pub spec: SynthSpec,
    /// Nonzero labels per target hour.
    pub support: Vec<Vec<RegressorLabel>>,
}

pub fn sparse_lag_spec(
    lags: &LagIndexSet,
    per_hour: usize,
    magnitude: (f64, f64),
    noise_sd: f64,
    seed: u64,
) -> Result<SparseTruth> {
    if magnitude.1 * per_hour as f64 >= 1.0 || magnitude.0 > magnitude.1 || magnitude.0 <= 0.0 {
        return Err(ModelError::Invalid(format!("coefficient magnitudes {magnitude:?} with {per_hour} lags")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = Uniform::new_inclusive(magnitude.0, magnitude.1).map_err(|e| ModelError::Invalid(e.to_string()))?;
    let mut phi = vec![DMatrix::zeros(HOURS, HOURS); lags.max_lag()];
    let mut support = Vec::with_capacity(HOURS);
    for h in 0..HOURS {
        let labels = lags.labels(h);
        if per_hour > labels.len() {
            return Err(ModelError::Invalid(format!("{per_hour} lags from {} candidates", labels.len())));
        }
        let picks = rand::seq::index::sample(&mut rng, labels.len(), per_hour);
        let mut chosen: Vec<RegressorLabel> = picks.iter().map(|i| labels[i]).collect();
        chosen.sort_by_key(|l| labels.iter().position(|x| x == l));
        for label in &chosen {
            if let RegressorLabel::Lag { hour, lag } = *label {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                phi[lag - 1][(h, hour)] = sign * size.sample(&mut rng);
            }
        }
        support.push(chosen);
    }
    Ok(SparseTruth { spec: SynthSpec { phi, ..SynthSpec::white_noise(0.0, noise_sd) }, support })
}
