//! Coefficient importance tables, lag-1 cross-hour correlations and
//! weekday-by-hour mean profiles.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataio::{PricePanel, HOURS};
use crate::error::{DataError, ModelError, Result};
use crate::models::{FittedForecaster, RegressorLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub label: RegressorLabel,
    /// Index of the coefficient in the input order.
    pub column: usize,
    pub iota: f64,
}

/// Importances of one hourly model, nonzero coefficients only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourImportance {
    pub h: usize,
    pub entries: Vec<ImportanceEntry>,
    /// Set when every coefficient is zero and importance is undefined.
    pub degenerate: bool,
}

/// `ι_i = |β̃_i| / Σ_j |β̃_j|`, sorted by decreasing ι with ties in input
/// order. An all-zero vector gives an empty, degenerate result.
pub fn importance(beta_tilde: &[f64], labels: &[RegressorLabel]) -> Result<(Vec<ImportanceEntry>, bool)> {
    if beta_tilde.len() != labels.len() {
        return Err(ModelError::Invalid(format!(
            "{} coefficients but {} labels",
            beta_tilde.len(),
            labels.len()
        )));
    }
    let total: f64 = beta_tilde.iter().map(|b| b.abs()).sum();
    if !(total > 0.0) {
        return Ok((Vec::new(), true));
    }
    let mut entries: Vec<ImportanceEntry> = beta_tilde
        .iter()
        .zip(labels)
        .enumerate()
        .filter(|(_, (b, _))| **b != 0.0)
        .map(|(column, (b, &label))| ImportanceEntry { label, column, iota: b.abs() / total })
        .collect();
    entries.sort_by(|a, b| b.iota.total_cmp(&a.iota).then(a.column.cmp(&b.column)));
    Ok((entries, false))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub hours: Vec<HourImportance>,
}

impl ImportanceTable {
    /// Importances of every hourly model of a fitted lasso forecaster.
    pub fn from_model(model: &FittedForecaster) -> Result<Self> {
        let hours = (0..HOURS)
            .map(|h| {
                let coefs = model.standardized(h).ok_or_else(|| {
                    ModelError::Invalid(format!("importance needs a lasso model, got {}", model.family))
                })?;
                let (labels, beta): (Vec<_>, Vec<_>) = coefs.into_iter().unzip();
                let (entries, degenerate) = importance(&beta, &labels)?;
                Ok(HourImportance { h, entries, degenerate })
            })
            .collect::<Result<_>>()?;
        Ok(Self { hours })
    }

    pub fn degenerate_hours(&self) -> Vec<usize> {
        self.hours.iter().filter(|h| h.degenerate).map(|h| h.h).collect()
    }

    /// Text table with the `k` strongest regressors per hour.
    pub fn render_text(&self, k: usize) -> String {
        let mut out = String::from(" h");
        for rank in 1..=k {
            let _ = write!(out, " & {:<11}", format!("Imp. {rank}"));
        }
        out.push('\n');
        for hour in &self.hours {
            let _ = write!(out, "{:>2}", hour.h);
            for rank in 0..k {
                let cell = match hour.entries.get(rank) {
                    Some(e) => format!("{} ({:4.1})", label_cell(&e.label), 100.0 * e.iota),
                    None => format!("{} ({:4.1})", label_cell(&pad_label(rank - hour.entries.len())), 0.0),
                };
                let _ = write!(out, " & {cell}");
            }
            if hour.degenerate {
                out.push_str("  [all coefficients zero]");
            }
            out.push('\n');
        }
        out
    }

    /// `hour,rank,label,iota_pct` with the `k` strongest regressors per hour.
    pub fn to_csv(&self, k: usize) -> String {
        let mut out = String::from("hour,rank,label,iota_pct\n");
        for hour in &self.hours {
            for (rank, e) in hour.entries.iter().take(k).enumerate() {
                let _ = writeln!(out, "{},{},{},{:.4}", hour.h, rank + 1, e.label, 100.0 * e.iota);
            }
        }
        out
    }
}

/// Placeholder label used to fill short rows: hour 0 at lags 1, 2, ...
fn pad_label(i: usize) -> RegressorLabel {
    RegressorLabel::Lag { hour: 0, lag: i + 1 }
}

/// Right-aligns the hour of lag labels to two characters, as in `" 1@1"`.
fn label_cell(label: &RegressorLabel) -> String {
    match label {
        RegressorLabel::Lag { hour, lag } => format!("{hour:>2}@{lag}"),
        RegressorLabel::Weekday(_) => label.to_string(),
    }
}

/// `C[h][l]` is the sample correlation of `P_{d,h}` with `P_{d-1,l}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrGrid(pub Vec<[f64; HOURS]>);

impl CorrGrid {
    pub fn get(&self, h: usize, l: usize) -> f64 {
        self.0[h][l]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,l,corr\n");
        for (h, row) in self.0.iter().enumerate() {
            for (l, c) in row.iter().enumerate() {
                let _ = writeln!(out, "{h},{l},{c:.6}");
            }
        }
        out
    }
}

pub fn corr_grid(panel: &PricePanel) -> Result<CorrGrid> {
    let d = panel.len();
    if d < 3 {
        return Err(ModelError::Insufficient(format!("{d} days for lag-1 correlations")));
    }
    let rows = panel.rows();
    let current: Vec<Vec<f64>> = (0..HOURS).map(|h| rows[1..].iter().map(|r| r[h]).collect()).collect();
    let previous: Vec<Vec<f64>> = (0..HOURS).map(|l| rows[..d - 1].iter().map(|r| r[l]).collect()).collect();
    let centered = |x: &[f64]| -> Result<(Vec<f64>, f64)> {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let c: Vec<f64> = x.iter().map(|v| v - m).collect();
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 1e-12 * (1.0 + m.abs()) * (x.len() as f64).sqrt()) {
            return Err(ModelError::ConstantSeries);
        }
        Ok((c, norm))
    };
    let cur = current.iter().map(|x| centered(x)).collect::<Result<Vec<_>>>()?;
    let prev = previous.iter().map(|x| centered(x)).collect::<Result<Vec<_>>>()?;
    let grid = cur
        .iter()
        .map(|(a, na)| {
            std::array::from_fn(|l| {
                let (b, nb) = &prev[l];
                let c = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
                c.clamp(-1.0, 1.0)
            })
        })
        .collect();
    Ok(CorrGrid(grid))
}

/// Means of `P_{d,h}` grouped by weekday (row, 0 = Sunday) and hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyMeanProfile {
    pub means: [[f64; HOURS]; 7],
    pub counts: [usize; 7],
}

impl WeeklyMeanProfile {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("weekday,hour,mean\n");
        for (k, row) in self.means.iter().enumerate() {
            for (h, m) in row.iter().enumerate() {
                let _ = writeln!(out, "{k},{h},{m:.6}");
            }
        }
        out
    }
}

pub fn weekly_means(panel: &PricePanel) -> Result<WeeklyMeanProfile, DataError> {
    let mut sums = [[0.0; HOURS]; 7];
    let mut counts = [0usize; 7];
    for (d, row) in panel.rows().iter().enumerate() {
        let k = panel.weekday(d);
        counts[k] += 1;
        for (s, v) in sums[k].iter_mut().zip(row) {
            *s += v;
        }
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(DataError::Weekday(k));
    }
    let means = std::array::from_fn(|k| std::array::from_fn(|h| sums[k][h] / counts[k] as f64));
    Ok(WeeklyMeanProfile { means, counts })
}
