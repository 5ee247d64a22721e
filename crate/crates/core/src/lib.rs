//! Hourly day-ahead electricity price forecasting: a lasso-estimated
//! cross-hour autoregression with weekday effects, autoregressive and
//! factor-model benchmarks, and a rolling-window backtest.

// `!(x > y)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the matrix formulas in the numeric kernels.
#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod backtest;
pub mod dataio;
pub mod error;
pub mod estim;
pub mod lasso;
mod linalg;
pub mod models;

pub use analysis::{corr_grid, importance, weekly_means, CorrGrid, ImportanceTable, WeeklyMeanProfile};
pub use backtest::{
    rolling_backtest, run_backtest, synth_panel, BacktestConfig, BacktestReport, ForecastMatrix, SynthPreset,
    SynthSpec,
};
pub use dataio::{HourMeans, PricePanel, RawRecord, RawSeries, HOURS};
pub use error::{DataError, ModelError};
pub use lasso::{GridSpec, LassoOptions, LassoPath};
pub use models::{Family, FittedForecaster, LagIndexSet, ModelConfig, ModelKind, RegressorLabel};
