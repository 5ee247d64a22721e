//! Shared inputs for the criterion benchmarks.

use chrono::NaiveDate;
use hourlasso_core::backtest::{synth_panel, SynthPreset, SynthSpec};
use hourlasso_core::dataio::{demean, PricePanel};
use hourlasso_core::lasso::{standardize, StandardizedProblem};
use hourlasso_core::models::{build_design, LagIndexSet};

/// Cross-hour synthetic panel of `days` days.
pub fn panel(days: usize, seed: u64) -> PricePanel {
    let start = NaiveDate::from_ymd_opt(2012, 1, 1).expect("valid date");
    synth_panel(&SynthSpec::preset(SynthPreset::CrossHour), days, start, seed).expect("stationary preset")
}

/// The standardized lasso problem of hour `h` over a whole panel.
pub fn lasso_problem(panel: &PricePanel, h: usize) -> StandardizedProblem {
    let (_, centered) = demean(panel, 0..panel.len()).expect("non-empty panel");
    let design = build_design(&centered, h, &LagIndexSet::default(), None).expect("window longer than the lags");
    standardize(&design.x, &design.y).expect("non-degenerate design")
}
