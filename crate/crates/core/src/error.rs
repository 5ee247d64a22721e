use chrono::NaiveDate;
use thiserror::Error;

/// Errors raised while reading or normalizing price data.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("gap in dates: {after} is followed by {next}")]
    Gap { after: NaiveDate, next: NaiveDate },
    #[error("line {line}: record {date} hour {hour:02} is out of order")]
    OutOfOrder { line: usize, date: NaiveDate, hour: u32 },
    #[error("{date}: hour {hour:02} occurs more than twice or more than one hour is duplicated")]
    Duplicate { date: NaiveDate, hour: u32 },
    #[error("{date}: {count} hourly records (expected 23, 24 or 25)")]
    HourCount { date: NaiveDate, count: usize },
    #[error("{date}: daylight-saving anomaly is not at hour 02")]
    DstHour { date: NaiveDate },
    #[error("empty input")]
    Empty,
    #[error("weekday index {0} outside 0..6")]
    Weekday(usize),
    #[error("{0}")]
    Invalid(String),
}

/// Errors raised by estimators, models and the backtest.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("design is rank deficient: column {column} is linearly dependent on earlier columns")]
    RankDeficient { column: usize },
    #[error("series is constant; scale is undefined")]
    ConstantSeries,
    #[error("autocovariance sequence is not positive definite (reflection coefficient {kappa} at order {order})")]
    NotPositiveDefinite { order: usize, kappa: f64 },
    #[error("innovation variance {variance} at order {order} is not positive")]
    DegenerateVariance { order: usize, variance: f64 },
    #[error("block-Toeplitz autocovariance matrix is singular")]
    SingularToeplitz,
    #[error("coordinate descent did not converge at lambda {lambda} after {sweeps} sweeps (last max change {max_change:e})")]
    NoConvergence { lambda: f64, sweeps: usize, max_change: f64 },
    #[error("eigendecomposition did not converge")]
    EigenFailure,
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("non-stationary dynamics: spectral radius {0:.6} >= 1")]
    NonStationary(f64),
    #[error("day {day}, family {family}, hour {hour:?}: {source}")]
    Fit {
        day: NaiveDate,
        family: String,
        hour: Option<usize>,
        #[source]
        source: Box<ModelError>,
    },
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
