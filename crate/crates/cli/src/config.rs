//! Run settings resolved from built-in defaults, an optional flat key-value
//! file and command-line flags, in increasing precedence.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hourlasso_core::backtest::BacktestConfig;
use hourlasso_core::lasso::{GridSpec, LassoOptions};
use hourlasso_core::models::{Family, ModelConfig};

/// Invalid invocation: bad flag values, config keys or combinations.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

pub const KEYS: &[&str] = &[
    "input",
    "market",
    "window",
    "families",
    "lambda_hi",
    "lambda_lo",
    "lambda_count",
    "pmax_hourly",
    "pmax_univariate",
    "pmax_var",
    "pca_k_min",
    "pca_k_max",
    "bootstrap",
    "seed",
    "out_dir",
    "refit_every",
    "lasso_raw_objective",
];

/// Parses `key = value` lines. Blank lines, `#` or `;` comments and
/// `[section]` headers are ignored; a repeated key keeps its last value.
pub fn parse_key_values(text: &str) -> anyhow::Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') || line.starts_with('[') {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| usage(format!("config line {}: expected key = value", i + 1)))?;
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(usage(format!("config line {}: unknown key {key:?}", i + 1)));
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

pub fn load_key_values(path: &Path) -> anyhow::Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_key_values(&text)
}

/// Values given on the command line; `None` defers to the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub market: Option<String>,
    pub window: Option<usize>,
    pub families: Option<String>,
    pub lambda_hi: Option<f64>,
    pub lambda_lo: Option<f64>,
    pub lambda_count: Option<usize>,
    pub pmax_hourly: Option<usize>,
    pub pmax_univariate: Option<usize>,
    pub pmax_var: Option<usize>,
    pub pca_k_min: Option<usize>,
    pub pca_k_max: Option<usize>,
    pub bootstrap: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub refit_every: Option<usize>,
    pub lasso_raw_objective: bool,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub market: String,
    pub window: usize,
    pub families: Vec<Family>,
    pub grid: GridSpec,
    pub pmax_hourly: usize,
    pub pmax_univariate: usize,
    pub pmax_var: usize,
    pub pca_k_min: usize,
    pub pca_k_max: usize,
    pub bootstrap: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub refit_every: usize,
    pub raw_objective: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        let bt = BacktestConfig::default();
        Self {
            input: None,
            market: "market".into(),
            window: bt.window,
            families: bt.families,
            grid: model.grid,
            pmax_hourly: model.pmax_hourly,
            pmax_univariate: model.pmax_univariate,
            pmax_var: model.pmax_var,
            pca_k_min: *bt.pca_k.start(),
            pca_k_max: *bt.pca_k.end(),
            bootstrap: bt.bootstrap,
            seed: bt.seed,
            out_dir: PathBuf::from("."),
            refit_every: bt.refit_every,
            raw_objective: model.lasso.raw_objective,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> anyhow::Result<T> {
    value.parse().map_err(|_| usage(format!("{key}: cannot parse {value:?}")))
}

pub fn parse_families(list: &str) -> anyhow::Result<Vec<Family>> {
    let families = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|name| name.parse::<Family>().map_err(|e| usage(e.to_string())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if families.is_empty() {
        return Err(usage("families: empty list"));
    }
    Ok(families)
}

impl RunConfig {
    pub fn resolve(file: &BTreeMap<String, String>, flags: &Overrides) -> anyhow::Result<Self> {
        let mut cfg = Self::default();
        let get = |key: &str| file.get(key).map(String::as_str);
        macro_rules! take {
            ($field:ident, $target:expr) => {
                if let Some(v) = flags.$field.clone() {
                    $target = v;
                } else if let Some(text) = get(stringify!($field)) {
                    $target = parse_value(stringify!($field), text)?;
                }
            };
        }
        if let Some(path) = flags.input.clone().or_else(|| get("input").map(PathBuf::from)) {
            cfg.input = Some(path);
        }
        take!(market, cfg.market);
        take!(window, cfg.window);
        if let Some(list) = flags.families.as_deref().or(get("families")) {
            cfg.families = parse_families(list)?;
        }
        take!(lambda_hi, cfg.grid.exponent_hi);
        take!(lambda_lo, cfg.grid.exponent_lo);
        take!(lambda_count, cfg.grid.count);
        take!(pmax_hourly, cfg.pmax_hourly);
        take!(pmax_univariate, cfg.pmax_univariate);
        take!(pmax_var, cfg.pmax_var);
        take!(pca_k_min, cfg.pca_k_min);
        take!(pca_k_max, cfg.pca_k_max);
        take!(bootstrap, cfg.bootstrap);
        take!(seed, cfg.seed);
        take!(out_dir, cfg.out_dir);
        take!(refit_every, cfg.refit_every);
        cfg.raw_objective = flags.lasso_raw_objective
            || get("lasso_raw_objective").map(|v| parse_value::<bool>("lasso_raw_objective", v)).transpose()?.unwrap_or(false);
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> anyhow::Result<()> {
        let positive = [
            ("window", self.window),
            ("lambda_count", self.grid.count),
            ("pmax_hourly", self.pmax_hourly),
            ("pmax_univariate", self.pmax_univariate),
            ("pmax_var", self.pmax_var),
            ("pca_k_min", self.pca_k_min),
            ("bootstrap", self.bootstrap),
            ("refit_every", self.refit_every),
        ];
        if let Some((key, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(usage(format!("{key} must be positive")));
        }
        if !(self.grid.exponent_hi.is_finite() && self.grid.exponent_lo.is_finite())
            || self.grid.exponent_hi < self.grid.exponent_lo
        {
            return Err(usage("lambda_hi must be finite and at least lambda_lo"));
        }
        if self.pca_k_min > self.pca_k_max || self.pca_k_max > 24 {
            return Err(usage(format!("PCA factor range {}..{} outside 1..24", self.pca_k_min, self.pca_k_max)));
        }
        self.backtest_config().validate().map_err(|e| usage(e.to_string()))
    }

    pub fn input(&self) -> anyhow::Result<&Path> {
        self.input.as_deref().ok_or_else(|| usage("no input panel given (--input or input = ... in the config)"))
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            grid: self.grid,
            lasso: LassoOptions { raw_objective: self.raw_objective, ..LassoOptions::default() },
            pmax_hourly: self.pmax_hourly,
            pmax_univariate: self.pmax_univariate,
            pmax_var: self.pmax_var,
            ..ModelConfig::default()
        }
    }

    pub fn backtest_config(&self) -> BacktestConfig {
        BacktestConfig {
            window: self.window,
            families: self.families.clone(),
            bootstrap: self.bootstrap,
            seed: self.seed,
            model: self.model_config(),
            pca_k: self.pca_k_min..=self.pca_k_max,
            refit_every: self.refit_every,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_yield_to_flags() {
        let file = parse_key_values("# run\n[backtest]\nwindow = 365\nseed=3\nfamilies = lasso, 24d.AR-wd\n").unwrap();
        let cfg = RunConfig::resolve(&file, &Overrides { seed: Some(9), ..Overrides::default() }).unwrap();
        assert_eq!(cfg.window, 365);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.families.len(), 2);
        assert_eq!(cfg.bootstrap, 10_000);
        assert_eq!((cfg.pca_k_min, cfg.pca_k_max), (2, 12));
    }

    #[test]
    fn rejects_bad_entries() {
        assert!(parse_key_values("windw = 3").is_err());
        assert!(parse_key_values("window").is_err());
        let file = parse_key_values("window = ten").unwrap();
        assert!(RunConfig::resolve(&file, &Overrides::default()).is_err());
        let zero = Overrides { bootstrap: Some(0), ..Overrides::default() };
        assert!(RunConfig::resolve(&BTreeMap::new(), &zero).is_err());
        let short = Overrides { window: Some(20), ..Overrides::default() };
        assert!(RunConfig::resolve(&BTreeMap::new(), &short).is_err());
        assert!(parse_families("lasso,bogus").is_err());
    }
}
