mod config;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use hourlasso_core::analysis::{corr_grid, weekly_means, ImportanceTable};
use hourlasso_core::backtest::{forecast_csv, run_backtest, synth_panel, SynthPreset, SynthSpec};
use hourlasso_core::dataio::{dst_normalize, ingest_csv, load_panel, write_panel_csv, CsvColumns, PricePanel, HOURS};
use hourlasso_core::error::{DataError, ModelError};
use hourlasso_core::models::{fit, Family, FittedForecaster, ModelKind};

use config::{load_key_values, usage, Overrides, RunConfig, UsageError};

const EXIT_DATA: u8 = 2;
const EXIT_MODEL: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "hourlasso", version, about = "Day-ahead hourly electricity price forecasting")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "HOURLASSO_THREADS")]
    threads: Option<usize>,
    /// Flat `key = value` file with run settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Suppress progress messages on standard error.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a raw hourly CSV into a 24-column daily panel.
    Ingest(IngestArgs),
    /// Simulate a synthetic panel.
    Synth(SynthArgs),
    /// Rolling-window backtest of several model families.
    Backtest(BacktestArgs),
    /// Forecast the day after the last panel row.
    Forecast(ForecastArgs),
    /// Ranked standardized lasso coefficients per hour.
    Importance(ImportanceArgs),
    /// Descriptive statistics of a panel.
    Stats {
        #[command(subcommand)]
        which: StatsCommand,
    },
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    /// Panel CSV destination; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value = "timestamp")]
    timestamp_column: String,
    #[arg(long, default_value = "price")]
    price_column: String,
}

#[derive(Args)]
struct SynthArgs {
    /// cross-hour, weekday or seasonal-weekly.
    #[arg(long, conflicts_with = "phi", required_unless_present = "phi")]
    preset: Option<SynthPreset>,
    /// Diagonal lag-1 dynamics `Φ_1 = phi·I` instead of a preset.
    #[arg(long, allow_negative_numbers = true)]
    phi: Option<f64>,
    #[arg(long)]
    days: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "2012-01-01")]
    start: NaiveDate,
    /// Price level of every hour.
    #[arg(long)]
    mean: Option<f64>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Default)]
struct ModelFlags {
    /// Panel CSV with columns date,h00..h23.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Rolling window length D in days.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    lambda_hi: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    lambda_lo: Option<f64>,
    #[arg(long)]
    lambda_count: Option<usize>,
    #[arg(long)]
    pmax_hourly: Option<usize>,
    #[arg(long)]
    pmax_univariate: Option<usize>,
    #[arg(long)]
    pmax_var: Option<usize>,
    /// Penalize the unnormalized residual sum of squares.
    #[arg(long)]
    lasso_raw_objective: bool,
}

impl ModelFlags {
    fn overrides(&self) -> Overrides {
        Overrides {
            input: self.input.clone(),
            window: self.window,
            lambda_hi: self.lambda_hi,
            lambda_lo: self.lambda_lo,
            lambda_count: self.lambda_count,
            pmax_hourly: self.pmax_hourly,
            pmax_univariate: self.pmax_univariate,
            pmax_var: self.pmax_var,
            lasso_raw_objective: self.lasso_raw_objective,
            ..Overrides::default()
        }
    }
}

#[derive(Args)]
struct BacktestArgs {
    #[command(flatten)]
    model: ModelFlags,
    /// Comma-separated family names, e.g. lasso-wd,24d.AR,exp.AR.
    #[arg(long)]
    families: Option<String>,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    refit_every: Option<usize>,
    #[arg(long)]
    pca_k_min: Option<usize>,
    #[arg(long)]
    pca_k_max: Option<usize>,
    /// Label stored in the report.
    #[arg(long)]
    market: Option<String>,
}

#[derive(Args)]
struct ForecastArgs {
    #[command(flatten)]
    model: ModelFlags,
    /// Saved model dump; when absent a model is fitted on the last window.
    #[arg(long, conflicts_with = "family")]
    model_file: Option<PathBuf>,
    #[arg(long, default_value = "lasso-wd")]
    family: Family,
    /// Number of factors for the PCA families.
    #[arg(long, default_value_t = 2)]
    pca_k: usize,
    #[arg(long)]
    save_model: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ImportanceArgs {
    #[command(flatten)]
    model: ModelFlags,
    /// Saved lasso model dump; when absent a model is fitted on the last window.
    #[arg(long)]
    model_file: Option<PathBuf>,
    #[arg(long, default_value = "lasso")]
    family: Family,
    /// Regressors shown per hour.
    #[arg(long, default_value_t = 7)]
    top: usize,
    /// Also write `hour,rank,label,iota_pct` rows here.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    save_model: Option<PathBuf>,
}

#[derive(Subcommand)]
enum StatsCommand {
    /// Correlations of each hour with every hour of the previous day.
    Corr(StatsArgs),
    /// Sample mean per weekday and hour.
    Weekmean(StatsArgs),
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn settings(cli_config: Option<&Path>, flags: &Overrides) -> Result<RunConfig> {
    let file = match cli_config {
        Some(p) => load_key_values(p)?,
        None => BTreeMap::new(),
    };
    RunConfig::resolve(&file, flags)
}

fn load(path: &Path) -> Result<PricePanel> {
    load_panel(path).with_context(|| format!("reading panel {}", path.display()))
}

fn progress_printer(quiet: bool) -> impl Fn(&str, usize, usize) + Sync {
    move |family: &str, done: usize, total: usize| {
        let step = (total / 10).max(1);
        if !quiet && (done.is_multiple_of(step) || done == total) {
            eprintln!("{family}: {done}/{total} days");
        }
    }
}

fn ingest(args: &IngestArgs) -> Result<()> {
    let columns = CsvColumns { timestamp: args.timestamp_column.clone(), price: args.price_column.clone() };
    let raw = ingest_csv(&args.input, &columns).with_context(|| format!("reading {}", args.input.display()))?;
    let panel = dst_normalize(&raw)?;
    emit(args.output.as_deref(), &panel.to_csv_string())?;
    eprintln!(
        "{} days from {} to {}",
        panel.len(),
        panel.first_date().expect("non-empty panel"),
        panel.last_date().expect("non-empty panel")
    );
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let mut spec = match (args.preset, args.phi) {
        (Some(preset), _) => SynthSpec::preset(preset),
        (None, Some(phi)) => SynthSpec::diagonal(40.0, phi, 5.0),
        (None, None) => return Err(usage("either --preset or --phi is required")),
    };
    if let Some(mean) = args.mean {
        spec.mean = [mean; HOURS];
    }
    if let Some(sd) = args.noise_sd {
        spec.noise_sd = sd;
    }
    if args.days == 0 {
        return Err(usage("--days must be positive"));
    }
    // Parameters come straight from the user, so rejections are usage errors.
    spec.validate().map_err(|e| usage(format!("rejected dynamics: {e}")))?;
    let panel = synth_panel(&spec, args.days, args.start, args.seed)?;
    match &args.output {
        Some(p) => write_panel_csv(&panel, fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)?,
        None => write_panel_csv(&panel, std::io::stdout().lock())?,
    }
    Ok(())
}

fn backtest(args: &BacktestArgs, cli: &Cli) -> Result<()> {
    let flags = Overrides {
        families: args.families.clone(),
        bootstrap: args.bootstrap,
        seed: args.seed,
        out_dir: args.out_dir.clone(),
        refit_every: args.refit_every,
        pca_k_min: args.pca_k_min,
        pca_k_max: args.pca_k_max,
        market: args.market.clone(),
        ..args.model.overrides()
    };
    let cfg = settings(cli.config.as_deref(), &flags)?;
    let panel = load(cfg.input()?)?;
    if panel.len() <= cfg.window {
        return Err(DataError::Invalid(format!("panel of {} days needs more than the window {}", panel.len(), cfg.window)).into());
    }
    let progress = progress_printer(cli.quiet);
    let out = run_backtest(&panel, &cfg.market, &cfg.backtest_config(), Some(&progress))?;
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let report_path = cfg.out_dir.join("report.json");
    fs::write(&report_path, out.report.to_json() + "\n").with_context(|| format!("writing {}", report_path.display()))?;
    let csv_path = cfg.out_dir.join("forecasts.csv");
    fs::write(&csv_path, forecast_csv(&out.matrices)).with_context(|| format!("writing {}", csv_path.display()))?;
    print!("{}", out.report.summary_table());
    Ok(())
}

/// The model from `--model-file`, or one fitted on the last `window` days.
fn obtain_model(
    flags: &ModelFlags,
    model_file: Option<&Path>,
    family: Family,
    pca_k: usize,
    cli: &Cli,
) -> Result<(FittedForecaster, Option<PricePanel>)> {
    let cfg = settings(cli.config.as_deref(), &flags.overrides())?;
    let panel = match &cfg.input {
        Some(p) => Some(load(p)?),
        None => None,
    };
    if let Some(path) = model_file {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok((FittedForecaster::from_json(&text)?, panel));
    }
    let panel = panel.ok_or_else(|| usage("no input panel given (--input or input = ... in the config)"))?;
    if panel.len() < cfg.window {
        return Err(DataError::Invalid(format!("panel of {} days is shorter than the window {}", panel.len(), cfg.window)).into());
    }
    let mut model_cfg = cfg.model_config();
    model_cfg.pca_k = pca_k;
    let window = panel.slice(panel.len() - cfg.window..panel.len());
    let model = fit(family, &window, &model_cfg)?;
    Ok((model, Some(panel)))
}

fn save(model: &FittedForecaster, path: Option<&Path>) -> Result<()> {
    if let Some(p) = path {
        fs::write(p, model.to_json() + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn forecast(args: &ForecastArgs, cli: &Cli) -> Result<()> {
    let (model, panel) = obtain_model(&args.model, args.model_file.as_deref(), args.family, args.pca_k, cli)?;
    save(&model, args.save_model.as_deref())?;
    let panel = panel.ok_or_else(|| usage("forecasting needs the price history (--input)"))?;
    let values = model.forecast_day(&panel)?;
    let target = panel.last_date().expect("non-empty panel").succ_opt().expect("date in range");
    let mut out = String::from("date");
    for h in 0..HOURS {
        out.push_str(&format!(",h{h:02}"));
    }
    out.push_str(&format!("\n{target}"));
    for v in values {
        out.push_str(&format!(",{v:.6}"));
    }
    out.push('\n');
    emit(args.output.as_deref(), &out)
}

fn importance(args: &ImportanceArgs, cli: &Cli) -> Result<()> {
    if args.top == 0 {
        return Err(usage("--top must be positive"));
    }
    if args.model_file.is_none() && args.family.kind != ModelKind::Lasso {
        return Err(usage(format!("importance needs a lasso family, got {}", args.family)));
    }
    let (model, _) = obtain_model(&args.model, args.model_file.as_deref(), args.family, 2, cli)?;
    save(&model, args.save_model.as_deref())?;
    let table = ImportanceTable::from_model(&model)?;
    print!("{}", table.render_text(args.top));
    if let Some(p) = &args.csv {
        fs::write(p, table.to_csv(args.top)).with_context(|| format!("writing {}", p.display()))?;
    }
    let degenerate = table.degenerate_hours();
    if !degenerate.is_empty() {
        return Err(ModelError::Invalid(format!("all coefficients are zero at hours {degenerate:?}")).into());
    }
    Ok(())
}

fn stats(which: &StatsCommand) -> Result<()> {
    match which {
        StatsCommand::Corr(args) => {
            let panel = load(&args.input)?;
            let grid = corr_grid(&panel).map_err(|e| match e {
                ModelError::Data(d) => anyhow::Error::from(d),
                // Correlations only fail on degenerate data.
                e => anyhow::Error::from(DataError::Invalid(e.to_string())),
            })?;
            emit(args.output.as_deref(), &grid.to_csv())
        }
        StatsCommand::Weekmean(args) => {
            let panel = load(&args.input)?;
            emit(args.output.as_deref(), &weekly_means(&panel)?.to_csv())
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Ingest(args) => ingest(args),
        Command::Synth(args) => synth(args),
        Command::Backtest(args) => backtest(args, cli),
        Command::Forecast(args) => forecast(args, cli),
        Command::Importance(args) => importance(args, cli),
        Command::Stats { which } => stats(which),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<ModelError>() {
            return if matches!(e, ModelError::Data(_)) { EXIT_DATA } else { EXIT_MODEL };
        }
        if cause.is::<DataError>() {
            return EXIT_DATA;
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
