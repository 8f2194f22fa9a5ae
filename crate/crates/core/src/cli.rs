//! Batch command-line front end.
//!
//! Output layout under the configured output directory:
//!
//! ```text
//! models/SYM.KIND.json         fitted model
//! models/SYM.KIND.loss.csv     LSTM training curve
//! eval/SYM.KIND.json           walk-forward predictions
//! backtest/networth.csv        strategy curves
//! backtest/decisions.csv       with --decisions
//! backtest/report.json
//! sweep/SYM.csv
//! report.json
//! COMMAND[.KIND].manifest.json one per run
//! ```

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arima::{auto_arima, ArimaModel};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::harness::{
    compare_strategies, sweep_grid, walk_forward_eval, EvalResult, Forecaster, ModelKind, Persistence,
};
use crate::lstm::{fit_forecaster, LstmModel};
use crate::market_data::{split_train_test, PriceSeries};

#[derive(Debug, Parser)]
#[command(
    name = "stockcast",
    version,
    about = "Forecast mid-prices and backtest a daily rebalancing bot"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert an OHLC CSV into a canonical JSON series.
    Ingest {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        symbol: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one model per symbol on the training split.
    Fit {
        #[command(flatten)]
        common: Common,
    },
    /// Walk-forward evaluation over the test split.
    Eval {
        #[command(flatten)]
        common: Common,
    },
    /// Compare evaluated models against HOLD.
    Backtest {
        #[command(flatten)]
        common: Common,
        /// Starting wealth.
        #[arg(long)]
        wealth: Option<f64>,
        /// Drop a symbol from the comparison; repeatable.
        #[arg(long)]
        exclude: Vec<String>,
        /// Trade at most this many days.
        #[arg(long)]
        days: Option<usize>,
        /// Comma-separated model kinds; defaults to every evaluated kind.
        #[arg(long, value_delimiter = ',')]
        models: Vec<ModelKind>,
        /// Also write the per-day decision log.
        #[arg(long)]
        decisions: bool,
    },
    /// Train and evaluate an LSTM for every (window, horizon) cell.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Merge evaluation, backtest and manifest outputs into one document.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured model kind.
    #[arg(long)]
    model: Option<String>,
    /// Restrict to these symbols; repeatable.
    #[arg(long)]
    symbol: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let mut overrides = Vec::new();
        if let Some(m) = &self.model {
            overrides.push(("model", m.clone()));
        }
        if let Some(s) = self.seed {
            overrides.push(("seed", s.to_string()));
        }
        for (key, value) in overrides {
            config
                .set(key, &value)
                .map_err(|reason| Error::invalid(format!("--{key}: {reason}")))?;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        config.validate()?;
        Ok(config)
    }

    fn symbols(&self, config: &RunConfig) -> Result<Vec<String>> {
        if config.data.is_empty() {
            return Err(Error::invalid("config has no data.SYMBOL entries"));
        }
        if self.symbol.is_empty() {
            return Ok(config.data.keys().cloned().collect());
        }
        let mut out = Vec::new();
        for s in &self.symbol {
            if !config.data.contains_key(s) {
                return Err(Error::invalid(format!("symbol {s} has no data entry")));
            }
            if !out.contains(s) {
                out.push(s.clone());
            }
        }
        out.sort();
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to re-derive a run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub arguments: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::File {
        path: path.to_path_buf(),
        source,
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(file_error(path))
}

struct Run {
    manifest: Manifest,
}

impl Run {
    fn new(command: &str, config: Option<&RunConfig>) -> Self {
        Run {
            manifest: Manifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed: config.map_or(0, |c| c.lstm.seed),
                config: config.map(RunConfig::resolved).unwrap_or_default(),
                arguments: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
        }
    }

    fn arg(&mut self, key: &str, value: impl ToString) {
        self.manifest.arguments.insert(key.to_string(), value.to_string());
    }

    fn input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = read_bytes(path)?;
        self.manifest.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    fn output(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(file_error(parent))?;
        }
        fs::write(path, bytes).map_err(file_error(path))?;
        self.manifest.outputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.output(path, text.as_bytes())
    }

    fn finish(self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(file_error(parent))?;
        }
        fs::write(path, text).map_err(file_error(path))
    }
}

fn load_series(run: &mut Run, config: &RunConfig, symbol: &str) -> Result<PriceSeries> {
    let path = &config.data[symbol];
    let bytes = run.input(path)?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let series = if is_json {
        let series: PriceSeries = serde_json::from_slice(&bytes)?;
        if series.symbol() != symbol {
            return Err(Error::invalid(format!(
                "{} holds symbol {}, configured as {symbol}",
                path.display(),
                series.symbol()
            )));
        }
        series
    } else {
        crate::market_data::load_series(bytes.as_slice(), symbol)?
    };
    Ok(series)
}

fn model_path(config: &RunConfig, symbol: &str, kind: ModelKind) -> PathBuf {
    config.output_dir.join("models").join(format!("{symbol}.{kind}.json"))
}

fn eval_path(config: &RunConfig, symbol: &str, kind: ModelKind) -> PathBuf {
    config.output_dir.join("eval").join(format!("{symbol}.{kind}.json"))
}

fn manifest_path(config: &RunConfig, name: &str) -> PathBuf {
    config.output_dir.join(format!("{name}.manifest.json"))
}

enum Fitted {
    Arima(ArimaModel),
    Lstm(LstmModel),
    Persistence,
}

impl Fitted {
    fn forecaster(&self) -> &dyn Forecaster {
        match self {
            Fitted::Arima(m) => m,
            Fitted::Lstm(m) => m,
            Fitted::Persistence => &Persistence,
        }
    }

    fn context(&self, config: &RunConfig) -> usize {
        match self {
            Fitted::Arima(_) => config.arima_context,
            Fitted::Lstm(m) => m.history_len(),
            Fitted::Persistence => 1,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PersistenceDoc {
    model: ModelKind,
}

fn fit(common: &Common) -> Result<()> {
    let config = common.resolve()?;
    let kind = config.model();
    let mut run = Run::new("fit", Some(&config));
    for symbol in common.symbols(&config)? {
        let series = load_series(&mut run, &config, &symbol)?;
        let (train, _) = split_train_test(&series, config.test_len)?;
        let path = model_path(&config, &symbol, kind);
        match kind {
            ModelKind::Arima => {
                let model = auto_arima(train.mid(), config.arima_grid, config.criterion)?;
                run.json(&path, &model)?;
            }
            ModelKind::LstmMse | ModelKind::LstmDirectional => {
                let (model, curve) = fit_forecaster(train.mid(), &config.lstm)?;
                run.json(&path, &model)?;
                let mut csv = String::from("epoch,train,validation\n");
                for e in &curve {
                    let v = e.validation.map_or_else(String::new, |v| v.to_string());
                    let _ = writeln!(csv, "{},{},{v}", e.epoch, e.train);
                }
                let loss_path = path.with_extension("loss.csv");
                run.output(&loss_path, csv.as_bytes())?;
            }
            ModelKind::Persistence => run.json(&path, &PersistenceDoc { model: kind })?,
        }
    }
    run.finish(&manifest_path(&config, &format!("fit.{kind}")))
}

fn load_model(run: &mut Run, path: &Path, kind: ModelKind) -> Result<Fitted> {
    let bytes = run.input(path)?;
    Ok(match kind {
        ModelKind::Arima => Fitted::Arima(serde_json::from_slice(&bytes)?),
        ModelKind::LstmMse | ModelKind::LstmDirectional => {
            let model: LstmModel = serde_json::from_slice(&bytes)?;
            if model.kind() != kind {
                return Err(Error::invalid(format!(
                    "{} holds a {} model",
                    path.display(),
                    model.kind()
                )));
            }
            Fitted::Lstm(model)
        }
        ModelKind::Persistence => {
            let _: PersistenceDoc = serde_json::from_slice(&bytes)?;
            Fitted::Persistence
        }
    })
}

fn eval(common: &Common) -> Result<()> {
    let config = common.resolve()?;
    let kind = config.model();
    let mut run = Run::new("eval", Some(&config));
    for symbol in common.symbols(&config)? {
        let series = load_series(&mut run, &config, &symbol)?;
        let fitted = load_model(&mut run, &model_path(&config, &symbol, kind), kind)?;
        let horizon = match &fitted {
            Fitted::Lstm(m) => m.config().horizon,
            _ => config.lstm.horizon,
        };
        let result = walk_forward_eval(
            fitted.forecaster(),
            &series,
            config.test_len,
            fitted.context(&config),
            horizon,
        )?;
        run.json(&eval_path(&config, &symbol, kind), &result)?;
    }
    run.finish(&manifest_path(&config, &format!("eval.{kind}")))
}

const ALL_KINDS: [ModelKind; 4] = [
    ModelKind::Arima,
    ModelKind::LstmMse,
    ModelKind::LstmDirectional,
    ModelKind::Persistence,
];

struct BacktestArgs<'a> {
    wealth: Option<f64>,
    exclude: &'a [String],
    days: Option<usize>,
    models: &'a [ModelKind],
    decisions: bool,
}

fn backtest(common: &Common, args: BacktestArgs<'_>) -> Result<()> {
    let config = common.resolve()?;
    let symbols = common.symbols(&config)?;
    for s in args.exclude {
        if !symbols.contains(s) {
            return Err(Error::invalid(format!("cannot exclude unknown symbol {s}")));
        }
    }
    let mut run = Run::new("backtest", Some(&config));
    let kinds: Vec<ModelKind> = if args.models.is_empty() {
        ALL_KINDS
            .into_iter()
            .filter(|&k| symbols.iter().any(|s| eval_path(&config, s, k).is_file()))
            .collect()
    } else {
        let mut k = args.models.to_vec();
        k.sort();
        k.dedup();
        k
    };
    if kinds.is_empty() {
        return Err(Error::invalid(format!(
            "no evaluation results under {}",
            config.output_dir.join("eval").display()
        )));
    }
    let mut results = Vec::new();
    for &kind in &kinds {
        for symbol in &symbols {
            let path = eval_path(&config, symbol, kind);
            let bytes = run.input(&path)?;
            let r: EvalResult = serde_json::from_slice(&bytes)?;
            results.push(r);
        }
    }
    let wealth = args.wealth.unwrap_or(config.initial_wealth);
    let days = args.days.or((config.backtest_days > 0).then_some(config.backtest_days));
    run.arg("wealth", wealth);
    run.arg("models", kinds.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(","));
    let mut excluded = args.exclude.to_vec();
    excluded.sort();
    excluded.dedup();
    run.arg("exclude", excluded.join(","));
    run.arg("days", days.map_or_else(|| "all".to_string(), |d| d.to_string()));
    run.arg("decisions", args.decisions);

    let report = compare_strategies(&results, wealth, &excluded, days)?;
    let dir = config.output_dir.join("backtest");
    run.output(&dir.join("networth.csv"), report.net_worth_csv().as_bytes())?;
    if args.decisions {
        run.output(&dir.join("decisions.csv"), report.decision_log_csv().as_bytes())?;
    }
    run.json(&dir.join("report.json"), &report)?;
    run.finish(&manifest_path(&config, "backtest"))
}

fn sweep(common: &Common) -> Result<()> {
    let config = common.resolve()?;
    let mut run = Run::new("sweep", Some(&config));
    for symbol in common.symbols(&config)? {
        let series = load_series(&mut run, &config, &symbol)?;
        let grid = sweep_grid(
            &series,
            config.test_len,
            &config.sweep_windows,
            &config.sweep_horizons,
            &config.lstm,
        );
        let path = config.output_dir.join("sweep").join(format!("{symbol}.csv"));
        run.output(&path, grid.to_csv().as_bytes())?;
        for cell in grid.cells.iter().filter(|c| c.error.is_some()) {
            run.arg(
                &format!("failed.{symbol}.{}x{}", cell.window, cell.horizon),
                cell.error.as_deref().unwrap_or_default(),
            );
        }
    }
    run.finish(&manifest_path(&config, "sweep"))
}

#[derive(Serialize)]
struct EvalSummary {
    symbol: String,
    model: ModelKind,
    mse_raw: f64,
    window: usize,
    horizon: usize,
    days: usize,
}

#[derive(Serialize)]
struct Report {
    config: BTreeMap<String, String>,
    evaluations: Vec<EvalSummary>,
    backtest: Option<serde_json::Value>,
    manifests: BTreeMap<String, Manifest>,
}

fn report(common: &Common) -> Result<()> {
    let config = common.resolve()?;
    let mut run = Run::new("report", Some(&config));
    let mut evaluations = Vec::new();
    for symbol in common.symbols(&config)? {
        for kind in ALL_KINDS {
            let path = eval_path(&config, &symbol, kind);
            if path.is_file() {
                let r: EvalResult = serde_json::from_slice(&run.input(&path)?)?;
                evaluations.push(EvalSummary {
                    symbol: r.symbol,
                    model: r.model,
                    mse_raw: r.mse_raw,
                    window: r.window,
                    horizon: r.horizon,
                    days: r.predictions.len(),
                });
            }
        }
    }
    let backtest_path = config.output_dir.join("backtest").join("report.json");
    let backtest = if backtest_path.is_file() {
        Some(serde_json::from_slice(&run.input(&backtest_path)?)?)
    } else {
        None
    };
    let mut manifests = BTreeMap::new();
    let mut entries: Vec<PathBuf> = match fs::read_dir(&config.output_dir) {
        Ok(dir) => dir.filter_map(|e| e.ok().map(|e| e.path())).collect(),
        Err(_) => Vec::new(),
    };
    entries.sort();
    for path in entries {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(stem) = name.strip_suffix(".manifest.json") {
            if stem == "report" {
                continue;
            }
            let m: Manifest = serde_json::from_slice(&run.input(&path)?)?;
            manifests.insert(stem.to_string(), m);
        }
    }
    if evaluations.is_empty() && backtest.is_none() && manifests.is_empty() {
        return Err(Error::invalid(format!(
            "nothing to report under {}",
            config.output_dir.display()
        )));
    }
    let doc = Report {
        config: config.resolved(),
        evaluations,
        backtest,
        manifests,
    };
    run.json(&config.output_dir.join("report.json"), &doc)?;
    run.finish(&manifest_path(&config, "report"))
}

fn ingest(csv: &Path, symbol: &str, out: &Path) -> Result<()> {
    let mut run = Run::new("ingest", None);
    run.arg("symbol", symbol);
    let bytes = run.input(csv)?;
    let series = crate::market_data::load_series(bytes.as_slice(), symbol)?;
    run.json(out, &series)?;
    let mut manifest = out.as_os_str().to_owned();
    manifest.push(".manifest.json");
    run.finish(Path::new(&manifest))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { csv, symbol, out } => ingest(&csv, &symbol, &out),
        Command::Fit { common } => fit(&common),
        Command::Eval { common } => eval(&common),
        Command::Backtest {
            common,
            wealth,
            exclude,
            days,
            models,
            decisions,
        } => backtest(
            &common,
            BacktestArgs {
                wealth,
                exclude: &exclude,
                days,
                models: &models,
                decisions,
            },
        ),
        Command::Sweep { common } => sweep(&common),
        Command::Report { common } => report(&common),
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit status. Failures print one line to stderr.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let line = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments");
            eprintln!("stockcast: {line}");
            return 2;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("stockcast: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}
