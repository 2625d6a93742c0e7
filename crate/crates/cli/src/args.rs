use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hiboost::{CubicMode, FourthOrderFormula, LossKind, Order};

#[derive(Debug, Parser)]
#[command(
    name = "hiboost",
    version,
    about = "Gradient-boosted trees with second, third and fourth order leaf updates"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and save it as JSON.
    Train(TrainArgs),
    /// Write raw scores (and probabilities for logloss) for a CSV.
    Predict(PredictArgs),
    /// Print mean loss and accuracy of a model on a labeled CSV.
    Eval(EvalArgs),
    /// Compare orders by rounds and time to reach 99% of the best order-2 accuracy.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct CsvArgs {
    /// Label column: header name, or 0-based index.
    #[arg(long, default_value = "label")]
    pub label: String,
    /// The CSV files have no header row.
    #[arg(long)]
    pub no_header: bool,
    /// Read at most this many data rows from each file.
    #[arg(long, value_name = "N")]
    pub row_limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long, value_name = "CSV", required_unless_present = "synthetic")]
    pub train: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    pub valid: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    pub test: Option<PathBuf>,
    /// Generate train/valid/test data instead: N training rows with M
    /// features, plus N/4 validation and N/4 test rows.
    #[arg(
        long,
        value_name = "N,M",
        value_parser = parse_synthetic,
        conflicts_with_all = ["train", "valid", "test"]
    )]
    pub synthetic: Option<(usize, usize)>,
    #[command(flatten)]
    pub csv: CsvArgs,
}

/// Settings shared by every trained configuration.
#[derive(Debug, Args)]
pub struct BaseArgs {
    #[arg(long, value_enum, default_value_t = LossArg::Logloss)]
    pub loss: LossArg,
    #[arg(long, value_enum, default_value_t = CubicArg::Halley)]
    pub cubic_mode: CubicArg,
    #[arg(long, value_enum, default_value_t = FourthArg::Classical)]
    pub fourth_order_formula: FourthArg,
    #[arg(long, default_value_t = 6)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 1)]
    pub min_child_rows: usize,
    /// A split must improve the objective by strictly more than this.
    #[arg(long, default_value_t = 0.0)]
    pub min_gain: f64,
    /// Fall back to Newton when |G1 G3 / H^2| exceeds this.
    #[arg(long, default_value_t = 1.0)]
    pub trust_alpha: f64,
    /// Seed for synthetic data; recorded in the model.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub base: BaseArgs,
    #[arg(long, default_value_t = Order::Second, value_parser = parse_order)]
    pub order: Order,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Learning rate.
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    #[arg(long, default_value_t = 100)]
    pub rounds: usize,
    /// Stop after this many rounds without a lower validation loss.
    #[arg(long, value_name = "ROUNDS")]
    pub early_stop: Option<usize>,
    /// Where to write the model.
    #[arg(long, value_name = "JSON")]
    pub model: PathBuf,
    /// Per-round convergence CSV.
    #[arg(long, value_name = "CSV")]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "JSON")]
    pub model: PathBuf,
    #[arg(long, visible_alias = "test", value_name = "CSV")]
    pub data: PathBuf,
    /// Drop this column before predicting, if the file has labels.
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub no_header: bool,
    #[arg(long, value_name = "N")]
    pub row_limit: Option<usize>,
    /// Output CSV; standard output when omitted.
    #[arg(long, value_name = "CSV")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "JSON")]
    pub model: PathBuf,
    #[arg(long, visible_alias = "test", value_name = "CSV")]
    pub data: PathBuf,
    #[command(flatten)]
    pub csv: CsvArgs,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub base: BaseArgs,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4", value_parser = parse_order)]
    pub orders: Vec<Order>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "1,10,100,1000,10000,100000,1000000"
    )]
    pub lambda_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,1")]
    pub eta_grid: Vec<f64>,
    /// Round budget per configuration.
    #[arg(long, default_value_t = 200)]
    pub rounds: usize,
    /// Per-configuration table as CSV.
    #[arg(long, value_name = "CSV")]
    pub report: Option<PathBuf>,
    /// Directory for one convergence CSV per configuration.
    #[arg(long, value_name = "DIR")]
    pub curves_dir: Option<PathBuf>,
    /// Train every configuration for the full budget instead of stopping at
    /// the threshold.
    #[arg(long, conflicts_with = "prune")]
    pub full_curves: bool,
    /// Cut a higher-order configuration short once it has used as many
    /// rounds as the fastest one of its order so far.
    #[arg(long)]
    pub prune: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Logloss,
    #[value(name = "squared_error")]
    SquaredError,
}

impl From<LossArg> for LossKind {
    fn from(arg: LossArg) -> LossKind {
        match arg {
            LossArg::Logloss => LossKind::LogLoss,
            LossArg::SquaredError => LossKind::SquaredError,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CubicArg {
    Halley,
    Exact,
    Series,
}

impl From<CubicArg> for CubicMode {
    fn from(arg: CubicArg) -> CubicMode {
        match arg {
            CubicArg::Halley => CubicMode::Halley,
            CubicArg::Exact => CubicMode::ExactRoot,
            CubicArg::Series => CubicMode::Series,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FourthArg {
    Classical,
    Paper,
}

impl From<FourthArg> for FourthOrderFormula {
    fn from(arg: FourthArg) -> FourthOrderFormula {
        match arg {
            FourthArg::Classical => FourthOrderFormula::Classical,
            FourthArg::Paper => FourthOrderFormula::PaperLiteral,
        }
    }
}

fn parse_order(value: &str) -> Result<Order, String> {
    let order: usize = value
        .parse()
        .map_err(|_| format!("{value:?} is not an integer"))?;
    Order::from_usize(order).map_err(|_| format!("order must be 2, 3 or 4, got {order}"))
}

fn parse_synthetic(value: &str) -> Result<(usize, usize), String> {
    let (rows, features) = value
        .split_once(',')
        .ok_or_else(|| format!("expected N,M, got {value:?}"))?;
    let rows: usize = rows
        .trim()
        .parse()
        .map_err(|_| format!("bad row count {rows:?}"))?;
    let features: usize = features
        .trim()
        .parse()
        .map_err(|_| format!("bad feature count {features:?}"))?;
    if rows < 4 || features == 0 {
        return Err("need at least 4 rows and 1 feature".into());
    }
    Ok((rows, features))
}
