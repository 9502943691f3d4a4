//! `pilkit` command-line front end.
//!
//! Settings resolve as: command-line flag, then `--config` file, then
//! built-in default. The seed additionally falls back to `PILKIT_SEED`
//! before the default. Exit statuses: 0 success, 2 configuration error,
//! 3 data error, 4 numerical failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::activation::Activation;
use crate::dataset::{decode_argmax, load_csv, ColumnSpec, Dataset, EncodingMode, TargetEncoding};
use crate::diagnostics::{
    counterexample_fx, error_floor, fx_rank_experiment, theorem1_sweep, write_fx_csv,
    SaturationProbe, DEFAULT_FX_POINTS, DIAGNOSTIC_SCHEMA_VERSION,
};
use crate::error::PilError;
use crate::network::PilNetwork;
use crate::trainers::{train, train_pil0, Algorithm, HiddenWidth, TrainConfig, TrainReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub const SEED_ENV: &str = "PILKIT_SEED";

#[derive(Debug, Parser)]
#[command(name = "pilkit", version, about = "Pseudoinverse learning for feedforward networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network and write a `.pilnet` model plus a report.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset.
    Eval(EvalArgs),
    /// Run a rank/saturation experiment.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Diagnostic {
    Theorem1,
    FxRank,
    ErrorFloor,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV dataset.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Feature columns, e.g. `0-1` or `0,2,4-6`.
    #[arg(long)]
    pub features: Option<String>,
    /// Target columns.
    #[arg(long)]
    pub target: Option<String>,
    /// regression-raw, regression-scaled or one-hot-scaled.
    #[arg(long)]
    pub encoding: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// pil, pil0, epil or pil1.
    #[arg(long)]
    pub algo: Option<String>,
    #[command(flatten)]
    pub data: DataArgs,
    /// `auto` (one neuron per sample) or a count.
    #[arg(long)]
    pub hidden_width: Option<String>,
    #[arg(long)]
    pub stopping_error: Option<String>,
    #[arg(long)]
    pub max_depth: Option<String>,
    #[arg(long)]
    pub noise_stddev: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// `lo,hi`.
    #[arg(long, allow_hyphen_values = true)]
    pub weight_interval: Option<String>,
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub output_activation: Option<String>,
    /// Append a ones column to every hidden output.
    #[arg(long)]
    pub hidden_bias: bool,
    /// Model file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report file; defaults to the model path with `.report.json`/`.report.csv`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<ReportFormat>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `.pilnet` model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Report file; printed to stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    pub diagnostic: Diagnostic,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Sample count (theorem1: N, fx-rank and error-floor: f(x) points).
    #[arg(long)]
    pub points: Option<String>,
    #[arg(long)]
    pub hidden_width: Option<String>,
    /// theorem1: input dimension of the random inputs.
    #[arg(long)]
    pub input_dim: Option<String>,
    /// theorem1: base interval `a,b` scaled by 1/ε.
    #[arg(long, allow_hyphen_values = true)]
    pub weight_interval: Option<String>,
    /// theorem1: comma-separated, strictly decreasing ε values.
    #[arg(long)]
    pub epsilons: Option<String>,
    /// error-floor: dataset (defaults to f(x) samples).
    #[command(flatten)]
    pub data: DataArgs,
    /// Report file; printed to stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<ReportFormat>,
}

/// A failure carrying its exit status.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<PilError> for CliError {
    fn from(e: PilError) -> Self {
        let code = match &e {
            PilError::Config(_) => EXIT_CONFIG,
            PilError::Numerical(_) | PilError::InvalidMatrix(_) => EXIT_NUMERICAL,
            _ => EXIT_DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` and runs the command, returning the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Diagnose(a) => cmd_diagnose(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

/// Flat `key = value` settings; `#` starts a comment line.
#[derive(Debug, Default)]
struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    fn load(path: Option<&Path>, allowed: &[&str]) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::config(format!("{}:{}: expected `key = value`", path.display(), i + 1))
            })?;
            let key = k.trim().replace('_', "-");
            if !allowed.contains(&key.as_str()) {
                return Err(CliError::config(format!(
                    "{}:{}: unknown key {key:?}; valid keys: {}",
                    path.display(),
                    i + 1,
                    allowed.join(", ")
                )));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    /// Flag value, else file value, else `None`.
    fn get(&self, flag: &Option<String>, key: &str) -> Option<String> {
        flag.clone().or_else(|| self.values.get(key).cloned())
    }

    fn path(&self, flag: &Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.clone().or_else(|| self.values.get(key).map(PathBuf::from))
    }

    fn parse<T: FromStr>(&self, flag: &Option<String>, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(flag, key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::config(format!("bad value {v:?} for {key}: {e}")))
            })
            .transpose()
    }

    fn flag(&self, flag: bool, key: &str) -> CliResult<bool> {
        if flag {
            return Ok(true);
        }
        self.parse::<bool>(&None, key).map(|v| v.unwrap_or(false))
    }

    fn format(&self, flag: Option<ReportFormat>) -> CliResult<ReportFormat> {
        if let Some(f) = flag {
            return Ok(f);
        }
        match self.values.get("format").map(String::as_str) {
            None | Some("json") => Ok(ReportFormat::Json),
            Some("csv") => Ok(ReportFormat::Csv),
            Some(other) => Err(CliError::config(format!("bad format {other:?}; expected json or csv"))),
        }
    }

    fn seed(&self, flag: &Option<String>) -> CliResult<u64> {
        if let Some(seed) = self.parse::<u64>(flag, "seed")? {
            return Ok(seed);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
            Err(_) => Ok(0),
        }
    }
}

const DATA_KEYS: [&str; 4] = ["data", "features", "target", "encoding"];

fn keys(extra: &[&'static str]) -> Vec<&'static str> {
    DATA_KEYS.iter().chain(extra).copied().collect()
}

fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .or_else(|| s.split_once(':'))
        .ok_or_else(|| format!("expected `lo,hi`, got {s:?}"))?;
    let lo = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

fn interval(cfg: &ConfigFile, flag: &Option<String>, key: &str) -> CliResult<Option<(f64, f64)>> {
    cfg.get(flag, key)
        .map(|v| parse_interval(&v).map_err(|e| CliError::config(format!("bad {key}: {e}"))))
        .transpose()
}

fn load_dataset(cfg: &ConfigFile, args: &DataArgs, default_encoding: EncodingMode) -> CliResult<Dataset> {
    let path = cfg
        .path(&args.data, "data")
        .ok_or_else(|| CliError::config("--data is required"))?;
    let enc = encoding(cfg, args, default_encoding)?;
    let spec = column_spec(cfg, args, &path)?;
    Ok(load_csv(&path, &spec, &enc)?)
}

fn encoding(cfg: &ConfigFile, args: &DataArgs, default: EncodingMode) -> CliResult<TargetEncoding> {
    let mode = cfg.parse::<EncodingMode>(&args.encoding, "encoding")?.unwrap_or(default);
    Ok(TargetEncoding::new(mode))
}

/// Column spec from flags, defaulting to "every column but the last are
/// features, the last is the target".
fn column_spec(cfg: &ConfigFile, args: &DataArgs, path: &Path) -> CliResult<ColumnSpec> {
    let features = cfg.get(&args.features, "features");
    let target = cfg.get(&args.target, "target");
    let (features, target) = match (features, target) {
        (Some(f), Some(t)) => (f, t),
        (f, t) => {
            let width = first_line_width(path)?;
            if width < 2 {
                return Err(CliError::config(format!(
                    "{} has {width} column(s); pass --features and --target",
                    path.display()
                )));
            }
            (
                f.unwrap_or_else(|| format!("0-{}", width - 2)),
                t.unwrap_or_else(|| format!("{}", width - 1)),
            )
        }
    };
    Ok(ColumnSpec::parse(&features, &target)?)
}

fn first_line_width(path: &Path) -> CliResult<usize> {
    let text = std::fs::read_to_string(path).map_err(|source| PilError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let line = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or(PilError::EmptyDataset)?;
    Ok(line.split(',').count())
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| {
        PilError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

/// Writes `body` to `path`, or stdout when `path` is `None`.
fn emit(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CliResult<()> {
    let io_err = |p: &Path, source| -> CliError {
        PilError::Io {
            path: p.to_path_buf(),
            source,
        }
        .into()
    };
    match path {
        Some(p) => {
            let mut w = create(p)?;
            body(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(p, e))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock).map_err(|e| io_err(Path::new("<stdout>"), e))
        }
    }
}

fn write_json<T: Serialize>(w: &mut dyn Write, value: &T) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    writeln!(w)
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let cfg = ConfigFile::load(
        args.config.as_deref(),
        &keys(&[
            "algo",
            "hidden-width",
            "stopping-error",
            "max-depth",
            "noise-stddev",
            "seed",
            "weight-interval",
            "activation",
            "output-activation",
            "hidden-bias",
            "out",
            "report",
            "format",
        ]),
    )?;
    let algo = cfg.parse::<Algorithm>(&args.algo, "algo")?.unwrap_or(Algorithm::Pil);
    let defaults = TrainConfig::default();
    let default_encoding = default_encoding(algo);
    let train_cfg = TrainConfig {
        hidden_width: cfg
            .parse::<HiddenWidth>(&args.hidden_width, "hidden-width")?
            .unwrap_or(defaults.hidden_width),
        stopping_error: cfg
            .parse(&args.stopping_error, "stopping-error")?
            .unwrap_or(defaults.stopping_error),
        max_depth: cfg.parse(&args.max_depth, "max-depth")?.unwrap_or(defaults.max_depth),
        noise_stddev: cfg
            .parse(&args.noise_stddev, "noise-stddev")?
            .unwrap_or(defaults.noise_stddev),
        seed: cfg.seed(&args.seed)?,
        weight_interval: interval(&cfg, &args.weight_interval, "weight-interval")?
            .unwrap_or(defaults.weight_interval),
        activation: cfg
            .parse::<Activation>(&args.activation, "activation")?
            .unwrap_or(defaults.activation),
        output_activation: cfg.parse::<Activation>(&args.output_activation, "output-activation")?,
        hidden_bias: cfg.flag(args.hidden_bias, "hidden-bias")?,
        target_encoding: encoding(&cfg, &args.data, default_encoding)?,
    };
    train_cfg.validate()?;
    let format = cfg.format(args.format)?;
    let data = load_dataset(&cfg, &args.data, default_encoding)?;

    let (net, report) = train(algo, &data, &train_cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let out = cfg.path(&args.out, "out").unwrap_or_else(|| PathBuf::from("model.pilnet"));
    net.save(&out)?;
    let report_path = cfg.path(&args.report, "report").unwrap_or_else(|| {
        let ext = match format {
            ReportFormat::Json => "report.json",
            ReportFormat::Csv => "report.csv",
        };
        out.with_extension(ext)
    });
    emit(Some(&report_path), |w| match format {
        ReportFormat::Json => write_json(w, &report),
        ReportFormat::Csv => write_train_csv(w, &report),
    })?;
    println!(
        "{algo}: sse {:e}, depth {}, stop {}; model {}, report {}",
        report.final_sse,
        report.depth_used,
        report.stop_reason,
        out.display(),
        report_path.display()
    );
    Ok(())
}

/// Single hidden layer trainers invert the output activation, so their
/// targets default to the scaled encoding; the deep trainers solve for raw
/// targets with a linear output.
fn default_encoding(algo: Algorithm) -> EncodingMode {
    match algo {
        Algorithm::Pil | Algorithm::Pil0 => EncodingMode::RegressionScaled,
        Algorithm::Epil | Algorithm::Pil1 => EncodingMode::RegressionRaw,
    }
}

fn write_train_csv(w: &mut dyn Write, report: &TrainReport) -> io::Result<()> {
    writeln!(w, "layer,rows,cols,rank,condition,projector_residual")?;
    for l in &report.per_layer {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            l.layer, l.rows, l.cols, l.rank.numerical_rank, l.rank.condition_estimate, l.projector_residual
        )?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub model: String,
    pub data: String,
    pub n_samples: usize,
    pub sse: f64,
    /// Argmax agreement with the targets, for one-hot encodings.
    pub accuracy: Option<f64>,
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let cfg = ConfigFile::load(args.config.as_deref(), &keys(&["model", "report"]))?;
    let model = cfg
        .path(&args.model, "model")
        .ok_or_else(|| CliError::config("--model is required"))?;
    let net = PilNetwork::load(&model)?;
    let encoding = net
        .meta()
        .algorithm
        .parse::<Algorithm>()
        .map(default_encoding)
        .unwrap_or(EncodingMode::RegressionRaw);
    let data = load_dataset(&cfg, &args.data, encoding)?;
    if data.x().cols() != net.input_width() {
        return Err(PilError::shape(
            "model input width vs dataset (features + bias)",
            net.input_width(),
            data.x().cols(),
        )
        .into());
    }
    if data.t().cols() != net.output_width() {
        return Err(PilError::shape("model output width vs dataset targets", net.output_width(), data.t().cols()).into());
    }
    let out = net.forward(data.x())?;
    let sse = crate::linalg::frobenius_error(&out, data.t())?;
    let accuracy = (data.encoding().mode == EncodingMode::OneHotScaled).then(|| {
        let hits = decode_argmax(&out)
            .into_iter()
            .zip(decode_argmax(data.t()))
            .filter(|(a, b)| a == b)
            .count();
        hits as f64 / data.len() as f64
    });
    let report = EvalReport {
        schema_version: DIAGNOSTIC_SCHEMA_VERSION,
        model: model.display().to_string(),
        data: data.source().to_string(),
        n_samples: data.len(),
        sse,
        accuracy,
    };
    emit(cfg.path(&args.report, "report").as_deref(), |w| write_json(w, &report))
}

#[derive(Debug, Serialize)]
pub struct ErrorFloorReport {
    pub schema_version: u32,
    pub data: String,
    pub n_samples: usize,
    pub hidden_width: usize,
    pub seed: u64,
    /// `‖P T − T‖_F` with `P = H H⁺`.
    pub floor: f64,
    /// `‖H W − T‖_F` reached by `pil0` with a linear output layer.
    pub trainer_residual: f64,
    pub difference: f64,
}

pub fn cmd_diagnose(args: &DiagnoseArgs) -> CliResult<()> {
    let cfg = ConfigFile::load(
        args.config.as_deref(),
        &keys(&[
            "activation",
            "seed",
            "points",
            "hidden-width",
            "input-dim",
            "weight-interval",
            "epsilons",
            "report",
            "format",
        ]),
    )?;
    let seed = cfg.seed(&args.seed)?;
    let format = cfg.format(args.format)?;
    let report_path = cfg.path(&args.report, "report");
    match args.diagnostic {
        Diagnostic::Theorem1 => {
            let defaults = SaturationProbe::default();
            let epsilon_schedule = match cfg.get(&args.epsilons, "epsilons") {
                Some(list) => list
                    .split(',')
                    .map(|e| {
                        e.trim()
                            .parse::<f64>()
                            .map_err(|_| CliError::config(format!("bad epsilon {e:?}")))
                    })
                    .collect::<CliResult<Vec<_>>>()?,
                None => defaults.epsilon_schedule.clone(),
            };
            let probe = SaturationProbe {
                activation: cfg
                    .parse::<Activation>(&args.activation, "activation")?
                    .unwrap_or(defaults.activation),
                weight_interval: interval(&cfg, &args.weight_interval, "weight-interval")?
                    .unwrap_or(defaults.weight_interval),
                epsilon_schedule,
                n_samples: cfg.parse(&args.points, "points")?.unwrap_or(defaults.n_samples),
                n_features: cfg.parse(&args.input_dim, "input-dim")?.unwrap_or(defaults.n_features),
                seed,
                ..defaults
            };
            let sweep = theorem1_sweep(&probe)?;
            emit(report_path.as_deref(), |w| match format {
                ReportFormat::Json => write_json(w, &sweep),
                ReportFormat::Csv => sweep.write_csv(w),
            })
        }
        Diagnostic::FxRank => {
            let points = cfg.parse(&args.points, "points")?.unwrap_or(DEFAULT_FX_POINTS);
            let width = cfg.parse(&args.hidden_width, "hidden-width")?.unwrap_or(points);
            let report = fx_rank_experiment(points, width, seed)?;
            emit(report_path.as_deref(), |w| match format {
                ReportFormat::Json => write_json(w, &report),
                ReportFormat::Csv => write_fx_csv(&counterexample_fx(points).expect("validated"), w),
            })
        }
        Diagnostic::ErrorFloor => {
            let data = if cfg.path(&args.data.data, "data").is_some() {
                load_dataset(&cfg, &args.data, EncodingMode::RegressionRaw)?
            } else {
                counterexample_fx(cfg.parse(&args.points, "points")?.unwrap_or(DEFAULT_FX_POINTS))?
            };
            let width: usize = cfg
                .parse(&args.hidden_width, "hidden-width")?
                .ok_or_else(|| CliError::config("error-floor needs --hidden-width below the sample count"))?;
            let floor = error_floor(&data, width, seed)?;
            let train_cfg = TrainConfig {
                hidden_width: HiddenWidth::Fixed(width),
                seed,
                output_activation: Some(Activation::Linear),
                ..TrainConfig::default()
            };
            let (_, trained) = train_pil0(&data, &train_cfg)?;
            let report = ErrorFloorReport {
                schema_version: DIAGNOSTIC_SCHEMA_VERSION,
                data: data.source().to_string(),
                n_samples: data.len(),
                hidden_width: width,
                seed,
                floor,
                trainer_residual: trained.target_residual,
                difference: (floor - trained.target_residual).abs(),
            };
            emit(report_path.as_deref(), |w| match format {
                ReportFormat::Json => write_json(w, &report),
                ReportFormat::Csv => {
                    writeln!(w, "floor,trainer_residual")?;
                    writeln!(w, "{},{}", report.floor, report.trainer_residual)
                }
            })
        }
    }
}
