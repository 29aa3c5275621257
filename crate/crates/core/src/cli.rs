//! Command-line orchestration: train / spectrum / thermo / ensemble / toy.
//!
//! Configuration comes from an optional flat key-value file (`key = value`
//! lines, `#` comments) with command-line flags taking precedence. All CSV
//! output carries a header row and shortest-round-trip decimal reals, so
//! identical configs produce bit-identical files.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numeric or
//! convergence error.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::dataio::{self, DataError, Dataset};
use crate::ensemble::{metropolis_sample, EnsembleError, McConfig, WindowMode};
use crate::linalg::LinalgError;
use crate::loss::LossError;
use crate::septuple::{Activation, LossKind, Septuple, SeptupleError, Topology};
use crate::spectral::{
    self, analyze, first_law_residuals, linear_fit, thermo_record, GramMode, SpectralError,
    ThermoRecord, ThermoTrace,
};
use crate::trainer::{sgd_train, TrainConfig, TrainError};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SeptupleError> for CliError {
    fn from(e: SeptupleError) -> Self {
        match e {
            SeptupleError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::BadConfig(_) | TrainError::EmptyDataset => CliError::Config(e.to_string()),
            TrainError::Septuple(inner) => inner.into(),
            TrainError::Loss(inner) => inner.into(),
            TrainError::Spectral(inner) => inner.into(),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<LossError> for CliError {
    fn from(e: LossError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::EmptyDataset => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<LinalgError> for CliError {
    fn from(e: LinalgError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::TooLarge { .. }
            | EnsembleError::NoFreeComponents
            | EnsembleError::BadConfig(_) => CliError::Config(e.to_string()),
            EnsembleError::Septuple(inner) => inner.into(),
            EnsembleError::Spectral(inner) => inner.into(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "thermolearn",
    about = "Train feedforward networks and compute their spectral and thermodynamic diagnostics"
)]
pub struct Cli {
    /// Flat key-value config file; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a network and emit the training log, thermodynamic records and
    /// checkpoints.
    Train(TrainArgs),
    /// Spectrum and log-eigenvalue histogram of a checkpoint.
    Spectrum(SpectrumArgs),
    /// Thermodynamic records for a sweep of checkpoints.
    Thermo(ThermoArgs),
    /// Monte Carlo ensemble estimates on a small random network.
    Ensemble(EnsembleArgs),
    /// Two-peak toy model curves of −ΔF(log λ).
    Toy(ToyArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Data source: synth | mnist | cache.
    #[arg(long)]
    pub data: Option<String>,
    /// Cached dataset path (source = cache).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub mnist_images: Option<PathBuf>,
    #[arg(long)]
    pub mnist_labels: Option<PathBuf>,
    /// Image downsampling factor: 1, 2 or 4.
    #[arg(long)]
    pub downsample: Option<usize>,
    #[arg(long)]
    pub synth_records: Option<usize>,
    #[arg(long)]
    pub synth_sigma: Option<f64>,
    #[arg(long)]
    pub synth_seed: Option<u64>,
    /// Write the resolved dataset to this cache file.
    #[arg(long)]
    pub save_dataset: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Architecture: `deep` (784-40-20-10), `shallow` (784-60-10) or
    /// explicit sizes like `64-16-8-10`.
    #[arg(long)]
    pub arch: Option<String>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training loss: boundary | bulk.
    #[arg(long)]
    pub loss: Option<String>,
    /// Quadratic local-objective coefficient.
    #[arg(long)]
    pub objective_m: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub descent_budget: Option<usize>,
    #[arg(long)]
    pub no_shuffle: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub bin_width: Option<f64>,
    /// Histogram exclusion threshold on |log λ| for pinned eigenvalues.
    #[arg(long)]
    pub min_abs_log: Option<f64>,
    /// Operator linearization: mean | record-avg.
    #[arg(long)]
    pub g_mode: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ThermoArgs {
    /// Directory containing checkpoint .txt files.
    #[arg(long)]
    pub checkpoints: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub descent_budget: Option<usize>,
    #[arg(long)]
    pub g_mode: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EnsembleArgs {
    /// Small architecture, e.g. `2-3-1` (at most 12 neurons).
    #[arg(long)]
    pub arch: Option<String>,
    /// Activation: tanh | identity.
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub objective_m: Option<f64>,
    /// Comma-separated β values.
    #[arg(long)]
    pub beta: Option<String>,
    /// Window mode: hard | gaussian | both.
    #[arg(long)]
    pub window: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ToyArgs {
    /// Comma-separated β values.
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub n_total: Option<usize>,
    /// Grid as lo:hi:points.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Key-value config file contents.
#[derive(Debug, Default)]
pub struct FileConfig(HashMap<String, String>);

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        FileConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<FileConfig, CliError> {
        let mut map = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = match line.split_once('=') {
                Some((k, v)) => (k.trim(), v.trim()),
                None => match line.split_once(char::is_whitespace) {
                    Some((k, v)) => (k.trim(), v.trim()),
                    None => {
                        return Err(CliError::Config(format!(
                            "config line {}: expected `key = value`, got {line:?}",
                            i + 1
                        )))
                    }
                },
            };
            map.insert(key.to_string(), value.to_string());
        }
        Ok(FileConfig(map))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| CliError::Config(format!("config key {key}: cannot parse {raw:?}"))),
        }
    }
}

fn pick<T: FromStr>(
    flag: Option<T>,
    file: &FileConfig,
    key: &str,
    default: T,
) -> Result<T, CliError> {
    Ok(flag.or(file.get(key)?).unwrap_or(default))
}

fn pick_opt<T: FromStr>(
    flag: Option<T>,
    file: &FileConfig,
    key: &str,
) -> Result<Option<T>, CliError> {
    Ok(flag.or(file.get(key)?))
}

fn require<T>(value: Option<T>, what: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Config(format!("missing required option --{what}")))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Train(args) => cmd_train(args, &file),
        Command::Spectrum(args) => cmd_spectrum(args, &file),
        Command::Thermo(args) => cmd_thermo(args, &file),
        Command::Ensemble(args) => cmd_ensemble(args, &file),
        Command::Toy(args) => cmd_toy(args, &file),
    }
}

fn parse_arch(spec: &str) -> Result<Vec<usize>, CliError> {
    match spec {
        "deep" => Ok(vec![784, 40, 20, 10]),
        "shallow" => Ok(vec![784, 60, 10]),
        custom => {
            let sizes = custom
                .split('-')
                .map(|t| t.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| CliError::Config(format!("bad architecture {custom:?}")))?;
            if sizes.len() < 2 || sizes.contains(&0) {
                return Err(CliError::Config(format!(
                    "architecture needs at least two positive layer sizes, got {custom:?}"
                )));
            }
            Ok(sizes)
        }
    }
}

fn parse_beta_list(spec: &str) -> Result<Vec<f64>, CliError> {
    spec.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("bad beta value {t:?}")))
        })
        .collect()
}

fn resolve_dataset(
    args: &DataArgs,
    file: &FileConfig,
    input_dim: usize,
    output_dim: usize,
    default_seed: u64,
) -> Result<Dataset, CliError> {
    let source = pick(args.data.clone(), file, "data", "synth".to_string())?;
    let ds = match source.as_str() {
        "synth" => {
            let records = pick(args.synth_records, file, "synth_records", 1000)?;
            let sigma = pick(args.synth_sigma, file, "synth_sigma", 0.2)?;
            let seed = pick(args.synth_seed, file, "synth_seed", default_seed)?;
            dataio::synth(records, input_dim, output_dim, sigma, seed)?
        }
        "mnist" => {
            let images = require(
                pick_opt(args.mnist_images.clone(), file, "mnist_images")?,
                "mnist-images",
            )?;
            let labels = require(
                pick_opt(args.mnist_labels.clone(), file, "mnist_labels")?,
                "mnist-labels",
            )?;
            let factor = pick(args.downsample, file, "downsample", 1)?;
            let raw = dataio::read_idx(&images, &labels)?;
            let ds = dataio::encode(&raw, factor)?;
            if ds.input_dim != input_dim || ds.output_dim != output_dim {
                return Err(CliError::Config(format!(
                    "dataset is {}-in/{}-out but the network expects {input_dim}/{output_dim}; \
                     adjust --arch or --downsample",
                    ds.input_dim, ds.output_dim
                )));
            }
            ds
        }
        "cache" => {
            let path = require(pick_opt(args.dataset.clone(), file, "dataset")?, "dataset")?;
            let ds = Dataset::load(&path)?;
            if ds.input_dim != input_dim || ds.output_dim != output_dim {
                return Err(CliError::Config(format!(
                    "cached dataset is {}-in/{}-out but the network expects {input_dim}/{output_dim}",
                    ds.input_dim, ds.output_dim
                )));
            }
            ds
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown data source {other:?} (expected synth, mnist or cache)"
            )))
        }
    };
    if let Some(path) = pick_opt(args.save_dataset.clone(), file, "save_dataset")? {
        ds.save(&path)?;
    }
    Ok(ds)
}

fn parse_g_mode(flag: Option<String>, file: &FileConfig) -> Result<GramMode, CliError> {
    let mode = pick(flag, file, "g_mode", "mean".to_string())?;
    match mode.as_str() {
        "mean" => Ok(GramMode::MeanState),
        "record-avg" => Ok(GramMode::RecordAveraged),
        other => Err(CliError::Config(format!(
            "unknown g-mode {other:?} (expected mean or record-avg)"
        ))),
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

fn cmd_train(args: TrainArgs, file: &FileConfig) -> Result<(), CliError> {
    let arch_spec = pick(args.arch, file, "arch", "deep".to_string())?;
    let sizes = parse_arch(&arch_spec)?;
    let out = require(pick_opt(args.out, file, "out")?, "out")?;
    let seed = pick(args.seed, file, "seed", 0)?;
    let loss_name = pick(args.loss, file, "loss", "boundary".to_string())?;
    let loss_kind = LossKind::from_name(&loss_name)
        .ok_or_else(|| CliError::Config(format!("unknown loss kind {loss_name:?}")))?;
    let cfg = TrainConfig {
        epochs: pick(args.epochs, file, "epochs", 2000)?,
        batch_size: pick(args.batch_size, file, "batch_size", 32)?,
        learning_rate: pick(args.lr, file, "lr", 0.05)?,
        seed,
        loss_kind,
        shuffle: !args.no_shuffle,
        checkpoint_every: pick(args.checkpoint_every, file, "checkpoint_every", 50)?,
        theta: pick(args.theta, file, "theta", spectral::DEFAULT_THETA)?,
        descent_budget: pick(args.descent_budget, file, "descent_budget", 30)?,
    };
    let objective_m = pick(args.objective_m, file, "objective_m", 0.0)?;

    let data = resolve_dataset(&args.data, file, sizes[0], sizes[sizes.len() - 1], seed)?;

    let topology = Topology::layered(&sizes).map_err(|e| CliError::Config(e.to_string()))?;
    let mut net = Septuple::random(topology, Activation::Tanh, seed);
    net.objective_coeff = objective_m;
    net.loss_kind = loss_kind;

    std::fs::create_dir_all(out.join("checkpoints"))?;
    let mut trace = ThermoTrace::default();
    let checkpoint_dir = out.join("checkpoints");
    let train_result = sgd_train(&mut net, &data, &cfg, &mut trace, |s, epoch| {
        s.save(&checkpoint_dir.join(format!("epoch_{epoch:06}.txt")))
            .map_err(|e| TrainError::Checkpoint(e.to_string()))
    });
    // emit whatever was logged even when training aborted
    write_train_log(&out.join("train_log.csv"), &trace)?;
    write_thermo_csv(&out.join("thermo.csv"), &trace.records)?;
    std::fs::write(out.join("train_log.gp"), TRAIN_LOG_GP)?;
    std::fs::write(out.join("thermo.gp"), THERMO_GP)?;
    train_result?;

    if let (Some(first), Some(last)) = (trace.epochs.first(), trace.epochs.last()) {
        println!(
            "trained {arch_spec} for {} epochs on {} records: boundary loss {:.6e} -> {:.6e}",
            cfg.epochs,
            data.len(),
            first.u_boundary,
            last.u_boundary
        );
    }
    println!("wrote {}", out.join("train_log.csv").display());
    println!("wrote {}", out.join("thermo.csv").display());
    Ok(())
}

fn write_train_log(path: &Path, trace: &ThermoTrace) -> Result<(), CliError> {
    let mut out = String::from("epoch,u_boundary,u_bulk_forward\n");
    for row in &trace.epochs {
        let _ = writeln!(
            out,
            "{},{},{}",
            row.epoch, row.u_boundary, row.u_bulk_forward
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "nan".to_string(),
    }
}

pub const THERMO_HEADER: &str = "epoch,beta_gap,beta_selfconsistent,U_bulk,U_boundary,F,A,\
C_theta,C_20,C_Nminus20,S_total,S_thermo,mu2,mu3,sum_log,n_greater,gap_location";

fn write_thermo_csv(path: &Path, records: &[ThermoRecord]) -> Result<(), CliError> {
    let mut out = String::from(THERMO_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            fmt_opt(r.beta_gap),
            fmt_opt(r.beta_selfconsistent),
            r.u_bulk,
            r.u_boundary,
            r.f,
            r.a,
            r.c_theta,
            r.c_20,
            r.c_n_minus_20,
            r.s_total,
            r.s_thermo,
            r.mu2,
            r.mu3,
            r.sum_log,
            r.n_greater,
            fmt_opt(r.gap_location),
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

const TRAIN_LOG_GP: &str = "set datafile separator ','\n\
set key autotitle columnhead\n\
set logscale y\n\
set xlabel 'epoch'\n\
set ylabel 'loss'\n\
plot 'train_log.csv' using 1:2 with lines title 'boundary', \\\n\
     'train_log.csv' using 1:3 with lines title 'bulk (forward)'\n";

const THERMO_GP: &str = "set datafile separator ','\n\
set key autotitle columnhead\n\
set xlabel 'epoch'\n\
plot 'thermo.csv' using 1:9 with lines title 'C_20', \\\n\
     'thermo.csv' using 1:10 with lines title 'C_{N-20}'\n";

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

fn cmd_spectrum(args: SpectrumArgs, file: &FileConfig) -> Result<(), CliError> {
    let checkpoint = require(pick_opt(args.checkpoint, file, "checkpoint")?, "checkpoint")?;
    let out = require(pick_opt(args.out, file, "out")?, "out")?;
    let theta = pick(args.theta, file, "theta", spectral::DEFAULT_THETA)?;
    let bin_width = pick(args.bin_width, file, "bin_width", 0.25)?;
    let min_abs_log = pick(
        args.min_abs_log,
        file,
        "min_abs_log",
        spectral::PINNED_LOG_EPS,
    )?;
    let mode = parse_g_mode(args.g_mode, file)?;
    if bin_width <= 0.0 {
        return Err(CliError::Config("bin_width must be positive".into()));
    }

    let net = Septuple::load(&checkpoint)?;
    let data = resolve_dataset(
        &args.data,
        file,
        net.topology().input_ids().len(),
        net.topology().output_ids().len(),
        net.seed,
    )?;
    let report = analyze(&net, &data, theta, mode)?;

    std::fs::create_dir_all(&out)?;
    let mut spec_csv = String::from("index,lambda,log_lambda\n");
    for (i, (l, u)) in report
        .lambdas
        .iter()
        .zip(report.log_lambdas.iter())
        .enumerate()
    {
        let _ = writeln!(spec_csv, "{i},{l},{u}");
    }
    std::fs::write(out.join("spectrum.csv"), spec_csv)?;

    let dynamical: Vec<f64> = report
        .log_lambdas
        .iter()
        .copied()
        .filter(|u| u.abs() >= min_abs_log)
        .collect();
    let pinned = report.log_lambdas.len() - dynamical.len();
    let mut hist_csv = String::from("bin_left,bin_right,count\n");
    for (left, right, count) in histogram(&dynamical, bin_width) {
        let _ = writeln!(hist_csv, "{left},{right},{count}");
    }
    std::fs::write(out.join("histogram.csv"), hist_csv)?;
    std::fs::write(out.join("histogram.gp"), HISTOGRAM_GP)?;

    println!(
        "spectrum: {} eigenvalues, {} dynamical ({} pinned at |log lambda| < {min_abs_log:e})",
        report.lambdas.len(),
        dynamical.len(),
        pinned
    );
    println!("sum log lambda = {:e}", report.sum_log);
    println!("mu2 = {}, mu3 = {}", report.mu2, report.mu3);
    match (report.beta_gap, report.gap_location) {
        (Some(b), Some(g)) => println!("gap at log lambda = {g}, beta estimate {b}"),
        _ => println!("no spectral gap identified"),
    }
    println!("wrote {}", out.join("spectrum.csv").display());
    println!("wrote {}", out.join("histogram.csv").display());
    Ok(())
}

fn histogram(values: &[f64], width: f64) -> Vec<(f64, f64, usize)> {
    if values.is_empty() {
        return Vec::new();
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo_idx = (min / width).floor() as i64;
    let hi_idx = (max / width).floor() as i64;
    let mut counts = vec![0usize; (hi_idx - lo_idx + 1) as usize];
    for &v in values {
        let idx = ((v / width).floor() as i64 - lo_idx) as usize;
        counts[idx] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .filter(|(_, c)| *c > 0)
        .map(|(i, c)| {
            let left = (lo_idx + i as i64) as f64 * width;
            (left, left + width, c)
        })
        .collect()
}

const HISTOGRAM_GP: &str = "set datafile separator ','\n\
set key autotitle columnhead\n\
set style fill solid 0.6\n\
set xlabel 'log lambda'\n\
set ylabel 'count'\n\
plot 'histogram.csv' using (($1+$2)/2):3:($2-$1) with boxes title 'dynamical eigenvalues'\n";

// ---------------------------------------------------------------------------
// thermo
// ---------------------------------------------------------------------------

fn cmd_thermo(args: ThermoArgs, file: &FileConfig) -> Result<(), CliError> {
    let dir = require(
        pick_opt(args.checkpoints, file, "checkpoints")?,
        "checkpoints",
    )?;
    let out = require(pick_opt(args.out, file, "out")?, "out")?;
    let theta = pick(args.theta, file, "theta", spectral::DEFAULT_THETA)?;
    let budget = pick(args.descent_budget, file, "descent_budget", 30)?;
    let mode = parse_g_mode(args.g_mode, file)?;

    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "txt").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.len() < 2 {
        return Err(CliError::Config(format!(
            "need at least 2 checkpoints in {}, found {}",
            dir.display(),
            paths.len()
        )));
    }

    let first = Septuple::load(&paths[0])?;
    let data = resolve_dataset(
        &args.data,
        file,
        first.topology().input_ids().len(),
        first.topology().output_ids().len(),
        first.seed,
    )?;

    let mut records = Vec::with_capacity(paths.len());
    for path in &paths {
        let net = Septuple::load(path)?;
        let report = analyze(&net, &data, theta, mode)?;
        let (u_boundary, u_bulk) = crate::loss::dataset_losses(
            &net,
            &data.records,
            crate::loss::MinimizeMode::Descent,
            budget,
        )?;
        records.push(thermo_record(net.epoch, &report, u_bulk, u_boundary));
    }
    records.sort_by_key(|r| r.epoch);

    std::fs::create_dir_all(&out)?;
    write_thermo_csv(&out.join("thermo.csv"), &records)?;
    std::fs::write(out.join("thermo.gp"), THERMO_GP)?;

    // complexity-vs-log-loss fit over the last 80% of checkpoints
    let start = records.len() / 5;
    let tail = &records[start..];
    let xs: Vec<f64> = tail.iter().map(|r| r.u_bulk.max(1e-300).ln()).collect();
    for (label, ys) in [
        ("C_20", tail.iter().map(|r| r.c_20).collect::<Vec<_>>()),
        ("C_Nminus20", tail.iter().map(|r| r.c_n_minus_20).collect()),
    ] {
        let (slope, intercept, r2) = linear_fit(&xs, &ys);
        println!("{label} vs log U_bulk: slope {slope:.4}, intercept {intercept:.2}, R2 {r2:.4}");
    }
    let residuals = first_law_residuals(&records);
    if !residuals.is_empty() {
        let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
        println!(
            "first-law residual |dU - T dS0 - T dC|/|dU| over {} transitions: mean {mean:.3}",
            residuals.len()
        );
    }
    // sensitivity of the threshold-dependent quantities at the last checkpoint
    if let Some(last_path) = paths.last() {
        let net = Septuple::load(last_path)?;
        let report = analyze(&net, &data, theta, mode)?;
        if let Some(beta) = report.beta_gap {
            let n = report.lambdas.len();
            print!("theta sensitivity at epoch {} (beta {beta:.4}):", net.epoch);
            for factor in [0.5, 1.0, 2.0] {
                let t = theta * factor;
                let count = spectral::n_greater(&report.lambdas, beta, t);
                let c = spectral::complexity_top(&report.lambdas, count, n);
                let half = count as f64 / 2.0;
                let s_thermo = -half * beta.ln() + half;
                print!(" [theta {t}: N_> {count}, C {c:.3}, S_thermo {s_thermo:.3}]");
            }
            println!();
        }
    }
    println!("wrote {}", out.join("thermo.csv").display());
    Ok(())
}

// ---------------------------------------------------------------------------
// ensemble
// ---------------------------------------------------------------------------

pub const ENSEMBLE_HEADER: &str = "beta,window_mode,n_samples,mean_H,stderr_H,U_gaussian_exact,\
log_z_full,log_z_truncated,acceptance_rate";

fn cmd_ensemble(args: EnsembleArgs, file: &FileConfig) -> Result<(), CliError> {
    let arch_spec = pick(args.arch, file, "arch", "2-2-1".to_string())?;
    let sizes = parse_arch(&arch_spec)?;
    let out = require(pick_opt(args.out, file, "out")?, "out")?;
    let activation_name = pick(args.activation, file, "activation", "identity".to_string())?;
    let activation = Activation::from_name(&activation_name)
        .ok_or_else(|| CliError::Config(format!("unknown activation {activation_name:?}")))?;
    let objective_m = pick(args.objective_m, file, "objective_m", 0.0)?;
    let betas = parse_beta_list(&pick(args.beta, file, "beta", "0.5,1,2".to_string())?)?;
    let window_spec = pick(args.window, file, "window", "both".to_string())?;
    let windows: Vec<WindowMode> = match window_spec.as_str() {
        "both" => vec![WindowMode::Hard, WindowMode::Gaussian],
        other => vec![WindowMode::from_name(other)
            .ok_or_else(|| CliError::Config(format!("unknown window mode {other:?}")))?],
    };
    let n_samples = pick(args.samples, file, "samples", 200_000)?;
    let burn_in = pick(args.burn_in, file, "burn_in", 20_000)?;
    let seed = pick(args.seed, file, "seed", 0)?;

    let topology = Topology::layered(&sizes).map_err(|e| CliError::Config(e.to_string()))?;
    let mut net = Septuple::random(topology, activation, seed);
    net.objective_coeff = objective_m;

    std::fs::create_dir_all(&out)?;
    let mut csv = String::from(ENSEMBLE_HEADER);
    csv.push('\n');
    for &beta in &betas {
        for &window in &windows {
            let cfg = McConfig {
                beta,
                window,
                n_samples,
                burn_in,
                seed,
            };
            let est = metropolis_sample(&net, None, &cfg)?;
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                est.beta,
                est.window.name(),
                est.n_samples,
                est.mean_h,
                est.stderr_h,
                est.u_gaussian_exact,
                est.log_z_full,
                est.log_z_truncated,
                est.acceptance_rate,
            );
            if !est.acceptance_in_range {
                eprintln!(
                    "warning: acceptance {:.3} outside [0.1, 0.7] at beta {beta} ({})",
                    est.acceptance_rate,
                    window.name()
                );
            }
        }
    }
    std::fs::write(out.join("ensemble.csv"), csv)?;
    println!("wrote {}", out.join("ensemble.csv").display());
    Ok(())
}

// ---------------------------------------------------------------------------
// toy
// ---------------------------------------------------------------------------

fn cmd_toy(args: ToyArgs, file: &FileConfig) -> Result<(), CliError> {
    let out = require(pick_opt(args.out, file, "out")?, "out")?;
    let betas = parse_beta_list(&pick(
        args.beta,
        file,
        "beta",
        "0.25,0.50,0.73,1.00".to_string(),
    )?)?;
    let gamma = pick(args.gamma, file, "gamma", 1.0 / 3.0)?;
    let n_total = pick(args.n_total, file, "n_total", 854)?;
    let grid_spec = pick(args.grid, file, "grid", "-6:3:721".to_string())?;
    let grid = parse_grid(&grid_spec)?;
    if !(0.0 < gamma && gamma < 1.0) {
        return Err(CliError::Config(format!(
            "gamma must lie strictly between 0 and 1, got {gamma}"
        )));
    }

    std::fs::create_dir_all(&out)?;
    let mut csv = String::from("beta,gamma,log_lambda,neg_delta_f\n");
    for &beta in &betas {
        let curve = spectral::toy_curve(beta, gamma, n_total, &grid);
        for (u, v) in curve.log_lambdas.iter().zip(curve.values.iter()) {
            let _ = writeln!(csv, "{beta},{gamma},{u},{v}");
        }
        for e in &curve.extrema {
            let kind = match e.kind {
                spectral::ExtremumKind::Minimum => "minimum",
                spectral::ExtremumKind::Maximum => "maximum",
            };
            println!(
                "beta {beta}: interior {kind} at log lambda = {:.6} (value {:.4})",
                e.log_lambda, e.value
            );
        }
    }
    std::fs::write(out.join("toy.csv"), csv)?;
    std::fs::write(out.join("toy.gp"), TOY_GP)?;
    println!("wrote {}", out.join("toy.csv").display());
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Config(format!(
            "grid must be lo:hi:points, got {spec:?}"
        )));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| CliError::Config(format!("bad grid lo {:?}", parts[0])))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| CliError::Config(format!("bad grid hi {:?}", parts[1])))?;
    let points: usize = parts[2]
        .parse()
        .map_err(|_| CliError::Config(format!("bad grid points {:?}", parts[2])))?;
    if !lo.is_finite() || !hi.is_finite() || hi - lo <= 0.0 || points < 2 {
        return Err(CliError::Config(format!("degenerate grid {spec:?}")));
    }
    Ok(spectral::linspace(lo, hi, points))
}

const TOY_GP: &str = "set datafile separator ','\n\
set key autotitle columnhead\n\
set xlabel 'log lambda'\n\
set ylabel '-Delta F'\n\
plot for [b in system(\"awk -F, 'NR>1 {print $1}' toy.csv | sort -u\")] \\\n\
     'toy.csv' using 3:($1 == b ? $4 : 1/0) with lines title 'beta = '.b\n";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parsing() {
        let cfg = FileConfig::parse("# comment\nepochs = 42\nlr 0.01\n\n").unwrap();
        assert_eq!(cfg.get::<usize>("epochs").unwrap(), Some(42));
        assert_eq!(cfg.get::<f64>("lr").unwrap(), Some(0.01));
        assert_eq!(cfg.get::<u64>("missing").unwrap(), None);
        assert!(cfg.get::<usize>("lr").is_err());
        assert!(FileConfig::parse("justakey").is_err());
    }

    #[test]
    fn arch_presets_and_custom() {
        assert_eq!(parse_arch("deep").unwrap(), vec![784, 40, 20, 10]);
        assert_eq!(parse_arch("shallow").unwrap(), vec![784, 60, 10]);
        assert_eq!(parse_arch("64-16-8-10").unwrap(), vec![64, 16, 8, 10]);
        assert!(parse_arch("64").is_err());
        assert!(parse_arch("64-0-10").is_err());
        assert!(parse_arch("sixty-four").is_err());
    }

    #[test]
    fn histogram_bins_and_edges() {
        let h = histogram(&[0.1, 0.2, 0.3, -0.4], 0.25);
        let total: usize = h.iter().map(|(_, _, c)| c).sum();
        assert_eq!(total, 4);
        for (left, right, _) in &h {
            assert!((right - left - 0.25).abs() < 1e-12);
        }
        assert!(histogram(&[], 0.25).is_empty());
    }

    #[test]
    fn beta_list_and_grid() {
        assert_eq!(parse_beta_list("0.25, 0.5").unwrap(), vec![0.25, 0.5]);
        assert!(parse_beta_list("x").is_err());
        let g = parse_grid("-1:1:5").unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], -1.0);
        assert_eq!(g[4], 1.0);
        assert!(parse_grid("1:0:5").is_err());
        assert!(parse_grid("0:1").is_err());
    }
}
