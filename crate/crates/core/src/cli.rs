//! The `mblingam` command line: `analyze`, `simulate` and `fit`.

use std::ffi::OsString;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use crate::error::Error;
use crate::exec::with_threads;
use crate::lingam::IcaConfig;
use crate::model::DataMatrix;
use crate::msboot::{build_scale_plan, count_events, BpCountTable};
use crate::psifit::{analyze_table, FitOptions, PvalueReport};
use crate::simulate::{preset, preset_names, run_experiment, SimConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_PIPELINE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "mblingam",
    version,
    about = "LiNGAM with multiscale-bootstrap p-values"
)]
pub struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Both)]
    pub format: Format,
    /// Directory for output files.
    #[arg(short, long, global = true, default_value = ".")]
    pub output_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bootstrap a data file and report p-values for every signed hypothesis.
    Analyze {
        /// CSV with a header of variable names and one sample per row.
        input: PathBuf,
        #[command(flatten)]
        plan: PlanArgs,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Run a calibration study from a JSON config or a named preset.
    Simulate {
        /// JSON simulation config.
        config: Option<PathBuf>,
        /// Named preset (see --list-presets).
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Print the available presets and exit.
        #[arg(long)]
        list_presets: bool,
        /// Number of simulated datasets.
        #[arg(long)]
        datasets: Option<usize>,
        #[command(flatten)]
        plan: PlanArgs,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Fit scaling laws to a precomputed count table.
    Fit {
        /// Count table (CSV, or JSON when the name ends in .json).
        counts: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
    },
}

#[derive(Debug, Args, Default)]
pub struct PlanArgs {
    /// Smallest scale sigma^2 (analyze default: 1/9).
    #[arg(long)]
    pub scales_min: Option<f64>,
    /// Largest scale sigma^2 (analyze default: 9).
    #[arg(long)]
    pub scales_max: Option<f64>,
    /// Number of scales before deduplication (analyze default: 13).
    #[arg(long)]
    pub num_scales: Option<usize>,
    /// Bootstrap replicates per scale (analyze default: 1000).
    #[arg(long)]
    pub replicates: Option<usize>,
    /// ICA restarts per fit (default: 8).
    #[arg(long)]
    pub restarts: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct FitArgs {
    /// Number of Taylor terms h in the p-value (default: 3).
    #[arg(long = "order")]
    pub order: Option<usize>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn pipeline(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. }
            | Error::InvalidData(_)
            | Error::InvalidArgument(_)
            | Error::InvalidScalePlan(_) => EXIT_INPUT,
            _ => EXIT_PIPELINE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

const DEFAULT_SCALES_MIN: f64 = 1.0 / 9.0;
const DEFAULT_SCALES_MAX: f64 = 9.0;
const DEFAULT_NUM_SCALES: usize = 13;
const DEFAULT_REPLICATES: usize = 1000;
const DEFAULT_H: usize = 3;

/// Parses a data file: header of names, one sample per row.
pub fn read_data_csv<R: Read>(r: R) -> Result<DataMatrix, Error> {
    let mut rd = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let header = rd
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    if names.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: format!("need at least 2 columns, found {}", names.len()),
        });
    }
    if let Some(dup) = names
        .iter()
        .enumerate()
        .find(|(i, n)| names[..*i].contains(n))
    {
        return Err(Error::Parse {
            line: 1,
            message: format!("duplicate column name '{}'", dup.1),
        });
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in rd.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(rows + 2);
        if rec.len() != names.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", names.len(), rec.len()),
            });
        }
        for (field, name) in rec.iter().zip(&names) {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("'{field}' in column {name} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite value in column {name}"),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    // values are sample-major, i.e. column-major for an m x n matrix
    let m = names.len();
    DataMatrix::new(DMatrix::from_vec(m, rows, values), names)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError {
        code: EXIT_PIPELINE,
        message: e.to_string(),
    })?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError {
        code: EXIT_PIPELINE,
        message: format!("{}: {e}", path.display()),
    })?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

fn write_report(report: &PvalueReport, dir: &Path, format: Format) -> Result<(), CliError> {
    if format.csv() {
        let mut buf = Vec::new();
        report.write_csv(&mut buf).map_err(CliError::pipeline)?;
        write_file(dir, "report.csv", &buf)?;
    }
    if format.json() {
        write_file(dir, "report.json", report.to_json().as_bytes())?;
    }
    Ok(())
}

fn write_counts(table: &BpCountTable, dir: &Path, format: Format) -> Result<(), CliError> {
    if format.csv() {
        let mut buf = Vec::new();
        table.write_csv(&mut buf).map_err(CliError::pipeline)?;
        write_file(dir, "counts.csv", &buf)?;
    }
    if format.json() {
        write_file(dir, "counts.json", table.to_json().as_bytes())?;
    }
    Ok(())
}

fn fit_options(fit: &FitArgs) -> Result<FitOptions, CliError> {
    let h = fit.order.unwrap_or(DEFAULT_H);
    if h == 0 {
        return Err(CliError::input("--order must be at least 1"));
    }
    Ok(FitOptions::with_h(h))
}

pub fn cmd_analyze(
    cli: &Cli,
    input: &Path,
    plan: &PlanArgs,
    fit: &FitArgs,
) -> Result<(), CliError> {
    let file =
        fs::File::open(input).map_err(|e| CliError::input(format!("{}: {e}", input.display())))?;
    let data =
        read_data_csv(file).map_err(|e| CliError::input(format!("{}: {e}", input.display())))?;
    let scale_plan = build_scale_plan(
        data.nsamples(),
        plan.scales_min.unwrap_or(DEFAULT_SCALES_MIN),
        plan.scales_max.unwrap_or(DEFAULT_SCALES_MAX),
        plan.num_scales.unwrap_or(DEFAULT_NUM_SCALES),
        plan.replicates.unwrap_or(DEFAULT_REPLICATES),
    )
    .map_err(CliError::pipeline)?;
    let ica = IcaConfig {
        restarts: plan.restarts.unwrap_or(IcaConfig::default().restarts),
        ..IcaConfig::default()
    };
    let opts = fit_options(fit)?;
    log::info!(
        "analyzing {} variables x {} samples over {} scales x {} replicates",
        data.nvars(),
        data.nsamples(),
        scale_plan.len(),
        scale_plan.replicates()
    );
    let table = count_events(&data, &scale_plan, &ica, cli.seed.unwrap_or(0))
        .map_err(CliError::pipeline)?;
    let report = analyze_table(&table, &opts).map_err(CliError::pipeline)?;
    write_counts(&table, &cli.output_dir, cli.format)?;
    write_report(&report, &cli.output_dir, cli.format)
}

pub fn cmd_fit(cli: &Cli, counts: &Path, fit: &FitArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(counts)
        .map_err(|e| CliError::input(format!("{}: {e}", counts.display())))?;
    let table = if counts.extension().is_some_and(|e| e == "json") {
        BpCountTable::from_json(&text)
    } else {
        BpCountTable::read_csv(text.as_bytes())
    }
    .map_err(|e| CliError::input(format!("{}: {e}", counts.display())))?;
    let report = analyze_table(&table, &fit_options(fit)?).map_err(CliError::pipeline)?;
    write_report(&report, &cli.output_dir, cli.format)
}

pub fn simulation_config(
    cli: &Cli,
    config: Option<&Path>,
    preset_name: Option<&str>,
    datasets: Option<usize>,
    plan: &PlanArgs,
    fit: &FitArgs,
) -> Result<SimConfig, CliError> {
    let mut cfg = match (config, preset_name) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<SimConfig>(&text).map_err(|e| {
                CliError::input(format!("{}: line {}: {e}", path.display(), e.line()))
            })?
        }
        (None, Some(name)) => preset(name).ok_or_else(|| {
            CliError::input(format!("unknown preset '{name}'; use --list-presets"))
        })?,
        (None, None) => return Err(CliError::input("simulate needs a config file or --preset")),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(d) = datasets {
        cfg.datasets = d;
    }
    if let Some(v) = plan.scales_min {
        cfg.scales_min = v;
    }
    if let Some(v) = plan.scales_max {
        cfg.scales_max = v;
    }
    if let Some(v) = plan.num_scales {
        cfg.num_scales = v;
    }
    if let Some(v) = plan.replicates {
        cfg.replicates = v;
    }
    if let Some(v) = plan.restarts {
        cfg.ica.restarts = v;
    }
    if let Some(h) = fit.order {
        cfg.h = h;
    }
    cfg.validate().map_err(|e| CliError::input(e.to_string()))?;
    Ok(cfg)
}

pub fn cmd_simulate(cli: &Cli, cfg: &SimConfig) -> Result<(), CliError> {
    let report = run_experiment(cfg).map_err(CliError::pipeline)?;
    let focus = report.focus_calibration();
    log::info!(
        "{}: KS distance to uniform for {}: bp {:.4}, mb {:.4}",
        cfg.name,
        focus.label,
        focus.ks_bp,
        focus.ks_mb
    );
    if cli.format.csv() {
        let mut buf = Vec::new();
        report
            .write_pvalues_csv(&mut buf)
            .map_err(CliError::pipeline)?;
        write_file(&cli.output_dir, "pvalues.csv", &buf)?;
        let mut buf = Vec::new();
        report
            .write_rejection_csv(&mut buf)
            .map_err(CliError::pipeline)?;
        write_file(&cli.output_dir, "rejection.csv", &buf)?;
    }
    if cli.format.json() {
        write_file(
            &cli.output_dir,
            "calibration.json",
            report.to_json().as_bytes(),
        )?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Analyze { input, plan, fit } => cmd_analyze(cli, input, plan, fit),
        Command::Fit { counts, fit } => cmd_fit(cli, counts, fit),
        Command::Simulate {
            config,
            preset,
            list_presets,
            datasets,
            plan,
            fit,
        } => {
            if *list_presets {
                for p in preset_names() {
                    println!("{}\t{}", p.name, p.description);
                }
                return Ok(());
            }
            let cfg = simulation_config(
                cli,
                config.as_deref(),
                preset.as_deref(),
                *datasets,
                plan,
                fit,
            )?;
            cmd_simulate(cli, &cfg)
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.exit_code() {
                0 => EXIT_OK,
                _ => EXIT_INPUT,
            };
        }
    };
    let threads = cli.threads;
    match with_threads(threads, || dispatch(&cli)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
