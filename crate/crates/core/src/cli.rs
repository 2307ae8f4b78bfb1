//! Command-line front end for the benchmark studies.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::bench::{
    analyze, grid, read_records, run_model_quality, run_smbo_study, write_edges, write_mean_ranks, write_records,
    Analysis, Scope, StudyConfig, StudyRecord, GRID_B, GRID_C, GRID_D,
};
use crate::error::{BenchError, CliError};
use crate::kernels::KernelKind;

/// Replications used by `--full`.
pub const FULL_REPLICATIONS: usize = 100;

#[derive(Debug, Parser)]
#[command(name = "bench", version, about = "Kernel comparison studies on a hierarchical test function")]
pub struct Cli {
    /// TOML file with default settings; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit each kernel to random designs and record test RMSE.
    ModelQuality(StudyArgs),
    /// Run model-based optimization with each kernel and record suboptimality.
    Smbo(SmboArgs),
    /// Rank kernels from a results file and test for differences.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Comma-separated kernel names.
    #[arg(long)]
    pub kernels: Option<String>,
    /// Replications per grid cell (default 20).
    #[arg(long)]
    pub reps: Option<usize>,
    /// Use 100 replications.
    #[arg(long)]
    pub full: bool,
    /// Master seed (default 1).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Values of b (default 0,0.1).
    #[arg(long, value_delimiter = ',')]
    pub grid_b: Option<Vec<f64>>,
    /// Values of c (default 0.2,0.4,0.6,0.8).
    #[arg(long, value_delimiter = ',')]
    pub grid_c: Option<Vec<f64>>,
    /// Values of d (default 0.1,0.3,0.5,0.7,0.9).
    #[arg(long, value_delimiter = ',')]
    pub grid_d: Option<Vec<f64>>,
    /// Results CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Fill the wall_time_s column (makes output non-reproducible).
    #[arg(long)]
    pub record_timing: bool,
}

#[derive(Debug, Args)]
pub struct SmboArgs {
    #[command(flatten)]
    pub study: StudyArgs,
    /// Total objective evaluations per run.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Size of the initial random design.
    #[arg(long)]
    pub init: Option<usize>,
    /// Expected-improvement evaluations per proposal.
    #[arg(long)]
    pub infill_budget: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Results CSV written by `model-quality` or `smbo`.
    pub results: PathBuf,
    /// `all`, `overall`, or comma-separated situations A-E.
    #[arg(long, default_value = "all")]
    pub scope: String,
    /// Mean-rank CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Significance edges; stderr when omitted.
    #[arg(long)]
    pub edges: Option<PathBuf>,
}

/// Settings accepted in the `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub kernels: Option<Vec<String>>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub grid_b: Option<Vec<f64>>,
    pub grid_c: Option<Vec<f64>>,
    pub grid_d: Option<Vec<f64>>,
    pub workers: Option<usize>,
    pub record_timing: Option<bool>,
    pub budget: Option<usize>,
    pub init: Option<usize>,
    pub infill_budget: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

pub fn parse_kernels<S: AsRef<str>>(names: &[S]) -> Result<Vec<KernelKind>, CliError> {
    let mut out = Vec::new();
    for name in names {
        let kind: KernelKind = name.as_ref().parse()?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    if out.is_empty() {
        return Err(CliError::Config("no kernels selected".into()));
    }
    Ok(out)
}

/// Merges defaults, file settings and flags, in increasing precedence.
pub fn resolve_study(file: &FileConfig, args: &StudyArgs, smbo: Option<&SmboArgs>) -> Result<StudyConfig, CliError> {
    let mut cfg = StudyConfig::default();
    let kernel_names: Option<Vec<String>> = match &args.kernels {
        Some(list) => Some(list.split(',').map(|s| s.trim().to_string()).collect()),
        None => file.kernels.clone(),
    };
    if let Some(names) = kernel_names {
        cfg.kernels = parse_kernels(&names)?;
    }
    cfg.replications = if args.full {
        FULL_REPLICATIONS
    } else {
        args.reps.or(file.reps).unwrap_or(cfg.replications)
    };
    cfg.seed = args.seed.or(file.seed).unwrap_or(cfg.seed);
    cfg.workers = args.workers.or(file.workers).unwrap_or(cfg.workers);
    cfg.record_timing = args.record_timing || file.record_timing.unwrap_or(false);
    let pick = |flag: &Option<Vec<f64>>, from_file: &Option<Vec<f64>>, default: &[f64]| {
        flag.clone().or_else(|| from_file.clone()).unwrap_or_else(|| default.to_vec())
    };
    cfg.specs = grid(
        &pick(&args.grid_b, &file.grid_b, &GRID_B),
        &pick(&args.grid_c, &file.grid_c, &GRID_C),
        &pick(&args.grid_d, &file.grid_d, &GRID_D),
    );
    cfg.budget = smbo.and_then(|s| s.budget).or(file.budget).unwrap_or(cfg.budget);
    cfg.init_size = smbo.and_then(|s| s.init).or(file.init).unwrap_or(cfg.init_size);
    cfg.infill_budget = smbo
        .and_then(|s| s.infill_budget)
        .or(file.infill_budget)
        .unwrap_or(cfg.infill_budget);
    if cfg.replications == 0 {
        return Err(CliError::Config("--reps must be positive".into()));
    }
    if cfg.init_size == 0 || cfg.init_size > cfg.budget {
        return Err(CliError::Config(format!(
            "--init ({}) must be between 1 and --budget ({})",
            cfg.init_size, cfg.budget
        )));
    }
    Ok(cfg)
}

pub fn cmd_model_quality(config: &StudyConfig) -> Result<Vec<StudyRecord>, CliError> {
    Ok(run_model_quality(config)?)
}

pub fn cmd_smbo(config: &StudyConfig) -> Result<Vec<StudyRecord>, CliError> {
    Ok(run_smbo_study(config)?)
}

pub fn parse_scopes(text: &str) -> Result<Vec<Scope>, CliError> {
    if text.trim().eq_ignore_ascii_case("all") {
        return Ok(Scope::ALL.to_vec());
    }
    text.split(',')
        .map(|s| s.parse::<Scope>().map_err(CliError::Config))
        .collect()
}

/// Analyzes each requested scope. With `all`, scopes without rows are skipped.
pub fn cmd_analyze(results: &Path, scope: &str) -> Result<Vec<Analysis>, CliError> {
    let records = read_records(BufReader::new(File::open(results)?))?;
    let skip_empty = scope.trim().eq_ignore_ascii_case("all");
    let mut out = Vec::new();
    for s in parse_scopes(scope)? {
        match analyze(&records, s) {
            Ok(a) => out.push(a),
            Err(BenchError::EmptyScope(_)) if skip_empty => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match &cli.command {
        Command::ModelQuality(args) => {
            let cfg = resolve_study(&file, args, None)?;
            let records = cmd_model_quality(&cfg)?;
            write_records(output(args.out.as_deref())?, &records)?;
        }
        Command::Smbo(args) => {
            let cfg = resolve_study(&file, &args.study, Some(args))?;
            let records = cmd_smbo(&cfg)?;
            write_records(output(args.study.out.as_deref())?, &records)?;
        }
        Command::Analyze(args) => {
            let analyses = cmd_analyze(&args.results, &args.scope)?;
            write_mean_ranks(output(args.out.as_deref())?, &analyses)?;
            match &args.edges {
                Some(p) => write_edges(BufWriter::new(File::create(p)?), &analyses)?,
                None => write_edges(io::stderr().lock(), &analyses)?,
            }
        }
    }
    Ok(())
}
