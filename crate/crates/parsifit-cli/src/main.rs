//! Command line front end: fit transition models, project them forward,
//! generate synthetic data, report calibration residuals, and validate
//! input files.
//!
//! Exit codes: 0 on success, 2 for input problems (bad files, bad flags,
//! failed validation), 3 for numerical failures during computation.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use commands::{
    run_fit, run_project, run_residuals, run_synth, run_validate, CliError, FitCommand,
    ProjectCommand, ProjectMethod, ResidualCommand, SynthCommand, ValidateCommand,
};
use config::{apply_config_file, ConfigOverrides};
use parsifit::{Criterion, FitConfig};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "parsifit",
    version,
    about = "Parsimonious multinomial transition models: fit, project, and inspect"
)]
struct Cli {
    /// Size of the worker thread pool; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to observation data.
    Fit(FitArgs),
    /// Project fitted models forward in time.
    Project(ProjectArgs),
    /// Generate synthetic observations from a model.
    Synth(SynthArgs),
    /// Compare observed and predicted transition rates by regressor bucket.
    ReportResiduals(ResidualArgs),
    /// Check an observation file against its schema.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Observation CSV.
    #[arg(long)]
    data: PathBuf,
    /// Schema file describing statuses and columns.
    #[arg(long)]
    schema: PathBuf,
    /// Optional key=value run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path for the fitted model document.
    #[arg(long)]
    out_model: PathBuf,
    /// Output path for the per-curve fit report CSV.
    #[arg(long)]
    out_report: Option<PathBuf>,
    /// Output path for the run manifest JSON.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Keep only rows starting in this status before fitting.
    #[arg(long)]
    start_status: Option<String>,
    /// Status whose power score is pinned at zero.
    #[arg(long)]
    reference_state: Option<String>,
    /// Keep only loans whose id hashes to --sample-res under this modulus.
    #[arg(long)]
    sample_mod: Option<u64>,
    /// Residue selected by --sample-mod.
    #[arg(long, default_value_t = 0)]
    sample_res: u64,

    /// Information criterion gating curve additions: aic or bic.
    #[arg(long)]
    criterion: Option<String>,
    /// Hard cap on the number of curves.
    #[arg(long)]
    max_curves: Option<usize>,
    /// Significance multiple for the adaptive comparator.
    #[arg(long)]
    comparator_c: Option<f64>,
    /// Starting comparison block size in rows.
    #[arg(long)]
    m0: Option<usize>,
    /// Per-observation cap on the negative log likelihood.
    #[arg(long)]
    ll_cap: Option<f64>,
    /// Standard deviation of injected target noise, at most 1e-3.
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Curve re-optimization passes after the greedy loop.
    #[arg(long)]
    anneal_loops: Option<usize>,
    /// Seed for all randomized steps.
    #[arg(long)]
    seed: Option<u64>,
    /// Whether full-scan comparisons inside one sigma stop the search.
    #[arg(long)]
    sigma_stop: Option<bool>,
    /// Parameters charged per curve by the information criteria.
    #[arg(long)]
    curve_param_cost: Option<usize>,
}

#[derive(Args)]
struct ProjectArgs {
    /// Fitted model document; repeat for each non-absorbing start status.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    /// Projection method: matrix, simulate, or hybrid.
    #[arg(long)]
    method: String,
    /// Number of time steps to project.
    #[arg(long)]
    horizon: usize,
    /// CSV of time-indexed regressor values, one row per step.
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// Status the cohort starts in (matrix and simulate methods).
    #[arg(long)]
    start: Option<String>,
    /// Simulated paths (simulate and hybrid methods).
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    /// Seed for path simulation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the projection CSV.
    #[arg(long)]
    out: PathBuf,
    /// Output path for the run manifest JSON.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Transient state the hybrid cohort starts in.
    #[arg(long, default_value = "C")]
    current: String,
    /// Absorbing prepayment-like state for the hybrid method.
    #[arg(long, default_value = "P")]
    prepaid: String,
    /// Delinquency entry state whose branch the hybrid method simulates.
    #[arg(long, default_value = "3")]
    delinquent: String,
}

#[derive(Args)]
struct SynthArgs {
    /// Model document to sample from.
    #[arg(long)]
    model: PathBuf,
    /// Number of rows to generate.
    #[arg(long)]
    rows: usize,
    /// Seed for regressor and outcome draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Regressor law, e.g. s=uniform:-2:2, z=normal:0:1, j=bernoulli:0.3.
    #[arg(long = "dist")]
    dists: Vec<String>,
    /// Output path for the generated CSV.
    #[arg(long)]
    out: PathBuf,
    /// Optional output path for a matching schema file.
    #[arg(long)]
    out_schema: Option<PathBuf>,
    /// Output path for the run manifest JSON.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ResidualArgs {
    /// Fitted model document.
    #[arg(long)]
    model: PathBuf,
    /// Observation CSV.
    #[arg(long)]
    data: PathBuf,
    /// Schema file describing statuses and columns.
    #[arg(long)]
    schema: PathBuf,
    /// Report only this regressor; all regressors when omitted.
    #[arg(long)]
    regressor: Option<String>,
    /// Equal-count buckets per regressor.
    #[arg(long, default_value_t = 50)]
    buckets: usize,
    /// Output path for the residual CSV.
    #[arg(long)]
    out: PathBuf,
    /// Output path for the run manifest JSON.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Observation CSV.
    #[arg(long)]
    data: PathBuf,
    /// Schema file describing statuses and columns.
    #[arg(long)]
    schema: PathBuf,
}

fn build_fit_config(args: &FitArgs) -> Result<FitConfig, CliError> {
    let mut config = FitConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        apply_config_file(&text, &mut config)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    }
    let criterion = match &args.criterion {
        Some(text) => Some(
            Criterion::parse(text)
                .ok_or_else(|| CliError::Input(format!("invalid --criterion {text:?}")))?,
        ),
        None => None,
    };
    let overrides = ConfigOverrides {
        criterion,
        max_curves: args.max_curves,
        comparator_c: args.comparator_c,
        m0: args.m0,
        ll_cap: args.ll_cap,
        noise_sd: args.noise_sd,
        anneal_loops: args.anneal_loops,
        seed: args.seed,
        sigma_stop: args.sigma_stop,
        curve_param_cost: args.curve_param_cost,
    };
    overrides.apply(&mut config);
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Input(format!("cannot size the thread pool: {e}")))?;
    }
    match cli.command {
        Command::Fit(args) => {
            let config = build_fit_config(&args)?;
            run_fit(&FitCommand {
                data: args.data,
                schema: args.schema,
                out_model: args.out_model,
                out_report: args.out_report,
                manifest: args.manifest,
                start_status: args.start_status,
                reference_state: args.reference_state,
                sample_mod: args.sample_mod,
                sample_res: args.sample_res,
                config,
            })
        }
        Command::Project(args) => {
            let method = ProjectMethod::parse(&args.method).ok_or_else(|| {
                CliError::Input(format!(
                    "invalid --method {:?}; expected matrix, simulate, or hybrid",
                    args.method
                ))
            })?;
            run_project(&ProjectCommand {
                models: args.models,
                method,
                horizon: args.horizon,
                covariates: args.covariates,
                start: args.start,
                paths: args.paths,
                seed: args.seed,
                out: args.out,
                manifest: args.manifest,
                current: args.current,
                prepaid: args.prepaid,
                delinquent: args.delinquent,
            })
        }
        Command::Synth(args) => run_synth(&SynthCommand {
            model: args.model,
            rows: args.rows,
            seed: args.seed,
            dists: args.dists,
            out: args.out,
            out_schema: args.out_schema,
            manifest: args.manifest,
        }),
        Command::ReportResiduals(args) => run_residuals(&ResidualCommand {
            model: args.model,
            data: args.data,
            schema: args.schema,
            regressor: args.regressor,
            buckets: args.buckets,
            out: args.out,
            manifest: args.manifest,
        }),
        Command::Validate(args) => run_validate(&ValidateCommand {
            data: args.data,
            schema: args.schema,
        }),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
