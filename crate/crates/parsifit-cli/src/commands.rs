//! Implementations of the CLI subcommands.

use crate::config::config_json;
use ndarray::Array2;
use parsifit::data::{
    generate_synthetic, load_csv, sample_by_id_hash, shuffle, write_csv, ColumnSchema,
    RegressorDistribution, SyntheticSpec,
};
use parsifit::fitter::{anneal, expand_categorical, fit, fit_with_reference};
use parsifit::likelihood::{power_scores, softmax};
use parsifit::model::validate_grid;
use parsifit::projection::{
    project_hybrid, project_matrix, simulate_paths, HybridStates, ItemTransitionModel,
    ProjectionResult,
};
use parsifit::{
    DataError, FitConfig, FitError, FitReport, ItemModel, ObservationGrid, OptError, ProjError,
};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Command failures split by exit code: bad input (2) or a numerical
/// failure during computation (3).
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(msg) | CliError::Numerical(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<parsifit::ModelError> for CliError {
    fn from(e: parsifit::ModelError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::Opt(OptError::NonFiniteObjective) => CliError::Numerical(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<ProjError> for CliError {
    fn from(e: ProjError) -> Self {
        match e {
            ProjError::BadTransitionRow { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn load_grid(data: &Path, schema_path: &Path) -> Result<(ObservationGrid, ColumnSchema), CliError> {
    let schema = ColumnSchema::parse(&read_file(schema_path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", schema_path.display())))?;
    let file = fs::File::open(data)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", data.display())))?;
    let grid = load_csv(std::io::BufReader::new(file), &schema)
        .map_err(|e| CliError::Input(format!("{}: {e}", data.display())))?;
    Ok((grid, schema))
}

fn load_model(path: &Path) -> Result<ItemModel, CliError> {
    ItemModel::from_document_str(&read_file(path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn status_index(model_space: &parsifit::StatusSpace, name: &str) -> Result<usize, CliError> {
    model_space
        .index(name)
        .ok_or_else(|| CliError::Input(format!("unknown status {name:?}")))
}

/// Writes the run manifest: the command, the effective configuration, the
/// seed, named input and output paths, the number of rows processed, and
/// the elapsed wall clock. The wall clock is the one field that varies
/// between otherwise identical runs; every other output byte is
/// reproducible from inputs plus seed.
#[allow(clippy::too_many_arguments)]
fn write_manifest(
    path: &Path,
    command: &str,
    config: Option<&FitConfig>,
    seed: u64,
    inputs: &[(&str, &Path)],
    outputs: &[(&str, &Path)],
    rows_processed: u64,
    started: Instant,
) -> Result<(), CliError> {
    let mut map = serde_json::Map::new();
    map.insert("command".into(), command.into());
    if let Some(config) = config {
        map.insert("config".into(), config_json(config));
    }
    map.insert("seed".into(), seed.into());
    let paths = |pairs: &[(&str, &Path)]| {
        let mut m = serde_json::Map::new();
        for (name, p) in pairs {
            m.insert((*name).into(), p.display().to_string().into());
        }
        serde_json::Value::Object(m)
    };
    map.insert("inputs".into(), paths(inputs));
    map.insert("outputs".into(), paths(outputs));
    map.insert("rows_processed".into(), rows_processed.into());
    map.insert(
        "wall_clock_ms".into(),
        (started.elapsed().as_millis() as u64).into(),
    );
    let text = serde_json::to_string_pretty(&serde_json::Value::Object(map))
        .expect("manifest serialization cannot fail");
    write_file(path, &format!("{text}\n"))
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

pub struct FitCommand {
    pub data: PathBuf,
    pub schema: PathBuf,
    pub out_model: PathBuf,
    pub out_report: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub start_status: Option<String>,
    pub reference_state: Option<String>,
    pub sample_mod: Option<u64>,
    pub sample_res: u64,
    pub config: FitConfig,
}

pub fn run_fit(cmd: &FitCommand) -> Result<(), CliError> {
    let started = Instant::now();
    cmd.config.validate().map_err(|e| CliError::Input(e.to_string()))?;
    let (mut grid, _) = load_grid(&cmd.data, &cmd.schema)?;
    let violations = validate_grid(&grid);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("{v}");
        }
        return Err(CliError::Input(format!(
            "{} validation violations in {}",
            violations.len(),
            cmd.data.display()
        )));
    }
    if let Some(modulus) = cmd.sample_mod {
        grid = sample_by_id_hash(&grid, modulus, cmd.sample_res)?;
    }
    if let Some(name) = &cmd.start_status {
        let wanted = status_index(grid.space(), name)?;
        let rows: Vec<usize> = (0..grid.rows())
            .filter(|&i| grid.start_status()[i] == wanted)
            .collect();
        if rows.is_empty() {
            return Err(CliError::Input(format!(
                "no rows start in status {name:?}"
            )));
        }
        grid = grid.select_rows(&rows);
    }
    let grid = expand_categorical(&grid)?;
    // The library fit consumes rows in grid order; shuffling here makes the
    // adaptive prefixes representative regardless of how the file was
    // sorted.
    let grid = shuffle(&grid, cmd.config.seed);

    let (model, report) = match &cmd.reference_state {
        Some(name) => {
            let reference = status_index(grid.space(), name)?;
            fit_with_reference(&grid, reference, &cmd.config)?
        }
        None => fit(&grid, &cmd.config)?,
    };
    let (model, report) = if cmd.config.anneal_loops > 0 {
        let (annealed, anneal_report) = anneal(&grid, &model, &cmd.config)?;
        let mut entries = report.entries;
        entries.extend(anneal_report.entries);
        (annealed, FitReport { entries, reason: anneal_report.reason })
    } else {
        (model, report)
    };

    write_file(&cmd.out_model, &model.to_document_string())?;
    let mut outputs: Vec<(&str, &Path)> = vec![("model", cmd.out_model.as_path())];
    if let Some(out_report) = &cmd.out_report {
        write_file(out_report, &report.to_csv())?;
        outputs.push(("report", out_report.as_path()));
    }
    eprintln!(
        "fit: {} rows, {} curves, stopped on {}",
        grid.rows(),
        model.curves.len(),
        report.reason.as_str()
    );
    if let Some(manifest) = &cmd.manifest {
        write_manifest(
            manifest,
            "fit",
            Some(&cmd.config),
            cmd.config.seed,
            &[("data", cmd.data.as_path()), ("schema", cmd.schema.as_path())],
            &outputs,
            grid.rows() as u64,
            started,
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// project
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectMethod {
    Matrix,
    Simulate,
    Hybrid,
}

impl ProjectMethod {
    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "matrix" => Some(ProjectMethod::Matrix),
            "simulate" => Some(ProjectMethod::Simulate),
            "hybrid" => Some(ProjectMethod::Hybrid),
            _ => None,
        }
    }
}

pub struct ProjectCommand {
    pub models: Vec<PathBuf>,
    pub method: ProjectMethod,
    pub horizon: usize,
    pub covariates: Option<PathBuf>,
    pub start: Option<String>,
    pub paths: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub manifest: Option<PathBuf>,
    pub current: String,
    pub prepaid: String,
    pub delinquent: String,
}

/// Reads a covariate panel: a CSV whose header names regressors and whose
/// rows are consecutive time steps.
fn load_covariates(path: &Path) -> Result<(Vec<String>, Array2<f64>), CliError> {
    let text = read_file(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut values = Vec::new();
    let mut rows = 0usize;
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != names.len() {
            return Err(CliError::Input(format!(
                "{}: line {line}: {} fields for {} columns",
                path.display(),
                record.len(),
                names.len()
            )));
        }
        for (i, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::Input(format!(
                    "{}: line {line}: cannot parse {field:?} in column {:?}",
                    path.display(),
                    names[i]
                ))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let panel = Array2::from_shape_vec((rows, names.len()), values)
        .expect("row-major covariate panel");
    Ok((names, panel))
}

pub fn run_project(cmd: &ProjectCommand) -> Result<(), CliError> {
    let started = Instant::now();
    if cmd.models.is_empty() {
        return Err(CliError::Input("at least one --model is required".to_string()));
    }
    let models: Vec<ItemModel> =
        cmd.models.iter().map(|p| load_model(p)).collect::<Result<_, _>>()?;
    let space = models[0].space.clone();
    for (model, path) in models.iter().zip(&cmd.models) {
        if model.space != space {
            return Err(CliError::Input(format!(
                "{}: status space differs from the first model",
                path.display()
            )));
        }
    }
    let mut slots: Vec<Option<ItemModel>> = vec![None; space.len()];
    for (model, path) in models.into_iter().zip(&cmd.models) {
        let start = model.start_status;
        if slots[start].is_some() {
            return Err(CliError::Input(format!(
                "{}: duplicate model for start status {:?}",
                path.display(),
                space.name(start)
            )));
        }
        slots[start] = Some(model);
    }

    let (names, panel) = match &cmd.covariates {
        Some(path) => load_covariates(path)?,
        None => (Vec::new(), Array2::zeros((cmd.horizon, 0))),
    };
    if panel.nrows() < cmd.horizon {
        return Err(CliError::Input(format!(
            "{} covariate rows cover a horizon of {}, but {} steps were requested",
            panel.nrows(),
            panel.nrows(),
            cmd.horizon
        )));
    }
    let tm = ItemTransitionModel::new(space.clone(), slots, &names, panel)?;

    let start_dist = |name: &Option<String>| -> Result<Vec<f64>, CliError> {
        let name = name
            .as_ref()
            .ok_or_else(|| CliError::Input("--start is required for this method".to_string()))?;
        let idx = status_index(&space, name)?;
        let mut s = vec![0.0; space.len()];
        s[idx] = 1.0;
        Ok(s)
    };
    let result: ProjectionResult = match cmd.method {
        ProjectMethod::Matrix => project_matrix(&tm, &start_dist(&cmd.start)?, cmd.horizon)?,
        ProjectMethod::Simulate => {
            simulate_paths(&tm, &start_dist(&cmd.start)?, cmd.horizon, cmd.paths, cmd.seed)?
        }
        ProjectMethod::Hybrid => {
            let hs = HybridStates {
                current: status_index(&space, &cmd.current)?,
                prepaid: status_index(&space, &cmd.prepaid)?,
                delinquent: status_index(&space, &cmd.delinquent)?,
            };
            project_hybrid(&tm, hs, cmd.horizon, cmd.paths, cmd.seed)?
        }
    };
    write_file(&cmd.out, &result.to_csv())?;
    eprintln!(
        "project: horizon {}, {} paths, {} transition rows evaluated",
        cmd.horizon, result.paths, result.rows_evaluated
    );
    if let Some(manifest) = &cmd.manifest {
        let mut inputs: Vec<(&str, &Path)> =
            cmd.models.iter().map(|p| ("model", p.as_path())).collect();
        if let Some(cov) = &cmd.covariates {
            inputs.push(("covariates", cov.as_path()));
        }
        write_manifest(
            manifest,
            "project",
            None,
            cmd.seed,
            &inputs,
            &[("projection", cmd.out.as_path())],
            result.rows_evaluated,
            started,
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

pub struct SynthCommand {
    pub model: PathBuf,
    pub rows: usize,
    pub seed: u64,
    pub dists: Vec<String>,
    pub out: PathBuf,
    pub out_schema: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

/// Parses `name=uniform:LO:HI`, `name=normal:MEAN:SD`, or `name=bernoulli:P`.
fn parse_dist(text: &str) -> Result<(String, RegressorDistribution), CliError> {
    let bad = || CliError::Input(format!(
        "invalid --dist {text:?}; expected name=uniform:LO:HI, name=normal:MEAN:SD, or name=bernoulli:P"
    ));
    let (name, spec) = text.split_once('=').ok_or_else(bad)?;
    let mut parts = spec.split(':');
    let kind = parts.next().ok_or_else(bad)?;
    let nums: Vec<f64> = parts
        .map(|p| p.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let dist = match (kind, nums.as_slice()) {
        ("uniform", [low, high]) => RegressorDistribution::Uniform { low: *low, high: *high },
        ("normal", [mean, sd]) => RegressorDistribution::Normal { mean: *mean, sd: *sd },
        ("bernoulli", [p]) => RegressorDistribution::Bernoulli { p: *p },
        _ => return Err(bad()),
    };
    Ok((name.trim().to_string(), dist))
}

pub fn run_synth(cmd: &SynthCommand) -> Result<(), CliError> {
    let started = Instant::now();
    let model = load_model(&cmd.model)?;
    let mut named: Vec<(String, RegressorDistribution)> = Vec::new();
    for text in &cmd.dists {
        let (name, dist) = parse_dist(text)?;
        if named.iter().any(|(n, _)| *n == name) {
            return Err(CliError::Input(format!("duplicate --dist for {name:?}")));
        }
        named.push((name, dist));
    }
    let mut distributions = Vec::with_capacity(model.meta.len());
    for meta in &model.meta {
        let dist = named
            .iter()
            .find(|(n, _)| *n == meta.name)
            .map(|(_, d)| *d)
            .ok_or_else(|| {
                CliError::Input(format!("missing --dist for regressor {:?}", meta.name))
            })?;
        distributions.push(dist);
    }
    for (name, _) in &named {
        if !model.meta.iter().any(|m| m.name == *name) {
            return Err(CliError::Input(format!(
                "--dist names unknown regressor {name:?}"
            )));
        }
    }
    let spec = SyntheticSpec { model, distributions, rows: cmd.rows, seed: cmd.seed };
    let sample = generate_synthetic(&spec)?;
    write_file(&cmd.out, &write_csv(&sample.grid)?)?;
    let mut outputs: Vec<(&str, &Path)> = vec![("data", cmd.out.as_path())];
    if let Some(out_schema) = &cmd.out_schema {
        let schema = ColumnSchema::for_grid(&sample.grid)?;
        write_file(out_schema, &schema.to_config_string())?;
        outputs.push(("schema", out_schema.as_path()));
    }
    println!("generator_entropy={}", sample.generator_entropy);
    if let Some(manifest) = &cmd.manifest {
        write_manifest(
            manifest,
            "synth",
            None,
            cmd.seed,
            &[("model", cmd.model.as_path())],
            &outputs,
            cmd.rows as u64,
            started,
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// report-residuals
// ---------------------------------------------------------------------------

pub struct ResidualCommand {
    pub model: PathBuf,
    pub data: PathBuf,
    pub schema: PathBuf,
    /// Restrict the report to one regressor; all regressors when absent.
    pub regressor: Option<String>,
    pub buckets: usize,
    pub out: PathBuf,
    pub manifest: Option<PathBuf>,
}

pub const RESIDUAL_CSV_HEADER: &str =
    "regressor,bucket,x_mean,to_state,predicted,observed,rows";

/// Bucketed calibration report: rows are sorted by each regressor, split
/// into equal-count buckets, and observed transition rates are compared
/// with the model's mean predicted probabilities.
pub fn run_residuals(cmd: &ResidualCommand) -> Result<(), CliError> {
    let started = Instant::now();
    if cmd.buckets == 0 {
        return Err(CliError::Input("--buckets must be at least 1".to_string()));
    }
    let model = load_model(&cmd.model)?;
    if let Some(name) = &cmd.regressor {
        if !model.meta.iter().any(|m| m.name == *name) {
            return Err(CliError::Input(format!("unknown regressor {name:?}")));
        }
    }
    let (grid, _) = load_grid(&cmd.data, &cmd.schema)?;
    let rows: Vec<usize> = (0..grid.rows())
        .filter(|&i| grid.start_status()[i] == model.start_status)
        .collect();
    if rows.is_empty() {
        return Err(CliError::Input(format!(
            "no rows start in the model's start status {:?}",
            grid.space().name(model.start_status)
        )));
    }
    let grid = grid.select_rows(&rows);
    let grid = expand_categorical(&grid)?;
    model.check_grid(&grid)?;

    let n = grid.rows();
    let reachable = model.reachable().to_vec();
    // Per-row predicted probabilities over the reachable states.
    let mut predicted = Array2::zeros((n, reachable.len()));
    let mut x_row = vec![0.0; grid.regressor_count()];
    for i in 0..n {
        for (j, v) in x_row.iter_mut().enumerate() {
            *v = grid.x()[(i, j)];
        }
        let scores = power_scores(&model, &x_row);
        let probs = softmax(&scores.values);
        for (k, p) in probs.iter().enumerate() {
            predicted[(i, k)] = *p;
        }
    }

    let mut out = String::from(RESIDUAL_CSV_HEADER);
    out.push('\n');
    for (j, meta) in grid.meta().iter().enumerate() {
        if let Some(name) = &cmd.regressor {
            if meta.name != *name {
                continue;
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            grid.x()[(a, j)]
                .partial_cmp(&grid.x()[(b, j)])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let constant = grid.x()[(order[0], j)] == grid.x()[(order[n - 1], j)];
        let buckets = if constant {
            eprintln!(
                "warning: regressor {:?} is constant; using one bucket",
                meta.name
            );
            1
        } else {
            cmd.buckets.min(n)
        };
        for b in 0..buckets {
            let lo = b * n / buckets;
            let hi = (b + 1) * n / buckets;
            if lo == hi {
                continue;
            }
            let members = &order[lo..hi];
            let count = members.len() as f64;
            let x_mean: f64 =
                members.iter().map(|&i| grid.x()[(i, j)]).sum::<f64>() / count;
            for (k, &state) in reachable.iter().enumerate() {
                let pred: f64 =
                    members.iter().map(|&i| predicted[(i, k)]).sum::<f64>() / count;
                let obs: f64 =
                    members.iter().map(|&i| grid.y()[(i, state)]).sum::<f64>() / count;
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    meta.name,
                    b,
                    x_mean,
                    grid.space().name(state),
                    pred,
                    obs,
                    members.len()
                ));
            }
        }
    }
    write_file(&cmd.out, &out)?;
    if let Some(manifest) = &cmd.manifest {
        write_manifest(
            manifest,
            "report-residuals",
            None,
            0,
            &[
                ("model", cmd.model.as_path()),
                ("data", cmd.data.as_path()),
                ("schema", cmd.schema.as_path()),
            ],
            &[("residuals", cmd.out.as_path())],
            n as u64,
            started,
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

pub struct ValidateCommand {
    pub data: PathBuf,
    pub schema: PathBuf,
}

pub fn run_validate(cmd: &ValidateCommand) -> Result<(), CliError> {
    let (grid, _) = load_grid(&cmd.data, &cmd.schema)?;
    let violations = validate_grid(&grid);
    if violations.is_empty() {
        println!("ok: {} rows", grid.rows());
        Ok(())
    } else {
        for v in &violations {
            println!("{v}");
        }
        Err(CliError::Input(format!(
            "{} violations in {} rows",
            violations.len(),
            grid.rows()
        )))
    }
}
