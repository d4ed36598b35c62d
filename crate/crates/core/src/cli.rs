//! Command-line front end: config and model files, the published presets,
//! and CSV output.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::criteria::{
    full_model_false_count, marginal_false_count, projected_false_count, SelectedSet,
};
use crate::error::FvrError;
use crate::estimator::EstimatorConfig;
use crate::population_model::PopulationModel;
use crate::simulation::{
    generate_block_design, run_experiment, run_model_experiment, true_rate_curves, BlockDesign,
    MonteCarloResult,
};

pub const CSV_HEADER: &str = "k,fdr_true,fdr_se,fvr_true_full,fvr_full_se,fvr_true_half,fvr_half_se,fvr_est,fvr_est_se,fvr_est_clipped,n_reps_at_k";

const DEFAULT_REPS: usize = 100;
const DEFAULT_KMAX: usize = 20;

#[derive(Debug, Parser)]
#[command(
    name = "fvrlab",
    version,
    about = "False variable selection rates for forward stepwise regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the marginal, full-model and projected criteria for one selected set.
    Criteria {
        /// Model file (TOML).
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated 1-based variable labels, e.g. 2,3,5,7.
        #[arg(long, value_delimiter = ',', required = true)]
        select: Vec<usize>,
    },
    /// True FDR and FVR curves of forward stepwise selection.
    Truth(RunArgs),
    /// Truth curves plus the split-averaged FVR estimate.
    Experiment(RunArgs),
    /// Run a built-in configuration: sec34, fig7, fig8, fig9 or fig10.
    Preset {
        name: String,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Args, Default, Clone)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model file used instead of a [design] block; needs --n.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Sample size when running from a model file.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    splits: Option<usize>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, env = "FVRLAB_THREADS", default_value_t = 0)]
    threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Criteria,
    Truth,
    Experiment,
}

/// Experiment configuration file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Option<Mode>,
    pub design: Option<BlockDesign>,
    /// Model file, relative to the config file.
    pub model: Option<PathBuf>,
    pub n: Option<usize>,
    pub estimator: Option<EstimatorConfig>,
    pub reps: Option<usize>,
    pub k_max: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// A built-in configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub mode: Mode,
    pub design: BlockDesign,
    pub estimator: EstimatorConfig,
    pub reps: usize,
    pub k_max: usize,
}

pub const PRESET_NAMES: [&str; 5] = ["sec34", "fig7", "fig8", "fig9", "fig10"];

/// Block simulation settings: the truth-only pairs example and the four
/// estimator studies.
pub fn preset(name: &str) -> Option<Preset> {
    let (mode, n, n_blocks, block_size, n_signal, sigma_eps) = match name {
        "sec34" => (Mode::Truth, 50, 20, 2, 10, 0.8),
        "fig7" => (Mode::Experiment, 100, 20, 2, 6, 0.8),
        "fig8" => (Mode::Experiment, 100, 5, 3, 3, 0.5),
        "fig9" => (Mode::Experiment, 100, 20, 2, 10, 0.5),
        "fig10" => (Mode::Experiment, 100, 20, 2, 10, 2.0),
        _ => return None,
    };
    let design = BlockDesign {
        n,
        n_blocks,
        block_size,
        n_signal,
        rho: 0.95,
        sigma_eps,
        signal_coef: 1.0,
    };
    Some(Preset {
        name: PRESET_NAMES.iter().find(|&&p| p == name)?,
        mode,
        design,
        estimator: EstimatorConfig::default(),
        reps: DEFAULT_REPS,
        k_max: DEFAULT_KMAX.min(design.p()),
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum SigmaSpec {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockSpec {
    size: usize,
    rho: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    p: Option<usize>,
    sigma: Option<SigmaSpec>,
    blocks: Option<Vec<BlockSpec>>,
    beta: Vec<f64>,
    sigma_eps: f64,
    #[serde(default)]
    intercept: f64,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad or missing configuration; exit code 2.
    Config(String),
    /// A library operation failed; exit code 1.
    Numerical { op: &'static str, source: FvrError },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Numerical { op, source } => write!(f, "{op} failed: {source}"),
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn numerical(op: &'static str) -> impl FnOnce(FvrError) -> CliError {
    move |source| CliError::Numerical { op, source }
}

/// Parses a model file. Errors name the offending key.
pub fn load_model(path: &Path) -> Result<PopulationModel, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| config_err(format!("model: cannot read {}: {e}", path.display())))?;
    parse_model(&text).map_err(|e| match e {
        CliError::Config(msg) => config_err(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_model(text: &str) -> Result<PopulationModel, CliError> {
    let file: ModelFile = toml::from_str(text).map_err(|e| config_err(format!("model: {e}")))?;
    let p = file.beta.len();
    if let Some(declared) = file.p {
        if declared != p {
            return Err(config_err(format!(
                "key `p` is {declared} but `beta` has {p} entries"
            )));
        }
    }
    let sigma = match (file.sigma, file.blocks) {
        (Some(_), Some(_)) => {
            return Err(config_err(
                "keys `sigma` and `blocks` are mutually exclusive",
            ))
        }
        (None, None) => return Err(config_err("missing key `sigma` (or `blocks`)")),
        (Some(SigmaSpec::Flat(v)), None) => {
            if v.len() != p * p {
                return Err(config_err(format!(
                    "key `sigma` has {} entries, expected p*p = {}",
                    v.len(),
                    p * p
                )));
            }
            DMatrix::from_row_slice(p, p, &v)
        }
        (Some(SigmaSpec::Rows(rows)), None) => {
            if rows.len() != p || rows.iter().any(|r| r.len() != p) {
                return Err(config_err(format!(
                    "key `sigma` must be {p} rows of {p} entries"
                )));
            }
            DMatrix::from_fn(p, p, |i, j| rows[i][j])
        }
        (None, Some(blocks)) => {
            let total: usize = blocks.iter().map(|b| b.size).sum();
            if total != p {
                return Err(config_err(format!(
                    "key `blocks` covers {total} variables but `beta` has {p}"
                )));
            }
            let mut sigma = DMatrix::zeros(p, p);
            let mut start = 0;
            for (i, b) in blocks.iter().enumerate() {
                if !(0.0..1.0).contains(&b.rho) && !(b.size == 1) {
                    return Err(config_err(format!(
                        "key `blocks[{i}].rho` must lie in [0, 1)"
                    )));
                }
                for r in start..start + b.size {
                    for c in start..start + b.size {
                        sigma[(r, c)] = if r == c { 1.0 } else { b.rho };
                    }
                }
                start += b.size;
            }
            sigma
        }
    };
    PopulationModel::new(sigma, DVector::from_vec(file.beta), file.sigma_eps)
        .map(|m| m.with_intercept(file.intercept))
        .map_err(|e| config_err(format!("model: {e}")))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| config_err(format!("config: cannot read {}: {e}", path.display())))?;
    let mut cfg: ExperimentConfig =
        toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    if let (Some(model), Some(dir)) = (cfg.model.as_mut(), path.parent()) {
        if model.is_relative() {
            *model = dir.join(&*model);
        }
    }
    Ok(cfg)
}

fn fmt_f64(out: &mut String, v: f64) {
    if v.is_nan() {
        out.push_str("NaN");
    } else {
        let _ = write!(out, "{v:.16e}");
    }
}

/// CSV rendering of a result: one row per model size, LF line endings,
/// floats with 17 significant digits, empty fields for columns a run does
/// not produce.
pub fn to_csv(result: &MonteCarloResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in &result.rows {
        let _ = write!(out, "{}", row.k);
        let mut field = |v: Option<f64>| {
            out.push(',');
            if let Some(v) = v {
                fmt_f64(&mut out, v);
            }
        };
        field(Some(row.fdr_true.mean));
        field(Some(row.fdr_true.se));
        field(Some(row.fvr_true_full.mean));
        field(Some(row.fvr_true_full.se));
        field(row.fvr_true_half.map(|m| m.mean));
        field(row.fvr_true_half.map(|m| m.se));
        field(row.fvr_est.map(|m| m.mean));
        field(row.fvr_est.map(|m| m.se));
        field(row.fvr_est_clipped);
        let _ = writeln!(out, ",{}", row.n_reps_at_k());
    }
    out
}

/// Fully resolved run.
#[derive(Debug, Clone)]
struct Plan {
    label: String,
    mode: Mode,
    model: PopulationModel,
    design: Option<BlockDesign>,
    n: usize,
    estimator: EstimatorConfig,
    reps: usize,
    k_max: usize,
    seed: u64,
    out: Option<PathBuf>,
}

fn resolve(
    label: String,
    mode: Mode,
    base: ExperimentConfig,
    args: &RunArgs,
) -> Result<Plan, CliError> {
    let model_path = args.model.clone().or(base.model.clone());
    let (model, design, n) = match (base.design, model_path) {
        (Some(_), Some(_)) if args.model.is_none() => {
            return Err(config_err(
                "keys `design` and `model` are mutually exclusive",
            ))
        }
        (_, Some(path)) => {
            let n = args
                .n
                .or(base.n)
                .ok_or_else(|| config_err("key `n` is required with `model`"))?;
            (load_model(&path)?, None, n)
        }
        (Some(design), None) => {
            let model = generate_block_design(&design)
                .map_err(|e| config_err(format!("key `design`: {e}")))?;
            (model, Some(design), args.n.unwrap_or(design.n))
        }
        (None, None) => return Err(config_err("missing key `design` (or `model`)")),
    };
    let mut estimator = base.estimator.unwrap_or_default();
    if let Some(l) = args.lambda {
        estimator.lambda = l;
    }
    if let Some(s) = args.splits {
        estimator.n_splits = s;
    }
    estimator
        .validate()
        .map_err(|e| config_err(format!("key `estimator`: {e}")))?;
    let reps = args.reps.or(base.reps).unwrap_or(DEFAULT_REPS);
    if reps == 0 {
        return Err(config_err("key `reps` must be at least 1"));
    }
    let limit = match mode {
        Mode::Experiment => {
            let n_sel = estimator.selection_rows(n);
            model
                .p()
                .min(n_sel.saturating_sub(2))
                .min((n - n_sel).saturating_sub(2))
        }
        _ => model.p().min(n.saturating_sub(2)),
    };
    let k_max = args.kmax.or(base.k_max).unwrap_or(DEFAULT_KMAX.min(limit));
    if k_max == 0 || k_max > limit {
        return Err(config_err(format!(
            "key `k_max` = {k_max} must lie in 1..={limit}"
        )));
    }
    let design = design.map(|d| BlockDesign { n, ..d });
    Ok(Plan {
        label,
        mode,
        model,
        design,
        n,
        estimator,
        reps,
        k_max,
        seed: args.seed.or(base.seed).unwrap_or(0),
        out: args.out.clone().or(base.out),
    })
}

fn execute(plan: &Plan) -> Result<MonteCarloResult, CliError> {
    match plan.mode {
        Mode::Truth => true_rate_curves(&plan.model, plan.n, plan.k_max, plan.reps, plan.seed)
            .map(|mut r| {
                r.design = plan.design;
                r
            })
            .map_err(numerical("true_rate_curves")),
        Mode::Experiment => match &plan.design {
            Some(design) => {
                run_experiment(design, &plan.estimator, plan.k_max, plan.reps, plan.seed)
            }
            None => run_model_experiment(
                &plan.model,
                plan.n,
                &plan.estimator,
                plan.k_max,
                plan.reps,
                plan.seed,
            ),
        }
        .map_err(numerical("run_experiment")),
        Mode::Criteria => Err(config_err(
            "key `mode`: criteria runs use the `criteria` subcommand",
        )),
    }
}

/// Writes the CSV and returns the summary line, plus whether the CSV went
/// to stdout.
fn emit(plan: &Plan, result: &MonteCarloResult) -> Result<(String, bool), CliError> {
    let csv = to_csv(result);
    let target = match &plan.out {
        Some(path) => {
            fs::write(path, &csv).map_err(|e| {
                config_err(format!("key `out`: cannot write {}: {e}", path.display()))
            })?;
            path.display().to_string()
        }
        None => {
            io::stdout()
                .write_all(csv.as_bytes())
                .map_err(|e| config_err(format!("key `out`: stdout: {e}")))?;
            "stdout".to_string()
        }
    };
    let summary = format!(
        "{}: {} rows, {} reps, n = {}, seed {} -> {}",
        plan.label,
        result.rows.len(),
        plan.reps,
        plan.n,
        plan.seed,
        target
    );
    Ok((summary, plan.out.is_none()))
}

fn criteria_summary(model_path: &Path, labels: &[usize]) -> Result<String, CliError> {
    let model = load_model(model_path)?;
    let selected = SelectedSet::from_one_based(labels.iter().copied())
        .map_err(|e| config_err(format!("key `select`: {e}")))?;
    if let Some(&max) = selected.indices().last() {
        if max >= model.p() {
            return Err(config_err(format!(
                "key `select`: label {} exceeds p = {}",
                max + 1,
                model.p()
            )));
        }
    }
    let marginal =
        marginal_false_count(&model, &selected).map_err(numerical("marginal_false_count"))?;
    let full =
        full_model_false_count(&model, &selected).map_err(numerical("full_model_false_count"))?;
    let projected =
        projected_false_count(&model, &selected).map_err(numerical("projected_false_count"))?;
    Ok(format!(
        "marginal={} full={} projected={}",
        marginal.proportion(),
        full.proportion(),
        projected.proportion()
    ))
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| config_err(format!("key `threads`: {e}")))?;
    Ok(pool.install(f))
}

fn dispatch(cli: Cli) -> Result<(String, bool), CliError> {
    let (label, mode, base, args) = match cli.command {
        Command::Criteria { model, select } => {
            return criteria_summary(&model, &select).map(|s| (s, false))
        }
        Command::Truth(args) => {
            let base = args
                .config
                .as_deref()
                .map(load_config)
                .transpose()?
                .unwrap_or_default();
            ("truth".to_string(), Mode::Truth, base, args)
        }
        Command::Experiment(args) => {
            let base = args
                .config
                .as_deref()
                .map(load_config)
                .transpose()?
                .unwrap_or_default();
            let mode = base.mode.unwrap_or(Mode::Experiment);
            ("experiment".to_string(), mode, base, args)
        }
        Command::Preset { name, run } => {
            let p = preset(&name).ok_or_else(|| {
                config_err(format!(
                    "unknown preset `{name}`; expected one of {}",
                    PRESET_NAMES.join(", ")
                ))
            })?;
            let base = ExperimentConfig {
                mode: Some(p.mode),
                design: Some(p.design),
                estimator: Some(p.estimator),
                reps: Some(p.reps),
                k_max: Some(p.k_max),
                ..Default::default()
            };
            (format!("preset {name}"), p.mode, base, run)
        }
    };
    let plan = resolve(label, mode, base, &args)?;
    let result = with_threads(args.threads, || execute(&plan))??;
    emit(&plan, &result)
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok((summary, csv_on_stdout)) => {
            if csv_on_stdout {
                eprintln!("{summary}");
            } else {
                println!("{summary}");
            }
            0
        }
        Err(e) => {
            eprintln!("fvrlab: {e}");
            e.exit_code()
        }
    }
}
