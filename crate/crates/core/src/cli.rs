//! The `dcm` command line. Every command is a pure function of its input
//! files, flags and `--seed`; results go to files written atomically and a
//! short summary goes to stdout.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use ndarray::{Array2, ArrayView2};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::diffusion::DiffusionConfig;
use crate::engine::{
    AnmConfig, AnmModel, CausalQueryModel, DcmModel, EngineError, Factual, ModelFile, RegressorKind, SavedModel,
    MODEL_SCHEMA_VERSION,
};
use crate::eval::{
    benchmark_scm, run_benchmark, BenchmarkConfig, BenchmarkReport, EvalError, EvalSettings, InterventionNodes, Metric,
    ModelKind, REPORT_SCHEMA_VERSION,
};
use crate::graph::{CausalGraph, GraphError, GraphKind};
use crate::intervention::{self, InterventionError};
use crate::io::{self, IoError};
use crate::scm::{GroundTruthScm, ScmError, ScmLoadError, SemKind, SCM_SCHEMA_VERSION};
use crate::seed;
use crate::theory::{verification_suite, TheoryError, VerifyReport, VerifySettings, VERIFY_SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: {source}")]
    ScmFile { path: PathBuf, source: ScmLoadError },
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Intervention(#[from] InterventionError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{path}: unsupported {what} schema version {found} (expected {expected})")]
    Schema { path: PathBuf, what: &'static str, found: u64, expected: u32 },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl CliError {
    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io(_) => "io",
            CliError::ScmFile { source: ScmLoadError::Invalid(ScmError::SchemaVersion(_)), .. }
            | CliError::Engine(EngineError::SchemaVersion(_))
            | CliError::Schema { .. } => "schema_version",
            CliError::ScmFile { .. } | CliError::Scm(_) => "scm",
            CliError::Engine(_) => "engine",
            CliError::Eval(_) => "eval",
            CliError::Theory(_) => "theory",
            CliError::Intervention(_) => "intervention",
            CliError::Graph(_) => "graph",
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::ThreadPool(_) => "thread_pool",
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}

#[derive(Debug, Parser)]
#[command(name = "dcm", version, about = "Diffusion-based causal models", args_override_self = true)]
pub struct Cli {
    /// Sectioned key=value file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output path (a directory for `generate`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a dataset and its noise trace from a benchmark SCM.
    Generate(GenerateArgs),
    /// Fit a DCM or ANM to a dataset.
    Train(TrainArgs),
    /// Observational, interventional or counterfactual queries.
    Query(QueryArgs),
    /// Multi-seed MMD/MSE benchmark against the SCM oracle.
    Benchmark(BenchmarkArgs),
    /// Numeric checks of the counterfactual error theory.
    Verify(VerifyArgs),
    /// Render a benchmark or verify report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value = "chain")]
    pub graph: GraphKind,
    #[arg(long, default_value = "nlin")]
    pub sem: SemKind,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// `node=value[,value...]`, repeatable; generates interventional data.
    #[arg(long, action = ArgAction::Append)]
    pub intervene: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// SCM file providing the graph.
    #[arg(long, conflicts_with = "graph")]
    pub scm: Option<PathBuf>,
    /// Named graph (not `random`).
    #[arg(long)]
    pub graph: Option<GraphKind>,
    #[arg(long, default_value = "dcm")]
    pub model: ModelKind,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, value_delimiter = ',', default_value = "128,256,256")]
    pub hidden: Vec<usize>,
    /// ANM regressor candidates, simplest first.
    #[arg(long, value_delimiter = ',', default_value = "ridge,knn,mlp")]
    pub menu: Vec<RegressorKind>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QueryMode {
    Obs,
    Int,
    Cf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long, required_unless_present = "scm", conflicts_with = "scm")]
    pub model: Option<PathBuf>,
    /// Query the ground-truth SCM instead of a fitted model.
    #[arg(long)]
    pub scm: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "obs")]
    pub mode: QueryMode,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, action = ArgAction::Append)]
    pub intervene: Vec<String>,
    /// Factual rows for `cf`.
    #[arg(long)]
    pub factual: Option<PathBuf>,
    /// Noise trace of the factual rows; needed for SCM counterfactuals.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, default_value = "chain")]
    pub graph: GraphKind,
    #[arg(long, default_value = "nlin")]
    pub sem: SemKind,
    #[arg(long, default_value_t = 2000)]
    pub n_train: usize,
    /// `a..b` (exclusive), `a..=b`, or a comma list.
    #[arg(long, default_value = "0..5")]
    pub seeds: String,
    #[arg(long, value_delimiter = ',', default_value = "dcm,anm")]
    pub models: Vec<ModelKind>,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// `auto` or 1-based node indices, comma separated.
    #[arg(long, default_value = "auto")]
    pub intervention_nodes: String,
    #[arg(long, default_value_t = 20)]
    pub gammas: usize,
    #[arg(long, default_value_t = 100)]
    pub samples_per_gamma: usize,
    #[arg(long, default_value_t = 1000)]
    pub obs_samples: usize,
    /// Also write the summary table here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Multiply metric values by 100 in tables.
    #[arg(long)]
    pub times_100: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 200)]
    pub factuals: usize,
    #[arg(long, default_value_t = 21)]
    pub grid_size: usize,
    /// Trials for the reference independence encodings.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 5000)]
    pub n_train: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_test: usize,
    #[arg(long, default_value_t = 0)]
    pub anm_trials: usize,
    #[arg(long, default_value_t = 0)]
    pub dcm_trials: usize,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Csv,
    Markdown,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub times_100: bool,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: TableFormat,
}

/// Runs the command line and returns the process exit code. Errors go to
/// stderr as a JSON object.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match run(args) {
        Ok(stdout) => {
            print!("{stdout}");
            0
        }
        Err(Failure::Help(text)) => {
            print!("{text}");
            0
        }
        Err(Failure::Cli(e)) => {
            eprintln!("{}", e.to_json());
            if matches!(e, CliError::Usage(_) | CliError::Config(_)) {
                2
            } else {
                1
            }
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    /// `--help` or `--version` output.
    Help(String),
    Cli(CliError),
}

impl From<CliError> for Failure {
    fn from(e: CliError) -> Self {
        Failure::Cli(e)
    }
}

/// Parses and executes; `Ok` holds the text meant for stdout.
pub fn run<I, T>(args: I) -> Result<String, Failure>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let raw: Vec<String> = args.into_iter().map(|a| a.into().to_string_lossy().into_owned()).collect();
    let merged = merge_config(raw)?;
    let cli = Cli::try_parse_from(merged).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => Failure::Help(e.to_string()),
        _ => Failure::Cli(CliError::Usage(e.to_string().trim().to_string())),
    })?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()).into());
        }
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| CliError::ThreadPool(e.to_string()))?;
    Ok(pool.install(|| execute(&cli))?)
}

fn flag_given(args: &[String], name: &str) -> bool {
    let long = format!("--{name}");
    args.iter().any(|a| *a == long || a.starts_with(&format!("{long}=")))
}

fn flag_value(args: &[String], name: &str) -> Option<String> {
    let long = format!("--{name}");
    let prefix = format!("{long}=");
    for (i, a) in args.iter().enumerate() {
        if *a == long {
            return args.get(i + 1).cloned();
        }
        if let Some(v) = a.strip_prefix(&prefix) {
            return Some(v.to_string());
        }
    }
    None
}

/// Inserts flags from `--config` that the command line does not already set.
/// Top-level keys must be shared flags; `[command]` sections hold that
/// command's flags, spelled with `-` or `_`. Repeatable flags take
/// whitespace-separated values.
fn merge_config(args: Vec<String>) -> Result<Vec<String>, CliError> {
    let Some(path) = flag_value(&args, "config") else {
        return Ok(args);
    };
    let path = PathBuf::from(path);
    let entries: BTreeMap<String, String> = io::read_config(&path)?;
    let root = Cli::command();
    let names: Vec<String> = root.get_subcommands().map(|s| s.get_name().to_string()).collect();
    let Some(pos) = args.iter().skip(1).position(|a| names.contains(a)).map(|p| p + 1) else {
        return Ok(args);
    };
    let current = args[pos].clone();
    let unknown = |key: &str| CliError::Config(format!("{}: unknown key '{key}'", path.display()));
    let mut extra = vec![];
    for (key, value) in &entries {
        let (section, name) = match key.rsplit_once('.') {
            Some((s, n)) => (Some(s), n),
            None => (None, key.as_str()),
        };
        let name = name.replace('_', "-");
        let name = name.as_str();
        let arg = match section {
            None => root.get_arguments().find(|a| a.get_long() == Some(name) && name != "config"),
            Some(s) => {
                let sub = root.find_subcommand(s).ok_or_else(|| unknown(key))?;
                sub.get_arguments().find(|a| a.get_long() == Some(name))
            }
        }
        .ok_or_else(|| unknown(key))?;
        if section.is_some_and(|s| s != current) || flag_given(&args, name) {
            continue;
        }
        if !arg.get_action().takes_values() {
            match value.as_str() {
                "true" | "yes" | "1" => extra.push(format!("--{name}")),
                "false" | "no" | "0" => {}
                _ => return Err(CliError::Config(format!("{}: '{key}' expects true or false", path.display()))),
            }
        } else if matches!(arg.get_action(), ArgAction::Append) {
            extra.extend(value.split_whitespace().map(|v| format!("--{name}={v}")));
        } else {
            extra.push(format!("--{name}={value}"));
        }
    }
    let mut merged = args[..=pos].to_vec();
    merged.extend(extra);
    merged.extend_from_slice(&args[pos + 1..]);
    Ok(merged)
}

fn execute(cli: &Cli) -> Result<String, CliError> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, cli.seed, out.unwrap_or(Path::new("data"))),
        Command::Train(a) => cmd_train(a, cli.seed, out.unwrap_or(Path::new("model.json"))),
        Command::Query(a) => cmd_query(a, cli.seed, out),
        Command::Benchmark(a) => cmd_benchmark(a, out.unwrap_or(Path::new("report.json"))),
        Command::Verify(a) => cmd_verify(a, cli.seed, out),
        Command::Report(a) => cmd_report(a, out),
    }
}

fn json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("serializable summary");
    s.push('\n');
    s
}

pub fn cmd_generate(a: &GenerateArgs, seed_value: u64, out: &Path) -> Result<String, CliError> {
    let scm = benchmark_scm(a.graph, a.sem, seed_value)?;
    let graph = scm.graph();
    let interventions = intervention::parse(graph, &a.intervene)?;
    let traced = scm.sample_interventional(&interventions, a.n, &mut seed::stream(seed_value, "generate", 0))?;
    let data = out.join("data.csv");
    let noise = out.join("noise.csv");
    let scm_path = out.join("scm.json");
    io::write_dataset(&data, graph, traced.values.view())?;
    io::write_dataset(&noise, graph, traced.noises.view())?;
    io::write_json(&scm_path, &scm)?;
    Ok(json_line(&json!({
        "data": data,
        "noise": noise,
        "scm": scm_path,
        "rows": a.n,
        "columns": graph.total_dim(),
    })))
}

fn named_graph(kind: GraphKind) -> Result<CausalGraph, CliError> {
    Ok(match kind {
        GraphKind::Chain => CausalGraph::chain(1),
        GraphKind::Triangle => CausalGraph::triangle(1),
        GraphKind::Diamond => CausalGraph::diamond(1),
        GraphKind::Y => CausalGraph::y(1),
        GraphKind::Ladder => CausalGraph::ladder(3),
        GraphKind::Random => return Err(CliError::Usage("random graphs are only available through --scm".into())),
    })
}

/// Reads a JSON artifact and checks `schema_version` before decoding.
fn read_versioned(path: &Path, what: &'static str, expected: u32) -> Result<serde_json::Value, CliError> {
    let value: serde_json::Value = io::read_json(path)?;
    let found = value.get("schema_version").and_then(|v| v.as_u64());
    match found {
        Some(v) if v == expected as u64 => Ok(value),
        _ => Err(CliError::Schema { path: path.to_path_buf(), what, found: found.unwrap_or(0), expected }),
    }
}

pub fn load_scm(path: &Path) -> Result<GroundTruthScm, CliError> {
    let value = read_versioned(path, "SCM", SCM_SCHEMA_VERSION)?;
    GroundTruthScm::from_json(&value.to_string()).map_err(|source| CliError::ScmFile { path: path.to_path_buf(), source })
}

pub fn load_model(path: &Path) -> Result<ModelFile, CliError> {
    let value = read_versioned(path, "model", MODEL_SCHEMA_VERSION)?;
    let file: ModelFile = serde_json::from_value(value)
        .map_err(|source| CliError::Io(IoError::Json { path: path.to_path_buf(), source }))?;
    file.check_version()?;
    Ok(file)
}

pub fn cmd_train(a: &TrainArgs, seed_value: u64, out: &Path) -> Result<String, CliError> {
    let graph = match (&a.scm, a.graph) {
        (Some(p), _) => load_scm(p)?.graph().clone(),
        (None, Some(kind)) => named_graph(kind)?,
        (None, None) => return Err(CliError::Usage("train needs --scm or --graph".into())),
    };
    let data = io::read_dataset(&a.data, &graph)?;
    let (saved, summary) = match a.model {
        ModelKind::Dcm => {
            let config = DiffusionConfig {
                steps: a.steps,
                hidden: a.hidden.clone(),
                epochs: a.epochs,
                batch_size: a.batch_size,
                learning_rate: a.lr,
                ..DiffusionConfig::default()
            };
            let model = DcmModel::fit(&graph, data.view(), &config, seed_value)?;
            let losses: Vec<_> = graph
                .non_roots()
                .into_iter()
                .map(|node| json!({ "node": graph.name(node), "final_loss": model.losses[node].last() }))
                .collect();
            (SavedModel::Dcm(model), json!({ "model": "dcm", "nodes": losses }))
        }
        ModelKind::Anm => {
            if a.menu.is_empty() {
                return Err(CliError::Usage("--menu needs at least one regressor".into()));
            }
            let config = AnmConfig { menu: a.menu.clone(), folds: a.folds, ..AnmConfig::default() };
            let model = AnmModel::fit(&graph, data.view(), &config, seed_value)?;
            let chosen: Vec<_> = graph
                .non_roots()
                .into_iter()
                .map(|node| json!({ "node": graph.name(node), "regressor": model.regressor(node).map(|r| r.label()) }))
                .collect();
            (SavedModel::Anm(model), json!({ "model": "anm", "nodes": chosen }))
        }
        ModelKind::Oracle => return Err(CliError::Usage("the oracle is not trained; query it with --scm".into())),
    };
    io::write_json(out, &ModelFile::new(saved))?;
    let mut summary = summary;
    summary["out"] = json!(out);
    summary["rows"] = json!(data.nrows());
    Ok(json_line(&summary))
}

enum Loaded {
    Model(ModelFile),
    Scm(GroundTruthScm),
}

impl Loaded {
    fn query(&self) -> &dyn CausalQueryModel {
        match self {
            Loaded::Model(m) => m.model.as_query(),
            Loaded::Scm(s) => s,
        }
    }
}

fn render(graph: &CausalGraph, data: ArrayView2<'_, f64>, format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => io::matrix_to_csv(&graph.column_names(), data),
        OutputFormat::Json => {
            let rows: Vec<Vec<f64>> = data.rows().into_iter().map(|r| r.to_vec()).collect();
            json_line(&json!({ "columns": graph.column_names(), "rows": rows }))
        }
    }
}

pub fn cmd_query(a: &QueryArgs, seed_value: u64, out: Option<&Path>) -> Result<String, CliError> {
    let loaded = match (&a.model, &a.scm) {
        (Some(p), _) => Loaded::Model(load_model(p)?),
        (None, Some(p)) => Loaded::Scm(load_scm(p)?),
        (None, None) => return Err(CliError::Usage("query needs --model or --scm".into())),
    };
    let model = loaded.query();
    let graph = model.graph().clone();
    let interventions = intervention::parse(&graph, &a.intervene)?;
    let mut rng = seed::stream(seed_value, "query", 0);
    let result: Array2<f64> = match a.mode {
        QueryMode::Obs => {
            if !interventions.is_empty() {
                return Err(CliError::Usage("obs mode takes no --intervene; use --mode int".into()));
            }
            model.sample(&interventions, a.n, &mut rng)?
        }
        QueryMode::Int => {
            if interventions.is_empty() {
                return Err(CliError::Usage("int mode needs at least one --intervene".into()));
            }
            model.sample(&interventions, a.n, &mut rng)?
        }
        QueryMode::Cf => {
            let path = a.factual.as_ref().ok_or_else(|| CliError::Usage("cf mode needs --factual".into()))?;
            let factual = io::read_dataset(path, &graph)?;
            let noise = a.noise.as_ref().map(|p| io::read_dataset(p, &graph)).transpose()?;
            let query = match &noise {
                Some(u) => Factual::traced(factual.view(), u.view()),
                None => Factual::values(factual.view()),
            };
            model.counterfactual(query, &interventions)?
        }
    };
    let text = render(&graph, result.view(), a.format);
    match out {
        Some(p) => {
            io::write_atomic(p, text.as_bytes())?;
            Ok(json_line(&json!({ "out": p, "rows": result.nrows() })))
        }
        None => Ok(text),
    }
}

/// `a..b` (exclusive), `a..=b`, or `a,b,c`.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Usage(format!("malformed seed list '{spec}'"));
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
    let seeds: Vec<u64> = if let Some((a, b)) = spec.split_once("..=") {
        (num(a)?..=num(b)?).collect()
    } else if let Some((a, b)) = spec.split_once("..") {
        (num(a)?..num(b)?).collect()
    } else {
        spec.split(',').map(num).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn parse_nodes(spec: &str) -> Result<InterventionNodes, CliError> {
    if spec.trim().eq_ignore_ascii_case("auto") {
        return Ok(InterventionNodes::Auto);
    }
    let nodes = spec
        .split(',')
        .map(|s| match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n - 1),
            _ => Err(CliError::Usage(format!("intervention nodes are 1-based indices, got '{s}'"))),
        })
        .collect::<Result<_, _>>()?;
    Ok(InterventionNodes::List(nodes))
}

pub fn cmd_benchmark(a: &BenchmarkArgs, out: &Path) -> Result<String, CliError> {
    if a.models.is_empty() {
        return Err(CliError::Usage("--models needs at least one model".into()));
    }
    let config = BenchmarkConfig {
        graph_kind: a.graph,
        sem_kind: a.sem,
        n_train: a.n_train,
        seeds: parse_seeds(&a.seeds)?,
        intervention_nodes: parse_nodes(&a.intervention_nodes)?,
        eval: EvalSettings {
            num_gammas: a.gammas,
            samples_per_gamma: a.samples_per_gamma,
            observational_samples: a.obs_samples,
            ..EvalSettings::default()
        },
        models: a.models.clone(),
        dcm: DiffusionConfig { epochs: a.epochs, ..DiffusionConfig::default() },
        anm: AnmConfig::default(),
    };
    let report = run_benchmark(&config)?;
    io::write_json(out, &report)?;
    let table = report.to_csv(a.times_100);
    if let Some(p) = &a.csv {
        io::write_atomic(p, table.as_bytes())?;
    }
    Ok(table)
}

pub fn cmd_verify(a: &VerifyArgs, seed_value: u64, out: Option<&Path>) -> Result<String, CliError> {
    let settings = VerifySettings {
        factuals: a.factuals,
        grid_size: a.grid_size,
        independence_trials: a.trials,
        independence_train: a.n_train,
        independence_test: a.n_test,
        anm_trials: a.anm_trials,
        dcm_trials: a.dcm_trials,
        dcm: DiffusionConfig { epochs: a.epochs, ..DiffusionConfig::default() },
        seed: seed_value,
    };
    let report = verification_suite(&settings)?;
    if let Some(p) = out {
        io::write_json(p, &report)?;
    }
    Ok(verify_table(&report, TableFormat::Csv))
}

fn verify_table(report: &VerifyReport, format: TableFormat) -> String {
    let mut s = String::new();
    match format {
        TableFormat::Csv => {
            s.push_str("status,check,value,detail\n");
            for c in &report.checks {
                let status = if !c.gated { "INFO" } else if c.passed { "PASS" } else { "FAIL" };
                let _ = writeln!(s, "{status},\"{}\",{},\"{}\"", c.name, c.value, c.detail);
            }
        }
        TableFormat::Markdown => {
            s.push_str("| status | check | value | detail |\n|---|---|---|---|\n");
            for c in &report.checks {
                let status = if !c.gated { "info" } else if c.passed { "pass" } else { "FAIL" };
                let _ = writeln!(s, "| {status} | {} | {:.3e} | {} |", c.name, c.value, c.detail);
            }
        }
    }
    let _ = writeln!(s, "# {} passed, {} failed", report.passed, report.failed);
    s
}

fn benchmark_markdown(report: &BenchmarkReport, times_100: bool) -> String {
    let k = if times_100 { 100.0 } else { 1.0 };
    let models = &report.config.models;
    let mut s = format!(
        "{} {}{}\n\n| metric |",
        report.config.graph_kind,
        report.config.sem_kind,
        if times_100 { " (values x100)" } else { "" }
    );
    for m in models {
        let _ = write!(s, " {} |", m.as_str());
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(models.len()));
    s.push('\n');
    for metric in Metric::ALL {
        let _ = write!(s, "| {} |", metric.as_str());
        for &m in models {
            match report.summary_for(m, metric) {
                Some(sm) if sm.mean.is_some() => {
                    let _ = write!(s, " {:.4} ± {:.4} |", sm.mean.unwrap_or_default() * k, sm.std.unwrap_or_default() * k);
                }
                _ => s.push_str(" n/a |"),
            }
        }
        s.push('\n');
    }
    s
}

pub fn cmd_report(a: &ReportArgs, out: Option<&Path>) -> Result<String, CliError> {
    let value: serde_json::Value = io::read_json(&a.input)?;
    let json_err = |source| CliError::Io(IoError::Json { path: a.input.clone(), source });
    let text = if value.get("cells").is_some() {
        let value = read_versioned(&a.input, "benchmark report", REPORT_SCHEMA_VERSION)?;
        let report: BenchmarkReport = serde_json::from_value(value).map_err(json_err)?;
        match a.format {
            TableFormat::Csv => report.to_csv(a.times_100),
            TableFormat::Markdown => benchmark_markdown(&report, a.times_100),
        }
    } else if value.get("checks").is_some() {
        let value = read_versioned(&a.input, "verify report", VERIFY_SCHEMA_VERSION)?;
        let report: VerifyReport = serde_json::from_value(value).map_err(json_err)?;
        verify_table(&report, a.format)
    } else {
        return Err(CliError::Usage(format!("{}: not a benchmark or verify report", a.input.display())));
    };
    match out {
        Some(p) => {
            io::write_atomic(p, text.as_bytes())?;
            Ok(json_line(&json!({ "out": p })))
        }
        None => Ok(text),
    }
}
