//! Command-line front end.
//!
//! Every subcommand takes `--seed`; all randomness in a run descends from it.
//! Settings may also come from a TOML file given with `--config`, whose keys
//! are the long flag names with underscores; flags override the file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::{load_dataset, write_csv, DataError, Dataset, Schema};
use crate::eval::{AccuracyOracle, EvalError, Evaluator, Learner, LearnerKind, DEFAULT_FOLDS};
use crate::explore::{
    baseline_expand_reduce, baseline_random, explore, ExploreConfig, ExploreError, ExploreOutcome,
    Strategy, StrategyKind, DEFAULT_RANDOM_TRIALS,
};
use crate::graph::{GraphError, GraphSummary, DEFAULT_H_MAX};
use crate::policy::{
    load_policy, save_policy, train_policy, PolicyError, PolicyVariant, QPolicy, TrainConfig,
    DEFAULT_ALPHA, DEFAULT_BUDGETS, DEFAULT_EPSILON, DEFAULT_GAMMA,
};
use crate::seeds;
use crate::transforms::{TransformCatalog, TransformError};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

const DEFAULT_BUDGET: usize = 100;
const TREE_HEURISTIC_BUDGET: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TransformError> for CliError {
    fn from(e: TransformError) -> Self {
        match e {
            TransformError::UnknownTransform(_) | TransformError::InvalidFraction(_) => {
                CliError::Usage(e.to_string())
            }
            TransformError::Data(d) => d.into(),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::FingerprintMismatch { .. }
            | PolicyError::CorruptFile { .. }
            | PolicyError::Io(_)
            | PolicyError::NoTrainingData => CliError::Data(e.to_string()),
            PolicyError::Explore(inner) => (*inner).into(),
            PolicyError::UnknownAction { .. } => CliError::Internal(e.to_string()),
        }
    }
}

impl From<ExploreError> for CliError {
    fn from(e: ExploreError) -> Self {
        match e {
            ExploreError::ZeroBudget
            | ExploreError::ZeroTrials
            | ExploreError::MissingPolicy(_) => CliError::Usage(e.to_string()),
            ExploreError::Data(d) => d.into(),
            ExploreError::Policy(p) => p.into(),
            ExploreError::Transform(t) => t.into(),
            ExploreError::Eval(ev) => CliError::Data(ev.to_string()),
            ExploreError::Graph(GraphError::Eval(ev)) => CliError::Data(ev.to_string()),
            ExploreError::Graph(g) => CliError::Internal(g.to_string()),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::BadDump { .. } | GraphError::Eval(_) => CliError::Data(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "featgraph",
    version,
    about = "Feature engineering by transformation-graph exploration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Explore the transformation graph of one dataset and export the best node.
    Engineer(EngineerArgs),
    /// Learn a traversal policy from the datasets listed in a manifest.
    TrainPolicy(TrainArgs),
    /// Compare the base dataset against every feature engineering method.
    Benchmark(BenchmarkArgs),
    /// Print the transform catalog.
    ListTransforms(ListArgs),
    /// Print the graph saved by an `engineer` run.
    InspectGraph(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
enum LearnerArg {
    DecisionTree,
    RandomForest,
    LinearLeastSquares,
}

impl From<LearnerArg> for LearnerKind {
    fn from(l: LearnerArg) -> Self {
        match l {
            LearnerArg::DecisionTree => LearnerKind::DecisionTree,
            LearnerArg::RandomForest => LearnerKind::RandomForest,
            LearnerArg::LinearLeastSquares => LearnerKind::LinearLeastSquares,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
enum StrategyArg {
    BreadthFirst,
    DepthFirst,
    GlobalHeuristic,
    Random,
    Rl1,
    Rl2,
}

impl From<StrategyArg> for StrategyKind {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::BreadthFirst => StrategyKind::BreadthFirst,
            StrategyArg::DepthFirst => StrategyKind::DepthFirst,
            StrategyArg::GlobalHeuristic => StrategyKind::GlobalHeuristic,
            StrategyArg::Random => StrategyKind::Random,
            StrategyArg::Rl1 => StrategyKind::Rl1,
            StrategyArg::Rl2 => StrategyKind::Rl2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum VariantArg {
    Rl1,
    Rl2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GraphFormat {
    Text,
    Dot,
}

/// Options shared by the commands that evaluate datasets. Every field can
/// also be set from the config file.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
struct CommonArgs {
    /// TOML file supplying defaults for any option.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for model evaluation.
    #[arg(long)]
    threads: Option<usize>,
    /// Comma-separated transform names (default: the full catalog).
    #[arg(long, value_delimiter = ',')]
    catalog: Option<Vec<String>>,
    #[arg(long, value_enum)]
    learner: Option<LearnerArg>,
    /// Forest size.
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    /// Row fraction drawn per forest tree.
    #[arg(long)]
    subsample: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    h_max: Option<usize>,
    /// Disable sum-node actions.
    #[arg(long)]
    #[serde(default)]
    no_sums: bool,
    // Options owned by individual subcommands; listed here so one config
    // file can serve all of them.
    #[arg(skip)]
    dataset: Option<PathBuf>,
    #[arg(skip)]
    schema: Option<PathBuf>,
    #[arg(skip)]
    budget: Option<usize>,
    #[arg(skip)]
    strategy: Option<StrategyArg>,
    #[arg(skip)]
    policy: Option<PathBuf>,
    #[arg(skip)]
    out: Option<PathBuf>,
    #[arg(skip)]
    manifest: Option<PathBuf>,
    #[arg(skip)]
    variant: Option<VariantArg>,
    #[arg(skip)]
    budgets: Option<Vec<usize>>,
    #[arg(skip)]
    gamma: Option<f64>,
    #[arg(skip)]
    alpha: Option<f64>,
    #[arg(skip)]
    epsilon: Option<f64>,
    #[arg(skip)]
    trials: Option<usize>,
}

#[derive(Debug, Args)]
struct EngineerArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Node additions allowed.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Policy file for the rl1/rl2 strategies.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Text file with one `<csv> <schema>` pair per line.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Policy file to write.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Episode budgets, comma-separated.
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<usize>>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Policy for the rl1 column (default: the untrained policy).
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Budget of the rl1 run.
    #[arg(long)]
    budget: Option<usize>,
    /// Trials of the random baseline.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct ListArgs {
    #[arg(long, value_delimiter = ',')]
    catalog: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    /// Output directory of an `engineer` run.
    #[arg(long)]
    run: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: GraphFormat,
}

/// Flag values merged over config-file values.
#[derive(Debug, Clone)]
struct Settings {
    flags: CommonArgs,
    file: CommonArgs,
}

macro_rules! pick {
    ($s:expr, $field:ident) => {
        $s.flags.$field.clone().or_else(|| $s.file.$field.clone())
    };
}

impl Settings {
    fn load(flags: CommonArgs) -> Result<Settings, CliError> {
        let file = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))?
            }
            None => CommonArgs::default(),
        };
        Ok(Settings { flags, file })
    }

    fn seed(&self) -> u64 {
        pick!(self, seed).unwrap_or(0)
    }

    fn threads(&self) -> Result<usize, CliError> {
        positive("threads", pick!(self, threads).unwrap_or(1))
    }

    fn h_max(&self) -> usize {
        pick!(self, h_max).unwrap_or(DEFAULT_H_MAX)
    }

    fn sums(&self) -> bool {
        !(self.flags.no_sums || self.file.no_sums)
    }

    fn folds(&self) -> Result<usize, CliError> {
        let folds = pick!(self, folds).unwrap_or(DEFAULT_FOLDS);
        if folds < 2 {
            return Err(CliError::Usage(format!(
                "folds must be at least 2, got {folds}"
            )));
        }
        Ok(folds)
    }

    fn catalog(&self) -> Result<TransformCatalog, CliError> {
        match pick!(self, catalog) {
            Some(names) if !names.is_empty() => Ok(TransformCatalog::from_names(&names)?),
            Some(_) => Err(CliError::Usage("empty transform catalog".into())),
            None => Ok(TransformCatalog::default()),
        }
    }

    fn learner(&self) -> Result<Learner, CliError> {
        let kind: LearnerKind = pick!(self, learner)
            .unwrap_or(LearnerArg::RandomForest)
            .into();
        let mut learner = Learner::of_kind(kind, seeds::derive(self.seed(), "eval"));
        if let Some(t) = pick!(self, trees) {
            learner.trees = positive("trees", t)?;
        }
        if let Some(d) = pick!(self, max_depth) {
            learner.max_depth = Some(positive("max-depth", d)?);
        }
        if let Some(s) = pick!(self, subsample) {
            if !(s > 0.0 && s <= 1.0) {
                return Err(CliError::Usage(format!(
                    "subsample must lie in (0, 1], got {s}"
                )));
            }
            learner.subsample = s;
        }
        Ok(learner)
    }

    fn evaluator(&self) -> Result<Evaluator, CliError> {
        Ok(Evaluator::new(self.learner()?, self.folds()?))
    }

    fn dataset(
        &self,
        flag: &Option<PathBuf>,
        schema: &Option<PathBuf>,
    ) -> Result<(PathBuf, Dataset), CliError> {
        let path = flag
            .clone()
            .or_else(|| self.file.dataset.clone())
            .ok_or_else(|| CliError::Usage("--dataset is required".into()))?;
        let schema_path = schema
            .clone()
            .or_else(|| self.file.schema.clone())
            .ok_or_else(|| CliError::Usage("--schema is required".into()))?;
        let schema = Schema::from_file(&schema_path)?;
        Ok((path.clone(), load_dataset(&path, &schema)?))
    }
}

fn positive(name: &str, v: usize) -> Result<usize, CliError> {
    if v == 0 {
        return Err(CliError::Usage(format!("{name} must be positive")));
    }
    Ok(v)
}

/// Parses `argv` (including the program name), runs the command, and
/// returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("featgraph: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::ListTransforms(args) => list_transforms(&args),
        Command::InspectGraph(args) => inspect_graph(&args),
        Command::Engineer(args) => {
            let settings = Settings::load(args.common.clone())?;
            with_threads(settings.threads()?, || engineer(&args, &settings))
        }
        Command::TrainPolicy(args) => {
            let settings = Settings::load(args.common.clone())?;
            with_threads(settings.threads()?, || train(&args, &settings))
        }
        Command::Benchmark(args) => {
            let settings = Settings::load(args.common.clone())?;
            with_threads(settings.threads()?, || benchmark(&args, &settings))
        }
    }
}

fn with_threads<F>(threads: usize, f: F) -> Result<(), CliError>
where
    F: FnOnce() -> Result<(), CliError> + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    pool.install(f)
}

fn list_transforms(args: &ListArgs) -> Result<(), CliError> {
    let catalog = match &args.catalog {
        Some(names) => TransformCatalog::from_names(names)?,
        None => TransformCatalog::default(),
    };
    println!("{:<4}{:<26}{:<11}{:<40}", "#", "name", "arity", "inputs");
    for (i, t) in catalog.transforms().iter().enumerate() {
        let inputs: Vec<String> = t
            .input_dtypes()
            .iter()
            .map(|alts| {
                alts.iter()
                    .map(|d| d.as_str())
                    .collect::<Vec<_>>()
                    .join("|")
            })
            .collect();
        println!(
            "{:<4}{:<26}{:<11}{:<40}",
            i,
            t.descriptor(),
            t.arity().as_str(),
            inputs.join(", ")
        );
    }
    println!("fingerprint {}", catalog.fingerprint());
    Ok(())
}

fn inspect_graph(args: &InspectArgs) -> Result<(), CliError> {
    let path = args.run.join("graph.txt");
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let summary = GraphSummary::parse(&text)?;
    match args.format {
        GraphFormat::Text => print!("{}", summary.to_text()),
        GraphFormat::Dot => print!("{}", summary.to_dot()),
    }
    Ok(())
}

fn strategy_for(
    kind: StrategyKind,
    policy_path: Option<&Path>,
    catalog: &TransformCatalog,
) -> Result<Strategy, CliError> {
    match (kind.is_learned(), policy_path) {
        (false, Some(_)) => Err(CliError::Usage(format!(
            "--policy only applies to the rl1 and rl2 strategies, not {kind}"
        ))),
        (false, None) => Ok(Strategy::handcrafted(kind)),
        (true, None) => Err(CliError::Usage(format!("strategy {kind} needs --policy"))),
        (true, Some(p)) => {
            let policy = load_policy(p, catalog)?;
            let strategy = Strategy::learned(policy);
            if strategy.kind != kind {
                return Err(CliError::Usage(format!(
                    "policy file holds a {} policy, strategy is {kind}",
                    strategy.kind
                )));
            }
            Ok(strategy)
        }
    }
}

fn engineer(args: &EngineerArgs, s: &Settings) -> Result<(), CliError> {
    let catalog = s.catalog()?;
    let kind: StrategyKind = args
        .strategy
        .or(s.file.strategy)
        .unwrap_or(StrategyArg::GlobalHeuristic)
        .into();
    let policy_path = args.policy.clone().or_else(|| s.file.policy.clone());
    let strategy = strategy_for(kind, policy_path.as_deref(), &catalog)?;
    let budget = positive(
        "budget",
        args.budget.or(s.file.budget).unwrap_or(DEFAULT_BUDGET),
    )?;
    let out = args
        .out
        .clone()
        .or_else(|| s.file.out.clone())
        .unwrap_or_else(|| PathBuf::from("featgraph-out"));
    let evaluator = s.evaluator()?;
    let (dataset_path, d0) = s.dataset(&args.dataset, &args.schema)?;
    let config = ExploreConfig {
        budget,
        h_max: s.h_max(),
        sum_actions: s.sums(),
        seed: seeds::derive(s.seed(), "explore"),
    };
    let learner_id = evaluator.learner.id();
    let oracle: Arc<dyn AccuracyOracle> = Arc::new(evaluator);
    let outcome = explore(d0, &catalog, &strategy, &config, oracle)?;

    fs::create_dir_all(&out)?;
    let best = outcome.best_dataset();
    write_csv(best, &out.join("engineered.csv"))?;
    Schema::for_dataset(best).write(&out.join("engineered.schema"))?;
    fs::write(out.join("lineage.txt"), lineage_text(best))?;
    let summary = outcome.graph.summary();
    fs::write(out.join("graph.txt"), summary.to_text())?;
    fs::write(out.join("graph.dot"), summary.to_dot())?;

    let report = json!({
        "dataset": dataset_path.display().to_string(),
        "rows": best.row_count(),
        "task": best.task_kind().as_str(),
        "strategy": kind.as_str(),
        "budget": budget,
        "h_max": config.h_max,
        "sum_actions": config.sum_actions,
        "seed": s.seed(),
        "learner": learner_id,
        "folds": s.folds()?,
        "catalog": catalog.names(),
        "root_accuracy": outcome.graph.root().accuracy,
        "best_node": outcome.best_node(),
        "best_accuracy": outcome.best_accuracy(),
        "best_depth": outcome.graph.best_node().depth,
        "steps_used": outcome.graph.step_count(),
        "base_features": outcome.graph.root().feature_count(),
        "best_features": best.feature_names(),
        "steps": outcome.steps,
    });
    fs::write(out.join("report.json"), pretty(&report))?;
    fs::write(
        out.join("report.txt"),
        run_report_text(&outcome, kind, budget),
    )?;
    println!(
        "best node {} accuracy {:.6} (root {:.6}) after {} steps; wrote {}",
        outcome.best_node(),
        outcome.best_accuracy(),
        outcome.graph.root().accuracy,
        outcome.graph.step_count(),
        out.display()
    );
    Ok(())
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn timestamp_line() -> String {
    format!(
        "generated {}\n",
        chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ")
    )
}

fn lineage_text(d: &Dataset) -> String {
    let mut out = String::from("feature\tdepth\toriginals\n");
    for f in d.features() {
        let leaves: Vec<&str> = f.lineage().leaves();
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            f.name(),
            f.lineage().depth(),
            leaves.join(",")
        );
    }
    out
}

fn run_report_text(outcome: &ExploreOutcome, kind: StrategyKind, budget: usize) -> String {
    let g = &outcome.graph;
    let mut out = timestamp_line();
    let _ = writeln!(out, "strategy {kind}, budget {budget}, h_max {}", g.h_max());
    let _ = writeln!(
        out,
        "root accuracy {:.6} ({} features)",
        g.root().accuracy,
        g.root().feature_count()
    );
    let _ = writeln!(
        out,
        "\nstep  node  action              child  accuracy  reward    best"
    );
    for s in &outcome.steps {
        let action = match s.partner {
            Some(p) => format!("+ {p}"),
            None => s.action.clone(),
        };
        let _ = writeln!(
            out,
            "{:>4}  {:>4}  {:<18}  {:>5}  {:.6}  {:.6}  {:.6}",
            s.step, s.node, action, s.child, s.accuracy, s.reward, s.best
        );
    }
    let best = g.best_node();
    let _ = writeln!(
        out,
        "\nbest node {} at depth {}: accuracy {:.6}, {} features",
        best.id,
        best.depth,
        best.accuracy,
        best.feature_count()
    );
    for name in best.dataset.feature_names() {
        let _ = writeln!(out, "  {name}");
    }
    out
}

/// `<csv> <schema>` per line; relative paths resolve against the manifest's
/// directory. Blank lines and `#` comments are skipped.
fn read_manifest(path: &Path) -> Result<Vec<(PathBuf, PathBuf)>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read manifest {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(CliError::Data(format!(
                "manifest line {}: expected `<csv> <schema>`",
                i + 1
            )));
        }
        entries.push((base.join(parts[0]), base.join(parts[1])));
    }
    if entries.is_empty() {
        return Err(CliError::Data(format!(
            "manifest {} lists no datasets",
            path.display()
        )));
    }
    Ok(entries)
}

fn train(args: &TrainArgs, s: &Settings) -> Result<(), CliError> {
    let catalog = s.catalog()?;
    let manifest = args
        .manifest
        .clone()
        .or_else(|| s.file.manifest.clone())
        .ok_or_else(|| CliError::Usage("--manifest is required".into()))?;
    let out = args
        .out
        .clone()
        .or_else(|| s.file.out.clone())
        .unwrap_or_else(|| PathBuf::from("policy.json"));
    let variant = match args.variant.or(s.file.variant).unwrap_or(VariantArg::Rl1) {
        VariantArg::Rl1 => PolicyVariant::Rl1,
        VariantArg::Rl2 => PolicyVariant::Rl2,
    };
    let mut config = TrainConfig::new(variant, seeds::derive(s.seed(), "train"));
    config.budgets = args
        .budgets
        .clone()
        .or_else(|| s.file.budgets.clone())
        .unwrap_or_else(|| DEFAULT_BUDGETS.to_vec());
    if config.budgets.is_empty() || config.budgets.contains(&0) {
        return Err(CliError::Usage("budgets must be positive".into()));
    }
    config.gamma = args.gamma.or(s.file.gamma).unwrap_or(DEFAULT_GAMMA);
    config.alpha = args.alpha.or(s.file.alpha).unwrap_or(DEFAULT_ALPHA);
    config.epsilon = args.epsilon.or(s.file.epsilon).unwrap_or(DEFAULT_EPSILON);
    if !(0.0..=1.0).contains(&config.epsilon)
        || !(0.0..=1.0).contains(&config.gamma)
        || config.alpha < 0.0
    {
        return Err(CliError::Usage(
            "gamma and epsilon must lie in [0, 1], alpha must be non-negative".into(),
        ));
    }
    config.h_max = s.h_max();
    config.sum_actions = s.sums();

    let mut datasets = Vec::new();
    for (csv, schema) in read_manifest(&manifest)? {
        datasets.push(load_dataset(&csv, &Schema::from_file(&schema)?)?);
    }
    let oracle: Arc<dyn AccuracyOracle> = Arc::new(s.evaluator()?);
    let policy = train_policy(&datasets, &catalog, &config, oracle)?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_policy(&policy, &out)?;
    println!(
        "trained {} policy over {} episodes; wrote {}",
        variant.as_str(),
        policy.episodes,
        out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct BenchmarkRow {
    dataset: String,
    rows: usize,
    features: usize,
    base: f64,
    rl1: f64,
    #[serde(rename = "expand-reduce")]
    expand_reduce: f64,
    random: f64,
    #[serde(rename = "tree-heuristic")]
    tree_heuristic: f64,
}

fn benchmark(args: &BenchmarkArgs, s: &Settings) -> Result<(), CliError> {
    let catalog = s.catalog()?;
    let (path, d0) = s.dataset(&args.dataset, &args.schema)?;
    let budget = positive(
        "budget",
        args.budget.or(s.file.budget).unwrap_or(DEFAULT_BUDGET),
    )?;
    let trials = positive(
        "trials",
        args.trials
            .or(s.file.trials)
            .unwrap_or(DEFAULT_RANDOM_TRIALS),
    )?;
    let out = args
        .out
        .clone()
        .or_else(|| s.file.out.clone())
        .unwrap_or_else(|| PathBuf::from("featgraph-benchmark"));
    let policy = match args.policy.clone().or_else(|| s.file.policy.clone()) {
        Some(p) => load_policy(&p, &catalog)?,
        None => QPolicy::new(PolicyVariant::Rl1, &catalog),
    };
    if policy.variant != PolicyVariant::Rl1 {
        return Err(CliError::Usage("benchmark needs an rl1 policy".into()));
    }
    let evaluator = Arc::new(s.evaluator()?);
    let seed = s.seed();
    let base = evaluator.accuracy(&d0)?;
    let explore_with = |strategy: Strategy, budget: usize, label: &str| {
        let config = ExploreConfig {
            budget,
            h_max: s.h_max(),
            sum_actions: s.sums(),
            seed: seeds::derive(seed, label),
        };
        let oracle: Arc<dyn AccuracyOracle> = evaluator.clone();
        explore(d0.clone(), &catalog, &strategy, &config, oracle).map(|o| o.best_accuracy())
    };
    let rl1 = explore_with(Strategy::learned(policy), budget, "rl1")?;
    let tree_heuristic = explore_with(
        Strategy::handcrafted(StrategyKind::GlobalHeuristic),
        TREE_HEURISTIC_BUDGET,
        "tree-heuristic",
    )?;
    let expand_reduce = baseline_expand_reduce(
        &d0,
        &catalog,
        evaluator.as_ref(),
        seeds::derive(seed, "expand-reduce"),
    )?;
    let random = baseline_random(
        &d0,
        &catalog,
        trials,
        evaluator.as_ref(),
        seeds::derive(seed, "random"),
    )?;
    let row = BenchmarkRow {
        dataset: path.file_stem().map_or_else(
            || path.display().to_string(),
            |s| s.to_string_lossy().into_owned(),
        ),
        rows: d0.row_count(),
        features: d0.feature_count(),
        base,
        rl1,
        expand_reduce: expand_reduce.score,
        random: random.score,
        tree_heuristic,
    };
    fs::create_dir_all(&out)?;
    let report = json!({
        "seed": seed,
        "learner": evaluator.learner.id(),
        "folds": evaluator.folds,
        "catalog": catalog.names(),
        "rl1_budget": budget,
        "tree_heuristic_budget": TREE_HEURISTIC_BUDGET,
        "random_trials": trials,
        "results": [row],
    });
    fs::write(out.join("benchmark.json"), pretty(&report))?;
    let mut text = timestamp_line();
    let _ = writeln!(
        text,
        "{:<20} {:>7} {:>9} {:>8} {:>8} {:>14} {:>8} {:>15}",
        "dataset", "rows", "features", "base", "rl1", "expand-reduce", "random", "tree-heuristic"
    );
    let _ = writeln!(
        text,
        "{:<20} {:>7} {:>9} {:>8.4} {:>8.4} {:>14.4} {:>8.4} {:>15.4}",
        row.dataset,
        row.rows,
        row.features,
        row.base,
        row.rl1,
        row.expand_reduce,
        row.random,
        row.tree_heuristic
    );
    fs::write(out.join("benchmark.txt"), &text)?;
    print!("{}", text.split_once('\n').map_or("", |(_, rest)| rest));
    Ok(())
}
