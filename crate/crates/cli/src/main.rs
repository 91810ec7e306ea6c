mod config;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use modrule_core::evaluation::{self, MetricsReport};
use modrule_core::log_model::{import_xes, parse_csv, serialize_csv, ParseOptions, SchemaSidecar, DEFAULT_BINS};
use modrule_core::mdl_codec::{CounterMode, DEFAULT_EPSILON, DEFAULT_PRECISION, LN_CONSTANT};
use modrule_core::rule_model::count_dags;
use modrule_core::scorer::total_score;
use modrule_core::search::{moody, IterationRecord, SearchConfig};
use modrule_core::synthgen::{self, SynthConfig, TargetKind};
use modrule_core::{CodecConfig, EventLog, Model, Operator};
use serde::Serialize;

use config::{pick, RunConfig};

/// Bad flags or config; exits with status 1. Everything else is a data
/// error and exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "modrule", about = "Mine data modification rules from event logs", disable_version_flag = true)]
struct Cli {
    /// Print version and codec constants.
    #[arg(long)]
    version: bool,

    /// TOML file with default settings; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Only log errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Mine a rule model from a log.
    Mine(MineArgs),
    /// Print the score breakdown of a model on a log as JSON.
    Score(ScoreArgs),
    /// Sample a ground-truth model and generate a log from it.
    Generate(GenerateArgs),
    /// Apply swap noise to a log.
    Noise(NoiseArgs),
    /// Predict a test log with a model and report metrics.
    Evaluate(EvaluateArgs),
    /// Count labeled DAGs with a given number of nodes and at most a given number of edges.
    CountDags(CountDagsArgs),
}

#[derive(Args)]
struct CodecArgs {
    /// Histogram bins for numerical variables [default: 50].
    #[arg(long)]
    bins: Option<usize>,
    /// Significant digits of numerical constants [default: 3].
    #[arg(long)]
    precision: Option<u32>,
    /// Prequential pseudo-count [default: 0.5].
    #[arg(long)]
    epsilon: Option<f64>,
    /// `global` or `per-variable` prequential counter [default: global].
    #[arg(long)]
    counter: Option<String>,
    /// JSON schema sidecar declaring column kinds (CSV input only).
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Args)]
struct MineArgs {
    /// Input log (.csv or .xes).
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    codec: CodecArgs,
    /// Conditions per operator.
    #[arg(long)]
    nc: Option<usize>,
    /// Updates per update type and target.
    #[arg(long)]
    nu: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on passes over the variables.
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Score every candidate instead of stopping on the estimate.
    #[arg(long)]
    exhaustive: bool,
    /// Model JSON output.
    #[arg(long)]
    output: Option<PathBuf>,
    /// CSV of the score after each accepted rule.
    #[arg(long)]
    trace_scores: Option<PathBuf>,
    /// JSON with score, runtime and candidate counts.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    codec: CodecArgs,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rules: Option<usize>,
    /// Categorical variables, counting `activity`.
    #[arg(long)]
    cat: Option<usize>,
    #[arg(long)]
    num: Option<usize>,
    /// Minimum number of events.
    #[arg(long)]
    events: Option<usize>,
    /// Comma-separated condition operators, e.g. "=,<=,>=".
    #[arg(long)]
    ops: Option<String>,
    /// Categorical domain size.
    #[arg(long)]
    domain: Option<usize>,
    /// `categorical-only`, `numerical-only` or `mixed`.
    #[arg(long)]
    target: Option<String>,
    /// Swap-noise fraction applied to the generated log.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth model JSON output.
    #[arg(long)]
    out_gt: Option<PathBuf>,
}

#[derive(Args)]
struct NoiseArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// Fraction of values to swap per variable.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    codec: CodecArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Log the model was mined on; supplies fallback statistics and the
    /// discretization. Defaults to the test log.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Also write the empty-model metrics here.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Per-rule train/test metrics as JSON.
    #[arg(long)]
    per_rule: Option<PathBuf>,
    /// Stats JSON from `mine`; its runtime is copied into the report.
    #[arg(long)]
    stats: Option<PathBuf>,
    #[command(flatten)]
    codec: CodecArgs,
}

#[derive(Args)]
struct CountDagsArgs {
    #[arg(long)]
    nodes: usize,
    #[arg(long)]
    edges: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (_, 0) => log::LevelFilter::Warn,
        (_, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.version {
        println!("modrule {}", env!("CARGO_PKG_VERSION"));
        println!("epsilon {DEFAULT_EPSILON}");
        println!("precision {DEFAULT_PRECISION}");
        println!("bins {DEFAULT_BINS}");
        println!("L_N constant {LN_CONSTANT}");
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(usage("no command given; see --help"));
    };
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match command {
        Command::Mine(a) => mine(a, &cfg),
        Command::Score(a) => score(a, &cfg),
        Command::Generate(a) => generate(a, &cfg),
        Command::Noise(a) => noise(a, &cfg),
        Command::Evaluate(a) => evaluate(a, &cfg),
        Command::CountDags(a) => {
            println!("{}", count_dags(a.nodes, a.edges));
            Ok(())
        }
    }
}

struct Codec {
    bins: usize,
    schema: Option<SchemaSidecar>,
    codec: CodecConfig,
}

impl CodecArgs {
    fn resolve(self, cfg: &RunConfig) -> Result<Codec> {
        let bins = pick(self.bins, cfg.bins, DEFAULT_BINS);
        if bins == 0 {
            return Err(usage("--bins must be positive"));
        }
        let epsilon = pick(self.epsilon, cfg.epsilon, DEFAULT_EPSILON);
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(usage("--epsilon must be positive"));
        }
        let precision = pick(self.precision, cfg.precision, DEFAULT_PRECISION);
        if precision == 0 {
            return Err(usage("--precision must be positive"));
        }
        let counter = match pick(self.counter, cfg.counter.clone(), "global".into()).as_str() {
            "global" => CounterMode::Global,
            "per-variable" => CounterMode::PerVariable,
            other => return Err(usage(format!("unknown counter mode `{other}`"))),
        };
        let schema = match self.schema.or_else(|| cfg.schema.clone()) {
            Some(path) => Some(serde_json::from_str(&read(&path)?).with_context(|| format!("parsing {}", path.display()))?),
            None => None,
        };
        Ok(Codec {
            bins,
            schema,
            codec: CodecConfig { epsilon, precision, counter },
        })
    }
}

fn required(flag: Option<PathBuf>, config: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| config.clone()).ok_or_else(|| usage(format!("missing --{name}")))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn read_log(path: &Path, codec: &Codec) -> Result<EventLog> {
    let text = read(path)?;
    let is_xes = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xes"));
    let log = if is_xes {
        import_xes(&text, codec.bins)
    } else {
        parse_csv(&text, &ParseOptions { bins: codec.bins, schema: codec.schema.clone() })
    };
    let log = log.with_context(|| format!("parsing {}", path.display()))?;
    info!("{}: {} traces, {} events, {} variables", path.display(), log.trace_count(), log.event_count(), log.schema().len());
    Ok(log)
}

/// A log coded against another log's discretization.
fn read_log_with_schema(path: &Path, codec: &Codec, reference: &EventLog) -> Result<EventLog> {
    let log = read_log(path, codec)?;
    log.to_builder()
        .build_with_schema(reference.schema())
        .with_context(|| format!("coding {} against the training log", path.display()))
}

fn read_model(path: &Path) -> Result<Model> {
    Model::from_json_str(&read(path)?).with_context(|| format!("parsing model {}", path.display()))
}

#[derive(Serialize)]
struct MineStats {
    score: modrule_core::ScoreBreakdown,
    empty_score: f64,
    rules: usize,
    rule_terms: usize,
    candidates: usize,
    runtime_seconds: f64,
}

fn mine(a: MineArgs, cfg: &RunConfig) -> Result<()> {
    let input = required(a.input, &cfg.input, "input")?;
    let codec = a.codec.resolve(cfg)?;
    let config = SearchConfig {
        n_c: pick(a.nc, cfg.nc, 50),
        n_u: pick(a.nu, cfg.nu, 1),
        max_iterations: a.max_iterations.or(cfg.max_iterations),
        seed: pick(a.seed, cfg.seed, 0),
        workers: pick(a.workers, cfg.workers, 1),
        exhaustive: a.exhaustive || cfg.exhaustive.unwrap_or(false),
        codec: codec.codec,
    };
    if config.workers == 0 {
        return Err(usage("--workers must be positive"));
    }
    let log = read_log(&input, &codec)?;
    let start = Instant::now();
    let outcome = moody(&log, &config)?;
    let runtime = start.elapsed().as_secs_f64();
    info!("{} rules, {:.3} bits (empty model {:.3}) in {runtime:.2}s", outcome.model.len(), outcome.score.total, outcome.empty_score);

    let output = a.output.or_else(|| cfg.output.clone());
    if let Some(path) = &output {
        write(path, &(outcome.model.to_json_string() + "\n"))?;
    }
    if let Some(path) = a.trace_scores.or_else(|| cfg.trace_scores.clone()) {
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        let start = IterationRecord {
            iteration: 0,
            pass: 0,
            variable: String::new(),
            rule: String::new(),
            evaluated: 0,
            total: outcome.empty_score,
        };
        for r in std::iter::once(&start).chain(&outcome.trace) {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    if let Some(path) = a.stats.or_else(|| cfg.stats.clone()) {
        let stats = MineStats {
            score: outcome.score,
            empty_score: outcome.empty_score,
            rules: outcome.model.len(),
            rule_terms: outcome.model.rule_term_count(),
            candidates: outcome.candidates,
            runtime_seconds: runtime,
        };
        write_json(&path, &stats)?;
    }
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string(&outcome.score)?)?;
    if output.is_none() {
        writeln!(out, "{}", outcome.model.pretty())?;
    }
    Ok(())
}

fn score(a: ScoreArgs, cfg: &RunConfig) -> Result<()> {
    let input = required(a.input, &cfg.input, "input")?;
    let model_path = required(a.model, &cfg.model, "model")?;
    let codec = a.codec.resolve(cfg)?;
    let log = read_log(&input, &codec)?;
    let model = read_model(&model_path)?;
    let breakdown = total_score(&log, &model, &codec.codec)?;
    println!("{}", serde_json::to_string(&breakdown)?);
    Ok(())
}

fn parse_ops(text: &str) -> Result<Vec<Operator>> {
    let ops: Vec<Operator> = text
        .split(',')
        .map(|s| Operator::from_symbol(s.trim()).ok_or_else(|| usage(format!("unknown operator `{}`", s.trim()))))
        .collect::<Result<_>>()?;
    if ops.is_empty() {
        return Err(usage("--ops is empty"));
    }
    Ok(ops)
}

fn parse_target(text: &str) -> Result<TargetKind> {
    Ok(match text {
        "categorical-only" => TargetKind::CategoricalOnly,
        "numerical-only" => TargetKind::NumericalOnly,
        "mixed" => TargetKind::Mixed,
        other => return Err(usage(format!("unknown target kind `{other}`"))),
    })
}

fn check_fraction(q: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&q) {
        Ok(q)
    } else {
        Err(usage(format!("noise fraction {q} outside [0, 1]")))
    }
}

fn generate(a: GenerateArgs, cfg: &RunConfig) -> Result<()> {
    let out = required(a.out, &cfg.out, "out")?;
    let defaults = SynthConfig::default();
    let ops = match a.ops.or_else(|| cfg.ops.clone()) {
        Some(text) => parse_ops(&text)?,
        None => defaults.condition_ops.clone(),
    };
    let target = match a.target.or_else(|| cfg.target.clone()) {
        Some(text) => parse_target(&text)?,
        None => defaults.target_kind,
    };
    let config = SynthConfig {
        seed: pick(a.seed, cfg.seed, 0),
        n_rules: pick(a.rules, cfg.rules, defaults.n_rules),
        n_cat: pick(a.cat, cfg.cat, defaults.n_cat),
        n_num: pick(a.num, cfg.num, defaults.n_num),
        n_events: pick(a.events, cfg.events, defaults.n_events),
        condition_ops: ops,
        trace_len: cfg.trace_len.unwrap_or(defaults.trace_len),
        cat_domain_size: pick(a.domain, cfg.domain, defaults.cat_domain_size),
        target_kind: target,
        bins: pick(None, cfg.bins, defaults.bins),
    };
    let q = check_fraction(pick(a.noise, cfg.noise, 0.0))?;
    if config.n_rules == 0 || config.trace_len.0 < 2 || config.trace_len.0 > config.trace_len.1 {
        return Err(usage("need at least one rule and trace lengths min >= 2, min <= max"));
    }

    let gt = synthgen::sample_ground_truth(&config)?;
    let mut log = synthgen::generate_log(&gt, &config)?;
    if q > 0.0 {
        // a seed stream separate from generation
        log = synthgen::add_swap_noise(&log, q, config.seed.wrapping_add(1))?;
    }
    info!("generated {} events from {} rules", log.event_count(), gt.len());
    write(&out, &serialize_csv(&log))?;
    if let Some(path) = a.out_gt.or_else(|| cfg.out_gt.clone()) {
        write(&path, &(gt.to_json_string() + "\n"))?;
    }
    Ok(())
}

fn noise(a: NoiseArgs, cfg: &RunConfig) -> Result<()> {
    let input = required(a.input, &cfg.input, "input")?;
    let out = required(a.out, &cfg.out, "out")?;
    let Some(q) = a.noise.or(cfg.noise) else {
        bail!(usage("missing --noise"));
    };
    let q = check_fraction(q)?;
    let codec = a.codec.resolve(cfg)?;
    let log = read_log(&input, &codec)?;
    let noisy = synthgen::add_swap_noise(&log, q, pick(a.seed, cfg.seed, 0))?;
    write(&out, &serialize_csv(&noisy))
}

fn evaluate(a: EvaluateArgs, cfg: &RunConfig) -> Result<()> {
    let model = read_model(&required(a.model, &cfg.model, "model")?)?;
    let test_path = required(a.test, &cfg.test, "test")?;
    let codec = a.codec.resolve(cfg)?;
    let (train, test) = match a.train.or_else(|| cfg.train.clone()) {
        Some(train_path) => {
            let train = read_log(&train_path, &codec)?;
            let test = read_log_with_schema(&test_path, &codec, &train)?;
            (train, test)
        }
        None => {
            let test = read_log(&test_path, &codec)?;
            (test.clone(), test)
        }
    };
    let precision = codec.codec.precision;
    let mut report: MetricsReport = evaluation::evaluate(&model, &train, &test, precision)?;
    if let Some(path) = a.stats.or_else(|| cfg.stats.clone()) {
        let stats: serde_json::Value = serde_json::from_str(&read(&path)?)?;
        report.runtime_seconds = stats["runtime_seconds"].as_f64().context("stats file has no runtime_seconds")?;
    }
    if let Some(path) = a.baseline {
        write_json(&path, &evaluation::baseline(&train, &test)?)?;
    }
    if let Some(path) = a.per_rule {
        write_json(&path, &evaluation::per_rule_generalization(&model, &train, &test, precision)?)?;
    }
    let text = serde_json::to_string_pretty(&report)?;
    match a.report.or_else(|| cfg.report.clone()) {
        Some(path) => write(&path, &(text + "\n")),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}
