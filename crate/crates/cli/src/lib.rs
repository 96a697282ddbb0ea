//! Command-line front end: argument parsing, dispatch and report encoding.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mbc_core::analysis::{
    composite_toss_bound, heavy_drift, lemma5_bounds, light_drift_magnitude, naive_bound, theorem2_bound,
    CalculusCheck,
};
use mbc_core::engine::{Experiment, ExperimentError, DEFAULT_CAP};
use mbc_core::grade::{
    build_lattice_with, check_monotonicity, grade_table, joint_bellman_oracle_on, GradeEntry, JointReport,
    LatticeOptions, MonotonicityReport,
};
use mbc_core::strategy::{naive_budget, DEFAULT_ROUND_ROBIN_POOL};
use mbc_core::{AbsorptionBounds, ExperimentSummary, GradeError, ParamError, ProblemParams, StrategyKind};
use serde::{Serialize, Serializer};
use serde_json::Value;

/// Largest fraction of capped episodes tolerated before a run is reported
/// as failed.
pub const MAX_CAPPED_FRACTION: f64 = 0.01;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Clap(#[from] clap::Error),
    #[error("invalid value for --{flag}: {source}")]
    Domain { flag: &'static str, source: ParamError },
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Grade(#[from] GradeError),
    #[error("{fraction} of {strategy} episodes hit the toss cap (limit {MAX_CAPPED_FRACTION})")]
    CapDominated { strategy: String, fraction: f64 },
    #[error("grade check failed: {0}")]
    CheckFailed(String),
    #[error("failed to write report: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to encode report: {0}")]
    Encode(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Clap(e) => e.exit_code() as u8,
            CliError::Domain { .. } => 2,
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "mbc", version, about = "Find a heavy coin with as few tosses as possible")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run seeded episodes of one strategy and summarise them
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "likelihood-toss", value_parser = parse_strategy)]
        strategy: StrategyKind,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Evaluate the closed-form toss and absorption bounds
    Bounds {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Compute grades, check their monotonicity and run the two-coin oracle
    GradeCheck {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grade: GradeArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Run likelihood-toss, naive and round-robin under one seed
    Compare {
        #[command(flatten)]
        model: ModelArgs,
        /// Slots used by the round-robin baseline
        #[arg(long, default_value_t = DEFAULT_ROUND_ROBIN_POOL, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
        pool: usize,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Midpoint heads probability
    #[arg(long)]
    p: f64,
    /// Half-gap between heavy and light coins
    #[arg(long)]
    epsilon: f64,
    /// Prior probability that a coin is heavy
    #[arg(long)]
    alpha: f64,
    /// Allowed error probability
    #[arg(long)]
    delta: f64,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker threads; 0 uses every core
    #[arg(long, default_value_t = 0)]
    parallelism: usize,
    /// Toss cap per episode
    #[arg(long, default_value_t = DEFAULT_CAP, value_parser = clap::value_parser!(u64).range(1..))]
    cap: u64,
}

#[derive(Args, Debug)]
struct GradeArgs {
    /// Lattice truncation depth M
    #[arg(long, default_value_t = 10.0, value_parser = positive)]
    depth: f64,
    /// Truncate histories longer than this many tosses (needed when the
    /// step ratio is irrational)
    #[arg(long)]
    horizon: Option<u64>,
    /// Grade tolerance
    #[arg(long, default_value_t = 1e-6, value_parser = positive)]
    tol: f64,
    /// Lattice depth for the two-coin oracle
    #[arg(long, default_value_t = 4.0, value_parser = positive)]
    joint_depth: f64,
    /// Optimality tolerance for the two-coin oracle
    #[arg(long, default_value_t = 1e-8, value_parser = positive)]
    joint_tol: f64,
}

#[derive(Args, Debug)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the report here instead of standard output
    #[arg(long)]
    output: Option<PathBuf>,
    /// Omit the timestamp so identical runs give identical bytes
    #[arg(long)]
    deterministic: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    Simulate,
    Bounds,
    GradeCheck,
    Compare,
}

impl fmt::Display for CommandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommandName::Simulate => "simulate",
            CommandName::Bounds => "bounds",
            CommandName::GradeCheck => "grade-check",
            CommandName::Compare => "compare",
        })
    }
}

fn parse_strategy(s: &str) -> Result<StrategyKind, String> {
    s.parse().map_err(|e: mbc_core::StrategyError| e.to_string())
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be positive and finite, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn display_opt<S: Serializer>(v: &Option<StrategyKind>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(k) => s.serialize_str(&k.to_string()),
        None => s.serialize_none(),
    }
}

/// Fully resolved configuration. Fields a subcommand does not use are `None`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: CommandName,
    pub p: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub delta: f64,
    #[serde(serialize_with = "display_opt", skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategyKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint_depth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint_tol: Option<f64>,
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub deterministic: bool,
    #[serde(skip)]
    pub params: Option<ProblemParams>,
}

impl RunConfig {
    fn base(command: CommandName, model: &ModelArgs, out: OutputArgs) -> Self {
        Self {
            command,
            p: model.p,
            epsilon: model.epsilon,
            alpha: model.alpha,
            delta: model.delta,
            strategy: None,
            pool: None,
            trials: None,
            seed: None,
            parallelism: None,
            cap: None,
            depth: None,
            horizon: None,
            tol: None,
            joint_depth: None,
            joint_tol: None,
            format: out.format,
            output: out.output,
            deterministic: out.deterministic,
            params: None,
        }
    }

    fn with_run(mut self, run: RunArgs) -> Self {
        self.trials = Some(run.trials);
        self.seed = Some(run.seed);
        self.parallelism = Some(run.parallelism);
        self.cap = Some(run.cap);
        self
    }

    /// Validated model parameters.
    pub fn problem(&self) -> Result<ProblemParams, CliError> {
        ProblemParams::new(self.p, self.epsilon, self.alpha, self.delta).map_err(|source| CliError::Domain {
            flag: param_flag(&source),
            source,
        })
    }
}

fn param_flag(e: &ParamError) -> &'static str {
    match e {
        ParamError::NotFinite { name, .. } => name,
        ParamError::Epsilon(_) => "epsilon",
        ParamError::PNotAboveEpsilon { .. } | ParamError::PNotBelowOneMinusEpsilon { .. } => "p",
        ParamError::Alpha(_) => "alpha",
        ParamError::Delta(_) => "delta",
        ParamError::DegenerateSteps { .. } => "p",
    }
}

/// Parses `argv` (including the program name) and validates the model
/// parameters.
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    let mut config = match cli.command {
        Command::Simulate { model, strategy, run, out } => {
            let mut c = RunConfig::base(CommandName::Simulate, &model, out).with_run(run);
            c.strategy = Some(strategy);
            c
        }
        Command::Bounds { model, out } => RunConfig::base(CommandName::Bounds, &model, out),
        Command::GradeCheck { model, grade, out } => {
            let mut c = RunConfig::base(CommandName::GradeCheck, &model, out);
            c.depth = Some(grade.depth);
            c.horizon = grade.horizon;
            c.tol = Some(grade.tol);
            c.joint_depth = Some(grade.joint_depth);
            c.joint_tol = Some(grade.joint_tol);
            c
        }
        Command::Compare { model, pool, run, out } => {
            let mut c = RunConfig::base(CommandName::Compare, &model, out).with_run(run);
            c.pool = Some(pool);
            c
        }
    };
    config.params = Some(config.problem()?);
    Ok(config)
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at_unix: Option<u64>,
    summary: ExperimentSummary,
}

#[derive(Serialize)]
struct Constants {
    delta_h: f64,
    delta_t: f64,
    boundary_b: f64,
    heavy_drift: f64,
    light_drift: f64,
}

#[derive(Serialize)]
struct BoundsReport<'a> {
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at_unix: Option<u64>,
    constants: Constants,
    theorem2_bound: f64,
    composite_bound: f64,
    naive_bound: f64,
    naive_budget: u64,
    lemma5: Option<AbsorptionBounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lemma5_unavailable: Option<String>,
    calculus: CalculusCheck,
}

#[derive(Serialize)]
struct GradeCheckReport<'a> {
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at_unix: Option<u64>,
    passed: bool,
    lattice_states: usize,
    grades: Vec<GradeEntry>,
    monotonicity: MonotonicityReport,
    joint: JointReport,
}

#[derive(Serialize)]
struct CompareReport<'a> {
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at_unix: Option<u64>,
    summaries: Vec<ExperimentSummary>,
    /// Likelihood-toss mean tosses over naive mean tosses.
    ratio_vs_naive: f64,
    /// Likelihood-toss mean tosses over round-robin mean tosses.
    ratio_vs_round_robin: f64,
}

/// An encoded report plus the reason the run should exit non-zero, if any.
#[derive(Debug)]
pub struct Report {
    pub value: Value,
    pub failure: Option<CliError>,
}

fn to_value<T: Serialize>(report: &T) -> Result<Value, CliError> {
    serde_json::to_value(report).map_err(|e| CliError::Encode(e.to_string()))
}

fn timestamp(config: &RunConfig) -> Option<u64> {
    if config.deterministic {
        return None;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
}

fn experiment(config: &RunConfig, params: ProblemParams, kind: StrategyKind) -> Result<ExperimentSummary, CliError> {
    let summary = Experiment::new(params, kind, config.trials.unwrap_or(1), config.seed.unwrap_or(0))
        .with_parallelism(config.parallelism.unwrap_or(0))
        .with_cap(config.cap.unwrap_or(DEFAULT_CAP))
        .run()?;
    Ok(summary)
}

fn cap_failure(summaries: &[ExperimentSummary]) -> Option<CliError> {
    summaries.iter().find(|s| s.capped_fraction() > MAX_CAPPED_FRACTION).map(|s| CliError::CapDominated {
        strategy: s.strategy.clone(),
        fraction: s.capped_fraction(),
    })
}

/// Runs the configured subcommand and builds its report.
pub fn execute(config: &RunConfig) -> Result<Report, CliError> {
    let params = match config.params {
        Some(p) => p,
        None => config.problem()?,
    };
    let generated_at_unix = timestamp(config);
    match config.command {
        CommandName::Simulate => {
            let kind = config.strategy.unwrap_or(StrategyKind::LikelihoodToss);
            let summary = experiment(config, params, kind)?;
            let failure = cap_failure(std::slice::from_ref(&summary));
            let value = to_value(&SimulateReport { config, generated_at_unix, summary })?;
            Ok(Report { value, failure })
        }
        CommandName::Bounds => {
            let (lemma5, lemma5_unavailable) = match lemma5_bounds(&params) {
                Ok(b) => (Some(b), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let report = BoundsReport {
                config,
                generated_at_unix,
                constants: Constants {
                    delta_h: params.delta_h(),
                    delta_t: params.delta_t(),
                    boundary_b: params.boundary_b(),
                    heavy_drift: heavy_drift(&params),
                    light_drift: light_drift_magnitude(&params),
                },
                theorem2_bound: theorem2_bound(&params),
                composite_bound: composite_toss_bound(&params),
                naive_bound: naive_bound(&params),
                naive_budget: naive_budget(&params),
                lemma5,
                lemma5_unavailable,
                calculus: CalculusCheck::evaluate(params.p(), params.epsilon()),
            };
            Ok(Report { value: to_value(&report)?, failure: None })
        }
        CommandName::GradeCheck => {
            let tol = config.tol.unwrap_or(1e-6);
            let mut options = LatticeOptions::new(config.depth.unwrap_or(10.0));
            let mut joint_options = LatticeOptions::new(config.joint_depth.unwrap_or(4.0));
            if let Some(h) = config.horizon {
                options = options.with_horizon(h);
                joint_options = joint_options.with_horizon(h);
            }
            let lattice = build_lattice_with(&params, options)?;
            let table = grade_table(&lattice, tol)?;
            let monotonicity = check_monotonicity(&table, tol);
            let joint = joint_bellman_oracle_on(&build_lattice_with(&params, joint_options)?, config.joint_tol.unwrap_or(1e-8))?;

            let mut problems = Vec::new();
            if !monotonicity.monotone {
                problems.push("grades are not monotone in x".to_string());
            }
            if !joint.max_x_optimal {
                problems.push(format!("max-x action is suboptimal at {} joint states", joint.violations.len()));
            }
            let passed = problems.is_empty();
            let report = GradeCheckReport {
                config,
                generated_at_unix,
                passed,
                lattice_states: lattice.len(),
                grades: table.entries,
                monotonicity,
                joint,
            };
            let failure = (!passed).then(|| CliError::CheckFailed(problems.join("; ")));
            Ok(Report { value: to_value(&report)?, failure })
        }
        CommandName::Compare => {
            let pool = config.pool.unwrap_or(DEFAULT_ROUND_ROBIN_POOL);
            let kinds = [StrategyKind::LikelihoodToss, StrategyKind::Naive, StrategyKind::RoundRobin { pool }];
            let summaries = kinds
                .into_iter()
                .map(|k| experiment(config, params, k))
                .collect::<Result<Vec<_>, _>>()?;
            let failure = cap_failure(&summaries);
            let report = CompareReport {
                config,
                generated_at_unix,
                ratio_vs_naive: summaries[0].mean_tosses / summaries[1].mean_tosses,
                ratio_vs_round_robin: summaries[0].mean_tosses / summaries[2].mean_tosses,
                summaries,
            };
            Ok(Report { value: to_value(&report)?, failure })
        }
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match value {
        Value::Object(map) => map.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        Value::Array(items) => items.iter().enumerate().for_each(|(i, v)| flatten(&key(&i.to_string()), v, out)),
        Value::Null => out.push((prefix.to_string(), String::new())),
        Value::Bool(b) => out.push((prefix.to_string(), b.to_string())),
        Value::Number(n) => out.push((prefix.to_string(), n.to_string())),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
    }
}

/// Encodes a report. CSV is one header row of dotted field paths and one
/// value row.
pub fn render(value: &Value, format: Format) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Json => {
            let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Encode(e.to_string()))?;
            bytes.push(b'\n');
            Ok(bytes)
        }
        Format::Csv => {
            let mut fields = Vec::new();
            flatten("", value, &mut fields);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(fields.iter().map(|(k, _)| k))
                .and_then(|_| w.write_record(fields.iter().map(|(_, v)| v)))
                .map_err(|e| CliError::Encode(e.to_string()))?;
            w.into_inner().map_err(|e| CliError::Encode(e.to_string()))
        }
    }
}

fn emit(config: &RunConfig, bytes: &[u8]) -> Result<(), CliError> {
    match &config.output {
        Some(path) => std::fs::write(path, bytes)?,
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

/// Parses, executes and emits; returns the process exit code.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match parse_args(argv) {
        Ok(c) => c,
        Err(CliError::Clap(e)) => {
            let _ = e.print();
            return e.exit_code() as u8;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let result = execute(&config).and_then(|report| {
        emit(&config, &render(&report.value, config.format)?)?;
        report.failure.map_or(Ok(()), Err)
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
