//! `causeq` command-line front end.
//!
//! Exit codes: 0 on success, 1 for runtime and I/O failures (including
//! evidence of probability zero), 2 for usage and validation errors.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use causeq::engine::query;
use causeq::meta_trainer::{run_training, TrainingConfig, TrainingTask, TrainingVariant};
use causeq::oracle::{format_constants, mint_constants};
use causeq::simulator::{offline_demo, run_experiment, write_jsonl, write_summary_csv, ExperimentSummary, Policy};
use causeq::{
    builtin, parse_process_spec, serialize_process, CausalProcess, HistoryKey, LearnerTable, Mode, SpecError,
    BUILTIN_NAMES,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "causeq",
    version,
    about = "Conditioning versus intervening in small causal sequence models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Print a target distribution given conditioned and intervened evidence.
    Query(QueryArgs),
    /// Play episodes and print their trajectories.
    Simulate(PlayArgs),
    /// Play episodes and compare policy summaries.
    Experiment(PlayArgs),
    /// Train a tabular learner by factual/counterfactual teaching.
    Metatrain(TrainArgs),
    /// Fit a next-action model on expert demonstrations and compare it with
    /// the conditioned and intervened targets.
    Offline(OfflineArgs),
    /// Print the reference constants computed by brute-force enumeration.
    Mint,
    /// Print a process in the canonical spec format.
    Serialize(ProcessArgs),
    /// Repeat a run from its config.json echo.
    #[serde(skip)]
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct ProcessArgs {
    /// Built-in name or path to a spec file.
    #[arg(long)]
    process: String,
    /// Rounds of a bandit built-in.
    #[arg(long, default_value_t = 1)]
    horizon: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct QueryArgs {
    #[command(flatten)]
    #[serde(flatten)]
    source: ProcessArgs,
    /// Variable name.
    #[arg(long)]
    target: String,
    /// Comma-separated terms `X=v` (condition) or `do(X=v)` (intervene),
    /// values given as labels.
    #[arg(long, default_value = "")]
    evidence: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum PolicyArg {
    Conditional,
    Interventional,
    Learned,
    /// Conditional and interventional.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum VariantArg {
    Frozen,
    Interleaved,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct RunArgs {
    /// Built-in name or path to a spec file with one repeated round.
    #[arg(long)]
    process: String,
    #[arg(long)]
    horizon: usize,
    #[arg(long)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Threads for episode generation; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, env = "CAUSEQ_OUT_DIR", default_value = "causeq-out")]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct PlayArgs {
    #[command(flatten)]
    #[serde(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value_t = PolicyArg::Both)]
    policy: PolicyArg,
    /// Learner table for `--policy learned`.
    #[arg(long)]
    learner: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = VariantArg::Frozen)]
    variant: VariantArg,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct OfflineArgs {
    #[command(flatten)]
    #[serde(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
}

#[derive(Debug, Clone, Args)]
struct RerunArgs {
    /// config.json written by an earlier run.
    config: PathBuf,
    /// Write outputs here instead of the recorded directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConfigEcho {
    version: String,
    #[serde(flatten)]
    command: Command,
}

/// Bad input; exits with status 2.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() || err.downcast_ref::<SpecError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<causeq::Error>() {
        Some(causeq::Error::ZeroProbabilityEvidence) | None => 1,
        Some(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if is_broken_pipe(&err) {
                return ExitCode::SUCCESS;
            }
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Output cut short by a closed pipe (`causeq ... | head`) is not an error.
fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain()
        .filter_map(|e| e.downcast_ref::<io::Error>())
        .any(|e| e.kind() == io::ErrorKind::BrokenPipe)
}

fn run(command: Command) -> Result<()> {
    let mut out = io::stdout().lock();
    match command {
        Command::Query(args) => cmd_query(&args),
        Command::Simulate(ref args) => cmd_play(&command, args, false),
        Command::Experiment(ref args) => cmd_play(&command, args, true),
        Command::Metatrain(ref args) => cmd_metatrain(&command, args),
        Command::Offline(ref args) => cmd_offline(&command, args),
        Command::Mint => {
            write!(out, "{}", format_constants(&mint_constants()?))?;
            Ok(())
        }
        Command::Serialize(args) => {
            write!(
                out,
                "{}",
                serialize_process(&load_process(&args.process, args.horizon)?)
            )?;
            Ok(())
        }
        Command::Rerun(args) => cmd_rerun(&args),
    }
}

fn load_process(source: &str, horizon: usize) -> Result<CausalProcess> {
    if BUILTIN_NAMES.contains(&source) {
        return Ok(builtin(source, horizon)?);
    }
    let path = Path::new(source);
    if !path.exists() {
        return Err(usage(format!(
            "unknown process {source:?}: not a file, and valid built-in names are {}",
            BUILTIN_NAMES.join(", ")
        )));
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let process = parse_process_spec(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(process)
}

fn cmd_query(args: &QueryArgs) -> Result<()> {
    let mut out = io::stdout().lock();
    let process = load_process(&args.source.process, args.source.horizon)?;
    let target = process
        .variable_by_name(&args.target)
        .ok_or_else(|| usage(format!("unknown target variable {:?}", args.target)))?
        .id;
    let evidence = process.parse_evidence(&args.evidence)?;
    let dist = query(&process, target, &evidence)?;
    let cells: Vec<String> = dist.probs().iter().map(|p| format!("{p:.6}")).collect();
    writeln!(out, "{}", cells.join(" "))?;
    Ok(())
}

fn validate_run(run: &RunArgs) -> Result<()> {
    if run.episodes == 0 {
        return Err(usage("--episodes must be at least 1"));
    }
    if run.horizon == 0 {
        return Err(usage("--horizon must be at least 1"));
    }
    if run.workers == 0 {
        return Err(usage("--workers must be at least 1"));
    }
    Ok(())
}

/// Creates the output directory and writes the config echo.
fn prepare_out_dir(command: &Command, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let echo = ConfigEcho {
        version: VERSION.to_string(),
        command: command.clone(),
    };
    let text = serde_json::to_string_pretty(&echo)? + "\n";
    fs::write(dir.join("config.json"), text)
        .with_context(|| format!("writing {}", dir.join("config.json").display()))?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("writing {}", path.display()))?,
    ))
}

/// Names the history with variable names and labels, e.g. `do(A1=1),O1=1`.
fn describe_key(process: &CausalProcess, key: &HistoryKey) -> String {
    if key.is_empty() {
        return "-".into();
    }
    key.items()
        .iter()
        .map(|e| {
            let var = process.variable(e.variable);
            let term = format!("{}={}", var.name, var.labels[e.value]);
            match e.mode {
                Mode::Intervene => format!("do({term})"),
                Mode::Condition => term,
            }
        })
        .collect::<Vec<_>>()
        .join(",")
}

fn cmd_play(command: &Command, args: &PlayArgs, compare: bool) -> Result<()> {
    let mut out = io::stdout().lock();
    let run = &args.run;
    validate_run(run)?;
    let template = load_process(&run.process, 1)?;
    let learner = match (&args.learner, args.policy) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Some(LearnerTable::from_text(&text)?)
        }
        (None, PolicyArg::Learned) => return Err(usage("--policy learned needs --learner")),
        (None, _) => None,
    };
    let policies: Vec<Policy> = match args.policy {
        PolicyArg::Conditional => vec![Policy::Conditional],
        PolicyArg::Interventional => vec![Policy::Interventional],
        PolicyArg::Learned => vec![Policy::Learned(learner.as_ref().expect("checked above"))],
        PolicyArg::Both => vec![Policy::Conditional, Policy::Interventional],
    };
    prepare_out_dir(command, &run.out_dir)?;
    let mut summaries: Vec<ExperimentSummary> = Vec::new();
    for policy in policies {
        let (summary, records) = run_experiment(&template, policy, run.horizon, run.episodes, run.seed, run.workers)?;
        let name = policy.kind().as_str();
        let mut out = create(&run.out_dir.join(format!("episodes-{name}.jsonl")))?;
        write_jsonl(&mut out, &records)?;
        out.flush()?;
        if !compare {
            writeln!(out, "{name}:")?;
            for r in records.iter().take(5) {
                let arms: Vec<&str> = r
                    .steps
                    .iter()
                    .map(|s| template.variables[1].labels[s.action].as_str())
                    .collect();
                let rewards: Vec<String> = r.steps.iter().map(|s| s.reward.to_string()).collect();
                let theta: Vec<&str> = r
                    .theta
                    .iter()
                    .enumerate()
                    .map(|(v, &x)| template.variables[v].labels[x].as_str())
                    .collect();
                writeln!(
                    out,
                    "  theta {}  actions {}  rewards {}",
                    theta.join(","),
                    arms.join(" "),
                    rewards.join(" ")
                )?;
            }
        }
        summaries.push(summary);
    }
    let mut csv = create(&run.out_dir.join("summary.csv"))?;
    write_summary_csv(&mut csv, &summaries)?;
    csv.flush()?;
    writeln!(
        out,
        "{:<15} {:>9} {:>8} {:>19} {:>19} {:>19}",
        "policy", "episodes", "aborted", "mean reward", "final best arm", "repeat rate"
    )?;
    for s in &summaries {
        let cell = |e: &causeq::simulator::Estimate| format!("{:.4} ± {:.4}", e.mean, e.se);
        writeln!(
            out,
            "{:<15} {:>9} {:>8} {:>19} {:>19} {:>19}",
            s.policy.as_str(),
            s.episodes,
            s.aborted,
            cell(&s.mean_reward),
            cell(&s.best_arm_rate),
            cell(&s.repeat_rate)
        )?;
    }
    writeln!(out, "wrote {}", run.out_dir.display())?;
    Ok(())
}

fn cmd_metatrain(command: &Command, args: &TrainArgs) -> Result<()> {
    let mut out = io::stdout().lock();
    let run = &args.run;
    validate_run(run)?;
    if !(args.alpha >= 0.0 && args.alpha.is_finite()) {
        return Err(usage("--alpha must be finite and non-negative"));
    }
    let template = load_process(&run.process, 1)?;
    let config = TrainingConfig {
        horizon: run.horizon,
        episodes: run.episodes,
        alpha: args.alpha,
        seed: run.seed,
        variant: match args.variant {
            VariantArg::Frozen => TrainingVariant::Frozen,
            VariantArg::Interleaved => TrainingVariant::Interleaved,
        },
        workers: run.workers,
    };
    prepare_out_dir(command, &run.out_dir)?;
    let table = run_training(&template, &config)?;
    fs::write(run.out_dir.join("learner.txt"), table.to_text())
        .with_context(|| format!("writing {}", run.out_dir.join("learner.txt").display()))?;

    let q = TrainingTask::new(&template, run.horizon)?.process;
    let mut csv = create(&run.out_dir.join("tv.csv"))?;
    writeln!(csv, "table,key,samples,tv_intervened,tv_deluded")?;
    writeln!(
        out,
        "{:<12} {:<32} {:>8} {:>14} {:>11}",
        "table", "key", "samples", "TV intervened", "TV deluded"
    )?;
    let mut worst = 0.0f64;
    let rows = table
        .actions
        .rows()
        .map(|(k, c)| ("action", k, c))
        .chain(table.observations.rows().map(|(k, c)| ("observation", k, c)));
    for (kind, key, counts) in rows {
        let predictive = match kind {
            "action" => table.action_predictive(key),
            _ => table.observation_predictive(key),
        };
        let target = key.last_variable().map_or(0, |v| v + 1);
        let target = if kind == "action" {
            causeq::policies::next_action(&q, key)?
        } else {
            target
        };
        let intervened = match query(&q, target, key.items()) {
            Ok(d) => predictive.total_variation(&d),
            Err(causeq::Error::Capacity { .. }) => {
                writeln!(
                    out,
                    "horizon too long for exact targets; table written without distances"
                )?;
                return Ok(());
            }
            Err(e) => return Err(e.into()),
        };
        let deluded = query(&q, target, key.all_conditioned().items())
            .map(|d| format!("{:.6}", predictive.total_variation(&d)))
            .unwrap_or_else(|_| "NA".into());
        worst = worst.max(intervened);
        let samples: u64 = counts.iter().sum();
        writeln!(csv, "{kind},{key},{samples},{intervened:.6},{deluded}")?;
        writeln!(
            out,
            "{kind:<12} {:<32} {samples:>8} {intervened:>14.6} {deluded:>11}",
            describe_key(&q, key)
        )?;
    }
    csv.flush()?;
    writeln!(out, "max TV to intervened targets: {worst:.6}")?;
    writeln!(out, "wrote {}", run.out_dir.display())?;
    Ok(())
}

fn cmd_offline(command: &Command, args: &OfflineArgs) -> Result<()> {
    let mut out = io::stdout().lock();
    let run = &args.run;
    validate_run(run)?;
    let template = load_process(&run.process, 1)?;
    prepare_out_dir(command, &run.out_dir)?;
    let report = offline_demo(&template, run.horizon, run.episodes, run.seed, args.alpha)?;
    let q = TrainingTask::new(&template, run.horizon)?.process;
    let mut csv = create(&run.out_dir.join("offline.csv"))?;
    writeln!(
        csv,
        "key,samples,tv_deluded,tv_deluded_se,tv_intervened,tv_intervened_se"
    )?;
    writeln!(
        out,
        "{:<28} {:>8} {:>17} {:>17}",
        "history", "samples", "TV deluded", "TV intervened"
    )?;
    for r in &report.rows {
        writeln!(
            csv,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            r.key, r.samples, r.tv_conditional, r.tv_conditional_se, r.tv_interventional, r.tv_interventional_se
        )?;
        writeln!(
            out,
            "{:<28} {:>8} {:>17} {:>17}",
            describe_key(&q, &r.key),
            r.samples,
            format!("{:.4} ± {:.4}", r.tv_conditional, r.tv_conditional_se),
            format!("{:.4} ± {:.4}", r.tv_interventional, r.tv_interventional_se)
        )?;
    }
    csv.flush()?;
    fs::write(run.out_dir.join("offline-table.txt"), report.table.to_text())?;
    writeln!(
        out,
        "deployed fit: repeat rate {:.4} ± {:.4}",
        report.deployed.repeat_rate.mean, report.deployed.repeat_rate.se
    )?;
    writeln!(out, "wrote {}", run.out_dir.display())?;
    Ok(())
}

fn cmd_rerun(args: &RerunArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let echo: ConfigEcho = serde_json::from_str(&text).map_err(|e| usage(format!("invalid config echo: {e}")))?;
    if echo.version != VERSION {
        eprintln!("note: config written by version {}, running {VERSION}", echo.version);
    }
    let mut command = echo.command;
    if let Some(dir) = &args.out_dir {
        match &mut command {
            Command::Simulate(a) | Command::Experiment(a) => a.run.out_dir = dir.clone(),
            Command::Metatrain(a) => a.run.out_dir = dir.clone(),
            Command::Offline(a) => a.run.out_dir = dir.clone(),
            _ => {}
        }
    }
    run(command)
}
