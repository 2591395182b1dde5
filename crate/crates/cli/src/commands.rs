use std::io::Write;
use std::path::{Path, PathBuf};

use bwe_core::dataio::read_dataset;
use bwe_core::evalx::report;
use bwe_core::policy::save_weights;
use bwe_core::rl::{save_log_csv, train, IqlHyper, RewardMode};
use bwe_core::traces::{write_trace, Family, FamilyConfig, Scenario};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::pipeline::{
    by_family, family_scenarios, suite_score, sweep, write_trajectories, SweepOptions,
};
use crate::policy_spec::{PolicyFactory, PolicySpec};
use crate::CliError;

pub const WEIGHTS_FILE: &str = "weights.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
/// Calls per scenario when a whole suite is swept and `--repeats` is absent.
pub const SUITE_REPEATS: usize = 10;

#[derive(Debug, Parser)]
#[command(name = "bwe", version, about = "Bandwidth-estimation workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write generated trace files.
    Traces(TracesArgs),
    /// Run emulated calls and write one trajectory file per call leg.
    Simulate(SimulateArgs),
    /// Train an IQL policy on a trajectory dataset.
    Train(TrainArgs),
    /// Run policies over scenarios and write the report table and plots.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteName {
    Default,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// A single scenario of this family; its trace seed is `--seed`.
    #[arg(long, conflicts_with = "suite", required_unless_present = "suite")]
    pub family: Option<Family>,
    /// The evaluation suite (scenarios per family from the families config).
    #[arg(long, value_enum)]
    pub suite: Option<SuiteName>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 120_000.0)]
    pub duration_ms: f64,
    /// Calls per scenario [default: 10 with --suite, 1 with --family].
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Trace generator calibration (TOML).
    #[arg(long)]
    pub families_config: Option<PathBuf>,
    /// Parallel workers. Results do not depend on this value.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct TracesArgs {
    #[command(flatten)]
    pub scenarios: ScenarioArgs,
    #[arg(long, env = "BWE_OUT_DIR", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenarios: ScenarioArgs,
    /// heuristic | oracle | constant:<bps> | weights:<path> | noisy-heuristic:<sigma>
    #[arg(long)]
    pub policy: PolicySpec,
    #[arg(long, env = "BWE_OUT_DIR", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Dataset directory with a manifest.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "desk", value_parser = ["paper", "desk"])]
    pub preset: String,
    /// Override the preset's step count.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Override the preset's batch size.
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "sum")]
    pub reward_mode: RewardMode,
    #[arg(long, env = "BWE_OUT_DIR", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub scenarios: ScenarioArgs,
    /// Policy to evaluate; repeat the flag for several.
    #[arg(long = "policy")]
    pub policies: Vec<PolicySpec>,
    #[arg(long, env = "BWE_OUT_DIR", default_value = "out")]
    pub out: PathBuf,
}

/// Resolved scenario list and sweep settings.
fn resolve(args: &ScenarioArgs) -> Result<(Vec<Scenario>, SweepOptions), CliError> {
    let families = match &args.families_config {
        Some(p) => FamilyConfig::load(p)?,
        None => FamilyConfig::default(),
    };
    let (scenarios, default_repeats) = match (args.family, args.suite) {
        (Some(f), None) => (family_scenarios(f, args.seed), 1),
        (None, Some(SuiteName::Default)) => (families.suite(args.seed), SUITE_REPEATS),
        _ => {
            return Err(CliError::Config(
                "give exactly one of --family or --suite".into(),
            ))
        }
    };
    if !(args.duration_ms.is_finite() && args.duration_ms > 0.0) {
        return Err(CliError::Config(format!(
            "duration {} ms must be positive",
            args.duration_ms
        )));
    }
    let opts = SweepOptions {
        duration_ms: args.duration_ms,
        repeats: args.repeats.unwrap_or(default_repeats),
        seed: args.seed,
        jobs: args.jobs.max(1),
        families,
        ..SweepOptions::default()
    };
    if opts.repeats == 0 {
        return Err(CliError::Config("repeats must be at least 1".into()));
    }
    Ok((scenarios, opts))
}

fn selection_json(args: &ScenarioArgs) -> serde_json::Value {
    json!({
        "family": args.family,
        "suite": args.suite,
        "families_config": args.families_config,
    })
}

fn echo(out: &mut dyn Write, value: serde_json::Value) -> Result<(), CliError> {
    writeln!(out, "{value}").map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn say(out: &mut dyn Write, line: &str) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Execute a parsed command. The first line written to `out` is the
/// effective configuration as JSON.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Traces(a) => cmd_traces(&a, out),
        Command::Simulate(a) => cmd_simulate(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Evaluate(a) => cmd_evaluate(&a, out),
    }
}

fn cmd_traces(a: &TracesArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (scenarios, opts) = resolve(&a.scenarios)?;
    echo(
        out,
        json!({
            "command": "traces",
            "selection": selection_json(&a.scenarios),
            "seed": opts.seed,
            "duration_ms": opts.duration_ms,
            "families": opts.families,
            "out": a.out,
        }),
    )?;
    ensure_dir(&a.out)?;
    for s in &scenarios {
        let trace = opts.families.generate(s.family, s.seed, opts.duration_ms)?;
        let path = a.out.join(format!("{}.trace", s.name));
        write_trace(&trace, &path)?;
        say(
            out,
            &format!(
                "trace {} segments={} file={}",
                s.name,
                trace.segments.len(),
                path.display()
            ),
        )?;
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (scenarios, opts) = resolve(&a.scenarios)?;
    let policy = PolicyFactory::new(a.policy.clone())?;
    echo(
        out,
        json!({
            "command": "simulate",
            "selection": selection_json(&a.scenarios),
            "policy": a.policy,
            "sweep": opts,
            "out": a.out,
        }),
    )?;
    let results = sweep(&policy, &scenarios, &opts, true)?;
    write_trajectories(&results, &a.out)?;
    for r in &results {
        say(out, &r.summary_line()?)?;
    }
    let s = suite_score(&results, opts.seed)?;
    say(
        out,
        &format!(
            "suite calls={} S={:.4} ci95=[{:.4}, {:.4}]",
            results.len(),
            s.s,
            s.ci_low,
            s.ci_high
        ),
    )
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut hyper = IqlHyper::preset(&a.preset)
        .ok_or_else(|| CliError::Config(format!("unknown preset {}", a.preset)))?;
    if let Some(steps) = a.steps {
        hyper.steps = steps;
    }
    if let Some(batch) = a.batch {
        hyper.batch = batch;
    }
    hyper.seed = a.seed;
    hyper.validate()?;
    echo(
        out,
        json!({
            "command": "train",
            "data": a.data,
            "preset": a.preset,
            "hyper": hyper,
            "reward_mode": a.reward_mode,
            "out": a.out,
        }),
    )?;
    let calls = read_dataset(&a.data)?;
    let trained = train(&calls, &hyper, a.reward_mode)?;
    ensure_dir(&a.out)?;
    let weights_path = a.out.join(WEIGHTS_FILE);
    save_weights(&trained.weights(), &weights_path).map_err(|e| CliError::Policy(e.to_string()))?;
    let log_path = a.out.join(TRAIN_LOG_FILE);
    save_log_csv(&trained.log, &log_path).map_err(|e| CliError::io(&log_path, e))?;
    let last = trained.log.last();
    say(
        out,
        &format!(
            "trained calls={} steps={} final_v_loss={} final_q_loss={} final_actor_loss={} weights={}",
            calls.len(),
            hyper.steps,
            last.map_or(f64::NAN, |r| r.losses.v_loss),
            last.map_or(f64::NAN, |r| r.losses.q_loss),
            last.map_or(f64::NAN, |r| r.losses.actor_loss),
            weights_path.display()
        ),
    )
}

fn cmd_evaluate(a: &EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.policies.is_empty() {
        return Err(CliError::Config("no policies given (use --policy)".into()));
    }
    let (scenarios, opts) = resolve(&a.scenarios)?;
    let factories = a
        .policies
        .iter()
        .cloned()
        .map(PolicyFactory::new)
        .collect::<Result<Vec<_>, _>>()?;
    echo(
        out,
        json!({
            "command": "evaluate",
            "selection": selection_json(&a.scenarios),
            "policies": a.policies,
            "sweep": opts,
            "out": a.out,
        }),
    )?;
    let mut table = Vec::new();
    for f in &factories {
        let results = sweep(f, &scenarios, &opts, false)?;
        let s = suite_score(&results, opts.seed)?;
        say(
            out,
            &format!(
                "policy {} calls={} S={:.4} ci95=[{:.4}, {:.4}]",
                f.label(),
                results.len(),
                s.s,
                s.ci_low,
                s.ci_high
            ),
        )?;
        table.extend(by_family(&results));
    }
    table.sort_by_key(|r| family_rank(&r.family));
    let written = report(&table, &a.out, opts.seed)?;
    say(
        out,
        &format!("report files={} dir={}", written.len(), a.out.display()),
    )
}

fn family_rank(name: &str) -> usize {
    Family::ALL
        .iter()
        .position(|f| f.as_str() == name)
        .unwrap_or(usize::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn family_and_suite_are_exclusive() {
        assert!(Cli::try_parse_from(["bwe", "simulate", "--policy", "oracle"]).is_err());
        assert!(Cli::try_parse_from([
            "bwe", "simulate", "--policy", "oracle", "--family", "low_bw", "--suite", "default"
        ])
        .is_err());
        assert!(Cli::try_parse_from([
            "bwe", "simulate", "--policy", "oracle", "--family", "low_bw"
        ])
        .is_ok());
        assert!(Cli::try_parse_from([
            "bwe", "simulate", "--policy", "bogus", "--family", "low_bw"
        ])
        .is_err());
    }

    #[test]
    fn suite_defaults_to_ten_repeats() {
        let cli = Cli::try_parse_from([
            "bwe", "simulate", "--policy", "oracle", "--suite", "default",
        ])
        .unwrap();
        let Command::Simulate(a) = cli.command else {
            panic!()
        };
        let (scenarios, opts) = resolve(&a.scenarios).unwrap();
        assert_eq!(scenarios.len(), 16);
        assert_eq!(opts.repeats * scenarios.len(), 160);
    }
}
