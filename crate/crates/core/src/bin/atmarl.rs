//! Command-line front end for the training and evaluation pipeline.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use atmarl::agents::write_pretrain_log;
use atmarl::config::ScenarioConfig;
use atmarl::emulator::{DistributionKind, DistributionSpec};
use atmarl::harness::{
    checkpoint_path, emit_report, evaluate, pretrain_stage, run_pipeline, summarize, train_stage, trace_file_name,
    Approach, EpisodeTrace, ExperimentPlan, Role, SeedArtifacts, Shift, SummaryRow,
};
use atmarl::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "atmarl", version, about = "Supervised coordination of MARL systems on a simulated slice")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Verb {
    /// Pre-train both MARL systems and write one checkpoint per seed.
    Pretrain,
    /// Train the supervisors needed by the chosen approaches into existing checkpoints.
    TrainSupervisor,
    /// Evaluate approaches from checkpoints and write trace CSVs.
    Evaluate,
    /// Summarise trace CSVs already in the output directory.
    Report,
    /// Run every stage and write checkpoints, traces and the report.
    Full,
}

#[derive(Args, Debug)]
struct Opts {
    /// Scenario file; the built-in three-intent scenario when omitted.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Approach name or `all`. Repeatable.
    #[arg(long, global = true)]
    approach: Vec<String>,
    /// Seed. Repeatable; defaults to 1..=5.
    #[arg(long, global = true)]
    seed: Vec<u64>,
    /// Supervisor training episodes.
    #[arg(long, global = true)]
    episodes: Option<usize>,
    /// Checkpoint directory; `<out>/checkpoints` when omitted.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Evaluation distribution (`uniform`, `gaussian` or `gamma`).
    #[arg(long, global = true)]
    eval_dist: Option<String>,
    /// Mid-episode distribution change as `step:distribution`. Repeatable.
    #[arg(long, global = true)]
    shift: Vec<String>,
    /// Evaluation episode length.
    #[arg(long, global = true)]
    episode_len: Option<usize>,
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config { line: 0, msg: msg.into() }
}

fn distribution(name: &str) -> Result<DistributionSpec> {
    DistributionKind::parse(name)
        .map(DistributionSpec::of_kind)
        .ok_or_else(|| config_error(format!("unknown distribution `{name}`")))
}

fn approaches(names: &[String], default: &[Approach]) -> Result<Vec<Approach>> {
    if names.is_empty() {
        return Ok(default.to_vec());
    }
    let mut out = Vec::new();
    for name in names {
        if name.eq_ignore_ascii_case("all") {
            out.extend(Approach::ALL);
            continue;
        }
        out.push(Approach::parse(name).ok_or_else(|| config_error(format!("unknown approach `{name}`")))?);
    }
    out.sort_by_key(|a| Approach::ALL.iter().position(|b| b == a));
    out.dedup();
    Ok(out)
}

fn build_plan(opts: &Opts, verb: Verb) -> Result<ExperimentPlan> {
    let scenario = match &opts.scenario {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::three_intent(),
    };
    scenario.validate()?;
    let eval_distribution = opts.eval_dist.as_deref().map(distribution).transpose()?;
    let mut default = vec![Approach::AtMarl, Approach::GoalHalving, Approach::RuleBased, Approach::NaiveParallel];
    if eval_distribution.is_some() {
        default.push(Approach::Oracle);
    }
    if verb == Verb::TrainSupervisor {
        default = vec![Approach::AtMarl];
    }
    let mut plan = ExperimentPlan::new(scenario, approaches(&opts.approach, &default)?);
    plan.eval_distribution = eval_distribution;
    if !opts.seed.is_empty() {
        plan.seeds = opts.seed.clone();
    }
    if let Some(n) = opts.episodes {
        plan.train.episodes = n;
    }
    if let Some(len) = opts.episode_len {
        plan.episode_len = len;
        plan.oscillation_from = len / 2;
    }
    for spec in &opts.shift {
        let (at, dist) = spec
            .split_once(':')
            .ok_or_else(|| config_error(format!("shift `{spec}` is not `step:distribution`")))?;
        let at = at.trim().parse().map_err(|_| config_error(format!("bad shift step in `{spec}`")))?;
        plan.shifts.push(Shift {
            at,
            distribution: distribution(dist)?,
        });
    }
    plan.validate()?;
    Ok(plan)
}

fn checkpoint_dir(opts: &Opts) -> PathBuf {
    opts.checkpoint.clone().unwrap_or_else(|| opts.out.join("checkpoints"))
}

fn print_summary(rows: &[SummaryRow]) {
    println!("{:<15} {:<10} {:>9} {:>9} {:>11} {:>11}", "approach", "kpi", "iae", "iae_std", "conv_time", "oscillation");
    let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
    for r in rows {
        println!(
            "{:<15} {:<10} {:>9} {:>9} {:>11} {:>11.4}",
            r.approach.name(),
            r.kpi,
            fmt(r.iae_mean),
            fmt(r.iae_std),
            r.conv_time_mean.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}")),
            r.oscillation_mean
        );
    }
}

fn load_seed(dir: &Path, seed: u64) -> Result<SeedArtifacts> {
    SeedArtifacts::load(&checkpoint_path(dir, seed))
}

fn run_pretrain(plan: &ExperimentPlan, opts: &Opts) -> Result<()> {
    let dir = checkpoint_dir(opts);
    std::fs::create_dir_all(&dir)?;
    std::fs::create_dir_all(&opts.out)?;
    for &seed in &plan.seeds {
        let out = pretrain_stage(&plan.scenario, &plan.pretrain, seed)?;
        let path = checkpoint_path(&dir, seed);
        out.artifacts.save(&path)?;
        let log = opts.out.join(format!("pretrain_seed{seed}.csv"));
        write_pretrain_log(&out.logs, File::create(&log)?)?;
        println!("seed {seed}: {} and {}", path.display(), log.display());
    }
    Ok(())
}

fn run_train(plan: &ExperimentPlan, opts: &Opts) -> Result<()> {
    let dir = checkpoint_dir(opts);
    let eval = plan.eval_scenario();
    for &seed in &plan.seeds {
        let mut artifacts = load_seed(&dir, seed)?;
        for role in plan.roles() {
            let scenario = if role == Role::Oracle { &eval } else { &plan.scenario };
            let report = train_stage(&mut artifacts, role, scenario, &plan.train, plan.goal_levels)?;
            for w in &report.warnings {
                eprintln!("seed {seed} {}: {w}", role.name());
            }
            println!(
                "seed {seed} {}: {} episodes, solved at {}",
                role.name(),
                report.episode_rewards.len(),
                report.solved_episode.map_or_else(|| "never".to_string(), |e| e.to_string())
            );
        }
        artifacts.save(&checkpoint_path(&dir, seed))?;
    }
    Ok(())
}

fn run_evaluate(plan: &ExperimentPlan, opts: &Opts) -> Result<Vec<EpisodeTrace>> {
    let dir = checkpoint_dir(opts);
    std::fs::create_dir_all(&opts.out)?;
    let eval = plan.eval_scenario();
    let mut traces = Vec::new();
    for &seed in &plan.seeds {
        let artifacts = load_seed(&dir, seed)?;
        for &approach in &plan.approaches {
            let trace = evaluate(approach, &artifacts, &eval, plan)?;
            let path = opts.out.join(trace_file_name(&trace));
            trace.write_csv(File::create(&path)?)?;
            println!("{}", path.display());
            traces.push(trace);
        }
    }
    Ok(traces)
}

fn run_report(plan: &ExperimentPlan, opts: &Opts) -> Result<()> {
    let kinds: Vec<_> = plan.scenario.services.iter().map(|s| s.spec.kpi_kind()).collect();
    let targets = plan.scenario.targets();
    let mut traces = Vec::new();
    for &approach in &plan.approaches {
        for &seed in &plan.seeds {
            let path = opts.out.join(format!("trace_{}_seed{seed}.csv", approach.name()));
            if !path.exists() {
                continue;
            }
            let file = File::open(&path)?;
            traces.push(EpisodeTrace::read_csv(file, approach, seed, kinds.clone(), targets.clone())?);
        }
    }
    if traces.is_empty() {
        return Err(Error::Plan(format!("no trace CSVs found in {}", opts.out.display())).in_stage("report"));
    }
    let summary = summarize(&traces, plan.oscillation_from).map_err(|e| e.in_stage("report"))?;
    emit_report(&opts.out, &[], &summary).map_err(|e| e.in_stage("report"))?;
    print_summary(&summary);
    Ok(())
}

fn run_full(plan: &ExperimentPlan, opts: &Opts) -> Result<()> {
    let result = run_pipeline(plan)?;
    let dir = checkpoint_dir(opts);
    std::fs::create_dir_all(&dir)?;
    for a in &result.artifacts {
        a.save(&checkpoint_path(&dir, a.seed))?;
    }
    emit_report(&opts.out, &result.traces, &result.summary).map_err(|e| e.in_stage("report"))?;
    for (seed, role, report) in &result.training {
        for w in &report.warnings {
            eprintln!("seed {seed} {}: {w}", role.name());
        }
    }
    print_summary(&result.summary);
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let plan = build_plan(&cli.opts, cli.verb)?;
    match cli.verb {
        Verb::Pretrain => run_pretrain(&plan, &cli.opts),
        Verb::TrainSupervisor => run_train(&plan, &cli.opts),
        Verb::Evaluate => run_evaluate(&plan, &cli.opts).map(|_| ()),
        Verb::Report => run_report(&plan, &cli.opts),
        Verb::Full => run_full(&plan, &cli.opts),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
