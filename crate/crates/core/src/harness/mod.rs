//! End-to-end pipeline: pre-training, supervisor training, evaluation of every
//! approach, checkpoints and reports.

mod checkpoint;
mod trace;

pub use checkpoint::{Block, BlockSet, HEADER as CHECKPOINT_HEADER};
pub use trace::{
    plot_script, summarize, write_summary, EpisodeTrace, KpiMetrics, SummaryRow, TraceRow, NOT_REACHED,
    SUMMARY_HEADER,
};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agents::{
    estimate_capabilities, pretrain_system, AgentId, CapabilityVector, MarlSystem, PretrainConfig, PretrainLogRow,
    QTable, SystemKind, ACTIONS, DEFAULT_HORIZON,
};
use crate::baselines::{active_flags, naive_parallel_goals, rule_based_select, DEFAULT_SWITCH_PERIOD};
use crate::config::ScenarioConfig;
use crate::emulator::{DistributionSpec, MBR_LADDER};
use crate::error::{Error, Result};
use crate::supervisor::{
    train_supervisor, HeadMode, PolicyShape, SupervisorPolicy, Team, TeamEnv, TrainConfig, TrainingReport,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Approach {
    AtMarl,
    RuleBased,
    NaiveParallel,
    GoalHalving,
    Oracle,
}

impl Approach {
    pub const ALL: [Approach; 5] = [
        Approach::AtMarl,
        Approach::RuleBased,
        Approach::NaiveParallel,
        Approach::GoalHalving,
        Approach::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Approach::AtMarl => "atmarl",
            Approach::RuleBased => "rule-based",
            Approach::NaiveParallel => "naive-parallel",
            Approach::GoalHalving => "goal-halving",
            Approach::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        Approach::ALL.into_iter().find(|a| a.name() == s || a.name().replace('-', "") == s)
    }

    /// The trained supervisor this approach needs, if any.
    pub fn role(self) -> Option<Role> {
        match self {
            Approach::AtMarl => Some(Role::AgentLevel),
            Approach::GoalHalving => Some(Role::ServiceLevel),
            Approach::Oracle => Some(Role::Oracle),
            Approach::RuleBased | Approach::NaiveParallel => None,
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Trained supervisor variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    /// Agent-level goals, trained on the training scenario.
    AgentLevel,
    /// Service-level goals split by goal halving.
    ServiceLevel,
    /// Agent-level goals, retrained on the evaluation distribution.
    Oracle,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::AgentLevel, Role::ServiceLevel, Role::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Role::AgentLevel => "agent-level",
            Role::ServiceLevel => "service-level",
            Role::Oracle => "oracle",
        }
    }

    pub fn head_mode(self) -> HeadMode {
        match self {
            Role::ServiceLevel => HeadMode::PerIntent,
            Role::AgentLevel | Role::Oracle => HeadMode::PerAgent,
        }
    }

    fn stage(self) -> u64 {
        match self {
            Role::AgentLevel => stage::TRAIN_AGENT_LEVEL,
            Role::ServiceLevel => stage::TRAIN_SERVICE_LEVEL,
            Role::Oracle => stage::TRAIN_ORACLE,
        }
    }
}

/// Distribution change applied before step `at`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shift {
    pub at: usize,
    pub distribution: DistributionSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    /// Scenario used for pre-training and supervisor training.
    pub scenario: ScenarioConfig,
    /// Distribution evaluated on; `None` means the training one.
    pub eval_distribution: Option<DistributionSpec>,
    pub approaches: Vec<Approach>,
    pub seeds: Vec<u64>,
    pub episode_len: usize,
    pub shifts: Vec<Shift>,
    pub switch_period: u64,
    /// First step of the oscillation window.
    pub oscillation_from: usize,
    pub goal_levels: usize,
    pub pretrain: PretrainConfig,
    pub train: TrainConfig,
}

impl ExperimentPlan {
    pub fn new(scenario: ScenarioConfig, approaches: Vec<Approach>) -> Self {
        let train = TrainConfig::default();
        let pretrain = PretrainConfig::default();
        ExperimentPlan {
            scenario,
            eval_distribution: None,
            approaches,
            seeds: (1..=5).collect(),
            episode_len: train.episode_len,
            shifts: Vec::new(),
            switch_period: DEFAULT_SWITCH_PERIOD,
            oscillation_from: train.episode_len / 2,
            goal_levels: pretrain.goal_levels,
            pretrain,
            train,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Plan("seed list is empty".into()));
        }
        if self.approaches.is_empty() {
            return Err(Error::Plan("approach list is empty".into()));
        }
        if self.episode_len == 0 {
            return Err(Error::Plan("episode length must be positive".into()));
        }
        if self.switch_period == 0 {
            return Err(Error::Plan("switch period must be at least 1".into()));
        }
        if self.goal_levels != self.pretrain.goal_levels {
            return Err(Error::Plan("goal ladder size differs between plan and pre-training".into()));
        }
        let mut last = None;
        for s in &self.shifts {
            if s.at >= self.episode_len || last.is_some_and(|l| s.at <= l) {
                return Err(Error::Plan(format!(
                    "shift steps must be strictly increasing and below the episode length {}",
                    self.episode_len
                )));
            }
            s.distribution.validate()?;
            last = Some(s.at);
        }
        if let Some(d) = &self.eval_distribution {
            d.validate()?;
        }
        Ok(())
    }

    pub fn eval_scenario(&self) -> ScenarioConfig {
        let mut s = self.scenario.clone();
        if let Some(d) = self.eval_distribution {
            s.distribution = d;
        }
        s
    }

    pub fn roles(&self) -> Vec<Role> {
        let mut roles: Vec<Role> = self.approaches.iter().filter_map(|a| a.role()).collect();
        roles.sort();
        roles.dedup();
        roles
    }
}

/// Independent random streams per pipeline stage.
pub mod stage {
    pub const PRETRAIN_PRIORITY: u64 = 1;
    pub const PRETRAIN_MBR: u64 = 2;
    pub const TRAIN_AGENT_LEVEL: u64 = 3;
    pub const TRAIN_SERVICE_LEVEL: u64 = 4;
    pub const TRAIN_ORACLE: u64 = 5;
    pub const EVALUATE: u64 = 6;
}

pub fn stage_rng(seed: u64, stage: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedSupervisor {
    pub policy: SupervisorPolicy,
    /// Capability vectors as left by training; frozen during evaluation.
    pub capabilities: Vec<CapabilityVector>,
}

/// Everything one seed produces before evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedArtifacts {
    pub seed: u64,
    pub priority: MarlSystem,
    pub mbr: MarlSystem,
    pub capabilities: Vec<CapabilityVector>,
    pub supervisors: BTreeMap<Role, TrainedSupervisor>,
}

impl SeedArtifacts {
    pub fn team(&self) -> Result<Team<'_>> {
        Team::new(&self.priority, &self.mbr)
    }

    pub fn intents(&self) -> usize {
        self.priority.agents.len()
    }

    pub fn supervisor(&self, role: Role) -> Result<&TrainedSupervisor> {
        self.supervisors
            .get(&role)
            .ok_or_else(|| Error::Plan(format!("no {} supervisor for seed {}", role.name(), self.seed)))
    }
}

pub struct PretrainOutput {
    pub artifacts: SeedArtifacts,
    pub logs: Vec<PretrainLogRow>,
}

/// Pre-trains both systems (each against the other frozen at defaults) and
/// derives the initial capability vectors.
pub fn pretrain_stage(scenario: &ScenarioConfig, config: &PretrainConfig, seed: u64) -> Result<PretrainOutput> {
    let run = || -> Result<PretrainOutput> {
        let (priority, mut logs) =
            pretrain_system(SystemKind::Priority, scenario, config, &mut stage_rng(seed, stage::PRETRAIN_PRIORITY))?;
        let (mbr, mbr_logs) = pretrain_system(SystemKind::Mbr, scenario, config, &mut stage_rng(seed, stage::PRETRAIN_MBR))?;
        logs.extend(mbr_logs);
        let roster = AgentId::roster(scenario.services.len());
        let capabilities = estimate_capabilities(&logs, &roster, config.goal_levels, DEFAULT_HORIZON.min(config.horizon));
        Ok(PretrainOutput {
            artifacts: SeedArtifacts {
                seed,
                priority,
                mbr,
                capabilities,
                supervisors: BTreeMap::new(),
            },
            logs,
        })
    };
    run().map_err(|e| e.in_stage("pretrain"))
}

/// Trains the supervisor for `role` on `scenario` and stores it in `artifacts`.
pub fn train_stage(
    artifacts: &mut SeedArtifacts,
    role: Role,
    scenario: &ScenarioConfig,
    config: &TrainConfig,
    goal_levels: usize,
) -> Result<TrainingReport> {
    let run = |artifacts: &SeedArtifacts| -> Result<(TrainedSupervisor, TrainingReport)> {
        let mut rng = stage_rng(artifacts.seed, role.stage());
        let shape = PolicyShape::new(artifacts.intents(), goal_levels, role.head_mode());
        let mut policy = SupervisorPolicy::new(shape, &mut rng);
        let mut capabilities = artifacts.capabilities.clone();
        let report = train_supervisor(&mut policy, &mut capabilities, artifacts.team()?, scenario, config, &mut rng)?;
        Ok((TrainedSupervisor { policy, capabilities }, report))
    };
    let (trained, report) = run(artifacts).map_err(|e| e.in_stage("train-supervisor"))?;
    artifacts.supervisors.insert(role, trained);
    Ok(report)
}

fn agent_names(scenario: &ScenarioConfig) -> Vec<String> {
    AgentId::roster(scenario.services.len())
        .iter()
        .map(|id| format!("{}_{}", id.system, scenario.services[id.intent_index].spec.name))
        .collect()
}

/// Runs one evaluation episode of `approach`. Nothing in `artifacts` changes.
pub fn evaluate(
    approach: Approach,
    artifacts: &SeedArtifacts,
    scenario: &ScenarioConfig,
    plan: &ExperimentPlan,
) -> Result<EpisodeTrace> {
    let run = || -> Result<EpisodeTrace> {
        let mut rng = stage_rng(artifacts.seed, stage::EVALUATE);
        let k = scenario.services.len();
        if k != artifacts.intents() {
            return Err(Error::shape("scenario intents", artifacts.intents(), k));
        }
        let supervisor = approach.role().map(|r| artifacts.supervisor(r)).transpose()?;
        let mut env = TeamEnv::new(artifacts.team()?, scenario, scenario.initial_controls(), plan.goal_levels, &mut rng)?;
        let mut actor_state = supervisor.map(|s| s.policy.initial_state());
        let targets = env.intents.targets.clone();
        let mut rows = Vec::with_capacity(plan.episode_len);
        for t in 0..plan.episode_len {
            if let Some(shift) = plan.shifts.iter().find(|s| s.at == t) {
                env.state.set_distribution(shift.distribution)?;
            }
            let (goals, active) = match (approach, supervisor, actor_state.as_mut()) {
                (Approach::RuleBased, _, _) => (
                    naive_parallel_goals(&targets),
                    active_flags(rule_based_select(t as u64, plan.switch_period)),
                ),
                (Approach::NaiveParallel, _, _) => (naive_parallel_goals(&targets), [true, true]),
                (_, Some(sup), Some(state)) => {
                    let d = crate::supervisor::decide(&sup.policy, &sup.capabilities, &env, state, &mut rng, false)?;
                    (d.goals, [true, true])
                }
                _ => return Err(Error::Plan(format!("{approach} needs a trained supervisor"))),
            };
            let outcome = env.step(goals.clone(), active, &mut rng)?;
            let c = &env.state.controls;
            let knobs = c
                .priority
                .iter()
                .map(|&p| f64::from(p))
                .chain(c.mbr_level.iter().map(|&l| MBR_LADDER[l]))
                .collect();
            rows.push(TraceRow {
                t,
                kpi: outcome.report.kpi,
                goals,
                knobs,
                reward: outcome.reward,
                active,
                distribution: env.state.distribution.kind,
            });
        }
        Ok(EpisodeTrace {
            approach,
            seed: artifacts.seed,
            services: scenario.services.iter().map(|s| s.spec.name.clone()).collect(),
            kinds: env.intents.kinds.clone(),
            targets,
            agents: agent_names(scenario),
            rows,
        })
    };
    run().map_err(|e| e.in_stage("evaluate"))
}

/// Trains whatever `plan` needs for one seed.
pub fn prepare_seed(plan: &ExperimentPlan, seed: u64) -> Result<(SeedArtifacts, Vec<(Role, TrainingReport)>)> {
    let mut artifacts = pretrain_stage(&plan.scenario, &plan.pretrain, seed)?.artifacts;
    let mut reports = Vec::new();
    let eval = plan.eval_scenario();
    for role in plan.roles() {
        let scenario = if role == Role::Oracle { &eval } else { &plan.scenario };
        reports.push((role, train_stage(&mut artifacts, role, scenario, &plan.train, plan.goal_levels)?));
    }
    Ok((artifacts, reports))
}

#[derive(Clone, Debug)]
pub struct PipelineResult {
    pub artifacts: Vec<SeedArtifacts>,
    pub training: Vec<(u64, Role, TrainingReport)>,
    pub traces: Vec<EpisodeTrace>,
    pub summary: Vec<SummaryRow>,
}

/// Evaluates every approach of `plan` on already prepared seeds.
pub fn evaluate_plan(plan: &ExperimentPlan, artifacts: &[SeedArtifacts]) -> Result<(Vec<EpisodeTrace>, Vec<SummaryRow>)> {
    plan.validate()?;
    let eval = plan.eval_scenario();
    let mut traces = Vec::new();
    for &approach in &plan.approaches {
        for a in artifacts {
            traces.push(evaluate(approach, a, &eval, plan)?);
        }
    }
    let summary = summarize(&traces, plan.oscillation_from).map_err(|e| e.in_stage("report"))?;
    Ok((traces, summary))
}

/// Pre-train, train and evaluate for every seed, then aggregate.
pub fn run_pipeline(plan: &ExperimentPlan) -> Result<PipelineResult> {
    plan.validate()?;
    let mut artifacts = Vec::new();
    let mut training = Vec::new();
    for &seed in &plan.seeds {
        let (a, reports) = prepare_seed(plan, seed)?;
        training.extend(reports.into_iter().map(|(r, rep)| (seed, r, rep)));
        artifacts.push(a);
    }
    let (traces, summary) = evaluate_plan(plan, &artifacts)?;
    Ok(PipelineResult {
        artifacts,
        training,
        traces,
        summary,
    })
}

pub fn trace_file_name(trace: &EpisodeTrace) -> String {
    format!("trace_{}_seed{}.csv", trace.approach.name(), trace.seed)
}

/// Writes every trace, the summary table and the plotting script into `dir`.
pub fn emit_report(dir: &Path, traces: &[EpisodeTrace], summary: &[SummaryRow]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for tr in traces {
        let path = dir.join(trace_file_name(tr));
        tr.write_csv(std::fs::File::create(&path)?)?;
        written.push(path);
    }
    let path = dir.join("summary.csv");
    write_summary(summary, std::fs::File::create(&path)?)?;
    written.push(path);
    let path = dir.join("plot_traces.py");
    std::fs::write(&path, plot_script())?;
    written.push(path);
    Ok(written)
}

// Checkpoint mapping.

fn shape_values(shape: &PolicyShape) -> Vec<f64> {
    [
        shape.intents,
        shape.goal_levels,
        match shape.head_mode {
            HeadMode::PerAgent => 0,
            HeadMode::PerIntent => 1,
        },
        shape.encoder_hidden,
        shape.merger_hidden,
        shape.fusion_hidden,
        shape.actor_hidden,
        shape.critic_hidden,
    ]
    .iter()
    .map(|&v| v as f64)
    .collect()
}

fn as_count(name: &str, v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(Error::shape(format!("checkpoint block `{name}`"), "a non-negative integer", v))
    }
}

fn put_capabilities(set: &mut BlockSet, prefix: &str, caps: &[CapabilityVector]) {
    for (i, c) in caps.iter().enumerate() {
        let mut values = c.probabilities.clone();
        values.extend(c.missing.iter().map(|&m| if m { 1.0 } else { 0.0 }));
        set.insert(format!("{prefix}.{i}"), vec![2, c.len()], values);
    }
}

fn take_capabilities(set: &BlockSet, prefix: &str, agents: usize, levels: usize) -> Result<Vec<CapabilityVector>> {
    (0..agents)
        .map(|i| {
            let v = set.expect(&format!("{prefix}.{i}"), &[2, levels])?;
            Ok(CapabilityVector {
                probabilities: v[..levels].to_vec(),
                missing: v[levels..].iter().map(|&f| f != 0.0).collect(),
            })
        })
        .collect()
}

impl SeedArtifacts {
    pub fn to_blocks(&self) -> BlockSet {
        let mut set = BlockSet::new();
        let levels = self.capabilities.first().map_or(0, |c| c.len());
        set.insert("meta", vec![3], vec![self.seed as f64, self.intents() as f64, levels as f64]);
        for system in [&self.priority, &self.mbr] {
            for (i, q) in system.agents.iter().enumerate() {
                let name = format!("qtable.{}.{i}", system.kind);
                set.insert(format!("{name}.hyper"), vec![3], vec![q.learning_rate, q.discount, q.exploration]);
                set.insert(name, vec![QTable::STATES, ACTIONS], q.values.clone());
            }
        }
        put_capabilities(&mut set, "capability", &self.capabilities);
        let roles: Vec<f64> = self
            .supervisors
            .keys()
            .map(|r| Role::ALL.iter().position(|x| x == r).unwrap() as f64)
            .collect();
        set.insert("roles", vec![roles.len()], roles);
        for (role, sup) in &self.supervisors {
            let prefix = format!("supervisor.{}", role.name());
            set.insert(format!("{prefix}.shape"), vec![8], shape_values(&sup.policy.shape));
            for (name, shape, values) in sup.policy.named_tensors() {
                set.insert(format!("{prefix}.{name}"), shape, values.to_vec());
            }
            put_capabilities(&mut set, &format!("{prefix}.capability"), &sup.capabilities);
        }
        set
    }

    pub fn from_blocks(set: &BlockSet) -> Result<Self> {
        let meta = set.expect("meta", &[3])?;
        let seed = meta[0] as u64;
        let intents = as_count("meta", meta[1])?;
        let levels = as_count("meta", meta[2])?;
        let mut systems = Vec::new();
        for kind in SystemKind::ALL {
            let agents = (0..intents)
                .map(|i| {
                    let name = format!("qtable.{kind}.{i}");
                    let hyper = set.expect(&format!("{name}.hyper"), &[3])?;
                    Ok(QTable {
                        values: set.expect(&name, &[QTable::STATES, ACTIONS])?.to_vec(),
                        learning_rate: hyper[0],
                        discount: hyper[1],
                        exploration: hyper[2],
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            systems.push(MarlSystem { kind, agents });
        }
        let mbr = systems.pop().expect("two systems");
        let priority = systems.pop().expect("two systems");
        let capabilities = take_capabilities(set, "capability", 2 * intents, levels)?;
        let roles = &set.expect_any("roles")?.values;
        let mut supervisors = BTreeMap::new();
        for &r in roles {
            let role = *Role::ALL
                .get(as_count("roles", r)?)
                .ok_or_else(|| Error::shape("checkpoint block `roles`", "a known role", r))?;
            let prefix = format!("supervisor.{}", role.name());
            let sv = set.expect(&format!("{prefix}.shape"), &[8])?;
            let c = |i: usize| as_count(&format!("{prefix}.shape"), sv[i]);
            let shape = PolicyShape {
                intents: c(0)?,
                goal_levels: c(1)?,
                head_mode: if c(2)? == 0 { HeadMode::PerAgent } else { HeadMode::PerIntent },
                encoder_hidden: c(3)?,
                merger_hidden: c(4)?,
                fusion_hidden: c(5)?,
                actor_hidden: c(6)?,
                critic_hidden: c(7)?,
            };
            let mut policy = SupervisorPolicy::zeros(shape);
            let layout: Vec<(String, Vec<usize>)> =
                policy.named_tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
            for ((name, shape), tensor) in layout.iter().zip(policy.tensors_mut()) {
                tensor.copy_from_slice(set.expect(&format!("{prefix}.{name}"), shape)?);
            }
            let caps = take_capabilities(set, &format!("{prefix}.capability"), 2 * intents, levels)?;
            supervisors.insert(
                role,
                TrainedSupervisor {
                    policy,
                    capabilities: caps,
                },
            );
        }
        Ok(SeedArtifacts {
            seed,
            priority,
            mbr,
            capabilities,
            supervisors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_blocks().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_blocks(&BlockSet::load(path)?)
    }
}

/// Conventional checkpoint file for `seed` inside `dir`.
pub fn checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed{seed}.ckpt"))
}
