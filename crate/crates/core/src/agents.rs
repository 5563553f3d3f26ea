//! The two lower-level MARL systems.
//!
//! The Priority system has one agent per intent nudging that service's packet
//! priority; the MBR system has one agent per intent nudging that service's
//! MBR. Agents are goal-conditioned tabular Q-learners that only observe their
//! own KPI, their own knob, their goal and slice congestion. Neither system can
//! see the other's knobs.

use std::fmt;
use std::io::{Read, Write};

use rand::Rng;

use crate::config::ScenarioConfig;
use crate::emulator::{init_scenario, ControlVector, KpiKind, KpiReport, NetworkState, MBR_LADDER, PRIORITY_LEVELS};
use crate::error::{Error, Result};
use crate::nn::argmax;

pub const OBS_FIELDS: usize = 4;
pub const OBS_BINS: usize = 8;
pub const ACTIONS: usize = 3;
pub const DEFAULT_GOAL_LEVELS: usize = 8;
pub const DEFAULT_HORIZON: usize = 5;
pub const CAPABILITY_EMA: f64 = 0.05;

const CONGESTION_SCALE: f64 = 1.5;
const OBS_CLIP: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SystemKind {
    Priority,
    Mbr,
}

impl SystemKind {
    pub const ALL: [SystemKind; 2] = [SystemKind::Priority, SystemKind::Mbr];

    pub fn index(self) -> usize {
        match self {
            SystemKind::Priority => 0,
            SystemKind::Mbr => 1,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "priority" => Some(SystemKind::Priority),
            "mbr" => Some(SystemKind::Mbr),
            _ => None,
        }
    }

    fn knob_levels(self) -> usize {
        match self {
            SystemKind::Priority => PRIORITY_LEVELS as usize,
            SystemKind::Mbr => MBR_LADDER.len(),
        }
    }

    /// Zero-based level of this system's knob for `service`.
    pub fn knob_level(self, controls: &ControlVector, service: usize) -> usize {
        match self {
            SystemKind::Priority => usize::from(controls.priority[service] - 1),
            SystemKind::Mbr => controls.mbr_level[service],
        }
    }

    fn set_knob_level(self, controls: &mut ControlVector, service: usize, level: usize) {
        match self {
            SystemKind::Priority => controls.priority[service] = level as u8 + 1,
            SystemKind::Mbr => controls.mbr_level[service] = level,
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SystemKind::Priority => "priority",
            SystemKind::Mbr => "mbr",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AgentId {
    pub system: SystemKind,
    pub intent_index: usize,
}

impl AgentId {
    /// All agents for `intents` intents: the Priority system first, then MBR.
    pub fn roster(intents: usize) -> Vec<AgentId> {
        SystemKind::ALL
            .iter()
            .flat_map(|&system| (0..intents).map(move |intent_index| AgentId { system, intent_index }))
            .collect()
    }

    /// Position of this agent in [`AgentId::roster`].
    pub fn slot(self, intents: usize) -> usize {
        self.system.index() * intents + self.intent_index
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.system, self.intent_index)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KnobAction {
    Decrement,
    Hold,
    Increment,
}

impl KnobAction {
    pub const ALL: [KnobAction; ACTIONS] = [KnobAction::Decrement, KnobAction::Hold, KnobAction::Increment];

    pub fn index(self) -> usize {
        match self {
            KnobAction::Decrement => 0,
            KnobAction::Hold => 1,
            KnobAction::Increment => 2,
        }
    }

    pub fn one_hot(self) -> [f64; ACTIONS] {
        let mut v = [0.0; ACTIONS];
        v[self.index()] = 1.0;
        v
    }

    /// Applies the step along a ladder of `levels` entries, saturating at both ends.
    pub fn apply_to_level(self, level: usize, levels: usize) -> usize {
        match self {
            KnobAction::Decrement => level.saturating_sub(1),
            KnobAction::Hold => level,
            KnobAction::Increment => (level + 1).min(levels - 1),
        }
    }
}

/// Discrete goal levels of one KPI kind, spread uniformly over its range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoalLadder {
    pub kind: KpiKind,
    pub levels: usize,
}

impl GoalLadder {
    pub fn new(kind: KpiKind, levels: usize) -> Self {
        assert!(levels >= 2, "a goal ladder needs at least two levels");
        GoalLadder { kind, levels }
    }

    pub fn value(&self, level: usize) -> f64 {
        let (lo, hi) = self.kind.range();
        lo + (hi - lo) * level as f64 / (self.levels - 1) as f64
    }

    pub fn bin_width(&self) -> f64 {
        let (lo, hi) = self.kind.range();
        (hi - lo) / (self.levels - 1) as f64
    }

    /// Whether `kpi` counts as achieving `goal`: within one level for QoE,
    /// at or below the goal for packet loss.
    pub fn achieved(&self, kpi: f64, goal: f64) -> bool {
        match self.kind {
            KpiKind::Qoe => (kpi - goal).abs() <= self.bin_width() + 1e-12,
            KpiKind::PacketLoss => kpi <= goal + 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentObservation {
    pub kpi: f64,
    pub knob: f64,
    pub goal: f64,
    pub congestion: f64,
}

impl AgentObservation {
    pub fn as_array(&self) -> [f64; OBS_FIELDS] {
        [self.kpi, self.knob, self.goal, self.congestion]
    }

    /// Index into a [`QTable`] row.
    pub fn discretize(&self) -> usize {
        let bin = |x: f64| ((x * OBS_BINS as f64).floor().max(0.0) as usize).min(OBS_BINS - 1);
        let fields = [
            bin(self.kpi),
            bin(self.knob),
            bin(self.goal),
            bin(self.congestion / CONGESTION_SCALE),
        ];
        fields.iter().fold(0, |acc, &b| acc * OBS_BINS + b)
    }
}

/// Builds the normalised observation of `agent` after `report`.
pub fn observe(state: &NetworkState, report: &KpiReport, agent: AgentId, goal: f64) -> Result<AgentObservation> {
    let service = state
        .services
        .get(agent.intent_index)
        .ok_or_else(|| Error::UnknownAgent(agent.to_string()))?;
    let kind = service.kpi_kind();
    let clip = |x: f64| x.clamp(0.0, OBS_CLIP);
    let levels = agent.system.knob_levels();
    Ok(AgentObservation {
        kpi: clip(kind.normalize(report.kpi[agent.intent_index])),
        knob: agent.system.knob_level(&state.controls, agent.intent_index) as f64 / (levels - 1) as f64,
        goal: clip(kind.normalize(goal)),
        congestion: clip(report.congestion(state.airlink_bandwidth)),
    })
}

/// Goal-conditioned incentive of a lower-level agent.
pub fn agent_reward(kpi: f64, goal: f64, kind: KpiKind) -> f64 {
    match kind {
        KpiKind::Qoe => -(kind.normalize(kpi) - kind.normalize(goal)).abs(),
        KpiKind::PacketLoss if kpi <= goal => 0.0,
        KpiKind::PacketLoss => -(kind.normalize(kpi) - kind.normalize(goal)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    pub values: Vec<f64>,
    pub learning_rate: f64,
    pub discount: f64,
    pub exploration: f64,
}

impl QTable {
    pub const STATES: usize = OBS_BINS * OBS_BINS * OBS_BINS * OBS_BINS;

    pub fn new(learning_rate: f64, discount: f64, exploration: f64) -> Self {
        QTable {
            values: vec![0.0; Self::STATES * ACTIONS],
            learning_rate,
            discount,
            exploration,
        }
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * ACTIONS..(state + 1) * ACTIONS]
    }

    /// Greedy action, breaking ties toward `Hold`.
    pub fn greedy(&self, state: usize) -> KnobAction {
        let row = self.row(state);
        let best = row[argmax(row)];
        if row[KnobAction::Hold.index()] >= best {
            KnobAction::Hold
        } else {
            KnobAction::ALL[argmax(row)]
        }
    }

    pub fn update(&mut self, state: usize, action: KnobAction, reward: f64, next_state: usize) {
        let next_best = self.row(next_state).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let idx = state * ACTIONS + action.index();
        let target = reward + self.discount * next_best;
        self.values[idx] += self.learning_rate * (target - self.values[idx]);
    }
}

/// ε-greedy when exploring, greedy otherwise.
pub fn select_action<R: Rng + ?Sized>(table: &QTable, obs: &AgentObservation, explore: bool, rng: &mut R) -> KnobAction {
    if explore && rng.gen::<f64>() < table.exploration {
        KnobAction::ALL[rng.gen_range(0..ACTIONS)]
    } else {
        table.greedy(obs.discretize())
    }
}

/// Applies `action` to `agent`'s own knob and nothing else.
pub fn apply_action(controls: &mut ControlVector, agent: AgentId, action: KnobAction) {
    let levels = agent.system.knob_levels();
    let level = agent.system.knob_level(controls, agent.intent_index);
    agent
        .system
        .set_knob_level(controls, agent.intent_index, action.apply_to_level(level, levels));
}

/// A trained (or training) MARL system: one Q-table per intent.
#[derive(Clone, Debug, PartialEq)]
pub struct MarlSystem {
    pub kind: SystemKind,
    pub agents: Vec<QTable>,
}

impl MarlSystem {
    pub fn agent_ids(&self) -> impl Iterator<Item = AgentId> + '_ {
        (0..self.agents.len()).map(move |intent_index| AgentId {
            system: self.kind,
            intent_index,
        })
    }

    /// Every agent of the system picks its action from the same report.
    pub fn act<R: Rng + ?Sized>(
        &self,
        state: &NetworkState,
        report: &KpiReport,
        goals: &[f64],
        explore: bool,
        rng: &mut R,
    ) -> Result<Vec<(AgentObservation, KnobAction)>> {
        if goals.len() != self.agents.len() {
            return Err(Error::shape(format!("{} system goals", self.kind), self.agents.len(), goals.len()));
        }
        self.agent_ids()
            .zip(&self.agents)
            .zip(goals)
            .map(|((id, table), &goal)| {
                let obs = observe(state, report, id, goal)?;
                Ok((obs, select_action(table, &obs, explore, rng)))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub episodes: usize,
    pub episode_len: usize,
    pub horizon: usize,
    pub goal_levels: usize,
    pub learning_rate: f64,
    pub discount: f64,
    pub exploration_start: f64,
    pub exploration_end: f64,
    /// Mean per-step reward over the final tenth of training must reach this.
    pub min_mean_reward: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            episodes: 6000,
            episode_len: 20,
            horizon: DEFAULT_HORIZON,
            goal_levels: DEFAULT_GOAL_LEVELS,
            learning_rate: 0.1,
            discount: 0.9,
            exploration_start: 1.0,
            exploration_end: 0.05,
            min_mean_reward: -0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PretrainLogRow {
    pub agent: AgentId,
    /// Zero-based; written one-based to CSV.
    pub goal_level: usize,
    pub achieved: bool,
    pub episode: usize,
    pub steps_taken: usize,
}

/// Random knob settings for `system`, leaving the other system at defaults.
pub fn randomize_knobs<R: Rng + ?Sized>(controls: &mut ControlVector, system: SystemKind, rng: &mut R) {
    for service in 0..controls.len() {
        let level = rng.gen_range(0..system.knob_levels());
        system.set_knob_level(controls, service, level);
    }
}

/// Trains one system by independent Q-learning against random goals.
///
/// The other system's knobs stay at their defaults throughout.
pub fn pretrain_system<R: Rng + ?Sized>(
    system: SystemKind,
    scenario: &ScenarioConfig,
    config: &PretrainConfig,
    rng: &mut R,
) -> Result<(MarlSystem, Vec<PretrainLogRow>)> {
    let base = init_scenario(scenario)?;
    let intents = base.service_count();
    let ladders: Vec<GoalLadder> = base
        .services
        .iter()
        .map(|s| GoalLadder::new(s.kpi_kind(), config.goal_levels))
        .collect();
    let mut trained = MarlSystem {
        kind: system,
        agents: vec![QTable::new(config.learning_rate, config.discount, config.exploration_start); intents],
    };
    let mut logs = Vec::with_capacity(config.episodes * intents);
    let tail_start = config.episodes - config.episodes / 10;
    let (mut tail_reward, mut tail_steps) = (0.0, 0usize);

    for episode in 0..config.episodes {
        let frac = if config.episodes > 1 {
            episode as f64 / (config.episodes - 1) as f64
        } else {
            1.0
        };
        let exploration = config.exploration_start + (config.exploration_end - config.exploration_start) * frac;
        for table in &mut trained.agents {
            table.exploration = exploration;
        }

        let mut state = base.clone();
        randomize_knobs(&mut state.controls, system, rng);
        let levels: Vec<usize> = (0..intents).map(|_| rng.gen_range(0..config.goal_levels)).collect();
        let goals: Vec<f64> = levels.iter().zip(&ladders).map(|(&l, ladder)| ladder.value(l)).collect();
        let mut report = state.step(rng);
        let mut reached: Vec<Option<usize>> = vec![None; intents];

        for t in 0..config.episode_len {
            let decisions = trained.act(&state, &report, &goals, true, rng)?;
            for (id, (_, action)) in trained.agent_ids().zip(&decisions) {
                apply_action(&mut state.controls, id, *action);
            }
            report = state.step(rng);
            for (i, (obs, action)) in decisions.iter().enumerate() {
                let id = AgentId {
                    system,
                    intent_index: i,
                };
                let kind = ladders[i].kind;
                let reward = agent_reward(report.kpi[i], goals[i], kind);
                let next = observe(&state, &report, id, goals[i])?;
                trained.agents[i].update(obs.discretize(), *action, reward, next.discretize());
                if reached[i].is_none() && ladders[i].achieved(report.kpi[i], goals[i]) {
                    reached[i] = Some(t + 1);
                }
                if episode >= tail_start {
                    tail_reward += reward;
                    tail_steps += 1;
                }
            }
        }
        for i in 0..intents {
            let steps_taken = reached[i].unwrap_or(config.episode_len);
            logs.push(PretrainLogRow {
                agent: AgentId {
                    system,
                    intent_index: i,
                },
                goal_level: levels[i],
                achieved: reached[i].is_some_and(|s| s <= config.horizon),
                episode,
                steps_taken,
            });
        }
    }

    let mean = tail_reward / tail_steps.max(1) as f64;
    if !mean.is_finite() || mean < config.min_mean_reward {
        return Err(Error::NotConverged(format!(
            "{system} system: mean reward {mean:.4} over the final episodes is below {}",
            config.min_mean_reward
        )));
    }
    for table in &mut trained.agents {
        table.exploration = config.exploration_end;
    }
    Ok((trained, logs))
}

/// Per-agent probabilities of reaching each goal level within the horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct CapabilityVector {
    pub probabilities: Vec<f64>,
    /// Levels that had no pre-training data and fell back to the 0.5 prior.
    pub missing: Vec<bool>,
}

impl CapabilityVector {
    pub fn uniform_prior(levels: usize) -> Self {
        CapabilityVector {
            probabilities: vec![0.5; levels],
            missing: vec![true; levels],
        }
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Online exponential moving average toward the observed outcome.
    pub fn observe(&mut self, level: usize, achieved: bool) {
        let target = if achieved { 1.0 } else { 0.0 };
        let p = &mut self.probabilities[level];
        *p = (1.0 - CAPABILITY_EMA) * *p + CAPABILITY_EMA * target;
    }
}

/// Success counting per (agent, level) over pre-training logs.
///
/// An attempt counts as a success when it was achieved within `horizon` steps.
pub fn estimate_capabilities(
    logs: &[PretrainLogRow],
    agents: &[AgentId],
    levels: usize,
    horizon: usize,
) -> Vec<CapabilityVector> {
    agents
        .iter()
        .map(|&agent| {
            let mut attempts = vec![0usize; levels];
            let mut successes = vec![0usize; levels];
            for row in logs.iter().filter(|r| r.agent == agent && r.goal_level < levels) {
                attempts[row.goal_level] += 1;
                successes[row.goal_level] += usize::from(row.achieved && row.steps_taken <= horizon);
            }
            let mut cap = CapabilityVector::uniform_prior(levels);
            for p in 0..levels {
                if attempts[p] > 0 {
                    cap.probabilities[p] = successes[p] as f64 / attempts[p] as f64;
                    cap.missing[p] = false;
                }
            }
            cap
        })
        .collect()
}

pub const LOG_HEADER: [&str; 6] = ["agent_system", "intent_index", "goal_level", "achieved", "episode", "steps_taken"];

pub fn write_pretrain_log<W: Write>(rows: &[PretrainLogRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LOG_HEADER)?;
    for r in rows {
        w.write_record([
            r.agent.system.to_string(),
            r.agent.intent_index.to_string(),
            (r.goal_level + 1).to_string(),
            u8::from(r.achieved).to_string(),
            r.episode.to_string(),
            r.steps_taken.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pretrain_log<R: Read>(input: R) -> Result<Vec<PretrainLogRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(LOG_HEADER.iter().copied()) {
        return Err(Error::Config {
            line: 1,
            msg: format!("unexpected pretraining log header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |field: &str| Error::Config {
            line,
            msg: format!("bad `{field}` in pretraining log"),
        };
        let num = |idx: usize, field: &str| rec[idx].parse::<usize>().map_err(|_| bad(field));
        let system = SystemKind::parse(&rec[0]).ok_or_else(|| bad("agent_system"))?;
        let level = num(2, "goal_level")?;
        if level == 0 {
            return Err(bad("goal_level"));
        }
        rows.push(PretrainLogRow {
            agent: AgentId {
                system,
                intent_index: num(1, "intent_index")?,
            },
            goal_level: level - 1,
            achieved: num(3, "achieved")? != 0,
            episode: num(4, "episode")?,
            steps_taken: num(5, "steps_taken")?,
        });
    }
    Ok(rows)
}
