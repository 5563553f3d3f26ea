//! The goal-assigning supervisor.
//!
//! The supervisor never touches knobs or Q-tables. Each step it reads the
//! agents' observations, last actions and goals plus their capability
//! vectors, and emits one goal per agent. Both MARL systems then act in the
//! same timestep.

mod policy;
mod training;

pub use policy::{
    choose, ActorState, AgentTuple, EpisodeRecord, HeadMode, LossWeights, PolicyShape, StepCache, StepOutput,
    SupervisorInput, SupervisorPolicy,
};
pub use training::{
    build_input, decide, discounted_returns, goals_from_levels, rollout, train_supervisor, update_capabilities, Decision,
    ReturnScaler, Rollout, TrainConfig, TrainingReport,
};

use rand::Rng;

use crate::agents::{apply_action, observe, AgentId, GoalLadder, KnobAction, MarlSystem, SystemKind};
use crate::config::ScenarioConfig;
use crate::emulator::{init_scenario, ControlVector, KpiKind, KpiReport, NetworkState};
use crate::error::{Error, Result};

/// Per-intent targets and directions.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalIntent {
    pub targets: Vec<f64>,
    pub kinds: Vec<KpiKind>,
}

impl GlobalIntent {
    pub fn from_scenario(scenario: &ScenarioConfig) -> Self {
        GlobalIntent {
            targets: scenario.targets(),
            kinds: scenario.services.iter().map(|s| s.spec.kpi_kind()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn normalized(&self) -> Vec<f64> {
        self.targets.iter().zip(&self.kinds).map(|(t, k)| k.normalize(*t)).collect()
    }

    /// Relative shortfall of each KPI; zero when the intent is met.
    pub fn deviations(&self, kpi: &[f64]) -> Vec<f64> {
        self.targets
            .iter()
            .zip(&self.kinds)
            .zip(kpi)
            .map(|((&t, kind), &k)| {
                if kind.maximizes() {
                    ((t - k) / t).max(0.0)
                } else {
                    ((k - t) / t).max(0.0)
                }
            })
            .collect()
    }
}

pub const COMPLETION_BONUS: f64 = 1.0;

/// Negative summed shortfall, plus a bonus when every intent is met.
pub fn supervisor_reward(report: &KpiReport, intents: &GlobalIntent) -> Result<f64> {
    if report.kpi.len() != intents.len() {
        return Err(Error::shape("report KPIs", intents.len(), report.kpi.len()));
    }
    let dev = intents.deviations(&report.kpi);
    let total: f64 = dev.iter().sum();
    Ok(if total == 0.0 { COMPLETION_BONUS } else { -total })
}

/// The two frozen MARL systems. Held by shared reference only.
#[derive(Clone, Copy, Debug)]
pub struct Team<'a> {
    pub priority: &'a MarlSystem,
    pub mbr: &'a MarlSystem,
}

impl<'a> Team<'a> {
    pub fn new(priority: &'a MarlSystem, mbr: &'a MarlSystem) -> Result<Self> {
        if priority.kind != SystemKind::Priority || mbr.kind != SystemKind::Mbr {
            return Err(Error::Plan("team needs a priority system and an MBR system".into()));
        }
        if priority.agents.len() != mbr.agents.len() {
            return Err(Error::shape("MBR system agents", priority.agents.len(), mbr.agents.len()));
        }
        Ok(Team { priority, mbr })
    }

    pub fn intents(&self) -> usize {
        self.priority.agents.len()
    }

    pub fn system(&self, kind: SystemKind) -> &'a MarlSystem {
        match kind {
            SystemKind::Priority => self.priority,
            SystemKind::Mbr => self.mbr,
        }
    }
}

/// Result of one closed-loop step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub report: KpiReport,
    pub reward: f64,
    pub actions: Vec<KnobAction>,
}

/// The slice plus both frozen systems, driven by per-agent goals.
#[derive(Clone, Debug)]
pub struct TeamEnv<'a> {
    pub team: Team<'a>,
    pub state: NetworkState,
    pub report: KpiReport,
    pub intents: GlobalIntent,
    pub ladders: Vec<GoalLadder>,
    pub goals: Vec<f64>,
    pub last_actions: Vec<KnobAction>,
}

impl<'a> TeamEnv<'a> {
    /// Starts from `controls` and takes one measurement step.
    pub fn new<R: Rng + ?Sized>(
        team: Team<'a>,
        scenario: &ScenarioConfig,
        controls: ControlVector,
        goal_levels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut state = init_scenario(scenario)?;
        if controls.len() != state.service_count() || team.intents() != state.service_count() {
            return Err(Error::shape("team intents", state.service_count(), team.intents()));
        }
        controls.validate()?;
        state.controls = controls;
        let report = state.step(rng);
        let intents = GlobalIntent::from_scenario(scenario);
        let ladders = intents.kinds.iter().map(|&k| GoalLadder::new(k, goal_levels)).collect();
        let goals = AgentId::roster(intents.len())
            .iter()
            .map(|id| intents.targets[id.intent_index])
            .collect();
        Ok(TeamEnv {
            team,
            state,
            report,
            ladders,
            goals,
            last_actions: vec![KnobAction::Hold; 2 * intents.len()],
            intents,
        })
    }

    pub fn roster(&self) -> Vec<AgentId> {
        AgentId::roster(self.intents.len())
    }

    /// What the supervisor sees of each agent right now.
    pub fn tuples(&self) -> Result<Vec<AgentTuple>> {
        self.roster()
            .iter()
            .enumerate()
            .map(|(slot, &id)| {
                let goal = self.goals[slot];
                let obs = observe(&self.state, &self.report, id, goal)?;
                Ok(AgentTuple {
                    observation: obs.as_array(),
                    action: self.last_actions[slot],
                    goal: obs.goal,
                })
            })
            .collect()
    }

    /// Hands out `goals`; every agent of an `active` system acts on the same
    /// report, then the slice advances one step.
    pub fn step<R: Rng + ?Sized>(&mut self, goals: Vec<f64>, active: [bool; 2], rng: &mut R) -> Result<StepOutcome> {
        let k = self.intents.len();
        if goals.len() != 2 * k {
            return Err(Error::shape("goal assignment", 2 * k, goals.len()));
        }
        let mut actions = vec![KnobAction::Hold; 2 * k];
        for kind in SystemKind::ALL {
            if !active[kind.index()] {
                continue;
            }
            let slice = &goals[kind.index() * k..(kind.index() + 1) * k];
            let decided = self.team.system(kind).act(&self.state, &self.report, slice, false, rng)?;
            for (i, (_, a)) in decided.into_iter().enumerate() {
                actions[kind.index() * k + i] = a;
            }
        }
        for (id, &a) in self.roster().iter().zip(&actions) {
            apply_action(&mut self.state.controls, *id, a);
        }
        let report = self.state.step(rng);
        self.state.check_conservation(&report)?;
        let reward = supervisor_reward(&report, &self.intents)?;
        self.report = report.clone();
        self.goals = goals;
        self.last_actions = actions.clone();
        Ok(StepOutcome {
            report,
            reward,
            actions,
        })
    }
}
