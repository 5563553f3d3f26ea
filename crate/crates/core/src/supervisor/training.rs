//! Episodic advantage actor-critic training of the supervisor.

use rand::Rng;

use super::policy::{choose, ActorState, AgentTuple, EpisodeRecord, HeadMode, LossWeights, SupervisorInput, SupervisorPolicy};
use super::{GlobalIntent, Team, TeamEnv};
use crate::agents::{randomize_knobs, CapabilityVector, GoalLadder, SystemKind};
use crate::baselines::{goal_halving, HALVING_SCALE};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, OptimizerState};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub episodes: usize,
    pub episode_len: usize,
    pub discount: f64,
    pub loss: LossWeights,
    pub adam: AdamConfig,
    pub max_grad_norm: f64,
    /// Probability that an episode starts from random knobs instead of the scenario's.
    pub random_start: f64,
    /// Episodes without a new best moving-average reward before a stall is reported.
    pub patience: usize,
    pub update_capabilities: bool,
    /// Standardise returns with running moments before they reach the critic.
    pub normalize_returns: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 1000,
            episode_len: 40,
            discount: 0.95,
            loss: LossWeights::default(),
            adam: AdamConfig::default(),
            max_grad_norm: 5.0,
            random_start: 0.5,
            patience: 200,
            update_capabilities: true,
            normalize_returns: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingReport {
    pub episode_rewards: Vec<f64>,
    /// First episode with at least five consecutive all-intents-met steps.
    pub solved_episode: Option<usize>,
    pub warnings: Vec<String>,
}

pub fn build_input(capabilities: &[CapabilityVector], tuples: Vec<AgentTuple>, intents: &GlobalIntent) -> SupervisorInput {
    SupervisorInput {
        capabilities: capabilities.iter().map(|c| c.probabilities.clone()).collect(),
        tuples,
        targets: intents.normalized(),
    }
}

/// KPI-space goals for every agent from the chosen head levels.
pub fn goals_from_levels(mode: HeadMode, ladders: &[GoalLadder], levels: &[usize]) -> Result<Vec<f64>> {
    let k = ladders.len();
    match mode {
        HeadMode::PerAgent => {
            if levels.len() != 2 * k {
                return Err(Error::shape("goal levels", 2 * k, levels.len()));
            }
            Ok(levels.iter().enumerate().map(|(slot, &l)| ladders[slot % k].value(l)).collect())
        }
        HeadMode::PerIntent => {
            if levels.len() != k {
                return Err(Error::shape("goal levels", k, levels.len()));
            }
            let mut goals = vec![0.0; 2 * k];
            for (i, (ladder, &l)) in ladders.iter().zip(levels).enumerate() {
                let (a, b) = goal_halving(HALVING_SCALE * ladder.value(l));
                goals[i] = a;
                goals[k + i] = b;
            }
            Ok(goals)
        }
    }
}

/// Level assigned to each agent slot.
fn agent_levels(mode: HeadMode, levels: &[usize], intents: usize) -> Vec<usize> {
    match mode {
        HeadMode::PerAgent => levels.to_vec(),
        HeadMode::PerIntent => (0..2 * intents).map(|slot| levels[slot % intents]).collect(),
    }
}

/// One supervisor decision: the input it saw, the levels and goals it chose
/// and the critic's value estimate.
#[derive(Clone, Debug)]
pub struct Decision {
    pub input: SupervisorInput,
    pub levels: Vec<usize>,
    pub goals: Vec<f64>,
    pub value: f64,
}

pub fn decide<R: Rng + ?Sized>(
    policy: &SupervisorPolicy,
    capabilities: &[CapabilityVector],
    env: &TeamEnv<'_>,
    state: &mut ActorState,
    rng: &mut R,
    explore: bool,
) -> Result<Decision> {
    let input = build_input(capabilities, env.tuples()?, &env.intents);
    let (out, _) = policy.forward_step(&input, state)?;
    let (levels, _) = choose(&out.logits, rng, explore)?;
    let goals = goals_from_levels(policy.shape.head_mode, &env.ladders, &levels)?;
    *state = out.state;
    Ok(Decision {
        input,
        levels,
        goals,
        value: out.value,
    })
}

/// Records the per-step outcome of each agent's assigned level.
pub fn update_capabilities(
    capabilities: &mut [CapabilityVector],
    mode: HeadMode,
    levels: &[usize],
    env: &TeamEnv<'_>,
) {
    let k = env.intents.len();
    for (slot, level) in agent_levels(mode, levels, k).into_iter().enumerate() {
        let intent = slot % k;
        let achieved = env.ladders[intent].achieved(env.report.kpi[intent], env.goals[slot]);
        capabilities[slot].observe(level, achieved);
    }
}

#[derive(Clone, Debug)]
pub struct Rollout {
    pub record: EpisodeRecord,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
}

/// Runs one closed-loop episode under the supervisor.
pub fn rollout<R: Rng + ?Sized>(
    policy: &SupervisorPolicy,
    capabilities: &mut [CapabilityVector],
    env: &mut TeamEnv<'_>,
    len: usize,
    explore: bool,
    update_caps: bool,
    rng: &mut R,
) -> Result<Rollout> {
    let mut state = policy.initial_state();
    let mut inputs = Vec::with_capacity(len);
    let mut actions = Vec::with_capacity(len);
    let mut rewards = Vec::with_capacity(len);
    let mut values = Vec::with_capacity(len);
    for _ in 0..len {
        let d = decide(policy, capabilities, env, &mut state, rng, explore)?;
        let outcome = env.step(d.goals, [true, true], rng)?;
        if update_caps {
            update_capabilities(capabilities, policy.shape.head_mode, &d.levels, env);
        }
        inputs.push(d.input);
        actions.push(d.levels);
        rewards.push(outcome.reward);
        values.push(d.value);
    }
    Ok(Rollout {
        record: EpisodeRecord {
            inputs,
            actions,
            returns: Vec::new(),
            advantages: Vec::new(),
        },
        rewards,
        values,
    })
}

pub fn discounted_returns(rewards: &[f64], discount: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + discount * acc;
        out[t] = acc;
    }
    out
}

/// Exponentially weighted mean and variance of episode returns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReturnScaler {
    pub mean: f64,
    pub var: f64,
    seen: bool,
}

impl ReturnScaler {
    pub const RATE: f64 = 0.05;
    /// Lower bound on the scale, in reward units.
    pub const MIN_STD: f64 = 1.0;

    pub fn new() -> Self {
        ReturnScaler {
            mean: 0.0,
            var: 1.0,
            seen: false,
        }
    }

    pub fn update(&mut self, returns: &[f64]) {
        if returns.is_empty() {
            return;
        }
        let n = returns.len() as f64;
        let m = returns.iter().sum::<f64>() / n;
        let v = returns.iter().map(|g| (g - m).powi(2)).sum::<f64>() / n;
        if self.seen {
            // Pooled moments of the old estimate and the new batch.
            let mean = (1.0 - Self::RATE) * self.mean + Self::RATE * m;
            self.var = (1.0 - Self::RATE) * (self.var + (self.mean - mean).powi(2)) + Self::RATE * (v + (m - mean).powi(2));
            self.mean = mean;
        } else {
            self.mean = m;
            self.var = v;
            self.seen = true;
        }
    }

    pub fn std(&self) -> f64 {
        self.var.sqrt().max(Self::MIN_STD)
    }

    pub fn apply(&self, g: f64) -> f64 {
        (g - self.mean) / self.std()
    }
}

impl Default for ReturnScaler {
    fn default() -> Self {
        Self::new()
    }
}

fn longest_met_streak(rewards: &[f64]) -> usize {
    let (mut best, mut run) = (0, 0);
    for &r in rewards {
        run = if r > 0.0 { run + 1 } else { 0 };
        best = best.max(run);
    }
    best
}

/// Trains `policy` against the frozen `team`; capability vectors follow the
/// observed outcomes when enabled.
pub fn train_supervisor<R: Rng + ?Sized>(
    policy: &mut SupervisorPolicy,
    capabilities: &mut [CapabilityVector],
    team: Team<'_>,
    scenario: &ScenarioConfig,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<TrainingReport> {
    let agents = policy.shape.agents();
    if capabilities.len() != agents {
        return Err(Error::shape("capability vectors", agents, capabilities.len()));
    }
    if team.intents() != policy.shape.intents {
        return Err(Error::shape("team intents", policy.shape.intents, team.intents()));
    }
    let shapes: Vec<usize> = policy.tensors().iter().map(|t| t.len()).collect();
    let mut optimizer = OptimizerState::new(config.adam.clone(), &shapes);
    let mut report = TrainingReport::default();
    let window = 50.min(config.episodes.max(1));
    let (mut best_avg, mut best_at) = (f64::NEG_INFINITY, 0usize);
    let mut scaler = ReturnScaler::new();

    for episode in 0..config.episodes {
        let mut controls = scenario.initial_controls();
        if rng.gen::<f64>() < config.random_start {
            for kind in SystemKind::ALL {
                randomize_knobs(&mut controls, kind, rng);
            }
        }
        let mut env = TeamEnv::new(team, scenario, controls, policy.shape.goal_levels, rng)?;
        let mut run = rollout(
            policy,
            capabilities,
            &mut env,
            config.episode_len,
            true,
            config.update_capabilities,
            rng,
        )?;
        let mut returns = discounted_returns(&run.rewards, config.discount);
        if config.normalize_returns {
            scaler.update(&returns);
            returns.iter_mut().for_each(|g| *g = scaler.apply(*g));
        }
        run.record.advantages = returns.iter().zip(&run.values).map(|(g, v)| g - v).collect();
        run.record.returns = returns;

        let (_, grads) = policy.episode_gradient(&run.record, config.loss)?;
        let mut grad_tensors: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
        let norm = grad_tensors.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::Numeric(format!("episode {episode}: gradient norm {norm}")));
        }
        if norm > config.max_grad_norm {
            let s = config.max_grad_norm / norm;
            grad_tensors.iter_mut().flatten().for_each(|g| *g *= s);
        }
        let grad_refs: Vec<&[f64]> = grad_tensors.iter().map(|g| g.as_slice()).collect();
        optimizer.adam_step(&mut policy.tensors_mut(), &grad_refs)?;

        let total: f64 = run.rewards.iter().sum();
        report.episode_rewards.push(total);
        if report.solved_episode.is_none() && longest_met_streak(&run.rewards) >= 5 {
            report.solved_episode = Some(episode);
        }
        let recent = &report.episode_rewards[report.episode_rewards.len().saturating_sub(window)..];
        let avg = recent.iter().sum::<f64>() / recent.len() as f64;
        if !avg.is_finite() {
            return Err(Error::Numeric(format!("episode {episode}: moving-average reward {avg}")));
        }
        if avg > best_avg {
            best_avg = avg;
            best_at = episode;
        }
    }
    let episodes = config.episodes;
    if episodes > best_at + config.patience {
        report.warnings.push(format!(
            "moving-average reward peaked at {best_avg:.3} in episode {best_at} and did not improve for {} episodes",
            episodes - 1 - best_at
        ));
    }
    if report.solved_episode.is_none() {
        report.warnings.push("no episode held every intent for five consecutive steps".into());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emulator::KpiKind;

    #[test]
    fn returns_are_discounted_backwards() {
        let g = discounted_returns(&[1.0, 0.0, 2.0], 0.5);
        assert_eq!(g, vec![1.5, 1.0, 2.0]);
    }

    #[test]
    fn goal_mapping() {
        let ladders = vec![GoalLadder::new(KpiKind::Qoe, 8), GoalLadder::new(KpiKind::PacketLoss, 8)];
        let g = goals_from_levels(HeadMode::PerAgent, &ladders, &[7, 0, 0, 7]).unwrap();
        assert_eq!(g, vec![5.0, 0.0, 1.0, 20.0]);
        let g = goals_from_levels(HeadMode::PerIntent, &ladders, &[7, 7]).unwrap();
        assert_eq!(g, vec![5.0, 20.0, 5.0, 20.0]);
        assert!(goals_from_levels(HeadMode::PerIntent, &ladders, &[1, 2, 3]).is_err());
    }

    #[test]
    fn scaler_tracks_moments() {
        let mut s = ReturnScaler::new();
        s.update(&[2.0, 4.0]);
        assert_eq!((s.mean, s.var), (3.0, 1.0));
        assert_eq!(s.apply(5.0), 2.0);
        for _ in 0..2000 {
            s.update(&[-100.0, -300.0]);
        }
        assert!((s.mean + 200.0).abs() < 1e-6);
        assert!((s.std() - 100.0).abs() < 1e-3);
        let mut flat = ReturnScaler::new();
        flat.update(&[7.0, 7.0]);
        assert_eq!(flat.std(), ReturnScaler::MIN_STD);
    }

    #[test]
    fn streaks() {
        assert_eq!(longest_met_streak(&[1.0, 1.0, -0.1, 1.0, 1.0, 1.0]), 3);
        assert_eq!(longest_met_streak(&[]), 0);
    }
}
