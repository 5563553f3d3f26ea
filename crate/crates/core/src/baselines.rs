//! Comparison controllers: rule-based switching, naive parallel goals and goal halving.

use crate::agents::SystemKind;
use crate::error::{Error, Result};

pub const DEFAULT_SWITCH_PERIOD: u64 = 5;

/// Service-level goals for goal halving are emitted on a doubled scale so
/// that each half lands on the agents' own goal ladder.
pub const HALVING_SCALE: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    RuleBased { switch_period: u64 },
    NaiveParallel,
    GoalHalving,
}

impl BaselineKind {
    pub fn rule_based(switch_period: u64) -> Result<Self> {
        if switch_period == 0 {
            return Err(Error::Plan("switch period must be at least 1".into()));
        }
        Ok(BaselineKind::RuleBased { switch_period })
    }
}

/// The system allowed to act at step `t`: Priority on even windows, MBR on odd ones.
pub fn rule_based_select(t: u64, period: u64) -> SystemKind {
    if (t / period.max(1)) % 2 == 0 {
        SystemKind::Priority
    } else {
        SystemKind::Mbr
    }
}

/// Activity flags indexed by [`SystemKind::index`].
pub fn active_flags(system: SystemKind) -> [bool; 2] {
    let mut flags = [false; 2];
    flags[system.index()] = true;
    flags
}

/// Every agent of both systems gets its intent's global target.
pub fn naive_parallel_goals(targets: &[f64]) -> Vec<f64> {
    targets.iter().chain(targets).copied().collect()
}

/// Splits one intermediate goal equally between the two systems.
pub fn goal_halving(intermediate: f64) -> (f64, f64) {
    let half = intermediate / 2.0;
    (half, half)
}
