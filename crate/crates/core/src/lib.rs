//! Supervisor that coordinates pre-trained, mutually invisible goal-conditioned
//! multi-agent systems on a simulated network slice.
//!
//! The crate is organised bottom-up:
//!
//! * [`emulator`]: fluid-flow slice model with priority and MBR knobs.
//! * [`nn`]: dense layers, GRU cell, softmax and Adam with manual gradients.
//! * [`agents`]: the Priority and MBR tabular Q-learning systems and their
//!   capability estimates.
//! * [`supervisor`]: the goal-assigning recurrent actor-critic.
//! * [`baselines`]: rule-based switching, naive parallel and goal halving.
//! * [`metrics`]: IAE, convergence time and oscillation amplitude.
//! * [`harness`]: end-to-end pipeline, checkpoints, traces and reports.

pub mod agents;
pub mod baselines;
pub mod config;
pub mod emulator;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod supervisor;

pub use error::{Error, Result};
