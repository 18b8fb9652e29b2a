//! Proactive-agent training and evaluation stack.
//!
//! Three rule-based gyms share a partitioned action space: `Answer` reaches the
//! user, `Query` and `Search` reach the environment. On top of them sit
//! scripted agents, a softmax-linear trainable policy, turn-level reward
//! shaping, group-relative policy optimization and an evaluation toolkit.

pub mod agents;
pub mod config;
pub mod env;
pub mod error;
pub mod grpo;
pub mod mdp;
pub mod metrics;
pub mod protocol;
pub mod rng;
pub mod runner;
pub mod server;
pub mod shaping;

pub use error::{Error, Result};
pub use mdp::{ActionKind, ActionRecord, EpisodeConfig, Termination, Trajectory, Turn};
