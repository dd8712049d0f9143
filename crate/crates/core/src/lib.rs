//! Cooperative multi-agent Q-learning with rule-guided intrinsic rewards.
//!
//! Soft logic rules over named observation features encode action
//! preferences; the negative Euclidean distance between each agent's action
//! distribution and the matched preference becomes a per-agent intrinsic
//! reward, and the shaped signal trains value-decomposition learners
//! (additive or monotonic mixing) on sparse-reward gridworld tasks.

pub mod agent;
pub mod config;
pub mod env;
pub mod error;
pub mod intrinsic;
pub mod knowledge;
pub mod metrics;
pub mod mixer;
pub mod replay;
pub mod tensor;
pub mod trainer;

pub use config::{AblationConfig, EnvConfig, TrainConfig};
pub use error::{Error, Result};
