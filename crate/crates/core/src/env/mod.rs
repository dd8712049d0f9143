//! Gridworld environments with partial observability and sparse team
//! rewards, plus the shared trajectory-dump format they emit.

pub mod lbf;
pub mod skirmish;
pub mod trace;

use crate::config::EnvConfig;
use crate::error::{Error, Result};

pub use lbf::LbfEnv;
pub use skirmish::SkirmishEnv;

/// Things that happened during one step, for logging and for the
/// reward-accounting oracles in tests.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    FoodCollected { food_level: u32, loader_levels: Vec<u32> },
    EnemyDeath,
    AllyDeath,
    Win,
    WastedAttack { agent: usize },
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub reward: f64,
    pub done: bool,
    pub events: Vec<Event>,
}

pub trait Environment {
    fn n_agents(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn action_names(&self) -> &[String];
    /// Names of the per-agent scalar features rules are written against,
    /// in the order `features` returns them.
    fn feature_names(&self) -> &[String];
    fn horizon(&self) -> usize;

    fn reset(&mut self, seed: u64);
    fn step(&mut self, actions: &[usize]) -> Result<StepResult>;

    fn observation(&self, agent: usize) -> Vec<f64>;
    fn global_state(&self) -> Vec<f64>;
    fn available_actions(&self, agent: usize) -> Vec<bool>;
    fn features(&self, agent: usize) -> Vec<f64>;

    /// True once the win condition has been met this episode.
    fn won(&self) -> bool;
    fn step_count(&self) -> usize;
}

/// Build an environment from the run config.
pub fn build(cfg: &EnvConfig) -> Result<Box<dyn Environment>> {
    match cfg.name.as_str() {
        "lbf" => Ok(Box::new(LbfEnv::new(cfg.lbf_params()?)?)),
        "skirmish" => Ok(Box::new(SkirmishEnv::new(cfg.skirmish_params()?)?)),
        other => Err(Error::Config(format!(
            "unknown environment '{other}' (expected 'lbf' or 'skirmish')"
        ))),
    }
}

/// Fold components into one seed; a splitmix64 pass per component.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        let mut z = h ^ p.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}
