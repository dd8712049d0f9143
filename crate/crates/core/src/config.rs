//! Run configuration: TOML files with strict unknown-key rejection,
//! defaults for every conventional hyperparameter, and dotted-path
//! command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::lbf::LbfParams;
use crate::env::skirmish::SkirmishParams;
use crate::error::{Error, Result};
use crate::mixer::MixerKind;

impl Serialize for MixerKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(match self {
            MixerKind::Vdn => "vdn",
            MixerKind::Qmix => "qmix",
        })
    }
}

impl<'de> Deserialize<'de> for MixerKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            "vdn" => Ok(MixerKind::Vdn),
            "qmix" => Ok(MixerKind::Qmix),
            other => Err(serde::de::Error::custom(format!(
                "unknown mixer '{other}' (expected 'vdn' or 'qmix')"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    /// Drop the rule set entirely.
    pub no_knowledge: bool,
    /// Set lambda and lambda_k to zero: plain value decomposition.
    pub no_intrinsic: bool,
    /// Replace every rule evaluation with a seeded random distribution over
    /// the available actions.
    pub random_knowledge: bool,
}

/// Environment selection plus scenario knobs. Fields belonging to the other
/// environment must stay unset; validation rejects strays.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub name: String,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub horizon: Option<usize>,
    // foraging
    pub agents: Option<usize>,
    pub foods: Option<usize>,
    pub strict_threshold: Option<bool>,
    pub normalize_reward: Option<bool>,
    // skirmish
    pub allies: Option<usize>,
    pub enemies: Option<usize>,
    pub max_health: Option<f64>,
    pub ally_damage: Option<f64>,
    pub enemy_damage: Option<f64>,
    pub ally_range: Option<i64>,
    pub enemy_range: Option<i64>,
    pub sight_range: Option<i64>,
    pub dense_reward: Option<bool>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            name: "lbf".to_string(),
            rows: None,
            cols: None,
            horizon: None,
            agents: None,
            foods: None,
            strict_threshold: None,
            normalize_reward: None,
            allies: None,
            enemies: None,
            max_health: None,
            ally_damage: None,
            enemy_damage: None,
            ally_range: None,
            enemy_range: None,
            sight_range: None,
            dense_reward: None,
        }
    }
}

impl EnvConfig {
    fn reject_foreign(&self, foreign: &[(&str, bool)]) -> Result<()> {
        for (field, set) in foreign {
            if *set {
                return Err(Error::Config(format!(
                    "env '{}' does not accept the '{field}' setting",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn lbf_params(&self) -> Result<LbfParams> {
        self.reject_foreign(&[
            ("allies", self.allies.is_some()),
            ("enemies", self.enemies.is_some()),
            ("max_health", self.max_health.is_some()),
            ("ally_damage", self.ally_damage.is_some()),
            ("enemy_damage", self.enemy_damage.is_some()),
            ("ally_range", self.ally_range.is_some()),
            ("enemy_range", self.enemy_range.is_some()),
            ("sight_range", self.sight_range.is_some()),
            ("dense_reward", self.dense_reward.is_some()),
        ])?;
        let d = LbfParams::default();
        Ok(LbfParams {
            rows: self.rows.unwrap_or(d.rows),
            cols: self.cols.unwrap_or(d.cols),
            n_agents: self.agents.unwrap_or(d.n_agents),
            n_foods: self.foods.unwrap_or(d.n_foods),
            horizon: self.horizon.unwrap_or(d.horizon),
            strict_threshold: self.strict_threshold.unwrap_or(d.strict_threshold),
            normalize_reward: self.normalize_reward.unwrap_or(d.normalize_reward),
        })
    }

    pub fn skirmish_params(&self) -> Result<SkirmishParams> {
        self.reject_foreign(&[
            ("agents", self.agents.is_some()),
            ("foods", self.foods.is_some()),
            ("strict_threshold", self.strict_threshold.is_some()),
            ("normalize_reward", self.normalize_reward.is_some()),
        ])?;
        let d = SkirmishParams::default();
        Ok(SkirmishParams {
            rows: self.rows.unwrap_or(d.rows),
            cols: self.cols.unwrap_or(d.cols),
            n_allies: self.allies.unwrap_or(d.n_allies),
            n_enemies: self.enemies.unwrap_or(d.n_enemies),
            horizon: self.horizon.unwrap_or(d.horizon),
            max_health: self.max_health.unwrap_or(d.max_health),
            ally_damage: self.ally_damage.unwrap_or(d.ally_damage),
            enemy_damage: self.enemy_damage.unwrap_or(d.enemy_damage),
            ally_range: self.ally_range.unwrap_or(d.ally_range),
            enemy_range: self.enemy_range.unwrap_or(d.enemy_range),
            sight_range: self.sight_range.unwrap_or(d.sight_range),
            dense_reward: self.dense_reward.unwrap_or(d.dense_reward),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub total_steps: u64,
    pub mixer: MixerKind,
    pub lambda: f64,
    pub lambda_k: f64,
    pub gamma: f64,
    pub lr: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_eps: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub target_update_interval: u64,
    pub test_interval: u64,
    pub test_episodes: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_anneal_steps: u64,
    pub hidden_dim: usize,
    pub mixing_embed_dim: usize,
    pub phi_temperature: f64,
    pub rules: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Recompute intrinsic rewards from the current policy when replaying,
    /// instead of using the values fixed at collection time.
    pub recompute_intrinsic_at_replay: bool,
    /// Average the per-agent individual losses instead of summing them.
    pub individual_loss_mean: bool,
    /// Stream per-step intrinsic records for one replay at every test point.
    pub log_intrinsics: bool,
    pub env: EnvConfig,
    pub ablation: AblationConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 1,
            total_steps: 200_000,
            mixer: MixerKind::Vdn,
            lambda: 0.5,
            lambda_k: 0.02,
            gamma: 0.99,
            lr: 0.0005,
            rmsprop_decay: 0.99,
            rmsprop_eps: 1e-5,
            buffer_capacity: 5000,
            batch_size: 32,
            target_update_interval: 200,
            test_interval: 1000,
            test_episodes: 32,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_anneal_steps: 50_000,
            hidden_dim: 64,
            mixing_embed_dim: 32,
            phi_temperature: 1.0,
            rules: None,
            out_dir: None,
            recompute_intrinsic_at_replay: false,
            individual_loss_mean: false,
            log_intrinsics: false,
            env: EnvConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        };
        check(self.total_steps > 0, "total_steps must be positive")?;
        check(self.batch_size >= 1, "batch_size must be at least 1")?;
        check(
            self.batch_size <= self.buffer_capacity,
            "batch_size cannot exceed buffer_capacity",
        )?;
        check(self.gamma >= 0.0 && self.gamma < 1.0, "gamma must lie in [0, 1)")?;
        check(self.lr > 0.0, "lr must be positive")?;
        check(
            self.rmsprop_decay > 0.0 && self.rmsprop_decay < 1.0,
            "rmsprop_decay must lie in (0, 1)",
        )?;
        check(self.rmsprop_eps > 0.0, "rmsprop_eps must be positive")?;
        check(
            (0.0..=1.0).contains(&self.epsilon_start) && (0.0..=1.0).contains(&self.epsilon_end),
            "exploration rates must lie in [0, 1]",
        )?;
        check(
            self.epsilon_end <= self.epsilon_start,
            "epsilon_end must not exceed epsilon_start",
        )?;
        check(self.epsilon_anneal_steps > 0, "epsilon_anneal_steps must be positive")?;
        check(self.hidden_dim >= 1, "hidden_dim must be at least 1")?;
        check(self.mixing_embed_dim >= 1, "mixing_embed_dim must be at least 1")?;
        check(self.phi_temperature > 0.0, "phi_temperature must be positive")?;
        check(self.lambda >= 0.0, "lambda must be nonnegative")?;
        check(self.lambda_k >= 0.0, "lambda_k must be nonnegative")?;
        check(self.test_episodes >= 1, "test_episodes must be at least 1")?;
        check(self.test_interval >= 1, "test_interval must be positive")?;
        check(
            self.target_update_interval >= 1,
            "target_update_interval must be positive",
        )?;
        if self.ablation.no_knowledge && self.ablation.random_knowledge {
            return Err(Error::Config(
                "no_knowledge and random_knowledge are mutually exclusive".into(),
            ));
        }
        // environment params must construct
        match self.env.name.as_str() {
            "lbf" => {
                self.env.lbf_params()?;
            }
            "skirmish" => {
                self.env.skirmish_params()?;
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown environment '{other}' (expected 'lbf' or 'skirmish')"
                )))
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<TrainConfig> {
        let cfg: TrainConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Load with `key=value` overrides applied before validation. Dotted
    /// keys reach into sections, e.g. `env.rows=12`.
    pub fn load_with_overrides(path: &Path, sets: &[(String, String)]) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut table: toml::Table =
            toml::from_str(&text).map_err(|e| Error::Config(format!("config: {e}")))?;
        for (key, value) in sets {
            apply_override(&mut table, key, value)?;
        }
        let cfg: TrainConfig = toml::Table::try_into(table)
            .map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("config render: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    /// Effective shaping weights after the ablation flags.
    pub fn effective_lambda(&self) -> f64 {
        if self.ablation.no_intrinsic {
            0.0
        } else {
            self.lambda
        }
    }

    pub fn effective_lambda_k(&self) -> f64 {
        if self.ablation.no_intrinsic {
            0.0
        } else {
            self.lambda_k
        }
    }
}

fn parse_toml_value(text: &str) -> toml::Value {
    if let Ok(b) = text.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(i) = text.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = text.parse::<f64>() {
        return toml::Value::Float(f);
    }
    toml::Value::String(text.to_string())
}

fn apply_override(table: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut current = table;
    for part in &parts[..parts.len() - 1] {
        current = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path '{key}' crosses a non-table")))?;
    }
    current.insert(parts[parts.len() - 1].to_string(), parse_toml_value(value));
    Ok(())
}
