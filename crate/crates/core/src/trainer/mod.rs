//! End-to-end training: episode collection, replay, loss assembly with
//! backpropagation, target-network maintenance, greedy evaluation, and
//! behavior-alignment statistics.

pub mod loss;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{epsilon_at, phi, select_action, AgentNet, EpsilonSchedule, NetDims};
use crate::config::TrainConfig;
use crate::env::{build as build_env, mix_seed, Environment};
use crate::error::{Error, Result};
use crate::intrinsic::{intrinsic_reward, shaped_team_reward, IntrinsicRecord};
use crate::knowledge::{parse_rules, RuleSet, Vocabulary};
use crate::metrics::{CurveRow, MetricsRecord, MetricsWriter};
use crate::mixer::{MixerKind, QmixDims, QmixNet};
use crate::replay::{CompactEpisode, CompactStep, ReplayBuffer};
use crate::tensor::params::{Gradients, ParamStore};

pub use loss::{
    compute_losses, losses_and_grads, EpisodeBatch, EpisodeData, LossConfig, Losses, StepData,
};

const SALT_INIT: u64 = 0x01;
const SALT_EPISODE: u64 = 0x02;
const SALT_EXPLORE: u64 = 0x03;
const SALT_SAMPLER: u64 = 0x04;
const SALT_RANDOM_RULE: u64 = 0x05;
const SALT_EVAL: u64 = 0x06;
const SALT_ALIGN: u64 = 0x07;

/// How knowledge enters collection: the parsed rules, nothing, or seeded
/// random preferences (the "random knowledge" ablation).
enum KnowledgeMode {
    Rules(RuleSet),
    None,
    Random,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    env: Box<dyn Environment>,
    agent: AgentNet,
    qmix: Option<QmixNet>,
    pub params: ParamStore,
    pub target: ParamStore,
    knowledge: KnowledgeModeHolder,
    buffer: ReplayBuffer,
    explore_rng: ChaCha8Rng,
    sampler_rng: ChaCha8Rng,
    episodes_collected: u64,
    env_steps: u64,
    updates: u64,
    last_loss: Losses,
}

// Thin wrapper so the enum stays private while the trainer field is usable.
struct KnowledgeModeHolder(KnowledgeMode);

pub struct TrainOutcome {
    pub env_steps: u64,
    pub updates: u64,
    pub final_eval: EvalStats,
}

#[derive(Debug, Clone)]
pub struct EvalStats {
    pub mean_return: f64,
    pub win_rate: f64,
    pub mean_ep_len: f64,
    /// None when no rule fired during evaluation.
    pub consistency: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AlignStats {
    pub episodes: usize,
    pub avg_steps: f64,
    pub consistency: Option<f64>,
    pub rule_firing_steps: u64,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let env = build_env(&cfg.env)?;
        let dims = NetDims {
            obs_dim: env.obs_dim(),
            n_actions: env.n_actions(),
            hidden: cfg.hidden_dim,
        };
        let agent = AgentNet::new("agent", dims);
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, SALT_INIT]));
        agent.init_params(&mut params, &mut rng)?;
        let qmix = match cfg.mixer {
            MixerKind::Vdn => None,
            MixerKind::Qmix => {
                let net = QmixNet::new(
                    "mixer",
                    QmixDims {
                        n_agents: env.n_agents(),
                        state_dim: env.state_dim(),
                        embed: cfg.mixing_embed_dim,
                    },
                );
                net.init_params(&mut params, &mut rng)?;
                Some(net)
            }
        };
        let target = params.clone();

        let knowledge = Self::load_knowledge(&cfg, env.as_ref())?;
        let buffer = ReplayBuffer::new(cfg.buffer_capacity)?;
        let explore_rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, SALT_EXPLORE]));
        let sampler_rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, SALT_SAMPLER]));
        Ok(Trainer {
            cfg,
            env,
            agent,
            qmix,
            params,
            target,
            knowledge: KnowledgeModeHolder(knowledge),
            buffer,
            explore_rng,
            sampler_rng,
            episodes_collected: 0,
            env_steps: 0,
            updates: 0,
            last_loss: Losses::default(),
        })
    }

    fn load_knowledge(cfg: &TrainConfig, env: &dyn Environment) -> Result<KnowledgeMode> {
        if cfg.ablation.random_knowledge {
            return Ok(KnowledgeMode::Random);
        }
        if cfg.ablation.no_knowledge {
            return Ok(KnowledgeMode::None);
        }
        match &cfg.rules {
            None => Ok(KnowledgeMode::None),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::Config(format!("cannot read rule file {}: {e}", path.display()))
                })?;
                let vocab = Vocabulary {
                    features: env.feature_names().to_vec(),
                    actions: env.action_names().to_vec(),
                };
                let rules = parse_rules(&text, &vocab)?;
                Ok(KnowledgeMode::Rules(rules))
            }
        }
    }

    pub fn rules(&self) -> Option<&RuleSet> {
        match &self.knowledge.0 {
            KnowledgeMode::Rules(rs) => Some(rs),
            _ => None,
        }
    }

    /// Knowledge is inert when it cannot influence training: then the
    /// trainer skips rule evaluation entirely and the metrics match a
    /// knowledge-free build bit for bit.
    fn knowledge_active(&self) -> bool {
        let has_source = !matches!(self.knowledge.0, KnowledgeMode::None);
        has_source && (self.cfg.effective_lambda() > 0.0 || self.cfg.effective_lambda_k() > 0.0)
    }

    /// Evaluate the knowledge source for one agent at one step.
    /// Returns (rule index, masked preference distribution).
    fn preference(
        knowledge: &KnowledgeMode,
        env: &dyn Environment,
        agent_idx: usize,
        avail: &[bool],
        episode_seed: u64,
        step: usize,
    ) -> Result<Option<(Option<usize>, Vec<f64>)>> {
        match knowledge {
            KnowledgeMode::None => Ok(None),
            KnowledgeMode::Rules(rules) => {
                let features = env.features(agent_idx);
                Ok(rules
                    .evaluate(&features, avail)?
                    .map(|m| (Some(m.rule_index), m.distribution)))
            }
            KnowledgeMode::Random => {
                // Stateless draw so replaying an episode regenerates the
                // exact same preference.
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
                    episode_seed,
                    SALT_RANDOM_RULE,
                    step as u64,
                    agent_idx as u64,
                ]));
                let mut dist = vec![0.0; avail.len()];
                let mut sum = 0.0;
                for (d, &ok) in dist.iter_mut().zip(avail) {
                    if ok {
                        let w: f64 = rng.gen();
                        *d = w;
                        sum += w;
                    }
                }
                if sum <= 0.0 {
                    return Ok(None);
                }
                for d in &mut dist {
                    *d /= sum;
                }
                Ok(Some((None, dist)))
            }
        }
    }

    /// Run one epsilon-greedy episode and fix its reward terms.
    pub fn collect_episode(&mut self, episode_seed: u64, epsilon: f64) -> Result<CompactEpisode> {
        let n = self.env.n_agents();
        let knowledge_active = self.knowledge_active();
        let lambda = self.cfg.effective_lambda();
        self.env.reset(episode_seed);
        let mut hidden = self.agent.zero_hidden(n);
        let mut steps = Vec::new();
        let mut return_ex = 0.0;
        let mut step_idx = 0usize;
        loop {
            let obs = obs_matrix(self.env.as_ref(), n);
            let (q, h2) = self.agent.forward_cols(&self.params, &obs, &hidden)?;
            hidden = h2;

            let mut actions = Vec::with_capacity(n);
            let mut intrinsics = Vec::with_capacity(n);
            let mut matched = Vec::with_capacity(n);
            for i in 0..n {
                let avail = self.env.available_actions(i);
                let mut qi = vec![0.0; q.rows()];
                q.col_into(i, &mut qi);
                let (r_in, rule_idx) = if knowledge_active {
                    match Self::preference(
                        &self.knowledge.0,
                        self.env.as_ref(),
                        i,
                        &avail,
                        episode_seed,
                        step_idx,
                    )? {
                        Some((rule_idx, pref)) => {
                            let dist = phi(&qi, &avail, self.cfg.phi_temperature)?;
                            (intrinsic_reward(Some(&pref), &dist)?, rule_idx)
                        }
                        None => (0.0, None),
                    }
                } else {
                    (0.0, None)
                };
                intrinsics.push(r_in);
                matched.push(rule_idx);
                actions.push(select_action(&qi, &avail, epsilon, &mut self.explore_rng));
            }

            let outcome = self.env.step(&actions)?;
            return_ex += outcome.reward;
            let shaped = shaped_team_reward(outcome.reward, &intrinsics, lambda)?;
            steps.push(CompactStep {
                actions,
                intrinsic: intrinsics,
                matched_rule: matched,
                reward_ex: outcome.reward,
                reward_shaped: shaped,
            });
            step_idx += 1;
            if outcome.done {
                break;
            }
        }
        Ok(CompactEpisode { env_seed: episode_seed, steps, return_ex, won: self.env.won() })
    }

    /// Rebuild the full step data for stored episodes by replaying the
    /// environment deterministically.
    pub fn materialize(&mut self, episodes: &[&CompactEpisode]) -> Result<EpisodeBatch> {
        let n = self.env.n_agents();
        let knowledge_active = self.knowledge_active();
        let recompute = self.cfg.recompute_intrinsic_at_replay && knowledge_active;
        let mut out = Vec::with_capacity(episodes.len());
        for ep in episodes {
            self.env.reset(ep.env_seed);
            let mut steps = Vec::with_capacity(ep.len());
            for (t, stored) in ep.steps.iter().enumerate() {
                let obs: Vec<Vec<f64>> = (0..n).map(|i| self.env.observation(i)).collect();
                let avail: Vec<Vec<bool>> = (0..n).map(|i| self.env.available_actions(i)).collect();
                let state = self.env.global_state();
                let preference = if recompute {
                    let mut prefs = Vec::with_capacity(n);
                    for i in 0..n {
                        prefs.push(
                            Self::preference(
                                &self.knowledge.0,
                                self.env.as_ref(),
                                i,
                                &avail[i],
                                ep.env_seed,
                                t,
                            )?
                            .map(|(_, d)| d),
                        );
                    }
                    prefs
                } else {
                    vec![None; n]
                };
                let outcome = self.env.step(&stored.actions)?;
                debug_assert_eq!(outcome.reward.to_bits(), stored.reward_ex.to_bits());
                let terminal = outcome.done;
                steps.push(StepData {
                    obs,
                    avail,
                    state,
                    actions: stored.actions.clone(),
                    intrinsic: stored.intrinsic.clone(),
                    preference,
                    reward_shaped: stored.reward_shaped,
                    reward_ex: stored.reward_ex,
                    terminal,
                });
            }
            out.push(EpisodeData { steps });
        }
        Ok(EpisodeBatch { episodes: out, n_agents: n })
    }

    fn update_once(&mut self) -> Result<()> {
        let sampled = {
            let refs = self.buffer.sample(self.cfg.batch_size, &mut self.sampler_rng)?;
            refs.into_iter().cloned().collect::<Vec<_>>()
        };
        let refs: Vec<&CompactEpisode> = sampled.iter().collect();
        let batch = self.materialize(&refs)?;
        let mut grads = Gradients::zeros_like(&self.params);
        let losses = loss::losses_and_grads(
            &batch,
            &self.agent,
            self.qmix.as_ref(),
            &self.params,
            &self.target,
            &loss::LossConfig {
                gamma: self.cfg.gamma,
                lambda_k: self.cfg.effective_lambda_k(),
                individual_loss_mean: self.cfg.individual_loss_mean,
                phi_temperature: self.cfg.phi_temperature,
                lambda: self.cfg.effective_lambda(),
                recompute_intrinsic: self.cfg.recompute_intrinsic_at_replay
                    && self.knowledge_active(),
            },
            Some(&mut grads),
        )?;
        if !losses.total.is_finite() {
            return Err(Error::TrainingAbort(format!(
                "non-finite loss at update {} (td {}, individual {:?})",
                self.updates, losses.td, losses.individual
            )));
        }
        self.params
            .rmsprop_step(&grads, self.cfg.lr, self.cfg.rmsprop_decay, self.cfg.rmsprop_eps)?;
        self.updates += 1;
        self.last_loss = losses;
        if self.updates % self.cfg.target_update_interval == 0 {
            self.target.copy_values_from(&self.params)?;
        }
        Ok(())
    }

    /// Full training loop. Writes metrics (and optional artifacts) under
    /// the configured output directory.
    pub fn train(&mut self) -> Result<TrainOutcome> {
        let out_dir = self.cfg.out_dir.clone();
        if let Some(dir) = &out_dir {
            std::fs::create_dir_all(dir)?;
            self.cfg.save(&dir.join("config.toml"))?;
        }
        let mut metrics = match &out_dir {
            Some(dir) => Some(MetricsWriter::create(&dir.join("metrics.jsonl"))?),
            None => None,
        };
        let mut intrinsics_log = match (&out_dir, self.cfg.log_intrinsics) {
            (Some(dir), true) => Some(std::fs::File::create(dir.join("intrinsics.jsonl"))?),
            _ => None,
        };

        let schedule = EpsilonSchedule {
            start: self.cfg.epsilon_start,
            end: self.cfg.epsilon_end,
            anneal_steps: self.cfg.epsilon_anneal_steps,
        };
        let mut next_eval = 0u64;
        let mut last_eval: Option<EvalStats> = None;
        let mut eval_idx = 0u64;

        while self.env_steps < self.cfg.total_steps {
            if self.env_steps >= next_eval {
                let stats = self.evaluate(self.cfg.test_episodes, eval_idx)?;
                if let Some(w) = metrics.as_mut() {
                    w.write(&MetricsRecord {
                        env_step: self.env_steps,
                        mean_return: stats.mean_return,
                        win_rate: stats.win_rate,
                        mean_ep_len: stats.mean_ep_len,
                        loss_td: self.last_loss.td,
                        loss_i_mean: mean(&self.last_loss.individual),
                        epsilon: epsilon_at(self.env_steps, &schedule),
                        consistency: stats.consistency,
                    })?;
                }
                if let Some(f) = intrinsics_log.as_mut() {
                    self.dump_intrinsic_records(eval_idx, f)?;
                }
                last_eval = Some(stats);
                eval_idx += 1;
                next_eval = (self.env_steps / self.cfg.test_interval + 1) * self.cfg.test_interval;
            }

            let epsilon = epsilon_at(self.env_steps, &schedule);
            let episode_seed = mix_seed(&[self.cfg.seed, SALT_EPISODE, self.episodes_collected]);
            let episode = self.collect_episode(episode_seed, epsilon)?;
            self.env_steps += episode.len() as u64;
            self.episodes_collected += 1;
            self.buffer.push(episode);

            if self.buffer.len() >= self.cfg.batch_size {
                self.update_once()?;
            }
        }

        let final_eval = self.evaluate(self.cfg.test_episodes, eval_idx)?;
        if let Some(w) = metrics.as_mut() {
            w.write(&MetricsRecord {
                env_step: self.env_steps,
                mean_return: final_eval.mean_return,
                win_rate: final_eval.win_rate,
                mean_ep_len: final_eval.mean_ep_len,
                loss_td: self.last_loss.td,
                loss_i_mean: mean(&self.last_loss.individual),
                epsilon: epsilon_at(self.env_steps, &schedule),
                consistency: final_eval.consistency,
            })?;
        }
        let _ = last_eval;
        if let Some(dir) = &out_dir {
            self.params.save_text(&dir.join("checkpoint.txt"))?;
        }
        Ok(TrainOutcome { env_steps: self.env_steps, updates: self.updates, final_eval })
    }

    /// Greedy evaluation episodes. Rules are consulted only to report
    /// intrinsic alignment; they never influence the actions.
    pub fn evaluate(&mut self, episodes: usize, eval_idx: u64) -> Result<EvalStats> {
        let n = self.env.n_agents();
        let mut returns = Vec::with_capacity(episodes);
        let mut wins = 0usize;
        let mut lens = Vec::with_capacity(episodes);
        let mut firing = 0u64;
        let mut consistent = 0u64;
        let report_rules = self.rules().is_some() && self.knowledge_active();

        for k in 0..episodes {
            let seed = mix_seed(&[self.cfg.seed, SALT_EVAL, eval_idx, k as u64]);
            self.env.reset(seed);
            let mut hidden = self.agent.zero_hidden(n);
            let mut ep_return = 0.0;
            loop {
                let obs = obs_matrix(self.env.as_ref(), n);
                let (q, h2) = self.agent.forward_cols(&self.params, &obs, &hidden)?;
                hidden = h2;
                let mut actions = Vec::with_capacity(n);
                for i in 0..n {
                    let avail = self.env.available_actions(i);
                    let mut qi = vec![0.0; q.rows()];
                    q.col_into(i, &mut qi);
                    let action = crate::agent::greedy_action(&qi, &avail);
                    if report_rules {
                        if let Some(rules) = self.rules() {
                            let features = self.env.features(i);
                            if let Some(m) = rules.evaluate(&features, &avail)? {
                                firing += 1;
                                if m.distribution[action] > 0.0 {
                                    consistent += 1;
                                }
                            }
                        }
                    }
                    actions.push(action);
                }
                let outcome = self.env.step(&actions)?;
                ep_return += outcome.reward;
                if outcome.done {
                    break;
                }
            }
            returns.push(ep_return);
            lens.push(self.env.step_count() as f64);
            if self.env.won() {
                wins += 1;
            }
        }
        Ok(EvalStats {
            mean_return: mean(&returns),
            win_rate: wins as f64 / episodes as f64,
            mean_ep_len: mean(&lens),
            consistency: if firing > 0 { Some(consistent as f64 / firing as f64) } else { None },
        })
    }

    /// Replay one greedy episode and stream its per-(agent, step) intrinsic
    /// records to the sink.
    fn dump_intrinsic_records(&mut self, eval_idx: u64, sink: &mut std::fs::File) -> Result<()> {
        use std::io::Write as _;
        let records =
            self.intrinsic_records(mix_seed(&[self.cfg.seed, SALT_EVAL, eval_idx, 0xC]), eval_idx)?;
        for rec in records {
            let line = serde_json::to_string(&rec)
                .map_err(|e| Error::InvalidInput(format!("intrinsic serialization: {e}")))?;
            sink.write_all(line.as_bytes())?;
            sink.write_all(b"\n")?;
        }
        Ok(())
    }

    /// One greedy test episode, returning the full intrinsic record (rule,
    /// preference, action distribution, reward) for every (agent, step).
    /// The rewards are observational only; action selection stays greedy.
    pub fn intrinsic_records(&mut self, seed: u64, episode: u64) -> Result<Vec<IntrinsicRecord>> {
        let n = self.env.n_agents();
        self.env.reset(seed);
        let mut hidden = self.agent.zero_hidden(n);
        let mut records = Vec::new();
        let mut step_idx = 0usize;
        loop {
            let obs = obs_matrix(self.env.as_ref(), n);
            let (q, h2) = self.agent.forward_cols(&self.params, &obs, &hidden)?;
            hidden = h2;
            let mut actions = Vec::with_capacity(n);
            for i in 0..n {
                let avail = self.env.available_actions(i);
                let mut qi = vec![0.0; q.rows()];
                q.col_into(i, &mut qi);
                let dist = phi(&qi, &avail, self.cfg.phi_temperature)?;
                let (r_in, rule_name, preference) = match self.rules() {
                    Some(rules) => {
                        let features = self.env.features(i);
                        match rules.evaluate(&features, &avail)? {
                            Some(m) => (
                                intrinsic_reward(Some(&m.distribution), &dist)?,
                                Some(rules.rules()[m.rule_index].name.clone()),
                                Some(m.distribution),
                            ),
                            None => (0.0, None, None),
                        }
                    }
                    None => (0.0, None, None),
                };
                records.push(IntrinsicRecord {
                    episode,
                    step: step_idx,
                    agent: i,
                    rule: rule_name,
                    preference,
                    action_dist: dist,
                    intrinsic_reward: r_in,
                });
                actions.push(crate::agent::greedy_action(&qi, &avail));
            }
            let outcome = self.env.step(&actions)?;
            step_idx += 1;
            if outcome.done {
                break;
            }
        }
        Ok(records)
    }

    /// CSV-friendly view of one test replay's intrinsic rewards.
    pub fn intrinsic_curve(&mut self, seed: u64) -> Result<Vec<CurveRow>> {
        Ok(self
            .intrinsic_records(seed, 0)?
            .into_iter()
            .map(|r| CurveRow {
                step: r.step,
                agent: r.agent,
                intrinsic_reward: r.intrinsic_reward,
                rule: r.rule,
            })
            .collect())
    }

    /// Run greedy episodes and write one trace record per (agent, step):
    /// named features, availability mask, chosen action. Rule extraction
    /// consumes these files.
    pub fn dump_trajectories(&mut self, episodes: usize, path: &std::path::Path) -> Result<()> {
        use crate::env::trace::{TraceRecord, TraceWriter};
        let n = self.env.n_agents();
        let feature_names: Vec<String> = self.env.feature_names().to_vec();
        let action_names: Vec<String> = self.env.action_names().to_vec();
        let mut writer = TraceWriter::create(path)?;
        for k in 0..episodes {
            let seed = mix_seed(&[self.cfg.seed, SALT_EVAL, 0xD0D0, k as u64]);
            self.env.reset(seed);
            let mut hidden = self.agent.zero_hidden(n);
            let mut step_idx = 0usize;
            loop {
                let obs = obs_matrix(self.env.as_ref(), n);
                let (q, h2) = self.agent.forward_cols(&self.params, &obs, &hidden)?;
                hidden = h2;
                let mut actions = Vec::with_capacity(n);
                for i in 0..n {
                    let avail = self.env.available_actions(i);
                    let mut qi = vec![0.0; q.rows()];
                    q.col_into(i, &mut qi);
                    let action = crate::agent::greedy_action(&qi, &avail);
                    let features = self.env.features(i);
                    writer.write(&TraceRecord {
                        episode: k as u64,
                        step: step_idx,
                        agent: i,
                        features: feature_names
                            .iter()
                            .cloned()
                            .zip(features.iter().copied())
                            .collect(),
                        avail,
                        action: action_names[action].clone(),
                    })?;
                    actions.push(action);
                }
                let outcome = self.env.step(&actions)?;
                step_idx += 1;
                if outcome.done {
                    break;
                }
            }
        }
        writer.finish()
    }

    /// Behavior-alignment statistics over greedy episodes: a step counts as
    /// consistent when a rule fires and the chosen action carries positive
    /// preference weight.
    pub fn alignment_stats(&mut self, rules: &RuleSet, n_episodes: usize) -> Result<AlignStats> {
        let n = self.env.n_agents();
        let mut lens = Vec::with_capacity(n_episodes);
        let mut firing = 0u64;
        let mut consistent = 0u64;
        for k in 0..n_episodes {
            let seed = mix_seed(&[self.cfg.seed, SALT_ALIGN, k as u64]);
            self.env.reset(seed);
            let mut hidden = self.agent.zero_hidden(n);
            loop {
                let obs = obs_matrix(self.env.as_ref(), n);
                let (q, h2) = self.agent.forward_cols(&self.params, &obs, &hidden)?;
                hidden = h2;
                let mut actions = Vec::with_capacity(n);
                for i in 0..n {
                    let avail = self.env.available_actions(i);
                    let mut qi = vec![0.0; q.rows()];
                    q.col_into(i, &mut qi);
                    let action = crate::agent::greedy_action(&qi, &avail);
                    let features = self.env.features(i);
                    if let Some(m) = rules.evaluate(&features, &avail)? {
                        firing += 1;
                        if m.distribution[action] > 0.0 {
                            consistent += 1;
                        }
                    }
                    actions.push(action);
                }
                let outcome = self.env.step(&actions)?;
                if outcome.done {
                    break;
                }
            }
            lens.push(self.env.step_count() as f64);
        }
        Ok(AlignStats {
            episodes: n_episodes,
            avg_steps: mean(&lens),
            consistency: if firing > 0 { Some(consistent as f64 / firing as f64) } else { None },
            rule_firing_steps: firing,
        })
    }

    /// Evaluation under a uniform random policy, the floor baseline.
    pub fn random_policy_eval(&mut self, episodes: usize) -> Result<EvalStats> {
        let n = self.env.n_agents();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[self.cfg.seed, SALT_EVAL, 0xF00D]));
        let mut returns = Vec::with_capacity(episodes);
        let mut lens = Vec::with_capacity(episodes);
        let mut wins = 0usize;
        for k in 0..episodes {
            let seed = mix_seed(&[self.cfg.seed, SALT_EVAL, 0xF00D, k as u64]);
            self.env.reset(seed);
            let mut ep_return = 0.0;
            loop {
                let actions: Vec<usize> = (0..n)
                    .map(|i| {
                        let avail = self.env.available_actions(i);
                        let options: Vec<usize> =
                            (0..avail.len()).filter(|&a| avail[a]).collect();
                        options[rng.gen_range(0..options.len())]
                    })
                    .collect();
                let outcome = self.env.step(&actions)?;
                ep_return += outcome.reward;
                if outcome.done {
                    break;
                }
            }
            returns.push(ep_return);
            lens.push(self.env.step_count() as f64);
            if self.env.won() {
                wins += 1;
            }
        }
        Ok(EvalStats {
            mean_return: mean(&returns),
            win_rate: wins as f64 / episodes as f64,
            mean_ep_len: mean(&lens),
            consistency: None,
        })
    }

    pub fn env(&self) -> &dyn Environment {
        self.env.as_ref()
    }

    pub fn env_mut(&mut self) -> &mut dyn Environment {
        self.env.as_mut()
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Load previously trained parameters into both online and target nets.
    pub fn load_checkpoint(&mut self, path: &std::path::Path) -> Result<()> {
        let loaded = ParamStore::load_text(path)?;
        self.params.check_layout_matches(&loaded)?;
        self.params = loaded;
        self.target = self.params.clone();
        Ok(())
    }
}

fn obs_matrix(env: &dyn Environment, n: usize) -> crate::tensor::Mat {
    let mut m = crate::tensor::Mat::zeros(env.obs_dim(), n);
    for i in 0..n {
        let o = env.observation(i);
        m.set_col(i, &o);
    }
    m
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}
