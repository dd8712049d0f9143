//! Loss assembly over padded episode batches.
//!
//! The team loss regresses the mixed value onto the shaped reward plus the
//! discounted target mix of per-agent target-network argmax values; each
//! agent additionally regresses its own chosen-action value onto its
//! intrinsic reward plus its discounted target max. Both gradients flow
//! into the shared agent parameters in one pass.

use crate::agent::{phi, AgentNet};
use crate::error::{Error, Result};
use crate::intrinsic::intrinsic_reward;
use crate::mixer::{vdn_mix, QmixNet};
use crate::tensor::mat::Mat;
use crate::tensor::params::{Gradients, ParamStore};

/// Fully materialized step: everything the loss needs.
#[derive(Debug, Clone)]
pub struct StepData {
    pub obs: Vec<Vec<f64>>,
    pub avail: Vec<Vec<bool>>,
    pub state: Vec<f64>,
    pub actions: Vec<usize>,
    pub intrinsic: Vec<f64>,
    /// Masked preference distributions, present only when intrinsic
    /// rewards are recomputed at replay time.
    pub preference: Vec<Option<Vec<f64>>>,
    pub reward_shaped: f64,
    pub reward_ex: f64,
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct EpisodeData {
    pub steps: Vec<StepData>,
}

#[derive(Debug, Clone)]
pub struct EpisodeBatch {
    pub episodes: Vec<EpisodeData>,
    pub n_agents: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Losses {
    pub td: f64,
    pub individual: Vec<f64>,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct LossConfig {
    pub gamma: f64,
    pub lambda_k: f64,
    /// Aggregate per-agent losses by mean instead of sum.
    pub individual_loss_mean: bool,
    pub phi_temperature: f64,
    pub lambda: f64,
    /// Rebuild R_t and r_t^i from the current policy's action
    /// distributions instead of the collection-time values.
    pub recompute_intrinsic: bool,
}

/// Losses only; the trainer's update path asks for gradients too.
pub fn compute_losses(
    batch: &EpisodeBatch,
    agent: &AgentNet,
    qmix: Option<&QmixNet>,
    online: &ParamStore,
    target: &ParamStore,
    cfg: &LossConfig,
) -> Result<Losses> {
    losses_and_grads(batch, agent, qmix, online, target, cfg, None)
}

pub fn losses_and_grads(
    batch: &EpisodeBatch,
    agent: &AgentNet,
    qmix: Option<&QmixNet>,
    online: &ParamStore,
    target: &ParamStore,
    cfg: &LossConfig,
    mut grads: Option<&mut Gradients>,
) -> Result<Losses> {
    if batch.episodes.is_empty() {
        return Err(Error::InvalidInput("loss over an empty batch".into()));
    }
    if batch.episodes.iter().any(|e| e.steps.is_empty()) {
        return Err(Error::InvalidInput("loss over an empty episode".into()));
    }
    for (b, ep) in batch.episodes.iter().enumerate() {
        let terminals = ep.steps.iter().filter(|s| s.terminal).count();
        if terminals != 1 || !ep.steps.last().unwrap().terminal {
            return Err(Error::InvalidInput(format!(
                "episode {b} must terminate exactly once, at its last step"
            )));
        }
    }
    let n = batch.n_agents;
    let b_count = batch.episodes.len();
    let t_max = batch.episodes.iter().map(|e| e.steps.len()).max().unwrap();
    let dims = agent.dims();
    let (obs_dim, n_actions) = (dims.obs_dim, dims.n_actions);
    let state_dim = batch.episodes[0].steps[0].state.len();
    let cols = b_count * n;

    // --- assemble padded tensors -----------------------------------------
    let mut obs_seq: Vec<Mat> = Vec::with_capacity(t_max);
    let mut states: Vec<Mat> = Vec::with_capacity(t_max);
    let mut valid: Vec<Vec<bool>> = Vec::with_capacity(t_max);
    let mut terminal: Vec<Vec<bool>> = Vec::with_capacity(t_max);
    for t in 0..t_max {
        let mut obs_t = Mat::zeros(obs_dim, cols);
        let mut state_t = Mat::zeros(state_dim, b_count);
        let mut valid_t = vec![false; b_count];
        let mut term_t = vec![false; b_count];
        for (b, ep) in batch.episodes.iter().enumerate() {
            if t < ep.steps.len() {
                let step = &ep.steps[t];
                if step.obs.len() != n || step.actions.len() != n {
                    return Err(Error::InvalidInput(format!(
                        "episode {b} step {t} does not have {n} agents"
                    )));
                }
                for i in 0..n {
                    if step.obs[i].len() != obs_dim {
                        return Err(Error::Config(format!(
                            "episode {b} step {t}: observation length {} != {obs_dim}",
                            step.obs[i].len()
                        )));
                    }
                    obs_t.set_col(b * n + i, &step.obs[i]);
                }
                state_t.set_col(b, &step.state);
                valid_t[b] = true;
                term_t[b] = step.terminal;
            }
        }
        obs_seq.push(obs_t);
        states.push(state_t);
        valid.push(valid_t);
        terminal.push(term_t);
    }
    let total_valid: usize = valid.iter().map(|v| v.iter().filter(|&&x| x).count()).sum();
    let m_norm = total_valid as f64;

    // --- forward passes ---------------------------------------------------
    let target_q = agent.forward_seq_q(target, &obs_seq)?;
    let tape = agent.forward_seq(online, obs_seq)?;

    let avail_at = |t: usize, b: usize, i: usize| -> Option<&[bool]> {
        let ep = &batch.episodes[b];
        ep.steps.get(t).map(|s| s.avail[i].as_slice())
    };

    // chosen online Q and per-agent target max under next availability
    let mut chosen = Vec::with_capacity(t_max); // n x B
    let mut target_max = Vec::with_capacity(t_max); // n x B
    for t in 0..t_max {
        let mut ch = Mat::zeros(n, b_count);
        let mut tm = Mat::zeros(n, b_count);
        for b in 0..b_count {
            if !valid[t][b] {
                continue;
            }
            let step = &batch.episodes[b].steps[t];
            for i in 0..n {
                let col = b * n + i;
                ch.set(i, b, tape.q[t].at(step.actions[i], col));
                let mut best = f64::NEG_INFINITY;
                for a in 0..n_actions {
                    if step.avail[i][a] {
                        let v = target_q[t].at(a, col);
                        if v > best {
                            best = v;
                        }
                    }
                }
                tm.set(i, b, best);
            }
        }
        chosen.push(ch);
        target_max.push(tm);
    }

    // rewards in use: stored, or recomputed from the current policy
    let mut r_team = vec![vec![0.0; b_count]; t_max];
    let mut r_ind = vec![Mat::zeros(n, b_count); t_max];
    for t in 0..t_max {
        for b in 0..b_count {
            if !valid[t][b] {
                continue;
            }
            let step = &batch.episodes[b].steps[t];
            if cfg.recompute_intrinsic {
                let mut sum = 0.0;
                for i in 0..n {
                    let r = match &step.preference[i] {
                        Some(pref) => {
                            let col = b * n + i;
                            let mut qi = vec![0.0; n_actions];
                            tape.q[t].col_into(col, &mut qi);
                            let dist = phi(&qi, avail_at(t, b, i).unwrap(), cfg.phi_temperature)?;
                            intrinsic_reward(Some(pref), &dist)?
                        }
                        None => 0.0,
                    };
                    r_ind[t].set(i, b, r);
                    sum += r;
                }
                r_team[t][b] = step.reward_ex + cfg.lambda * sum / n as f64;
            } else {
                for i in 0..n {
                    r_ind[t].set(i, b, step.intrinsic[i]);
                }
                r_team[t][b] = step.reward_shaped;
            }
        }
    }

    // --- mixing -----------------------------------------------------------
    let mut qtot = Vec::with_capacity(t_max); // online, chosen actions
    let mut qtot_target = Vec::with_capacity(t_max); // target, target-argmax actions
    let mut qmix_tapes = Vec::new();
    match qmix {
        None => {
            for t in 0..t_max {
                let mut on = vec![0.0; b_count];
                let mut tg = vec![0.0; b_count];
                for b in 0..b_count {
                    let mut qs_on = vec![0.0; n];
                    let mut qs_tg = vec![0.0; n];
                    chosen[t].col_into(b, &mut qs_on);
                    target_max[t].col_into(b, &mut qs_tg);
                    on[b] = vdn_mix(&qs_on);
                    tg[b] = vdn_mix(&qs_tg);
                }
                qtot.push(on);
                qtot_target.push(tg);
            }
        }
        Some(net) => {
            for t in 0..t_max {
                let (on, tape_t) = net.forward_batch(online, &chosen[t], &states[t])?;
                let (tg, _) = net.forward_batch(target, &target_max[t], &states[t])?;
                qtot.push(on);
                qtot_target.push(tg);
                qmix_tapes.push(tape_t);
            }
        }
    }

    // --- losses -----------------------------------------------------------
    let mut loss_td = 0.0;
    let mut loss_ind = vec![0.0; n];
    let mut dqtot: Vec<Vec<f64>> = vec![vec![0.0; b_count]; t_max];
    let mut dchosen: Vec<Mat> = (0..t_max).map(|_| Mat::zeros(n, b_count)).collect();
    let ind_scale = if cfg.individual_loss_mean { 1.0 / n as f64 } else { 1.0 };

    for t in 0..t_max {
        for b in 0..b_count {
            if !valid[t][b] {
                continue;
            }
            let y = if terminal[t][b] {
                r_team[t][b]
            } else {
                r_team[t][b] + cfg.gamma * qtot_target[t + 1][b]
            };
            let err = qtot[t][b] - y;
            loss_td += err * err;
            dqtot[t][b] = 2.0 * err / m_norm;

            for i in 0..n {
                let y_i = if terminal[t][b] {
                    r_ind[t].at(i, b)
                } else {
                    r_ind[t].at(i, b) + cfg.gamma * target_max[t + 1].at(i, b)
                };
                let err_i = chosen[t].at(i, b) - y_i;
                loss_ind[i] += err_i * err_i;
                let g = cfg.lambda_k * ind_scale * 2.0 * err_i / m_norm;
                let cur = dchosen[t].at(i, b);
                dchosen[t].set(i, b, cur + g);
            }
        }
    }
    loss_td /= m_norm;
    for l in &mut loss_ind {
        *l /= m_norm;
    }
    let agg: f64 = if cfg.individual_loss_mean {
        loss_ind.iter().sum::<f64>() / n as f64
    } else {
        loss_ind.iter().sum()
    };
    let losses = Losses { td: loss_td, individual: loss_ind, total: loss_td + cfg.lambda_k * agg };

    // --- backward ---------------------------------------------------------
    if let Some(grads) = grads.as_deref_mut() {
        match qmix {
            None => {
                for t in 0..t_max {
                    for b in 0..b_count {
                        let g = dqtot[t][b];
                        if g != 0.0 {
                            for i in 0..n {
                                let cur = dchosen[t].at(i, b);
                                dchosen[t].set(i, b, cur + g);
                            }
                        }
                    }
                }
            }
            Some(net) => {
                for t in 0..t_max {
                    net.backward_batch(
                        online,
                        &qmix_tapes[t],
                        &chosen[t],
                        &states[t],
                        &dqtot[t],
                        grads,
                        &mut dchosen[t],
                    )?;
                }
            }
        }

        // scatter chosen-action gradients into full Q gradients
        let mut dq: Vec<Mat> = (0..t_max).map(|_| Mat::zeros(n_actions, cols)).collect();
        for t in 0..t_max {
            for b in 0..b_count {
                if !valid[t][b] {
                    continue;
                }
                let step = &batch.episodes[b].steps[t];
                for i in 0..n {
                    let col = b * n + i;
                    let g = dchosen[t].at(i, b);
                    if g != 0.0 {
                        let cur = dq[t].at(step.actions[i], col);
                        dq[t].set(step.actions[i], col, cur + g);
                    }
                }
            }
        }
        agent.backward_seq(online, &tape, &dq, grads)?;
    }

    Ok(losses)
}
