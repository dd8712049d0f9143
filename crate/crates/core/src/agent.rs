//! Parameter-shared recurrent Q-network: dense -> gated recurrent cell ->
//! dense, one Q value per action. One parameter set serves every agent;
//! the agent-id one-hot inside the observation disambiguates them.
//!
//! `forward_cols` runs one step for any number of batch columns (agents,
//! episodes); `forward_seq`/`backward_seq` unroll a padded episode batch
//! and backpropagate through time.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::mat::{add_col_broadcast, gemm_nn, gemm_nt, gemm_tn, row_sums_into, Mat};
use crate::tensor::params::{Gradients, ParamStore};
use crate::tensor::{init_uniform, softmax_masked};

#[derive(Debug, Clone, Copy)]
pub struct NetDims {
    pub obs_dim: usize,
    pub n_actions: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub struct AgentNet {
    prefix: String,
    dims: NetDims,
}

/// Everything the backward pass needs from one unrolled forward pass.
pub struct AgentTape {
    pub obs: Vec<Mat>,
    x1: Vec<Mat>,
    z: Vec<Mat>,
    r: Vec<Mat>,
    c: Vec<Mat>,
    /// Hidden states; index t is the state entering step t, so len = T+1.
    h: Vec<Mat>,
    pub q: Vec<Mat>,
}

impl AgentNet {
    pub fn new(prefix: &str, dims: NetDims) -> Self {
        AgentNet { prefix: prefix.to_string(), dims }
    }

    pub fn dims(&self) -> NetDims {
        self.dims
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{}", self.prefix, part)
    }

    pub fn init_params(&self, store: &mut ParamStore, rng: &mut impl Rng) -> Result<()> {
        let NetDims { obs_dim, n_actions, hidden } = self.dims;
        let gru_fan = 2 * hidden;
        store.insert(&self.name("dense1.w"), init_uniform(hidden, obs_dim, obs_dim, rng))?;
        store.insert(&self.name("dense1.b"), init_uniform(hidden, 1, obs_dim, rng))?;
        for gate in ["z", "r", "c"] {
            store.insert(
                &self.name(&format!("gru.w{gate}x")),
                init_uniform(hidden, hidden, gru_fan, rng),
            )?;
            store.insert(
                &self.name(&format!("gru.w{gate}h")),
                init_uniform(hidden, hidden, gru_fan, rng),
            )?;
            store.insert(
                &self.name(&format!("gru.b{gate}")),
                init_uniform(hidden, 1, gru_fan, rng),
            )?;
        }
        store.insert(&self.name("dense2.w"), init_uniform(n_actions, hidden, hidden, rng))?;
        store.insert(&self.name("dense2.b"), init_uniform(n_actions, 1, hidden, rng))?;
        Ok(())
    }

    pub fn zero_hidden(&self, cols: usize) -> Mat {
        Mat::zeros(self.dims.hidden, cols)
    }

    fn check_obs(&self, obs: &Mat) -> Result<()> {
        if obs.rows() != self.dims.obs_dim {
            return Err(Error::Config(format!(
                "observation rows {} do not match configured input size {}",
                obs.rows(),
                self.dims.obs_dim
            )));
        }
        Ok(())
    }

    /// One step over `cols` columns. Returns (Q, next hidden).
    pub fn forward_cols(&self, params: &ParamStore, obs: &Mat, h: &Mat) -> Result<(Mat, Mat)> {
        self.check_obs(obs)?;
        let (x1, z, r, c, h2) = self.cell_forward(params, obs, h)?;
        let _ = (x1, z, r, c);
        let q = self.head_forward(params, &h2)?;
        Ok((q, h2))
    }

    fn head_forward(&self, params: &ParamStore, h: &Mat) -> Result<Mat> {
        let w2 = params.get(&self.name("dense2.w"))?;
        let b2 = params.get(&self.name("dense2.b"))?;
        let mut q = Mat::zeros(self.dims.n_actions, h.cols());
        gemm_nn(&mut q, w2, h);
        add_col_broadcast(&mut q, b2.data());
        Ok(q)
    }

    #[allow(clippy::type_complexity)]
    fn cell_forward(
        &self,
        params: &ParamStore,
        obs: &Mat,
        h_prev: &Mat,
    ) -> Result<(Mat, Mat, Mat, Mat, Mat)> {
        let hid = self.dims.hidden;
        let cols = obs.cols();
        if h_prev.shape() != (hid, cols) {
            return Err(Error::Config(format!(
                "hidden state shape {:?} does not match ({hid}, {cols})",
                h_prev.shape()
            )));
        }
        let w1 = params.get(&self.name("dense1.w"))?;
        let b1 = params.get(&self.name("dense1.b"))?;
        let mut x1 = Mat::zeros(hid, cols);
        gemm_nn(&mut x1, w1, obs);
        add_col_broadcast(&mut x1, b1.data());
        for v in x1.data_mut() {
            *v = v.max(0.0);
        }

        let gate = |wx: &Mat, wh: &Mat, b: &Mat, hv: &Mat| -> Mat {
            let mut a = Mat::zeros(hid, cols);
            gemm_nn(&mut a, wx, &x1);
            gemm_nn(&mut a, wh, hv);
            add_col_broadcast(&mut a, b.data());
            a
        };
        let mut z = gate(
            params.get(&self.name("gru.wzx"))?,
            params.get(&self.name("gru.wzh"))?,
            params.get(&self.name("gru.bz"))?,
            h_prev,
        );
        for v in z.data_mut() {
            *v = crate::tensor::sigmoid(*v);
        }
        let mut r = gate(
            params.get(&self.name("gru.wrx"))?,
            params.get(&self.name("gru.wrh"))?,
            params.get(&self.name("gru.br"))?,
            h_prev,
        );
        for v in r.data_mut() {
            *v = crate::tensor::sigmoid(*v);
        }
        let mut rh = Mat::zeros(hid, cols);
        for ((o, &rv), &hv) in rh.data_mut().iter_mut().zip(r.data()).zip(h_prev.data()) {
            *o = rv * hv;
        }
        let mut c = gate(
            params.get(&self.name("gru.wcx"))?,
            params.get(&self.name("gru.wch"))?,
            params.get(&self.name("gru.bc"))?,
            &rh,
        );
        for v in c.data_mut() {
            *v = v.tanh();
        }
        let mut h2 = Mat::zeros(hid, cols);
        for (((o, &zv), &cv), &hv) in h2
            .data_mut()
            .iter_mut()
            .zip(z.data())
            .zip(c.data())
            .zip(h_prev.data())
        {
            *o = (1.0 - zv) * hv + zv * cv;
        }
        Ok((x1, z, r, c, h2))
    }

    /// Unroll T steps with tape. `obs_seq[t]` is obs_dim x cols.
    pub fn forward_seq(&self, params: &ParamStore, obs_seq: Vec<Mat>) -> Result<AgentTape> {
        let cols = obs_seq.first().map(|m| m.cols()).unwrap_or(0);
        let t_len = obs_seq.len();
        let mut tape = AgentTape {
            obs: Vec::with_capacity(t_len),
            x1: Vec::with_capacity(t_len),
            z: Vec::with_capacity(t_len),
            r: Vec::with_capacity(t_len),
            c: Vec::with_capacity(t_len),
            h: Vec::with_capacity(t_len + 1),
            q: Vec::with_capacity(t_len),
        };
        tape.h.push(self.zero_hidden(cols));
        for obs in obs_seq {
            self.check_obs(&obs)?;
            let (x1, z, r, c, h2) = self.cell_forward(params, &obs, tape.h.last().unwrap())?;
            let q = self.head_forward(params, &h2)?;
            tape.obs.push(obs);
            tape.x1.push(x1);
            tape.z.push(z);
            tape.r.push(r);
            tape.c.push(c);
            tape.h.push(h2);
            tape.q.push(q);
        }
        Ok(tape)
    }

    /// Unroll T steps keeping only the Q outputs; the target-network pass
    /// needs no tape.
    pub fn forward_seq_q(&self, params: &ParamStore, obs_seq: &[Mat]) -> Result<Vec<Mat>> {
        let cols = obs_seq.first().map(|m| m.cols()).unwrap_or(0);
        let mut h = self.zero_hidden(cols);
        let mut qs = Vec::with_capacity(obs_seq.len());
        for obs in obs_seq {
            self.check_obs(obs)?;
            let (_, _, _, _, h2) = self.cell_forward(params, obs, &h)?;
            qs.push(self.head_forward(params, &h2)?);
            h = h2;
        }
        Ok(qs)
    }

    /// Backpropagate through time. `dq[t]` holds dLoss/dQ_t; gradients are
    /// accumulated (summed) into `grads`.
    pub fn backward_seq(
        &self,
        params: &ParamStore,
        tape: &AgentTape,
        dq: &[Mat],
        grads: &mut Gradients,
    ) -> Result<()> {
        let t_len = tape.q.len();
        if dq.len() != t_len {
            return Err(Error::Config(format!(
                "backward got {} gradients for {} steps",
                dq.len(),
                t_len
            )));
        }
        let hid = self.dims.hidden;
        let cols = tape.h[0].cols();

        let w2 = params.get(&self.name("dense2.w"))?.clone();
        let wzx = params.get(&self.name("gru.wzx"))?.clone();
        let wzh = params.get(&self.name("gru.wzh"))?.clone();
        let wrx = params.get(&self.name("gru.wrx"))?.clone();
        let wrh = params.get(&self.name("gru.wrh"))?.clone();
        let wcx = params.get(&self.name("gru.wcx"))?.clone();
        let wch = params.get(&self.name("gru.wch"))?.clone();

        let mut dh_carry = Mat::zeros(hid, cols);
        for t in (0..t_len).rev() {
            let h_prev = &tape.h[t];
            let (z, r, c, x1) = (&tape.z[t], &tape.r[t], &tape.c[t], &tape.x1[t]);

            // output head
            gemm_nt(grads.get_mut(&self.name("dense2.w"))?, &dq[t], &tape.h[t + 1]);
            {
                let db2 = grads.get_mut(&self.name("dense2.b"))?;
                let mut buf = vec![0.0; self.dims.n_actions];
                row_sums_into(&dq[t], &mut buf);
                for (o, v) in db2.data_mut().iter_mut().zip(buf) {
                    *o += v;
                }
            }
            let mut dh = dh_carry;
            gemm_tn(&mut dh, &w2, &dq[t]);

            // recurrent cell
            let mut dz = Mat::zeros(hid, cols);
            let mut dc = Mat::zeros(hid, cols);
            let mut dhp = Mat::zeros(hid, cols);
            for i in 0..hid * cols {
                let dhv = dh.data()[i];
                let zv = z.data()[i];
                let cv = c.data()[i];
                let hv = h_prev.data()[i];
                dz.data_mut()[i] = dhv * (cv - hv);
                dc.data_mut()[i] = dhv * zv;
                dhp.data_mut()[i] = dhv * (1.0 - zv);
            }

            // candidate gate
            let mut dac = dc;
            for (v, &cv) in dac.data_mut().iter_mut().zip(c.data()) {
                *v *= 1.0 - cv * cv;
            }
            let mut rh = Mat::zeros(hid, cols);
            for ((o, &rv), &hv) in rh.data_mut().iter_mut().zip(r.data()).zip(h_prev.data()) {
                *o = rv * hv;
            }
            gemm_nt(grads.get_mut(&self.name("gru.wcx"))?, &dac, x1)
                ;
            gemm_nt(grads.get_mut(&self.name("gru.wch"))?, &dac, &rh);
            add_rowsums(grads.get_mut(&self.name("gru.bc"))?, &dac);
            let mut drh = Mat::zeros(hid, cols);
            gemm_tn(&mut drh, &wch, &dac);
            let mut dx1 = Mat::zeros(hid, cols);
            gemm_tn(&mut dx1, &wcx, &dac);

            // reset gate
            let mut dar = Mat::zeros(hid, cols);
            for i in 0..hid * cols {
                let drhv = drh.data()[i];
                let rv = r.data()[i];
                let hv = h_prev.data()[i];
                dhp.data_mut()[i] += drhv * rv;
                dar.data_mut()[i] = drhv * hv * rv * (1.0 - rv);
            }
            gemm_nt(grads.get_mut(&self.name("gru.wrx"))?, &dar, x1);
            gemm_nt(grads.get_mut(&self.name("gru.wrh"))?, &dar, h_prev);
            add_rowsums(grads.get_mut(&self.name("gru.br"))?, &dar);
            gemm_tn(&mut dx1, &wrx, &dar);
            gemm_tn(&mut dhp, &wrh, &dar);

            // update gate
            let mut daz = dz;
            for (v, &zv) in daz.data_mut().iter_mut().zip(z.data()) {
                *v *= zv * (1.0 - zv);
            }
            gemm_nt(grads.get_mut(&self.name("gru.wzx"))?, &daz, x1);
            gemm_nt(grads.get_mut(&self.name("gru.wzh"))?, &daz, h_prev);
            add_rowsums(grads.get_mut(&self.name("gru.bz"))?, &daz);
            gemm_tn(&mut dx1, &wzx, &daz);
            gemm_tn(&mut dhp, &wzh, &daz);

            // input layer (relu)
            for (v, &xv) in dx1.data_mut().iter_mut().zip(x1.data()) {
                if xv <= 0.0 {
                    *v = 0.0;
                }
            }
            gemm_nt(grads.get_mut(&self.name("dense1.w"))?, &dx1, &tape.obs[t]);
            add_rowsums(grads.get_mut(&self.name("dense1.b"))?, &dx1);

            dh_carry = dhp;
        }
        Ok(())
    }
}

fn add_rowsums(grad: &mut Mat, m: &Mat) {
    let mut buf = vec![0.0; m.rows()];
    row_sums_into(m, &mut buf);
    for (o, v) in grad.data_mut().iter_mut().zip(buf) {
        *o += v;
    }
}

/// Map Q values onto the probability simplex over available actions.
pub fn phi(q: &[f64], avail: &[bool], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
    }
    if temperature == 1.0 {
        return softmax_masked(q, avail);
    }
    let scaled: Vec<f64> = q.iter().map(|v| v / temperature).collect();
    softmax_masked(&scaled, avail)
}

/// Greedy argmax over available actions with lowest-index tie-breaking.
pub fn greedy_action(q: &[f64], avail: &[bool]) -> usize {
    let mut best = usize::MAX;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..q.len() {
        if avail[i] && q[i] > best_v {
            best_v = q[i];
            best = i;
        }
    }
    best
}

/// Epsilon-greedy: explore uniformly over available actions with
/// probability epsilon, otherwise take the greedy action.
pub fn select_action(q: &[f64], avail: &[bool], epsilon: f64, rng: &mut impl Rng) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        let available: Vec<usize> = (0..q.len()).filter(|&i| avail[i]).collect();
        available[rng.gen_range(0..available.len())]
    } else {
        greedy_action(q, avail)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_steps: u64,
}

/// Linear ramp from start to end over anneal_steps, clamped afterwards.
pub fn epsilon_at(step: u64, schedule: &EpsilonSchedule) -> f64 {
    if step >= schedule.anneal_steps {
        return schedule.end;
    }
    let frac = step as f64 / schedule.anneal_steps as f64;
    schedule.start + (schedule.end - schedule.start) * frac
}
