//! Value-decomposition heads. `vdn_mix` sums per-agent chosen Q values;
//! the monotonic mixer feeds them through a state-conditioned hypernetwork
//! whose mixing weights are forced nonnegative by absolute value, so the
//! joint value never decreases when any agent's utility rises.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::mat::{add_col_broadcast, gemm_nn, gemm_nt, gemm_tn, row_sums_into, Mat};
use crate::tensor::params::{Gradients, ParamStore};
use crate::tensor::init_uniform;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixerKind {
    Vdn,
    Qmix,
}

/// Additive mixing: Q_tot is exactly the sum of per-agent values.
pub fn vdn_mix(qs: &[f64]) -> f64 {
    qs.iter().sum()
}

#[derive(Debug, Clone, Copy)]
pub struct QmixDims {
    pub n_agents: usize,
    pub state_dim: usize,
    pub embed: usize,
}

#[derive(Debug, Clone)]
pub struct QmixNet {
    prefix: String,
    dims: QmixDims,
}

/// Intermediates for one batched mixing pass.
pub struct QmixTape {
    w1raw: Mat,
    hidden: Mat,
    w2raw: Mat,
    v1: Mat,
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

impl QmixNet {
    pub fn new(prefix: &str, dims: QmixDims) -> Self {
        QmixNet { prefix: prefix.to_string(), dims }
    }

    pub fn dims(&self) -> QmixDims {
        self.dims
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{}", self.prefix, part)
    }

    pub fn init_params(&self, store: &mut ParamStore, rng: &mut impl Rng) -> Result<()> {
        let QmixDims { n_agents, state_dim, embed } = self.dims;
        let layers = [
            ("hyper_w1", n_agents * embed, state_dim),
            ("hyper_b1", embed, state_dim),
            ("hyper_w2", embed, state_dim),
            ("hyper_v1", embed, state_dim),
        ];
        for (layer, rows, cols) in layers {
            store.insert(&self.name(&format!("{layer}.w")), init_uniform(rows, cols, cols, rng))?;
            store.insert(&self.name(&format!("{layer}.b")), init_uniform(rows, 1, cols, rng))?;
        }
        store.insert(&self.name("hyper_v2.w"), init_uniform(1, embed, embed, rng))?;
        store.insert(&self.name("hyper_v2.b"), init_uniform(1, 1, embed, rng))?;
        Ok(())
    }

    fn linear(&self, params: &ParamStore, layer: &str, input: &Mat) -> Result<Mat> {
        let w = params.get(&self.name(&format!("{layer}.w")))?;
        let b = params.get(&self.name(&format!("{layer}.b")))?;
        if w.cols() != input.rows() {
            return Err(Error::Config(format!(
                "mixer {layer}: weight expects input of length {}, got {}",
                w.cols(),
                input.rows()
            )));
        }
        let mut out = Mat::zeros(w.rows(), input.cols());
        gemm_nn(&mut out, w, input);
        add_col_broadcast(&mut out, b.data());
        Ok(out)
    }

    /// Mix a batch: `qs` is n_agents x B, `states` is state_dim x B.
    /// Returns per-column Q_tot and the tape for backward.
    pub fn forward_batch(
        &self,
        params: &ParamStore,
        qs: &Mat,
        states: &Mat,
    ) -> Result<(Vec<f64>, QmixTape)> {
        let QmixDims { n_agents, embed, .. } = self.dims;
        if qs.rows() != n_agents {
            return Err(Error::Config(format!(
                "mixer got {} agent values, expected {n_agents}",
                qs.rows()
            )));
        }
        let batch = qs.cols();
        let w1raw = self.linear(params, "hyper_w1", states)?;
        let b1 = self.linear(params, "hyper_b1", states)?;
        let w2raw = self.linear(params, "hyper_w2", states)?;
        let mut v1 = self.linear(params, "hyper_v1", states)?;
        for v in v1.data_mut() {
            *v = v.max(0.0);
        }
        let v = self.linear(params, "hyper_v2", &v1)?;

        let mut hidden = Mat::zeros(embed, batch);
        for b in 0..batch {
            for e in 0..embed {
                let mut s = b1.at(e, b);
                for i in 0..n_agents {
                    s += w1raw.at(i * embed + e, b).abs() * qs.at(i, b);
                }
                hidden.set(e, b, elu(s));
            }
        }
        let mut qtot = Vec::with_capacity(batch);
        for b in 0..batch {
            let mut s = v.at(0, b);
            for e in 0..embed {
                s += w2raw.at(e, b).abs() * hidden.at(e, b);
            }
            qtot.push(s);
        }
        Ok((qtot, QmixTape { w1raw, hidden, w2raw, v1 }))
    }

    /// Backward for one batched pass: fills `dqs` (n x B, accumulated) and
    /// the hypernetwork parameter gradients.
    pub fn backward_batch(
        &self,
        params: &ParamStore,
        tape: &QmixTape,
        qs: &Mat,
        states: &Mat,
        dqtot: &[f64],
        grads: &mut Gradients,
        dqs: &mut Mat,
    ) -> Result<()> {
        let QmixDims { n_agents, embed, .. } = self.dims;
        let batch = qs.cols();

        let mut dv = Mat::zeros(1, batch);
        let mut dw2raw = Mat::zeros(embed, batch);
        let mut dpre = Mat::zeros(embed, batch);
        let mut dw1raw = Mat::zeros(n_agents * embed, batch);

        for b in 0..batch {
            let g = dqtot[b];
            dv.set(0, b, g);
            for e in 0..embed {
                let hid = tape.hidden.at(e, b);
                dw2raw.set(e, b, g * hid * sign(tape.w2raw.at(e, b)));
                let dhid = g * tape.w2raw.at(e, b).abs();
                let dpre_eb = dhid * if hid > 0.0 { 1.0 } else { hid + 1.0 };
                dpre.set(e, b, dpre_eb);
                for i in 0..n_agents {
                    let w1 = tape.w1raw.at(i * embed + e, b);
                    dw1raw.set(i * embed + e, b, dpre_eb * qs.at(i, b) * sign(w1));
                    let cur = dqs.at(i, b);
                    dqs.set(i, b, cur + w1.abs() * dpre_eb);
                }
            }
        }

        // value head: v2 then v1 through the relu
        gemm_nt(grads.get_mut(&self.name("hyper_v2.w"))?, &dv, &tape.v1);
        add_rowsums(grads.get_mut(&self.name("hyper_v2.b"))?, &dv);
        let mut dv1 = Mat::zeros(embed, batch);
        gemm_tn(&mut dv1, params.get(&self.name("hyper_v2.w"))?, &dv);
        for (v, &x) in dv1.data_mut().iter_mut().zip(tape.v1.data()) {
            if x <= 0.0 {
                *v = 0.0;
            }
        }

        for (layer, d) in [
            ("hyper_w1", &dw1raw),
            ("hyper_b1", &dpre),
            ("hyper_w2", &dw2raw),
            ("hyper_v1", &dv1),
        ] {
            gemm_nt(grads.get_mut(&self.name(&format!("{layer}.w")))?, d, states);
            add_rowsums(grads.get_mut(&self.name(&format!("{layer}.b")))?, d);
        }
        Ok(())
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn add_rowsums(grad: &mut Mat, m: &Mat) {
    let mut buf = vec![0.0; m.rows()];
    row_sums_into(m, &mut buf);
    for (o, v) in grad.data_mut().iter_mut().zip(buf) {
        *o += v;
    }
}

/// Single-sample monotonic mix, the contract-level entry point.
pub fn qmix_mix(qs: &[f64], state: &[f64], net: &QmixNet, params: &ParamStore) -> Result<f64> {
    let qm = Mat::from_vec(qs.len(), 1, qs.to_vec())?;
    let sm = Mat::from_vec(state.len(), 1, state.to_vec())?;
    let (qtot, _) = net.forward_batch(params, &qm, &sm)?;
    Ok(qtot[0])
}
