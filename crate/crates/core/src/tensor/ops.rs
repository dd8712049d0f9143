//! Single-vector network operations and finite-difference verification.
//!
//! These are the reference implementations of the layer math. The batched
//! training path in `agent` uses the same formulas over matrices; tests pin
//! the two against each other.

use crate::error::{Error, Result};
use crate::tensor::mat::Mat;
use crate::tensor::params::{Gradients, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// y = activation(weight * input + bias), weight is out x in.
pub fn dense_forward(
    input: &[f64],
    weight: &Mat,
    bias: &[f64],
    activation: Activation,
) -> Result<Vec<f64>> {
    if weight.cols() != input.len() {
        return Err(Error::Config(format!(
            "dense: weight is {}x{} but input has length {}",
            weight.rows(),
            weight.cols(),
            input.len()
        )));
    }
    if weight.rows() != bias.len() {
        return Err(Error::Config(format!(
            "dense: weight has {} rows but bias has length {}",
            weight.rows(),
            bias.len()
        )));
    }
    let mut out = Vec::with_capacity(weight.rows());
    for i in 0..weight.rows() {
        let row = weight.row(i);
        let mut s = bias[i];
        for (w, x) in row.iter().zip(input) {
            s += w * x;
        }
        out.push(activation.apply(s));
    }
    Ok(out)
}

/// Weight views for one gated recurrent cell. Each gate applies
/// `W_x * x + W_h * h + b`, equivalent to a single matrix over `[x; h]`.
pub struct GruWeights<'a> {
    pub wzx: &'a Mat,
    pub wzh: &'a Mat,
    pub bz: &'a [f64],
    pub wrx: &'a Mat,
    pub wrh: &'a Mat,
    pub br: &'a [f64],
    pub wcx: &'a Mat,
    pub wch: &'a Mat,
    pub bc: &'a [f64],
}

/// One recurrent step:
///   z = sigmoid(Wz [x; h] + bz)
///   r = sigmoid(Wr [x; h] + br)
///   c = tanh(Wc [x; r .* h] + bc)
///   h' = (1 - z) .* h + z .* c
pub fn gru_step(x: &[f64], h: &[f64], w: &GruWeights<'_>) -> Result<Vec<f64>> {
    let hidden = h.len();
    for (name, m, rows, cols) in [
        ("wzx", w.wzx, hidden, x.len()),
        ("wzh", w.wzh, hidden, hidden),
        ("wrx", w.wrx, hidden, x.len()),
        ("wrh", w.wrh, hidden, hidden),
        ("wcx", w.wcx, hidden, x.len()),
        ("wch", w.wch, hidden, hidden),
    ] {
        if m.shape() != (rows, cols) {
            return Err(Error::Config(format!(
                "gru: {name} has shape {:?}, expected {:?}",
                m.shape(),
                (rows, cols)
            )));
        }
    }
    if w.bz.len() != hidden || w.br.len() != hidden || w.bc.len() != hidden {
        return Err(Error::Config("gru: bias length mismatch".into()));
    }

    let gate = |wx: &Mat, wh: &Mat, b: &[f64], hvec: &[f64]| -> Vec<f64> {
        (0..hidden)
            .map(|i| {
                let mut s = b[i];
                for (wv, xv) in wx.row(i).iter().zip(x) {
                    s += wv * xv;
                }
                for (wv, hv) in wh.row(i).iter().zip(hvec) {
                    s += wv * hv;
                }
                s
            })
            .collect()
    };

    let z: Vec<f64> = gate(w.wzx, w.wzh, w.bz, h).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = gate(w.wrx, w.wrh, w.br, h).into_iter().map(sigmoid).collect();
    let rh: Vec<f64> = r.iter().zip(h).map(|(rv, hv)| rv * hv).collect();
    let c: Vec<f64> = gate(w.wcx, w.wch, w.bc, &rh).into_iter().map(f64::tanh).collect();
    Ok((0..hidden).map(|i| (1.0 - z[i]) * h[i] + z[i] * c[i]).collect())
}

/// Numerically stable softmax restricted to positions where `mask` is true.
/// Masked-out entries are exactly zero.
pub fn softmax_masked(values: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if values.len() != mask.len() {
        return Err(Error::Config(format!(
            "softmax: {} values but {} mask entries",
            values.len(),
            mask.len()
        )));
    }
    let max = values
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::InvalidInput("softmax over an all-false mask".into()));
    }
    let mut out = vec![0.0; values.len()];
    let mut sum = 0.0;
    for i in 0..values.len() {
        if mask[i] {
            let e = (values[i] - max).exp();
            out[i] = e;
            sum += e;
        }
    }
    for v in &mut out {
        *v /= sum;
    }
    Ok(out)
}

/// Compare an analytic gradient against central finite differences of a
/// scalar function of the parameters. Returns the maximum over all scalar
/// parameters of |analytic - numeric| / max(1, |analytic|, |numeric|).
pub fn grad_check<F>(
    mut f: F,
    params: &mut ParamStore,
    analytic: &Gradients,
    eps: f64,
) -> f64
where
    F: FnMut(&ParamStore) -> f64,
{
    let names: Vec<String> = params.names().map(|s| s.to_string()).collect();
    let mut worst = 0.0_f64;
    for name in &names {
        let len = params.get(name).unwrap().data().len();
        for idx in 0..len {
            let orig = params.get(name).unwrap().data()[idx];
            params.get_mut(name).unwrap().data_mut()[idx] = orig + eps;
            let plus = f(params);
            params.get_mut(name).unwrap().data_mut()[idx] = orig - eps;
            let minus = f(params);
            params.get_mut(name).unwrap().data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = match analytic.get(name) {
                Ok(m) => m.data()[idx],
                Err(_) => 0.0,
            };
            let denom = 1.0_f64.max(a.abs()).max(numeric.abs());
            let rel = (a - numeric).abs() / denom;
            if rel > worst {
                worst = rel;
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_identity_case() {
        let w = Mat::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let out = dense_forward(&[1.0, 0.0], &w, &[0.0, 0.0], Activation::Identity).unwrap();
        assert_eq!(out, vec![1.0, 0.0]);
    }

    #[test]
    fn dense_zero_weight_relu() {
        let w = Mat::zeros(2, 2);
        let out = dense_forward(&[3.0, -2.0], &w, &[0.5, -0.5], Activation::Relu).unwrap();
        assert_eq!(out, vec![0.5, 0.0]);
    }

    #[test]
    fn dense_random_matches_straight_line_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = Mat::from_fn(3, 4, |_, _| rng.gen_range(-1.0..1.0));
        let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = dense_forward(&x, &w, &b, Activation::Tanh).unwrap();
        for i in 0..3 {
            let mut s = b[i];
            for j in 0..4 {
                s += w.at(i, j) * x[j];
            }
            assert!((got[i] - s.tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_dimension_mismatch() {
        let w = Mat::zeros(2, 3);
        assert!(dense_forward(&[1.0, 2.0], &w, &[0.0, 0.0], Activation::Identity).is_err());
        assert!(dense_forward(&[1.0, 2.0, 3.0], &w, &[0.0], Activation::Identity).is_err());
    }

    fn zero_gru(input: usize, hidden: usize) -> (Mat, Mat, Vec<f64>, Mat, Mat, Vec<f64>, Mat, Mat, Vec<f64>) {
        (
            Mat::zeros(hidden, input),
            Mat::zeros(hidden, hidden),
            vec![0.0; hidden],
            Mat::zeros(hidden, input),
            Mat::zeros(hidden, hidden),
            vec![0.0; hidden],
            Mat::zeros(hidden, input),
            Mat::zeros(hidden, hidden),
            vec![0.0; hidden],
        )
    }

    #[test]
    fn gru_zero_params_halves_hidden() {
        let (wzx, wzh, bz, wrx, wrh, br, wcx, wch, bc) = zero_gru(2, 2);
        let w = GruWeights { wzx: &wzx, wzh: &wzh, bz: &bz, wrx: &wrx, wrh: &wrh, br: &br, wcx: &wcx, wch: &wch, bc: &bc };
        // z = 0.5, c = 0, so h' = 0.5 h
        let h = gru_step(&[0.0, 0.0], &[0.8, -0.4], &w).unwrap();
        assert!((h[0] - 0.4).abs() < 1e-15);
        assert!((h[1] + 0.2).abs() < 1e-15);

        let h0 = gru_step(&[0.0, 0.0], &[0.0, 0.0], &w).unwrap();
        assert_eq!(h0, vec![0.0, 0.0]);
    }

    #[test]
    fn gru_random_matches_straight_line_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (input, hidden) = (3, 4);
        let mut m = |r: usize, c: usize| Mat::from_fn(r, c, |_, _| rng.gen_range(-0.9..0.9));
        let wzx = m(hidden, input);
        let wzh = m(hidden, hidden);
        let wrx = m(hidden, input);
        let wrh = m(hidden, hidden);
        let wcx = m(hidden, input);
        let wch = m(hidden, hidden);
        let mut rng2 = ChaCha8Rng::seed_from_u64(12);
        let mut v = |n: usize| -> Vec<f64> { (0..n).map(|_| rng2.gen_range(-0.5..0.5)).collect() };
        let bz = v(hidden);
        let br = v(hidden);
        let bc = v(hidden);
        let x = v(input);
        let h = v(hidden);

        let w = GruWeights { wzx: &wzx, wzh: &wzh, bz: &bz, wrx: &wrx, wrh: &wrh, br: &br, wcx: &wcx, wch: &wch, bc: &bc };
        let got = gru_step(&x, &h, &w).unwrap();

        // Independent recomputation, scalar by scalar.
        for i in 0..hidden {
            let mut az = bz[i];
            let mut ar = br[i];
            for j in 0..input {
                az += wzx.at(i, j) * x[j];
                ar += wrx.at(i, j) * x[j];
            }
            for j in 0..hidden {
                az += wzh.at(i, j) * h[j];
                ar += wrh.at(i, j) * h[j];
            }
            let z = 1.0 / (1.0 + (-az).exp());
            let _ = ar;
            let mut ac = bc[i];
            for j in 0..input {
                ac += wcx.at(i, j) * x[j];
            }
            for j in 0..hidden {
                let mut arj = br[j];
                for k in 0..input {
                    arj += wrx.at(j, k) * x[k];
                }
                for k in 0..hidden {
                    arj += wrh.at(j, k) * h[k];
                }
                let rj = 1.0 / (1.0 + (-arj).exp());
                ac += wch.at(i, j) * (rj * h[j]);
            }
            let c = ac.tanh();
            let want = (1.0 - z) * h[i] + z * c;
            assert!((got[i] - want).abs() < 1e-12, "component {i}");
        }
    }

    #[test]
    fn softmax_cases() {
        let u = softmax_masked(&[5.0, 5.0, 5.0], &[true, true, true]).unwrap();
        for v in &u {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }

        let single = softmax_masked(&[9.0, -3.0], &[false, true]).unwrap();
        assert_eq!(single, vec![0.0, 1.0]);

        let two = softmax_masked(&[1.0, 2.0], &[true, true]).unwrap();
        let e = std::f64::consts::E;
        assert!((two[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((two[1] - e / (1.0 + e)).abs() < 1e-15);

        assert!(matches!(
            softmax_masked(&[1.0], &[false]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn softmax_is_probability_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.gen_range(1..8);
            let vals: Vec<f64> = (0..n).map(|_| rng.gen_range(-40.0..40.0)).collect();
            let mut mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.6)).collect();
            if !mask.iter().any(|&m| m) {
                mask[0] = true;
            }
            let p = softmax_masked(&vals, &mask).unwrap();
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
            for (v, m) in p.iter().zip(&mask) {
                assert!(*v >= 0.0);
                if !m {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn grad_check_square_and_constant() {
        let mut params = ParamStore::new();
        params.insert("p", Mat::from_vec(1, 1, vec![3.0]).unwrap()).unwrap();
        let mut analytic = Gradients::zeros_like(&params);
        analytic.get_mut("p").unwrap().data_mut()[0] = 6.0;
        let err = grad_check(
            |ps: &ParamStore| {
                let p = ps.get("p").unwrap().data()[0];
                p * p
            },
            &mut params,
            &analytic,
            1e-5,
        );
        assert!(err <= 1e-9, "f(p)=p^2 gradient error {err}");

        let mut analytic0 = Gradients::zeros_like(&params);
        analytic0.get_mut("p").unwrap().data_mut()[0] = 0.0;
        let err0 = grad_check(|_| 1.0, &mut params, &analytic0, 1e-5);
        assert_eq!(err0, 0.0);
    }

    #[test]
    fn grad_check_two_layer_network() {
        // A 2-layer tanh network with a squared-error head, gradients derived
        // by hand, then verified against central differences.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (din, dh) = (3, 4);
        let mut params = ParamStore::new();
        params
            .insert("w1", Mat::from_fn(dh, din, |_, _| rng.gen_range(-0.8..0.8)))
            .unwrap();
        params
            .insert("b1", Mat::from_fn(dh, 1, |_, _| rng.gen_range(-0.2..0.2)))
            .unwrap();
        params
            .insert("w2", Mat::from_fn(1, dh, |_, _| rng.gen_range(-0.8..0.8)))
            .unwrap();
        params.insert("b2", Mat::from_fn(1, 1, |_, _| rng.gen_range(-0.2..0.2))).unwrap();
        let x: Vec<f64> = (0..din).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let target = 0.3;

        let loss = |ps: &ParamStore| -> f64 {
            let h = dense_forward(
                &x,
                ps.get("w1").unwrap(),
                ps.get("b1").unwrap().data(),
                Activation::Tanh,
            )
            .unwrap();
            let y = dense_forward(
                &h,
                ps.get("w2").unwrap(),
                ps.get("b2").unwrap().data(),
                Activation::Identity,
            )
            .unwrap()[0];
            (y - target) * (y - target)
        };

        // Analytic gradients.
        let h_pre: Vec<f64> = (0..dh)
            .map(|i| {
                let mut s = params.get("b1").unwrap().data()[i];
                for j in 0..din {
                    s += params.get("w1").unwrap().at(i, j) * x[j];
                }
                s
            })
            .collect();
        let h: Vec<f64> = h_pre.iter().map(|v| v.tanh()).collect();
        let y = {
            let mut s = params.get("b2").unwrap().data()[0];
            for i in 0..dh {
                s += params.get("w2").unwrap().at(0, i) * h[i];
            }
            s
        };
        let dy = 2.0 * (y - target);
        let mut analytic = Gradients::zeros_like(&params);
        analytic.get_mut("b2").unwrap().data_mut()[0] = dy;
        for i in 0..dh {
            analytic.get_mut("w2").unwrap().data_mut()[i] = dy * h[i];
            let dh_i = dy * params.get("w2").unwrap().at(0, i) * (1.0 - h[i] * h[i]);
            analytic.get_mut("b1").unwrap().data_mut()[i] = dh_i;
            for j in 0..din {
                analytic.get_mut("w1").unwrap().row_mut(i)[j] = dh_i * x[j];
            }
        }

        let err = grad_check(loss, &mut params, &analytic, 1e-5);
        assert!(err <= 1e-4, "network gradient error {err}");
    }
}
