//! Minimal differentiable-computation substrate: dense matrices, layer
//! primitives, parameter storage with an RMSProp optimizer, and
//! finite-difference gradient verification.

pub mod mat;
pub mod ops;
pub mod params;

pub use mat::Mat;
pub use ops::{dense_forward, grad_check, gru_step, sigmoid, softmax_masked, Activation, GruWeights};
pub use params::{Gradients, ParamStore};

use rand::Rng;

/// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
pub fn init_uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> Mat {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Mat::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound))
}
