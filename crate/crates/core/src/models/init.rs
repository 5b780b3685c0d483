//! Weight initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{el, Element, Tensor};

/// Glorot-uniform tensor: U(-lim, lim) with lim = sqrt(6 / (fan_in + fan_out)).
pub fn glorot<R: Element>(
    rng: &mut ChaCha8Rng,
    fan_in: usize,
    fan_out: usize,
    shape: &[usize],
) -> Tensor<R> {
    let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| el::<R>(rng.gen_range(-lim..lim))).collect();
    Tensor::from_vec(shape, data).expect("shape matches data")
}
