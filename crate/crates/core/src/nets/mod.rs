//! Small MLPs with hand-written backpropagation, Fourier features and Adam.

mod adam;
mod mlp;

use serde::{Deserialize, Serialize};

use crate::Real;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use mlp::{Layer, Mlp, MlpCache, LEAKY_SLOPE};

/// Input encoding of a conditioned network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub n_frequencies: usize,
    pub embed_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { n_frequencies: 6, embed_dim: 16 }
    }
}

/// Length of `fourier_encode` output for a `dim`-vector.
pub fn fourier_dim(dim: usize, n_freq: usize) -> usize {
    dim * (1 + 2 * n_freq)
}

/// Appends `x` followed by `sin(2^j π x)` then `cos(2^j π x)` for
/// `j = 0..n_freq`, each block covering every component of `x`.
pub fn fourier_encode<T: Real>(x: &[T], n_freq: usize, out: &mut Vec<T>) {
    out.extend_from_slice(x);
    let pi = T::lit(std::f64::consts::PI);
    for j in 0..n_freq {
        let f = T::lit((1u64 << j) as f64) * pi;
        out.extend(x.iter().map(|&v| (f * v).sin()));
        out.extend(x.iter().map(|&v| (f * v).cos()));
    }
}
