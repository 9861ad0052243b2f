//! Minimal neural-network toolkit on top of candle: seeded parameter
//! initialization, the handful of layers the models need, Adam with
//! serializable state, and the checkpoint container.

mod adam;
mod checkpoint;
mod layers;
mod ops;
mod params;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, ModelKind, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use layers::{Conv1d, ConvStack, Embedding, LayerNorm, Linear};
pub use ops::{
    conv_time_major, global_grad_norm, layer_norm, log_softmax_last, scalar, softmax_last, to_vec1, to_vec2,
};
pub use params::{Init, ParamStore};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG for `(seed, step, stream)`: training draws a fresh
/// generator per step so a resumed run sees the same randomness as an
/// uninterrupted one.
pub fn step_rng(seed: u64, step: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step.wrapping_mul(0x9E37_79B9).wrapping_add(stream));
    rng
}
