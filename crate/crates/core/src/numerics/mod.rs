//! Dense tensors and a recorded computation for reverse-mode gradients.

pub mod gradcheck;
mod graph;
mod tensor;

pub use graph::{sigmoid, Gradients, Graph, Unary, Var, LOG_FLOOR};
pub use tensor::Tensor;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Independent random stream for `(seed, stream...)`, so that e.g. the
/// dropout masks of batch 7 in epoch 3 do not depend on what ran before.
pub fn seeded_rng(seed: u64, stream: &[u64]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for s in stream {
        h.update(s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}
