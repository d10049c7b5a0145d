//! Deterministic random substreams.
//!
//! Every frame (or Monte Carlo sample) gets its own ChaCha stream derived
//! from `(seed, index)`, so results do not depend on how work is split
//! across threads.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as SubstreamRng;

/// Generator for substream `index` of the run identified by `seed`.
pub fn substream(seed: u64, index: u64) -> SubstreamRng {
    let mut rng = SubstreamRng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
