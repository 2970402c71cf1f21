//! Seedable, splittable randomness.
//!
//! Every protocol participant draws from its own ChaCha stream derived from a
//! master seed and a label path, so simulations replay bit-for-bit while the
//! streams stay independent of each other.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type ProtocolRng = ChaCha20Rng;

/// Derives an independent generator from `seed` and a label path.
pub fn derive(seed: u64, labels: &[u64]) -> ProtocolRng {
    let mut h = Sha256::new();
    h.update(b"ofw-rng");
    h.update(seed.to_le_bytes());
    for l in labels {
        h.update(l.to_le_bytes());
    }
    let out: [u8; 32] = h.finalize().into();
    ChaCha20Rng::from_seed(out)
}

pub fn from_seed(seed: u64) -> ProtocolRng {
    derive(seed, &[])
}

/// OS entropy, for deployments that are not replaying a simulation.
pub fn from_entropy() -> ProtocolRng {
    ChaCha20Rng::from_entropy()
}
