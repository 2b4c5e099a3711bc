//! Named random sub-streams derived from one master seed.
//!
//! A child seed is the first 8 bytes (little endian) of
//! `SHA-256(master_le_u64 || purpose_utf8 || 0x00 || index_le_u64)`; the
//! stream itself is ChaCha8 seeded with that value through
//! `SeedableRng::seed_from_u64`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

pub fn child_seed(master: u64, purpose: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(purpose.as_bytes());
    hasher.update([0u8]);
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}

pub fn stream(master: u64, purpose: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(child_seed(master, purpose, index))
}
