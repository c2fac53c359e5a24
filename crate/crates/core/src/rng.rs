//! Seed splitting. Every random stream in a run is derived from one user seed
//! and a role label, so streams never overlap and can be regenerated alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// First 8 bytes (little endian) of `SHA-256("<seed>/<label>")`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let digest = Sha256::digest(format!("{seed}/{label}").as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stream(seed: u64, label: &str) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label))
}
