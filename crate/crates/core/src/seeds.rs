//! Seed derivation. Every random stream in a run descends from one user seed:
//! the stream for a named component is the first eight bytes (little endian)
//! of SHA-256 over the parent seed's little-endian bytes followed by the
//! component label.

use sha2::{Digest, Sha256};

pub fn derive(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().unwrap())
}

/// Indexed child stream, e.g. per fold or per episode.
pub fn derive_indexed(seed: u64, label: &str, index: u64) -> u64 {
    derive(derive(seed, label), &index.to_string())
}
