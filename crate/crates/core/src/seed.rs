//! Stable seed derivation.
//!
//! Every random stream in a run is keyed by the base seed plus a short list of
//! labels (item id, model tag, service level in basis points, ...). The key is
//! hashed with SHA-256, so seeds do not depend on the standard library's
//! hasher, the platform, or the order in which cells are scheduled.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// A single component of a seed key.
#[derive(Debug, Clone, Copy)]
pub enum SeedPart<'a> {
    Str(&'a str),
    Int(u64),
}

impl<'a> From<&'a str> for SeedPart<'a> {
    fn from(s: &'a str) -> Self {
        SeedPart::Str(s)
    }
}

impl From<u64> for SeedPart<'_> {
    fn from(v: u64) -> Self {
        SeedPart::Int(v)
    }
}

/// Derives a 64-bit seed from `base` and `parts`.
pub fn derive_seed(base: u64, parts: &[SeedPart<'_>]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"ssdim-seed-v1");
    hasher.update(base.to_le_bytes());
    for part in parts {
        // Tag and length-prefix each part so ("ab","c") != ("a","bc").
        match part {
            SeedPart::Str(s) => {
                hasher.update([0u8]);
                hasher.update((s.len() as u64).to_le_bytes());
                hasher.update(s.as_bytes());
            }
            SeedPart::Int(v) => {
                hasher.update([1u8]);
                hasher.update(v.to_le_bytes());
            }
        }
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Builds the generator used for every stream in the crate.
pub fn rng_from(base: u64, parts: &[SeedPart<'_>]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, parts))
}

/// Service level expressed in basis points, used as a seed label.
pub fn basis_points(alpha: f64) -> u64 {
    (alpha * 10_000.0).round().max(0.0) as u64
}
