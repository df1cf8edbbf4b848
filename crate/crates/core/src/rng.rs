//! Deterministic random streams.
//!
//! A stream is identified by `(seed, domain, index, attempt)`. The seed and
//! domain fill the ChaCha key, the index selects the ChaCha stream and the
//! attempt is folded into the key, so two distinct identifiers never share
//! keystream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which consumer owns a stream. Keeps data generation and bootstrap
/// resampling from ever drawing the same numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Generate = 1,
    Bootstrap = 2,
}

/// Random stream for replicate `index` of `domain` under `seed`.
pub fn stream(seed: u64, domain: Domain, index: u64, attempt: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    key[16..24].copy_from_slice(&attempt.to_le_bytes());
    key[24..].copy_from_slice(b"mediate\0");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// SplitMix64 finaliser; used to derive child seeds (e.g. the bootstrap seed
/// of one simulation replicate) from a parent seed and an index.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    let mut z = parent ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
