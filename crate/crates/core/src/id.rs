//! Opaque identifiers and per-key random streams.
//!
//! Error ids must not reveal where an error came from (the rater-facing task
//! payload carries them verbatim), so every generated id is a hash of its
//! provenance rather than the provenance itself.

use alloc::format;
use alloc::string::String;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over `parts`, with a separator byte between parts so that
/// `["ab", "c"]` and `["a", "bc"]` hash differently.
pub fn fnv1a(parts: &[&str]) -> u64 {
    let mut hash = FNV_OFFSET;
    for part in parts {
        for byte in part.bytes() {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(FNV_PRIME);
        }
        hash ^= 0xff;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    // final avalanche (splitmix64 finalizer); plain FNV leaves low bits weak
    hash ^= hash >> 30;
    hash = hash.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    hash ^= hash >> 27;
    hash = hash.wrapping_mul(0x94d0_49bb_1331_11eb);
    hash ^ (hash >> 31)
}

/// A 16-hex-digit id prefixed with `e`, derived from `parts`.
pub fn opaque_id(parts: &[&str]) -> String {
    format!("e{:016x}", fnv1a(parts))
}

/// Independent deterministic RNG stream for one `(seed, key)` combination.
pub fn keyed_rng(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(parts))
}
