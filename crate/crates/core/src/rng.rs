//! Seed derivation. All randomness flows from one root seed through named
//! streams so that results never depend on thread scheduling or call order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step; a small, stable mixing function we fully control so that
/// derived seeds never change across library or compiler upgrades.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over bytes, used to fold stream labels into seed material.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xCBF2_9CE4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// Derive a child seed from a root seed, a stream label, and an ordinal.
pub fn derive_seed(root: u64, stream: &str, ordinal: u64) -> u64 {
    let mut s = splitmix64(root ^ fnv1a(stream.as_bytes()));
    s = splitmix64(s ^ ordinal);
    splitmix64(s)
}

/// Deterministic RNG for a named stream.
pub fn stream_rng(root: u64, stream: &str, ordinal: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, stream, ordinal))
}

/// Stable 64-bit hash of a string, for content-addressed derivations
/// (e.g. picking a verb per mixture id).
pub fn stable_hash(text: &str) -> u64 {
    splitmix64(fnv1a(text.as_bytes()))
}
