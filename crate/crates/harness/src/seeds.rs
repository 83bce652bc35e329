//! Counter-based seed derivation.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The `counter`-th output (0-based) of a SplitMix64 stream started at
/// `master`, shifted right by one bit so that it fits a TOML integer.
/// Depends only on the pair, never on scheduling order.
pub fn derive_seed(master: u64, counter: u64) -> u64 {
    mix64(master.wrapping_add(counter.wrapping_add(1).wrapping_mul(GAMMA))) >> 1
}
