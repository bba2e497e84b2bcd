//! Seed derivation so that nested randomized stages (per-step completions,
//! the two rotations of the dual pipeline) get decorrelated streams from one
//! user-facing seed.

/// SplitMix64 finalizer (Steele, Lea & Flood's standard constants).
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed for stage `salt` of a run seeded with `base`.
pub(crate) fn derive_seed(base: u64, salt: u64) -> u64 {
    splitmix64(base ^ splitmix64(salt))
}
