//! Counter-based seed derivation.
//!
//! `derive_seed(master, i) = mix(mix(master) + (i + 1)·γ)` with the
//! SplitMix64 finalizer `mix` and the golden-ratio increment
//! `γ = 0x9e3779b97f4a7c15`. For a fixed master the map `i -> seed` is a
//! bijection, so distinct indices never collide.

/// Golden-ratio increment.
pub const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output finalizer.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of stream `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix(mix(master).wrapping_add(index.wrapping_add(1).wrapping_mul(GAMMA)))
}

/// Stream offsets keeping echo realizations, direct chains and bootstrap
/// resampling apart.
pub const LYAPUNOV_STREAM: u64 = 1 << 62;
pub const BOOTSTRAP_STREAM: u64 = 1 << 63;
pub const SWEEP_STREAM: u64 = 3 << 62;
