//! Seed splitting.
//!
//! Every random stream is derived from one parent seed by
//! `derive_seed(parent, stream) = splitmix64(parent + (stream + 1) * 0x9E3779B97F4A7C15)`,
//! with fixed stream identifiers below. Training and evaluation draw their
//! frames and noise from different streams, so they never share a generator
//! state.

/// Stream identifiers passed to [`derive_seed`].
pub mod stream {
    pub const TRAIN: u64 = 1;
    pub const EVAL: u64 = 2;
    pub const FRAME: u64 = 10;
    pub const NOISE: u64 = 11;
    pub const SURROGATE: u64 = 12;
    pub const SHUFFLE: u64 = 13;
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, stream: u64) -> u64 {
    splitmix64(parent.wrapping_add(stream.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// `derive_seed` applied along a path of stream identifiers.
pub fn derive_path(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(parent, |s, &p| derive_seed(s, p))
}
