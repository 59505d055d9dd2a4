//! Derivation of independent, order-free RNG streams from one root seed.
//!
//! Every consumer of randomness (view projection, each identity, each
//! record, the training loop, …) gets its own ChaCha stream keyed by
//! (root seed, tag, index), so generation order — or parallelism — can
//! never change the data.

pub(crate) const TAG_VIEW_PROJECTION: u64 = 1;
pub(crate) const TAG_IDENTITY: u64 = 2;
pub(crate) const TAG_RECORD: u64 = 3;
pub(crate) const TAG_TRAIN: u64 = 4;
pub(crate) const TAG_SUPERVISED: u64 = 5;
pub(crate) const TAG_ORACLE: u64 = 6;

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn stream_seed(root: u64, tag: u64, index: u64) -> u64 {
    let mut z = root.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = mix64(z ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    mix64(z ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}
