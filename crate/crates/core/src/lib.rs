//! Hardware-aware architecture search for small MLPs: search spaces,
//! synthetic data, a training engine, compression, cost models, NSGA-II and
//! a shared trial journal.

pub mod arch;
pub mod compress;
pub mod config;
pub mod cost;
pub mod data;
pub mod fixed;
pub mod nn;
pub mod search;
pub mod space;
pub mod store;

/// Mix two integers into a well-spread 64-bit seed (splitmix64 finalizer).
pub fn derive_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
