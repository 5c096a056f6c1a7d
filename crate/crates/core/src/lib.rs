//! Post-processing of ensemble PV power forecasts: censored-normal EMOS,
//! distributional and quantile neural networks, and forecast verification.

pub mod censored_normal;
pub mod cli;
pub mod dataset;
pub mod drn;
pub mod emos;
pub mod error;
pub mod inference;
pub mod model;
pub mod neural;
pub mod normal;
pub mod report;
pub mod quantile_models;
pub mod scoring;

pub use error::{Error, Result};

/// Deterministic child seed for sub-task `stream` of a run seeded `seed`.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
