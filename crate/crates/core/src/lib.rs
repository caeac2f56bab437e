//! Offline calibrated-recommendation pipeline.
//!
//! Recommender outputs are post-processed into genre-calibrated top-N lists by greedily
//! maximizing a relevance/miscalibration trade-off. Every system combination is then scored
//! with MAP, MACE and MRMC, and a coefficient-based protocol picks the best one.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{} vs {} (tol {})", a, b, $tol);
    }};
}

pub mod calib;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod protocol;
pub mod recommend;
pub mod seed;
pub mod selector;

pub use error::{Error, Result};
