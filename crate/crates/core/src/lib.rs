//! Compressed-domain video activity analysis.
//!
//! The crate treats a video encoder as a spatio-temporal activity sensor:
//!
//! - [`codec`] — a minimal motion-compensated codec whose MVB1 bitstream keeps
//!   motion vectors separable from texture residuals;
//! - [`sensor`] — motion-vector extraction without texture decode, activity
//!   maps, and selective macroblock decoding with rendered frames;
//! - [`datagen`] — synthetic labeled corpora with ground-truth optical flow;
//! - [`pipeline`] — assembly of the temporal 4D and spatial RGB network inputs;
//! - [`nn`] — a from-scratch differentiable tensor engine and SGD trainer;
//! - [`metrics`] — end-point error, SSIM, throughput benchmarks and the cloud
//!   cost model;
//! - [`eval`] — the two-stream inference protocol, score fusion and rater
//!   agreement analysis.

pub mod codec;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod sensor;
pub mod svg;
pub mod tensor;
pub mod video;

pub use error::{Error, Result};
