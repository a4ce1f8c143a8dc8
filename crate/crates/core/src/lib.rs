//! Coverage planning and split-face trial simulation for Q-switched laser toning.
//!
//! The pipeline runs surface → region → plan (robot lattice or simulated freehand
//! pass) → raster coverage scoring → paired trial statistics.

// `!(a <= b)` is used on purpose so that NaN falls into the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coverage;
pub mod geometry;
pub mod operator_sim;
pub mod par;
pub mod planner;
pub mod surface;
pub mod trial;

pub use par::Execution;

/// Pretty JSON with a trailing newline; the on-disk form of every JSON artifact.
pub fn artifact_json<T: serde::Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact types serialize infallibly");
    s.push('\n');
    s
}
