//! Biased min-consensus shortest-path estimation under bounded delays,
//! asynchronous updates and weight noise, with trajectory checks for
//! Razumikhin-type ISS inequalities, small-gain certification and the
//! closed-form exponential error bound.
// NaN-rejecting `!(x >= y)` guards and index loops over matrices are intended.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bounds;
pub mod delay_core;
pub mod error;
pub mod exec;
pub mod graph;
pub mod harness;
pub mod protocol;
pub mod rng;
pub mod smallgain;

pub use error::{Error, Result};
pub use graph::{StructuralConstants, WeightedGraph};
pub use protocol::{PerturbationModel, TrajectoryTrace};
