//! Master-equation model of hashtag popularity.
//!
//! A community of `N` users shoots messages carrying a hashtag at a per-user
//! rate `w(t)`; every shoot adds the sender's follower count to the read
//! count `X(t)`. This crate provides the moments of `X(t)`, three independent
//! simulators of the process, a gamma-kernel fit of `w(t)` from tweet records
//! and a pipeline that checks observed reads against the model's band.

// `!(x > 0.0)` style guards are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod fitting;
pub mod model;
pub mod moments;
pub mod output;
pub mod pipeline;
pub mod simulator;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use model::{DegreeDistribution, NetworkParams, PopularitySpec, TimeSeries, TweetRecord};
