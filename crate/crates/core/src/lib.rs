//! LT-code based distributed storage for large sensor networks.
//!
//! `k` source nodes scattered over a random geometric graph of `n` nodes
//! disseminate their blocks by simple random walks. Every node folds a random
//! subset of the passing blocks into one XOR storage packet so that querying
//! slightly more than `k` arbitrary nodes recovers all sources with a peeling
//! decoder. Two protocols are provided: one where nodes know `n` and `k`, and
//! one where each node estimates both from random-walk visit timing.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod ltcodec;
pub mod netmodel;
pub mod query;
pub mod seeding;
pub mod soliton;
pub mod walksim;

pub use error::{Error, Result};
