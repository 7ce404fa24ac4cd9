//! Explicit-duration Poisson hidden Markov model for multiview VBR video
//! traffic.
//!
//! A trace is a sequence of GOP vectors (per-frame sizes of every view).
//! Each GOP is emitted by one of a few hidden activity states; a state is
//! held for `k + 1` GOPs with `k ~ Poisson(λ_i)` and then jumps elsewhere.
//! The crate fits such models with a scaled forward-backward EM
//! ([`estimation::fit`]), generates synthetic traces from them
//! ([`synthesis::generate_trace`]), models users switching views
//! ([`viewswitch`]) and simulates sender and playout buffering over a lossy
//! channel ([`netsim`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod estimation;
pub mod exec;
pub mod io;
pub mod model;
pub mod netsim;
pub mod rng;
pub mod stats;
pub mod synthesis;
pub mod trellis;
pub mod viewswitch;

pub use error::{Error, Result};
pub use exec::Exec;
