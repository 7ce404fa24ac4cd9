//! Domain types shared by every stage of the pipeline, plus the elementary
//! duration-distribution computations.

mod duration;
mod gop;
mod grid;
mod params;

pub use duration::{
    dotted_duration, poisson_cdf, poisson_ln_pmf, poisson_pmf, poisson_tail, DurationContext,
    DurationTable,
};
pub use gop::{FrameType, GopStructure, GopVector, Trace};
pub use grid::{BinRange, QuantGrid};
pub use params::{validate_params, PHmmParams, Violation, PROB_TOL};
