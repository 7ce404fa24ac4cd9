//! Synthetic state sequences and traces drawn from a fitted model.
//!
//! A segment starts in state `i`, draws its extra stay `k ~ Poisson(λ_i)`,
//! occupies `k + 1` GOPs (cut short at the end of the trace) and then jumps
//! according to the transition matrix. Each GOP of the segment draws one bin
//! per position from `b_{i,f}` and emits that bin's midpoint, rounded to
//! whole bytes.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::model::{validate_params, GopStructure, GopVector, PHmmParams, Trace};
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub state: usize,
    pub start: usize,
    pub len: usize,
    /// The sampled stay did not fit before the end of the trace.
    pub truncated: bool,
}

/// Inverse-CDF draw from a discrete distribution.
pub(crate) fn sample_index(weights: &[f64], rng: &mut SimRng) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // u landed on the rounding slack: last index with positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn sample_stay(lambda: f64, rng: &mut SimRng) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    let d = Poisson::new(lambda).expect("positive finite mean");
    d.sample(rng) as usize
}

fn segments_with(params: &PHmmParams, len: usize, rng: &mut SimRng) -> Vec<Segment> {
    let ns = params.num_states();
    let mut out = Vec::new();
    let mut state = sample_index(&params.pi, rng);
    let mut n = 0;
    while n < len {
        let k = sample_stay(params.lambda[state], rng);
        let truncated = n + k >= len;
        let k = if truncated { len - n - 1 } else { k };
        out.push(Segment {
            state,
            start: n,
            len: k + 1,
            truncated,
        });
        n += k + 1;
        if ns > 1 {
            state = sample_index(&params.trans[state], rng);
        }
    }
    out
}

/// Segment list of a synthetic state sequence of `len` GOPs.
pub fn generate_segments(params: &PHmmParams, len: usize, seed: u64) -> Result<Vec<Segment>> {
    validate_params(params).map_err(Error::InvalidParams)?;
    if len == 0 {
        return Err(Error::InvalidArgument("need at least one GOP".into()));
    }
    Ok(segments_with(params, len, &mut rng::stream(seed, 0)))
}

pub fn generate_states(params: &PHmmParams, len: usize, seed: u64) -> Result<Vec<usize>> {
    let segs = generate_segments(params, len, seed)?;
    let mut states = Vec::with_capacity(len);
    for s in &segs {
        states.extend(std::iter::repeat_n(s.state, s.len));
    }
    Ok(states)
}

/// Emitted size for a bin: the bin midpoint rounded to whole bytes.
pub fn emitted_size(params: &PHmmParams, pos: usize, bin: usize) -> u64 {
    params.grid.range(pos).midpoint(bin).round().max(0.0) as u64
}

/// Synthetic trace of `len` GOPs.
pub fn generate_trace(
    params: &PHmmParams,
    structure: &GopStructure,
    len: usize,
    seed: u64,
) -> Result<Trace> {
    params.grid.check_structure(structure)?;
    let states = generate_states(params, len, seed)?;
    let mut r = rng::stream(seed, 1);
    let nf = structure.frames_per_gop();
    let gops = states
        .iter()
        .map(|&i| {
            GopVector(
                (0..nf)
                    .map(|f| {
                        let b = sample_index(&params.emissions[i][f], &mut r);
                        emitted_size(params, f, b)
                    })
                    .collect(),
            )
        })
        .collect();
    Trace::new(structure.clone(), gops)
}
