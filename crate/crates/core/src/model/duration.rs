//! Poisson state-duration law.
//!
//! A state entered at GOP `n` stays for `k` additional GOPs (a segment of
//! `k + 1` GOPs) with probability `p(k|i) = e^-λ λ^k / k!`. On a finite trace
//! the last reachable value `k = N - n - 1` absorbs the whole tail
//! `P(K >= k)`, which gives the boundary-corrected law `ṗ(k|i)` used by the
//! trellis.

use statrs::function::factorial::ln_factorial;

use super::params::PHmmParams;
use crate::error::{Error, Result};

pub fn poisson_ln_pmf(k: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -lambda + k as f64 * lambda.ln() - ln_factorial(k)
}

pub fn poisson_pmf(k: u64, lambda: f64) -> f64 {
    poisson_ln_pmf(k, lambda).exp()
}

/// `P(K <= k)`, summed term by term from `k = 0`.
pub fn poisson_cdf(k: u64, lambda: f64) -> f64 {
    let mut acc = 0.0;
    for j in 0..=k {
        acc += poisson_pmf(j, lambda);
    }
    acc
}

/// `P(K >= k) = 1 - P(k - 1)`, with `P(-1) = 0`.
///
/// Past the median the complement loses precision, so the tail is summed
/// upward instead.
pub fn poisson_tail(k: u64, lambda: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let below = poisson_cdf(k - 1, lambda);
    if below <= 0.5 {
        return 1.0 - below;
    }
    upper_sum(k, lambda)
}

fn upper_sum(from: u64, lambda: f64) -> f64 {
    let mut acc = 0.0;
    let mut j = from;
    loop {
        let t = poisson_pmf(j, lambda);
        acc += t;
        if j as f64 > lambda && t <= acc * 1e-17 {
            break;
        }
        j += 1;
    }
    acc
}

/// Position in the trace: GOP `n` of a trace of `len` GOPs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DurationContext {
    pub n: usize,
    pub len: usize,
}

impl DurationContext {
    pub fn new(n: usize, len: usize) -> Result<Self> {
        if n >= len {
            return Err(Error::InvalidArgument(format!(
                "GOP index {n} outside trace of length {len}"
            )));
        }
        Ok(DurationContext { n, len })
    }

    /// Largest admissible remaining stay, `N - n - 1`.
    pub fn max_k(&self) -> usize {
        self.len - self.n - 1
    }
}

/// Boundary-corrected duration probability `ṗ(k|i)` for a segment entered at
/// `ctx.n`.
pub fn dotted_duration(
    k: usize,
    state: usize,
    ctx: DurationContext,
    params: &PHmmParams,
) -> Result<f64> {
    let lambda = *params
        .lambda
        .get(state)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown state {state}")))?;
    let kmax = ctx.max_k();
    if k > kmax {
        return Err(Error::InvalidArgument(format!(
            "duration {k} exceeds the {kmax} GOPs left after GOP {}",
            ctx.n
        )));
    }
    Ok(if k == kmax {
        poisson_tail(k as u64, lambda)
    } else {
        poisson_pmf(k as u64, lambda)
    })
}

/// Precomputed `p(k|i)` and `P(K >= k | i)` for `k < len`, every state.
///
/// With a duration cap `D`, the largest admissible stay at GOP `n` becomes
/// `min(N - n - 1, D)` and the tail term sits at that capped value.
#[derive(Debug, Clone)]
pub struct DurationTable {
    len: usize,
    cap: Option<usize>,
    pmf: Vec<Vec<f64>>,
    tail: Vec<Vec<f64>>,
}

impl DurationTable {
    pub fn new(lambda: &[f64], len: usize, cap: Option<usize>) -> Self {
        let width = match cap {
            Some(d) => (d + 1).min(len),
            None => len,
        };
        let mut pmf = Vec::with_capacity(lambda.len());
        let mut tail = Vec::with_capacity(lambda.len());
        for &l in lambda {
            let p: Vec<f64> = (0..width as u64).map(|k| poisson_pmf(k, l)).collect();
            let mut t = vec![0.0; width];
            // tail[k] = 1 - cdf(k-1) while the cdf is small, upward sums beyond.
            let far = if width > 0 { upper_sum(width as u64, l) } else { 0.0 };
            let mut up = far;
            let mut upward = vec![0.0; width];
            for k in (0..width).rev() {
                up += p[k];
                upward[k] = up;
            }
            let mut below = 0.0;
            for k in 0..width {
                t[k] = if k == 0 {
                    1.0
                } else if below <= 0.5 {
                    1.0 - below
                } else {
                    upward[k]
                };
                below += p[k];
            }
            pmf.push(p);
            tail.push(t);
        }
        DurationTable { len, cap, pmf, tail }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn cap(&self) -> Option<usize> {
        self.cap
    }

    /// Largest admissible remaining stay at GOP `n`.
    pub fn max_k(&self, n: usize) -> usize {
        let k = self.len - n - 1;
        match self.cap {
            Some(d) => k.min(d),
            None => k,
        }
    }

    pub fn pmf(&self, state: usize, k: usize) -> f64 {
        self.pmf[state][k]
    }

    /// `ṗ(k|i)` for a segment entered at GOP `n`.
    #[inline]
    pub fn dotted(&self, state: usize, k: usize, n: usize) -> f64 {
        if k == self.max_k(n) {
            self.tail[state][k]
        } else {
            self.pmf[state][k]
        }
    }
}
