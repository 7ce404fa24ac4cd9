//! Forward and backward passes of the explicit-duration model.
//!
//! Notation (per GOP `n`, state `i`, remaining stay `k`):
//!
//! * `alpha_dot(i, k, n)` filtered probability that the chain is in `i` at
//!   `n` and stays exactly `k` more GOPs, given `x_0..=x_n` (the last
//!   admissible `k` absorbs the censored tail);
//! * `gamma_dot(i, k, n)` the same event given the whole trace;
//! * `xi_dot(i, j, k, n)`, `n >= 1`, probability of `s_{n-1} = i` followed by
//!   `j` occupying `n..=n+k` and leaving afterwards. For `i == j` this is the
//!   continuation of an ongoing segment.
//!
//! Every forward step is normalized over `(i, k)`; the normalizers give the
//! log-likelihood. The backward pass produces posteriors directly from the
//! normalized forward quantities, so nothing underflows on long traces.
//! Per-GOP emission probabilities are evaluated in log space and rescaled by
//! the per-GOP maximum before exponentiation.
//!
//! A single-state model has no other state to move to; there, a finished
//! segment renews the same state.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{DurationTable, GopVector, PHmmParams, Trace};

#[derive(Debug, Clone, Copy, Default)]
pub struct TrellisOptions {
    /// Truncate stays at `D` GOPs (the tail mass is lumped at `D`). Off by
    /// default; only meant for traces too long for the quadratic storage.
    pub max_duration: Option<usize>,
    /// Keep every `xi_dot` value instead of only the M-step aggregates.
    pub retain_xi: bool,
    pub exec: Exec,
}

/// Triangular storage: at GOP `n` only `k <= kmax(n)` is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Jagged {
    states: usize,
    kmax: Vec<usize>,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl Jagged {
    fn zeros(states: usize, kmax: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(kmax.len() + 1);
        let mut acc = 0;
        for &k in &kmax {
            offsets.push(acc);
            acc += states * (k + 1);
        }
        offsets.push(acc);
        Jagged {
            states,
            kmax,
            offsets,
            data: vec![0.0; acc],
        }
    }

    pub fn len(&self) -> usize {
        self.kmax.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kmax.is_empty()
    }

    pub fn kmax(&self, n: usize) -> usize {
        self.kmax[n]
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize, n: usize) -> f64 {
        debug_assert!(k <= self.kmax[n]);
        self.data[self.offsets[n] + i * (self.kmax[n] + 1) + k]
    }

    /// All `k` values of state `i` at GOP `n`.
    #[inline]
    pub fn row(&self, i: usize, n: usize) -> &[f64] {
        let w = self.kmax[n] + 1;
        let start = self.offsets[n] + i * w;
        &self.data[start..start + w]
    }

    #[inline]
    fn row_mut(&mut self, i: usize, n: usize) -> &mut [f64] {
        let w = self.kmax[n] + 1;
        let start = self.offsets[n] + i * w;
        &mut self.data[start..start + w]
    }

    fn step_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.data[self.offsets[n]..self.offsets[n + 1]]
    }

    /// `sum_k value(i, k, n)`.
    pub fn marginal(&self, i: usize, n: usize) -> f64 {
        self.row(i, n).iter().sum()
    }

    /// `sum_i sum_k value(i, k, n)`.
    pub fn total(&self, n: usize) -> f64 {
        self.data[self.offsets[n]..self.offsets[n + 1]].iter().sum()
    }

    pub fn states(&self) -> usize {
        self.states
    }
}

/// Per-GOP emission likelihoods, stored as `exp(log b_i[x_n] - m_n)` with the
/// GOP-wise shift `m_n = max_i log b_i[x_n]` kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionTable {
    states: usize,
    scaled: Vec<f64>,
    log_shift: Vec<f64>,
}

impl EmissionTable {
    /// Builds a table from caller-supplied scaled scores (`[n][i]` rows).
    pub fn from_scaled(rows: Vec<Vec<f64>>, log_shift: Vec<f64>) -> Result<Self> {
        let states = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || states == 0 || rows.iter().any(|r| r.len() != states) {
            return Err(Error::Mismatch("emission rows must be non-empty and rectangular".into()));
        }
        if log_shift.len() != rows.len() {
            return Err(Error::Mismatch("one log shift per GOP required".into()));
        }
        Ok(EmissionTable {
            states,
            scaled: rows.into_iter().flatten().collect(),
            log_shift,
        })
    }

    pub fn len(&self) -> usize {
        self.log_shift.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_shift.is_empty()
    }

    #[inline]
    pub fn get(&self, n: usize, i: usize) -> f64 {
        self.scaled[n * self.states + i]
    }

    pub fn log_shift(&self, n: usize) -> f64 {
        self.log_shift[n]
    }

    /// Multiplies the scores of one GOP by `factor` (keeping the shift).
    pub fn scale_step(&mut self, n: usize, factor: f64) {
        let s = self.states;
        self.scaled[n * s..(n + 1) * s]
            .iter_mut()
            .for_each(|x| *x *= factor);
    }
}

fn ln_emissions(params: &PHmmParams) -> Vec<Vec<Vec<f64>>> {
    params
        .emissions
        .iter()
        .map(|per_pos| {
            per_pos
                .iter()
                .map(|pmf| pmf.iter().map(|p| p.ln()).collect())
                .collect()
        })
        .collect()
}

/// `log b_i[x] = sum_f log b_{i,f}[bin(x_f)]`; `-inf` if any factor is zero.
pub fn emission_logprob(gop: &GopVector, state: usize, params: &PHmmParams) -> Result<f64> {
    if state >= params.num_states() {
        return Err(Error::InvalidArgument(format!("unknown state {state}")));
    }
    if gop.0.len() != params.positions() {
        return Err(Error::Mismatch(format!(
            "GOP has {} frames, model has {} positions",
            gop.0.len(),
            params.positions()
        )));
    }
    Ok(gop
        .0
        .iter()
        .enumerate()
        .map(|(f, &s)| params.emissions[state][f][params.grid.range(f).bin_of(s as f64)].ln())
        .sum())
}

/// Emission table from bin indices `[gop][pos]`.
pub fn emission_table(bins: &[Vec<usize>], params: &PHmmParams, exec: Exec) -> Result<EmissionTable> {
    let ns = params.num_states();
    let nf = params.positions();
    if let Some(n) = bins.iter().position(|g| g.len() != nf) {
        return Err(Error::Mismatch(format!(
            "GOP {n} has {} frames, model has {nf} positions",
            bins[n].len()
        )));
    }
    let ln_b = ln_emissions(params);
    let mut scaled = vec![0.0; bins.len() * ns];
    let mut log_shift = vec![0.0; bins.len()];
    exec.for_each_chunk(&mut scaled, ns, |n, row| {
        for (i, out) in row.iter_mut().enumerate() {
            *out = bins[n].iter().enumerate().map(|(f, &b)| ln_b[i][f][b]).sum();
        }
    });
    for (n, row) in scaled.chunks_mut(ns).enumerate() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return Err(Error::ImpossibleObservation { gop: n });
        }
        row.iter_mut().for_each(|x| *x = (*x - m).exp());
        log_shift[n] = m;
    }
    Ok(EmissionTable {
        states: ns,
        scaled,
        log_shift,
    })
}

/// Transition probability with the single-state renewal convention.
#[inline]
fn a_eff(trans: &[Vec<f64>], i: usize, j: usize) -> f64 {
    if trans.len() == 1 {
        1.0
    } else {
        trans[i][j]
    }
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub alpha_dot: Jagged,
    /// `alpha[n][i] = sum_k alpha_dot(i, k, n)`.
    pub alpha: Vec<Vec<f64>>,
    /// `log c_n`: log of the normalizer at GOP `n` including the emission
    /// shift, i.e. `log P(x_n | x_0..x_{n-1})`.
    pub log_normalizers: Vec<f64>,
    /// `sum_n log c_n = log P(x_0..x_{N-1})` (natural log, non-positive for
    /// probability mass functions).
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransitionStats {
    /// `sum_n sum_k xi_dot(i, j, k, n)` for `i != j` (zero on the diagonal).
    pub trans: Vec<Vec<f64>>,
    /// `segments[i][k]`: posterior mass of a segment of `i` entered at some
    /// `n >= 1` with stay `k`, where the segment ends before the trace does.
    pub segments: Vec<Vec<f64>>,
    /// Same for segments cut off by the end of the trace (`k = N - n - 1`).
    pub censored: Vec<Vec<f64>>,
}

impl TransitionStats {
    /// `sum_k k * segments[i][k]`.
    pub fn dur_weighted(&self, i: usize) -> f64 {
        self.segments[i]
            .iter()
            .enumerate()
            .map(|(k, w)| k as f64 * w)
            .sum()
    }

    /// `sum_k segments[i][k]`.
    pub fn dur_mass(&self, i: usize) -> f64 {
        self.segments[i].iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct BackwardPass {
    pub gamma_dot: Jagged,
    /// `xi_dot` for `n >= 1` when retained: index `[n - 1]` of a jagged store
    /// whose rows are `i * states + j`.
    pub xi_dot: Option<XiStore>,
    pub stats: TransitionStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XiStore {
    states: usize,
    inner: Jagged,
}

impl XiStore {
    /// `xi_dot(i, j, k, n)`, `n >= 1`.
    pub fn get(&self, i: usize, j: usize, k: usize, n: usize) -> f64 {
        self.inner.get(i * self.states + j, k, n - 1)
    }

    pub fn kmax(&self, n: usize) -> usize {
        self.inner.kmax(n - 1)
    }
}

/// Forward recursion on a precomputed emission table.
pub fn forward_with_emissions(
    em: &EmissionTable,
    params: &PHmmParams,
    dur: &DurationTable,
) -> Result<ForwardPass> {
    let len = em.len();
    let ns = params.num_states();
    if dur.len() != len || len == 0 {
        return Err(Error::Mismatch("duration table does not match trace length".into()));
    }
    let kmax: Vec<usize> = (0..len).map(|n| dur.max_k(n)).collect();
    let mut ad = Jagged::zeros(ns, kmax);
    let mut log_normalizers = Vec::with_capacity(len);
    let mut enter = vec![0.0; ns];

    for n in 0..len {
        let km = ad.kmax(n);
        if n == 0 {
            for i in 0..ns {
                let e = em.get(0, i);
                let row = ad.row_mut(i, 0);
                for (k, out) in row.iter_mut().enumerate() {
                    *out = params.pi[i] * dur.dotted(i, k, 0) * e;
                }
            }
        } else {
            for (i, ent) in enter.iter_mut().enumerate() {
                *ent = (0..ns)
                    .map(|j| ad.get(j, 0, n - 1) * a_eff(&params.trans, j, i))
                    .sum();
            }
            let prev_km = ad.kmax(n - 1);
            for i in 0..ns {
                let e = em.get(n, i);
                let cont: Vec<f64> = (1..=prev_km).map(|k| ad.get(i, k, n - 1)).collect();
                let row = ad.row_mut(i, n);
                for (k, out) in row.iter_mut().enumerate().take(km + 1) {
                    let c = cont.get(k).copied().unwrap_or(0.0);
                    *out = e * (enter[i] * dur.dotted(i, k, n) + c);
                }
            }
        }
        let step = ad.step_mut(n);
        let c: f64 = step.iter().sum();
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::ImpossibleObservation { gop: n });
        }
        step.iter_mut().for_each(|x| *x /= c);
        log_normalizers.push(c.ln() + em.log_shift(n));
    }

    let alpha = (0..len)
        .map(|n| (0..ns).map(|i| ad.marginal(i, n)).collect())
        .collect();
    let log_likelihood = log_normalizers.iter().sum();
    Ok(ForwardPass {
        alpha_dot: ad,
        alpha,
        log_normalizers,
        log_likelihood,
    })
}

/// Backward pass producing `gamma_dot` (and optionally `xi_dot`) from the
/// normalized forward quantities.
pub fn backward_with_emissions(
    fw: &ForwardPass,
    params: &PHmmParams,
    dur: &DurationTable,
    retain_xi: bool,
) -> Result<BackwardPass> {
    let ad = &fw.alpha_dot;
    let len = ad.len();
    let ns = params.num_states();
    if ad.states() != ns || dur.len() != len {
        return Err(Error::Mismatch(
            "forward pass does not match the model or trace".into(),
        ));
    }
    let mut gd = Jagged::zeros(ns, (0..len).map(|n| ad.kmax(n)).collect());
    let mut xi = retain_xi.then(|| XiStore {
        states: ns,
        inner: Jagged::zeros(ns * ns, (1..len).map(|n| ad.kmax(n)).collect()),
    });
    let mut stats = TransitionStats {
        trans: vec![vec![0.0; ns]; ns],
        segments: vec![vec![0.0; len]; ns],
        censored: vec![vec![0.0; len]; ns],
    };

    // At the last GOP only k = 0 exists.
    for i in 0..ns {
        gd.row_mut(i, len - 1)[0] = ad.get(i, 0, len - 1);
    }

    let mut enter = vec![0.0; ns];
    let mut starts = vec![0.0; ns];
    for n in (1..len).rev() {
        let km = ad.kmax(n);
        let prev_km = ad.kmax(n - 1);
        let uncensored_max = len - n - 1;
        for (j, ent) in enter.iter_mut().enumerate() {
            *ent = (0..ns)
                .map(|l| ad.get(l, 0, n - 1) * a_eff(&params.trans, l, j))
                .sum();
        }
        starts.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..ns {
            for k in 0..=km {
                let g = gd.get(j, k, n);
                let pd = dur.dotted(j, k, n);
                let cont = if k < prev_km { ad.get(j, k + 1, n - 1) } else { 0.0 };
                let den = enter[j] * pd + cont;
                if !(den > 0.0) || g == 0.0 {
                    continue;
                }
                let scale = g / den;
                for i in 0..ns {
                    let new_seg = ad.get(i, 0, n - 1) * a_eff(&params.trans, i, j) * pd * scale;
                    if new_seg != 0.0 {
                        starts[i] += new_seg;
                        if i != j {
                            stats.trans[i][j] += new_seg;
                        }
                        if k < uncensored_max {
                            stats.segments[j][k] += new_seg;
                        } else {
                            stats.censored[j][k] += new_seg;
                        }
                    }
                    if let Some(x) = xi.as_mut() {
                        let mut v = new_seg;
                        if i == j {
                            v += cont * scale;
                        }
                        x.inner.row_mut(i * ns + j, n - 1)[k] = v;
                    }
                }
                // continuation: same segment one GOP earlier with one more
                // GOP left to go
                if k < prev_km {
                    gd.row_mut(j, n - 1)[k + 1] = cont * scale;
                }
            }
        }
        // a segment ending at n-1 is followed by a new one starting at n
        for (i, &s) in starts.iter().enumerate() {
            gd.row_mut(i, n - 1)[0] = s;
        }
    }

    Ok(BackwardPass {
        gamma_dot: gd,
        xi_dot: xi,
        stats,
    })
}

/// Everything the E-step produces for one `(trace, params)` pair.
#[derive(Debug, Clone)]
pub struct TrellisPosteriors {
    pub forward: ForwardPass,
    pub backward: BackwardPass,
}

impl TrellisPosteriors {
    pub fn log_likelihood(&self) -> f64 {
        self.forward.log_likelihood
    }

    /// `P(s_n = i | X) = sum_k gamma_dot(i, k, n)`.
    pub fn state_posterior(&self, i: usize, n: usize) -> f64 {
        self.backward.gamma_dot.marginal(i, n)
    }
}

fn check_inputs(trace: &Trace, params: &PHmmParams) -> Result<Vec<Vec<usize>>> {
    if let Err(v) = crate::model::validate_params(params) {
        return Err(Error::InvalidParams(v));
    }
    params.grid.quantize(trace)
}

pub fn forward(trace: &Trace, params: &PHmmParams, opts: &TrellisOptions) -> Result<ForwardPass> {
    let bins = check_inputs(trace, params)?;
    let em = emission_table(&bins, params, opts.exec)?;
    let dur = DurationTable::new(&params.lambda, trace.len(), opts.max_duration);
    forward_with_emissions(&em, params, &dur)
}

pub fn backward(
    trace: &Trace,
    params: &PHmmParams,
    fw: &ForwardPass,
    opts: &TrellisOptions,
) -> Result<BackwardPass> {
    if fw.alpha_dot.len() != trace.len() {
        return Err(Error::Mismatch(format!(
            "forward pass covers {} GOPs, trace has {}",
            fw.alpha_dot.len(),
            trace.len()
        )));
    }
    let dur = DurationTable::new(&params.lambda, trace.len(), opts.max_duration);
    backward_with_emissions(fw, params, &dur, opts.retain_xi)
}

/// Forward then backward on bin-indexed observations.
pub(crate) fn posteriors_from_bins(
    bins: &[Vec<usize>],
    params: &PHmmParams,
    opts: &TrellisOptions,
) -> Result<TrellisPosteriors> {
    let em = emission_table(bins, params, opts.exec)?;
    let dur = DurationTable::new(&params.lambda, bins.len(), opts.max_duration);
    let forward = forward_with_emissions(&em, params, &dur)?;
    let backward = backward_with_emissions(&forward, params, &dur, opts.retain_xi)?;
    Ok(TrellisPosteriors { forward, backward })
}

pub fn posteriors(
    trace: &Trace,
    params: &PHmmParams,
    opts: &TrellisOptions,
) -> Result<TrellisPosteriors> {
    let bins = check_inputs(trace, params)?;
    posteriors_from_bins(&bins, params, opts)
}

pub fn log_likelihood(trace: &Trace, params: &PHmmParams) -> Result<f64> {
    Ok(forward(trace, params, &TrellisOptions::default())?.log_likelihood)
}
