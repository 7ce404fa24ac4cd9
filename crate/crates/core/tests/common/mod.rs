//! Shared test support: random small instances and a brute-force oracle that
//! enumerates every segmentation of a short trace.

#![allow(dead_code, clippy::needless_range_loop)]

use mvtraffic::model::{BinRange, FrameType, GopStructure, GopVector, PHmmParams, QuantGrid, Trace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub trace: Trace,
    pub params: PHmmParams,
    /// `bins[n][f]`.
    pub bins: Vec<Vec<usize>>,
}

fn random_pmf(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Structure with one view of `nf` frames and `bins[f]` bins per position.
pub fn flat_structure(bins: &[usize]) -> GopStructure {
    let nf = bins.len();
    let labels = (0..nf).map(|f| if f == 0 { FrameType::I } else { FrameType::B }).collect();
    GopStructure::new(1, nf, 25.0, labels, bins.to_vec(), vec![]).unwrap()
}

/// Grid `[0, b]` with `b` unit bins: size `v` falls in bin `v`.
pub fn unit_grid(bins: &[usize]) -> QuantGrid {
    QuantGrid::new(bins.iter().map(|&b| BinRange::new(0.0, b as f64, b).unwrap()).collect()).unwrap()
}

pub fn random_params(rng: &mut ChaCha8Rng, ns: usize, bins: &[usize]) -> PHmmParams {
    let mut p = PHmmParams::uniform(ns, unit_grid(bins), 1.0);
    p.pi = random_pmf(rng, ns);
    for i in 0..ns {
        let off = random_pmf(rng, ns - 1);
        let mut row = vec![0.0; ns];
        let mut it = off.into_iter();
        for (j, x) in row.iter_mut().enumerate() {
            if j != i {
                *x = it.next().unwrap();
            }
        }
        p.trans[i] = row;
        p.lambda[i] = rng.random_range(0.05..4.0);
        for (f, &b) in bins.iter().enumerate() {
            p.emissions[i][f] = random_pmf(rng, b);
        }
    }
    p
}

/// N <= 6 GOPs, 2–3 states, 1–2 positions, 2–3 bins per position.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.random_range(1..=6);
    let ns = rng.random_range(2..=3);
    let nf = rng.random_range(1..=2);
    let bins: Vec<usize> = (0..nf).map(|_| rng.random_range(2..=3)).collect();
    let params = random_params(&mut rng, ns, &bins);
    let obs: Vec<Vec<usize>> = (0..len)
        .map(|_| bins.iter().map(|&b| rng.random_range(0..b)).collect())
        .collect();
    let structure = flat_structure(&bins);
    let gops = obs.iter().map(|g| GopVector(g.iter().map(|&b| b as u64).collect())).collect();
    Instance {
        trace: Trace::new(structure, gops).unwrap(),
        params,
        bins: obs,
    }
}

fn pmf(k: usize, lambda: f64) -> f64 {
    let mut v = (-lambda).exp();
    for j in 1..=k {
        v *= lambda / j as f64;
    }
    v
}

/// `P(K >= k)`.
fn tail(k: usize, lambda: f64) -> f64 {
    1.0 - (0..k).map(|j| pmf(j, lambda)).sum::<f64>()
}

#[derive(Debug, Clone, Copy)]
struct Seg {
    state: usize,
    start: usize,
    len: usize,
}

/// Exact posterior quantities by enumeration.
pub struct Oracle {
    pub likelihood: f64,
    /// `state_post[n][i]`.
    pub state_post: Vec<Vec<f64>>,
    /// `gamma_dot[n][i][k]`.
    pub gamma_dot: Vec<Vec<Vec<f64>>>,
    /// `xi_dot[n][i][j][k]` for `n >= 1`.
    pub xi_dot: Vec<Vec<Vec<Vec<f64>>>>,
    pub pi: Vec<f64>,
    pub trans_counts: Vec<Vec<f64>>,
    pub emission_weights: Vec<Vec<Vec<f64>>>,
    /// Closed-form λ numerator and denominator.
    pub lambda_terms: Vec<(f64, f64)>,
}

impl Oracle {
    pub fn new(params: &PHmmParams, bins: &[Vec<usize>]) -> Self {
        let len = bins.len();
        let ns = params.num_states();
        let nf = bins[0].len();
        let mut o = Oracle {
            likelihood: 0.0,
            state_post: vec![vec![0.0; ns]; len],
            gamma_dot: vec![vec![vec![0.0; len]; ns]; len],
            xi_dot: vec![vec![vec![vec![0.0; len]; ns]; ns]; len],
            pi: vec![0.0; ns],
            trans_counts: vec![vec![0.0; ns]; ns],
            emission_weights: (0..ns)
                .map(|_| (0..nf).map(|f| vec![0.0; params.emissions[0][f].len()]).collect())
                .collect(),
            lambda_terms: vec![(0.0, 0.0); ns],
        };
        let emit = |i: usize, n: usize| -> f64 {
            (0..nf).map(|f| params.emissions[i][f][bins[n][f]]).product()
        };
        let mut segs = Vec::new();
        let mut all = Vec::new();
        enumerate(ns, len, 0, None, &mut segs, &mut all);
        let mut weights = Vec::with_capacity(all.len());
        for path in &all {
            let mut w = 1.0;
            for (m, s) in path.iter().enumerate() {
                w *= if m == 0 {
                    params.pi[s.state]
                } else {
                    params.trans[path[m - 1].state][s.state]
                };
                let k = s.len - 1;
                let end_of_trace = s.start + s.len == len;
                w *= if end_of_trace { tail(k, params.lambda[s.state]) } else { pmf(k, params.lambda[s.state]) };
                for n in s.start..s.start + s.len {
                    w *= emit(s.state, n);
                }
            }
            weights.push(w);
        }
        let z: f64 = weights.iter().sum();
        o.likelihood = z;
        for (path, w) in all.iter().zip(&weights) {
            let p = w / z;
            for (m, s) in path.iter().enumerate() {
                let i = s.state;
                let end = s.start + s.len - 1;
                let censored = end == len - 1;
                for n in s.start..=end {
                    o.state_post[n][i] += p;
                    o.gamma_dot[n][i][end - n] += p;
                    for f in 0..nf {
                        o.emission_weights[i][f][bins[n][f]] += p;
                    }
                    if n >= 1 {
                        let prev = if n == s.start { path[m - 1].state } else { i };
                        o.xi_dot[n][prev][i][end - n] += p;
                    }
                }
                if m == 0 {
                    o.pi[i] += p;
                } else {
                    o.trans_counts[path[m - 1].state][i] += p;
                }
                if m == 0 || !censored {
                    let k = (s.len - 1) as f64;
                    o.lambda_terms[i].0 += p * k;
                    o.lambda_terms[i].1 += p;
                }
            }
        }
        o
    }

    pub fn trans_row(&self, i: usize) -> Option<Vec<f64>> {
        let s: f64 = self.trans_counts[i].iter().sum();
        (s > 0.0).then(|| self.trans_counts[i].iter().map(|x| x / s).collect())
    }
}

fn enumerate(ns: usize, len: usize, start: usize, prev: Option<usize>, cur: &mut Vec<Seg>, out: &mut Vec<Vec<Seg>>) {
    if start == len {
        out.push(cur.clone());
        return;
    }
    for state in 0..ns {
        if Some(state) == prev {
            continue;
        }
        for l in 1..=len - start {
            cur.push(Seg { state, start, len: l });
            enumerate(ns, len, start + l, Some(state), cur, out);
            cur.pop();
        }
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
