//! Coarse initialization and the EM loop.

use rand::Rng;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{validate_params, PHmmParams, QuantGrid, Trace};
use crate::rng;
use crate::trellis::{posteriors_from_bins, TrellisOptions, TrellisPosteriors};

/// How the Poisson means are re-estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DurationUpdate {
    /// Closed-form ratio of posterior-weighted stays, counting only segments
    /// that end before the trace does (plus the segment active at GOP 0).
    #[default]
    ClosedForm,
    /// Maximizes the expected complete-data log-likelihood in λ exactly,
    /// treating segments cut off by the end of the trace as censored
    /// observations.
    Censored,
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub num_states: usize,
    /// Stop once `|LL(m) - LL(m-1)|` drops below this.
    pub ll_threshold: f64,
    pub max_iters: usize,
    /// Lower bound applied to every emission probability.
    pub pmf_floor: f64,
    /// Seed for the random transition-matrix initialization.
    pub rng_seed: u64,
    pub duration_update: DurationUpdate,
    pub trellis: TrellisOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            num_states: 3,
            ll_threshold: 0.01,
            max_iters: 500,
            pmf_floor: 1e-6,
            rng_seed: 0,
            duration_update: DurationUpdate::default(),
            trellis: TrellisOptions::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_states < 2 {
            return Err(Error::InvalidArgument(format!(
                "num_states must be at least 2, got {}",
                self.num_states
            )));
        }
        if !(self.ll_threshold > 0.0) {
            return Err(Error::InvalidArgument("ll_threshold must be positive".into()));
        }
        if !(self.pmf_floor > 0.0 && self.pmf_floor <= 1e-3) {
            return Err(Error::InvalidArgument(format!(
                "pmf_floor must lie in (0, 1e-3], got {}",
                self.pmf_floor
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub params: PHmmParams,
    /// Log-likelihood of every iterate, starting with the coarse estimate.
    pub log_likelihoods: Vec<f64>,
    /// Number of EM steps performed.
    pub iterations: usize,
    pub converged: bool,
}

impl FitReport {
    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihoods.last().expect("at least one iterate")
    }
}

/// Projects non-negative weights onto `{p : sum p = 1, p_v >= floor}` in the
/// weighted-log-likelihood sense: `p_v = max(floor, w_v / mu)`.
///
/// Empty bins end up at exactly `floor`; occupied bins keep their relative
/// proportions. All-zero weights give the uniform pmf.
pub fn floor_pmf(weights: &[f64], floor: f64) -> Vec<f64> {
    let nb = weights.len();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return vec![1.0 / nb as f64; nb];
    }
    assert!(floor * nb as f64 <= 1.0, "floor too large for {nb} bins");
    let mut clamped: Vec<bool> = weights.iter().map(|&w| w <= 0.0).collect();
    loop {
        let n_clamped = clamped.iter().filter(|&&c| c).count();
        let free_mass = 1.0 - floor * n_clamped as f64;
        let z: f64 = weights
            .iter()
            .zip(&clamped)
            .filter(|(_, &c)| !c)
            .map(|(w, _)| w)
            .sum();
        let mut changed = false;
        for (v, &w) in weights.iter().enumerate() {
            if !clamped[v] && w * free_mass / z < floor {
                clamped[v] = true;
                changed = true;
            }
        }
        if !changed {
            return weights
                .iter()
                .zip(&clamped)
                .map(|(&w, &c)| if c { floor } else { w * free_mass / z })
                .collect();
        }
    }
}

/// Labels later GOPs into `num_states` equal-count activity classes by mean
/// frame size (lowest first). Ties keep trace order, so a GOP sitting on a
/// class boundary lands in the lower class.
pub fn activity_labels(trace: &Trace, num_states: usize) -> Vec<usize> {
    let n = trace.len();
    let means: Vec<f64> = trace.gops().iter().map(|g| g.mean()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| means[a].total_cmp(&means[b]));
    let mut labels = vec![0; n];
    for (rank, &g) in order.iter().enumerate() {
        labels[g] = rank * num_states / n;
    }
    labels
}

/// Coarse starting point for EM: equal-count activity classes give the
/// emission histograms, transitions are random with a zero diagonal, every
/// Poisson mean is 1 and π is uniform.
pub fn coarse_init(trace: &Trace, config: &FitConfig) -> Result<PHmmParams> {
    config.validate()?;
    let ns = config.num_states;
    if trace.len() < ns {
        return Err(Error::TraceTooShort {
            gops: trace.len(),
            needed: ns,
        });
    }
    let grid = QuantGrid::from_trace(trace);
    let bins = grid.quantize(trace)?;
    let labels = activity_labels(trace, ns);
    let nf = grid.positions();

    let mut emissions = Vec::with_capacity(ns);
    for s in 0..ns {
        let per_pos = (0..nf)
            .map(|f| {
                let mut counts = vec![0.0; grid.bins(f)];
                for (n, g) in bins.iter().enumerate() {
                    if labels[n] == s {
                        counts[g[f]] += 1.0;
                    }
                }
                floor_pmf(&counts, config.pmf_floor)
            })
            .collect();
        emissions.push(per_pos);
    }

    let mut r = rng::stream(config.rng_seed, 0);
    let trans = (0..ns)
        .map(|i| {
            let mut row: Vec<f64> = (0..ns)
                .map(|j| if i == j { 0.0 } else { r.random_range(0.05..1.0) })
                .collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
            row
        })
        .collect();

    Ok(PHmmParams {
        pi: vec![1.0 / ns as f64; ns],
        trans,
        lambda: vec![1.0; ns],
        emissions,
        grid,
    })
}

/// Raw re-estimates computed from one E-step, before any flooring.
#[derive(Debug, Clone, PartialEq)]
pub struct MStepQuantities {
    pub pi: Vec<f64>,
    /// `None` for a row whose state never hands over to another.
    pub trans: Vec<Option<Vec<f64>>>,
    /// Posterior-weighted bin histograms `[state][pos][bin]`, unnormalized.
    pub emission_weights: Vec<Vec<Vec<f64>>>,
    /// `None` when the state carries no duration mass.
    pub lambda: Vec<Option<f64>>,
    /// `(numerator, denominator)` of the λ ratio.
    pub lambda_terms: Vec<(f64, f64)>,
}

impl MStepQuantities {
    /// Normalized emission pmf (no floor).
    pub fn emission_pmf(&self, state: usize, pos: usize) -> Vec<f64> {
        let w = &self.emission_weights[state][pos];
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    }
}

pub fn m_step_quantities(
    post: &TrellisPosteriors,
    bins: &[Vec<usize>],
    params: &PHmmParams,
    exec: Exec,
) -> MStepQuantities {
    let ns = params.num_states();
    let gd = &post.backward.gamma_dot;
    let stats = &post.backward.stats;

    let pi: Vec<f64> = (0..ns).map(|i| gd.marginal(i, 0)).collect();

    let trans = (0..ns)
        .map(|i| {
            let den: f64 = stats.trans[i].iter().sum();
            (den > 0.0).then(|| stats.trans[i].iter().map(|x| x / den).collect())
        })
        .collect();

    let emission_weights = exec.map_indexed(ns, |i| {
        let mut w: Vec<Vec<f64>> = params
            .grid
            .ranges()
            .iter()
            .map(|r| vec![0.0; r.bins])
            .collect();
        for (n, g) in bins.iter().enumerate() {
            let p = gd.marginal(i, n);
            for (f, &b) in g.iter().enumerate() {
                w[f][b] += p;
            }
        }
        w
    });

    let mut lambda = Vec::with_capacity(ns);
    let mut lambda_terms = Vec::with_capacity(ns);
    for i in 0..ns {
        let row0 = gd.row(i, 0);
        let num = stats.dur_weighted(i)
            + row0.iter().enumerate().map(|(k, g)| k as f64 * g).sum::<f64>();
        let den = stats.dur_mass(i) + row0.iter().sum::<f64>();
        lambda_terms.push((num, den));
        lambda.push((den > 0.0).then(|| num / den));
    }

    MStepQuantities {
        pi,
        trans,
        emission_weights,
        lambda,
        lambda_terms,
    }
}

/// Exact maximizer in λ of the expected complete-data log-likelihood
///
///   sum_u w_u (k_u ln λ - λ) + sum_c w_c ln S(k_c; λ),   S(k; λ) = P(K >= k),
///
/// where `u` runs over segments that end inside the trace and `c` over those
/// cut off by its end. `d/dλ ln S(k; λ) = p(k-1; λ) / S(k; λ)`; the objective
/// is concave, so the root of the derivative is found by bisection.
fn censored_lambda(post: &TrellisPosteriors, len: usize) -> Vec<Option<f64>> {
    use crate::model::{poisson_pmf, poisson_tail};
    let gd = &post.backward.gamma_dot;
    let stats = &post.backward.stats;
    let ns = gd.states();
    (0..ns)
        .map(|i| {
            let mut unc = stats.segments[i].clone();
            let mut cen = stats.censored[i].clone();
            for (k, &g) in gd.row(i, 0).iter().enumerate() {
                if k == len - 1 {
                    cen[k] += g;
                } else {
                    unc[k] += g;
                }
            }
            let mass: f64 = unc.iter().chain(&cen).sum();
            if !(mass > 0.0) {
                return None;
            }
            let deriv = |l: f64| -> f64 {
                let mut d = 0.0;
                for (k, &w) in unc.iter().enumerate() {
                    if w > 0.0 {
                        d += w * (k as f64 / l - 1.0);
                    }
                }
                for (k, &w) in cen.iter().enumerate().skip(1) {
                    if w > 0.0 {
                        let s = poisson_tail(k as u64, l);
                        d += if s > 0.0 {
                            w * poisson_pmf(k as u64 - 1, l) / s
                        } else {
                            // far in the tail: S ~ p(k), ratio -> k / λ
                            w * k as f64 / l
                        };
                    }
                }
                d
            };
            let mut lo = 1e-12;
            if deriv(lo) <= 0.0 {
                return Some(0.0);
            }
            let mut hi = 1.0;
            while deriv(hi) > 0.0 && hi < 1e9 {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if deriv(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-14 * hi {
                    break;
                }
            }
            Some(0.5 * (lo + hi))
        })
        .collect()
}

fn step_from_bins(
    bins: &[Vec<usize>],
    params: &PHmmParams,
    config: &FitConfig,
) -> Result<(PHmmParams, f64)> {
    let post = posteriors_from_bins(bins, params, &config.trellis)?;
    let q = m_step_quantities(&post, bins, params, config.trellis.exec);
    let ns = params.num_states();

    let mut next = params.clone();
    let pi_sum: f64 = q.pi.iter().sum();
    next.pi = q.pi.iter().map(|p| p / pi_sum).collect();
    if ns > 1 {
        for (i, row) in q.trans.iter().enumerate() {
            if let Some(row) = row {
                next.trans[i] = row.clone();
            }
        }
    }
    for i in 0..ns {
        for f in 0..params.positions() {
            next.emissions[i][f] = floor_pmf(&q.emission_weights[i][f], config.pmf_floor);
        }
    }
    let lambdas = match config.duration_update {
        DurationUpdate::ClosedForm => q.lambda.clone(),
        DurationUpdate::Censored => censored_lambda(&post, bins.len()),
    };
    for (i, l) in lambdas.into_iter().enumerate() {
        if let Some(l) = l {
            next.lambda[i] = l.max(0.0);
        }
    }
    Ok((next, post.log_likelihood()))
}

/// One E-step followed by the closed-form M-step. Returns the updated
/// parameters and the log-likelihood of the *input* parameters.
pub fn em_step(trace: &Trace, params: &PHmmParams, config: &FitConfig) -> Result<(PHmmParams, f64)> {
    validate_params(params).map_err(Error::InvalidParams)?;
    let bins = params.grid.quantize(trace)?;
    step_from_bins(&bins, params, config)
}

/// Runs EM from [`coarse_init`] until the log-likelihood gain falls below
/// `config.ll_threshold` or `config.max_iters` steps have been taken.
///
/// The returned parameters are the last iterate whose log-likelihood has
/// been evaluated, i.e. the last entry of `log_likelihoods`.
pub fn fit(trace: &Trace, config: &FitConfig) -> Result<FitReport> {
    let init = coarse_init(trace, config)?;
    fit_from(trace, init, config)
}

/// EM from a caller-supplied starting point.
pub fn fit_from(trace: &Trace, init: PHmmParams, config: &FitConfig) -> Result<FitReport> {
    config.validate()?;
    validate_params(&init).map_err(Error::InvalidParams)?;
    let bins = init.grid.quantize(trace)?;
    let mut current = init;
    let mut lls: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters {
        let (next, ll) = step_from_bins(&bins, &current, config)?;
        iterations += 1;
        if let Some(&prev) = lls.last() {
            lls.push(ll);
            if (ll - prev).abs() < config.ll_threshold {
                converged = true;
                break;
            }
        } else {
            lls.push(ll);
        }
        current = next;
    }
    if !converged {
        // `current` was produced by the last step but never scored.
        let post = posteriors_from_bins(&bins, &current, &config.trellis)?;
        lls.push(post.log_likelihood());
    }
    Ok(FitReport {
        params: current,
        log_likelihoods: lls,
        iterations,
        converged,
    })
}

/// Independent fits (one per config), e.g. a seed sweep.
pub fn fit_many(trace: &Trace, configs: &[FitConfig], exec: Exec) -> Vec<Result<FitReport>> {
    exec.map_indexed(configs.len(), |c| {
        let mut cfg = configs[c].clone();
        // nested parallelism buys nothing here
        cfg.trellis.exec = Exec::Sequential;
        fit(trace, &cfg)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FrameType, GopStructure, GopVector};

    fn structure(nf: usize, bins: usize) -> GopStructure {
        GopStructure::new(1, nf, 25.0, vec![FrameType::B; nf], vec![bins; nf], vec![]).unwrap()
    }

    #[test]
    fn floor_projection() {
        let p = floor_pmf(&[3.0, 0.0, 1.0, 0.0], 1e-4);
        assert_eq!(p[1], 1e-4);
        assert_eq!(p[3], 1e-4);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((p[0] / p[2] - 3.0).abs() < 1e-12);
        // a tiny but positive weight also gets lifted to the floor
        let p = floor_pmf(&[1.0, 1e-9, 1.0], 1e-4);
        assert_eq!(p[1], 1e-4);
        assert_eq!(floor_pmf(&[0.0, 0.0], 1e-4), vec![0.5, 0.5]);
    }

    #[test]
    fn tertile_labels() {
        let s = structure(1, 4);
        let gops = [5u64, 1, 9, 3, 7, 2, 8, 4, 6]
            .iter()
            .map(|&x| GopVector(vec![x]))
            .collect();
        let t = Trace::new(s, gops).unwrap();
        let labels = activity_labels(&t, 3);
        let sizes = [5u64, 1, 9, 3, 7, 2, 8, 4, 6];
        for (l, s) in labels.iter().zip(sizes) {
            assert_eq!(*l, ((s - 1) / 3) as usize, "size {s}");
        }
    }

    #[test]
    fn tie_on_boundary_goes_low() {
        let s = structure(1, 4);
        let gops = [1u64, 2, 2, 2, 3, 4].iter().map(|&x| GopVector(vec![x])).collect();
        let t = Trace::new(s, gops).unwrap();
        // sorted: 1,2,2 | 2,3,4 -> the third '2' (index 3) goes to the upper half
        assert_eq!(activity_labels(&t, 2), vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn coarse_init_contract() {
        let s = structure(2, 3);
        let gops = (0..12u64)
            .map(|n| GopVector(vec![n, if n < 6 { 0 } else { 11 }]))
            .collect();
        let t = Trace::new(s, gops).unwrap();
        let cfg = FitConfig {
            num_states: 2,
            pmf_floor: 1e-4,
            ..FitConfig::default()
        };
        let p = coarse_init(&t, &cfg).unwrap();
        validate_params(&p).unwrap();
        assert_eq!(p.lambda, vec![1.0, 1.0]);
        assert_eq!(p.pi, vec![0.5, 0.5]);
        for i in 0..2 {
            assert_eq!(p.trans[i][i], 0.0);
        }
        // low state never saw the top bin at position 1
        assert_eq!(p.emissions[0][1][2], 1e-4);
        assert!((p.emissions[0][1].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let short = Trace::new(structure(2, 3), vec![GopVector(vec![1, 2])]).unwrap();
        assert!(matches!(
            coarse_init(&short, &cfg),
            Err(Error::TraceTooShort { .. })
        ));
        let bad = FitConfig {
            num_states: 1,
            ..FitConfig::default()
        };
        assert!(coarse_init(&t, &bad).is_err());
    }

    fn sample_trace(len: usize) -> Trace {
        let gops = (0..len as u64)
            .map(|n| {
                let level = [1u64, 5, 9][((n / 7) % 3) as usize];
                GopVector(vec![level + n % 2, 2 * level + (n * 3) % 4])
            })
            .collect();
        Trace::new(structure(2, 6), gops).unwrap()
    }

    #[test]
    fn single_state_step_keeps_pi_a_and_histogram() {
        let t = sample_trace(30);
        let grid = QuantGrid::from_trace(&t);
        let bins = grid.quantize(&t).unwrap();
        let mut p = PHmmParams::uniform(1, grid, 2.0);
        for f in 0..2 {
            let mut counts = vec![0.0; 6];
            for g in &bins {
                counts[g[f]] += 1.0;
            }
            p.emissions[0][f] = floor_pmf(&counts, 1e-6);
        }
        let (next, ll) = em_step(&t, &p, &FitConfig::default()).unwrap();
        assert!(ll.is_finite());
        assert_eq!(next.pi, vec![1.0]);
        assert_eq!(next.trans, vec![vec![0.0]]);
        for f in 0..2 {
            for (a, b) in next.emissions[0][f].iter().zip(&p.emissions[0][f]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert!(next.lambda[0] >= 0.0);
    }

    #[test]
    fn step_keeps_invariants() {
        let t = sample_trace(60);
        for seed in 0..10 {
            let cfg = FitConfig { rng_seed: seed, ..Default::default() };
            let p = coarse_init(&t, &cfg).unwrap();
            let (next, _) = em_step(&t, &p, &cfg).unwrap();
            validate_params(&next).unwrap();
            for (i, row) in next.trans.iter().enumerate() {
                assert_eq!(row[i], 0.0);
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            assert!(next.emissions.iter().flatten().flatten().all(|&x| x >= 1e-6));
        }
    }

    #[test]
    fn stops_at_first_small_gain() {
        let t = sample_trace(120);
        for update in [DurationUpdate::ClosedForm, DurationUpdate::Censored] {
            let cfg = FitConfig { duration_update: update, ..Default::default() };
            let r = fit(&t, &cfg).unwrap();
            assert!(r.converged);
            let lls = &r.log_likelihoods;
            assert_eq!(lls.len(), r.iterations);
            let last = lls.len() - 1;
            assert!((lls[last] - lls[last - 1]).abs() < 0.01);
            for w in lls[..last].windows(2) {
                assert!((w[1] - w[0]).abs() >= 0.01);
            }
            for w in lls.windows(2) {
                assert!(w[1] >= w[0] - 1e-8, "{update:?}: {} -> {}", w[0], w[1]);
            }
            assert_eq!(r.final_log_likelihood(), lls[last]);
        }
    }

    #[test]
    fn max_iters_is_reported() {
        let t = sample_trace(60);
        let cfg = FitConfig { max_iters: 2, ll_threshold: 1e-300, ..Default::default() };
        let r = fit(&t, &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 2);
        assert_eq!(r.log_likelihoods.len(), 3);
    }

    #[test]
    fn fit_many_matches_individual_fits() {
        let t = sample_trace(50);
        let cfgs: Vec<FitConfig> = (0..4).map(|s| FitConfig { rng_seed: s, ..Default::default() }).collect();
        let many = fit_many(&t, &cfgs, Exec::Parallel);
        for (c, r) in cfgs.iter().zip(many) {
            let one = fit(&t, c).unwrap();
            assert_eq!(r.unwrap().log_likelihoods, one.log_likelihoods);
        }
    }
}
