//! Validation statistics on frame-size series.
//!
//! Quantiles use linear interpolation between order statistics: for sorted
//! `x[0..L]`, `Q(p) = x[⌊h⌋] + (h − ⌊h⌋)(x[⌊h⌋+1] − x[⌊h⌋])` with
//! `h = (L − 1)p`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (`1/(L−1)`; zero for a single value).
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub peak_to_mean: f64,
}

pub fn mean(series: &[f64]) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(series.iter().sum::<f64>() / series.len() as f64)
}

pub fn summary(series: &[f64]) -> Result<Summary> {
    let m = mean(series)?;
    let l = series.len();
    let std = if l < 2 {
        0.0
    } else {
        (series.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (l - 1) as f64).sqrt()
    };
    let min = series.iter().copied().fold(f64::INFINITY, f64::min);
    let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Summary {
        mean: m,
        std,
        min,
        max,
        peak_to_mean: max / m,
    })
}

/// Sample autocorrelation for lags `0..=max_lag`.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if series.len() <= max_lag {
        return Err(Error::InvalidArgument(format!(
            "series of length {} is too short for lag {max_lag}",
            series.len()
        )));
    }
    let m = mean(series)?;
    let dev: Vec<f64> = series.iter().map(|x| x - m).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::ConstantSeries);
    }
    Ok((0..=max_lag)
        .map(|h| {
            let num: f64 = dev[..dev.len() - h].iter().zip(&dev[h..]).map(|(a, b)| a * b).sum();
            (num / denom).clamp(-1.0, 1.0)
        })
        .collect())
}

fn sorted(series: &[f64]) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::EmptyInput);
    }
    if series.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidArgument("series contains NaN".into()));
    }
    let mut s = series.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let h = (s.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

fn check_prob(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")))
    }
}

pub fn quantiles(series: &[f64], probs: &[f64]) -> Result<Vec<f64>> {
    let s = sorted(series)?;
    probs
        .iter()
        .map(|&p| {
            check_prob(p)?;
            Ok(quantile_sorted(&s, p))
        })
        .collect()
}

/// Probabilities `(m+1)/(num_points+1)` for `m = 0..num_points`.
pub fn qq_probs(num_points: usize) -> Vec<f64> {
    (0..num_points)
        .map(|m| (m + 1) as f64 / (num_points + 1) as f64)
        .collect()
}

/// Paired quantiles `(Q_a(p), Q_b(p))` on the equispaced grid of [`qq_probs`].
pub fn qq_points(a: &[f64], b: &[f64], num_points: usize) -> Result<Vec<(f64, f64)>> {
    if num_points == 0 {
        return Err(Error::InvalidArgument("need at least one Q-Q point".into()));
    }
    let probs = qq_probs(num_points);
    let qa = quantiles(a, &probs)?;
    let qb = quantiles(b, &probs)?;
    Ok(qa.into_iter().zip(qb).collect())
}

/// Mean of `|Q_b(p) − Q_a(p)| / Q_a(p)` over `p` in `[lo, hi]`, sampled at
/// `num_points` equispaced probabilities. `a` is the reference.
pub fn qq_relative_deviation(a: &[f64], b: &[f64], lo: f64, hi: f64, num_points: usize) -> Result<f64> {
    check_prob(lo)?;
    check_prob(hi)?;
    if !(hi > lo) || num_points < 2 {
        return Err(Error::InvalidArgument("need lo < hi and at least two points".into()));
    }
    let probs: Vec<f64> = (0..num_points)
        .map(|m| lo + (hi - lo) * m as f64 / (num_points - 1) as f64)
        .collect();
    let qa = quantiles(a, &probs)?;
    let qb = quantiles(b, &probs)?;
    let mut total = 0.0;
    for (x, y) in qa.iter().zip(&qb) {
        if *x == 0.0 {
            return Err(Error::InvalidArgument("reference quantile is zero".into()));
        }
        total += ((y - x) / x).abs();
    }
    Ok(total / num_points as f64)
}

/// Lags `h ≥ 1` that are strict local maxima of the acf.
pub fn acf_peak_lags(rho: &[f64]) -> Vec<usize> {
    (1..rho.len().saturating_sub(1))
        .filter(|&h| rho[h] > rho[h - 1] && rho[h] > rho[h + 1])
        .collect()
}

/// Total variation distance `½ Σ |p − q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Mismatch(format!("pmfs of size {} and {}", p.len(), q.len())));
    }
    if p.is_empty() {
        return Err(Error::EmptyInput);
    }
    for (name, d) in [("p", p), ("q", q)] {
        let s: f64 = d.iter().sum();
        if d.iter().any(|&x| !(x >= 0.0)) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("{name} is not a pmf")));
        }
    }
    Ok((0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn acf_examples() {
        let r = acf(&[1.0, 2.0, 3.0, 4.0], 1).unwrap();
        assert_eq!(r[0], 1.0);
        assert!((r[1] - 0.25).abs() < 1e-15);
        let alt: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let r = acf(&alt, 1).unwrap();
        // (L-1)/L for the one-sided estimator
        assert!((r[1] - (-0.9)).abs() < 1e-15);
        assert!(matches!(acf(&[3.0; 5], 2), Err(Error::ConstantSeries)));
        assert!(acf(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(quantiles(&[4.0, 1.0, 3.0, 2.0], &[0.5]).unwrap(), vec![2.5]);
        assert_eq!(quantiles(&[1.0, 2.0, 3.0, 4.0], &[0.0, 1.0]).unwrap(), vec![1.0, 4.0]);
        assert!(quantiles(&[], &[0.5]).is_err());
        assert!(quantiles(&[1.0], &[1.5]).is_err());
    }

    #[test]
    fn qq_examples() {
        let a: Vec<f64> = (0..37).map(|i| ((i * 7919) % 101) as f64).collect();
        for (x, y) in qq_points(&a, &a, 20).unwrap() {
            assert_eq!(x, y);
        }
        let b: Vec<f64> = a.iter().map(|x| 2.0 * x).collect();
        for (x, y) in qq_points(&a, &b, 20).unwrap() {
            assert!((y - 2.0 * x).abs() < 1e-12);
        }
        assert_eq!(qq_relative_deviation(&b, &b, 0.05, 0.95, 50).unwrap(), 0.0);
    }

    #[test]
    fn summary_examples() {
        let s = summary(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!((s.mean, s.std, s.peak_to_mean), (5.0, 0.0, 1.0));
        let s = summary(&[0.0, 10.0]).unwrap();
        assert_eq!(s.mean, 5.0);
        assert!((s.std - 50f64.sqrt()).abs() < 1e-12);
        assert_eq!(summary(&[2.0]).unwrap().std, 0.0);
        assert!(summary(&[]).is_err());
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(tv_distance(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), 0.5);
        assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn peaks() {
        assert_eq!(acf_peak_lags(&[1.0, 0.1, 0.5, 0.2, 0.6, 0.1]), vec![2, 4]);
    }

    proptest! {
        #[test]
        fn acf_bounded(xs in prop::collection::vec(-1e3f64..1e3, 3..60)) {
            prop_assume!(xs.iter().any(|&x| x != xs[0]));
            let r = acf(&xs, xs.len() - 1).unwrap();
            prop_assert!((r[0] - 1.0).abs() < 1e-12);
            prop_assert!(r.iter().all(|v| v.abs() <= 1.0));
        }

        #[test]
        fn quantiles_monotone(xs in prop::collection::vec(-1e3f64..1e3, 1..60),
                              mut ps in prop::collection::vec(0.0f64..=1.0, 1..20)) {
            ps.sort_by(f64::total_cmp);
            let q = quantiles(&xs, &ps).unwrap();
            prop_assert!(q.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
