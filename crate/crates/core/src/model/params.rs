use std::fmt;

use serde::{Deserialize, Serialize};

use super::grid::QuantGrid;

/// Tolerance on every "sums to one" invariant.
pub const PROB_TOL: f64 = 1e-9;

/// Full parameter set of the explicit-duration Poisson HMM.
///
/// * `pi[i]` initial state distribution
/// * `trans[i][j]` transition probabilities, zero diagonal
/// * `lambda[i]` Poisson mean of the extra-stay count
/// * `emissions[i][f][b]` per-state, per-position categorical pmf over the
///   bins of `grid` position `f`; the GOP emission is their product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PHmmParams {
    pub pi: Vec<f64>,
    pub trans: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub emissions: Vec<Vec<Vec<f64>>>,
    pub grid: QuantGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape(String),
    NonFinite(String),
    PiNotNormalized { sum: f64 },
    NegativePi { state: usize },
    RowNotNormalized { row: usize, sum: f64 },
    NegativeTransition { row: usize, col: usize },
    NonzeroDiagonal { state: usize, value: f64 },
    NegativeLambda { state: usize, value: f64 },
    EmissionNotNormalized { state: usize, pos: usize, sum: f64 },
    NegativeEmission { state: usize, pos: usize, bin: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(m) => write!(f, "shape: {m}"),
            Violation::NonFinite(m) => write!(f, "non-finite value in {m}"),
            Violation::PiNotNormalized { sum } => write!(f, "initial distribution sums to {sum}"),
            Violation::NegativePi { state } => write!(f, "negative initial probability for state {state}"),
            Violation::RowNotNormalized { row, sum } => {
                write!(f, "transition row {row} not normalized (sum {sum})")
            }
            Violation::NegativeTransition { row, col } => {
                write!(f, "negative transition probability a[{row}][{col}]")
            }
            Violation::NonzeroDiagonal { state, value } => {
                write!(f, "nonzero diagonal a[{state}][{state}] = {value}")
            }
            Violation::NegativeLambda { state, value } => {
                write!(f, "negative Poisson mean for state {state}: {value}")
            }
            Violation::EmissionNotNormalized { state, pos, sum } => {
                write!(f, "emission not normalized: state {state}, position {pos} (sum {sum})")
            }
            Violation::NegativeEmission { state, pos, bin } => {
                write!(f, "negative emission probability: state {state}, position {pos}, bin {bin}")
            }
        }
    }
}

impl PHmmParams {
    pub fn num_states(&self) -> usize {
        self.pi.len()
    }

    pub fn positions(&self) -> usize {
        self.grid.positions()
    }

    /// Uniform π, uniform off-diagonal transitions, flat emissions and a
    /// common Poisson mean.
    pub fn uniform(num_states: usize, grid: QuantGrid, lambda: f64) -> Self {
        let ns = num_states;
        let pi = vec![1.0 / ns as f64; ns];
        let trans = (0..ns)
            .map(|i| {
                (0..ns)
                    .map(|j| if i == j || ns == 1 { 0.0 } else { 1.0 / (ns - 1) as f64 })
                    .collect()
            })
            .collect();
        let emissions = (0..ns)
            .map(|_| {
                grid.ranges()
                    .iter()
                    .map(|r| vec![1.0 / r.bins as f64; r.bins])
                    .collect()
            })
            .collect();
        PHmmParams {
            pi,
            trans,
            lambda: vec![lambda; ns],
            emissions,
            grid,
        }
    }

    #[cfg(test)]
    pub(crate) fn uniform_for_tests(num_states: usize, bins: &[usize], lambda: f64) -> Self {
        use super::grid::BinRange;
        let grid = QuantGrid::new(
            bins.iter()
                .map(|&b| BinRange::new(0.0, b as f64, b).unwrap())
                .collect(),
        )
        .unwrap();
        Self::uniform(num_states, grid, lambda)
    }

    /// Mean frame size at each position under state `i`.
    pub fn mean_sizes(&self, state: usize) -> Vec<f64> {
        self.emissions[state]
            .iter()
            .zip(self.grid.ranges())
            .map(|(pmf, r)| pmf.iter().enumerate().map(|(b, p)| p * r.midpoint(b)).sum())
            .collect()
    }
}

/// Checks every parameter invariant and reports all violations found.
///
/// A single-state model has no transitions to make; its matrix must be
/// `[[0]]`.
pub fn validate_params(p: &PHmmParams) -> Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    let ns = p.pi.len();
    if ns == 0 {
        v.push(Violation::Shape("no states".into()));
        return Err(v);
    }
    if p.trans.len() != ns || p.trans.iter().any(|r| r.len() != ns) {
        v.push(Violation::Shape(format!("transition matrix is not {ns}x{ns}")));
    }
    if p.lambda.len() != ns {
        v.push(Violation::Shape(format!("{} Poisson means for {ns} states", p.lambda.len())));
    }
    if p.emissions.len() != ns {
        v.push(Violation::Shape(format!("{} emission sets for {ns} states", p.emissions.len())));
    }
    if !v.is_empty() {
        return Err(v);
    }

    if p.pi.iter().any(|x| !x.is_finite()) {
        v.push(Violation::NonFinite("pi".into()));
    }
    for (i, &x) in p.pi.iter().enumerate() {
        if x < 0.0 {
            v.push(Violation::NegativePi { state: i });
        }
    }
    let s: f64 = p.pi.iter().sum();
    if (s - 1.0).abs() > PROB_TOL {
        v.push(Violation::PiNotNormalized { sum: s });
    }

    for (i, row) in p.trans.iter().enumerate() {
        if row.iter().any(|x| !x.is_finite()) {
            v.push(Violation::NonFinite(format!("transition row {i}")));
            continue;
        }
        if row[i] != 0.0 {
            v.push(Violation::NonzeroDiagonal { state: i, value: row[i] });
        }
        for (j, &x) in row.iter().enumerate() {
            if x < 0.0 {
                v.push(Violation::NegativeTransition { row: i, col: j });
            }
        }
        let s: f64 = row.iter().sum();
        let target = if ns == 1 { 0.0 } else { 1.0 };
        if (s - target).abs() > PROB_TOL {
            v.push(Violation::RowNotNormalized { row: i, sum: s });
        }
    }

    for (i, &l) in p.lambda.iter().enumerate() {
        if !l.is_finite() {
            v.push(Violation::NonFinite(format!("lambda[{i}]")));
        } else if l < 0.0 {
            v.push(Violation::NegativeLambda { state: i, value: l });
        }
    }

    let nf = p.grid.positions();
    for (i, per_pos) in p.emissions.iter().enumerate() {
        if per_pos.len() != nf {
            v.push(Violation::Shape(format!(
                "state {i} has {} emission pmfs, grid has {nf} positions",
                per_pos.len()
            )));
            continue;
        }
        for (f, pmf) in per_pos.iter().enumerate() {
            if pmf.len() != p.grid.bins(f) {
                v.push(Violation::Shape(format!(
                    "state {i} position {f}: {} bins, grid has {}",
                    pmf.len(),
                    p.grid.bins(f)
                )));
                continue;
            }
            if pmf.iter().any(|x| !x.is_finite()) {
                v.push(Violation::NonFinite(format!("emission state {i} position {f}")));
                continue;
            }
            for (b, &x) in pmf.iter().enumerate() {
                if x < 0.0 {
                    v.push(Violation::NegativeEmission { state: i, pos: f, bin: b });
                }
            }
            let s: f64 = pmf.iter().sum();
            if (s - 1.0).abs() > PROB_TOL {
                v.push(Violation::EmissionNotNormalized { state: i, pos: f, sum: s });
            }
        }
    }

    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> PHmmParams {
        PHmmParams::uniform_for_tests(2, &[3, 4], 1.0)
    }

    #[test]
    fn valid_model_passes() {
        assert_eq!(validate_params(&two_state()), Ok(()));
        assert_eq!(validate_params(&PHmmParams::uniform_for_tests(1, &[3], 0.5)), Ok(()));
    }

    #[test]
    fn reports_nonzero_diagonal() {
        let mut p = two_state();
        p.trans[0] = vec![0.1, 0.9];
        let errs = validate_params(&p).unwrap_err();
        assert!(errs
            .iter()
            .any(|e| matches!(e, Violation::NonzeroDiagonal { state: 0, .. })));
        assert!(errs[0].to_string().contains("nonzero diagonal"));
    }

    #[test]
    fn reports_unnormalized_emission() {
        let mut p = two_state();
        p.emissions[1][0] = vec![0.3, 0.3, 0.3];
        let errs = validate_params(&p).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].to_string().contains("emission not normalized"));
    }

    #[test]
    fn reports_every_violation() {
        let mut p = two_state();
        p.pi = vec![0.7, 0.7];
        p.lambda[1] = -1.0;
        p.trans[1] = vec![0.5, 0.5];
        p.emissions[0][1][0] = -0.25;
        let errs = validate_params(&p).unwrap_err();
        assert!(errs.len() >= 5, "{errs:?}");
    }
}
