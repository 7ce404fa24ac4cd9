mod common;

use common::{close, random_instance, Oracle};
use mvtraffic::estimation::m_step_quantities;
use mvtraffic::trellis::{posteriors, TrellisOptions};
use mvtraffic::Exec;
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn opts() -> TrellisOptions {
    TrellisOptions { retain_xi: true, ..Default::default() }
}

#[test]
fn likelihood_matches_enumeration() {
    for seed in 0..300 {
        let inst = random_instance(seed);
        let o = Oracle::new(&inst.params, &inst.bins);
        let post = posteriors(&inst.trace, &inst.params, &opts()).unwrap();
        assert!(close(post.log_likelihood(), o.likelihood.ln(), TOL), "seed {seed}: {} vs {}", post.log_likelihood(), o.likelihood.ln());
    }
}

#[test]
fn gamma_and_xi_match_enumeration() {
    for seed in 0..300 {
        let inst = random_instance(seed);
        let o = Oracle::new(&inst.params, &inst.bins);
        let post = posteriors(&inst.trace, &inst.params, &opts()).unwrap();
        let gd = &post.backward.gamma_dot;
        let xi = post.backward.xi_dot.as_ref().unwrap();
        let len = inst.bins.len();
        let ns = inst.params.num_states();
        for n in 0..len {
            for i in 0..ns {
                assert!(close(post.state_posterior(i, n), o.state_post[n][i], TOL), "seed {seed} n {n} i {i}");
                for k in 0..len - n {
                    assert!(close(gd.get(i, k, n), o.gamma_dot[n][i][k], TOL), "seed {seed} gamma({i},{k},{n})");
                    if n >= 1 {
                        for j in 0..ns {
                            assert!(close(xi.get(j, i, k, n), o.xi_dot[n][j][i][k], TOL), "seed {seed} xi({j},{i},{k},{n})");
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn m_step_matches_enumeration() {
    for seed in 0..300 {
        let inst = random_instance(seed);
        let o = Oracle::new(&inst.params, &inst.bins);
        let post = posteriors(&inst.trace, &inst.params, &opts()).unwrap();
        let q = m_step_quantities(&post, &inst.bins, &inst.params, Exec::Sequential);
        let ns = inst.params.num_states();
        for i in 0..ns {
            assert!(close(q.pi[i], o.pi[i], TOL));
            match (&q.trans[i], o.trans_row(i)) {
                (Some(a), Some(b)) => assert!(a.iter().zip(&b).all(|(x, y)| close(*x, *y, TOL)), "seed {seed}"),
                (None, None) => {}
                (a, b) => panic!("seed {seed}: {a:?} vs {b:?}"),
            }
            for (f, w) in q.emission_weights[i].iter().enumerate() {
                for (b, x) in w.iter().enumerate() {
                    assert!(close(*x, o.emission_weights[i][f][b], TOL));
                }
            }
            let (num, den) = q.lambda_terms[i];
            assert!(close(num, o.lambda_terms[i].0, TOL) && close(den, o.lambda_terms[i].1, TOL), "seed {seed} state {i}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posteriors_are_normalized(seed in any::<u64>()) {
        let inst = random_instance(seed);
        let post = posteriors(&inst.trace, &inst.params, &TrellisOptions::default()).unwrap();
        for n in 0..inst.bins.len() {
            let s: f64 = (0..inst.params.num_states()).map(|i| post.state_posterior(i, n)).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            let a: f64 = post.forward.alpha[n].iter().sum();
            prop_assert!((a - 1.0).abs() < 1e-12);
        }
    }
}
