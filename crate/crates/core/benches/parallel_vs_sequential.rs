use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mvtraffic::estimation::{fit_many, FitConfig};
use mvtraffic::model::{BinRange, FrameType, GopStructure, PHmmParams, QuantGrid, Trace};
use mvtraffic::netsim::{run_experiment, Mode, SimConfig, Source};
use mvtraffic::synthesis::generate_trace;
use mvtraffic::trellis::{emission_table, forward, TrellisOptions};
use mvtraffic::Exec;

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn model() -> (GopStructure, PHmmParams) {
    let s = GopStructure::new(2, 4, 25.0, {
        let mut l = vec![FrameType::B; 8];
        l[0] = FrameType::I;
        l[4] = FrameType::P;
        l
    }, vec![16; 8], vec![(1, 0)])
    .unwrap();
    let grid = QuantGrid::new(vec![BinRange::new(0.0, 32_000.0, 16).unwrap(); 8]).unwrap();
    let mut p = PHmmParams::uniform(3, grid, 1.0);
    p.lambda = vec![2.0, 5.0, 9.0];
    for (i, first) in [1usize, 6, 11].into_iter().enumerate() {
        for pmf in p.emissions[i].iter_mut() {
            *pmf = vec![0.0; 16];
            pmf[first] = 0.2;
            pmf[first + 1] = 0.6;
            pmf[first + 2] = 0.2;
        }
    }
    (s, p)
}

fn trace(len: usize) -> (Trace, PHmmParams) {
    let (s, p) = model();
    (generate_trace(&p, &s, len, 1).unwrap(), p)
}

fn bench_emissions(c: &mut Criterion) {
    let (t, p) = trace(20_000);
    let bins = p.grid.quantize(&t).unwrap();
    let mut g = c.benchmark_group("emission_table");
    for (name, exec) in POLICIES {
        g.bench_function(name, |b| b.iter(|| emission_table(black_box(&bins), &p, exec).unwrap()));
    }
    g.finish();
}

fn bench_forward(c: &mut Criterion) {
    let (t, p) = trace(1500);
    let mut g = c.benchmark_group("forward");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        let opts = TrellisOptions { exec, ..Default::default() };
        g.bench_function(name, |b| b.iter(|| forward(black_box(&t), &p, &opts).unwrap()));
    }
    g.finish();
}

fn bench_monte_carlo(c: &mut Criterion) {
    let (t, _) = trace(3000);
    let src = Source::Trace(t);
    let cfg = SimConfig { monte_carlo_runs: 16, ..Default::default() };
    let mut g = c.benchmark_group("monte_carlo");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_with_input(BenchmarkId::new(name, cfg.monte_carlo_runs), &exec, |b, &exec| {
            b.iter(|| run_experiment(&src, &Mode::Multiview, &cfg, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_fit_many(c: &mut Criterion) {
    let (t, _) = trace(200);
    let configs: Vec<FitConfig> = (0..8).map(|s| FitConfig { rng_seed: s, max_iters: 20, ..Default::default() }).collect();
    let mut g = c.benchmark_group("fit_many");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(name, |b| b.iter(|| fit_many(black_box(&t), &configs, exec)));
    }
    g.finish();
}

criterion_group!(benches, bench_emissions, bench_forward, bench_monte_carlo, bench_fit_many);
criterion_main!(benches);
