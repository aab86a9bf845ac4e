use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pairlab::econometrics::{windowed_pair_scores, PairScoreConfig};
use pairlab::grid::{grid_search, GridConfig, GridSpec};
use pairlab::ledger::FeeModel;
use pairlab::market_data::{AlignedPairSeries, Interval};
use pairlab::parallel::Execution;
use pairlab::synthetic::{cointegrated_pair, PeriodicSpread};

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn grid(c: &mut Criterion) {
    let series = PeriodicSpread::pulses(900, &[1, 3, 5, 7, 9]).series(4000);
    let spec = GridSpec {
        open_thresholds: vec![1.5, 2.0, 2.5, 3.0],
        close_thresholds: vec![0.2, 0.4, 1.0],
        windows: vec![500, 900, 1000],
    };
    let mut group = c.benchmark_group("grid_search");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = GridConfig { execution: exec, ..GridConfig::new(FeeModel::default()) };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| grid_search(&series, &spec, cfg).unwrap())
        });
    }
    group.finish();
}

fn pair_scores(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (y, x) = cointegrated_pair(&mut rng, 20_000, 1.5, 1.0);
    let lift = |v: Vec<f64>| v.into_iter().map(|p| p + 1000.0).collect::<Vec<_>>();
    let (y, x) = (lift(y), lift(x));
    let ts = (0..y.len() as i64).map(|k| k * 60_000).collect();
    let series = AlignedPairSeries::new("Y", "X", Interval::M1, ts, y, x).unwrap();
    let mut group = c.benchmark_group("windowed_pair_scores");
    for (name, exec) in MODES {
        let cfg = PairScoreConfig { step: 250, execution: exec, ..PairScoreConfig::new(1000) };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| windowed_pair_scores(&series, cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, grid, pair_scores);
criterion_main!(benches);
