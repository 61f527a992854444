//! Multi-seed training sweep: rayon data-parallel vs sequential.

use chrono::NaiveDate;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use qtrader::market_data::{Candle, MarketSeries, Representation};
use qtrader::trading_env::EnvConfig;
use qtrader::trainer::{run_seeds_parallel, run_seeds_sequential, TrainConfig};

fn synth_series(days: usize, split: usize) -> MarketSeries {
    let candles: Vec<Candle> = (0..days)
        .map(|i| {
            let c = 100.0 * (1.0 + 0.001 * i as f64 + 0.01 * (i as f64 * 0.7).sin());
            Candle::new(
                NaiveDate::from_ymd_opt(2018, 1, 1).unwrap() + chrono::Duration::days(i as i64),
                c * 0.999,
                c * 1.003,
                c * 0.996,
                c,
                None,
            )
            .unwrap()
        })
        .collect();
    MarketSeries::new("SYN", candles, split).unwrap()
}

fn bench_sweep(c: &mut Criterion) {
    let series = synth_series(160, 120);
    let env_cfg = EnvConfig {
        representation: Representation::Vanilla,
        window: 1,
        ..EnvConfig::default()
    };
    let cfg = TrainConfig {
        episodes: 3,
        hidden: vec![32, 32],
        replay_capacity: 256,
        batch_size: 16,
        target_sync: 64,
        ..TrainConfig::default()
    };
    let seeds: Vec<u64> = (0..8).collect();

    let mut group = c.benchmark_group("seed_sweep");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("sequential", seeds.len()), |b| {
        b.iter(|| run_seeds_sequential(&series, &env_cfg, &cfg, &seeds).unwrap())
    });
    group.bench_function(BenchmarkId::new("parallel", seeds.len()), |b| {
        b.iter(|| run_seeds_parallel(&series, &env_cfg, &cfg, &seeds).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
