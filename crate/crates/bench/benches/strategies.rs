use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mbc_core::engine::{episode_rng, run_episode, DEFAULT_CAP};
use mbc_core::grade::{build_lattice, grade_of, joint_bellman_oracle};
use mbc_core::model::{CoinState, ProblemParams};
use mbc_core::strategy::{StrategyKind, StrategyState};

fn params() -> ProblemParams {
    ProblemParams::new(0.5, 0.1, 0.1, 0.01).unwrap()
}

fn episodes(c: &mut Criterion) {
    let p = params();
    let mut group = c.benchmark_group("episode");
    for kind in [StrategyKind::LikelihoodToss, StrategyKind::Naive, StrategyKind::RoundRobin { pool: 10 }] {
        group.bench_function(kind.name(), |b| {
            let mut i = 0u64;
            b.iter(|| {
                i += 1;
                run_episode(&p, kind, &mut episode_rng(1, i), DEFAULT_CAP).unwrap()
            })
        });
    }
    group.finish();
}

// Selection cost as the number of opened coins grows; should scale with log n.
fn selection(c: &mut Criterion) {
    let p = params();
    let mut group = c.benchmark_group("select_next");
    for n in [16usize, 1_024, 65_536] {
        let coins: Vec<CoinState> = (0..n)
            .map(|i| CoinState::new(0, 1, -((i % 97) as f64) * 0.01 - 0.1))
            .chain(std::iter::once(CoinState::new(1, 0, 0.5)))
            .collect();
        let state = StrategyState::from_history(StrategyKind::LikelihoodToss, p, coins).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &state, |b, s| {
            b.iter_batched(
                || s.clone(),
                |mut s| {
                    let mut rng = episode_rng(0, 0);
                    let choice = s.select_next(&mut rng).unwrap();
                    s.record_outcome(black_box(choice), mbc_core::Outcome::Tails).unwrap()
                },
                criterion::BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn grades(c: &mut Criterion) {
    let p = ProblemParams::new(0.5, 0.1, 0.5, 0.1).unwrap();
    let lattice = build_lattice(&p, 4.0).unwrap();
    c.bench_function("grade_of origin", |b| b.iter(|| grade_of(black_box(9), &lattice, 1e-6).unwrap()));
    c.bench_function("joint oracle M=4", |b| b.iter(|| joint_bellman_oracle(&p, 4.0, 1e-8).unwrap()));
}

criterion_group!(benches, episodes, selection, grades);
criterion_main!(benches);
