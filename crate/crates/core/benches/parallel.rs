// Sequential vs rayon execution of the data-parallel parts of the crate.
// Build with `--no-default-features` to see the parallel arm fall back.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use wbwf_core::phy::{self, ChannelParams};
use wbwf_core::sim::{self, Destination, NodeSpec, PttAction, Scenario};
use wbwf_core::tdma::{plan_configurations_with, PlannerInput};
use wbwf_core::{Execution, TdmaConfig};

const STRATEGIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn planner(c: &mut Criterion) {
    let mut group = c.benchmark_group("planner");
    for max_payload in [640u32, 1280] {
        let input = PlannerInput { max_be_payload_bytes: max_payload, ..PlannerInput::default() };
        for (name, exec) in STRATEGIES {
            group.bench_with_input(BenchmarkId::new(name, max_payload), &input, |b, input| {
                b.iter(|| plan_configurations_with(black_box(input), exec).unwrap())
            });
        }
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let params = ChannelParams::default();
    let per = phy::link_sample(650.0, 520, &params).unwrap().per;
    let mut group = c.benchmark_group("monte_carlo_per");
    for draws in [1u64 << 18, 1 << 21] {
        group.throughput(Throughput::Elements(draws));
        for (name, exec) in STRATEGIES {
            group.bench_with_input(BenchmarkId::new(name, draws), &draws, |b, &draws| {
                b.iter(|| phy::monte_carlo_loss_fraction(black_box(per), draws, 7, exec))
            });
        }
    }
    group.finish();
}

fn busy_network() -> Scenario {
    let nodes = (0..8).map(|i| NodeSpec::at(i, 120.0 * (i % 4) as f64, 150.0 * (i / 4) as f64)).collect();
    let mut s = Scenario::new(TdmaConfig::solution(3).unwrap(), nodes, 2_000_000, 0);
    for (k, node) in [0, 3, 5, 6].into_iter().enumerate() {
        s.ptt.push(PttAction {
            node,
            press_us: 10_000 + 300_000 * k as u64,
            talk_us: 900_000,
            destination: Destination::Broadcast,
        });
    }
    s
}

fn seed_sweep(c: &mut Criterion) {
    let scenario = busy_network();
    let mut group = c.benchmark_group("seed_sweep");
    group.sample_size(10);
    for runs in [8u64, 32] {
        let seeds: Vec<u64> = (0..runs).collect();
        group.throughput(Throughput::Elements(runs));
        for (name, exec) in STRATEGIES {
            group.bench_with_input(BenchmarkId::new(name, runs), &seeds, |b, seeds| {
                b.iter(|| sim::sweep(black_box(&scenario), seeds, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, planner, monte_carlo, seed_sweep);
criterion_main!(benches);
