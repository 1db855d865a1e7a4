use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lvclear::{clear, dc_power_flow, match_orders, BusId};
use lvclear_bench::{book, feeder, problem};

fn clearance(c: &mut Criterion) {
    let mut group = c.benchmark_group("clear");
    for (buses, trades) in [(10, 5), (44, 20), (80, 40)] {
        let p = problem(buses, trades, 7);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{buses}x{trades}")), &p, |b, p| {
            b.iter(|| clear(p).unwrap())
        });
    }
    group.finish();
}

fn power_flow(c: &mut Criterion) {
    let mut group = c.benchmark_group("dc_power_flow");
    for buses in [10, 80, 300] {
        let net = feeder(buses, 1);
        let inj: BTreeMap<BusId, f64> = net.non_reference_buses().map(|b| (b.id, 0.5)).collect();
        group.bench_with_input(BenchmarkId::from_parameter(buses), &(net, inj), |b, (net, inj)| {
            b.iter(|| dc_power_flow(net, inj).unwrap())
        });
    }
    group.finish();
}

fn matching(c: &mut Criterion) {
    let mut group = c.benchmark_group("match_orders");
    for per_side in [10, 100, 1000] {
        let (buys, sells) = book(per_side, 5);
        group.bench_with_input(BenchmarkId::from_parameter(per_side), &(buys, sells), |b, (buys, sells)| {
            b.iter(|| match_orders(buys, sells))
        });
    }
    group.finish();
}

criterion_group!(benches, clearance, power_flow, matching);
criterion_main!(benches);
