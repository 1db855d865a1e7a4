//! Seeded instance generators for the benchmarks.

use lvclear::{Bus, ClearanceProblem, Interval, Line, Network, Order, Trade};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Radial feeder of `buses` buses with bus 0 as reference and roomy limits,
/// so the no-trade point is always feasible.
pub fn feeder(buses: usize, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = vec![Bus::reference(0)];
    let mut lines = Vec::new();
    for i in 1..buses as u32 {
        let bounds = Interval::new(0.0, rng.gen_range(3.0..10.0));
        nodes.push(Bus::new(i, bounds, bounds));
        let parent = rng.gen_range(0..i);
        lines.push(Line::new(parent, i, rng.gen_range(10.0..80.0), rng.gen_range(5.0..30.0)));
    }
    Network::new(nodes, lines, 0, 1_000.0, 100.0)
}

/// `count` random trades between distinct non-reference buses of `net`.
pub fn trades(net: &Network, count: usize, seed: u64) -> Vec<Trade> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = net.buses().len() as u32;
    (0..count)
        .map(|t| {
            let seller = rng.gen_range(1..n);
            let mut buyer = rng.gen_range(1..n);
            while buyer == seller {
                buyer = rng.gen_range(1..n);
            }
            Trade::new(format!("t{t}"), seller, buyer, rng.gen_range(0.5..8.0))
        })
        .collect()
}

pub fn problem(buses: usize, count: usize, seed: u64) -> ClearanceProblem {
    let net = feeder(buses, seed);
    let trades = trades(&net, count, seed.wrapping_add(1));
    ClearanceProblem::new(net, trades).expect("generated trades are valid")
}

/// Buy and sell books of `per_side` orders each.
pub fn book(per_side: usize, seed: u64) -> (Vec<Order>, Vec<Order>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let buys = (0..per_side)
        .map(|i| Order::buy(format!("b{i}"), i as u32 + 1, rng.gen_range(0.1..0.4), rng.gen_range(0.1..5.0)))
        .collect();
    let sells = (0..per_side)
        .map(|i| Order::sell(format!("s{i}"), i as u32 + 1, rng.gen_range(0.05..0.35), rng.gen_range(0.1..5.0)))
        .collect();
    (buys, sells)
}
