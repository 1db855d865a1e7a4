mod support;

use std::collections::BTreeMap;

use lvclear::{match_orders, Order};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use support::{max_crossing_volume, random_book};

fn by_bus(orders: &[Order]) -> BTreeMap<u32, &Order> {
    orders.iter().map(|o| (o.bus.0, o)).collect()
}

proptest! {
    #[test]
    fn matches_max_flow_volume(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (buys, sells) = random_book(&mut rng, 6);
        let out = match_orders(&buys, &sells);
        prop_assert!((out.total_matched - max_crossing_volume(&buys, &sells)).abs() < 1e-9);
    }

    #[test]
    fn trades_cross_and_respect_quantities(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (buys, sells) = random_book(&mut rng, 8);
        let out = match_orders(&buys, &sells);
        let (b, s) = (by_bus(&buys), by_bus(&sells));
        let mut used: BTreeMap<u32, f64> = BTreeMap::new();
        for t in &out.trades {
            let (buy, sell) = (b[&t.buyer_bus.0], s[&t.seller_bus.0]);
            prop_assert!(buy.price >= sell.price);
            prop_assert!((t.match_price - 0.5 * (buy.price + sell.price)).abs() < 1e-12);
            prop_assert!(t.quantity > 0.0);
            *used.entry(buy.bus.0).or_default() += t.quantity;
            *used.entry(sell.bus.0).or_default() += t.quantity;
        }
        for o in buys.iter().chain(&sells) {
            prop_assert!(used.get(&o.bus.0).copied().unwrap_or(0.0) <= o.quantity + 1e-12);
        }
        let sum: f64 = out.trades.iter().map(|t| t.quantity).sum();
        prop_assert!((sum - out.total_matched).abs() < 1e-9);
    }

    #[test]
    fn input_order_does_not_matter(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut buys, mut sells) = random_book(&mut rng, 6);
        let first = match_orders(&buys, &sells);
        buys.shuffle(&mut rng);
        sells.shuffle(&mut rng);
        prop_assert_eq!(first, match_orders(&buys, &sells));
    }
}
