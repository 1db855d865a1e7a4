//! Order book and double-auction matching.
//!
//! Buy orders are processed from the lowest bid upwards and each one scans the
//! sell side from the highest ask downwards, taking every ask it can afford
//! (`bid >= ask`). Compatible ask sets are nested by bid, so saturating the
//! least flexible buyer first maximizes the total matched quantity.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{BusId, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub id: String,
    pub side: Side,
    pub bus: BusId,
    /// Currency per kWh: the bid for buys, the ask for sells.
    pub price: f64,
    /// kWh.
    pub quantity: f64,
}

impl Order {
    pub fn buy(id: impl Into<String>, bus: impl Into<BusId>, price: f64, quantity: f64) -> Self {
        Order {
            id: id.into(),
            side: Side::Buy,
            bus: bus.into(),
            price,
            quantity,
        }
    }

    pub fn sell(id: impl Into<String>, bus: impl Into<BusId>, price: f64, quantity: f64) -> Self {
        Order {
            side: Side::Sell,
            ..Order::buy(id, bus, price, quantity)
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |message: &str| {
            Err(Error::InvalidOrder {
                order: self.id.clone(),
                message: message.into(),
            })
        };
        if !(self.price.is_finite() && self.price >= 0.0) {
            return bad("price must be finite and non-negative");
        }
        if !(self.quantity.is_finite() && self.quantity >= 0.0) {
            return bad("quantity must be finite and non-negative");
        }
        Ok(())
    }
}

/// A proposed bilateral trade from `seller_bus` to `buyer_bus`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub id: String,
    pub seller_bus: BusId,
    pub buyer_bus: BusId,
    /// kWh.
    pub quantity: f64,
    /// Midpoint of bid and ask at match time; used for settlement only.
    pub match_price: f64,
}

impl Trade {
    pub fn new(
        id: impl Into<String>,
        seller: impl Into<BusId>,
        buyer: impl Into<BusId>,
        quantity: f64,
    ) -> Self {
        Trade {
            id: id.into(),
            seller_bus: seller.into(),
            buyer_bus: buyer.into(),
            quantity,
            match_price: 0.0,
        }
    }
}

/// Rejects orders with negative or non-finite fields, or on buses the network
/// does not have.
pub fn check_orders(orders: &[Order], net: Option<&Network>) -> Result<()> {
    for order in orders {
        order.check()?;
        if let Some(net) = net {
            if !net.contains_bus(order.bus) {
                return Err(Error::InvalidOrder {
                    order: order.id.clone(),
                    message: format!("unknown bus {}", order.bus),
                });
            }
        }
    }
    Ok(())
}

/// Caps order quantities by what each bus can physically deliver or absorb.
///
/// Per bus, sells are filled against `gen_avail` cheapest first and buys
/// against `load_avail` dearest first; equal prices keep input order. The
/// returned list has the same length and order as the input. Buses absent
/// from an availability map have zero availability.
pub fn cap_orders(
    orders: &[Order],
    gen_avail: &BTreeMap<BusId, f64>,
    load_avail: &BTreeMap<BusId, f64>,
) -> Vec<Order> {
    let mut priority: Vec<usize> = (0..orders.len()).collect();
    // stable sort keeps input order among equal prices
    priority.sort_by(|&a, &b| {
        let (oa, ob) = (&orders[a], &orders[b]);
        match (oa.side, ob.side) {
            (Side::Sell, Side::Sell) => oa.price.total_cmp(&ob.price),
            (Side::Buy, Side::Buy) => ob.price.total_cmp(&oa.price),
            _ => Ordering::Equal,
        }
    });

    let mut remaining: BTreeMap<(Side, BusId), f64> = BTreeMap::new();
    let mut capped = orders.to_vec();
    for i in priority {
        let order = &orders[i];
        let avail = match order.side {
            Side::Sell => gen_avail,
            Side::Buy => load_avail,
        };
        let left = remaining
            .entry((order.side, order.bus))
            .or_insert_with(|| avail.get(&order.bus).copied().unwrap_or(0.0).max(0.0));
        let take = order.quantity.min(*left).max(0.0);
        *left -= take;
        capped[i].quantity = take;
    }
    capped
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchOutcome {
    pub trades: Vec<Trade>,
    pub total_matched: f64,
}

/// Remainders below this are rounding residue, not tradable energy.
pub const DUST_KWH: f64 = 1e-9;

/// Double-auction matching over already capped order books.
///
/// Ties on price are broken by larger quantity first, then by order id.
pub fn match_orders(buys: &[Order], sells: &[Order]) -> MatchOutcome {
    debug_assert!(buys.iter().all(|o| o.side == Side::Buy));
    debug_assert!(sells.iter().all(|o| o.side == Side::Sell));

    let tie = |a: &Order, b: &Order| {
        b.quantity
            .total_cmp(&a.quantity)
            .then_with(|| a.id.cmp(&b.id))
    };
    let mut demand: Vec<&Order> = buys.iter().collect();
    demand.sort_by(|a, b| a.price.total_cmp(&b.price).then_with(|| tie(a, b)));
    let mut supply: Vec<&Order> = sells.iter().collect();
    supply.sort_by(|a, b| b.price.total_cmp(&a.price).then_with(|| tie(a, b)));

    let mut left_to_sell: Vec<f64> = supply.iter().map(|o| o.quantity).collect();
    let mut trades = Vec::new();
    for buy in demand {
        let mut wanted = buy.quantity;
        for (sell, available) in supply.iter().zip(left_to_sell.iter_mut()) {
            if wanted <= DUST_KWH {
                break;
            }
            if *available > DUST_KWH && buy.price >= sell.price {
                let quantity = wanted.min(*available);
                trades.push(Trade {
                    id: format!("t{}", trades.len()),
                    seller_bus: sell.bus,
                    buyer_bus: buy.bus,
                    quantity,
                    match_price: 0.5 * (buy.price + sell.price),
                });
                wanted -= quantity;
                *available -= quantity;
            }
        }
    }
    let total_matched = trades.iter().map(|t| t.quantity).sum();
    MatchOutcome {
        trades,
        total_matched,
    }
}

/// Splits a mixed book by side and matches it.
pub fn match_book(orders: &[Order]) -> MatchOutcome {
    let (buys, sells): (Vec<Order>, Vec<Order>) =
        orders.iter().cloned().partition(|o| o.side == Side::Buy);
    match_orders(&buys, &sells)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OrderRecord {
    id: String,
    side: Side,
    bus: BusId,
    price: f64,
    quantity: f64,
    #[serde(default)]
    block: Option<u32>,
}

/// Orders read from a CSV file, with the optional `block` column.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOrder {
    pub block: Option<u32>,
    pub order: Order,
}

/// Reads `id,side,bus,price,quantity[,block]`.
pub fn read_orders<R: Read>(reader: R) -> Result<Vec<BlockOrder>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for record in csv.deserialize::<OrderRecord>() {
        let record = record.map_err(|e| Error::csv("orders", e))?;
        let order = Order {
            id: record.id,
            side: record.side,
            bus: record.bus,
            price: record.price,
            quantity: record.quantity,
        };
        order.check()?;
        out.push(BlockOrder {
            block: record.block,
            order,
        });
    }
    Ok(out)
}

pub fn read_trades<R: Read>(reader: R) -> Result<Vec<Trade>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    csv.deserialize()
        .map(|r| r.map_err(|e| Error::csv("trades", e)))
        .collect()
}

pub fn write_trades<W: Write>(writer: W, trades: &[Trade]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    if trades.is_empty() {
        csv.write_record(["id", "seller_bus", "buyer_bus", "quantity", "match_price"])
            .map_err(|e| Error::csv("trades", e))?;
    }
    for trade in trades {
        csv.serialize(trade).map_err(|e| Error::csv("trades", e))?;
    }
    csv.flush().map_err(|e| Error::csv("trades", e.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn avail(pairs: &[(u32, f64)]) -> BTreeMap<BusId, f64> {
        pairs.iter().map(|&(b, v)| (BusId(b), v)).collect()
    }

    fn quantities(orders: &[Order]) -> Vec<f64> {
        orders.iter().map(|o| o.quantity).collect()
    }

    #[test]
    fn sell_capped_by_generation() {
        let capped = cap_orders(&[Order::sell("s", 1, 1.0, 5.0)], &avail(&[(1, 3.0)]), &avail(&[]));
        assert_eq!(quantities(&capped), [3.0]);
    }

    #[test]
    fn orders_within_caps_unchanged() {
        let orders = vec![Order::sell("s", 1, 1.0, 2.0), Order::buy("b", 2, 1.0, 1.0)];
        let capped = cap_orders(&orders, &avail(&[(1, 3.0)]), &avail(&[(2, 1.0)]));
        assert_eq!(capped, orders);
    }

    #[test]
    fn equal_price_truncation_keeps_input_order() {
        let orders = vec![Order::sell("a", 1, 1.0, 4.0), Order::sell("b", 1, 1.0, 4.0)];
        let capped = cap_orders(&orders, &avail(&[(1, 6.0)]), &avail(&[]));
        assert_eq!(quantities(&capped), [4.0, 2.0]);
    }

    #[test]
    fn truncation_priority_by_price() {
        let orders = vec![
            Order::sell("dear", 1, 5.0, 4.0),
            Order::sell("cheap", 1, 1.0, 4.0),
            Order::buy("low", 2, 1.0, 3.0),
            Order::buy("high", 2, 9.0, 3.0),
        ];
        let capped = cap_orders(&orders, &avail(&[(1, 5.0)]), &avail(&[(2, 4.0)]));
        assert_eq!(quantities(&capped), [1.0, 4.0, 1.0, 3.0]);
    }

    #[test]
    fn no_crossing_no_trades() {
        let out = match_orders(&[Order::buy("b1", 1, 5.0, 10.0)], &[Order::sell("s1", 2, 6.0, 10.0)]);
        assert!(out.trades.is_empty());
        assert_eq!(out.total_matched, 0.0);
    }

    #[test]
    fn mixed_book_hand_trace() {
        let buys = [Order::buy("b1", 1, 10.0, 5.0), Order::buy("b2", 2, 8.0, 5.0)];
        let sells = [Order::sell("s1", 3, 2.0, 4.0), Order::sell("s2", 4, 9.0, 10.0)];
        let out = match_orders(&buys, &sells);
        // b2 (bid 8) goes first and can only afford s1; b1 then takes s2.
        let got: Vec<(BusId, BusId, f64)> = out
            .trades
            .iter()
            .map(|t| (t.seller_bus, t.buyer_bus, t.quantity))
            .collect();
        assert_eq!(got, [(BusId(3), BusId(2), 4.0), (BusId(4), BusId(1), 5.0)]);
        assert_eq!(out.total_matched, 9.0);
        assert_eq!(out.trades[0].match_price, 5.0);
        assert_eq!(out.trades[1].match_price, 9.5);
    }

    #[test]
    fn highest_first_greedy_would_lose_volume() {
        // pairing the top bid with the cheapest ask strands the low bid
        let buys = [Order::buy("hi", 1, 10.0, 1.0), Order::buy("lo", 2, 5.0, 1.0)];
        let sells = [Order::sell("cheap", 3, 4.0, 1.0), Order::sell("dear", 4, 9.0, 1.0)];
        assert_eq!(match_orders(&buys, &sells).total_matched, 2.0);
    }

    #[test]
    fn equal_prices_cross() {
        let out = match_orders(&[Order::buy("b1", 1, 7.0, 3.0)], &[Order::sell("s1", 2, 7.0, 3.0)]);
        assert_eq!(out.trades.len(), 1);
        assert_eq!(out.trades[0].quantity, 3.0);
    }

    #[test]
    fn empty_books() {
        assert_eq!(match_orders(&[], &[]), MatchOutcome::default());
    }

    #[test]
    fn zero_quantity_orders_skipped() {
        let out = match_orders(
            &[Order::buy("b0", 1, 9.0, 0.0), Order::buy("b1", 1, 9.0, 1.0)],
            &[Order::sell("s0", 2, 1.0, 0.0), Order::sell("s1", 2, 1.0, 2.0)],
        );
        assert_eq!(out.trades.len(), 1);
        assert!(out.trades.iter().all(|t| t.quantity > 0.0));
    }

    #[test]
    fn orders_csv_with_blocks() {
        let text = "id,side,bus,price,quantity,block\na,buy,1,0.3,2.5,7\nb,sell,2,0.1,1.0,7\n";
        let orders = read_orders(text.as_bytes()).unwrap();
        assert_eq!(orders.len(), 2);
        assert_eq!(orders[0].block, Some(7));
        assert_eq!(orders[1].order, Order::sell("b", 2, 0.1, 1.0));
    }

    #[test]
    fn negative_order_rejected() {
        let text = "id,side,bus,price,quantity\na,buy,1,0.3,-2\n";
        assert!(matches!(read_orders(text.as_bytes()), Err(Error::InvalidOrder { .. })));
    }

    #[test]
    fn trades_csv_header() {
        let mut buf = Vec::new();
        write_trades(&mut buf, &[Trade::new("t0", 1, 2, 0.5)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("id,seller_bus,buyer_bus,quantity,match_price\n"));
        assert_eq!(read_trades(text.as_bytes()).unwrap(), [Trade::new("t0", 1, 2, 0.5)]);
    }

    #[test]
    fn rounding_residue_is_not_traded() {
        // 2.0 - 1.1 leaves 0.8999999999999999, so the 0.9 sell keeps a sliver
        let buys = vec![Order::buy("b4", 4, 0.25, 2.0), Order::buy("b2", 2, 0.28, 1.2)];
        let sells = vec![Order::sell("s5", 5, 0.12, 1.1), Order::sell("s3", 3, 0.10, 0.9)];
        let out = match_orders(&buys, &sells);
        assert!(out.trades.iter().all(|t| t.quantity > DUST_KWH), "{:?}", out.trades);
        assert!((out.total_matched - 2.0).abs() < 1e-12);
    }
}
