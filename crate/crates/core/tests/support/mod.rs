//! Random instance generators and brute-force oracles shared by the
//! integration tests. Nothing here calls the simplex solver.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use lvclear::lp::{LinearProgram, Relation};
use lvclear::{dc_power_flow, BusId, Bus, Interval, Line, Network, Order, Trade};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub const MAX_ANGLE: f64 = PI / 6.0;

pub fn data_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn lv10() -> Network {
    Network::load(data_dir().join("lv10.json")).unwrap()
}

// ---------------------------------------------------------------- networks

/// Random radial network with bus 0 as reference. Base injections are
/// random; capacities and susceptances are chosen so the no-trade point is
/// feasible, with some lines tight enough to bind once trades are added.
pub fn radial_network<R: Rng>(rng: &mut R, n_buses: usize) -> Network {
    let parent: Vec<usize> = (0..n_buses)
        .map(|i| if i == 0 { 0 } else { rng.gen_range(0..i) })
        .collect();
    let mut buses = vec![Bus::reference(0)];
    let mut injection = vec![0.0; n_buses];
    for (i, net_injection) in injection.iter_mut().enumerate().skip(1) {
        let g0 = if rng.gen_bool(0.4) { rng.gen_range(0.0..3.0) } else { 0.0 };
        let r0 = rng.gen_range(0.0..3.0);
        let g_lo = if rng.gen_bool(0.2) { 0.5 * g0 } else { 0.0 };
        let r_lo = if rng.gen_bool(0.2) { 0.5 * r0 } else { 0.0 };
        let gen = Interval::new(g_lo, g0 + rng.gen_range(0.5..8.0));
        let load = Interval::new(r_lo, r0 + rng.gen_range(0.5..8.0));
        buses.push(Bus::new(i as u32, gen, load).with_base(g0, r0));
        *net_injection = g0 - r0;
    }
    // power leaving bus i towards its parent = subtree injection
    let mut subtree = injection.clone();
    for i in (1..n_buses).rev() {
        subtree[parent[i]] += subtree[i];
    }
    let power_base = 100.0;
    let mut lines = Vec::new();
    for i in 1..n_buses {
        let flow = subtree[i].abs();
        let capacity = flow + rng.gen_range(0.3..6.0);
        // angle difference at base flow stays well under the limit
        let min_b = (flow / power_base) / (0.5 * MAX_ANGLE);
        let b = if rng.gen_bool(0.2) {
            // weak line: the angle limit can bind before the capacity
            min_b.max(capacity / power_base / (1.5 * MAX_ANGLE)).max(1e-3)
        } else {
            rng.gen_range(5.0..80.0_f64).max(min_b)
        };
        lines.push(Line::new(parent[i] as u32, i as u32, b, capacity));
    }
    let base_slack: f64 = injection.iter().sum();
    let slack_limit = base_slack.abs() + rng.gen_range(0.5..20.0);
    Network::new(buses, lines, 0, slack_limit, power_base)
}

/// Connected network with extra chords, for flow checks on meshed grids.
pub fn meshed_network<R: Rng>(rng: &mut R, n_buses: usize, chords: usize) -> Network {
    let radial = radial_network(rng, n_buses);
    let mut lines = radial.lines().to_vec();
    for _ in 0..chords {
        let a = rng.gen_range(0..n_buses as u32);
        let b = rng.gen_range(0..n_buses as u32);
        if a != b {
            lines.push(Line::new(a, b, rng.gen_range(1.0..50.0), 100.0));
        }
    }
    radial.with_lines(lines)
}

pub fn random_trades<R: Rng>(rng: &mut R, net: &Network, count: usize, max_q: f64) -> Vec<Trade> {
    let ids: Vec<BusId> = net.non_reference_buses().map(|b| b.id).collect();
    (0..count)
        .map(|t| {
            let s = ids[rng.gen_range(0..ids.len())];
            let mut b = ids[rng.gen_range(0..ids.len())];
            while b == s {
                b = ids[rng.gen_range(0..ids.len())];
            }
            Trade::new(format!("t{t}"), s, b, rng.gen_range(0.1..max_q))
        })
        .collect()
}

/// Same network with every limit far away.
pub fn generous(net: &Network) -> Network {
    let wide = Interval::new(0.0, 1e6);
    let lines = net
        .lines()
        .iter()
        .map(|l| Line::new(l.from_bus, l.to_bus, 1e4, 1e7))
        .collect();
    net.map_buses(|b| {
        if b.is_reference {
            b.clone()
        } else {
            Bus::new(b.id, wide, wide).with_base(b.base_generation, b.base_load)
        }
    })
    .with_lines(lines)
    .with_slack_limit(1e7)
}

pub fn injections(net: &Network, gen: &BTreeMap<BusId, f64>, load: &BTreeMap<BusId, f64>) -> BTreeMap<BusId, f64> {
    net.non_reference_buses()
        .map(|b| (b.id, gen.get(&b.id).copied().unwrap_or(0.0) - load.get(&b.id).copied().unwrap_or(0.0)))
        .collect()
}

// ---------------------------------------------------------------- clearance

/// Best `Σ x_t q_t` over the grid `x_t ∈ {0, step, ..., 1}`, checking every
/// physical limit through superposition of single-trade power flows.
pub fn grid_search(net: &Network, trades: &[Trade], step: f64) -> f64 {
    let base: BTreeMap<BusId, f64> = net
        .non_reference_buses()
        .map(|b| (b.id, b.base_generation - b.base_load))
        .collect();
    let base_theta = dc_power_flow(net, &base).unwrap();
    let angle_diff = |theta: &lvclear::AngleAssignment| -> Vec<f64> {
        net.lines()
            .iter()
            .map(|l| theta.angle(l.from_bus) - theta.angle(l.to_bus))
            .collect()
    };
    let d0 = angle_diff(&base_theta);
    let per_trade: Vec<Vec<f64>> = trades
        .iter()
        .map(|t| {
            let mut inj: BTreeMap<BusId, f64> = base.keys().map(|&k| (k, 0.0)).collect();
            *inj.get_mut(&t.seller_bus).unwrap() += t.quantity;
            *inj.get_mut(&t.buyer_bus).unwrap() -= t.quantity;
            angle_diff(&dc_power_flow(net, &inj).unwrap())
        })
        .collect();
    let base_slack: f64 = base.values().sum();
    if base_slack.abs() > net.slack_limit() + 1e-9 {
        return f64::NAN;
    }

    let buses: Vec<&Bus> = net.buses().iter().collect();
    let pos = |id: BusId| buses.iter().position(|b| b.id == id).unwrap();
    let ends: Vec<(usize, usize)> = trades.iter().map(|t| (pos(t.seller_bus), pos(t.buyer_bus))).collect();

    let steps = (1.0 / step).round() as usize;
    let n = trades.len();
    let mut idx = vec![0usize; n];
    let mut best = f64::NAN;
    let mut x = vec![0.0; n];
    let mut gen = vec![0.0; buses.len()];
    let mut load = vec![0.0; buses.len()];
    loop {
        for (xi, &k) in x.iter_mut().zip(&idx) {
            *xi = k as f64 / steps as f64;
        }
        gen.iter_mut().for_each(|v| *v = 0.0);
        load.iter_mut().for_each(|v| *v = 0.0);
        for ((t, &(s, b)), &xt) in trades.iter().zip(&ends).zip(&x) {
            gen[s] += xt * t.quantity;
            load[b] += xt * t.quantity;
        }
        if grid_point_feasible(net, &buses, &gen, &load, &x, &d0, &per_trade) {
            let v: f64 = trades.iter().zip(&x).map(|(t, x)| t.quantity * x).sum();
            if best.is_nan() || v > best {
                best = v;
            }
        }
        // odometer
        let mut k = 0;
        while k < n {
            idx[k] += 1;
            if idx[k] <= steps {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
    }
    best
}

fn grid_point_feasible(
    net: &Network,
    buses: &[&Bus],
    gen: &[f64],
    load: &[f64],
    x: &[f64],
    d0: &[f64],
    per: &[Vec<f64>],
) -> bool {
    let tol = 1e-9;
    for ((b, &dg), &dr) in buses.iter().zip(gen).zip(load) {
        if b.is_reference {
            continue;
        }
        let g = b.base_generation + dg;
        let r = b.base_load + dr;
        if g > b.gen_bounds.upper + tol || g < b.gen_bounds.lower - tol {
            return false;
        }
        if r > b.load_bounds.upper + tol || r < b.load_bounds.lower - tol {
            return false;
        }
    }
    for (l, line) in net.lines().iter().enumerate() {
        let d = d0[l] + per.iter().zip(x).map(|(p, xt)| p[l] * xt).sum::<f64>();
        if d.abs() > MAX_ANGLE + tol {
            return false;
        }
        if net.from_per_unit(line.susceptance * d).abs() > line.capacity + tol {
            return false;
        }
    }
    true
}

// ---------------------------------------------------------------- LP

/// Small LP with finite bounds, integer-ish data and mixed relations.
pub fn random_lp<R: Rng>(rng: &mut R, max_vars: usize, max_rows: usize) -> LinearProgram {
    let n = rng.gen_range(1..=max_vars);
    let m = rng.gen_range(1..=max_rows);
    let mut lp = LinearProgram::new(0);
    for _ in 0..n {
        let lo = if rng.gen_bool(0.7) { 0.0 } else { -f64::from(rng.gen_range(1..5)) };
        let hi = lo + f64::from(rng.gen_range(1..8));
        lp.add_variable(f64::from(rng.gen_range(-5..=5)), lo, hi);
    }
    for _ in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.7) {
                coeffs.push((j, f64::from(rng.gen_range(-4..=4))));
            }
        }
        let relation = match rng.gen_range(0..10) {
            0..=6 => Relation::Le,
            7..=8 => Relation::Ge,
            _ => Relation::Eq,
        };
        let rhs = f64::from(match relation {
            Relation::Le => rng.gen_range(-2..=15),
            Relation::Ge => rng.gen_range(-15..=2),
            Relation::Eq => rng.gen_range(-3..=3),
        });
        lp.add_constraint(coeffs, relation, rhs);
    }
    lp
}

/// Maximum objective over all basic feasible solutions, by trying every
/// choice of `n` active constraints among rows and variable bounds.
/// `None` when no vertex is feasible. Requires finite bounds.
pub fn vertex_enumeration(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    // candidate hyperplanes a·x = b
    let mut planes: Vec<(Vec<f64>, f64, Option<usize>)> = Vec::new();
    for c in lp.constraints() {
        let mut a = vec![0.0; n];
        for &(j, v) in &c.coeffs {
            a[j] = v;
        }
        planes.push((a, c.rhs, None));
    }
    for (j, &(lo, hi)) in lp.bounds().iter().enumerate() {
        assert!(lo.is_finite() && hi.is_finite());
        for v in [lo, hi] {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            planes.push((a, v, Some(j)));
        }
    }
    let mut best: Option<f64> = None;
    let mut chosen = Vec::with_capacity(n);
    combinations(planes.len(), n, 0, &mut chosen, &mut |pick| {
        // two bounds of the same variable can never be active together
        let mut seen = vec![false; n];
        for &p in pick {
            if let Some(j) = planes[p].2 {
                if seen[j] {
                    return;
                }
                seen[j] = true;
            }
        }
        let a = DMatrix::from_fn(n, n, |r, c| planes[pick[r]].0[c]);
        let b = DVector::from_fn(n, |r, _| planes[pick[r]].1);
        let Some(x) = a.clone().lu().solve(&b) else { return };
        if (&a * &x - &b).amax() > 1e-9 {
            return;
        }
        let x: Vec<f64> = x.iter().copied().collect();
        if lvclear::lp::check_feasibility(lp, &x, 1e-9, 1e-9).is_empty() {
            let v = lp.objective_value(&x);
            if best.is_none_or(|b| v > b) {
                best = Some(v);
            }
        }
    });
    best
}

fn combinations(total: usize, k: usize, start: usize, chosen: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if chosen.len() == k {
        f(chosen);
        return;
    }
    for i in start..total {
        if total - i < k - chosen.len() {
            break;
        }
        chosen.push(i);
        combinations(total, k, i + 1, chosen, f);
        chosen.pop();
    }
}

// ---------------------------------------------------------------- matching

pub fn random_book<R: Rng>(rng: &mut R, max_per_side: usize) -> (Vec<Order>, Vec<Order>) {
    // coarse prices so ties and exact crossings are common
    fn price<R: Rng>(rng: &mut R) -> f64 {
        f64::from(rng.gen_range(1..=8)) * 0.05
    }
    fn qty<R: Rng>(rng: &mut R) -> f64 {
        f64::from(rng.gen_range(1..=12)) * 0.25
    }
    let nb = rng.gen_range(0..=max_per_side);
    let ns = rng.gen_range(0..=max_per_side);
    let buys = (0..nb)
        .map(|i| Order::buy(format!("b{i}"), 1 + i as u32, price(rng), qty(rng)))
        .collect();
    let sells = (0..ns)
        .map(|i| Order::sell(format!("s{i}"), 100 + i as u32, price(rng), qty(rng)))
        .collect();
    (buys, sells)
}

/// Maximum volume that can change hands when a buy may only trade with sells
/// priced at or below it. Max-flow equals min-cut; the cut is enumerated over
/// subsets of buys kept on the source side, which forces their compatible
/// sells onto the cut.
pub fn max_crossing_volume(buys: &[Order], sells: &[Order]) -> f64 {
    let nb = buys.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << nb) {
        let mut cut = 0.0;
        let mut sell_cut = vec![false; sells.len()];
        for (i, b) in buys.iter().enumerate() {
            if mask & (1 << i) == 0 {
                cut += b.quantity;
            } else {
                for (j, s) in sells.iter().enumerate() {
                    if b.price >= s.price {
                        sell_cut[j] = true;
                    }
                }
            }
        }
        cut += sells
            .iter()
            .zip(&sell_cut)
            .filter(|(_, &c)| c)
            .map(|(s, _)| s.quantity)
            .sum::<f64>();
        best = best.min(cut);
    }
    best
}
