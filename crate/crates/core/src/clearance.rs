//! Network-constrained clearance of proposed trades.
//!
//! Each trade `t` gets an execution fraction `x_t ∈ [0, 1]`. Executing it
//! raises generation at the seller and load at the buyer by `x_t·q_t`, and the
//! resulting injections must satisfy DC power flow with line and angle limits
//! and a bounded exchange with the reference bus. The program maximizes
//! `Σ x_t·q_t`.
//!
//! LP variables, in order: one `x_t` per trade, one angle per non-reference
//! bus (id order) and the reference-bus exchange `P_ref`. Adjusted generation
//! and load are affine in `x` and are substituted into the rows rather than
//! carried as variables. Physics rows are written in per-unit.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, Relation};
use crate::network::{line_flows, AngleAssignment, BusId, Network};
use crate::orderbook::Trade;

/// Largest allowed angle difference across a line, in radians.
pub const MAX_ANGLE_DIFF: f64 = PI / 6.0;

/// Tolerance used by [`verify`] (kW for power quantities, radians for angles,
/// per-unit for the nodal balance).
pub const VERIFY_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct ClearanceProblem {
    network: Network,
    trades: Vec<Trade>,
}

impl ClearanceProblem {
    /// Checks that every trade has a positive quantity and is between two
    /// known, non-reference buses.
    pub fn new(network: Network, trades: Vec<Trade>) -> Result<Self> {
        check_trades(&network, &trades)?;
        Ok(ClearanceProblem { network, trades })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn trades(&self) -> &[Trade] {
        &self.trades
    }

    /// Total proposed volume `Σ q_t`.
    pub fn proposed_volume(&self) -> f64 {
        self.trades.iter().map(|t| t.quantity).sum()
    }

    /// Generation and load at every non-reference bus for the given execution
    /// fractions.
    pub fn adjusted(&self, execution: &[f64]) -> (BTreeMap<BusId, f64>, BTreeMap<BusId, f64>) {
        let mut gen: BTreeMap<BusId, f64> = BTreeMap::new();
        let mut load: BTreeMap<BusId, f64> = BTreeMap::new();
        for bus in self.network.non_reference_buses() {
            gen.insert(bus.id, bus.base_generation);
            load.insert(bus.id, bus.base_load);
        }
        for (trade, &x) in self.trades.iter().zip(execution) {
            *gen.entry(trade.seller_bus).or_default() += x * trade.quantity;
            *load.entry(trade.buyer_bus).or_default() += x * trade.quantity;
        }
        (gen, load)
    }
}

fn check_trades(net: &Network, trades: &[Trade]) -> Result<()> {
    for trade in trades {
        for bus in [trade.seller_bus, trade.buyer_bus] {
            if !net.contains_bus(bus) {
                return Err(Error::UnknownBus {
                    trade: trade.id.clone(),
                    bus,
                });
            }
            if bus == net.reference_bus() {
                return Err(Error::ReferenceBusTrade {
                    trade: trade.id.clone(),
                });
            }
        }
        if !(trade.quantity.is_finite() && trade.quantity > 0.0) {
            return Err(Error::InvalidTradeQuantity {
                trade: trade.id.clone(),
                quantity: trade.quantity,
            });
        }
    }
    Ok(())
}

/// What each assembled LP row encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RowKind {
    GenUpper(BusId),
    GenLower(BusId),
    LoadUpper(BusId),
    LoadLower(BusId),
    Balance(BusId),
    /// Index into [`Network::lines`].
    FlowUpper(usize),
    FlowLower(usize),
    AngleUpper(usize),
    AngleLower(usize),
    SlackDefinition,
    SlackUpper,
    SlackLower,
}

/// The clearance LP together with its row and column map.
#[derive(Debug, Clone)]
pub struct AssembledProblem {
    pub lp: LinearProgram,
    pub rows: Vec<RowKind>,
    /// Column of each non-reference bus angle.
    pub angle_columns: BTreeMap<BusId, usize>,
    pub slack_column: usize,
}

impl AssembledProblem {
    pub fn execution_column(&self, trade_index: usize) -> usize {
        trade_index
    }

    pub fn count_rows(&self, pred: impl Fn(&RowKind) -> bool) -> usize {
        self.rows.iter().filter(|r| pred(r)).count()
    }
}

/// Builds the clearance linear program.
pub fn assemble(problem: &ClearanceProblem) -> Result<AssembledProblem> {
    let net = &problem.network;
    check_trades(net, &problem.trades)?;
    let pu = |kw: f64| net.to_per_unit(kw);
    let reference = net.reference_bus();

    let mut lp = LinearProgram::new(0);
    let mut rows = Vec::new();

    for trade in &problem.trades {
        lp.add_variable(trade.quantity, 0.0, 1.0);
    }
    // Angles are boxed by hop count: each line allows at most MAX_ANGLE_DIFF,
    // so these bounds never cut the feasible set.
    let hops = net.hops_from_reference();
    let mut angle_columns = BTreeMap::new();
    for bus in net.non_reference_buses() {
        let limit = MAX_ANGLE_DIFF * hops.get(&bus.id).copied().unwrap_or(net.buses().len()) as f64;
        angle_columns.insert(bus.id, lp.add_variable(0.0, -limit, limit));
    }
    let base_gen: f64 = net.non_reference_buses().map(|b| b.base_generation).sum();
    let base_load: f64 = net.non_reference_buses().map(|b| b.base_load).sum();
    let slack_box = pu(net.slack_limit() + base_gen.abs() + base_load.abs() + problem.proposed_volume()) + 1.0;
    let slack_column = lp.add_variable(0.0, -slack_box, slack_box);

    // Trade terms per bus, in per-unit.
    let mut sold: BTreeMap<BusId, Vec<(usize, f64)>> = BTreeMap::new();
    let mut bought: BTreeMap<BusId, Vec<(usize, f64)>> = BTreeMap::new();
    for (t, trade) in problem.trades.iter().enumerate() {
        sold.entry(trade.seller_bus).or_default().push((t, pu(trade.quantity)));
        bought.entry(trade.buyer_bus).or_default().push((t, pu(trade.quantity)));
    }

    // Generation and load bounds, only where trades make them depend on x.
    for bus in net.non_reference_buses() {
        if let Some(terms) = sold.get(&bus.id) {
            lp.add_constraint(terms.clone(), Relation::Le, pu(bus.gen_bounds.upper - bus.base_generation));
            rows.push(RowKind::GenUpper(bus.id));
            lp.add_constraint(terms.clone(), Relation::Ge, pu(bus.gen_bounds.lower - bus.base_generation));
            rows.push(RowKind::GenLower(bus.id));
        }
        if let Some(terms) = bought.get(&bus.id) {
            lp.add_constraint(terms.clone(), Relation::Le, pu(bus.load_bounds.upper - bus.base_load));
            rows.push(RowKind::LoadUpper(bus.id));
            lp.add_constraint(terms.clone(), Relation::Ge, pu(bus.load_bounds.lower - bus.base_load));
            rows.push(RowKind::LoadLower(bus.id));
        }
    }

    // Nodal balance: (g - ρ) - Σ B (θi - θj) = 0.
    let mut balance: BTreeMap<BusId, Vec<(usize, f64)>> = BTreeMap::new();
    for (bus, terms) in &sold {
        balance.entry(*bus).or_default().extend(terms.iter().copied());
    }
    for (bus, terms) in &bought {
        balance
            .entry(*bus)
            .or_default()
            .extend(terms.iter().map(|&(t, q)| (t, -q)));
    }
    for line in net.lines() {
        let b = line.susceptance;
        for (here, there) in [(line.from_bus, line.to_bus), (line.to_bus, line.from_bus)] {
            if here == reference {
                continue;
            }
            let entry = balance.entry(here).or_default();
            entry.push((angle_columns[&here], -b));
            if there != reference {
                entry.push((angle_columns[&there], b));
            }
        }
    }
    for bus in net.non_reference_buses() {
        let terms = balance.remove(&bus.id).unwrap_or_default();
        lp.add_constraint(terms, Relation::Eq, pu(bus.base_load - bus.base_generation));
        rows.push(RowKind::Balance(bus.id));
    }

    // Line flow and angle-difference limits, two rows each.
    for (l, line) in net.lines().iter().enumerate() {
        let diff: Vec<(usize, f64)> = [(line.from_bus, 1.0), (line.to_bus, -1.0)]
            .into_iter()
            .filter(|(bus, _)| *bus != reference)
            .map(|(bus, sign)| (angle_columns[&bus], sign))
            .collect();
        let scaled = |k: f64| diff.iter().map(move |&(j, s)| (j, k * s));
        let cap = pu(line.capacity);
        lp.add_constraint(scaled(line.susceptance), Relation::Le, cap);
        rows.push(RowKind::FlowUpper(l));
        lp.add_constraint(scaled(-line.susceptance), Relation::Le, cap);
        rows.push(RowKind::FlowLower(l));
        lp.add_constraint(scaled(1.0), Relation::Le, MAX_ANGLE_DIFF);
        rows.push(RowKind::AngleUpper(l));
        lp.add_constraint(scaled(-1.0), Relation::Le, MAX_ANGLE_DIFF);
        rows.push(RowKind::AngleLower(l));
    }

    // P_ref = Σ (g - ρ), then |P_ref| <= limit. Each trade adds the same
    // amount to one bus's generation and another's load, so only the base
    // terms remain.
    lp.add_constraint([(slack_column, 1.0)], Relation::Eq, pu(base_gen - base_load));
    rows.push(RowKind::SlackDefinition);
    lp.add_constraint([(slack_column, 1.0)], Relation::Le, pu(net.slack_limit()));
    rows.push(RowKind::SlackUpper);
    lp.add_constraint([(slack_column, -1.0)], Relation::Le, pu(net.slack_limit()));
    rows.push(RowKind::SlackLower);

    Ok(AssembledProblem {
        lp,
        rows,
        angle_columns,
        slack_column,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClearanceStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClearanceSolution {
    pub status: ClearanceStatus,
    /// Execution fraction per trade, in trade order.
    pub execution: Vec<f64>,
    pub angles: AngleAssignment,
    /// Exchange with the reference bus, kW; negative when the grid supplies.
    pub slack: f64,
    pub adjusted_generation: BTreeMap<BusId, f64>,
    pub adjusted_load: BTreeMap<BusId, f64>,
    /// Signed line flows in kW, in [`Network::lines`] order.
    pub flows: Vec<f64>,
    /// `Σ x_t q_t`, kWh.
    pub executed_volume: f64,
    /// For infeasible problems, what the no-trade operating point breaks.
    pub violations: Vec<ClearanceViolation>,
}

impl ClearanceSolution {
    pub fn fraction(&self, problem: &ClearanceProblem, trade_id: &str) -> Option<f64> {
        problem
            .trades
            .iter()
            .position(|t| t.id == trade_id)
            .map(|i| self.execution[i])
    }

    /// Number of trades executed to any positive extent.
    pub fn executed_count(&self) -> usize {
        self.execution.iter().filter(|&&x| x > 1e-9).count()
    }
}

/// Solves the clearance problem.
///
/// An infeasible problem is not an error: the solution comes back with
/// [`ClearanceStatus::Infeasible`] and the constraints the no-trade operating
/// point breaks.
pub fn clear(problem: &ClearanceProblem) -> Result<ClearanceSolution> {
    let assembled = assemble(problem)?;
    let lp_solution = lp::solve(&assembled.lp)?;
    match lp_solution.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Ok(infeasible(problem)),
        LpStatus::Unbounded => {
            unreachable!("clearance LP has only bounded variables")
        }
    }

    let values = &lp_solution.values;
    let execution: Vec<f64> = (0..problem.trades.len())
        .map(|t| values[assembled.execution_column(t)].clamp(0.0, 1.0))
        .collect();
    let net = &problem.network;
    let mut angles = AngleAssignment::default();
    angles.theta.insert(net.reference_bus(), 0.0);
    for (bus, &col) in &assembled.angle_columns {
        angles.theta.insert(*bus, values[col]);
    }
    Ok(build_solution(problem, execution, angles, ClearanceStatus::Optimal))
}

fn build_solution(
    problem: &ClearanceProblem,
    execution: Vec<f64>,
    angles: AngleAssignment,
    status: ClearanceStatus,
) -> ClearanceSolution {
    let (gen, load) = problem.adjusted(&execution);
    let slack = crate::network::slack_power(&problem.network, &gen, &load);
    let flows = line_flows(&problem.network, &angles);
    let executed_volume = problem
        .trades
        .iter()
        .zip(&execution)
        .map(|(t, x)| x * t.quantity)
        .sum();
    ClearanceSolution {
        status,
        execution,
        angles,
        slack,
        adjusted_generation: gen,
        adjusted_load: load,
        flows,
        executed_volume,
        violations: Vec::new(),
    }
}

fn infeasible(problem: &ClearanceProblem) -> ClearanceSolution {
    let zero = vec![0.0; problem.trades.len()];
    let (gen, load) = problem.adjusted(&zero);
    let injections = gen
        .iter()
        .map(|(bus, g)| (*bus, g - load[bus]))
        .collect::<BTreeMap<_, _>>();
    let angles = crate::network::dc_power_flow(&problem.network, &injections).unwrap_or_default();
    let mut solution = build_solution(problem, zero, angles, ClearanceStatus::Infeasible);
    solution.violations = verify(problem, &solution);
    solution
}

/// Constraint family named in a [`ClearanceViolation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    ExecutionBounds,
    GenerationBounds,
    LoadBounds,
    NodalBalance,
    LineCapacity,
    AngleDifference,
    ReferenceAngle,
    SlackDefinition,
    SlackLimit,
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintKind::ExecutionBounds => "execution fraction outside [0, 1]",
            ConstraintKind::GenerationBounds => "generation outside bounds",
            ConstraintKind::LoadBounds => "load outside bounds",
            ConstraintKind::NodalBalance => "nodal power balance",
            ConstraintKind::LineCapacity => "line capacity exceeded",
            ConstraintKind::AngleDifference => "angle difference above pi/6",
            ConstraintKind::ReferenceAngle => "reference angle not zero",
            ConstraintKind::SlackDefinition => "slack does not equal net injection",
            ConstraintKind::SlackLimit => "slack limit exceeded",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClearanceViolation {
    pub constraint: ConstraintKind,
    pub subject: String,
    /// How far past the limit, in the constraint's units.
    pub excess: f64,
}

impl fmt::Display for ClearanceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {} (by {:.3e})", self.constraint, self.subject, self.excess)
    }
}

/// Re-checks every clearance constraint on a solution, recomputing generation,
/// load and flows from the execution fractions and angles. Works on any
/// solution, including hand-built ones.
pub fn verify(problem: &ClearanceProblem, sol: &ClearanceSolution) -> Vec<ClearanceViolation> {
    let net = &problem.network;
    let tol = VERIFY_TOL;
    let mut report = Vec::new();
    let mut flag = |constraint, subject: String, excess: f64| {
        if excess > tol || excess.is_nan() {
            report.push(ClearanceViolation {
                constraint,
                subject,
                excess,
            });
        }
    };

    for (trade, &x) in problem.trades.iter().zip(&sol.execution) {
        flag(
            ConstraintKind::ExecutionBounds,
            format!("trade {}", trade.id),
            (-x).max(x - 1.0),
        );
    }

    let (gen, load) = problem.adjusted(&sol.execution);
    for bus in net.non_reference_buses() {
        let subject = format!("bus {}", bus.id);
        let g = gen[&bus.id];
        let r = load[&bus.id];
        flag(
            ConstraintKind::GenerationBounds,
            subject.clone(),
            (bus.gen_bounds.lower - g).max(g - bus.gen_bounds.upper),
        );
        flag(
            ConstraintKind::LoadBounds,
            subject.clone(),
            (bus.load_bounds.lower - r).max(r - bus.load_bounds.upper),
        );
    }

    let mut outflow_pu: BTreeMap<BusId, f64> = BTreeMap::new();
    for line in net.lines() {
        let flow = line.susceptance * (sol.angles.angle(line.from_bus) - sol.angles.angle(line.to_bus));
        *outflow_pu.entry(line.from_bus).or_default() += flow;
        *outflow_pu.entry(line.to_bus).or_default() -= flow;
    }
    for bus in net.non_reference_buses() {
        let injection = net.to_per_unit(gen[&bus.id] - load[&bus.id]);
        let residual = injection - outflow_pu.get(&bus.id).copied().unwrap_or(0.0);
        flag(ConstraintKind::NodalBalance, format!("bus {}", bus.id), residual.abs());
    }

    for (l, line) in net.lines().iter().enumerate() {
        let subject = format!("line {l} ({}-{})", line.from_bus, line.to_bus);
        let delta = sol.angles.angle(line.from_bus) - sol.angles.angle(line.to_bus);
        let flow = net.from_per_unit(line.susceptance * delta);
        flag(ConstraintKind::LineCapacity, subject.clone(), flow.abs() - line.capacity);
        flag(ConstraintKind::AngleDifference, subject, delta.abs() - MAX_ANGLE_DIFF);
    }

    flag(
        ConstraintKind::ReferenceAngle,
        format!("bus {}", net.reference_bus()),
        sol.angles.angle(net.reference_bus()).abs(),
    );
    let net_injection: f64 = net
        .non_reference_buses()
        .map(|b| gen[&b.id] - load[&b.id])
        .sum();
    flag(
        ConstraintKind::SlackDefinition,
        "reference bus".into(),
        (sol.slack - net_injection).abs(),
    );
    flag(
        ConstraintKind::SlackLimit,
        "reference bus".into(),
        sol.slack.abs() - net.slack_limit(),
    );
    report
}

/// Writes `trade_id,x,executed_kwh`.
pub fn write_execution<W: Write>(writer: W, problem: &ClearanceProblem, sol: &ClearanceSolution) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let ctx = "execution";
    csv.write_record(["trade_id", "x", "executed_kwh"])
        .map_err(|e| Error::csv(ctx, e))?;
    for (trade, x) in problem.trades.iter().zip(&sol.execution) {
        csv.write_record([
            trade.id.clone(),
            x.to_string(),
            (x * trade.quantity).to_string(),
        ])
        .map_err(|e| Error::csv(ctx, e))?;
    }
    csv.flush().map_err(|e| Error::csv(ctx, e.into()))
}

/// Writes `bus_id,theta_rad,g_kw,rho_kw` for every bus, the reference bus
/// included (its generation and load are reported as zero).
pub fn write_buses<W: Write>(writer: W, problem: &ClearanceProblem, sol: &ClearanceSolution) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let ctx = "buses";
    csv.write_record(["bus_id", "theta_rad", "g_kw", "rho_kw"])
        .map_err(|e| Error::csv(ctx, e))?;
    for bus in problem.network.buses() {
        let g = sol.adjusted_generation.get(&bus.id).copied().unwrap_or(0.0);
        let r = sol.adjusted_load.get(&bus.id).copied().unwrap_or(0.0);
        csv.write_record([
            bus.id.to_string(),
            sol.angles.angle(bus.id).to_string(),
            g.to_string(),
            r.to_string(),
        ])
        .map_err(|e| Error::csv(ctx, e))?;
    }
    csv.flush().map_err(|e| Error::csv(ctx, e.into()))
}

/// Writes the one-line summary `status,slack_kw,executed_kwh`.
pub fn write_summary<W: Write>(mut writer: W, sol: &ClearanceSolution) -> Result<()> {
    let status = match sol.status {
        ClearanceStatus::Optimal => "optimal",
        ClearanceStatus::Infeasible => "infeasible",
    };
    writeln!(writer, "status,slack_kw,executed_kwh")
        .and_then(|_| writeln!(writer, "{status},{},{}", sol.slack, sol.executed_volume))
        .map_err(|e| Error::io("summary", e))
}

/// Buses that appear in at least one trade.
pub fn trading_buses(trades: &[Trade]) -> BTreeSet<BusId> {
    trades
        .iter()
        .flat_map(|t| [t.seller_bus, t.buyer_bus])
        .collect()
}
