//! Low-voltage network model and DC power flow.
//!
//! Block quantities (generation, load, line capacity, slack limit) are kept in
//! kW, which over a one-hour block is numerically the same as kWh. Susceptances
//! are per-unit on the network's `power_base_kva`; conversion happens at the
//! boundary of every function in this module, so callers only ever see kW and
//! radians.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bus identifier as it appears in network, order and profile files.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct BusId(pub u32);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u32> for BusId {
    fn from(id: u32) -> Self {
        BusId(id)
    }
}

/// Closed interval `[lower, upper]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Interval { lower, upper }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    fn is_well_formed(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite() && self.lower <= self.upper
    }
}

impl From<[f64; 2]> for Interval {
    fn from([lower, upper]: [f64; 2]) -> Self {
        Interval { lower, upper }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lower, i.upper]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: BusId,
    #[serde(default)]
    pub is_reference: bool,
    /// Inflexible generation in the block, kW.
    #[serde(default)]
    pub base_generation: f64,
    /// Inflexible load in the block, kW.
    #[serde(default)]
    pub base_load: f64,
    pub gen_bounds: Interval,
    pub load_bounds: Interval,
}

impl Bus {
    /// A non-reference bus with zero base values and the given bounds.
    pub fn new(id: impl Into<BusId>, gen_bounds: Interval, load_bounds: Interval) -> Self {
        Bus {
            id: id.into(),
            is_reference: false,
            base_generation: 0.0,
            base_load: 0.0,
            gen_bounds,
            load_bounds,
        }
    }

    pub fn reference(id: impl Into<BusId>) -> Self {
        Bus {
            is_reference: true,
            ..Bus::new(id, Interval::new(0.0, 0.0), Interval::new(0.0, 0.0))
        }
    }

    pub fn with_base(mut self, generation: f64, load: f64) -> Self {
        self.base_generation = generation;
        self.base_load = load;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Line {
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// Per-unit susceptance.
    pub susceptance: f64,
    /// Flow limit in kW.
    pub capacity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reactance: Option<f64>,
}

impl Line {
    pub fn new(from: impl Into<BusId>, to: impl Into<BusId>, susceptance: f64, capacity: f64) -> Self {
        Line {
            from_bus: from.into(),
            to_bus: to.into(),
            susceptance,
            capacity,
            reactance: None,
        }
    }

    pub fn from_reactance(
        from: impl Into<BusId>,
        to: impl Into<BusId>,
        reactance: f64,
        capacity: f64,
    ) -> Self {
        Line {
            reactance: Some(reactance),
            ..Line::new(from, to, 1.0 / reactance, capacity)
        }
    }

    fn endpoints(&self) -> (BusId, BusId) {
        if self.from_bus <= self.to_bus {
            (self.from_bus, self.to_bus)
        } else {
            (self.to_bus, self.from_bus)
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LineRecord {
    from_bus: BusId,
    to_bus: BusId,
    susceptance: Option<f64>,
    reactance: Option<f64>,
    capacity: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile<L> {
    buses: Vec<Bus>,
    lines: Vec<L>,
    reference_bus: BusId,
    slack_limit_kw: f64,
    power_base_kva: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    buses: Vec<Bus>,
    lines: Vec<Line>,
    reference_bus: BusId,
    slack_limit: f64,
    power_base: f64,
    index: BTreeMap<BusId, usize>,
}

impl Network {
    /// Builds a network, sorting buses by id and merging parallel lines.
    ///
    /// No invariants are checked here; use [`validate_network`] for that.
    pub fn new(
        mut buses: Vec<Bus>,
        lines: Vec<Line>,
        reference_bus: impl Into<BusId>,
        slack_limit_kw: f64,
        power_base_kva: f64,
    ) -> Self {
        buses.sort_by_key(|b| b.id);
        let index = buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        Network {
            buses,
            lines: merge_parallel(lines),
            reference_bus: reference_bus.into(),
            slack_limit: slack_limit_kw,
            power_base: power_base_kva,
            index,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: NetworkFile<LineRecord> = serde_json::from_str(text).map_err(|source| {
            Error::Json {
                context: "network".into(),
                source,
            }
        })?;
        let mut lines = Vec::with_capacity(file.lines.len());
        for (index, rec) in file.lines.into_iter().enumerate() {
            let susceptance = match (rec.susceptance, rec.reactance) {
                (Some(b), _) => b,
                (None, Some(x)) => 1.0 / x,
                (None, None) => {
                    return Err(Error::MissingSusceptance {
                        index,
                        from: rec.from_bus,
                        to: rec.to_bus,
                    })
                }
            };
            lines.push(Line {
                from_bus: rec.from_bus,
                to_bus: rec.to_bus,
                susceptance,
                capacity: rec.capacity,
                reactance: rec.reactance,
            });
        }
        Ok(Network::new(
            file.buses,
            lines,
            file.reference_bus,
            file.slack_limit_kw,
            file.power_base_kva,
        ))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Network::from_json_str(&text).map_err(|e| match e {
            Error::Json { source, .. } => Error::Json {
                context: path.display().to_string(),
                source,
            },
            other => other,
        })
    }

    pub fn to_json_string(&self) -> String {
        let file = NetworkFile {
            buses: self.buses.clone(),
            lines: self.lines.clone(),
            reference_bus: self.reference_bus,
            slack_limit_kw: self.slack_limit,
            power_base_kva: self.power_base,
        };
        serde_json::to_string_pretty(&file).expect("network serializes")
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn reference_bus(&self) -> BusId {
        self.reference_bus
    }

    pub fn slack_limit(&self) -> f64 {
        self.slack_limit
    }

    pub fn power_base(&self) -> f64 {
        self.power_base
    }

    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.index.get(&id).map(|&i| &self.buses[i])
    }

    pub fn contains_bus(&self, id: BusId) -> bool {
        self.index.contains_key(&id)
    }

    /// Non-reference buses in id order.
    pub fn non_reference_buses(&self) -> impl Iterator<Item = &Bus> {
        let reference = self.reference_bus;
        self.buses.iter().filter(move |b| b.id != reference)
    }

    /// Returns a copy with every bus passed through `f`.
    pub fn map_buses(&self, mut f: impl FnMut(&Bus) -> Bus) -> Network {
        let buses = self.buses.iter().map(&mut f).collect();
        Network::new(
            buses,
            self.lines.clone(),
            self.reference_bus,
            self.slack_limit,
            self.power_base,
        )
    }

    pub fn with_slack_limit(mut self, slack_limit_kw: f64) -> Network {
        self.slack_limit = slack_limit_kw;
        self
    }

    pub fn with_lines(&self, lines: Vec<Line>) -> Network {
        Network::new(
            self.buses.clone(),
            lines,
            self.reference_bus,
            self.slack_limit,
            self.power_base,
        )
    }

    pub fn to_per_unit(&self, kw: f64) -> f64 {
        kw / self.power_base
    }

    pub fn from_per_unit(&self, pu: f64) -> f64 {
        pu * self.power_base
    }

    /// Number of lines on the shortest path from the reference bus to each
    /// reachable bus.
    pub fn hops_from_reference(&self) -> BTreeMap<BusId, usize> {
        let adjacency = self.adjacency();
        let mut hops = BTreeMap::new();
        let mut queue = VecDeque::new();
        hops.insert(self.reference_bus, 0);
        queue.push_back(self.reference_bus);
        while let Some(bus) = queue.pop_front() {
            let depth = hops[&bus];
            for &next in adjacency.get(&bus).into_iter().flatten() {
                if let std::collections::btree_map::Entry::Vacant(slot) = hops.entry(next) {
                    slot.insert(depth + 1);
                    queue.push_back(next);
                }
            }
        }
        hops
    }

    fn adjacency(&self) -> BTreeMap<BusId, Vec<BusId>> {
        let mut adjacency: BTreeMap<BusId, Vec<BusId>> = BTreeMap::new();
        for line in &self.lines {
            adjacency.entry(line.from_bus).or_default().push(line.to_bus);
            adjacency.entry(line.to_bus).or_default().push(line.from_bus);
        }
        adjacency
    }
}

fn merge_parallel(lines: Vec<Line>) -> Vec<Line> {
    let mut merged: Vec<Line> = Vec::with_capacity(lines.len());
    let mut seen: BTreeMap<(BusId, BusId), usize> = BTreeMap::new();
    for line in lines {
        match seen.get(&line.endpoints()) {
            Some(&at) => {
                let kept = &mut merged[at];
                warn!(
                    "merging parallel line {}-{} into {}-{}",
                    line.from_bus, line.to_bus, kept.from_bus, kept.to_bus
                );
                kept.susceptance += line.susceptance;
                kept.capacity += line.capacity;
                kept.reactance = None;
            }
            None => {
                seen.insert(line.endpoints(), merged.len());
                merged.push(line);
            }
        }
    }
    merged
}

/// One broken network invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkViolation {
    pub entity: String,
    pub rule: String,
}

impl NetworkViolation {
    fn new(entity: impl Into<String>, rule: impl Into<String>) -> Self {
        NetworkViolation {
            entity: entity.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for NetworkViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.rule)
    }
}

/// Checks every network, bus and line invariant. An empty report means the
/// network is usable for power flow and clearance.
pub fn validate_network(net: &Network) -> Vec<NetworkViolation> {
    let mut report = Vec::new();

    if !(net.power_base.is_finite() && net.power_base > 0.0) {
        report.push(NetworkViolation::new("network", "power base must be positive"));
    }
    if !(net.slack_limit.is_finite() && net.slack_limit > 0.0) {
        report.push(NetworkViolation::new("network", "slack limit must be positive"));
    }

    let mut ids = BTreeSet::new();
    for bus in &net.buses {
        let entity = format!("bus {}", bus.id);
        if !ids.insert(bus.id) {
            report.push(NetworkViolation::new(&entity, "duplicate bus id"));
        }
        if !bus.gen_bounds.is_well_formed() {
            report.push(NetworkViolation::new(&entity, "gen_bounds must be finite with lower <= upper"));
        } else if !bus.gen_bounds.contains(bus.base_generation) {
            report.push(NetworkViolation::new(&entity, "base_generation outside gen_bounds"));
        }
        if !bus.load_bounds.is_well_formed() {
            report.push(NetworkViolation::new(&entity, "load_bounds must be finite with lower <= upper"));
        } else if !bus.load_bounds.contains(bus.base_load) {
            report.push(NetworkViolation::new(&entity, "base_load outside load_bounds"));
        }
    }

    let flagged: Vec<BusId> = net.buses.iter().filter(|b| b.is_reference).map(|b| b.id).collect();
    match flagged.as_slice() {
        [] => report.push(NetworkViolation::new("network", "no reference bus")),
        [only] if *only != net.reference_bus => report.push(NetworkViolation::new(
            "network",
            format!("reference bus flag on bus {only} but reference_bus is {}", net.reference_bus),
        )),
        [_] => {}
        _ => report.push(NetworkViolation::new(
            "network",
            format!(
                "multiple reference buses: {}",
                flagged.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
            ),
        )),
    }
    if !net.contains_bus(net.reference_bus) {
        report.push(NetworkViolation::new(
            "network",
            format!("reference bus {} not found", net.reference_bus),
        ));
    }

    for (i, line) in net.lines.iter().enumerate() {
        let entity = format!("line {i} ({}-{})", line.from_bus, line.to_bus);
        if line.from_bus == line.to_bus {
            report.push(NetworkViolation::new(&entity, "from_bus equals to_bus"));
        }
        for end in [line.from_bus, line.to_bus] {
            if !net.contains_bus(end) {
                report.push(NetworkViolation::new(&entity, format!("unknown bus {end}")));
            }
        }
        if !(line.susceptance.is_finite() && line.susceptance > 0.0) {
            report.push(NetworkViolation::new(&entity, "susceptance must be positive"));
        }
        if !(line.capacity.is_finite() && line.capacity > 0.0) {
            report.push(NetworkViolation::new(&entity, "capacity must be positive"));
        }
    }

    if net.contains_bus(net.reference_bus) {
        let reachable = net.hops_from_reference();
        let unreachable: Vec<String> = net
            .buses
            .iter()
            .filter(|b| !reachable.contains_key(&b.id))
            .map(|b| b.id.to_string())
            .collect();
        if !unreachable.is_empty() {
            report.push(NetworkViolation::new(
                "network",
                format!(
                    "graph not connected: bus(es) {} unreachable from the reference bus",
                    unreachable.join(", ")
                ),
            ));
        }
    }

    report
}

/// Voltage angles in radians, keyed by bus.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AngleAssignment {
    pub theta: BTreeMap<BusId, f64>,
}

impl AngleAssignment {
    pub fn get(&self, bus: BusId) -> Option<f64> {
        self.theta.get(&bus).copied()
    }

    /// Angle at `bus`, or NaN when the bus has no entry.
    pub fn angle(&self, bus: BusId) -> f64 {
        self.get(bus).unwrap_or(f64::NAN)
    }
}

/// Solves the reduced DC power-flow system for the bus angles produced by the
/// given net injections (kW, positive = generation).
///
/// The reference bus is pinned at zero and its injection, if any, is ignored.
pub fn dc_power_flow(net: &Network, injections: &BTreeMap<BusId, f64>) -> Result<AngleAssignment> {
    let report = validate_network(net);
    if !report.is_empty() {
        return Err(Error::InvalidNetwork(report));
    }
    let solver = ReducedSystem::new(net)?;
    let rhs = solver
        .buses
        .iter()
        .map(|&bus| {
            injections
                .get(&bus)
                .map(|kw| net.to_per_unit(*kw))
                .ok_or(Error::MissingInjection(bus))
        })
        .collect::<Result<Vec<_>>>()?;
    let theta = solver.solve(&rhs);
    let mut angles = AngleAssignment::default();
    angles.theta.insert(net.reference_bus, 0.0);
    for (bus, value) in solver.buses.iter().zip(theta) {
        angles.theta.insert(*bus, value);
    }
    Ok(angles)
}

/// LU factorization of the susceptance Laplacian with the reference row and
/// column removed.
struct ReducedSystem {
    buses: Vec<BusId>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl ReducedSystem {
    fn new(net: &Network) -> Result<Self> {
        let buses: Vec<BusId> = net.non_reference_buses().map(|b| b.id).collect();
        let position: BTreeMap<BusId, usize> =
            buses.iter().enumerate().map(|(i, b)| (*b, i)).collect();
        let n = buses.len();
        let mut matrix = DMatrix::<f64>::zeros(n, n);
        for line in &net.lines {
            let b = line.susceptance;
            let from = position.get(&line.from_bus).copied();
            let to = position.get(&line.to_bus).copied();
            if let Some(i) = from {
                matrix[(i, i)] += b;
            }
            if let Some(j) = to {
                matrix[(j, j)] += b;
            }
            if let (Some(i), Some(j)) = (from, to) {
                matrix[(i, j)] -= b;
                matrix[(j, i)] -= b;
            }
        }
        let lu = matrix.lu();
        if n > 0 && !lu.is_invertible() {
            return Err(Error::SingularSystem);
        }
        Ok(ReducedSystem { buses, lu })
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        if rhs.is_empty() {
            return Vec::new();
        }
        let b = DVector::from_column_slice(rhs);
        self.lu
            .solve(&b)
            .expect("factorization checked invertible")
            .iter()
            .copied()
            .collect()
    }
}

/// Signed flow on every line in kW, positive from `from_bus` to `to_bus`.
/// Entries follow the order of [`Network::lines`].
pub fn line_flows(net: &Network, angles: &AngleAssignment) -> Vec<f64> {
    net.lines
        .iter()
        .map(|line| {
            let delta = angles.angle(line.from_bus) - angles.angle(line.to_bus);
            net.from_per_unit(line.susceptance * delta)
        })
        .collect()
}

/// Net power exchanged with the reference bus: the sum of `gen - load` over all
/// non-reference buses (missing entries count as zero). Negative when the
/// upstream grid covers a deficit.
pub fn slack_power(net: &Network, gen: &BTreeMap<BusId, f64>, load: &BTreeMap<BusId, f64>) -> f64 {
    net.non_reference_buses()
        .map(|bus| {
            gen.get(&bus.id).copied().unwrap_or(0.0) - load.get(&bus.id).copied().unwrap_or(0.0)
        })
        .sum()
}
