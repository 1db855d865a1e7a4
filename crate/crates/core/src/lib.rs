//! Clearing and settlement for peer-to-peer electricity trading on low-voltage
//! networks.
//!
//! The pipeline has two stages. A double auction ([`orderbook`]) pairs buy and
//! sell orders into proposed trades; the clearance model ([`clearance`]) then
//! picks the executable fraction of each trade so that total executed volume is
//! maximal while the DC power-flow limits of the network ([`network`]) hold.
//! The clearance problem is a linear program solved by the bundled simplex
//! implementation in [`lp`]. [`profiles`] and [`scenario`] drive whole-day
//! simulations over 24 hourly blocks.

pub mod clearance;
mod error;
pub mod lp;
pub mod network;
pub mod orderbook;
pub mod profiles;
pub mod scenario;

pub use clearance::{
    assemble, clear, verify, AssembledProblem, ClearanceProblem, ClearanceSolution,
    ClearanceStatus, ClearanceViolation, ConstraintKind, RowKind,
};
pub use error::{Error, Result};
pub use lp::{LinearProgram, LpSolution, LpStatus, Relation};
pub use network::{
    dc_power_flow, line_flows, slack_power, validate_network, AngleAssignment, Bus, BusId,
    Interval, Line, Network, NetworkViolation,
};
pub use orderbook::{cap_orders, match_book, match_orders, MatchOutcome, Order, Side, Trade};
pub use profiles::{ProfileKind, ProfileSeries, SynthParams, HOURS};
pub use scenario::{run_block, run_day, BlockOutcome, HourBlockResult, ProfileSource, Scenario, ScenarioConfig};
