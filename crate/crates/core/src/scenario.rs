//! Day simulation: profiles → orders → matching → clearance, once per hour.
//!
//! For each hour and non-reference bus, own solar first covers own load. The
//! remainder is a buy order (net load, at `buy_reserve`) or a sell order
//! (surplus, at `sell_reserve`). After matching, the clearance network for the
//! hour carries
//!
//! * base generation = surplus not matched (zero when all surplus sells),
//! * base load = net load not matched,
//!
//! and the matched trades, scaled by `scale_factor`, become flexible
//! generation and load on top. Reported load is the adjusted load after
//! clearance, so `load + slack − executed` equals the unmatched surplus.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clearance::{self, clear, ClearanceProblem, ClearanceSolution, ClearanceStatus};
use crate::error::{Error, Result};
use crate::network::{validate_network, BusId, Interval, Network};
use crate::orderbook::{cap_orders, match_book, Order, Trade};
use crate::profiles::{self, ProfileKind, ProfileSeries, SynthParams, HOURS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum ProfileSource {
    /// Profile CSV, relative to the config file.
    Csv(PathBuf),
    Synth(SynthParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Network JSON, relative to the config file.
    pub network: PathBuf,
    pub profiles: ProfileSource,
    #[serde(default = "default_solar_fraction")]
    pub solar_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    pub buy_reserve: f64,
    pub sell_reserve: f64,
    #[serde(default = "default_scale")]
    pub scale_factor: f64,
    /// Hours to run; all 24 when absent.
    #[serde(default)]
    pub hours: Option<Vec<u32>>,
}

fn default_solar_fraction() -> f64 {
    0.5
}

fn default_scale() -> f64 {
    1.0
}

impl ScenarioConfig {
    /// Reads a config file and resolves its relative paths against the file's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: ScenarioConfig = serde_json::from_str(&text).map_err(|source| Error::Json {
            context: path.display().to_string(),
            source,
        })?;
        let dir = path.parent().unwrap_or(Path::new(""));
        config.network = dir.join(&config.network);
        if let ProfileSource::Csv(p) = &mut config.profiles {
            *p = dir.join(&*p);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if !(self.scale_factor.is_finite() && self.scale_factor > 0.0) {
            return bad(format!("scale_factor {} must be positive", self.scale_factor));
        }
        if !(0.0..=1.0).contains(&self.solar_fraction) {
            return bad(format!("solar_fraction {} must be in [0, 1]", self.solar_fraction));
        }
        for (name, v) in [("buy_reserve", self.buy_reserve), ("sell_reserve", self.sell_reserve)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} {v} must be non-negative"));
            }
        }
        if let Some(h) = self.hours.iter().flatten().find(|&&h| h as usize >= HOURS) {
            return bad(format!("hour {h} out of range 0..23"));
        }
        Ok(())
    }

    pub fn hours(&self) -> Vec<u32> {
        self.hours.clone().unwrap_or_else(|| (0..HOURS as u32).collect())
    }
}

/// A loaded, checked scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub network: Network,
    pub profiles: Vec<ProfileSeries>,
}

impl Scenario {
    pub fn load(config: ScenarioConfig) -> Result<Self> {
        let network = Network::load(&config.network)?;
        let profiles = match &config.profiles {
            ProfileSource::Csv(path) => profiles::ingest_path(path)?,
            ProfileSource::Synth(params) => {
                profiles::synth_network_profiles(&network, params, config.solar_fraction, config.seed)?
            }
        };
        Scenario::new(config, network, profiles)
    }

    pub fn new(config: ScenarioConfig, network: Network, profiles: Vec<ProfileSeries>) -> Result<Self> {
        config.validate()?;
        let report = validate_network(&network);
        if !report.is_empty() {
            return Err(Error::InvalidNetwork(report));
        }
        for s in &profiles {
            if !network.contains_bus(s.bus) {
                return Err(Error::InvalidProfile(format!("profile for unknown bus {}", s.bus)));
            }
            if s.bus == network.reference_bus() {
                return Err(Error::InvalidProfile(format!(
                    "profile for reference bus {}",
                    s.bus
                )));
            }
        }
        for bus in network.non_reference_buses() {
            if !profiles.iter().any(|s| s.bus == bus.id && s.kind == ProfileKind::Load) {
                return Err(Error::InvalidProfile(format!("no load profile for bus {}", bus.id)));
            }
        }
        Ok(Scenario {
            config,
            network,
            profiles,
        })
    }
}

/// One row of the day table.
#[derive(Debug, Clone, PartialEq)]
pub struct HourBlockResult {
    pub hour: u32,
    /// Proposed volume after scaling, kWh.
    pub matched_volume: f64,
    /// Cleared volume `Σ x_t q_t`, kWh.
    pub executed_volume: f64,
    /// Trades proposed to clearance.
    pub trade_count: usize,
    /// Exchange with the reference bus, kWh; negative when the grid supplies.
    pub slack: f64,
    /// Adjusted load summed over non-reference buses, kWh.
    pub total_load: f64,
    /// `100 · executed / load`; `None` when there is no load.
    pub pct_load_fulfilled: Option<f64>,
}

impl HourBlockResult {
    pub fn is_empty(&self) -> bool {
        self.trade_count == 0
    }
}

#[derive(Debug, Clone)]
pub struct BlockOutcome {
    pub result: HourBlockResult,
    pub problem: ClearanceProblem,
    pub solution: ClearanceSolution,
}

/// Runs the matching and clearance pipeline for one hour.
pub fn run_block(scenario: &Scenario, hour: u32) -> Result<BlockOutcome> {
    let tag = |source: Error| Error::Hour {
        hour,
        source: Box::new(source),
    };
    if hour as usize >= HOURS {
        return Err(Error::InvalidScenario(format!("hour {hour} out of range 0..23")));
    }
    let config = &scenario.config;
    let (load, solar) = profiles::hourly(&scenario.profiles, hour as usize);

    let mut surplus = BTreeMap::new();
    let mut net_load = BTreeMap::new();
    let mut orders = Vec::new();
    for bus in scenario.network.non_reference_buses() {
        let l = load.get(&bus.id).copied().unwrap_or(0.0);
        let s = solar.get(&bus.id).copied().unwrap_or(0.0);
        let need = (l - s).max(0.0);
        let spare = (s - l).max(0.0);
        net_load.insert(bus.id, need);
        surplus.insert(bus.id, spare);
        if need > 0.0 {
            orders.push(Order::buy(format!("b{}", bus.id), bus.id, config.buy_reserve, need));
        }
        if spare > 0.0 {
            orders.push(Order::sell(format!("s{}", bus.id), bus.id, config.sell_reserve, spare));
        }
    }
    let orders = cap_orders(&orders, &surplus, &net_load);
    let matched = match_book(&orders).trades;

    let mut sold: BTreeMap<BusId, f64> = BTreeMap::new();
    let mut bought: BTreeMap<BusId, f64> = BTreeMap::new();
    for t in &matched {
        *sold.entry(t.seller_bus).or_default() += t.quantity;
        *bought.entry(t.buyer_bus).or_default() += t.quantity;
    }

    let reference = scenario.network.reference_bus();
    let hour_net = scenario.network.map_buses(|bus| {
        if bus.id == reference {
            return bus.clone();
        }
        let g0 = (surplus[&bus.id] - sold.get(&bus.id).copied().unwrap_or(0.0)).max(0.0);
        let r0 = (net_load[&bus.id] - bought.get(&bus.id).copied().unwrap_or(0.0)).max(0.0);
        let widen = |i: Interval, base: f64| Interval::new(i.lower.min(base).max(0.0).min(base), i.upper.max(base));
        let mut out = bus.clone().with_base(g0, r0);
        out.gen_bounds = widen(bus.gen_bounds, g0);
        out.load_bounds = widen(bus.load_bounds, r0);
        out
    });

    let trades: Vec<Trade> = matched
        .into_iter()
        .map(|t| Trade {
            quantity: t.quantity * config.scale_factor,
            ..t
        })
        .collect();
    let problem = ClearanceProblem::new(hour_net, trades).map_err(tag)?;
    let solution = clear(&problem).map_err(tag)?;
    if solution.status == ClearanceStatus::Infeasible {
        return Err(tag(Error::Infeasible(solution.violations)));
    }

    let total_load: f64 = solution.adjusted_load.values().sum();
    let executed = solution.executed_volume;
    let result = HourBlockResult {
        hour,
        matched_volume: problem.proposed_volume(),
        executed_volume: executed,
        trade_count: problem.trades().len(),
        slack: solution.slack,
        total_load,
        pct_load_fulfilled: (total_load > 0.0).then(|| 100.0 * executed / total_load),
    };
    Ok(BlockOutcome {
        result,
        problem,
        solution,
    })
}

/// Runs every configured hour, at most `jobs` at a time (0 = one per core).
/// Outcomes come back in hour order.
pub fn run_day(scenario: &Scenario, jobs: usize) -> Result<Vec<BlockOutcome>> {
    let hours = scenario.config.hours();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidScenario(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<BlockOutcome>> =
        pool.install(|| hours.par_iter().map(|&h| run_block(scenario, h)).collect());
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(o) => ok.push(o),
            Err(e) => failed.push(e),
        }
    }
    if !failed.is_empty() {
        return Err(Error::Blocks(failed));
    }
    ok.sort_by_key(|o| o.result.hour);
    Ok(ok)
}

/// Writes `hour,executed_kwh,trade_count,slack_kwh,load_kwh,pct_fulfilled`.
/// Empty hours are written as zeros.
pub fn write_results_csv<W: Write>(writer: W, rows: &[HourBlockResult]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let ctx = "results";
    csv.write_record(["hour", "executed_kwh", "trade_count", "slack_kwh", "load_kwh", "pct_fulfilled"])
        .map_err(|e| Error::csv(ctx, e))?;
    for r in rows {
        let (exec, slack, load, pct) = if r.is_empty() {
            (0.0, 0.0, 0.0, 0.0)
        } else {
            (r.executed_volume, r.slack, r.total_load, r.pct_load_fulfilled.unwrap_or(0.0))
        };
        csv.write_record([
            r.hour.to_string(),
            exec.to_string(),
            r.trade_count.to_string(),
            slack.to_string(),
            load.to_string(),
            pct.to_string(),
        ])
        .map_err(|e| Error::csv(ctx, e))?;
    }
    csv.flush().map_err(|e| Error::csv(ctx, e.into()))
}

/// Human-readable day table; consecutive empty hours collapse into one
/// `--` row.
pub fn results_markdown(rows: &[HourBlockResult]) -> String {
    let count = rows.iter().map(|r| r.trade_count).max().unwrap_or(0);
    let mut out = String::new();
    writeln!(
        out,
        "| Hour | Trade Qty (kWh) | Count Trades (max {count}) | Slack Power (kWh) | Loads (kWh) | % Load Fulfilled w/ P2P |"
    )
    .unwrap();
    out.push_str("|---|---|---|---|---|---|\n");
    let mut i = 0;
    while i < rows.len() {
        if rows[i].is_empty() {
            let start = rows[i].hour;
            let mut end = start;
            while i + 1 < rows.len() && rows[i + 1].is_empty() && rows[i + 1].hour == end + 1 {
                i += 1;
                end += 1;
            }
            let label = if start == end { start.to_string() } else { format!("{start}-{end}") };
            writeln!(out, "| {label} | -- | -- | -- | -- | -- |").unwrap();
        } else {
            let r = &rows[i];
            let pct = r
                .pct_load_fulfilled
                .map_or_else(|| "--".to_string(), |p| format!("{p:.3}%"));
            writeln!(
                out,
                "| {} | {:.3} | {} | {:.3} | {:.3} | {} |",
                r.hour, r.executed_volume, r.trade_count, r.slack, r.total_load, pct
            )
            .unwrap();
        }
        i += 1;
    }
    out
}

/// Writes the day table and per-hour solution files into `dir`:
/// `results.csv`, `results.md`, and for every hour `hour_HH_trades.csv`,
/// `hour_HH_buses.csv`, `hour_HH_summary.csv`.
pub fn write_outputs(dir: &Path, outcomes: &[BlockOutcome]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: String| {
        let path = dir.join(name);
        std::fs::File::create(&path)
            .map(std::io::BufWriter::new)
            .map_err(|e| Error::io(path, e))
    };
    let rows: Vec<HourBlockResult> = outcomes.iter().map(|o| o.result.clone()).collect();
    write_results_csv(create("results.csv".into())?, &rows)?;
    create("results.md".into())?
        .write_all(results_markdown(&rows).as_bytes())
        .map_err(|e| Error::io(dir.join("results.md"), e))?;
    for o in outcomes {
        let h = o.result.hour;
        write_hour_trades(create(format!("hour_{h:02}_trades.csv"))?, &o.problem, &o.solution)?;
        clearance::write_buses(create(format!("hour_{h:02}_buses.csv"))?, &o.problem, &o.solution)?;
        clearance::write_summary(create(format!("hour_{h:02}_summary.csv"))?, &o.solution)?;
    }
    Ok(())
}

/// Proposed trades with their cleared fraction:
/// `id,seller_bus,buyer_bus,quantity,match_price,x,executed_kwh`.
pub fn write_hour_trades<W: Write>(writer: W, problem: &ClearanceProblem, sol: &ClearanceSolution) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let ctx = "hour trades";
    csv.write_record(["id", "seller_bus", "buyer_bus", "quantity", "match_price", "x", "executed_kwh"])
        .map_err(|e| Error::csv(ctx, e))?;
    for (t, x) in problem.trades().iter().zip(&sol.execution) {
        csv.write_record([
            t.id.clone(),
            t.seller_bus.to_string(),
            t.buyer_bus.to_string(),
            t.quantity.to_string(),
            t.match_price.to_string(),
            x.to_string(),
            (x * t.quantity).to_string(),
        ])
        .map_err(|e| Error::csv(ctx, e))?;
    }
    csv.flush().map_err(|e| Error::csv(ctx, e.into()))
}
