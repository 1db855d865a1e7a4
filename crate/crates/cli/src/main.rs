use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use lvclear::clearance::{self, write_buses, write_execution, write_summary};
use lvclear::orderbook::{self, read_orders, write_trades};
use lvclear::scenario::{results_markdown, write_outputs};
use lvclear::{
    profiles, run_day, validate_network, ClearanceProblem, ClearanceStatus, Network, Scenario, ScenarioConfig,
    SynthParams,
};

/// Peer-to-peer electricity clearing on low-voltage networks.
#[derive(Parser)]
#[command(name = "lvclear", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a network file and report every violated rule.
    Validate {
        #[arg(long)]
        network: PathBuf,
    },
    /// Match an order book; one trades file per block.
    Match {
        #[arg(long)]
        orders: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Clear proposed trades against the network's physical limits.
    Clear {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        trades: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Also write the assembled linear program as `problem.mps`.
        #[arg(long)]
        dump_lp: bool,
    },
    /// Run matching and clearance for every hour of a scenario.
    RunDay {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's scale_factor.
        #[arg(long)]
        scale: Option<f64>,
        /// Overrides the config's hours, e.g. `11`, `9-14` or `0,6,10-12`.
        #[arg(long, value_parser = parse_hours)]
        hours: Option<Hours>,
        /// Worker threads; 0 uses one per core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write synthetic load and solar profiles for a network.
    SynthProfiles {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        solar_fraction: f64,
        #[arg(long)]
        seed: u64,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone)]
struct Hours(Vec<u32>);

fn parse_hours(text: &str) -> Result<Hours, String> {
    let mut hours = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        let (lo, hi) = match part.split_once('-') {
            Some((a, b)) => (a.trim(), b.trim()),
            None => (part, part),
        };
        let lo: u32 = lo.parse().map_err(|_| format!("invalid hour {lo:?}"))?;
        let hi: u32 = hi.parse().map_err(|_| format!("invalid hour {hi:?}"))?;
        if lo > hi || hi > 23 {
            return Err(format!("invalid hour range {part:?}"));
        }
        hours.extend(lo..=hi);
    }
    hours.sort_unstable();
    hours.dedup();
    Ok(Hours(hours))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn out_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("cannot create directory {}", path.display()))
}

fn validate(network: &Path) -> Result<()> {
    let net = Network::load(network)?;
    let report = validate_network(&net);
    if report.is_empty() {
        println!("OK");
        return Ok(());
    }
    for v in &report {
        eprintln!("{v}");
    }
    bail!("{}: {} violation(s)", network.display(), report.len())
}

fn match_cmd(orders: &Path, out: &Path) -> Result<()> {
    let file = File::open(orders).with_context(|| format!("cannot open {}", orders.display()))?;
    let records = read_orders(file).with_context(|| orders.display().to_string())?;
    let mut blocks: BTreeMap<Option<u32>, Vec<lvclear::Order>> = BTreeMap::new();
    for r in records {
        blocks.entry(r.block).or_default().push(r.order);
    }
    out_dir(out)?;
    for (block, book) in &blocks {
        orderbook::check_orders(book, None)?;
        let outcome = lvclear::match_book(book);
        let name = match block {
            Some(b) => format!("block_{b:02}_trades.csv"),
            None => "trades.csv".to_string(),
        };
        write_trades(create(&out.join(&name))?, &outcome.trades)?;
        println!(
            "{name}: {} trade(s), {} kWh matched",
            outcome.trades.len(),
            outcome.total_matched
        );
    }
    Ok(())
}

fn clear_cmd(network: &Path, trades: &Path, out: &Path, dump_lp: bool) -> Result<()> {
    let net = Network::load(network)?;
    let report = validate_network(&net);
    if !report.is_empty() {
        return Err(lvclear::Error::InvalidNetwork(report).into());
    }
    let file = File::open(trades).with_context(|| format!("cannot open {}", trades.display()))?;
    let trades = orderbook::read_trades(file)?;
    let problem = ClearanceProblem::new(net, trades)?;
    out_dir(out)?;
    if dump_lp {
        let assembled = clearance::assemble(&problem)?;
        fs::write(out.join("problem.mps"), lvclear::lp::write_mps(&assembled.lp, "CLEARANCE"))
            .context("cannot write problem.mps")?;
    }
    let sol = clearance::clear(&problem)?;
    write_summary(create(&out.join("summary.csv"))?, &sol)?;
    if sol.status == ClearanceStatus::Infeasible {
        return Err(lvclear::Error::Infeasible(sol.violations).into());
    }
    write_execution(create(&out.join("execution.csv"))?, &problem, &sol)?;
    write_buses(create(&out.join("buses.csv"))?, &problem, &sol)?;
    println!(
        "optimal: {} of {} kWh executed, slack {} kW",
        sol.executed_volume,
        problem.proposed_volume(),
        sol.slack
    );
    Ok(())
}

fn run_day_cmd(config: &Path, scale: Option<f64>, hours: Option<Hours>, jobs: usize, out: &Path) -> Result<()> {
    let mut config = ScenarioConfig::load(config)?;
    if let Some(scale) = scale {
        config.scale_factor = scale;
    }
    if let Some(Hours(hours)) = hours {
        config.hours = Some(hours);
    }
    let scenario = Scenario::load(config)?;
    let day = run_day(&scenario, jobs)?;
    write_outputs(out, &day)?;

    let log = format!(
        "lvclear {}\nseed: {}\njobs: {jobs}\nconfig: {}\n",
        env!("CARGO_PKG_VERSION"),
        scenario.config.seed,
        serde_json::to_string(&scenario.config)?
    );
    fs::write(out.join("run.log"), log).context("cannot write run.log")?;
    let rows: Vec<_> = day.iter().map(|o| o.result.clone()).collect();
    print!("{}", results_markdown(&rows));
    Ok(())
}

fn synth_cmd(network: &Path, solar_fraction: f64, seed: u64, out: &Path) -> Result<()> {
    if !(0.0..=1.0).contains(&solar_fraction) {
        bail!("solar fraction {solar_fraction} must be in [0, 1]");
    }
    let net = Network::load(network)?;
    let series = profiles::synth_network_profiles(&net, &SynthParams::default(), solar_fraction, seed)?;
    profiles::write_csv(create(out)?, &series)?;
    let solar = series.iter().filter(|s| s.kind == profiles::ProfileKind::Solar).count();
    println!("{} series, {solar} solar bus(es)", series.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { network } => validate(&network),
        Command::Match { orders, out } => match_cmd(&orders, &out),
        Command::Clear {
            network,
            trades,
            out,
            dump_lp,
        } => clear_cmd(&network, &trades, &out, dump_lp),
        Command::RunDay {
            config,
            scale,
            hours,
            jobs,
            out,
        } => run_day_cmd(&config, scale, hours, jobs, &out),
        Command::SynthProfiles {
            network,
            solar_fraction,
            seed,
            out,
        } => synth_cmd(&network, solar_fraction, seed, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
