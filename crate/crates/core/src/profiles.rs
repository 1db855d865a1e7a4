//! Hourly load and solar series per bus.
//!
//! Series come either from a CSV file (`bus,kind,h0,...,h23`) or from the
//! parametric shapes below.
//!
//! Residential shape, with `b = base_kw`, `p = evening_peak_kw` and
//! `m = min(1.3·b, p)`:
//!
//! | hour  | 0-6 | 7            | 8 | 9            | 10-16 | 17          | 18           | 19 | 20           | 21          | 22-23 |
//! |-------|-----|--------------|---|--------------|-------|-------------|--------------|----|--------------|-------------|-------|
//! | value | b   | (b+m)/2      | m | (b+m)/2      | b     | b+(p-b)/3   | b+2(p-b)/3   | p  | b+2(p-b)/3   | b+(p-b)/3   | b     |
//!
//! Solar shape: `peak·sin²(π·(h + 0.5 − sunrise)/(sunset − sunrise))` for
//! `sunrise <= h < sunset`, zero otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{BusId, Network};

pub const HOURS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Load,
    Solar,
}

impl ProfileKind {
    fn as_str(self) -> &'static str {
        match self {
            ProfileKind::Load => "load",
            ProfileKind::Solar => "solar",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSeries {
    pub bus: BusId,
    pub kind: ProfileKind,
    /// kWh per hour block.
    pub values: [f64; HOURS],
}

impl ProfileSeries {
    pub fn new(bus: impl Into<BusId>, kind: ProfileKind, values: [f64; HOURS]) -> Result<Self> {
        let series = ProfileSeries {
            bus: bus.into(),
            kind,
            values,
        };
        if let Some(h) = series.values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidProfile(format!(
                "bus {} {}: negative energy {} at hour {h}",
                series.bus,
                kind.as_str(),
                series.values[h]
            )));
        }
        Ok(series)
    }
}

/// Parses a profile CSV with header `bus,kind,h0..h23`.
pub fn ingest_csv<R: Read>(reader: R) -> Result<Vec<ProfileSeries>> {
    let mut csv = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = csv.headers().map_err(|e| Error::csv("profiles", e))?.clone();
    let expected: Vec<String> = ["bus", "kind"]
        .into_iter()
        .map(String::from)
        .chain((0..HOURS).map(|h| format!("h{h}")))
        .collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Parse {
            line: 1,
            message: "expected header bus,kind,h0,...,h23".into(),
        });
    }

    let mut out = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|e| Error::csv("profiles", e))?;
        let line = record.position().map_or(0, |p| p.line());
        let fail = |message: String| Error::Parse { line, message };
        if record.len() != HOURS + 2 {
            return Err(fail(format!(
                "expected 24 hourly values, found {}",
                record.len().saturating_sub(2)
            )));
        }
        let bus: u32 = record[0]
            .parse()
            .map_err(|_| fail(format!("invalid bus id {:?}", &record[0])))?;
        let kind = match &record[1] {
            "load" => ProfileKind::Load,
            "solar" => ProfileKind::Solar,
            other => return Err(fail(format!("unknown kind {other:?}"))),
        };
        let mut values = [0.0; HOURS];
        for (h, slot) in values.iter_mut().enumerate() {
            let text = &record[h + 2];
            let v: f64 = text
                .parse()
                .map_err(|_| fail(format!("h{h}: invalid number {text:?}")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(fail(format!("h{h}: negative energy {v}")));
            }
            *slot = v;
        }
        out.push(ProfileSeries {
            bus: BusId(bus),
            kind,
            values,
        });
    }
    Ok(out)
}

pub fn ingest_path(path: impl AsRef<std::path::Path>) -> Result<Vec<ProfileSeries>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_csv(file)
}

pub fn write_csv<W: Write>(writer: W, series: &[ProfileSeries]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let ctx = "profiles";
    let header: Vec<String> = ["bus".to_string(), "kind".to_string()]
        .into_iter()
        .chain((0..HOURS).map(|h| format!("h{h}")))
        .collect();
    csv.write_record(&header).map_err(|e| Error::csv(ctx, e))?;
    for s in series {
        let row: Vec<String> = [s.bus.to_string(), s.kind.as_str().to_string()]
            .into_iter()
            .chain(s.values.iter().map(|v| v.to_string()))
            .collect();
        csv.write_record(&row).map_err(|e| Error::csv(ctx, e))?;
    }
    csv.flush().map_err(|e| Error::csv(ctx, e.into()))
}

/// Clear-sky solar output over a daylight window `[sunrise, sunset)`.
pub fn synth_solar(peak_kw: f64, sunrise: u32, sunset: u32) -> Result<[f64; HOURS]> {
    if sunrise >= sunset || sunset > HOURS as u32 {
        return Err(Error::InvalidWindow { sunrise, sunset });
    }
    if !(peak_kw.is_finite() && peak_kw >= 0.0) {
        return Err(Error::InvalidProfile(format!("solar peak {peak_kw} must be non-negative")));
    }
    let width = f64::from(sunset - sunrise);
    let mut values = [0.0; HOURS];
    for h in sunrise..sunset {
        let phase = PI * (f64::from(h) + 0.5 - f64::from(sunrise)) / width;
        values[h as usize] = peak_kw * phase.sin().powi(2);
    }
    Ok(values)
}

/// Residential demand: flat base, a morning bump and an evening peak at 19:00.
pub fn synth_residential(base_kw: f64, evening_peak_kw: f64) -> Result<[f64; HOURS]> {
    if !(base_kw.is_finite() && base_kw >= 0.0 && evening_peak_kw.is_finite() && evening_peak_kw >= base_kw) {
        return Err(Error::InvalidProfile(format!(
            "residential shape needs 0 <= base ({base_kw}) <= evening peak ({evening_peak_kw})"
        )));
    }
    let b = base_kw;
    let p = evening_peak_kw;
    let m = (1.3 * b).min(p);
    let rise = (p - b) / 3.0;
    let mut values = [b; HOURS];
    values[7] = 0.5 * (b + m);
    values[8] = m;
    values[9] = 0.5 * (b + m);
    values[17] = b + rise;
    values[18] = b + 2.0 * rise;
    values[19] = p;
    values[20] = b + 2.0 * rise;
    values[21] = b + rise;
    Ok(values)
}

/// Seeded choice of `floor(fraction · #non-reference buses)` solar buses.
pub fn assign_solar(net: &Network, fraction: f64, seed: u64) -> BTreeSet<BusId> {
    let mut candidates: Vec<BusId> = net.non_reference_buses().map(|b| b.id).collect();
    let fraction = fraction.clamp(0.0, 1.0);
    // the epsilon absorbs products like 0.29 * 100 = 28.999999999999996
    let count = ((fraction * candidates.len() as f64) + 1e-9).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    candidates.into_iter().take(count).collect()
}

/// Parameters for synthesizing a full set of profiles for a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub solar_peak_kw: f64,
    pub sunrise: u32,
    pub sunset: u32,
    pub load_base_kw: f64,
    pub load_evening_peak_kw: f64,
    /// Per-bus load multipliers are drawn uniformly from `[1 - spread, 1 + spread]`.
    pub load_spread: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            solar_peak_kw: 2.5,
            sunrise: 6,
            sunset: 18,
            load_base_kw: 1.2,
            load_evening_peak_kw: 2.0,
            load_spread: 0.1,
        }
    }
}

/// One load series per non-reference bus, plus a solar series for each bus
/// picked by [`assign_solar`]. Deterministic in `seed`.
pub fn synth_network_profiles(
    net: &Network,
    params: &SynthParams,
    solar_fraction: f64,
    seed: u64,
) -> Result<Vec<ProfileSeries>> {
    if !(0.0..1.0).contains(&params.load_spread) {
        return Err(Error::InvalidProfile(format!(
            "load spread {} must be in [0, 1)",
            params.load_spread
        )));
    }
    let solar_buses = assign_solar(net, solar_fraction, seed);
    let solar = synth_solar(params.solar_peak_kw, params.sunrise, params.sunset)?;
    // separate stream so solar assignment and load scaling do not interact
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut out = Vec::new();
    for bus in net.non_reference_buses() {
        let scale = if params.load_spread > 0.0 {
            rng.gen_range(1.0 - params.load_spread..=1.0 + params.load_spread)
        } else {
            1.0
        };
        let load = synth_residential(params.load_base_kw * scale, params.load_evening_peak_kw * scale)?;
        out.push(ProfileSeries::new(bus.id, ProfileKind::Load, load)?);
        if solar_buses.contains(&bus.id) {
            out.push(ProfileSeries::new(bus.id, ProfileKind::Solar, solar)?);
        }
    }
    Ok(out)
}

/// Per-bus lookup of load and solar for one hour. Missing series read as zero;
/// multiple series of the same kind on a bus are summed.
pub fn hourly(series: &[ProfileSeries], hour: usize) -> (BTreeMap<BusId, f64>, BTreeMap<BusId, f64>) {
    let mut load = BTreeMap::new();
    let mut solar = BTreeMap::new();
    for s in series {
        let target = match s.kind {
            ProfileKind::Load => &mut load,
            ProfileKind::Solar => &mut solar,
        };
        *target.entry(s.bus).or_insert(0.0) += s.values[hour];
    }
    (load, solar)
}
