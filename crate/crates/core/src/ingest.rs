//! Flow tables on disk and synthetic flow sets.
//!
//! Numbers are written with `f64`'s `Display`, which prints the shortest
//! string that parses back to the same bits, so every write/read cycle here
//! is lossless.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use indexmap::map::Entry;
use indexmap::IndexMap;
use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::domain::{
    ClassLabel, ConcaveShape, CostModelSpec, DemandModel, FittedFlow, FlowRecord, MarketParams,
};
use crate::error::{Error, Result};
use crate::stats::{coefficient_of_variation, weighted_mean};

pub const FLOW_HEADER: [&str; 5] = [
    "flow_id",
    "demand_mbps",
    "distance_miles",
    "region",
    "dest_type",
];
pub const FITTED_HEADER: [&str; 6] = ["flow_id", "q", "d", "v", "c", "class_label"];
pub const MARKET_HEADER: [&str; 12] = [
    "model",
    "alpha",
    "p0",
    "s0",
    "consumer_mass",
    "cost_model",
    "theta",
    "gamma",
    "beta",
    "concave_a",
    "concave_b",
    "concave_c",
];

/// Flows read from a table, with what was done to them on the way in.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ingested {
    pub records: Vec<FlowRecord>,
    /// Rows dropped because their demand was zero.
    pub dropped_zero_demand: usize,
    /// Rows folded into an earlier row with the same flow id.
    pub merged_duplicates: usize,
}

/// Writes `path` through a temporary file in the same directory, so readers
/// never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

struct Columns {
    idx: Vec<Option<usize>>,
}

impl Columns {
    fn locate(headers: &csv::StringRecord, names: &[&str], required: usize) -> Result<Columns> {
        let idx: Vec<Option<usize>> = names
            .iter()
            .map(|n| headers.iter().position(|h| h == *n))
            .collect();
        if let Some(k) = idx[..required].iter().position(Option::is_none) {
            return Err(Error::MissingColumn(names[k].to_string()));
        }
        Ok(Columns { idx })
    }

    fn get<'r>(&self, row: &'r csv::StringRecord, k: usize) -> Option<&'r str> {
        self.idx[k]
            .and_then(|i| row.get(i))
            .filter(|s| !s.is_empty())
    }
}

fn line_of(row: &csv::StringRecord) -> u64 {
    row.position().map_or(0, |p| p.line())
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn number(row: &csv::StringRecord, value: Option<&str>, name: &str) -> Result<f64> {
    let line = line_of(row);
    let raw = value.ok_or_else(|| parse_err(line, format!("{name} is blank")))?;
    let x: f64 = raw
        .parse()
        .map_err(|_| parse_err(line, format!("{name} `{raw}` is not a number")))?;
    if !x.is_finite() {
        return Err(parse_err(line, format!("{name} `{raw}` is not finite")));
    }
    Ok(x)
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input)
}

/// Parses a flow table. Rows with zero demand are dropped; rows repeating a
/// flow id add their demand to the first row with that id, which keeps its
/// distance and labels.
pub fn read_flows<R: Read>(input: R) -> Result<Ingested> {
    let mut rdr = reader(input);
    let cols = Columns::locate(rdr.headers()?, &FLOW_HEADER, 3)?;
    let mut out = Ingested::default();
    let mut by_id: IndexMap<String, FlowRecord> = IndexMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = line_of(&row);
        let flow_id = cols
            .get(&row, 0)
            .ok_or_else(|| parse_err(line, "flow_id is blank"))?
            .to_string();
        let demand = number(&row, cols.get(&row, 1), "demand_mbps")?;
        let distance = number(&row, cols.get(&row, 2), "distance_miles")?;
        if demand < 0.0 {
            return Err(parse_err(line, format!("negative demand {demand}")));
        }
        if distance < 0.0 {
            return Err(parse_err(line, format!("negative distance {distance}")));
        }
        let region = match cols.get(&row, 3) {
            None => None,
            Some(s) => match s.parse::<ClassLabel>() {
                Ok(ClassLabel::Region(r)) => Some(r),
                _ => return Err(parse_err(line, format!("unknown region `{s}`"))),
            },
        };
        let dest_type = match cols.get(&row, 4) {
            None => None,
            Some(s) => match s.parse::<ClassLabel>() {
                Ok(ClassLabel::Dest(d)) => Some(d),
                _ => return Err(parse_err(line, format!("unknown dest_type `{s}`"))),
            },
        };
        if demand == 0.0 {
            out.dropped_zero_demand += 1;
            continue;
        }
        match by_id.entry(flow_id.clone()) {
            Entry::Occupied(mut e) => {
                e.get_mut().demand_mbps += demand;
                out.merged_duplicates += 1;
            }
            Entry::Vacant(e) => {
                e.insert(FlowRecord {
                    flow_id,
                    demand_mbps: demand,
                    distance_miles: distance,
                    region,
                    dest_type,
                });
            }
        }
    }
    if out.dropped_zero_demand > 0 {
        warn!("dropped {} zero-demand rows", out.dropped_zero_demand);
    }
    out.records = by_id.into_values().collect();
    Ok(out)
}

pub fn read_flows_csv(path: &Path) -> Result<Ingested> {
    read_flows(File::open(path)?)
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|x| x.to_string()).unwrap_or_default()
}

fn to_bytes(wtr: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    wtr.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn flows_to_csv(records: &[FlowRecord]) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(FLOW_HEADER)?;
    for r in records {
        wtr.write_record([
            r.flow_id.clone(),
            r.demand_mbps.to_string(),
            r.distance_miles.to_string(),
            opt(r.region),
            opt(r.dest_type),
        ])?;
    }
    to_bytes(wtr)
}

pub fn write_flows_csv(path: &Path, records: &[FlowRecord]) -> Result<()> {
    write_atomic(path, &flows_to_csv(records)?)
}

pub fn fitted_to_csv(flows: &[FittedFlow]) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(FITTED_HEADER)?;
    for f in flows {
        wtr.write_record([
            f.flow_id.clone(),
            f.q.to_string(),
            f.d.to_string(),
            f.v.to_string(),
            f.c.to_string(),
            opt(f.class_label),
        ])?;
    }
    to_bytes(wtr)
}

pub fn read_fitted<R: Read>(input: R) -> Result<Vec<FittedFlow>> {
    let mut rdr = reader(input);
    let cols = Columns::locate(rdr.headers()?, &FITTED_HEADER, 5)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = line_of(&row);
        let class_label = match cols.get(&row, 5) {
            None => None,
            Some(s) => Some(
                s.parse()
                    .map_err(|_| parse_err(line, format!("unknown label `{s}`")))?,
            ),
        };
        out.push(FittedFlow {
            flow_id: cols
                .get(&row, 0)
                .ok_or_else(|| parse_err(line, "flow_id is blank"))?
                .to_string(),
            q: number(&row, cols.get(&row, 1), "q")?,
            d: number(&row, cols.get(&row, 2), "d")?,
            v: number(&row, cols.get(&row, 3), "v")?,
            c: number(&row, cols.get(&row, 4), "c")?,
            class_label,
        });
    }
    Ok(out)
}

pub fn market_to_csv(params: &MarketParams, cost: &CostModelSpec) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(MARKET_HEADER)?;
    wtr.write_record([
        params.model.to_string(),
        params.alpha.to_string(),
        params.p0.to_string(),
        params.s0.to_string(),
        opt(params.consumer_mass),
        cost.kind.to_string(),
        cost.theta.to_string(),
        cost.gamma.to_string(),
        cost.beta.to_string(),
        cost.concave.a.to_string(),
        cost.concave.b.to_string(),
        cost.concave.c.to_string(),
    ])?;
    to_bytes(wtr)
}

pub fn read_market<R: Read>(input: R) -> Result<(MarketParams, CostModelSpec)> {
    let mut rdr = reader(input);
    let cols = Columns::locate(rdr.headers()?, &MARKET_HEADER, MARKET_HEADER.len())?;
    let row = rdr
        .records()
        .next()
        .ok_or_else(|| parse_err(2, "no parameter row"))??;
    let line = line_of(&row);
    let text = |k: usize| cols.get(&row, k).unwrap_or("");
    let model: DemandModel = text(0)
        .parse()
        .map_err(|_| parse_err(line, format!("unknown model `{}`", text(0))))?;
    let num = |k: usize| number(&row, cols.get(&row, k), MARKET_HEADER[k]);
    let params = MarketParams {
        model,
        alpha: num(1)?,
        p0: num(2)?,
        s0: num(3)?,
        consumer_mass: match cols.get(&row, 4) {
            None => None,
            Some(_) => Some(num(4)?),
        },
    };
    let cost = CostModelSpec {
        kind: text(5)
            .parse()
            .map_err(|_| parse_err(line, format!("unknown cost model `{}`", text(5))))?,
        theta: num(6)?,
        gamma: num(7)?,
        beta: num(8)?,
        concave: ConcaveShape {
            a: num(9)?,
            b: num(10)?,
            c: num(11)?,
        },
    };
    Ok((params, cost))
}

/// Summary statistics a synthetic flow set is matched to.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMoments {
    pub n_flows: usize,
    /// Demand-weighted mean distance.
    pub weighted_avg_distance_miles: f64,
    pub cv_distance: f64,
    pub aggregate_gbps: f64,
    pub cv_demand: f64,
    pub seed: u64,
}

/// Published moments of three measured networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthPreset {
    EuIsp,
    Cdn,
    Internet2,
}

impl SynthPreset {
    pub fn name(self) -> &'static str {
        match self {
            SynthPreset::EuIsp => "eu-isp",
            SynthPreset::Cdn => "cdn",
            SynthPreset::Internet2 => "internet2",
        }
    }

    pub fn moments(self, n_flows: usize, seed: u64) -> DatasetMoments {
        let (d, cv_d, agg, cv_q) = match self {
            SynthPreset::EuIsp => (54.0, 0.70, 37.0, 1.71),
            SynthPreset::Cdn => (1988.0, 0.59, 96.0, 2.28),
            SynthPreset::Internet2 => (660.0, 0.54, 4.0, 4.53),
        };
        DatasetMoments {
            n_flows,
            weighted_avg_distance_miles: d,
            cv_distance: cv_d,
            aggregate_gbps: agg,
            cv_demand: cv_q,
            seed,
        }
    }
}

impl std::str::FromStr for SynthPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SynthPreset::EuIsp, SynthPreset::Cdn, SynthPreset::Internet2]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`")))
    }
}

const CALIBRATION_ITERS: usize = 100;
const CALIBRATION_TOL: f64 = 1e-9;

/// `exp(sigma z)` with `sigma` chosen so the sample CV equals `target`.
/// The sample CV is increasing in `sigma`, so bisection applies.
fn lognormal_with_cv(z: &[f64], target: f64) -> Result<Vec<f64>> {
    let draw = |sigma: f64| -> Vec<f64> { z.iter().map(|z| (sigma * z).exp()).collect() };
    if target == 0.0 {
        return Ok(vec![1.0; z.len()]);
    }
    let mut lo = 0.0;
    let mut hi = (1.0 + target * target).ln().sqrt();
    let mut iters = 0;
    while coefficient_of_variation(&draw(hi)) < target {
        lo = hi;
        hi *= 2.0;
        iters += 1;
        if iters >= CALIBRATION_ITERS {
            return Err(Error::SynthNonConvergence(iters));
        }
    }
    while iters < CALIBRATION_ITERS {
        let mid = 0.5 * (lo + hi);
        let xs = draw(mid);
        let cv = coefficient_of_variation(&xs);
        if (cv - target).abs() <= CALIBRATION_TOL * target {
            return Ok(xs);
        }
        if cv < target {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
    }
    Err(Error::SynthNonConvergence(iters))
}

/// Draws a lognormal flow set whose demand CV, distance CV, aggregate
/// demand and demand-weighted mean distance equal the targets.
///
/// Demands and distances are independent. The output depends only on
/// `moments` (including the seed).
pub fn synth_generate(moments: &DatasetMoments) -> Result<Vec<FlowRecord>> {
    let m = moments;
    let positive = [m.weighted_avg_distance_miles, m.aggregate_gbps];
    if m.n_flows == 0 || positive.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::Config("synthetic moments must be positive".into()));
    }
    if !(m.cv_distance >= 0.0 && m.cv_demand >= 0.0) {
        return Err(Error::Config(
            "coefficients of variation must be nonnegative".into(),
        ));
    }
    let n = m.n_flows;
    let mut rng = ChaCha8Rng::seed_from_u64(m.seed);
    let zq: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let zd: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();

    let mut q = lognormal_with_cv(&zq, m.cv_demand)?;
    let total_mbps = m.aggregate_gbps * 1000.0;
    let q_scale = total_mbps / q.iter().sum::<f64>();
    q.iter_mut().for_each(|x| *x *= q_scale);

    let mut d = lognormal_with_cv(&zd, m.cv_distance)?;
    let d_scale = m.weighted_avg_distance_miles / weighted_mean(&d, &q);
    d.iter_mut().for_each(|x| *x *= d_scale);

    let width = n.to_string().len();
    Ok(q.into_iter()
        .zip(d)
        .enumerate()
        .map(|(i, (q, d))| FlowRecord::new(format!("flow-{i:0width$}"), q, d))
        .collect())
}
