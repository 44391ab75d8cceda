//! Experiment drivers: fit, bundle, price, evaluate, tabulate.
//!
//! Every driver returns a [`ResultTable`] of long-format rows plus a flat
//! metadata map. Grid points run in parallel; rows are sorted before they
//! are returned, so output depends only on the configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;

use crate::bundling::{build_bundles, evaluate_bundling, OptimalMode, StrategyKind};
use crate::ced::CedSurplusForm;
use crate::domain::{CostModelKind, CostModelSpec, DemandModel, FlowRecord, MarketParams};
use crate::error::{Error, Result};
use crate::ingest::{self, DatasetMoments, SynthPreset};
use crate::market::{FitOptions, Market};

pub const RESULT_HEADER: [&str; 9] = [
    "sweep_param",
    "sweep_value",
    "strategy",
    "num_bundles",
    "effective_bundles",
    "profit",
    "profit_capture",
    "consumer_surplus",
    "surplus_capture",
];

/// Lowest outside share a sweep may use; the model needs `s0 > 0`.
pub const MIN_S0: f64 = 0.01;

/// Strategy label of the per-flow pricing rows in a theta sweep.
pub const PER_FLOW: &str = "per-flow";

#[derive(Clone, Debug, PartialEq)]
pub enum InputSource {
    Csv(PathBuf),
    Synth(DatasetMoments),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub input: InputSource,
    pub demand_model: DemandModel,
    pub cost_model: CostModelKind,
    pub theta: f64,
    pub alpha: f64,
    pub p0: f64,
    pub s0: f64,
    pub strategies: Vec<StrategyKind>,
    pub bundles: Vec<usize>,
    pub optimal_mode: OptimalMode,
    pub split_dest_type: bool,
    pub ced_surplus: CedSurplusForm,
    pub theta_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub p0_grid: Vec<f64>,
    pub s0_grid: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            input: InputSource::Synth(SynthPreset::EuIsp.moments(1000, 0)),
            demand_model: DemandModel::Ced,
            cost_model: CostModelKind::Linear,
            theta: 0.2,
            alpha: 1.1,
            p0: 20.0,
            s0: 0.2,
            strategies: vec![
                StrategyKind::Optimal,
                StrategyKind::DemandWeighted,
                StrategyKind::CostWeighted,
                StrategyKind::ProfitWeighted,
                StrategyKind::CostDivision,
                StrategyKind::IndexDivision,
            ],
            bundles: (1..=8).collect(),
            optimal_mode: OptimalMode::FullPartition,
            split_dest_type: false,
            ced_surplus: CedSurplusForm::default(),
            theta_grid: vec![0.0, 0.2, 0.5, 1.0],
            alpha_grid: Vec::new(),
            p0_grid: Vec::new(),
            s0_grid: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn params(&self) -> MarketParams {
        MarketParams {
            model: self.demand_model,
            alpha: self.alpha,
            p0: self.p0,
            s0: self.s0,
            consumer_mass: None,
        }
    }

    pub fn cost_spec(&self) -> CostModelSpec {
        CostModelSpec::new(self.cost_model, self.theta)
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            split_dest_type: self.split_dest_type,
            ced_surplus: self.ced_surplus,
            ..FitOptions::default()
        }
    }

    fn check(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::Config("no strategies selected".into()));
        }
        if self.bundles.is_empty() || self.bundles.contains(&0) {
            return Err(Error::Config(
                "bundle counts must be nonempty and at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One output row. `prices` holds the per-bundle prices and is not part of
/// the CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub sweep_param: String,
    pub sweep_value: Option<f64>,
    pub strategy: String,
    pub num_bundles: usize,
    pub effective_bundles: usize,
    pub profit: f64,
    pub profit_capture: f64,
    pub consumer_surplus: f64,
    pub surplus_capture: f64,
    pub prices: Vec<Option<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub metadata: BTreeMap<String, String>,
}

impl ResultTable {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(RESULT_HEADER)?;
        for r in &self.rows {
            wtr.write_record([
                r.sweep_param.clone(),
                r.sweep_value.map(|v| v.to_string()).unwrap_or_default(),
                r.strategy.clone(),
                r.num_bundles.to_string(),
                r.effective_bundles.to_string(),
                r.profit.to_string(),
                r.profit_capture.to_string(),
                r.consumer_surplus.to_string(),
                r.surplus_capture.to_string(),
            ])?;
        }
        wtr.into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }

    /// Path of the metadata file written next to `out`.
    pub fn metadata_path(out: &Path) -> PathBuf {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".meta.toml");
        out.with_file_name(name)
    }

    /// Writes the CSV and its metadata file, each atomically.
    pub fn write(&self, out: &Path) -> Result<()> {
        let csv = self.to_csv()?;
        let meta = toml::to_string(&self.metadata)
            .map_err(|e| Error::Config(format!("cannot encode metadata: {e}")))?;
        ingest::write_atomic(out, &csv)?;
        ingest::write_atomic(&Self::metadata_path(out), meta.as_bytes())
    }

    /// Rows of one strategy in one sweep, in bundle order.
    pub fn curve<'a>(
        &'a self,
        sweep_param: &'a str,
        strategy: &'a str,
    ) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.sweep_param == sweep_param && r.strategy == strategy)
    }
}

fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        a.sweep_param
            .cmp(&b.sweep_param)
            .then(
                a.sweep_value
                    .partial_cmp(&b.sweep_value)
                    .expect("finite sweep values"),
            )
            .then_with(|| a.strategy.cmp(&b.strategy))
            .then(a.num_bundles.cmp(&b.num_bundles))
    });
}

/// Loads or synthesizes the flows named by the config and describes them.
pub fn load_records(
    config: &ExperimentConfig,
) -> Result<(Vec<FlowRecord>, BTreeMap<String, String>)> {
    let mut meta = BTreeMap::new();
    let records = match &config.input {
        InputSource::Csv(path) => {
            let got = ingest::read_flows_csv(path)?;
            meta.insert("input".into(), path.display().to_string());
            meta.insert(
                "input.dropped_zero_demand".into(),
                got.dropped_zero_demand.to_string(),
            );
            meta.insert(
                "input.merged_duplicates".into(),
                got.merged_duplicates.to_string(),
            );
            got.records
        }
        InputSource::Synth(m) => {
            meta.insert("input".into(), "synthetic".into());
            meta.insert("synthetic.n_flows".into(), m.n_flows.to_string());
            meta.insert("synthetic.seed".into(), m.seed.to_string());
            meta.insert(
                "synthetic.weighted_avg_distance_miles".into(),
                m.weighted_avg_distance_miles.to_string(),
            );
            meta.insert("synthetic.cv_distance".into(), m.cv_distance.to_string());
            meta.insert(
                "synthetic.aggregate_gbps".into(),
                m.aggregate_gbps.to_string(),
            );
            meta.insert("synthetic.cv_demand".into(), m.cv_demand.to_string());
            meta.insert(
                "synthetic.joint_distribution".into(),
                "demand and distance drawn independently".into(),
            );
            ingest::synth_generate(m)?
        }
    };
    Ok((records, meta))
}

fn describe(config: &ExperimentConfig, meta: &mut BTreeMap<String, String>) {
    meta.insert("demand_model".into(), config.demand_model.to_string());
    meta.insert("cost_model".into(), config.cost_model.to_string());
    meta.insert("alpha".into(), config.alpha.to_string());
    meta.insert("p0".into(), config.p0.to_string());
    meta.insert("theta".into(), config.theta.to_string());
    if config.demand_model == DemandModel::Logit {
        meta.insert("s0".into(), config.s0.to_string());
    }
    if config.split_dest_type {
        meta.insert("split_dest_type".into(), "true".into());
    }
}

fn describe_market(market: &Market, prefix: &str, meta: &mut BTreeMap<String, String>) {
    let key = |k: &str| format!("{prefix}{k}");
    meta.insert(key("flows"), market.flows().len().to_string());
    meta.insert(key("gamma"), market.cost_spec().gamma.to_string());
    meta.insert(key("beta"), market.cost_spec().beta.to_string());
    if let Some(k) = market.params().consumer_mass {
        meta.insert(key("consumer_mass"), k.to_string());
    }
    let base = market.baseline();
    meta.insert(key("profit_orig"), base.profit_orig.to_string());
    meta.insert(key("profit_max"), base.profit_max.to_string());
}

/// Rows for every (strategy, bundle count) pair on one fitted market, plus
/// the largest bucket count the optimal search used, if it aggregated.
fn curve_rows(
    market: &Market,
    strategies: &[StrategyKind],
    bundles: &[usize],
    mode: OptimalMode,
    sweep_param: &str,
    sweep_value: Option<f64>,
) -> Result<(Vec<ResultRow>, Option<usize>)> {
    let jobs: Vec<(StrategyKind, usize)> = strategies
        .iter()
        .flat_map(|&s| bundles.iter().map(move |&b| (s, b)))
        .collect();
    let out: Vec<(ResultRow, Option<usize>)> = jobs
        .par_iter()
        .map(|&(strategy, b)| {
            let built = build_bundles(strategy, market, b, mode)?;
            let o = evaluate_bundling(market, &built.bundling)?;
            let row = ResultRow {
                sweep_param: sweep_param.to_string(),
                sweep_value,
                strategy: strategy.name().to_string(),
                num_bundles: b,
                effective_bundles: o.effective_bundles(),
                profit: o.profit,
                profit_capture: o.profit_capture,
                consumer_surplus: o.consumer_surplus,
                surplus_capture: o.surplus_capture,
                prices: o.prices,
            };
            Ok((row, built.aggregated_units))
        })
        .collect::<Result<_>>()?;
    let aggregated = out.iter().filter_map(|(_, a)| *a).max();
    Ok((out.into_iter().map(|(r, _)| r).collect(), aggregated))
}

fn note_aggregation(aggregated: Option<usize>, meta: &mut BTreeMap<String, String>) {
    if let Some(units) = aggregated {
        meta.insert(
            "optimal.search".into(),
            format!("exhaustive over {units} equal-count cost buckets"),
        );
    }
}

/// Capture as a function of the number of bundles, for each strategy.
pub fn run_capture_curve(config: &ExperimentConfig) -> Result<ResultTable> {
    config.check()?;
    let (records, mut meta) = load_records(config)?;
    describe(config, &mut meta);
    let market = Market::fit(
        &records,
        &config.params(),
        &config.cost_spec(),
        &config.fit_options(),
    )?;
    describe_market(&market, "market.", &mut meta);
    let (mut rows, aggregated) = curve_rows(
        &market,
        &config.strategies,
        &config.bundles,
        config.optimal_mode,
        "none",
        None,
    )?;
    note_aggregation(aggregated, &mut meta);
    sort_rows(&mut rows);
    Ok(ResultTable {
        rows,
        metadata: meta,
    })
}

/// Capture curves for each theta in `config.theta_grid`.
///
/// `profit_capture` in the output holds profit divided by the largest
/// profit seen anywhere in the sweep, per-flow pricing included. Each theta
/// also gets a `per-flow` row with the profit of per-flow pricing.
pub fn run_theta_sweep(config: &ExperimentConfig) -> Result<ResultTable> {
    config.check()?;
    if config.theta_grid.is_empty() {
        return Err(Error::Config("theta grid is empty".into()));
    }
    let (records, mut meta) = load_records(config)?;
    describe(config, &mut meta);
    meta.remove("theta");
    let per_theta: Vec<(Vec<ResultRow>, Option<usize>)> = config
        .theta_grid
        .par_iter()
        .map(|&theta| {
            let spec = CostModelSpec::new(config.cost_model, theta);
            let market = Market::fit(&records, &config.params(), &spec, &config.fit_options())?;
            let (mut rows, agg) = curve_rows(
                &market,
                &config.strategies,
                &config.bundles,
                config.optimal_mode,
                "theta",
                Some(theta),
            )?;
            let base = market.baseline();
            let n = market.flows().len();
            let per_flow = evaluate_bundling(&market, &crate::domain::Bundling::singletons(n))?;
            rows.push(ResultRow {
                sweep_param: "theta".into(),
                sweep_value: Some(theta),
                strategy: PER_FLOW.into(),
                num_bundles: n,
                effective_bundles: n,
                profit: base.profit_max,
                profit_capture: 0.0,
                consumer_surplus: per_flow.consumer_surplus,
                surplus_capture: per_flow.surplus_capture,
                prices: per_flow.prices,
            });
            Ok((rows, agg))
        })
        .collect::<Result<_>>()?;
    let aggregated = per_theta.iter().filter_map(|(_, a)| *a).max();
    let mut rows: Vec<ResultRow> = per_theta.into_iter().flat_map(|(r, _)| r).collect();
    let top = rows
        .iter()
        .map(|r| r.profit)
        .fold(f64::NEG_INFINITY, f64::max);
    for r in &mut rows {
        r.profit_capture = r.profit / top;
    }
    meta.insert(
        "profit_capture".into(),
        "profit / largest profit in sweep".into(),
    );
    meta.insert("theta_grid".into(), format!("{:?}", config.theta_grid));
    note_aggregation(aggregated, &mut meta);
    sort_rows(&mut rows);
    Ok(ResultTable {
        rows,
        metadata: meta,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Param {
    Alpha,
    P0,
    S0,
}

impl Param {
    fn name(self) -> &'static str {
        match self {
            Param::Alpha => "alpha",
            Param::P0 => "p0",
            Param::S0 => "s0",
        }
    }

    /// Alpha and P0 report the worst capture over the grid, s0 the best.
    fn takes_max(self) -> bool {
        self == Param::S0
    }
}

/// Profit-weighted capture over grids of alpha, P0 and s0, varying one
/// parameter at a time around the config's values.
///
/// Emits a row per grid point and bundle count, and per bundle count a
/// summary row (`alpha:min`, `p0:min`, `s0:max`) copied from the extreme
/// grid point. Points at which the market cannot be fitted (for example a
/// nonpositive cost scale) are skipped and listed in the metadata.
pub fn run_sensitivity_sweep(config: &ExperimentConfig) -> Result<ResultTable> {
    config.check()?;
    let mut grids: Vec<(Param, f64)> = Vec::new();
    for (p, grid) in [
        (Param::Alpha, &config.alpha_grid),
        (Param::P0, &config.p0_grid),
        (Param::S0, &config.s0_grid),
    ] {
        grids.extend(grid.iter().map(|&v| (p, v)));
    }
    if grids.is_empty() {
        return Err(Error::Config(
            "sensitivity sweep needs at least one grid".into(),
        ));
    }
    if config.demand_model == DemandModel::Ced {
        if !config.s0_grid.is_empty() {
            return Err(Error::Config("an s0 sweep needs the logit model".into()));
        }
        if let Some(a) = config.alpha_grid.iter().find(|&&a| !(a > 1.0)) {
            return Err(Error::Config(format!(
                "CED alpha grid must stay above 1, got {a}"
            )));
        }
    }
    let (records, mut meta) = load_records(config)?;
    describe(config, &mut meta);
    let clamped: Vec<f64> = config
        .s0_grid
        .iter()
        .copied()
        .filter(|&s| s < MIN_S0)
        .collect();
    if !clamped.is_empty() {
        meta.insert(
            "s0_clamped".into(),
            format!("{clamped:?} raised to {MIN_S0}"),
        );
    }

    let strategy = [StrategyKind::ProfitWeighted];
    let results: Vec<(Param, f64, Result<Vec<ResultRow>>)> = grids
        .par_iter()
        .map(|&(param, value)| {
            let mut params = config.params();
            let value = match param {
                Param::Alpha => {
                    params.alpha = value;
                    value
                }
                Param::P0 => {
                    params.p0 = value;
                    value
                }
                Param::S0 => {
                    params.s0 = value.max(MIN_S0);
                    params.s0
                }
            };
            let rows = Market::fit(
                &records,
                &params,
                &config.cost_spec(),
                &config.fit_options(),
            )
            .and_then(|m| {
                curve_rows(
                    &m,
                    &strategy,
                    &config.bundles,
                    config.optimal_mode,
                    param.name(),
                    Some(value),
                )
            })
            .map(|(rows, _)| rows);
            (param, value, rows)
        })
        .collect();

    let mut rows = Vec::new();
    let mut skipped: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for (param, value, got) in results {
        match got {
            Ok(r) => rows.extend(r),
            Err(e) if e.is_numerical() => {
                warn!("skipping {}={value}: {e}", param.name());
                skipped
                    .entry(param.name())
                    .or_default()
                    .push(format!("{value}: {e}"));
            }
            Err(e) => return Err(e),
        }
    }
    for (name, points) in skipped {
        meta.insert(format!("skipped.{name}"), points.join("; "));
    }

    let mut summary = Vec::new();
    for param in [Param::Alpha, Param::P0, Param::S0] {
        for &b in &config.bundles {
            let pick = rows
                .iter()
                .filter(|r| r.sweep_param == param.name() && r.num_bundles == b)
                .reduce(|best, r| {
                    let better = if param.takes_max() {
                        r.profit_capture > best.profit_capture
                    } else {
                        r.profit_capture < best.profit_capture
                    };
                    if better {
                        r
                    } else {
                        best
                    }
                });
            if let Some(r) = pick {
                let suffix = if param.takes_max() { "max" } else { "min" };
                summary.push(ResultRow {
                    sweep_param: format!("{}:{suffix}", param.name()),
                    ..r.clone()
                });
            }
        }
    }
    rows.extend(summary);
    sort_rows(&mut rows);
    Ok(ResultTable {
        rows,
        metadata: meta,
    })
}
