//! Building tiers from fitted flows and pricing them.

mod optimal;
mod token_bucket;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::warn;

pub use optimal::{ln_score, Block, OptimalMode, FULL_PARTITION_LIMIT};
pub use token_bucket::token_bucket_bundles;

use crate::domain::{Bundling, TierOutcome};
use crate::error::{Error, Result};
use crate::market::Market;
use crate::stats::log_sum_exp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    Optimal,
    DemandWeighted,
    CostWeighted,
    ProfitWeighted,
    CostDivision,
    IndexDivision,
    ClassConstrainedProfitWeighted,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 7] = [
        StrategyKind::Optimal,
        StrategyKind::DemandWeighted,
        StrategyKind::CostWeighted,
        StrategyKind::ProfitWeighted,
        StrategyKind::CostDivision,
        StrategyKind::IndexDivision,
        StrategyKind::ClassConstrainedProfitWeighted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Optimal => "optimal",
            StrategyKind::DemandWeighted => "demand-weighted",
            StrategyKind::CostWeighted => "cost-weighted",
            StrategyKind::ProfitWeighted => "profit-weighted",
            StrategyKind::CostDivision => "cost-division",
            StrategyKind::IndexDivision => "index-division",
            StrategyKind::ClassConstrainedProfitWeighted => "class-constrained",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy '{s}'")))
    }
}

/// A bundling plus how the optimal search got there.
#[derive(Clone, Debug, PartialEq)]
pub struct BuiltBundles {
    pub bundling: Bundling,
    /// Number of units the optimal search partitioned, when it had to group
    /// flows into cost-quantile buckets first.
    pub aggregated_units: Option<usize>,
}

fn ids(market: &Market) -> Vec<&str> {
    market.flows().iter().map(|f| f.flow_id.as_str()).collect()
}

/// Flow indices sorted by ascending cost, ties by `tiebreak` descending and
/// then by flow id.
fn cost_order(market: &Market, tiebreak: Option<&[f64]>) -> Vec<usize> {
    let flows = market.flows();
    let mut order: Vec<usize> = (0..flows.len()).collect();
    order.sort_by(|&a, &b| {
        flows[a]
            .c
            .partial_cmp(&flows[b].c)
            .unwrap_or(Ordering::Equal)
            .then_with(|| match tiebreak {
                Some(t) => t[b].partial_cmp(&t[a]).unwrap_or(Ordering::Equal),
                None => Ordering::Equal,
            })
            .then_with(|| flows[a].flow_id.cmp(&flows[b].flow_id))
    });
    order
}

fn cost_division(market: &Market, b: usize) -> Bundling {
    let c_max = market.flows().iter().map(|f| f.c).fold(0.0, f64::max);
    let assignment = market
        .flows()
        .iter()
        .map(|f| ((f.c * b as f64 / c_max).floor() as usize).min(b - 1))
        .collect();
    Bundling::new(assignment, b).expect("clamped")
}

fn index_division(market: &Market, b: usize) -> Bundling {
    let n = market.flows().len();
    let size = n.div_ceil(b);
    let mut assignment = vec![0; n];
    for (rank, i) in cost_order(market, None).into_iter().enumerate() {
        assignment[i] = rank / size;
    }
    Bundling::new(assignment, b).expect("rank / ceil(n/b) < b")
}

/// Splits `b` bundles over classes in proportion to `mass`, at least one
/// each and never more than a class has flows. Expects `b >= mass.len()`.
fn allocate(mass: &[f64], sizes: &[usize], b: usize) -> Vec<usize> {
    let total: f64 = mass.iter().sum();
    let quota: Vec<f64> = mass.iter().map(|m| b as f64 * m / total).collect();
    let mut alloc = vec![1; mass.len()];
    let mut left = b - mass.len();
    while left > 0 {
        let pick = (0..mass.len())
            .filter(|&k| alloc[k] < sizes[k])
            .max_by(|&x, &y| {
                (quota[x] - alloc[x] as f64)
                    .partial_cmp(&(quota[y] - alloc[y] as f64))
                    .unwrap_or(Ordering::Equal)
                    .then(y.cmp(&x))
            });
        match pick {
            Some(k) => alloc[k] += 1,
            None => break,
        }
        left -= 1;
    }
    alloc
}

fn class_constrained(market: &Market, b: usize) -> Result<Bundling> {
    let flows = market.flows();
    let mut classes: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, f) in flows.iter().enumerate() {
        let label = f
            .class_label
            .ok_or_else(|| Error::MissingClassLabels(f.flow_id.clone()))?;
        classes.entry(label.to_string()).or_default().push(i);
    }
    let potential = market.potential_profits();
    let mut members: Vec<Vec<usize>> = classes.into_values().collect();
    let mass = |m: &Vec<usize>| m.iter().map(|&i| potential[i]).sum::<f64>();

    if members.len() > b {
        // too few bundles to keep every class apart: the heaviest classes
        // keep their own bundle and the rest share the last one
        members.sort_by(|x, y| mass(y).partial_cmp(&mass(x)).unwrap_or(Ordering::Equal));
        let tail: Vec<usize> = members.drain(b - 1..).flatten().collect();
        members.push(tail);
        warn!(
            "{} bundles cannot separate all classes; merging the lightest",
            b
        );
    }
    let masses: Vec<f64> = members.iter().map(mass).collect();
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let alloc = allocate(&masses, &sizes, b);

    let mut assignment = vec![0; flows.len()];
    let mut offset = 0;
    for (idx, k) in members.iter().zip(alloc) {
        let w: Vec<f64> = idx.iter().map(|&i| potential[i]).collect();
        let names: Vec<&str> = idx.iter().map(|&i| flows[i].flow_id.as_str()).collect();
        let inner = token_bucket_bundles(&w, &names, k);
        for (&i, &j) in idx.iter().zip(inner.assignment()) {
            assignment[i] = offset + j;
        }
        offset += k;
    }
    Bundling::new(assignment, b)
}

/// Log-weight and cost aggregate of each flow.
fn flow_blocks(market: &Market) -> Vec<Block> {
    market
        .log_bundle_weights()
        .into_iter()
        .zip(market.flows())
        .map(|(ln_weight, f)| Block {
            ln_weight,
            mean_cost: f.c,
        })
        .collect()
}

/// Equal-count groups of flows in (cost, potential profit) order.
fn quantile_groups(market: &Market, k: usize) -> Vec<Vec<usize>> {
    let potential = market.potential_profits();
    let order = cost_order(market, Some(&potential));
    let n = order.len();
    (0..k)
        .map(|g| order[g * n / k..(g + 1) * n / k].to_vec())
        .filter(|g| !g.is_empty())
        .collect()
}

fn merge_blocks(blocks: &[Block], idx: &[usize]) -> Block {
    let ln: Vec<f64> = idx.iter().map(|&i| blocks[i].ln_weight).collect();
    let ln_weight = log_sum_exp(&ln);
    let mean_cost = idx
        .iter()
        .map(|&i| (blocks[i].ln_weight - ln_weight).exp() * blocks[i].mean_cost)
        .sum::<f64>()
        / idx
            .iter()
            .map(|&i| (blocks[i].ln_weight - ln_weight).exp())
            .sum::<f64>();
    Block {
        ln_weight,
        mean_cost,
    }
}

/// Profit-maximizing bundling with at most `b` bundles.
///
/// `FullPartition` fails with [`Error::TooManyFlows`] above
/// [`FULL_PARTITION_LIMIT`] flows; see [`build_bundles`] for the bucketed
/// variant.
pub fn optimal_bundles(market: &Market, b: usize, mode: OptimalMode) -> Result<Bundling> {
    let blocks = flow_blocks(market);
    match mode {
        OptimalMode::FullPartition => {
            let a = optimal::full_partition(market.model(), market.alpha(), &blocks, b)?;
            Ok(optimal::to_bundling(a, b))
        }
        OptimalMode::ContiguousByCost => {
            let order = cost_order(market, None);
            let sorted: Vec<Block> = order.iter().map(|&i| blocks[i]).collect();
            let a = optimal::contiguous(market.model(), market.alpha(), &sorted, b);
            let mut assignment = vec![0; order.len()];
            for (&i, l) in order.iter().zip(a) {
                assignment[i] = l;
            }
            Ok(optimal::to_bundling(assignment, b))
        }
    }
}

fn bucketed_optimal(market: &Market, b: usize) -> Result<BuiltBundles> {
    let groups = quantile_groups(market, FULL_PARTITION_LIMIT);
    let blocks = flow_blocks(market);
    let units: Vec<Block> = groups.iter().map(|g| merge_blocks(&blocks, g)).collect();
    let labels = optimal::full_partition(market.model(), market.alpha(), &units, b)?;
    let mut assignment = vec![0; blocks.len()];
    for (g, &l) in groups.iter().zip(&labels) {
        for &i in g {
            assignment[i] = l;
        }
    }
    Ok(BuiltBundles {
        bundling: optimal::to_bundling(assignment, b),
        aggregated_units: Some(units.len()),
    })
}

/// Builds a bundling with `b` slots under `strategy`.
///
/// For `Optimal` in `FullPartition` mode with more than
/// [`FULL_PARTITION_LIMIT`] flows, flows are first grouped into that many
/// equal-count buckets by cost and the buckets are partitioned exactly.
pub fn build_bundles(
    strategy: StrategyKind,
    market: &Market,
    b: usize,
    mode: OptimalMode,
) -> Result<BuiltBundles> {
    if b == 0 {
        return Err(Error::Config("number of bundles must be at least 1".into()));
    }
    let plain = |bundling| {
        Ok(BuiltBundles {
            bundling,
            aggregated_units: None,
        })
    };
    let flows = market.flows();
    match strategy {
        StrategyKind::Optimal => {
            if mode == OptimalMode::FullPartition && flows.len() > FULL_PARTITION_LIMIT {
                bucketed_optimal(market, b)
            } else {
                plain(optimal_bundles(market, b, mode)?)
            }
        }
        StrategyKind::DemandWeighted => {
            let w: Vec<f64> = flows.iter().map(|f| f.q).collect();
            plain(token_bucket_bundles(&w, &ids(market), b))
        }
        StrategyKind::CostWeighted => {
            let w: Vec<f64> = flows.iter().map(|f| 1.0 / f.c).collect();
            plain(token_bucket_bundles(&w, &ids(market), b))
        }
        StrategyKind::ProfitWeighted => plain(token_bucket_bundles(
            &market.potential_profits(),
            &ids(market),
            b,
        )),
        StrategyKind::CostDivision => plain(cost_division(market, b)),
        StrategyKind::IndexDivision => plain(index_division(market, b)),
        StrategyKind::ClassConstrainedProfitWeighted => plain(class_constrained(market, b)?),
    }
}

/// `(new - orig) / (max - orig)`.
pub fn profit_capture(new: f64, orig: f64, max: f64) -> Result<f64> {
    if (max - orig).abs() < 1e-12 * max.abs() || max == orig {
        return Err(Error::DegenerateBaseline { orig, max });
    }
    Ok((new - orig) / (max - orig))
}

/// Capture against a baseline that may leave no room for tiering; such a
/// baseline reports zero capture.
fn capture_or_zero(new: f64, orig: f64, max: f64) -> f64 {
    match profit_capture(new, orig, max) {
        Ok(x) => x,
        Err(_) => {
            warn!("per-flow pricing gains nothing over the blended rate; capture set to 0");
            0.0
        }
    }
}

/// Prices `bundling` and normalizes profit and surplus against the
/// market's baseline.
pub fn evaluate_bundling(market: &Market, bundling: &Bundling) -> Result<TierOutcome> {
    if bundling.num_flows() != market.flows().len() {
        return Err(Error::domain(format!(
            "bundling covers {} flows, market has {}",
            bundling.num_flows(),
            market.flows().len()
        )));
    }
    let priced = market.price_groups(&bundling.groups())?;
    let base = market.baseline();
    Ok(TierOutcome {
        bundling: bundling.clone(),
        prices: priced.prices,
        profit: priced.profit,
        consumer_surplus: priced.surplus,
        profit_capture: capture_or_zero(priced.profit, base.profit_orig, base.profit_max),
        surplus_capture: capture_or_zero(priced.surplus, base.surplus_orig, base.surplus_max),
    })
}
