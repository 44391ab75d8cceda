//! Data model shared by the fitting, bundling and experiment layers.
//!
//! Units are fixed throughout: demand in Mbit/s, distance in miles, prices
//! and costs in $/Mbps/month.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geographic class of a flow, used by the regional cost model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Metro,
    National,
    International,
}

/// Whether a flow terminates at one of the ISP's customers (on-net) or at a
/// peer (off-net).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DestType {
    Customer,
    Peer,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::Metro => "metro",
            Region::National => "national",
            Region::International => "international",
        })
    }
}

impl fmt::Display for DestType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DestType::Customer => "customer",
            DestType::Peer => "peer",
        })
    }
}

/// One ingested traffic flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub flow_id: String,
    pub demand_mbps: f64,
    pub distance_miles: f64,
    pub region: Option<Region>,
    pub dest_type: Option<DestType>,
}

impl FlowRecord {
    pub fn new(flow_id: impl Into<String>, demand_mbps: f64, distance_miles: f64) -> Self {
        FlowRecord {
            flow_id: flow_id.into(),
            demand_mbps,
            distance_miles,
            region: None,
            dest_type: None,
        }
    }

    pub fn with_region(mut self, region: Region) -> Self {
        self.region = Some(region);
        self
    }

    pub fn with_dest_type(mut self, dest_type: DestType) -> Self {
        self.dest_type = Some(dest_type);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemandModel {
    /// Constant elasticity demand, `q = (v/p)^alpha`, flows independent.
    Ced,
    /// Logit discrete choice with an outside (no-purchase) option.
    Logit,
}

impl fmt::Display for DemandModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DemandModel::Ced => "ced",
            DemandModel::Logit => "logit",
        })
    }
}

impl FromStr for DemandModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ced" => Ok(DemandModel::Ced),
            "logit" => Ok(DemandModel::Logit),
            other => Err(Error::Config(format!("unknown demand model `{other}`"))),
        }
    }
}

/// Demand-side parameters of a market.
///
/// `s0` is only meaningful for the logit model. `consumer_mass` (the number
/// of consumers `K`) is derived when a logit market is fitted, so that
/// `K * s_i` reproduces each observed demand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub model: DemandModel,
    pub alpha: f64,
    pub p0: f64,
    pub s0: f64,
    pub consumer_mass: Option<f64>,
}

impl MarketParams {
    pub fn ced(alpha: f64, p0: f64) -> Self {
        MarketParams {
            model: DemandModel::Ced,
            alpha,
            p0,
            s0: 0.0,
            consumer_mass: None,
        }
    }

    pub fn logit(alpha: f64, p0: f64, s0: f64) -> Self {
        MarketParams {
            model: DemandModel::Logit,
            alpha,
            p0,
            s0,
            consumer_mass: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_params(self)
    }
}

/// Checks the admissible parameter ranges of each demand model.
pub fn validate_params(params: &MarketParams) -> Result<()> {
    let alpha_ok = match params.model {
        DemandModel::Ced => params.alpha > 1.0,
        DemandModel::Logit => params.alpha > 0.0,
    };
    if !alpha_ok || !params.alpha.is_finite() {
        return Err(Error::InvalidAlpha {
            model: params.model,
            alpha: params.alpha,
        });
    }
    if !(params.p0 > 0.0 && params.p0.is_finite()) {
        return Err(Error::InvalidPrice(params.p0));
    }
    if params.model == DemandModel::Logit {
        if !(params.s0 > 0.0 && params.s0 < 1.0) {
            return Err(Error::InvalidShare(params.s0));
        }
        if let Some(k) = params.consumer_mass {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::domain(format!("consumer mass {k} must be positive")));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostModelKind {
    Linear,
    Concave,
    Regional,
    DestType,
}

impl fmt::Display for CostModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostModelKind::Linear => "linear",
            CostModelKind::Concave => "concave",
            CostModelKind::Regional => "regional",
            CostModelKind::DestType => "dest-type",
        })
    }
}

impl FromStr for CostModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(CostModelKind::Linear),
            "concave" => Ok(CostModelKind::Concave),
            "regional" => Ok(CostModelKind::Regional),
            "dest-type" | "desttype" | "dest_type" => Ok(CostModelKind::DestType),
            other => Err(Error::Config(format!("unknown cost model `{other}`"))),
        }
    }
}

/// Shape constants of the concave cost curve `a * log_b(d) + c`, fitted on
/// normalized distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcaveShape {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for ConcaveShape {
    fn default() -> Self {
        ConcaveShape {
            a: 0.5,
            b: 6.0,
            c: 1.0,
        }
    }
}

/// A cost model together with its tuning parameter `theta`.
///
/// `gamma` (relative-to-absolute cost scale) and `beta` (absolute base cost)
/// are zero until the spec is fitted against a market; see
/// [`Market::fit`](crate::market::Market::fit).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModelSpec {
    pub kind: CostModelKind,
    pub theta: f64,
    pub gamma: f64,
    pub beta: f64,
    pub concave: ConcaveShape,
}

impl CostModelSpec {
    pub fn new(kind: CostModelKind, theta: f64) -> Self {
        CostModelSpec {
            kind,
            theta,
            gamma: 0.0,
            beta: 0.0,
            concave: ConcaveShape::default(),
        }
    }

    pub fn with_concave_shape(mut self, shape: ConcaveShape) -> Self {
        self.concave = shape;
        self
    }
}

/// Class used by class-constrained bundling: flows with different labels
/// are never sold in the same tier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassLabel {
    Region(Region),
    Dest(DestType),
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassLabel::Region(r) => r.fmt(f),
            ClassLabel::Dest(d) => d.fmt(f),
        }
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "metro" => ClassLabel::Region(Region::Metro),
            "national" => ClassLabel::Region(Region::National),
            "international" => ClassLabel::Region(Region::International),
            "customer" => ClassLabel::Dest(DestType::Customer),
            "peer" => ClassLabel::Dest(DestType::Peer),
            other => return Err(Error::Config(format!("unknown class label `{other}`"))),
        })
    }
}

/// A flow after fitting: observed demand `q`, distance `d`, valuation
/// coefficient `v` and unit cost `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedFlow {
    pub flow_id: String,
    pub q: f64,
    pub d: f64,
    pub v: f64,
    pub c: f64,
    pub class_label: Option<ClassLabel>,
}

/// Assignment of flows (by position in the market's flow list) to tiers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bundling {
    assignment: Vec<usize>,
    num_bundles: usize,
}

impl Bundling {
    pub fn new(assignment: Vec<usize>, num_bundles: usize) -> Result<Self> {
        if num_bundles == 0 {
            return Err(Error::domain("a bundling needs at least one bundle"));
        }
        if let Some(&bad) = assignment.iter().find(|&&b| b >= num_bundles) {
            return Err(Error::domain(format!(
                "bundle index {bad} out of range for {num_bundles} bundles"
            )));
        }
        Ok(Bundling {
            assignment,
            num_bundles,
        })
    }

    /// Every flow in one bundle.
    pub fn single(n: usize) -> Self {
        Bundling {
            assignment: vec![0; n],
            num_bundles: 1,
        }
    }

    /// Every flow in its own bundle.
    pub fn singletons(n: usize) -> Self {
        Bundling {
            assignment: (0..n).collect(),
            num_bundles: n.max(1),
        }
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn num_bundles(&self) -> usize {
        self.num_bundles
    }

    pub fn num_flows(&self) -> usize {
        self.assignment.len()
    }

    pub fn bundle_of(&self, flow: usize) -> usize {
        self.assignment[flow]
    }

    /// Flow indices of each bundle, indexed by bundle; empty bundles yield
    /// empty vectors.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_bundles];
        for (i, &b) in self.assignment.iter().enumerate() {
            groups[b].push(i);
        }
        groups
    }

    pub fn effective_bundles(&self) -> usize {
        let mut seen = vec![false; self.num_bundles];
        for &b in &self.assignment {
            seen[b] = true;
        }
        seen.into_iter().filter(|&s| s).count()
    }

    /// Relabels bundles in order of first appearance, so that partitions
    /// that differ only by bundle numbering compare equal.
    pub fn canonical(&self) -> Bundling {
        let mut map = vec![usize::MAX; self.num_bundles];
        let mut next = 0;
        let assignment = self
            .assignment
            .iter()
            .map(|&b| {
                if map[b] == usize::MAX {
                    map[b] = next;
                    next += 1;
                }
                map[b]
            })
            .collect();
        Bundling {
            assignment,
            num_bundles: self.num_bundles,
        }
    }
}

/// Priced result of one bundling.
#[derive(Clone, Debug, PartialEq)]
pub struct TierOutcome {
    pub bundling: Bundling,
    /// Price of each bundle ($/Mbps/month); `None` for empty bundles.
    pub prices: Vec<Option<f64>>,
    pub profit: f64,
    pub consumer_surplus: f64,
    pub profit_capture: f64,
    pub surplus_capture: f64,
}

impl TierOutcome {
    pub fn effective_bundles(&self) -> usize {
        self.bundling.effective_bundles()
    }
}
