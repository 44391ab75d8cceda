//! Distance- and label-based cost models.
//!
//! Each model maps a flow to a dimensionless relative cost `f(d)`. Absolute
//! unit costs are `c = gamma * f(d)`, where `gamma` comes from fitting the
//! market (see [`crate::ced::ced_fit_gamma`] and
//! [`crate::logit::logit_fit_gamma`]). For the linear and concave models the
//! base cost `beta / gamma` is already folded into `f(d)`.
//!
//! | model      | relative cost                                             |
//! |------------|-----------------------------------------------------------|
//! | linear     | `d + theta * d_max`                                       |
//! | concave    | `g(d) + theta * g(d_max)`, `g(d) = max(eps, a log_b(d/d_max) + c)` |
//! | regional   | `1`, `2^theta`, `3^theta` for metro / national / international |
//! | dest-type  | `d * m`, `m = 1` customer, `2` peer, `theta + 2 (1 - theta)` unlabeled |

use crate::domain::{CostModelKind, CostModelSpec, DestType, FlowRecord, Region};
use crate::error::{Error, Result};

/// Lower clamp of the concave curve before the base term is added.
pub const CONCAVE_FLOOR: f64 = 0.05;

/// Relative costs are clamped to at least this fraction of the largest
/// relative cost in the flow set.
pub const COST_FLOOR_FRACTION: f64 = 1e-6;

/// Flows shorter than this are metro when no region label is present.
pub const METRO_MAX_MILES: f64 = 10.0;
/// Flows shorter than this (and not metro) are national.
pub const NATIONAL_MAX_MILES: f64 = 100.0;

/// Off-net traffic costs this many times on-net traffic.
pub const PEER_COST_MULTIPLIER: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct RelativeCost(f64);

impl RelativeCost {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value.is_finite() {
            Ok(RelativeCost(value))
        } else {
            Err(Error::NonPositiveCost {
                flow_id: String::new(),
                value,
            })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn classify_region(flow: &FlowRecord) -> Region {
    if let Some(region) = flow.region {
        return region;
    }
    if flow.distance_miles < METRO_MAX_MILES {
        Region::Metro
    } else if flow.distance_miles < NATIONAL_MAX_MILES {
        Region::National
    } else {
        Region::International
    }
}

/// Expected cost multiplier of the destination-type model. `theta` is the
/// on-net fraction used when the flow carries no label.
pub fn dest_multiplier(dest: Option<DestType>, theta: f64) -> f64 {
    match dest {
        Some(DestType::Customer) => 1.0,
        Some(DestType::Peer) => PEER_COST_MULTIPLIER,
        None => theta + PEER_COST_MULTIPLIER * (1.0 - theta),
    }
}

fn concave_curve(spec: &CostModelSpec, d: f64, d_max: f64) -> f64 {
    let x = if d_max > 0.0 { d / d_max } else { 1.0 };
    let shape = spec.concave;
    (shape.a * x.ln() / shape.b.ln() + shape.c).max(CONCAVE_FLOOR)
}

/// Relative cost before the set-wide floor; may be zero.
fn raw_relative_cost(spec: &CostModelSpec, flow: &FlowRecord, d_max: f64) -> f64 {
    let d = flow.distance_miles;
    let theta = spec.theta;
    match spec.kind {
        CostModelKind::Linear => d + theta * d_max,
        CostModelKind::Concave => {
            concave_curve(spec, d, d_max) + theta * concave_curve(spec, d_max, d_max)
        }
        CostModelKind::Regional => match classify_region(flow) {
            Region::Metro => 1.0,
            Region::National => 2f64.powf(theta),
            Region::International => 3f64.powf(theta),
        },
        CostModelKind::DestType => d * dest_multiplier(flow.dest_type, theta),
    }
}

/// Relative cost of one flow; `d_max` is the largest distance in the flow set.
pub fn relative_cost(spec: &CostModelSpec, flow: &FlowRecord, d_max: f64) -> Result<RelativeCost> {
    let value = raw_relative_cost(spec, flow, d_max);
    RelativeCost::new(value).map_err(|_| Error::NonPositiveCost {
        flow_id: flow.flow_id.clone(),
        value,
    })
}

/// Relative costs of a whole flow set, with the floor at
/// [`COST_FLOOR_FRACTION`] of the largest value applied.
pub fn relative_costs(spec: &CostModelSpec, flows: &[FlowRecord]) -> Result<Vec<RelativeCost>> {
    let d_max = max_distance(flows);
    let raw: Vec<f64> = flows
        .iter()
        .map(|f| raw_relative_cost(spec, f, d_max))
        .collect();
    let top = raw.iter().copied().fold(0.0, f64::max);
    let floor = COST_FLOOR_FRACTION * top;
    flows
        .iter()
        .zip(raw)
        .map(|(flow, value)| {
            let clamped = value.max(floor);
            RelativeCost::new(clamped).map_err(|_| Error::NonPositiveCost {
                flow_id: flow.flow_id.clone(),
                value: clamped,
            })
        })
        .collect()
}

pub fn max_distance(flows: &[FlowRecord]) -> f64 {
    flows.iter().map(|f| f.distance_miles).fold(0.0, f64::max)
}

pub fn realize_costs(rel: &[RelativeCost], gamma: f64) -> Vec<f64> {
    rel.iter().map(|r| gamma * r.value()).collect()
}

/// Absolute base cost `beta` for a fitted `gamma`: `theta` times the largest
/// pre-base cost for the linear and concave models, zero otherwise.
pub fn base_cost(spec: &CostModelSpec, gamma: f64, d_max: f64) -> f64 {
    match spec.kind {
        CostModelKind::Linear => spec.theta * gamma * d_max,
        CostModelKind::Concave => spec.theta * gamma * concave_curve(spec, d_max, d_max),
        CostModelKind::Regional | CostModelKind::DestType => 0.0,
    }
}
