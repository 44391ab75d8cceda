//! Fitting a demand model and a cost model to observed flows.
//!
//! The observed market is assumed to sell every flow at the blended price
//! `p0`, and that price is assumed to be profit-maximizing. The first
//! assumption pins the valuations `v_i`; the second pins the cost scale
//! `gamma`. The fitted [`Market`] caches the two reference points of the
//! capture metrics: the blended-rate outcome and per-flow pricing.

use crate::ced::{self, CedSurplusForm};
use crate::cost::{self, RelativeCost};
use crate::domain::{
    ClassLabel, CostModelKind, CostModelSpec, DemandModel, DestType, FittedFlow, FlowRecord,
    MarketParams,
};
use crate::error::{Error, Result};
use crate::logit::{self, LogitSolver};

#[derive(Clone, Debug, Default)]
pub struct FitOptions {
    /// Under the destination-type cost model, split each unlabeled flow into
    /// an on-net part (fraction `theta`) and an off-net part instead of
    /// charging it the blended multiplier.
    pub split_dest_type: bool,
    pub ced_surplus: CedSurplusForm,
    pub solver: LogitSolver,
}

/// Profit and surplus at the blended rate and under per-flow pricing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Baseline {
    pub profit_orig: f64,
    pub profit_max: f64,
    pub surplus_orig: f64,
    pub surplus_max: f64,
}

#[derive(Clone, Debug)]
pub struct Market {
    params: MarketParams,
    cost: CostModelSpec,
    flows: Vec<FittedFlow>,
    baseline: Baseline,
    ced_surplus: CedSurplusForm,
    solver: LogitSolver,
}

/// Prices, profit and surplus of a priced bundling, before normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct PricedTiers {
    pub prices: Vec<Option<f64>>,
    pub profit: f64,
    pub surplus: f64,
}

fn split_by_dest_type(records: &[FlowRecord], on_net: f64) -> Vec<FlowRecord> {
    let mut out = Vec::with_capacity(records.len() * 2);
    for r in records {
        if r.dest_type.is_some() {
            out.push(r.clone());
            continue;
        }
        for (suffix, dest, share) in [
            ("customer", DestType::Customer, on_net),
            ("peer", DestType::Peer, 1.0 - on_net),
        ] {
            if share > 0.0 {
                out.push(FlowRecord {
                    flow_id: format!("{}#{suffix}", r.flow_id),
                    demand_mbps: r.demand_mbps * share,
                    dest_type: Some(dest),
                    ..r.clone()
                });
            }
        }
    }
    out
}

fn class_label(kind: CostModelKind, record: &FlowRecord) -> Option<ClassLabel> {
    match kind {
        CostModelKind::DestType => record.dest_type.map(ClassLabel::Dest),
        _ => Some(ClassLabel::Region(cost::classify_region(record))),
    }
}

impl Market {
    /// Fits valuations, the cost scale and the consumer mass, then computes
    /// the baseline outcomes.
    pub fn fit(
        records: &[FlowRecord],
        params: &MarketParams,
        cost_spec: &CostModelSpec,
        options: &FitOptions,
    ) -> Result<Market> {
        params.validate()?;
        if records.is_empty() {
            return Err(Error::domain("no flows to fit"));
        }
        if cost_spec.theta < 0.0 || !cost_spec.theta.is_finite() {
            return Err(Error::Config(format!(
                "theta {} must be nonnegative",
                cost_spec.theta
            )));
        }
        if cost_spec.kind == CostModelKind::DestType && cost_spec.theta > 1.0 {
            return Err(Error::Config(format!(
                "destination-type theta is an on-net fraction, got {}",
                cost_spec.theta
            )));
        }
        let split;
        let records = if options.split_dest_type && cost_spec.kind == CostModelKind::DestType {
            split = split_by_dest_type(records, cost_spec.theta);
            &split[..]
        } else {
            records
        };
        if let Some(r) = records.iter().find(|r| !(r.demand_mbps > 0.0)) {
            return Err(Error::domain(format!(
                "flow {} has nonpositive demand {}",
                r.flow_id, r.demand_mbps
            )));
        }

        let q: Vec<f64> = records.iter().map(|r| r.demand_mbps).collect();
        let rel: Vec<f64> = cost::relative_costs(cost_spec, records)?
            .into_iter()
            .map(RelativeCost::value)
            .collect();

        let mut params = params.clone();
        let (v, gamma) = match params.model {
            DemandModel::Ced => {
                let v = ced::ced_fit_valuations(&q, params.p0, params.alpha)?;
                let gamma = ced::ced_fit_gamma(&v, &rel, params.p0, params.alpha)?;
                params.consumer_mass = None;
                (v, gamma)
            }
            DemandModel::Logit => {
                let v = logit::logit_fit_valuations(&q, params.p0, params.alpha, params.s0)?;
                let gamma = logit::logit_fit_gamma(&v, &rel, params.p0, params.alpha)?;
                params.consumer_mass = Some(q.iter().sum::<f64>() / (1.0 - params.s0));
                (v, gamma)
            }
        };

        let mut cost_spec = cost_spec.clone();
        cost_spec.gamma = gamma;
        cost_spec.beta = cost::base_cost(&cost_spec, gamma, cost::max_distance(records));

        let flows = records
            .iter()
            .zip(q.iter().zip(v.iter().zip(&rel)))
            .map(|(r, (&q, (&v, &f)))| FittedFlow {
                flow_id: r.flow_id.clone(),
                q,
                d: r.distance_miles,
                v,
                c: gamma * f,
                class_label: class_label(cost_spec.kind, r),
            })
            .collect();

        Market::from_fitted(flows, params, cost_spec, options)
    }

    /// Builds a market from already fitted flows (for example read back from
    /// a fitted-flow file). `params.consumer_mass` must be set for logit.
    pub fn from_fitted(
        flows: Vec<FittedFlow>,
        params: MarketParams,
        cost_spec: CostModelSpec,
        options: &FitOptions,
    ) -> Result<Market> {
        params.validate()?;
        if flows.is_empty() {
            return Err(Error::domain("no flows"));
        }
        if params.model == DemandModel::Logit && params.consumer_mass.is_none() {
            return Err(Error::domain("logit market needs a consumer mass"));
        }
        if let Some(f) = flows.iter().find(|f| !(f.c > 0.0)) {
            return Err(Error::NonPositiveCost {
                flow_id: f.flow_id.clone(),
                value: f.c,
            });
        }
        let mut market = Market {
            params,
            cost: cost_spec,
            flows,
            baseline: Baseline {
                profit_orig: 0.0,
                profit_max: 0.0,
                surplus_orig: 0.0,
                surplus_max: 0.0,
            },
            ced_surplus: options.ced_surplus,
            solver: options.solver,
        };
        market.baseline = market.compute_baseline()?;
        Ok(market)
    }

    fn compute_baseline(&self) -> Result<Baseline> {
        let n = self.flows.len();
        let v = self.valuations();
        let c = self.costs();
        let alpha = self.params.alpha;
        let uniform = vec![self.params.p0; n];
        match self.params.model {
            DemandModel::Ced => {
                let best: Vec<f64> = c
                    .iter()
                    .map(|&c| ced::ced_optimal_price(c, alpha))
                    .collect();
                Ok(Baseline {
                    profit_orig: ced::ced_profit(&v, &c, &uniform, alpha)?,
                    profit_max: v
                        .iter()
                        .zip(&c)
                        .map(|(&v, &c)| ced::ced_potential_profit(v, c, alpha))
                        .sum(),
                    surplus_orig: ced::ced_consumer_surplus(&v, &uniform, alpha, self.ced_surplus)?,
                    surplus_max: ced::ced_consumer_surplus(&v, &best, alpha, self.ced_surplus)?,
                })
            }
            DemandModel::Logit => {
                let k = self.consumer_mass();
                let best = self.solver.solve_from(&v, &c, alpha, &uniform)?.prices;
                Ok(Baseline {
                    profit_orig: logit::logit_profit(&v, &uniform, &c, alpha, k)?,
                    profit_max: logit::logit_profit(&v, &best, &c, alpha, k)?,
                    surplus_orig: logit::logit_consumer_surplus(&v, &uniform, alpha, k)?,
                    surplus_max: logit::logit_consumer_surplus(&v, &best, alpha, k)?,
                })
            }
        }
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn cost_spec(&self) -> &CostModelSpec {
        &self.cost
    }

    pub fn flows(&self) -> &[FittedFlow] {
        &self.flows
    }

    pub fn baseline(&self) -> &Baseline {
        &self.baseline
    }

    pub fn model(&self) -> DemandModel {
        self.params.model
    }

    pub fn alpha(&self) -> f64 {
        self.params.alpha
    }

    pub fn consumer_mass(&self) -> f64 {
        self.params.consumer_mass.unwrap_or(1.0)
    }

    pub fn valuations(&self) -> Vec<f64> {
        self.flows.iter().map(|f| f.v).collect()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.flows.iter().map(|f| f.c).collect()
    }

    /// Profit each flow would earn priced alone at its optimum (up to a
    /// common factor under logit).
    pub fn potential_profits(&self) -> Vec<f64> {
        let alpha = self.params.alpha;
        match self.params.model {
            DemandModel::Ced => self
                .flows
                .iter()
                .map(|f| ced::ced_potential_profit(f.v, f.c, alpha))
                .collect(),
            DemandModel::Logit => self
                .flows
                .iter()
                .map(|f| logit::logit_potential_profit(f.q, alpha, self.params.s0))
                .collect(),
        }
    }

    /// Log of the weight each flow carries in its bundle's price: `v^alpha`
    /// under CED and `exp(alpha v)` under logit. In both models the bundle
    /// price depends on the bundle only through the weight total and the
    /// weighted mean cost.
    pub fn log_bundle_weights(&self) -> Vec<f64> {
        let alpha = self.params.alpha;
        match self.params.model {
            DemandModel::Ced => self.flows.iter().map(|f| alpha * f.v.ln()).collect(),
            DemandModel::Logit => self.flows.iter().map(|f| alpha * f.v).collect(),
        }
    }

    /// Prices every nonempty bundle at its profit-maximizing price and
    /// returns the resulting profit and consumer surplus.
    pub fn price_groups(&self, groups: &[Vec<usize>]) -> Result<PricedTiers> {
        let alpha = self.params.alpha;
        let nonempty: Vec<(usize, &Vec<usize>)> = groups
            .iter()
            .enumerate()
            .filter(|(_, g)| !g.is_empty())
            .collect();
        let mut prices = vec![None; groups.len()];
        match self.params.model {
            DemandModel::Ced => {
                let mut flow_price = vec![0.0; self.flows.len()];
                for (b, members) in &nonempty {
                    let v: Vec<f64> = members.iter().map(|&i| self.flows[i].v).collect();
                    let c: Vec<f64> = members.iter().map(|&i| self.flows[i].c).collect();
                    let p = ced::ced_bundle_price(&v, &c, alpha)?;
                    prices[*b] = Some(p);
                    for &i in members.iter() {
                        flow_price[i] = p;
                    }
                }
                let v = self.valuations();
                let c = self.costs();
                Ok(PricedTiers {
                    prices,
                    profit: ced::ced_profit(&v, &c, &flow_price, alpha)?,
                    surplus: ced::ced_consumer_surplus(&v, &flow_price, alpha, self.ced_surplus)?,
                })
            }
            DemandModel::Logit => {
                let mut vb = Vec::with_capacity(nonempty.len());
                let mut cb = Vec::with_capacity(nonempty.len());
                for (_, members) in &nonempty {
                    let v: Vec<f64> = members.iter().map(|&i| self.flows[i].v).collect();
                    let c: Vec<f64> = members.iter().map(|&i| self.flows[i].c).collect();
                    vb.push(logit::logit_bundle_valuation(&v, alpha)?);
                    cb.push(logit::logit_bundle_cost(&c, &v, alpha)?);
                }
                let start = vec![self.params.p0; vb.len()];
                let solved = self.solver.solve_from(&vb, &cb, alpha, &start)?.prices;
                for ((b, _), p) in nonempty.iter().zip(&solved) {
                    prices[*b] = Some(*p);
                }
                let k = self.consumer_mass();
                Ok(PricedTiers {
                    prices,
                    profit: logit::logit_profit(&vb, &solved, &cb, alpha, k)?,
                    surplus: logit::logit_consumer_surplus(&vb, &solved, alpha, k)?,
                })
            }
        }
    }
}
