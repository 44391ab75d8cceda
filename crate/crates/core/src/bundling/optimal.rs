//! Profit-maximizing partitions.
//!
//! Under both demand models a bundle is summarized by two numbers: the total
//! price weight `S` of its flows (`sum v^alpha` for CED, `sum exp(alpha v)`
//! for logit) and the `S`-weighted mean cost. Each bundle then has a score
//! such that total profit is increasing in the sum of scores:
//!
//! * CED: the bundle's own optimal profit, `S P^-alpha cbar / (alpha - 1)`
//!   with `P = alpha cbar / (alpha - 1)`;
//! * logit: `S exp(-alpha cbar)`; all optimal prices share one markup that
//!   grows with the summed score, and profit grows with it.
//!
//! Splitting a bundle never lowers its score sum, so no bundle scores more
//! than the sum of its members' singleton scores. Scores are kept in log
//! space and shifted by the largest singleton score before summing.

use crate::domain::{Bundling, DemandModel};
use crate::error::{Error, Result};
use crate::stats::log_add_exp;

/// Largest number of units the exhaustive search accepts.
pub const FULL_PARTITION_LIMIT: usize = 12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OptimalMode {
    /// Exhaustive search over all set partitions.
    #[default]
    FullPartition,
    /// Only bundles that are contiguous ranges in cost order.
    ContiguousByCost,
}

/// Aggregate of a set of flows: log total weight and weighted mean cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Block {
    pub ln_weight: f64,
    pub mean_cost: f64,
}

impl Block {
    pub fn merge(self, other: Block) -> Block {
        if self.ln_weight == f64::NEG_INFINITY {
            return other;
        }
        let ln_weight = log_add_exp(self.ln_weight, other.ln_weight);
        let a = (self.ln_weight - ln_weight).exp();
        let b = (other.ln_weight - ln_weight).exp();
        Block {
            ln_weight,
            mean_cost: (a * self.mean_cost + b * other.mean_cost) / (a + b),
        }
    }

    const EMPTY: Block = Block {
        ln_weight: f64::NEG_INFINITY,
        mean_cost: 0.0,
    };
}

/// Log score of one bundle; see the module docs.
pub fn ln_score(model: DemandModel, alpha: f64, block: Block) -> f64 {
    match model {
        DemandModel::Ced => {
            let price = alpha * block.mean_cost / (alpha - 1.0);
            block.ln_weight + block.mean_cost.ln() - alpha * price.ln() - (alpha - 1.0).ln()
        }
        DemandModel::Logit => block.ln_weight - alpha * block.mean_cost,
    }
}

fn shift(model: DemandModel, alpha: f64, units: &[Block]) -> f64 {
    units
        .iter()
        .map(|&u| ln_score(model, alpha, u))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Best partition of `units` into at most `b` bundles over all set
/// partitions. Returns a bundle index per unit.
pub fn full_partition(
    model: DemandModel,
    alpha: f64,
    units: &[Block],
    b: usize,
) -> Result<Vec<usize>> {
    let n = units.len();
    if n > FULL_PARTITION_LIMIT {
        return Err(Error::TooManyFlows {
            flows: n,
            limit: FULL_PARTITION_LIMIT,
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let b = b.clamp(1, n);
    let full = (1usize << n) - 1;
    let base = shift(model, alpha, units);

    let mut block = vec![Block::EMPTY; full + 1];
    let mut value = vec![0.0; full + 1];
    for mask in 1..=full {
        let low = mask.trailing_zeros() as usize;
        block[mask] = block[mask & (mask - 1)].merge(units[low]);
        value[mask] = (ln_score(model, alpha, block[mask]) - base).exp();
    }

    // best[k][mask]: best score sum splitting `mask` into at most k+1 bundles;
    // choice[k][mask] is the bundle holding the lowest unit of `mask`.
    let mut best = vec![value.clone()];
    let mut choice = vec![(0..=full).collect::<Vec<usize>>()];
    for k in 1..b {
        let prev = &best[k - 1];
        let mut cur = value.clone();
        let mut pick: Vec<usize> = (0..=full).collect();
        for mask in 1..=full {
            let low = mask & mask.wrapping_neg();
            let rest = mask ^ low;
            // every submask of `mask` that contains its lowest unit
            let mut sub = rest;
            loop {
                let head = sub | low;
                if head != mask {
                    let cand = value[head] + prev[mask ^ head];
                    if cand > cur[mask] {
                        cur[mask] = cand;
                        pick[mask] = head;
                    }
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & rest;
            }
        }
        best.push(cur);
        choice.push(pick);
    }

    let mut assignment = vec![0; n];
    let mut mask = full;
    let mut k = b - 1;
    let mut label = 0;
    while mask != 0 {
        let head = choice[k][mask];
        for (i, slot) in assignment.iter_mut().enumerate() {
            if head >> i & 1 == 1 {
                *slot = label;
            }
        }
        label += 1;
        mask ^= head;
        k = k.saturating_sub(1);
    }
    Ok(assignment)
}

/// Best split of `units` (already in cost order) into at most `b`
/// contiguous ranges. Returns a bundle index per unit.
pub fn contiguous(model: DemandModel, alpha: f64, units: &[Block], b: usize) -> Vec<usize> {
    let n = units.len();
    if n == 0 {
        return Vec::new();
    }
    let b = b.clamp(1, n);
    let base = shift(model, alpha, units);
    // best[k][j]: units 0..j in at most k+1 ranges
    let mut best = vec![vec![f64::NEG_INFINITY; n + 1]; b];
    let mut start = vec![vec![0usize; n + 1]; b];
    for row in &mut best {
        row[0] = 0.0;
    }
    for j in 1..=n {
        let mut acc = Block::EMPTY;
        for i in (0..j).rev() {
            acc = units[i].merge(acc);
            let v = (ln_score(model, alpha, acc) - base).exp();
            for k in 0..b {
                let before = if i == 0 {
                    0.0
                } else if k == 0 {
                    continue;
                } else {
                    best[k - 1][i]
                };
                let cand = before + v;
                if cand > best[k][j] {
                    best[k][j] = cand;
                    start[k][j] = i;
                }
            }
        }
    }
    let mut ranges = Vec::new();
    let mut j = n;
    let mut k = b - 1;
    while j > 0 {
        let i = start[k][j];
        ranges.push((i, j));
        j = i;
        k = k.saturating_sub(1);
    }
    let mut assignment = vec![0; n];
    for (label, (i, j)) in ranges.into_iter().rev().enumerate() {
        assignment[i..j].fill(label);
    }
    assignment
}

/// Wraps a per-unit assignment as a bundling with `b` slots.
pub(crate) fn to_bundling(assignment: Vec<usize>, b: usize) -> Bundling {
    Bundling::new(assignment, b.max(1)).expect("labels below b")
}
