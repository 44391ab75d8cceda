//! Logit discrete-choice demand with an outside option.
//!
//! A consumer picks the flow maximizing `alpha (v_i - p_i) + eps_i` with
//! Gumbel noise, or buys nothing (utility `eps_0`). Shares are
//!
//! ```text
//! s_i = exp(alpha (v_i - p_i)) / (1 + sum_j exp(alpha (v_j - p_j)))
//! s_0 = 1 / (1 + sum_j exp(alpha (v_j - p_j)))
//! ```
//!
//! and demand is `K s_i` for a consumer mass `K`. Exponents are max-shifted
//! before exponentiation: fitted valuations sit near the blended price, so
//! `alpha v` alone easily exceeds a few hundred.
//!
//! At the profit optimum every flow carries the same markup,
//! `p_i = c_i + 1 / (alpha s_0(p))`. [`LogitSolver`] finds that fixed point.

use crate::error::{Error, Result};
use crate::stats::log_sum_exp;

/// Euler–Mascheroni constant, the mean of a standard Gumbel variable.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Clone, Debug, PartialEq)]
pub struct Shares {
    pub inside: Vec<f64>,
    pub outside: f64,
}

fn exponents(v: &[f64], p: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if v.len() != p.len() {
        return Err(Error::domain(format!(
            "length mismatch: {} valuations, {} prices",
            v.len(),
            p.len()
        )));
    }
    let x: Vec<f64> = v.iter().zip(p).map(|(v, p)| alpha * (v - p)).collect();
    if x.iter().any(|x| !x.is_finite()) {
        return Err(Error::OverflowGuard);
    }
    Ok(x)
}

pub fn logit_shares(v: &[f64], p: &[f64], alpha: f64) -> Result<Shares> {
    let x = exponents(v, p, alpha)?;
    let shift = x.iter().copied().fold(0.0, f64::max);
    let outside_term = (-shift).exp();
    let terms: Vec<f64> = x.iter().map(|x| (x - shift).exp()).collect();
    let denom = outside_term + terms.iter().sum::<f64>();
    Ok(Shares {
        inside: terms.into_iter().map(|t| t / denom).collect(),
        outside: outside_term / denom,
    })
}

/// `ln(1 + sum_i exp(alpha (v_i - p_i)))`.
fn log_inclusive_value(v: &[f64], p: &[f64], alpha: f64) -> Result<f64> {
    let mut x = exponents(v, p, alpha)?;
    x.push(0.0);
    Ok(log_sum_exp(&x))
}

/// `K sum_i s_i(p) (p_i - c_i)`.
pub fn logit_profit(
    v: &[f64],
    p: &[f64],
    c: &[f64],
    alpha: f64,
    consumer_mass: f64,
) -> Result<f64> {
    if c.len() != p.len() {
        return Err(Error::domain("cost and price vectors differ in length"));
    }
    let shares = logit_shares(v, p, alpha)?;
    let margin: f64 = shares
        .inside
        .iter()
        .zip(p.iter().zip(c))
        .map(|(s, (p, c))| s * (p - c))
        .sum();
    Ok(consumer_mass * margin)
}

/// Expected maximum utility over consumers, in money units:
/// `K (gamma_E + ln(1 + sum_i exp(alpha (v_i - p_i)))) / alpha`.
pub fn logit_consumer_surplus(v: &[f64], p: &[f64], alpha: f64, consumer_mass: f64) -> Result<f64> {
    Ok(consumer_mass * (EULER_GAMMA + log_inclusive_value(v, p, alpha)?) / alpha)
}

/// Valuations reproducing observed demand at the blended price `p0`:
/// `v_i = (ln s_i - ln s0) / alpha + p0` with `s_i = q_i (1 - s0) / sum q`.
pub fn logit_fit_valuations(q: &[f64], p0: f64, alpha: f64, s0: f64) -> Result<Vec<f64>> {
    if !(s0 > 0.0 && s0 < 1.0) {
        return Err(Error::InvalidShare(s0));
    }
    if let Some(bad) = q.iter().find(|&&q| !(q > 0.0)) {
        return Err(Error::domain(format!("demand {bad} must be positive")));
    }
    let total: f64 = q.iter().sum();
    let ln_s0 = s0.ln();
    Ok(q.iter()
        .map(|&q| {
            let s = q * (1.0 - s0) / total;
            (s.ln() - ln_s0) / alpha + p0
        })
        .collect())
}

/// Cost scale for which the uniform price `p0` satisfies the first-order
/// condition of logit profit:
///
/// ```text
/// gamma = sum_i E_i (alpha p0 - 1 - sum_j E_j) / (alpha sum_i f_i E_i),
/// E_i = exp(alpha (v_i - p0))
/// ```
pub fn logit_fit_gamma(v: &[f64], f_d: &[f64], p0: f64, alpha: f64) -> Result<f64> {
    if v.len() != f_d.len() {
        return Err(Error::domain("valuation and cost vectors differ in length"));
    }
    if v.is_empty() {
        return Err(Error::EmptyBundle);
    }
    let x = exponents(v, &vec![p0; v.len()], alpha)?;
    let shift = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|x| (x - shift).exp()).collect();
    let sum_e: f64 = e.iter().sum();
    let sum_fe: f64 = e.iter().zip(f_d).map(|(e, f)| e * f).sum();
    let total_e = shift.exp() * sum_e;
    let gamma = sum_e * (alpha * p0 - 1.0 - total_e) / (alpha * sum_fe);
    if gamma > 0.0 && gamma.is_finite() {
        Ok(gamma)
    } else {
        Err(Error::NonPositiveGamma(gamma))
    }
}

/// Valuation of a bundle sold at one price: `ln(sum exp(alpha v_i)) / alpha`.
pub fn logit_bundle_valuation(v: &[f64], alpha: f64) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptyBundle);
    }
    let x: Vec<f64> = v.iter().map(|v| alpha * v).collect();
    Ok(log_sum_exp(&x) / alpha)
}

/// Unit cost of a bundle: costs weighted by `exp(alpha v_i)`.
pub fn logit_bundle_cost(c: &[f64], v: &[f64], alpha: f64) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptyBundle);
    }
    if c.len() != v.len() {
        return Err(Error::domain("cost and valuation vectors differ in length"));
    }
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut sw, mut swc) = (0.0, 0.0);
    for (&c, &v) in c.iter().zip(v) {
        let w = (alpha * (v - top)).exp();
        sw += w;
        swc += w * c;
    }
    Ok(swc / sw)
}

/// Profit of flow `i` at the optimum, `K s_i / (alpha s0) = q_i / (alpha s0)`.
/// Only its proportionality to `q_i` matters for bundling.
pub fn logit_potential_profit(q: f64, alpha: f64, s0: f64) -> f64 {
    q / (alpha * s0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMethod {
    /// Damped fixed-point iteration converged on its own.
    FixedPoint,
    /// The iteration stopped contracting; the common markup was found by
    /// Newton's method on its scalar equation.
    MarkupNewton,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriceSolution {
    pub prices: Vec<f64>,
    /// Fixed-point residual `max_i |p_i - c_i - 1/(alpha s0(p))|`.
    pub residual: f64,
    pub iterations: usize,
    pub method: SolveMethod,
}

/// Solver for the profit-maximizing logit prices.
///
/// Runs `p <- (1 - damping) p + damping (c + 1/(alpha s0(p)))`. The
/// undamped map has slope `-(1 - s0)/s0` in the common markup, so with
/// `damping = 0.5` it contracts only while `s0 > 1/4`. Once the residual
/// stops falling the solver switches to the scalar markup equation
/// `alpha m - 1 = A exp(-alpha m)`, `A = sum exp(alpha (v_i - c_i))`,
/// whose root is unique.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogitSolver {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for LogitSolver {
    fn default() -> Self {
        LogitSolver {
            tol: 1e-8,
            max_iter: 100_000,
            damping: 0.5,
        }
    }
}

/// Consecutive slow steps before the fixed-point iteration is abandoned.
const MAX_STALLS: usize = 5;

/// A step that shrinks the residual by less than this factor counts as slow.
const SLOW_RATIO: f64 = 0.9;

impl LogitSolver {
    pub fn residual(&self, v: &[f64], c: &[f64], p: &[f64], alpha: f64) -> Result<f64> {
        let s0 = logit_shares(v, p, alpha)?.outside;
        let markup = 1.0 / (alpha * s0);
        Ok(p.iter()
            .zip(c)
            .map(|(p, c)| (p - c - markup).abs())
            .fold(0.0, f64::max))
    }

    /// Solves from `start` (the blended price is the customary start).
    pub fn solve_from(
        &self,
        v: &[f64],
        c: &[f64],
        alpha: f64,
        start: &[f64],
    ) -> Result<PriceSolution> {
        if v.len() != c.len() || v.len() != start.len() {
            return Err(Error::domain(
                "valuation, cost and start vectors differ in length",
            ));
        }
        if !(alpha > 0.0) {
            return Err(Error::domain(format!(
                "logit requires alpha > 0, got {alpha}"
            )));
        }
        let mut p = start.to_vec();
        let mut last = f64::INFINITY;
        let mut stalls = 0;
        let mut iterations = 0;
        while iterations < self.max_iter {
            let s0 = logit_shares(v, &p, alpha)?.outside;
            let markup = 1.0 / (alpha * s0);
            if !markup.is_finite() {
                break;
            }
            let residual = p
                .iter()
                .zip(c)
                .map(|(p, c)| (p - c - markup).abs())
                .fold(0.0, f64::max);
            if residual < self.tol {
                return Ok(PriceSolution {
                    prices: p,
                    residual,
                    iterations,
                    method: SolveMethod::FixedPoint,
                });
            }
            if residual >= SLOW_RATIO * last {
                stalls += 1;
                if stalls >= MAX_STALLS {
                    break;
                }
            } else {
                stalls = 0;
            }
            last = residual;
            for (p, c) in p.iter_mut().zip(c) {
                *p = (1.0 - self.damping) * *p + self.damping * (c + markup);
            }
            iterations += 1;
        }

        let markup = common_markup(v, c, alpha);
        let prices: Vec<f64> = c.iter().map(|c| c + markup).collect();
        let residual = self.residual(v, c, &prices, alpha)?;
        if residual < self.tol {
            Ok(PriceSolution {
                prices,
                residual,
                iterations,
                method: SolveMethod::MarkupNewton,
            })
        } else {
            Err(Error::NoConvergence {
                iterations,
                residual,
            })
        }
    }
}

/// Root of `alpha m - 1 = A exp(-alpha m)`. With `x = alpha m - 1` this is
/// `x e^x = A / e`; solving `e^y + y = ln A - 1` for `y = ln x` keeps every
/// quantity finite, and Newton on that convex increasing function converges
/// monotonically from any start to the right of the root.
fn common_markup(v: &[f64], c: &[f64], alpha: f64) -> f64 {
    let x: Vec<f64> = v.iter().zip(c).map(|(v, c)| alpha * (v - c)).collect();
    let target = log_sum_exp(&x) - 1.0;
    let mut y = if target > 1.0 { target.ln() } else { target };
    for _ in 0..200 {
        let step = (y.exp() + y - target) / (y.exp() + 1.0);
        y -= step;
        if step.abs() <= 1e-15 * y.abs().max(1.0) {
            break;
        }
    }
    (1.0 + y.exp()) / alpha
}

/// Profit-maximizing prices, starting from `c + 1/alpha`.
pub fn logit_solve_prices(
    v: &[f64],
    c: &[f64],
    alpha: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let solver = LogitSolver {
        tol,
        max_iter,
        ..LogitSolver::default()
    };
    let start: Vec<f64> = c.iter().map(|c| c + 1.0 / alpha).collect();
    Ok(solver.solve_from(v, c, alpha, &start)?.prices)
}
