//! Constant elasticity demand.
//!
//! Flow `i` with valuation `v` sells `q = (v / p)^alpha` at price `p`; flows
//! are independent, so profit and surplus are sums of per-flow terms. All
//! sums that involve `v^alpha` are computed relative to the largest
//! valuation, since `v^alpha` overflows quickly for large `alpha`.

use crate::error::{Error, Result};

/// Which consumer-surplus expression to report.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CedSurplusForm {
    /// Utility minus the payment `p * q`: `v^alpha p^(1-alpha) / (alpha - 1)`.
    #[default]
    NetOfPayment,
    /// Utility minus the unit price `p`:
    /// `alpha v^alpha p^(1-alpha) / (alpha - 1) - p`. Dimensionally
    /// inconsistent; kept for comparison with published figures.
    UnitPrice,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 1.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "CED requires alpha > 1, got {alpha}"
        )))
    }
}

fn check_prices(prices: &[f64]) -> Result<()> {
    match prices.iter().find(|&&p| !(p > 0.0)) {
        Some(p) => Err(Error::domain(format!("price {p} must be positive"))),
        None => Ok(()),
    }
}

fn check_aligned(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::domain(format!("length mismatch: {a} vs {b}")))
    }
}

/// `(v / p)^alpha`.
pub fn ced_demand(v: f64, p: f64, alpha: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::domain(format!("price {p} must be positive")));
    }
    Ok((v / p).powf(alpha))
}

/// Total profit `sum_i (v_i/p_i)^alpha (p_i - c_i)`, one price per flow.
pub fn ced_profit(v: &[f64], c: &[f64], prices: &[f64], alpha: f64) -> Result<f64> {
    check_aligned(v.len(), c.len())?;
    check_aligned(v.len(), prices.len())?;
    check_prices(prices)?;
    Ok(v.iter()
        .zip(c)
        .zip(prices)
        .map(|((&v, &c), &p)| (v / p).powf(alpha) * (p - c))
        .sum())
}

/// Profit-maximizing price of a flow sold alone: `alpha c / (alpha - 1)`.
pub fn ced_optimal_price(c: f64, alpha: f64) -> f64 {
    alpha * c / (alpha - 1.0)
}

/// Profit-maximizing shared price of a bundle:
/// `alpha sum(c v^alpha) / ((alpha - 1) sum(v^alpha))`.
pub fn ced_bundle_price(v: &[f64], c: &[f64], alpha: f64) -> Result<f64> {
    check_aligned(v.len(), c.len())?;
    if v.is_empty() {
        return Err(Error::EmptyBundle);
    }
    let v_max = v.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
    let (mut sw, mut swc) = (0.0, 0.0);
    for (&v, &c) in v.iter().zip(c) {
        let w = (v / v_max).powf(alpha);
        sw += w;
        swc += w * c;
    }
    Ok(alpha * swc / ((alpha - 1.0) * sw))
}

pub fn ced_consumer_surplus(
    v: &[f64],
    prices: &[f64],
    alpha: f64,
    form: CedSurplusForm,
) -> Result<f64> {
    check_alpha(alpha)?;
    check_aligned(v.len(), prices.len())?;
    check_prices(prices)?;
    let total = v.iter().zip(prices).map(|(&v, &p)| {
        let term = v.powf(alpha) * p.powf(1.0 - alpha) / (alpha - 1.0);
        match form {
            CedSurplusForm::NetOfPayment => term,
            CedSurplusForm::UnitPrice => alpha * term - p,
        }
    });
    Ok(total.sum())
}

/// Valuations that reproduce the observed demand at the blended price:
/// `v_i = p0 q_i^(1/alpha)`.
pub fn ced_fit_valuations(q: &[f64], p0: f64, alpha: f64) -> Result<Vec<f64>> {
    if !(p0 > 0.0) {
        return Err(Error::domain(format!(
            "blended price {p0} must be positive"
        )));
    }
    q.iter()
        .map(|&q| {
            if q > 0.0 {
                Ok(p0 * q.powf(1.0 / alpha))
            } else {
                Err(Error::domain(format!("demand {q} must be positive")))
            }
        })
        .collect()
}

/// Cost scale that makes `p0` the profit-maximizing uniform price:
/// `gamma = p0 (alpha - 1) sum(v^alpha) / (alpha sum(f v^alpha))`.
pub fn ced_fit_gamma(v: &[f64], f_d: &[f64], p0: f64, alpha: f64) -> Result<f64> {
    check_aligned(v.len(), f_d.len())?;
    if v.is_empty() {
        return Err(Error::EmptyBundle);
    }
    let v_max = v.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
    let (mut sw, mut swf) = (0.0, 0.0);
    for (&v, &f) in v.iter().zip(f_d) {
        let w = (v / v_max).powf(alpha);
        sw += w;
        swf += w * f;
    }
    let gamma = p0 * (alpha - 1.0) * sw / (alpha * swf);
    if gamma > 0.0 && gamma.is_finite() {
        Ok(gamma)
    } else {
        Err(Error::NonPositiveGamma(gamma))
    }
}

/// Profit of a flow priced alone at its optimum:
/// `(v^alpha / alpha) (alpha c / (alpha - 1))^(1 - alpha)`.
pub fn ced_potential_profit(v: f64, c: f64, alpha: f64) -> f64 {
    v.powf(alpha) / alpha * ced_optimal_price(c, alpha).powf(1.0 - alpha)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Golden-section maximization of a unimodal function on `[lo, hi]`.
    pub(crate) fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - r * (hi - lo);
        let mut x2 = lo + r * (hi - lo);
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..300 {
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + r * (hi - lo);
                f2 = f(x2);
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - r * (hi - lo);
                f1 = f(x1);
            }
            if hi - lo <= 1e-13 * hi.abs() {
                break;
            }
        }
        (lo + hi) / 2.0
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn demand_examples() {
        assert_eq!(ced_demand(1.0, 1.0, 3.3).unwrap(), 1.0);
        assert_eq!(ced_demand(2.0, 1.0, 2.0).unwrap(), 4.0);
        assert_eq!(ced_demand(1.0, 2.0, 2.0).unwrap(), 0.25);
        assert!(ced_demand(1.0, 0.0, 2.0).is_err());
    }

    #[test]
    fn profit_examples() {
        assert_eq!(ced_profit(&[1.0], &[1.0], &[2.0], 2.0).unwrap(), 0.25);
        assert_eq!(ced_profit(&[1.7], &[3.0], &[3.0], 1.4).unwrap(), 0.0);
        let one = ced_profit(&[1.3], &[0.4], &[0.9], 2.5).unwrap();
        let two = ced_profit(&[1.3, 1.3], &[0.4, 0.4], &[0.9, 0.9], 2.5).unwrap();
        assert_eq!(two, 2.0 * one);
        assert!(ced_profit(&[1.0], &[1.0], &[-1.0], 2.0).is_err());
    }

    #[test]
    fn optimal_price_examples() {
        assert_eq!(ced_optimal_price(1.0, 2.0), 2.0);
        assert!((ced_optimal_price(1.0, 1e6) - 1.000001).abs() < 1e-9);
        assert!(rel_err(ced_optimal_price(3.0, 1.1), 33.0) < 1e-12);
        // numeric maximization of the single-flow profit
        let numeric = golden_max(
            |p| ced_profit(&[1.0], &[3.0], &[p], 1.1).unwrap(),
            3.0,
            200.0,
        );
        assert!(rel_err(numeric, 33.0) < 1e-6, "{numeric}");
    }

    #[test]
    fn bundle_price_examples() {
        assert_eq!(
            ced_bundle_price(&[1.7], &[2.5], 1.8).unwrap(),
            ced_optimal_price(2.5, 1.8)
        );
        assert!((ced_bundle_price(&[1.0, 1.0], &[1.0, 3.0], 2.0).unwrap() - 4.0).abs() < 1e-12);
        assert!(matches!(
            ced_bundle_price(&[], &[], 2.0),
            Err(Error::EmptyBundle)
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v: Vec<f64> = (0..5).map(|_| rng.random_range(0.5..3.0)).collect();
        let c: Vec<f64> = (0..5).map(|_| rng.random_range(0.1..2.0)).collect();
        let alpha = 1.5;
        let closed = ced_bundle_price(&v, &c, alpha).unwrap();
        let numeric = golden_max(
            |p| ced_profit(&v, &c, &[p; 5], alpha).unwrap(),
            0.1,
            3.0 * 2.0 * alpha / (alpha - 1.0),
        );
        assert!(rel_err(numeric, closed) < 1e-6, "{numeric} vs {closed}");
    }

    #[test]
    fn surplus_examples() {
        let form = CedSurplusForm::NetOfPayment;
        assert!((ced_consumer_surplus(&[1.0], &[2.0], 2.0, form).unwrap() - 0.5).abs() < 1e-15);
        assert!(ced_consumer_surplus(&[1.0], &[1e12], 2.0, form).unwrap() < 1e-11);
        let base = ced_consumer_surplus(&[1.2], &[3.0], 2.0, form).unwrap();
        let doubled = ced_consumer_surplus(&[2.4], &[3.0], 2.0, form).unwrap();
        assert!(rel_err(doubled, 4.0 * base) < 1e-14);
        assert!(ced_consumer_surplus(&[1.0], &[2.0], 1.0, form).is_err());
        // the unit-price reading: 2 * 0.5 - 2
        let literal = ced_consumer_surplus(&[1.0], &[2.0], 2.0, CedSurplusForm::UnitPrice).unwrap();
        assert!((literal - (-1.0)).abs() < 1e-15);
    }

    /// Utility as the integral of inverse demand `v q^(-1/alpha)` from 0 to
    /// `q`, by the substitution `q = t^k` with `k = 2 alpha / (alpha - 1)`,
    /// which turns the integrand into `v k t`, then Simpson's rule.
    fn surplus_by_quadrature(v: f64, p: f64, alpha: f64) -> f64 {
        let q = (v / p).powf(alpha);
        let k = 2.0 * alpha / (alpha - 1.0);
        let t_end = q.powf(1.0 / k);
        let integrand = |t: f64| {
            if t == 0.0 {
                return 0.0;
            }
            let qq = t.powf(k);
            v * qq.powf(-1.0 / alpha) * k * t.powf(k - 1.0)
        };
        let n = 2000;
        let h = t_end / n as f64;
        let mut s = integrand(0.0) + integrand(t_end);
        for i in 1..n {
            s += integrand(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0 - p * q
    }

    #[test]
    fn surplus_matches_quadrature() {
        for (v, p, alpha) in [(1.0, 2.0, 2.0), (1.7, 0.9, 3.3), (2.5, 4.0, 1.4)] {
            let closed =
                ced_consumer_surplus(&[v], &[p], alpha, CedSurplusForm::NetOfPayment).unwrap();
            let quad = surplus_by_quadrature(v, p, alpha);
            assert!(rel_err(closed, quad) < 1e-6, "{closed} vs {quad}");
        }
    }

    #[test]
    fn fit_valuation_examples() {
        assert_eq!(ced_fit_valuations(&[4.0], 2.0, 2.0).unwrap(), vec![4.0]);
        assert_eq!(ced_fit_valuations(&[1.0], 17.0, 3.0).unwrap(), vec![17.0]);
        assert!(ced_fit_valuations(&[0.0], 17.0, 3.0).is_err());
    }

    #[test]
    fn fit_gamma_examples() {
        let gamma = ced_fit_gamma(&[3.0], &[1.0], 2.0, 2.0).unwrap();
        assert!((gamma - 1.0).abs() < 1e-15);
        assert_eq!(ced_optimal_price(gamma, 2.0), 2.0);

        let v = [1.0, 2.0, 5.0];
        let gamma = ced_fit_gamma(&v, &[4.0; 3], 20.0, 1.5).unwrap();
        assert!(rel_err(gamma, 20.0 * 0.5 / (1.5 * 4.0)) < 1e-14);
    }

    #[test]
    fn fit_gamma_makes_p0_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let (p0, alpha) = (20.0, 1.7);
        let q: Vec<f64> = (0..50).map(|_| rng.random_range(0.1..100.0)).collect();
        let f: Vec<f64> = (0..50).map(|_| rng.random_range(1.0..500.0)).collect();
        let v = ced_fit_valuations(&q, p0, alpha).unwrap();
        let gamma = ced_fit_gamma(&v, &f, p0, alpha).unwrap();
        let c: Vec<f64> = f.iter().map(|f| gamma * f).collect();
        let profit = |p: f64| ced_profit(&v, &c, &vec![p; v.len()], alpha).unwrap();
        let h = 1e-4 * p0;
        let slope = (profit(p0 + h) - profit(p0 - h)) / (2.0 * h);
        assert!(slope.abs() * p0 / profit(p0) < 1e-5, "slope {slope}");
    }

    #[test]
    fn potential_profit_examples() {
        assert!((ced_potential_profit(1.0, 1.0, 2.0) - 0.25).abs() < 1e-15);
        assert!((ced_potential_profit(1.0, 2.0, 2.0) - 0.125).abs() < 1e-15);
        let numeric = golden_max(
            |p| ced_profit(&[1.0], &[2.0], &[p], 2.0).unwrap(),
            2.0,
            50.0,
        );
        let at_numeric = ced_profit(&[1.0], &[2.0], &[numeric], 2.0).unwrap();
        assert!((at_numeric - 0.125).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn closed_form_price_is_numeric_optimum(
            v in 0.1f64..10.0, c in 0.01f64..50.0, alpha in 1.05f64..12.0,
        ) {
            let closed = ced_optimal_price(c, alpha);
            let numeric = golden_max(
                |p| ced_profit(&[v], &[c], &[p], alpha).unwrap() / v.powf(alpha),
                c,
                closed * 4.0,
            );
            prop_assert!(rel_err(numeric, closed) < 1e-6);
        }

        #[test]
        fn potential_profit_is_profit_at_optimum(
            v in 0.1f64..10.0, c in 0.01f64..50.0, alpha in 1.05f64..12.0,
        ) {
            let direct = ced_profit(&[v], &[c], &[ced_optimal_price(c, alpha)], alpha).unwrap();
            prop_assert!(rel_err(ced_potential_profit(v, c, alpha), direct) < 1e-10);
        }

        #[test]
        fn fitted_valuations_reproduce_demand(
            q in 1e-3f64..1e5, p0 in 0.5f64..50.0, alpha in 1.01f64..10.0,
        ) {
            let v = ced_fit_valuations(&[q], p0, alpha).unwrap()[0];
            prop_assert!(rel_err(ced_demand(v, p0, alpha).unwrap(), q) < 1e-12);
        }

        #[test]
        fn fit_round_trip_prices_bundle_at_p0(
            flows in proptest::collection::vec((1e-2f64..1e4, 0.5f64..1e3), 1..40),
            p0 in 1.0f64..40.0,
            alpha in 1.05f64..10.0,
        ) {
            let q: Vec<f64> = flows.iter().map(|f| f.0).collect();
            let f: Vec<f64> = flows.iter().map(|f| f.1).collect();
            let v = ced_fit_valuations(&q, p0, alpha).unwrap();
            let gamma = ced_fit_gamma(&v, &f, p0, alpha).unwrap();
            let c: Vec<f64> = f.iter().map(|f| gamma * f).collect();
            prop_assert!(rel_err(ced_bundle_price(&v, &c, alpha).unwrap(), p0) < 1e-6);
        }

        #[test]
        fn splitting_a_bundle_never_lowers_profit(
            flows in proptest::collection::vec((0.1f64..10.0, 0.1f64..10.0, any::<bool>()), 2..20),
            alpha in 1.05f64..8.0,
        ) {
            let v: Vec<f64> = flows.iter().map(|f| f.0).collect();
            let c: Vec<f64> = flows.iter().map(|f| f.1).collect();
            let joint = ced_bundle_price(&v, &c, alpha).unwrap();
            let before = ced_profit(&v, &c, &vec![joint; v.len()], alpha).unwrap();

            let side: Vec<bool> = flows.iter().map(|f| f.2).collect();
            let price_of = |want: bool| {
                let (vs, cs): (Vec<f64>, Vec<f64>) = v.iter().zip(&c).zip(&side)
                    .filter(|(_, &s)| s == want)
                    .map(|((&v, &c), _)| (v, c))
                    .unzip();
                if vs.is_empty() { joint } else { ced_bundle_price(&vs, &cs, alpha).unwrap() }
            };
            let (pa, pb) = (price_of(true), price_of(false));
            let prices: Vec<f64> = side.iter().map(|&s| if s { pa } else { pb }).collect();
            let after = ced_profit(&v, &c, &prices, alpha).unwrap();
            prop_assert!(after >= before * (1.0 - 1e-12));
        }

        #[test]
        fn surplus_is_positive(
            v in 0.01f64..100.0, p in 0.01f64..1e4, alpha in 1.01f64..10.0,
        ) {
            let cs = ced_consumer_surplus(&[v], &[p], alpha, CedSurplusForm::NetOfPayment).unwrap();
            prop_assert!(cs > 0.0);
        }
    }
}
