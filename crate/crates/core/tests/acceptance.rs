//! Acceptance criteria A1-A10, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the report is always printed; the
//! process exits nonzero if any criterion fails.

use std::panic;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel};

use transit_tiers::bundling::{
    build_bundles, evaluate_bundling, token_bucket_bundles, OptimalMode, StrategyKind,
};
use transit_tiers::ced::{ced_optimal_price, ced_profit};
use transit_tiers::domain::{
    Bundling, CostModelKind, CostModelSpec, DemandModel, FlowRecord, MarketParams,
};
use transit_tiers::experiment::{self, ExperimentConfig, InputSource, PER_FLOW};
use transit_tiers::ingest::{synth_generate, SynthPreset};
use transit_tiers::logit::{logit_consumer_surplus, logit_profit, LogitSolver};
use transit_tiers::market::{FitOptions, Market};

/// Seed of the EU-like synthetic fixture shared by A6, A8, A9 and A10.
const FIXTURE_SEED: u64 = 1;
const FIXTURE_FLOWS: usize = 10_000;

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn eu_fixture() -> Vec<FlowRecord> {
    synth_generate(&SynthPreset::EuIsp.moments(FIXTURE_FLOWS, FIXTURE_SEED)).unwrap()
}

fn eu_config() -> ExperimentConfig {
    ExperimentConfig {
        input: InputSource::Synth(SynthPreset::EuIsp.moments(FIXTURE_FLOWS, FIXTURE_SEED)),
        ..ExperimentConfig::default()
    }
}

fn random_records(rng: &mut ChaCha8Rng, n: usize) -> Vec<FlowRecord> {
    (0..n)
        .map(|i| {
            let q = (rng.random_range(-2.0..2.0f64) * 1.5).exp();
            let d = rng.random_range(1.0..2000.0);
            FlowRecord::new(format!("f{i:03}"), q, d)
        })
        .collect()
}

fn random_params(rng: &mut ChaCha8Rng, model: DemandModel) -> MarketParams {
    match model {
        DemandModel::Ced => {
            MarketParams::ced(rng.random_range(1.05..5.0), rng.random_range(5.0..30.0))
        }
        DemandModel::Logit => loop {
            let p = MarketParams::logit(
                rng.random_range(0.5..3.0),
                rng.random_range(5.0..30.0),
                rng.random_range(0.1..0.6),
            );
            // the uniform price is only rational when alpha p0 s0 > 1
            if p.alpha * p.p0 * p.s0 > 1.05 {
                break p;
            }
        },
    }
}

fn random_spec(rng: &mut ChaCha8Rng) -> CostModelSpec {
    let kinds = [
        CostModelKind::Linear,
        CostModelKind::Concave,
        CostModelKind::Regional,
        CostModelKind::DestType,
    ];
    let kind = kinds[rng.random_range(0..kinds.len())];
    CostModelSpec::new(kind, rng.random_range(0.0..1.0))
}

fn a1() -> Verdict {
    let p = ced_optimal_price(1.0, 2.0);
    let profit = ced_profit(&[1.0], &[1.0], &[p], 2.0).unwrap();
    verdict(
        (p - 2.0).abs() <= 1e-9 && (profit - 0.25).abs() <= 1e-9,
        format!("p*={p}, profit={profit}"),
    )
}

fn a2() -> Verdict {
    let mut worst_price: f64 = 0.0;
    let mut worst_capture: f64 = 0.0;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for model in [DemandModel::Ced, DemandModel::Logit] {
            let records = random_records(&mut rng, 100);
            let params = random_params(&mut rng, model);
            let spec = random_spec(&mut rng);
            let m = Market::fit(&records, &params, &spec, &FitOptions::default()).unwrap();
            let out = evaluate_bundling(&m, &Bundling::single(100)).unwrap();
            let p = out.prices[0].unwrap();
            worst_price = worst_price.max((p - params.p0).abs() / params.p0);
            worst_capture = worst_capture.max(out.profit_capture.abs());
        }
    }
    verdict(
        worst_price <= 1e-4 && worst_capture <= 1e-4,
        format!("max |P-P0|/P0={worst_price:.2e}, max |capture(B=1)|={worst_capture:.2e}"),
    )
}

fn a3() -> Verdict {
    let heuristics = [
        StrategyKind::DemandWeighted,
        StrategyKind::CostWeighted,
        StrategyKind::ProfitWeighted,
        StrategyKind::CostDivision,
        StrategyKind::IndexDivision,
        StrategyKind::ClassConstrainedProfitWeighted,
    ];
    let mut violations = Vec::new();
    let mut comparisons = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let model = if seed % 2 == 0 {
            DemandModel::Ced
        } else {
            DemandModel::Logit
        };
        let n = rng.random_range(2..=10);
        let records = random_records(&mut rng, n);
        let params = random_params(&mut rng, model);
        let mut spec = random_spec(&mut rng);
        if spec.kind == CostModelKind::DestType {
            spec.kind = CostModelKind::Linear;
        }
        let m = Market::fit(&records, &params, &spec, &FitOptions::default()).unwrap();
        let mut last = f64::NEG_INFINITY;
        for b in 1..=n {
            let opt =
                build_bundles(StrategyKind::Optimal, &m, b, OptimalMode::FullPartition).unwrap();
            let best = evaluate_bundling(&m, &opt.bundling).unwrap().profit;
            let slack = 1e-9 * best.abs();
            if best < last - slack {
                violations.push(format!("seed {seed}: optimum fell at B={b}"));
            }
            last = best;
            let mut check = |name: &str, bundling: &Bundling| {
                let p = evaluate_bundling(&m, bundling).unwrap().profit;
                comparisons += 1;
                if p > best + slack {
                    violations.push(format!("seed {seed}: {name} beat optimum at B={b}"));
                }
            };
            for s in heuristics {
                check(
                    s.name(),
                    &build_bundles(s, &m, b, OptimalMode::FullPartition)
                        .unwrap()
                        .bundling,
                );
            }
            let contiguous =
                build_bundles(StrategyKind::Optimal, &m, b, OptimalMode::ContiguousByCost).unwrap();
            check("contiguous", &contiguous.bundling);
        }
    }
    let detail = match violations.first() {
        None => format!("{comparisons} comparisons, no violations"),
        Some(v) => format!("{} violations, first: {v}", violations.len()),
    };
    verdict(violations.is_empty(), detail)
}

fn a4() -> Verdict {
    let solver = LogitSolver::default();
    let mut worst_residual: f64 = 0.0;
    let mut worst_gradient: f64 = 0.0;
    let mut beaten = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let n = rng.random_range(2..=30);
        let alpha = rng.random_range(0.3..4.0);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..20.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..15.0)).collect();
        let k = rng.random_range(1.0..1000.0);
        let start: Vec<f64> = c.iter().map(|c| c + 1.0 / alpha).collect();
        let sol = solver.solve_from(&v, &c, alpha, &start).unwrap();
        worst_residual = worst_residual.max(sol.residual);
        let p = sol.prices;
        let profit = logit_profit(&v, &p, &c, alpha, k).unwrap();
        let h = 1e-6;
        for i in 0..n {
            let mut up = p.clone();
            let mut down = p.clone();
            up[i] += h;
            down[i] -= h;
            let g = (logit_profit(&v, &up, &c, alpha, k).unwrap()
                - logit_profit(&v, &down, &c, alpha, k).unwrap())
                / (2.0 * h);
            worst_gradient = worst_gradient.max(g.abs() / profit);
        }
        for _ in 0..1000 {
            let scale = 10f64.powf(rng.random_range(-4.0..0.0));
            let q: Vec<f64> = p
                .iter()
                .map(|p| p + scale * rng.random_range(-1.0..1.0))
                .collect();
            if logit_profit(&v, &q, &c, alpha, k).unwrap() > profit * (1.0 + 1e-12) {
                beaten += 1;
            }
        }
    }
    verdict(
        worst_residual < 1e-8 && worst_gradient < 1e-5 && beaten == 0,
        format!(
            "max residual={worst_residual:.2e}, max |grad|/profit={worst_gradient:.2e}, \
             perturbations beating solution={beaten}/20000"
        ),
    )
}

fn a5() -> Verdict {
    let gumbel = Gumbel::new(0.0, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let n = rng.random_range(1..=5);
        let alpha = rng.random_range(0.3..3.0);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let k = rng.random_range(1.0..100.0);
        let closed = logit_consumer_surplus(&v, &p, alpha, k).unwrap();
        let mean: Vec<f64> = v.iter().zip(&p).map(|(v, p)| alpha * (v - p)).collect();
        let draws = 1_000_000;
        let mut total = 0.0;
        for _ in 0..draws {
            let mut best: f64 = gumbel.sample(&mut rng);
            for m in &mean {
                best = best.max(m + gumbel.sample(&mut rng));
            }
            total += best;
        }
        let simulated = k * total / draws as f64 / alpha;
        worst = worst.max(((closed - simulated) / simulated).abs());
    }
    verdict(
        worst <= 0.01,
        format!("max relative error={worst:.2e} (1e6 draws x 10)"),
    )
}

fn a6() -> Verdict {
    let records = eu_fixture();
    let m = Market::fit(
        &records,
        &MarketParams::ced(1.1, 20.0),
        &CostModelSpec::new(CostModelKind::Linear, 0.2),
        &FitOptions::default(),
    )
    .unwrap();
    let capture = |s: StrategyKind, b: usize| {
        let built = build_bundles(s, &m, b, OptimalMode::FullPartition).unwrap();
        evaluate_bundling(&m, &built.bundling)
            .unwrap()
            .profit_capture
    };
    let c3 = capture(StrategyKind::ProfitWeighted, 3);
    let c4 = capture(StrategyKind::ProfitWeighted, 4);
    let opt4 = capture(StrategyKind::Optimal, 4);
    verdict(
        c4 >= 0.85 && c4 >= c3 - 0.02,
        format!(
            "profit-weighted capture B=3: {c3:.4}, B=4: {c4:.4} (need >= 0.85); \
             optimal B=4 for reference: {opt4:.4}"
        ),
    )
}

fn a7() -> Verdict {
    let b = token_bucket_bundles(&[30.0, 10.0, 10.0, 10.0], &["1", "2", "3", "4"], 2);
    let groups = b.groups();
    verdict(
        groups == vec![vec![0], vec![1, 2, 3]],
        format!("bundles {groups:?}"),
    )
}

fn a8() -> Verdict {
    let cfg = ExperimentConfig {
        strategies: vec![StrategyKind::ProfitWeighted],
        bundles: vec![1],
        theta_grid: vec![0.0, 0.2, 0.5, 1.0],
        ..eu_config()
    };
    let table = experiment::run_theta_sweep(&cfg).unwrap();
    let maxima: Vec<f64> = table.curve("theta", PER_FLOW).map(|r| r.profit).collect();
    let ok = maxima.len() == 4 && maxima.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    verdict(
        ok,
        format!("per-flow profit over theta {{0,0.2,0.5,1}}: {maxima:.6?}"),
    )
}

fn a9() -> Verdict {
    let cfg = ExperimentConfig {
        bundles: vec![2],
        alpha_grid: vec![1.1, 2.0, 5.0, 10.0],
        ..eu_config()
    };
    let table = experiment::run_sensitivity_sweep(&cfg).unwrap();
    let points: Vec<(f64, f64)> = table
        .rows
        .iter()
        .filter(|r| r.sweep_param == "alpha")
        .map(|r| (r.sweep_value.unwrap(), r.profit_capture))
        .collect();
    let min = table
        .rows
        .iter()
        .find(|r| r.sweep_param == "alpha:min")
        .map(|r| r.profit_capture)
        .unwrap_or(f64::NAN);
    verdict(
        points.len() == 4 && min >= 0.7,
        format!("min capture at B=2: {min:.4} (need >= 0.7); per alpha {points:.4?}"),
    )
}

fn a10() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut at = String::new();
    for model in [DemandModel::Ced, DemandModel::Logit] {
        let cfg = ExperimentConfig {
            demand_model: model,
            bundles: vec![2, 3, 4, 8],
            ..eu_config()
        };
        let table = experiment::run_capture_curve(&cfg).unwrap();
        for r in &table.rows {
            let gap = (r.surplus_capture - r.profit_capture).abs();
            if gap > worst {
                worst = gap;
                at = format!("{model} {} B={}", r.strategy, r.num_bundles);
            }
        }
    }
    verdict(
        worst <= 0.15,
        format!("max |surplus capture - profit capture|={worst:.4} ({at}), all six strategies"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("A1", a1),
        ("A2", a2),
        ("A3", a3),
        ("A4", a4),
        ("A5", a5),
        ("A6", a6),
        ("A7", a7),
        ("A8", a8),
        ("A9", a9),
        ("A10", a10),
    ];
    let only: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| a.starts_with('A'))
        .collect();
    let mut failed = 0;
    for (id, check) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let start = Instant::now();
        let v = panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        println!(
            "{id:<4} {}  [{secs:.1}s] {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        if !v.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
