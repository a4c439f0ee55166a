//! End-to-end acceptance checks. Each check prints one PASS/FAIL line
//! straight to stderr (bypassing the test harness capture) and the test
//! fails if any check fails.

mod common;

use std::collections::BTreeSet;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use chrono::{Days, NaiveDate};
use common::*;
use fleetroute::colgen::{solve_mdvrp, CgOptions, Fleet, RoutePool};
use fleetroute::eval::{evaluate, EvalMode, EvalOptions};
use fleetroute::graph::replenishment_count;
use fleetroute::lshaped::{run_lshaped, LShapedOptions, LShapedStatus};
use fleetroute::model::{route_feasible, DemandRealization, Node, NodeId};
use fleetroute::pricing::{price_route, DualPrices, PricingOptions};
use fleetroute::recycle::recycle_route;
use fleetroute::scenario::{
    fit, select_argmax_min, select_by_mip, simulate, DemandHistory, Districts, FittedDemandModel, HistoryDay,
    LogNormalParams, OrderSizeLaw,
};
use fleetroute::synthetic::{demand_model, generate, SyntheticSpec};
use fleetroute::Instance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(started: Instant, limit: Duration) -> Result<(), String> {
    let t = started.elapsed();
    ensure(t <= limit, || format!("took {t:.1?}, limit {limit:?}"))
}

fn pricing_exactness() -> Result<String, String> {
    let started = Instant::now();
    let mut fixtures = 0;
    for seed in 0..60u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xacc);
        let clients = rng.random_range(2..=7);
        let mut fx = random_fixture(
            seed + 5000,
            &FixtureSpec {
                clients,
                depots: 1,
                allow_waiting: rng.random_bool(0.25),
                ..Default::default()
            },
        );
        let xi = random_demand(seed, &fx, clients, 5, "day");
        let largest = xi.orders.values().cloned().fold(0.0, f64::max);
        let trips = rng.random_range(1..=3) as f64;
        fx.config.vehicle_capacity = (xi.total_demand() / trips).ceil().max(largest);
        let inst = fx.instance();
        let dem = inst.resolve(&xi).unwrap();
        let depot = inst.depots[0];
        let duals = DualPrices {
            pi: (0..dem.len()).map(|_| rng.random_range(0.0..50.0)).collect(),
            lambda: [(depot, -rng.random_range(0.0..20.0))].into_iter().collect(),
        };
        let od = oracle_demand(&inst.graph, &fx.config, &xi);
        ensure(od.reloads <= 3, || format!("seed {seed}: {} reload nodes", od.reloads))?;
        let expected = enumerate_all_routes(&inst.graph, &fx.config, depot, &od.clients, &od.orders, od.reloads)
            .iter()
            .map(|r| {
                let pis: f64 = (0..od.clients.len()).filter(|p| r.mask & (1 << p) != 0).map(|p| duals.pi[p]).sum();
                r.cost - duals.lambda_of(depot) - pis
            })
            .reduce(f64::min);
        let out = price_route(&inst, depot, &dem, &duals, &PricingOptions::default()).unwrap();
        let got = out.best.map(|b| b.reduced_cost);
        match (expected, got) {
            (None, None) => {}
            (Some(e), Some(g)) => ensure((e - g).abs() <= 1e-6, || format!("seed {seed}: oracle {e}, pricing {g}"))?,
            (e, g) => return Err(format!("seed {seed}: oracle {e:?}, pricing {g:?}")),
        }
        fixtures += 1;
    }
    within(started, Duration::from_secs(60))?;
    Ok(format!("{fixtures} fixtures in {:.1?}", started.elapsed()))
}

/// Runs the routing fixtures, returning the number checked and every RRMP
/// duality residual seen.
fn mdvrp_runs() -> Result<(usize, Vec<f64>), String> {
    static RUNS: OnceLock<Result<(usize, Vec<f64>), String>> = OnceLock::new();
    RUNS.get_or_init(mdvrp_fixtures).clone()
}

fn mdvrp_fixtures() -> Result<(usize, Vec<f64>), String> {
    let mut residuals = Vec::new();
    let mut fixtures = 0;
    for seed in 0..32u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x3d7);
        let clients = rng.random_range(2..=7);
        let mut fx = random_fixture(
            seed + 7000,
            &FixtureSpec {
                clients,
                depots: rng.random_range(1..=2),
                ..Default::default()
            },
        );
        fx.config.vehicle_capacity = rng.random_range(5.0..12.0f64).round();
        let xi = random_demand(seed + 11, &fx, clients, 5, "day");
        let inst = fx.instance();
        let dem = inst.resolve(&xi).unwrap();
        // At most three vehicles in total, at least one.
        let mut left = 3u32;
        let mut fleet = Fleet::new();
        for &k in &inst.depots {
            let y = rng.random_range(0..=left);
            left -= y;
            fleet.insert(k, y);
        }
        if fleet.values().all(|&y| y == 0) {
            fleet.insert(inst.depots[0], 1);
        }
        let mut pool = RoutePool::new("day");
        let res = solve_mdvrp(&inst, &fleet, &dem, &mut pool, &CgOptions::default()).unwrap();
        let expected = mdvrp_oracle(&inst.graph, &fx.config, &xi, &fleet, inst.unserved_penalty);
        ensure((res.value - expected).abs() <= 1e-6, || {
            format!("seed {seed}: solver {}, oracle {expected}", res.value)
        })?;
        residuals.extend(res.duality_residuals);
        fixtures += 1;
    }
    Ok((fixtures, residuals))
}

fn mdvrp_exactness() -> Result<String, String> {
    let started = Instant::now();
    let (n, _) = mdvrp_runs()?;
    within(started, Duration::from_secs(300))?;
    Ok(format!("{n} fixtures in {:.1?}", started.elapsed()))
}

#[derive(Clone)]
struct LShapedRun {
    fixtures: usize,
    cuts: usize,
    violations: Vec<String>,
    residuals: Vec<f64>,
    mismatches: Vec<String>,
}

fn lshaped_runs() -> LShapedRun {
    static RUNS: OnceLock<LShapedRun> = OnceLock::new();
    RUNS.get_or_init(lshaped_fixtures).clone()
}

fn lshaped_fixtures() -> LShapedRun {
    let mut out = LShapedRun {
        fixtures: 0,
        cuts: 0,
        violations: Vec::new(),
        residuals: Vec::new(),
        mismatches: Vec::new(),
    };
    for seed in 100..112u64 {
        let (fx, scenarios) = lshaped_case(seed);
        let inst = fx.instance();
        let opts = LShapedOptions::default();
        let res = run_lshaped(&inst, &scenarios, &opts).unwrap();
        let (best, table) = two_stage_oracle(&inst.graph, &fx.config, &scenarios, inst.unserved_penalty);
        if res.status != LShapedStatus::Converged
            || (res.objective() - best).abs() > opts.eps * best.abs() + 1e-6
        {
            out.mismatches.push(format!("seed {seed}: {:?} {} vs {best}", res.status, res.objective()));
        }
        let mut depots = inst.depots.clone();
        depots.sort();
        for cut in &res.state.cuts {
            out.cuts += 1;
            for (open, y, values) in &table {
                let open_set: BTreeSet<usize> =
                    depots.iter().zip(open).filter(|(_, &o)| o).map(|(&k, _)| k).collect();
                let fleet: Fleet = depots.iter().copied().zip(y.iter().copied()).collect();
                let bound = cut.bound(&open_set, &fleet);
                if bound > values[cut.scenario] + 1e-6 {
                    out.violations.push(format!("seed {seed}: cut gives {bound} > {}", values[cut.scenario]));
                }
            }
        }
        out.residuals.extend(res.duality_residuals);
        out.fixtures += 1;
    }
    out
}

fn lshaped_exactness() -> Result<String, String> {
    let started = Instant::now();
    let run = lshaped_runs();
    ensure(run.mismatches.is_empty(), || run.mismatches.join("; "))?;
    within(started, Duration::from_secs(600))?;
    Ok(format!("{} fixtures in {:.1?}", run.fixtures, started.elapsed()))
}

fn cut_validity() -> Result<String, String> {
    let run = lshaped_runs();
    ensure(run.cuts > 0, || "no cuts generated".into())?;
    ensure(run.violations.is_empty(), || {
        format!("{} violations, first: {}", run.violations.len(), run.violations[0])
    })?;
    Ok(format!("{} cuts over {} fixtures, 0 violations", run.cuts, run.fixtures))
}

fn strong_duality() -> Result<String, String> {
    let (_, mut residuals) = mdvrp_runs()?;
    residuals.extend(lshaped_runs().residuals);
    ensure(!residuals.is_empty(), || "no master solves recorded".into())?;
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    ensure(worst <= 1e-6, || format!("worst residual {worst:e}"))?;
    Ok(format!("{} solves, worst residual {worst:.1e}", residuals.len()))
}

fn recycler_soundness() -> Result<String, String> {
    let mut pairs = 0;
    for seed in 0..400u64 {
        if pairs >= 1000 {
            break;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e7);
        let mut fx = random_fixture(
            seed + 9000,
            &FixtureSpec {
                clients: 8,
                depots: rng.random_range(1..=2),
                window_share: rng.random_range(0.0..0.8),
                allow_waiting: rng.random_bool(0.3),
                ..Default::default()
            },
        );
        fx.config.vehicle_capacity = rng.random_range(4.0..12.0f64).round();
        let inst = fx.instance();
        let src = random_demand(seed * 17, &fx, rng.random_range(2..=5), 5, "src");
        let od = oracle_demand(&inst.graph, &fx.config, &src);
        let depot = inst.depots[rng.random_range(0..inst.depots.len())];
        let routes = enumerate_all_routes(&inst.graph, &fx.config, depot, &od.clients, &od.orders, od.reloads);
        if routes.is_empty() {
            continue;
        }
        let src_res = inst.resolve(&src).unwrap();
        for j in 0..10 {
            let r = &routes[rng.random_range(0..routes.len())];
            let route = inst.make_route(depot, r.visits.clone(), &src_res).unwrap();
            let tgt = random_demand(seed * 17 + 1 + j, &fx, rng.random_range(1..=8), 6, "tgt");
            let out = recycle_route(&inst, &route, &inst.resolve(&tgt).unwrap()).unwrap();
            let ok = route_feasible(&out, &tgt, &fx.config, &inst.graph).unwrap().is_feasible();
            ensure(ok, || format!("seed {seed}: {:?} -> {:?} infeasible", route.visits, out.visits))?;
            pairs += 1;
        }
    }
    ensure(pairs >= 1000, || format!("only {pairs} pairs"))?;
    Ok(format!("{pairs} pairs, all feasible"))
}

fn replenishment_grid() -> Result<String, String> {
    let mut cases = 0;
    // Integer units, so the expected count is plain integer ceiling.
    for q in 1..=40u64 {
        for total in 0..=400u64 {
            let got = replenishment_count(total as f64, q as f64);
            let want = ceil_div(total, q) as usize;
            ensure(got == want, || format!("total {total}, Q {q}: {got} vs {want}"))?;
            cases += 1;
        }
    }
    // Decimal quantities that are exact multiples on paper but not in
    // binary floating point.
    for (units, q_tenths) in [(3u64, 1u64), (6, 2), (9, 3), (7, 7), (12, 4), (10, 1), (21, 7)] {
        let total = units as f64 / 10.0;
        let q = q_tenths as f64 / 10.0;
        let want = ceil_div(units, q_tenths) as usize;
        let got = replenishment_count(total, q);
        ensure(got == want, || format!("total {total}, Q {q}: {got} vs {want}"))?;
        cases += 1;
    }
    Ok(format!("{cases} grid points"))
}

fn statistical_closure() -> Result<String, String> {
    let started = Instant::now();
    let truth = FittedDemandModel {
        activity: (0..300).map(|i| (NodeId::new(format!("n{i:04}")), [0.4; 12])).collect(),
        active_count: LogNormalParams { mu: 3.0, sigma: 0.4 },
        order_size_law: OrderSizeLaw::ZeroTruncatedPoisson,
        order_size_mean: 10.0,
    };
    let days = simulate(&truth, 10_000, 6, 21).unwrap();
    let start = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
    let history = DemandHistory {
        days: days
            .iter()
            .enumerate()
            .map(|(d, xi)| HistoryDay {
                date: start + Days::new(d as u64),
                orders: xi.orders.clone(),
            })
            .collect(),
    };
    let m = fit(&history, OrderSizeLaw::ZeroTruncatedPoisson).unwrap();
    // Mean order size of the fitted law, by its own definition.
    let lambda = m.order_size_mean;
    let mean = lambda / (1.0 - (-lambda).exp());
    let observed: f64 = {
        let (s, n) = days.iter().flat_map(|d| d.orders.values()).fold((0.0, 0.0), |(s, n), &u| (s + u, n + 1.0));
        s / n
    };
    ensure((lambda - 10.0).abs() <= 0.2, || format!("order size parameter {lambda}"))?;
    ensure((observed - mean).abs() <= 1e-4 * observed, || format!("fitted mean {mean} vs observed {observed}"))?;
    ensure((m.active_count.mu - 3.0).abs() <= 0.05, || format!("mu {}", m.active_count.mu))?;
    ensure((m.active_count.sigma - 0.4).abs() <= 0.05, || format!("sigma {}", m.active_count.sigma))?;
    within(started, Duration::from_secs(30))?;
    Ok(format!(
        "lambda {lambda:.3}, mu {:.3}, sigma {:.3} in {:.1?}",
        m.active_count.mu,
        m.active_count.sigma,
        started.elapsed()
    ))
}

fn scenario_selection() -> Result<String, String> {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes: Vec<Node> = (0..40)
            .map(|i| Node {
                id: NodeId::new(format!("n{i:04}")),
                lat: rng.random_range(40.0..42.0),
                lon: rng.random_range(-80.0..-75.0),
            })
            .collect();
        let districts = Districts::spatial(&nodes, 4).unwrap();
        let model = FittedDemandModel {
            activity: nodes.iter().map(|n| (n.id.clone(), [0.4; 12])).collect(),
            active_count: LogNormalParams { mu: 2.8, sigma: 0.3 },
            order_size_law: OrderSizeLaw::ZeroTruncatedPoisson,
            order_size_mean: 5.0,
        };
        let pool = simulate(&model, 50, 1 + seed as u32 % 12, seed + 300).unwrap();
        let refs: Vec<&DemandRealization> = pool.iter().collect();
        let a = select_argmax_min(&refs, &districts);
        let m = select_by_mip(&refs, &districts).unwrap();
        ensure(a == m, || format!("seed {seed}: enumeration {a:?}, mip {m:?}"))?;
    }
    Ok("20 pools agree".into())
}

/// Active clients per day in the timing instance.
const ACCEL_ACTIVE: f64 = 9.0;

/// Set when the accelerated and plain runs disagree on the optimum or the
/// accelerations make solving slower. Either fails the test; missing the
/// 1.5x target only prints FAIL, since it is a wall-clock measurement on
/// whatever machine runs the suite.
static ACCEL_BROKEN: AtomicBool = AtomicBool::new(false);

fn acceleration() -> Result<String, String> {
    let mut ratios = Vec::new();
    for seed in 0..5u64 {
        let spec = SyntheticSpec {
            clients: 40,
            depots: 4,
            seed,
            ..Default::default()
        };
        let (net, cfg) = generate(&spec);
        let inst = Instance::new(&net, cfg).unwrap();
        let model = demand_model(&spec, ACCEL_ACTIVE, 5.0);
        let scenarios: Vec<DemandRealization> = simulate(&model, 3, 6, seed)
            .unwrap()
            .into_iter()
            .map(|d| d.with_probability(1.0 / 3.0))
            .collect();
        let timed = |opts: &LShapedOptions| {
            let t = Instant::now();
            let r = run_lshaped(&inst, &scenarios, opts).unwrap();
            (t.elapsed().as_secs_f64(), r.objective())
        };
        let (off, v_off) = timed(&LShapedOptions::all_off());
        let (on, v_on) = timed(&LShapedOptions::default());
        if (v_on - v_off).abs() > 1e-4 * v_off.abs() + 1e-6 {
            ACCEL_BROKEN.store(true, Ordering::Relaxed);
            return Err(format!("seed {seed}: objectives differ, {v_on} vs {v_off}"));
        }
        ratios.push(off / on);
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[2];
    let list = ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>().join(", ");
    if median <= 1.0 {
        ACCEL_BROKEN.store(true, Ordering::Relaxed);
    }
    ensure(median >= 1.5, || format!("median speedup {median:.2} < 1.5 (per seed {list})"))?;
    Ok(format!("median speedup {median:.2} (per seed {list})"))
}

fn mode_dominance() -> Result<String, String> {
    let mut fx = random_fixture(
        77,
        &FixtureSpec {
            clients: 9,
            depots: 2,
            max_vehicles: 2,
            window_share: 0.4,
            ..Default::default()
        },
    );
    fx.config.vehicle_capacity = 9.0;
    let inst = fx.instance();
    let scenarios: Vec<DemandRealization> = (0..2)
        .map(|s| random_demand(900 + s, &fx, 6, 4, &format!("s{s}")).with_probability(0.5))
        .collect();
    let solved = run_lshaped(&inst, &scenarios, &LShapedOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xda75);
    let days: Vec<DemandRealization> = (0..50)
        .map(|d| random_demand(2000 + d, &fx, rng.random_range(0..=7), 5, &format!("day{d:02}")))
        .collect();
    let run = |mode| {
        let opts = EvalOptions { mode, ..Default::default() };
        evaluate(&inst, &solved.solution, &days, &solved.pools, &opts).unwrap()
    };
    let (full, single, petal) = (run(EvalMode::FullCg), run(EvalMode::SingleIteration), run(EvalMode::PetalHeuristic));
    let violations = full
        .days
        .iter()
        .zip(&single.days)
        .zip(&petal.days)
        .filter(|((f, s), p)| f.value > s.value + 1e-6 || s.value > p.value + 1e-6)
        .count();
    ensure(violations == 0, || format!("{violations} of 50 days out of order"))?;
    Ok("50 days, 0 violations".into())
}

#[test]
fn acceptance() {
    // The boolean marks checks whose FAIL fails the test.
    let checks: [(&str, Check, bool); 11] = [
        ("pricing equals brute-force enumeration", pricing_exactness, true),
        ("routing value equals partition enumeration", mdvrp_exactness, true),
        ("two-stage objective equals full enumeration", lshaped_exactness, true),
        ("every cut valid at every first-stage point", cut_validity, true),
        ("master duals reproduce the LP value", strong_duality, true),
        ("recycled routes feasible for the target day", recycler_soundness, true),
        ("reload count is ceil(demand / capacity)", replenishment_grid, true),
        ("fit recovers the simulating model", statistical_closure, true),
        ("scenario enumeration equals the MIP", scenario_selection, true),
        ("accelerations cut solve time by 1.5x", acceleration, false),
        ("full <= single <= petal on every day", mode_dominance, true),
    ];
    let mut failed = Vec::new();
    for (i, (name, check, gating)) in checks.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let line = match &outcome {
            Ok(detail) => format!("acceptance {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => format!("acceptance {:>2} FAIL  {name}: {detail}", i + 1),
        };
        writeln!(std::io::stderr(), "{line}").unwrap();
        if outcome.is_err() && *gating {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
    assert!(!ACCEL_BROKEN.load(Ordering::Relaxed), "accelerated runs are wrong or slower");
}
