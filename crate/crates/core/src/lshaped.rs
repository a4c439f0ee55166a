//! Multicut L-shaped method for the first stage: which depots to open and
//! how many vehicles to station at each.
//!
//! The master is a small MIP over `x` (open), `y` (vehicles), one recourse
//! estimate `eta` per scenario and coverage indicators `w`. Two cut families
//! bound each `eta`:
//!
//! * a Benders cut built from the routing relaxation's duals, relaxed by
//!   `eta_star` times the Hamming distance between `x` and the open set
//!   that generated it;
//! * a fleet cut that enforces the integer routing value `eta_star` for every
//!   fleet that is componentwise no larger than the generating one. Routing
//!   cost never increases with more vehicles, so this holds for all `x`.
//!
//! With activation on, each scenario is first solved over its route pool
//! alone. That value can only overestimate the true routing cost, so when
//! it already meets the master's estimate no cut is needed and route
//! generation stays off. Otherwise the full column generation runs.
//!
//! Cuts from subproblems that could not be solved exactly (pricing or MIP
//! limits) are tagged inexact: the lower bound is frozen while any is
//! present, and they are discarded before convergence is declared.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colgen::{solve_mdvrp, CgMode, CgOptions, Fleet, RoutePool, SubproblemResult};
use crate::error::{Error, Result};
use crate::instance::{Instance, ResolvedDemand};
use crate::lp::{self, LinearModel, MipOptions, ObjectiveSense, RowSense, Status, VarId};
use crate::model::{DemandRealization, FirstStageSolution};
use crate::pricing::{self, DualPrices, PricingOptions};
use crate::recycle;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutKind {
    /// `eta >= pi_sum + sum lambda_k y_k - eta_star * hamming(x, open_set)`.
    Benders {
        pi_sum: f64,
        lambda: BTreeMap<usize, f64>,
        open_set: BTreeSet<usize>,
    },
    /// `eta >= eta_star` whenever `y <= fleet` componentwise.
    Fleet { fleet: BTreeMap<usize, u32> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalityCut {
    pub scenario: usize,
    pub iteration: usize,
    pub eta_star: f64,
    /// Built from an exact subproblem solve; inexact cuts may cut off the
    /// optimum and are never trusted for the lower bound.
    pub exact: bool,
    pub kind: CutKind,
}

impl OptimalityCut {
    /// The lower bound this cut places on the scenario's recourse value at
    /// first-stage point (`open`, `fleet`).
    pub fn bound(&self, open: &BTreeSet<usize>, fleet: &Fleet) -> f64 {
        match &self.kind {
            CutKind::Benders { pi_sum, lambda, open_set } => {
                let dual: f64 = lambda
                    .iter()
                    .map(|(k, l)| l * fleet.get(k).copied().unwrap_or(0) as f64)
                    .sum();
                let hamming = open.symmetric_difference(open_set).count() as f64;
                pi_sum + dual - self.eta_star * hamming
            }
            CutKind::Fleet { fleet: at } => {
                let dominated = fleet.iter().all(|(k, &y)| y <= at.get(k).copied().unwrap_or(0));
                if dominated {
                    self.eta_star
                } else {
                    0.0
                }
            }
        }
    }
}

/// Knobs for [`run_lshaped`]. The defaults enable every acceleration;
/// [`LShapedOptions::all_off`] disables them.
#[derive(Clone, Debug)]
pub struct LShapedOptions {
    /// Relative gap `(ub - lb) / ub` at which the run stops.
    pub eps: f64,
    pub max_iterations: usize,
    pub time_limit: Option<Duration>,
    /// Budget per pricing call.
    pub pricing_time_limit: Option<Duration>,
    /// Seed route pools by zero-dual pricing and single-client petals.
    pub warm_start: bool,
    /// Keep route pools across iterations; otherwise every evaluation
    /// starts from an empty pool.
    pub route_pooling: bool,
    /// Run route generation for a scenario only when its pool cannot
    /// certify the master's recourse estimate.
    pub activation: bool,
    /// Share routes between scenarios through the petal recycler.
    pub recycling: bool,
    pub master_node_limit: usize,
    /// Options for the routing subproblems; `mode` and `complete_depots`
    /// are overridden.
    pub cg: CgOptions,
}

impl Default for LShapedOptions {
    fn default() -> Self {
        LShapedOptions {
            eps: 1e-4,
            max_iterations: 500,
            time_limit: None,
            pricing_time_limit: None,
            warm_start: true,
            route_pooling: true,
            activation: true,
            recycling: true,
            master_node_limit: 200_000,
            cg: CgOptions::default(),
        }
    }
}

impl LShapedOptions {
    /// Plain L-shaped: no warm start, no pooling, no activation, no
    /// recycling.
    pub fn all_off() -> Self {
        LShapedOptions {
            warm_start: false,
            route_pooling: false,
            activation: false,
            recycling: false,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LShapedStatus {
    Converged,
    IterationLimit,
    TimeLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub lower_bound: f64,
    #[serde(with = "crate::serde_util::inf_as_null")]
    pub upper_bound: f64,
    pub master_value: f64,
    pub route_generation: bool,
    pub cuts_added: usize,
    pub columns_added: usize,
    pub seconds: f64,
}

/// Wall-clock split of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub warm_start: f64,
    /// Master MIP solves.
    pub facility_location: f64,
    /// Subproblem time outside pricing.
    pub set_covering: f64,
    /// Subproblem time spent pricing.
    pub route_generators: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.warm_start + self.facility_location + self.set_covering + self.route_generators
    }
}

/// Everything needed to resume a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MasterState {
    pub iteration: usize,
    pub lower_bound: f64,
    #[serde(with = "crate::serde_util::inf_as_null")]
    pub upper_bound: f64,
    pub incumbent_open: BTreeSet<usize>,
    pub incumbent_fleet: BTreeMap<usize, u32>,
    /// Routing value per scenario at the incumbent.
    pub incumbent_values: Vec<f64>,
    pub cuts: Vec<OptimalityCut>,
}

impl MasterState {
    fn new(n_scenarios: usize) -> Self {
        MasterState {
            iteration: 0,
            lower_bound: 0.0,
            upper_bound: f64::INFINITY,
            incumbent_open: BTreeSet::new(),
            incumbent_fleet: BTreeMap::new(),
            incumbent_values: vec![0.0; n_scenarios],
            cuts: Vec::new(),
        }
    }
}

/// Resumable run state: master state plus route pools as visit sequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub scenario_ids: Vec<String>,
    pub state: MasterState,
    pub pools: Vec<Vec<Vec<usize>>>,
}

#[derive(Clone, Debug)]
pub struct LShapedResult {
    pub solution: FirstStageSolution,
    pub status: LShapedStatus,
    pub state: MasterState,
    pub trace: Vec<IterationRecord>,
    /// Subproblem results at the incumbent, one per scenario.
    pub subproblems: Vec<SubproblemResult>,
    pub probabilities: Vec<f64>,
    pub pools: Vec<RoutePool>,
    pub timings: PhaseTimings,
    /// Duality residual of every restricted-master solve of the run.
    pub duality_residuals: Vec<f64>,
}

impl LShapedResult {
    pub fn gap(&self) -> f64 {
        lp::relative_gap(self.state.upper_bound, self.state.lower_bound)
    }

    pub fn objective(&self) -> f64 {
        self.state.upper_bound
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            scenario_ids: self.pools.iter().map(|p| p.realization_id.clone()).collect(),
            state: self.state.clone(),
            pools: self
                .pools
                .iter()
                .map(|p| p.iter().map(|r| r.visits.clone()).collect())
                .collect(),
        }
    }
}

/// Scenario weights: explicit probabilities (summing to one) or uniform
/// when none is given.
pub fn scenario_probabilities(scenarios: &[DemandRealization]) -> Result<Vec<f64>> {
    if scenarios.is_empty() {
        return Err(Error::input("at least one scenario is required"));
    }
    let given: Vec<f64> = scenarios.iter().filter_map(|s| s.probability).collect();
    if given.is_empty() {
        return Ok(vec![1.0 / scenarios.len() as f64; scenarios.len()]);
    }
    if given.len() != scenarios.len() {
        return Err(Error::input("either every scenario has a probability or none does"));
    }
    let sum: f64 = given.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::input(format!("scenario probabilities sum to {sum}, not 1")));
    }
    Ok(given)
}

/// Coverage penalty paid by the nodes out of reach of every open depot.
pub fn coverage_cost(inst: &Instance, open: &BTreeSet<usize>) -> f64 {
    (0..inst.num_nodes())
        .filter(|&i| !inst.covering_depots(i).iter().any(|k| open.contains(k)))
        .map(|i| inst.coverage_penalty(i))
        .sum()
}

/// Depot and vehicle cost of a first-stage point.
pub fn fixed_cost(inst: &Instance, open: &BTreeSet<usize>, fleet: &Fleet) -> f64 {
    let depots: f64 = open
        .iter()
        .map(|&k| inst.config.depot_daily_cost[inst.depot_id(k)])
        .sum();
    let vehicles: u32 = fleet.values().sum();
    depots + inst.config.vehicle_daily_cost * vehicles as f64
}

/// The master MIP with handles to its variables.
#[derive(Clone, Debug)]
pub struct MasterModel {
    pub model: LinearModel,
    pub x: BTreeMap<usize, VarId>,
    pub y: BTreeMap<usize, VarId>,
    pub eta: Vec<VarId>,
    pub w: BTreeMap<usize, VarId>,
}

impl MasterModel {
    fn decode(&self, primal: &[f64]) -> (BTreeSet<usize>, Fleet) {
        let open = self
            .x
            .iter()
            .filter(|(_, v)| primal[v.0] > 0.5)
            .map(|(&k, _)| k)
            .collect();
        let fleet = self
            .y
            .iter()
            .map(|(&k, v)| (k, primal[v.0].round().max(0.0) as u32))
            .collect();
        (open, fleet)
    }
}

/// Builds the master over all cuts in `cuts`.
pub fn build_master(inst: &Instance, probabilities: &[f64], cuts: &[OptimalityCut]) -> Result<MasterModel> {
    if inst.depots.is_empty() {
        return Err(Error::input("no candidate depots"));
    }
    let cfg = &inst.config;
    let big_m = cfg.max_vehicles_per_depot;
    let mut m = LinearModel::new(ObjectiveSense::Minimize);
    let mut x = BTreeMap::new();
    let mut y = BTreeMap::new();
    for &k in &inst.depots {
        let id = inst.depot_id(k);
        x.insert(k, m.add_var(format!("x_{id}"), 0.0, 1.0, cfg.depot_daily_cost[id], true));
    }
    for &k in &inst.depots {
        let id = inst.depot_id(k);
        let v = m.add_var(format!("y_{id}"), 0.0, big_m as f64, cfg.vehicle_daily_cost, true);
        y.insert(k, v);
        m.add_row(format!("fleet_{id}"), vec![(v, 1.0), (x[&k], -(big_m as f64))], RowSense::Le, 0.0);
    }
    let eta: Vec<VarId> = probabilities
        .iter()
        .enumerate()
        .map(|(s, &p)| m.add_var(format!("eta_{s}"), 0.0, f64::INFINITY, p, false))
        .collect();
    // w is left continuous: for integral x its optimum min(1, covering
    // open depots) is integral anyway.
    let mut w = BTreeMap::new();
    for i in 0..inst.num_nodes() {
        let rho = inst.coverage_penalty(i);
        if rho <= 0.0 {
            continue;
        }
        m.objective_offset += rho;
        let reach = inst.covering_depots(i);
        if reach.is_empty() {
            continue;
        }
        let v = m.add_var(format!("w_{}", inst.graph.id(i)), 0.0, 1.0, -rho, false);
        let mut row = vec![(v, 1.0)];
        row.extend(reach.iter().map(|k| (x[k], -1.0)));
        m.add_row(format!("cover_{}", inst.graph.id(i)), row, RowSense::Le, 0.0);
        w.insert(i, v);
    }
    if let Some(h) = cfg.num_depots_to_open {
        m.add_row("open_count", x.values().map(|&v| (v, 1.0)).collect(), RowSense::Eq, h as f64);
    }

    // Step indicators u[k][s] = [y_k >= s], created on demand.
    let mut steps: HashMap<(usize, u32), VarId> = HashMap::new();
    for (c, cut) in cuts.iter().enumerate() {
        let e = *eta
            .get(cut.scenario)
            .ok_or_else(|| Error::input(format!("cut refers to unknown scenario {}", cut.scenario)))?;
        match &cut.kind {
            CutKind::Benders { pi_sum, lambda, open_set } => {
                let mut row = vec![(e, 1.0)];
                for (k, &l) in lambda {
                    if l != 0.0 {
                        if let Some(&v) = y.get(k) {
                            row.push((v, -l));
                        }
                    }
                }
                for (&k, &v) in &x {
                    let sign = if open_set.contains(&k) { -1.0 } else { 1.0 };
                    row.push((v, sign * cut.eta_star));
                }
                let rhs = pi_sum - cut.eta_star * open_set.len() as f64;
                m.add_row(format!("benders_{c}"), row, RowSense::Ge, rhs);
            }
            CutKind::Fleet { fleet } => {
                let mut row = vec![(e, 1.0)];
                for (&k, &yv) in &y {
                    let at = fleet.get(&k).copied().unwrap_or(0);
                    if at >= big_m {
                        continue;
                    }
                    let step = at + 1;
                    let u = *steps.entry((k, step)).or_insert_with(|| {
                        let u = m.add_var(format!("u_{}_{step}", inst.depot_id(k)), 0.0, 1.0, 0.0, true);
                        let id = inst.depot_id(k);
                        let slack = (big_m - at) as f64;
                        // u = 1 exactly when y_k >= step.
                        m.add_row(format!("step_hi_{id}_{step}"), vec![(yv, 1.0), (u, -slack)], RowSense::Le, at as f64);
                        m.add_row(format!("step_lo_{id}_{step}"), vec![(yv, 1.0), (u, -(step as f64))], RowSense::Ge, 0.0);
                        u
                    });
                    row.push((u, cut.eta_star));
                }
                m.add_row(format!("fleet_cut_{c}"), row, RowSense::Ge, cut.eta_star);
            }
        }
    }
    Ok(MasterModel { model: m, x, y, eta, w })
}

/// Seeds one pool per scenario: the zero-dual pricing route of every depot
/// plus every feasible single-client round trip.
pub fn warm_start(
    inst: &Instance,
    scenarios: &[ResolvedDemand],
    time_limit: Option<Duration>,
) -> Result<Vec<RoutePool>> {
    scenarios
        .par_iter()
        .map(|dem| {
            let mut pool = RoutePool::new(dem.id.clone());
            if dem.is_empty() {
                return Ok(pool);
            }
            let zero = DualPrices::zero(dem.len());
            let opts = PricingOptions {
                time_limit,
                ..Default::default()
            };
            for &k in &inst.depots {
                if let Some(best) = pricing::price_route(inst, k, dem, &zero, &opts)?.best {
                    pool.insert(best.route);
                }
                for &c in &dem.clients {
                    if c == k {
                        continue;
                    }
                    let r = inst.make_route(k, vec![k, c, k], dem)?;
                    if inst.is_feasible(&r, dem) {
                        pool.insert(r);
                    }
                }
            }
            Ok(pool)
        })
        .collect()
}

/// Runs the L-shaped method from scratch.
pub fn run_lshaped(inst: &Instance, scenarios: &[DemandRealization], opts: &LShapedOptions) -> Result<LShapedResult> {
    run_lshaped_from(inst, scenarios, opts, None)
}

struct Evaluation {
    result: SubproblemResult,
    /// Column generation ran (as opposed to a pool-only solve).
    priced: bool,
    elapsed: Duration,
}

/// Runs the L-shaped method, optionally resuming from `resume`.
pub fn run_lshaped_from(
    inst: &Instance,
    scenarios: &[DemandRealization],
    opts: &LShapedOptions,
    resume: Option<Checkpoint>,
) -> Result<LShapedResult> {
    let started = Instant::now();
    if !(opts.eps > 0.0) {
        return Err(Error::input("eps must be positive"));
    }
    let probs = scenario_probabilities(scenarios)?;
    let scen: Vec<ResolvedDemand> = scenarios.iter().map(|s| inst.resolve(s)).collect::<Result<_>>()?;
    let n = scen.len();
    let mut timings = PhaseTimings::default();

    let (mut state, mut pools) = match resume {
        Some(cp) => restore(inst, &scen, cp)?,
        None => {
            let t0 = Instant::now();
            let mut pools = if opts.warm_start {
                warm_start(inst, &scen, opts.pricing_time_limit)?
            } else {
                scen.iter().map(|d| RoutePool::new(d.id.clone())).collect()
            };
            if opts.recycling && opts.warm_start {
                cross_recycle(inst, &scen, &mut pools, None)?;
            }
            timings.warm_start = t0.elapsed().as_secs_f64();
            (MasterState::new(n), pools)
        }
    };

    let mut trace = Vec::new();
    let mut residuals = Vec::new();
    let mut incumbent_results: Option<Vec<SubproblemResult>> = None;
    let mut status = LShapedStatus::IterationLimit;
    let cg_base = CgOptions {
        complete_depots: inst.depots.clone(),
        pricing_time_limit: opts.pricing_time_limit.or(opts.cg.pricing_time_limit),
        ..opts.cg.clone()
    };

    for _ in 0..opts.max_iterations {
        if opts.time_limit.is_some_and(|l| started.elapsed() >= l) {
            status = LShapedStatus::TimeLimit;
            break;
        }
        state.iteration += 1;
        let t = state.iteration;

        let t0 = Instant::now();
        let master = build_master(inst, &probs, &state.cuts)?;
        let sol = lp::solve_mip(
            &master.model,
            &MipOptions {
                node_limit: opts.master_node_limit,
                ..Default::default()
            },
        )?;
        timings.facility_location += t0.elapsed().as_secs_f64();
        if !sol.has_solution() {
            return Err(Error::Numerical(format!("master ended with status {:?}", sol.status)));
        }
        let (open, fleet) = master.decode(&sol.primal);
        let master_value = sol.objective;
        let master_bound = if sol.status == Status::Optimal { master_value } else { sol.best_bound };
        let all_exact = state.cuts.iter().all(|c| c.exact);
        if all_exact {
            state.lower_bound = state.lower_bound.max(master_bound);
        }

        let quick = CgOptions {
            mode: CgMode::PoolOnly,
            ..cg_base.clone()
        };
        let active: Fleet = fleet.iter().filter(|(_, &y)| y > 0).map(|(&k, &y)| (k, y)).collect();

        let t0 = Instant::now();
        let evals: Vec<Result<Evaluation>> = pools
            .par_iter_mut()
            .zip(scen.par_iter())
            .enumerate()
            .map(|(s, (pool, dem))| {
                let s0 = Instant::now();
                let mut fresh = RoutePool::new(dem.id.clone());
                let pool = if opts.route_pooling { pool } else { &mut fresh };
                if opts.activation {
                    let eta_hat = sol.primal[master.eta[s].0];
                    let r = solve_mdvrp(inst, &active, dem, pool, &quick)?;
                    if r.value <= eta_hat + 1e-6 {
                        return Ok(Evaluation {
                            result: r,
                            priced: false,
                            elapsed: s0.elapsed(),
                        });
                    }
                }
                let result = solve_mdvrp(inst, &active, dem, pool, &cg_base)?;
                Ok(Evaluation {
                    result,
                    priced: true,
                    elapsed: s0.elapsed(),
                })
            })
            .collect();
        let wall = t0.elapsed().as_secs_f64();
        let evals: Vec<Evaluation> = evals.into_iter().collect::<Result<_>>()?;
        let cpu: f64 = evals.iter().map(|e| e.elapsed.as_secs_f64()).sum();
        let pricing: f64 = evals.iter().map(|e| e.result.pricing_time.as_secs_f64()).sum();
        let share = if cpu > 0.0 { (pricing / cpu).min(1.0) } else { 0.0 };
        timings.route_generators += wall * share;
        timings.set_covering += wall * (1.0 - share);

        let mut cuts_added = 0;
        let mut columns_added = 0;
        for (s, ev) in evals.iter().enumerate() {
            let r = &ev.result;
            residuals.extend_from_slice(&r.duality_residuals);
            columns_added += r.columns_added;
            let eta_hat = sol.primal[master.eta[s].0];
            if !ev.priced || eta_hat >= r.value - 1e-6 {
                continue;
            }
            let exact = r.exact();
            let lambda: BTreeMap<usize, f64> = inst.depots.iter().map(|&k| (k, r.duals.lambda_of(k))).collect();
            state.cuts.push(OptimalityCut {
                scenario: s,
                iteration: t,
                eta_star: r.value,
                exact,
                kind: CutKind::Benders {
                    pi_sum: r.duals.pi_sum(),
                    lambda,
                    open_set: open.clone(),
                },
            });
            state.cuts.push(OptimalityCut {
                scenario: s,
                iteration: t,
                eta_star: r.value,
                exact,
                kind: CutKind::Fleet {
                    fleet: fleet.clone(),
                },
            });
            cuts_added += 2;
        }

        let expected: f64 = evals.iter().zip(&probs).map(|(e, p)| p * e.result.value).sum();
        let candidate = fixed_cost(inst, &open, &fleet) + coverage_cost(inst, &open) + expected;
        let improved = candidate < state.upper_bound - 1e-9 * candidate.abs().max(1.0);
        if improved {
            state.upper_bound = candidate;
            state.incumbent_open = open.clone();
            state.incumbent_fleet = fleet.clone();
            state.incumbent_values = evals.iter().map(|e| e.result.value).collect();
        }

        let route_gen = evals.iter().any(|e| e.priced);
        if opts.recycling && opts.route_pooling && route_gen && n > 1 {
            let fresh: Vec<Vec<crate::model::Route>> =
                evals.iter().map(|e| e.result.selected_routes.clone()).collect();
            cross_recycle(inst, &scen, &mut pools, Some(&fresh))?;
        }
        if improved {
            incumbent_results = Some(evals.into_iter().map(|e| e.result).collect());
        }

        let heuristic_lb = if all_exact { state.lower_bound } else { state.lower_bound.max(master_bound) };
        let closed = state.upper_bound - heuristic_lb <= opts.eps * state.upper_bound.abs() + 1e-9;
        let stalled = cuts_added == 0;
        if (closed || stalled) && !all_exact {
            // The inexact cuts have done their job; continue on proven
            // ground only.
            state.cuts.retain(|c| c.exact);
        }

        trace.push(IterationRecord {
            iteration: t,
            lower_bound: state.lower_bound,
            upper_bound: state.upper_bound,
            master_value,
            route_generation: route_gen,
            cuts_added,
            columns_added,
            seconds: started.elapsed().as_secs_f64(),
        });
        log::debug!(
            "iteration {t}: lb {:.4} ub {:.4} master {:.4} cuts +{cuts_added} columns +{columns_added}{}",
            state.lower_bound,
            state.upper_bound,
            master_value,
            if route_gen { "" } else { " (pools only)" }
        );

        let proven = state.upper_bound - state.lower_bound <= opts.eps * state.upper_bound.abs() + 1e-9;
        if all_exact && proven {
            status = LShapedStatus::Converged;
            break;
        }
    }

    let subproblems = match incumbent_results {
        Some(r) if opts.route_pooling => r,
        // Re-solve at the incumbent: either nothing was evaluated in this
        // call or the evaluations used throwaway pools.
        other => {
            let active: Fleet = state
                .incumbent_fleet
                .iter()
                .filter(|(_, &y)| y > 0)
                .map(|(&k, &y)| (k, y))
                .collect();
            match other {
                Some(r) => r,
                None => pools
                    .par_iter_mut()
                    .zip(scen.par_iter())
                    .map(|(pool, dem)| solve_mdvrp(inst, &active, dem, pool, &cg_base))
                    .collect::<Result<_>>()?,
            }
        }
    };
    let solution = first_stage_solution(inst, &state);
    Ok(LShapedResult {
        solution,
        status,
        state,
        trace,
        subproblems,
        probabilities: probs,
        pools,
        timings,
        duality_residuals: residuals,
    })
}

fn first_stage_solution(inst: &Instance, state: &MasterState) -> FirstStageSolution {
    let open = inst
        .depots
        .iter()
        .map(|&k| (inst.depot_id(k).clone(), state.incumbent_open.contains(&k)))
        .collect();
    let fleet = inst
        .depots
        .iter()
        .map(|&k| (inst.depot_id(k).clone(), state.incumbent_fleet.get(&k).copied().unwrap_or(0)))
        .collect();
    let covered = (0..inst.num_nodes())
        .map(|i| {
            let hit = inst.covering_depots(i).iter().any(|k| state.incumbent_open.contains(k));
            (inst.graph.id(i).clone(), hit)
        })
        .collect();
    FirstStageSolution {
        open,
        fleet,
        covered,
        objective_estimate: state.upper_bound,
    }
}

/// Recycles routes of each scenario into every other scenario's pool:
/// `fresh[s]` when given, the whole pool of `s` otherwise.
fn cross_recycle(
    inst: &Instance,
    scen: &[ResolvedDemand],
    pools: &mut [RoutePool],
    fresh: Option<&[Vec<crate::model::Route>]>,
) -> Result<()> {
    let sources: Vec<RoutePool> = match fresh {
        Some(f) => f
            .iter()
            .zip(scen)
            .map(|(routes, d)| {
                let mut p = RoutePool::new(d.id.clone());
                for r in routes {
                    p.insert(r.clone());
                }
                p
            })
            .collect(),
        None => pools.to_vec(),
    };
    pools
        .par_iter_mut()
        .enumerate()
        .try_for_each(|(t, pool)| -> Result<()> {
            for (s, src) in sources.iter().enumerate() {
                if s != t && !scen[t].is_empty() {
                    recycle::recycle_into(inst, src, &scen[t], None, pool)?;
                }
            }
            Ok(())
        })
}

fn restore(inst: &Instance, scen: &[ResolvedDemand], cp: Checkpoint) -> Result<(MasterState, Vec<RoutePool>)> {
    let ids: Vec<&String> = scen.iter().map(|d| &d.id).collect();
    if cp.scenario_ids.iter().collect::<Vec<_>>() != ids || cp.pools.len() != scen.len() {
        return Err(Error::input("checkpoint was written for a different scenario set"));
    }
    let mut pools = Vec::with_capacity(scen.len());
    for (dem, routes) in scen.iter().zip(cp.pools) {
        let mut pool = RoutePool::new(dem.id.clone());
        for visits in routes {
            let depot = *visits
                .first()
                .ok_or_else(|| Error::input("checkpoint holds an empty route"))?;
            if depot >= inst.num_nodes() || visits.iter().any(|&v| v >= inst.num_nodes()) {
                return Err(Error::input("checkpoint route refers to an unknown node"));
            }
            let r = inst.make_route(depot, visits, dem)?;
            if !inst.is_feasible(&r, dem) {
                return Err(Error::input(format!("checkpoint route infeasible for `{}`", dem.id)));
            }
            pool.insert(r);
        }
        pools.push(pool);
    }
    Ok((cp.state, pools))
}
