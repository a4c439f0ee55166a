//! Multi-depot routing for fixed depots and fleet: column generation on the
//! set-covering relaxation, then an integer pass over the generated routes.
//!
//! Every active client has an artificial "unserved" column priced at the
//! instance's unserved penalty, so the restricted master is always feasible
//! and shortfalls show up as unserved clients instead of failures.
//!
//! Price-and-branch alone can miss the integer optimum. After column
//! generation converges, every route whose reduced cost is below the gap
//! between the integer pass and the relaxation is enumerated and the integer
//! pass is repeated; no route outside that set can appear in a better
//! integer solution.

use std::collections::{BTreeMap, HashSet};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Instance, ResolvedDemand};
use crate::lp::{self, LinearModel, MipOptions, ObjectiveSense, RowSense, Status, VarId};
use crate::model::Route;
use crate::pricing::{self, DualPrices, PricingOptions};

/// Routes generated for one demand realization, grouped by depot.
#[derive(Clone, Debug, Default)]
pub struct RoutePool {
    pub realization_id: String,
    by_depot: BTreeMap<usize, Vec<Route>>,
    keys: HashSet<(usize, Vec<usize>)>,
}

impl RoutePool {
    pub fn new(realization_id: impl Into<String>) -> Self {
        RoutePool {
            realization_id: realization_id.into(),
            ..Default::default()
        }
    }

    /// Adds `route` unless an identical one is present or it has no clients.
    pub fn insert(&mut self, route: Route) -> bool {
        if route.is_empty() || !self.keys.insert(route.key()) {
            return false;
        }
        self.by_depot.entry(route.depot).or_default().push(route);
        true
    }

    pub fn contains(&self, route: &Route) -> bool {
        self.keys.contains(&route.key())
    }

    pub fn routes_of(&self, depot: usize) -> &[Route] {
        self.by_depot.get(&depot).map_or(&[], |v| v.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Route> {
        self.by_depot.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn depots(&self) -> impl Iterator<Item = usize> + '_ {
        self.by_depot.keys().copied()
    }
}

/// Vehicles available per depot (graph index). Depots with zero vehicles
/// may be omitted.
pub type Fleet = BTreeMap<usize, u32>;

#[derive(Clone, Debug)]
pub struct RrmpSolution {
    pub lp_value: f64,
    pub duals: DualPrices,
    /// `(depot, index into pool.routes_of(depot), value)` for positive columns.
    pub selection: Vec<(usize, usize, f64)>,
    /// Artificial (unserved) level per client position.
    pub unserved: Vec<f64>,
    /// `|sum pi + sum lambda * fleet - lp_value|`.
    pub duality_residual: f64,
}

struct Master {
    model: LinearModel,
    cols: Vec<(usize, usize, VarId)>,
    artificial: Vec<VarId>,
    fleet_rows: Vec<(usize, usize)>,
}

fn build_master(inst: &Instance, pool: &RoutePool, demand: &ResolvedDemand, fleet: &Fleet, integer: bool) -> Master {
    let mut model = LinearModel::new(ObjectiveSense::Minimize);
    let n = demand.len();
    let mut cover: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); n];
    let mut cols = Vec::new();
    let mut fleet_rows = Vec::new();
    let mut fleet_coefs = Vec::new();
    for (&k, &y) in fleet {
        if y == 0 {
            continue;
        }
        let mut coefs = Vec::new();
        for (idx, r) in pool.routes_of(k).iter().enumerate() {
            let ub = if integer { 1.0 } else { f64::INFINITY };
            let v = model.add_var(format!("z_{k}_{idx}"), 0.0, ub, r.cost, integer);
            for c in r.clients() {
                if let Some(p) = demand.position(c) {
                    cover[p].push((v, 1.0));
                }
            }
            coefs.push((v, 1.0));
            cols.push((k, idx, v));
        }
        fleet_coefs.push((k, y, coefs));
    }
    let ub = if integer { 1.0 } else { f64::INFINITY };
    let artificial: Vec<VarId> = (0..n)
        .map(|p| model.add_var(format!("u_{p}"), 0.0, ub, inst.unserved_penalty, integer))
        .collect();
    for (p, mut row) in cover.into_iter().enumerate() {
        row.push((artificial[p], 1.0));
        model.add_row(format!("cover_{p}"), row, RowSense::Ge, 1.0);
    }
    for (k, y, coefs) in fleet_coefs {
        let row = model.add_row(format!("fleet_{k}"), coefs, RowSense::Le, y as f64);
        fleet_rows.push((k, row));
    }
    Master {
        model,
        cols,
        artificial,
        fleet_rows,
    }
}

/// Solves the continuous relaxation of the set-covering master over `pool`.
pub fn solve_rrmp(inst: &Instance, pool: &RoutePool, demand: &ResolvedDemand, fleet: &Fleet) -> Result<RrmpSolution> {
    let m = build_master(inst, pool, demand, fleet, false);
    let r = lp::solve_lp(&m.model)?;
    if r.status != Status::Optimal {
        return Err(Error::Numerical(format!(
            "restricted master for `{}` ended with status {:?}",
            demand.id, r.status
        )));
    }
    let n = demand.len();
    // Clamp round-off so the sign conventions hold exactly.
    let pi: Vec<f64> = r.duals[..n].iter().map(|&v| v.max(0.0)).collect();
    let mut lambda = BTreeMap::new();
    let mut fleet_term = 0.0;
    for &(k, row) in &m.fleet_rows {
        let l = r.duals[row].min(0.0);
        lambda.insert(k, l);
        fleet_term += l * fleet[&k] as f64;
    }
    let pi_sum: f64 = pi.iter().sum();
    let selection = m
        .cols
        .iter()
        .filter(|c| r.primal[c.2 .0] > 1e-9)
        .map(|&(k, idx, v)| (k, idx, r.primal[v.0]))
        .collect();
    Ok(RrmpSolution {
        lp_value: r.objective,
        duality_residual: (pi_sum + fleet_term - r.objective).abs(),
        duals: DualPrices { pi, lambda },
        selection,
        unserved: m.artificial.iter().map(|v| r.primal[v.0]).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CgMode {
    /// Price until no negative reduced-cost route remains.
    Full,
    /// One pricing round, then the integer pass.
    SingleIteration,
    /// No pricing: the integer pass over the existing pool.
    PoolOnly,
}

#[derive(Clone, Debug)]
pub struct CgOptions {
    pub mode: CgMode,
    pub pricing_time_limit: Option<Duration>,
    /// Improving routes accepted per depot and pricing round.
    pub columns_per_depot: usize,
    /// Close the integrality gap by enumerating low reduced-cost routes.
    pub close_gap: bool,
    pub enumeration_cap: usize,
    /// Depots without a fleet row whose `lambda` should be completed so
    /// that the duals price every route of every listed depot non-negatively.
    pub complete_depots: Vec<usize>,
    pub mip_node_limit: usize,
    /// Ends each pricing search after this many improving routes. A round
    /// that adds nothing new is repeated with exhaustive pricing, so the
    /// final round still proves optimality. Ignored for single iterations.
    pub pricing_early_stop: Option<usize>,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            mode: CgMode::Full,
            pricing_time_limit: None,
            columns_per_depot: 10,
            close_gap: true,
            enumeration_cap: 50_000,
            complete_depots: Vec::new(),
            mip_node_limit: 200_000,
            pricing_early_stop: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SubproblemResult {
    /// Integer routing cost plus unserved penalties.
    pub value: f64,
    pub lp_value: f64,
    pub duals: DualPrices,
    pub selected_routes: Vec<Route>,
    /// Graph indices of clients left unserved.
    pub unserved: Vec<usize>,
    /// For each client position, the index into `selected_routes` of the
    /// cheapest selected route visiting it.
    pub attribution: Vec<Option<usize>>,
    pub iterations: usize,
    pub columns_added: usize,
    /// Pricing proved the relaxation optimal.
    pub lp_optimal: bool,
    /// `value` is the integer optimum over all routes, not just the pool.
    pub integer_exact: bool,
    /// Duals are feasible for every route of every fleet or completed depot.
    pub duals_complete: bool,
    pub duality_residuals: Vec<f64>,
    /// Relaxation value after each restricted-master solve.
    pub lp_trace: Vec<f64>,
    pub routing_cost: f64,
    pub pricing_time: Duration,
}

impl SubproblemResult {
    pub fn empty(n_clients: usize) -> Self {
        SubproblemResult {
            value: 0.0,
            lp_value: 0.0,
            duals: DualPrices::zero(n_clients),
            selected_routes: Vec::new(),
            unserved: Vec::new(),
            attribution: vec![None; n_clients],
            iterations: 0,
            columns_added: 0,
            lp_optimal: true,
            integer_exact: true,
            duals_complete: true,
            duality_residuals: Vec::new(),
            lp_trace: Vec::new(),
            routing_cost: 0.0,
            pricing_time: Duration::ZERO,
        }
    }

    /// True when both the value and the duals are exact, so cuts built from
    /// this result are valid everywhere.
    pub fn exact(&self) -> bool {
        self.lp_optimal && self.integer_exact && self.duals_complete
    }

    pub fn vehicles_used(&self) -> usize {
        self.selected_routes.len()
    }

    pub fn distance(&self, inst: &Instance) -> f64 {
        self.selected_routes.iter().map(|r| r.distance(&inst.graph)).sum()
    }
}

/// Solves the routing subproblem for `fleet` and `demand`, growing `pool`.
pub fn solve_mdvrp(
    inst: &Instance,
    fleet: &Fleet,
    demand: &ResolvedDemand,
    pool: &mut RoutePool,
    opts: &CgOptions,
) -> Result<SubproblemResult> {
    if demand.is_empty() {
        return Ok(SubproblemResult::empty(0));
    }
    let active: Vec<usize> = fleet.iter().filter(|(_, &y)| y > 0).map(|(&k, _)| k).collect();
    let mut residuals = Vec::new();
    let mut iterations = 0;
    let mut added = 0;
    let lp_optimal;
    let mut pricing_time = Duration::ZERO;
    let exhaustive = PricingOptions {
        time_limit: opts.pricing_time_limit,
        cutoff: Some(-1e-6),
        max_columns: opts.columns_per_depot.max(1),
        ..Default::default()
    };
    let early = PricingOptions {
        stop_after: opts.pricing_early_stop.filter(|_| opts.mode == CgMode::Full),
        ..exhaustive.clone()
    };
    let mut popts = &early;

    let mut rrmp = solve_rrmp(inst, pool, demand, fleet)?;
    residuals.push(rrmp.duality_residual);
    let mut lp_trace = vec![rrmp.lp_value];
    if opts.mode == CgMode::PoolOnly {
        lp_optimal = false;
    } else {
        loop {
            iterations += 1;
            let started = Instant::now();
            let priced: Vec<Result<pricing::PricingOutcome>> = active
                .par_iter()
                .map(|&k| pricing::price_route(inst, k, demand, &rrmp.duals, popts))
                .collect();
            pricing_time += started.elapsed();
            let mut new_cols = 0;
            let mut all_optimal = true;
            let mut any_stopped = false;
            for out in priced {
                let out = out?;
                all_optimal &= out.optimal;
                any_stopped |= out.stopped_early;
                for col in out.columns {
                    if col.reduced_cost < -1e-6 && pool.insert(col.route) {
                        new_cols += 1;
                    }
                }
            }
            added += new_cols;
            if new_cols == 0 && any_stopped {
                popts = &exhaustive;
                continue;
            }
            popts = &early;
            if new_cols == 0 {
                lp_optimal = all_optimal;
                break;
            }
            rrmp = solve_rrmp(inst, pool, demand, fleet)?;
            residuals.push(rrmp.duality_residual);
            lp_trace.push(rrmp.lp_value);
            if opts.mode == CgMode::SingleIteration {
                lp_optimal = false;
                break;
            }
        }
    }

    let (mut value, mut chosen, mut unserved_mask, mut mip_ok) = solve_integer(inst, pool, demand, fleet, opts)?;
    let mut integer_exact = lp_optimal;
    if lp_optimal && opts.close_gap && value - rrmp.lp_value > 1e-7 {
        let gap = value - rrmp.lp_value;
        let started = Instant::now();
        let enumerated: Vec<Result<pricing::Enumeration>> = active
            .par_iter()
            .map(|&k| {
                pricing::enumerate_routes(
                    inst,
                    k,
                    demand,
                    &rrmp.duals,
                    gap + 1e-7,
                    opts.enumeration_cap,
                    opts.pricing_time_limit,
                )
            })
            .collect();
        pricing_time += started.elapsed();
        let mut grew = false;
        for e in enumerated {
            let e = e?;
            integer_exact &= e.complete;
            for r in e.routes {
                grew |= pool.insert(r.route);
            }
        }
        if grew {
            (value, chosen, unserved_mask, mip_ok) = solve_integer(inst, pool, demand, fleet, opts)?;
        }
    }
    integer_exact &= mip_ok;

    let mut duals = rrmp.duals.clone();
    let mut duals_complete = lp_optimal;
    if opts.mode != CgMode::PoolOnly {
        let missing: Vec<usize> = opts
            .complete_depots
            .iter()
            .copied()
            .filter(|k| !duals.lambda.contains_key(k))
            .collect();
        let probe = DualPrices {
            pi: duals.pi.clone(),
            lambda: BTreeMap::new(),
        };
        let popts0 = PricingOptions {
            time_limit: opts.pricing_time_limit,
            cutoff: Some(0.0),
            ..Default::default()
        };
        let started = Instant::now();
        let completed: Vec<Result<(usize, pricing::PricingOutcome)>> = missing
            .par_iter()
            .map(|&k| pricing::price_route(inst, k, demand, &probe, &popts0).map(|o| (k, o)))
            .collect();
        pricing_time += started.elapsed();
        for c in completed {
            let (k, out) = c?;
            duals_complete &= out.optimal;
            let l = out.best.map_or(0.0, |b| b.reduced_cost.min(0.0));
            duals.lambda.insert(k, l);
        }
    }

    let selected = chosen;
    let attribution = attribute(&selected, demand);
    let unserved = demand
        .clients
        .iter()
        .zip(&unserved_mask)
        .filter(|(_, &u)| u)
        .map(|(&c, _)| c)
        .collect();
    let routing_cost = selected.iter().map(|r| r.cost).sum();
    Ok(SubproblemResult {
        value,
        lp_value: rrmp.lp_value,
        duals,
        selected_routes: selected,
        unserved,
        attribution,
        iterations,
        columns_added: added,
        lp_optimal,
        integer_exact,
        duals_complete,
        duality_residuals: residuals,
        lp_trace,
        routing_cost,
        pricing_time,
    })
}

fn solve_integer(
    inst: &Instance,
    pool: &RoutePool,
    demand: &ResolvedDemand,
    fleet: &Fleet,
    opts: &CgOptions,
) -> Result<(f64, Vec<Route>, Vec<bool>, bool)> {
    let m = build_master(inst, pool, demand, fleet, true);
    let r = lp::solve_mip(
        &m.model,
        &MipOptions {
            gap_tol: 1e-9,
            node_limit: opts.mip_node_limit,
            cutoff: None,
        },
    )?;
    if !r.has_solution() {
        return Err(Error::Numerical(format!(
            "integer master for `{}` ended with status {:?}",
            demand.id, r.status
        )));
    }
    let chosen: Vec<Route> = m
        .cols
        .iter()
        .filter(|c| r.primal[c.2 .0] > 0.5)
        .map(|&(k, idx, _)| pool.routes_of(k)[idx].clone())
        .collect();
    let mut covered = vec![false; demand.len()];
    for route in &chosen {
        for c in route.clients() {
            if let Some(p) = demand.position(c) {
                covered[p] = true;
            }
        }
    }
    let unserved: Vec<bool> = covered.iter().map(|c| !c).collect();
    let value = chosen.iter().map(|r| r.cost).sum::<f64>()
        + unserved.iter().filter(|&&u| u).count() as f64 * inst.unserved_penalty;
    Ok((value, chosen, unserved, r.status == Status::Optimal))
}

/// Assigns each client to the cheapest selected route visiting it (ties to
/// the lower route index).
pub fn attribute(routes: &[Route], demand: &ResolvedDemand) -> Vec<Option<usize>> {
    let mut out: Vec<Option<usize>> = vec![None; demand.len()];
    for (ri, r) in routes.iter().enumerate() {
        for c in r.clients() {
            if let Some(p) = demand.position(c) {
                match out[p] {
                    Some(prev) if routes[prev].cost <= r.cost => {}
                    _ => out[p] = Some(ri),
                }
            }
        }
    }
    out
}
