//! Exact pricing: the minimum reduced-cost route of one depot, found by a
//! depth-first "pulse" search over the auxiliary graph with bound,
//! feasibility and elementarity pruning.
//!
//! The reduced cost of a route `r` from depot `k` is
//! `cost(r) - lambda_k - sum of pi_i over the clients visited by r`.
//! Interior depot visits (replenishments) are allowed up to the
//! auxiliary graph's replenishment count; a route may not start or end with a
//! replenishment, nor replenish twice in a row.
//!
//! The bounding table holds, for every node, time cell and number of client
//! visits still allowed, the cost of the cheapest completion to the end depot
//! when elementarity, capacity and window openings are ignored. Because that
//! value can only grow with the departure time, evaluating it at the start of
//! each time cell gives a valid lower bound for every time in the cell.

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use crate::error::Result;
use crate::instance::{Instance, ResolvedDemand};
use crate::model::Route;

/// Dual prices of the restricted master: one `pi` per active client
/// (aligned with [`ResolvedDemand::clients`]) and one `lambda` per depot
/// with a fleet row. Covering duals are non-negative, fleet duals
/// non-positive.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DualPrices {
    pub pi: Vec<f64>,
    pub lambda: BTreeMap<usize, f64>,
}

impl DualPrices {
    pub fn zero(num_clients: usize) -> Self {
        DualPrices {
            pi: vec![0.0; num_clients],
            lambda: BTreeMap::new(),
        }
    }

    pub fn lambda_of(&self, depot: usize) -> f64 {
        self.lambda.get(&depot).copied().unwrap_or(0.0)
    }

    pub fn pi_sum(&self) -> f64 {
        self.pi.iter().sum()
    }
}

/// Reduced cost of `route` under `duals`.
pub fn reduced_cost(route: &Route, demand: &ResolvedDemand, duals: &DualPrices) -> f64 {
    let pis: f64 = route
        .clients()
        .map(|v| demand.position(v).map_or(0.0, |p| duals.pi[p]))
        .sum();
    route.cost - duals.lambda_of(route.depot) - pis
}

#[derive(Clone, Debug)]
pub struct PricingOptions {
    /// Wall-clock budget; when exceeded the best route found so far is
    /// returned with `optimal = false`.
    pub time_limit: Option<Duration>,
    /// Number of cells of the bounding time grid.
    pub grid_cells: usize,
    /// Disables bound pruning (feasibility pruning stays on).
    pub use_bounds: bool,
    /// When set, routes with reduced cost at or above this value are of no
    /// interest and the search only proves their absence.
    pub cutoff: Option<f64>,
    /// Maximum number of negative reduced-cost routes reported in
    /// `columns`, most negative first.
    pub max_columns: usize,
    /// Skips partial paths dominated by an explored path over the same
    /// clients.
    pub use_dominance: bool,
    /// Ends the search once this many improving routes (below the cutoff)
    /// have been found. The outcome is then not a proof of optimality.
    pub stop_after: Option<usize>,
}

impl Default for PricingOptions {
    fn default() -> Self {
        PricingOptions {
            time_limit: None,
            grid_cells: 20,
            use_bounds: true,
            cutoff: None,
            max_columns: 1,
            use_dominance: true,
            stop_after: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PricedRoute {
    pub route: Route,
    pub reduced_cost: f64,
}

#[derive(Clone, Debug)]
pub struct PricingOutcome {
    /// Minimum reduced-cost route, `None` when no feasible route exists
    /// (or, under a cutoff, none below it).
    pub best: Option<PricedRoute>,
    /// Distinct routes found during the search, most negative first,
    /// including `best`.
    pub columns: Vec<PricedRoute>,
    pub optimal: bool,
    /// The search ended early under `stop_after`.
    pub stopped_early: bool,
    pub nodes: u64,
}

/// Lower bounds on completion reduced cost, indexed by
/// `[visits left][slot * cells + cell]`; slot `n` is the depot.
#[derive(Clone, Debug)]
pub struct PulseBounds {
    pub delta: f64,
    pub origin: f64,
    pub cells: usize,
    table: Vec<Vec<f64>>,
}

impl PulseBounds {
    pub fn cell(&self, t: f64) -> usize {
        if self.cells == 1 || !(t > self.origin) {
            return 0;
        }
        (((t - self.origin) / self.delta).floor() as usize).min(self.cells - 1)
    }

    pub fn cell_start(&self, c: usize) -> f64 {
        if c == 0 {
            return self.origin;
        }
        self.origin + c as f64 * self.delta
    }

    /// Bound for client position `slot` (or the depot, `slot == n`) at time
    /// `t` with at most `visits_left` further client visits.
    pub fn get(&self, visits_left: usize, slot: usize, t: f64) -> f64 {
        let k = visits_left.min(self.table.len() - 1);
        self.table[k][slot * self.cells + self.cell(t)]
    }
}

/// Index-resolved data for one `(depot, realization)` pricing problem.
struct Problem<'a> {
    inst: &'a Instance,
    depot: usize,
    demand: &'a ResolvedDemand,
    /// Client positions eligible for this depot (all but a client at the
    /// depot node itself, which replenishment visits would shadow).
    eligible: Vec<bool>,
    n: usize,
    replenishments: usize,
}

impl<'a> Problem<'a> {
    fn new(inst: &'a Instance, depot: usize, demand: &'a ResolvedDemand) -> Self {
        let n = demand.len();
        let eligible: Vec<bool> = demand.clients.iter().map(|&c| c != depot).collect();
        let total: f64 = (0..n).filter(|&p| eligible[p]).map(|p| demand.sizes[p]).sum();
        let replenishments = if total > 0.0 {
            crate::graph::replenishment_count(total, inst.capacity())
        } else {
            0
        };
        Problem {
            inst,
            depot,
            demand,
            eligible,
            n,
            replenishments,
        }
    }

    fn node(&self, slot: usize) -> usize {
        if slot == self.n {
            self.depot
        } else {
            self.demand.clients[slot]
        }
    }

    fn cost(&self, a: usize, b: usize) -> f64 {
        self.inst.graph.cost(self.node(a), self.node(b))
    }

    fn time(&self, a: usize, b: usize) -> f64 {
        self.inst.graph.time(self.node(a), self.node(b))
    }

    fn close(&self, slot: usize) -> f64 {
        self.inst.window(self.node(slot)).close
    }
}

/// Builds the bounding table for `depot` under `duals` with time step
/// `delta` (hours). A non-positive or non-finite `delta` yields one cell.
pub fn compute_bounds(
    inst: &Instance,
    depot: usize,
    demand: &ResolvedDemand,
    duals: &DualPrices,
    delta: f64,
) -> PulseBounds {
    let prob = Problem::new(inst, depot, demand);
    let horizon = horizon_of(&prob);
    let origin = inst.departure();
    let cells = if delta > 0.0 && delta.is_finite() && horizon.is_finite() && horizon > origin {
        (((horizon - origin) / delta).ceil() as usize).clamp(1, 10_000)
    } else {
        1
    };
    build_bounds(&prob, duals, origin, if cells == 1 { f64::INFINITY } else { delta }, cells)
}

fn horizon_of(prob: &Problem) -> f64 {
    let mut h = f64::NEG_INFINITY;
    for slot in 0..=prob.n {
        if slot < prob.n && !prob.eligible[slot] {
            continue;
        }
        let c = prob.close(slot);
        if c.is_finite() {
            h = h.max(c);
        }
    }
    if h == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        h
    }
}

fn build_bounds(prob: &Problem, duals: &DualPrices, origin: f64, delta: f64, cells: usize) -> PulseBounds {
    let n = prob.n;
    let slots = n + 1;
    let mut pb = PulseBounds {
        delta,
        origin,
        cells,
        table: Vec::with_capacity(n + 1),
    };
    let dslot = n;
    let depot_close = prob.close(dslot);
    let eligible: Vec<usize> = (0..n).filter(|&p| prob.eligible[p]).collect();

    // Level 0: only the return leg remains.
    let mut level0 = vec![f64::INFINITY; slots * cells];
    for &v in &eligible {
        for c in 0..cells {
            let a = pb.cell_start(c);
            if a + prob.time(v, dslot) <= depot_close + 1e-9 {
                level0[v * cells + c] = prob.cost(v, dslot);
            }
        }
    }
    pb.table.push(level0);
    for k in 1..=n {
        let mut level = vec![f64::INFINITY; slots * cells];
        {
            let prev = &pb.table[k - 1];
            let lookup = |u: usize, t: f64| prev[u * cells + pb.cell(t)];
            for c in 0..cells {
                let a = pb.cell_start(c);
                // Depot slot: must head to a client.
                let mut best_d = f64::INFINITY;
                for &u in &eligible {
                    let t = a + prob.time(dslot, u);
                    if t > prob.close(u) + 1e-9 {
                        continue;
                    }
                    let val = prob.cost(dslot, u) - duals.pi[u] + lookup(u, t);
                    best_d = best_d.min(val);
                }
                level[dslot * cells + c] = best_d;
                for &v in &eligible {
                    let mut best = prev[v * cells + c].min(
                        if a + prob.time(v, dslot) <= depot_close + 1e-9 {
                            prob.cost(v, dslot)
                        } else {
                            f64::INFINITY
                        },
                    );
                    for &u in &eligible {
                        if u == v {
                            continue;
                        }
                        let t = a + prob.time(v, u);
                        if t > prob.close(u) + 1e-9 {
                            continue;
                        }
                        let val = prob.cost(v, u) - duals.pi[u] + lookup(u, t);
                        best = best.min(val);
                    }
                    level[v * cells + c] = best;
                }
            }
        }
        pb.table.push(level);
    }
    pb
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Best,
    Enumerate { threshold: f64, cap: usize },
}

struct Search<'a> {
    prob: Problem<'a>,
    lambda: f64,
    pi: &'a [f64],
    bounds: Option<PulseBounds>,
    /// Per client, `min(0, cheapest arc into it - pi)`: the most a
    /// completion can gain by visiting it once.
    gain: Vec<f64>,
    /// Sum of `gain` over unvisited clients.
    open_gain: f64,
    /// Cheapest arc from any eligible client back to the depot.
    min_return: f64,
    /// Labels of explored partial paths per `(slot, visited set)`, used to
    /// skip paths that cannot beat an earlier one with the same clients.
    labels: HashMap<(usize, u128), Vec<Label>>,
    label_count: usize,
    mask: u128,
    dominance: bool,
    /// Per slot, the departure time from which no window opening of any
    /// client can still be missed.
    late_enough: Vec<f64>,
    /// Client positions ordered by `cost(from, u) - pi_u`, per slot.
    order: Vec<Vec<usize>>,
    mode: Mode,
    cutoff: f64,
    path: Vec<usize>,
    visited: Vec<bool>,
    best: Option<(f64, Vec<usize>)>,
    columns: Vec<(f64, Vec<usize>)>,
    max_columns: usize,
    found: HashMap<Vec<u64>, (f64, Vec<usize>)>,
    nodes: u64,
    deadline: Option<Instant>,
    aborted: bool,
    overflow: bool,
    stop_after: Option<usize>,
    improving: usize,
    satisfied: bool,
}

const TIE: f64 = 1e-9;
const MAX_LABELS: usize = 2_000_000;
const LABELS_PER_KEY: usize = 64;

/// A partial path summarized by what matters for its completions.
#[derive(Clone, Copy, Debug)]
struct Label {
    t: f64,
    load: f64,
    cost: f64,
    reps: usize,
}

impl<'a> Search<'a> {
    fn new(
        inst: &'a Instance,
        depot: usize,
        demand: &'a ResolvedDemand,
        duals: &'a DualPrices,
        opts: &PricingOptions,
        mode: Mode,
    ) -> Self {
        let prob = Problem::new(inst, depot, demand);
        let n = prob.n;
        let bounds = if opts.use_bounds && n > 0 {
            let horizon = horizon_of(&prob);
            let origin = inst.departure();
            let cells = if horizon.is_finite() && horizon > origin {
                opts.grid_cells.max(1)
            } else {
                1
            };
            let delta = if cells == 1 {
                f64::INFINITY
            } else {
                (horizon - origin) / cells as f64
            };
            Some(build_bounds(&prob, duals, origin, delta, cells))
        } else {
            None
        };
        let mut order = Vec::with_capacity(n + 1);
        for from in 0..=n {
            let mut us: Vec<usize> = (0..n)
                .filter(|&u| u != from && prob.eligible[u] && prob.cost(from, u).is_finite())
                .collect();
            us.sort_by(|&a, &b| {
                let ka = prob.cost(from, a) - duals.pi[a];
                let kb = prob.cost(from, b) - duals.pi[b];
                ka.total_cmp(&kb).then(a.cmp(&b))
            });
            order.push(us);
        }
        let gain: Vec<f64> = (0..n)
            .map(|u| {
                if !prob.eligible[u] {
                    return 0.0;
                }
                let cheapest = (0..=n)
                    .filter(|&p| p != u && (p == n || prob.eligible[p]))
                    .map(|p| prob.cost(p, u))
                    .fold(f64::INFINITY, f64::min);
                (cheapest - duals.pi[u]).min(0.0)
            })
            .collect();
        let min_return = (0..n)
            .filter(|&u| prob.eligible[u])
            .map(|u| prob.cost(u, n))
            .fold(f64::INFINITY, f64::min);
        let late_enough = (0..=n)
            .map(|from| {
                (0..n)
                    .filter(|&v| v != from && prob.eligible[v])
                    .map(|v| prob.inst.window(prob.node(v)).open - prob.time(from, v))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let cutoff = match mode {
            Mode::Best => opts.cutoff.unwrap_or(f64::INFINITY),
            Mode::Enumerate { threshold, .. } => threshold,
        };
        Search {
            lambda: duals.lambda_of(depot),
            pi: &duals.pi,
            bounds,
            open_gain: gain.iter().sum(),
            gain,
            min_return,
            labels: HashMap::new(),
            label_count: 0,
            mask: 0,
            dominance: opts.use_dominance && n <= 128,
            late_enough,
            order,
            mode,
            cutoff,
            path: Vec::new(),
            visited: vec![false; n],
            best: None,
            columns: Vec::new(),
            max_columns: opts.max_columns,
            found: HashMap::new(),
            nodes: 0,
            deadline: opts.time_limit.map(|d| Instant::now() + d),
            aborted: false,
            overflow: false,
            stop_after: opts.stop_after,
            improving: 0,
            satisfied: false,
            prob,
        }
    }

    /// Reduced cost above which a partial path is pruned.
    fn limit(&self) -> f64 {
        match self.mode {
            Mode::Best => match &self.best {
                Some((b, _)) => (b + TIE).min(self.cutoff),
                None => self.cutoff,
            },
            Mode::Enumerate { .. } => self.cutoff,
        }
    }

    /// Lower bound on the reduced cost still to come from `slot` at time
    /// `t`, with the current path's clients already marked visited.
    fn lower_bound(&self, visits_left: usize, slot: usize, t: f64) -> f64 {
        let Some(b) = &self.bounds else {
            return f64::NEG_INFINITY;
        };
        let home = if slot == self.prob.n {
            self.min_return
        } else {
            self.prob.cost(slot, self.prob.n).min(self.min_return)
        };
        b.get(visits_left, slot, t).max(self.open_gain + home)
    }

    fn arrive(&self, from: usize, to: usize, t: f64) -> Option<f64> {
        let a = self.prob.inst.arrive(self.prob.node(from), self.prob.node(to), t);
        let w = self.prob.inst.window(self.prob.node(to));
        if a.is_finite() && w.contains(a) {
            Some(a)
        } else {
            None
        }
    }

    /// Whether a path at `slot` at time `t` can do everything a path over
    /// the same clients arriving at `other >= t` can do afterwards. Without
    /// waiting an early arrival can miss a window opening, so each unvisited
    /// client the later path can still reach is checked against the fastest
    /// way to get there.
    fn no_earlier_loss(&self, slot: usize, t: f64, other: f64) -> bool {
        if self.prob.inst.config.allow_waiting || t >= self.late_enough[slot] - TIE {
            return true;
        }
        (0..self.prob.n).all(|v| {
            if v == slot || self.visited[v] || !self.prob.eligible[v] {
                return true;
            }
            let w = self.prob.inst.window(self.prob.node(v));
            let dt = self.prob.time(slot, v);
            t + dt >= w.open - TIE || other + dt > w.close + TIE
        })
    }

    /// Records the partial path ending at `slot` unless an explored path
    /// over the same clients dominates it; returns false in that case.
    /// Paths the new one dominates are dropped.
    fn admit(&mut self, slot: usize, label: Label) -> bool {
        if !self.dominance {
            return true;
        }
        let dominates = |a: &Label, b: &Label| {
            a.cost < b.cost - TIE && a.load <= b.load + TIE && a.reps <= b.reps && a.t <= b.t + TIE
        };
        let key = (slot, self.mask);
        if let Some(list) = self.labels.get(&key) {
            if list.iter().any(|a| dominates(a, &label) && self.no_earlier_loss(slot, a.t, label.t)) {
                return false;
            }
        }
        let mut list = self.labels.remove(&key).unwrap_or_default();
        let before = list.len();
        list.retain(|a| !(dominates(&label, a) && self.no_earlier_loss(slot, label.t, a.t)));
        let removed = before - list.len();
        self.label_count -= removed;
        if list.len() < LABELS_PER_KEY && self.label_count < MAX_LABELS {
            list.push(label);
            self.label_count += 1;
        }
        self.labels.insert(key, list);
        true
    }

    fn tick(&mut self) -> bool {
        self.nodes += 1;
        if self.nodes % 4096 == 0 {
            if let Some(d) = self.deadline {
                if Instant::now() >= d {
                    self.aborted = true;
                }
            }
        }
        self.aborted || self.overflow || self.satisfied
    }

    fn run(&mut self) {
        let n = self.prob.n;
        let t0 = self.prob.inst.departure();
        if n == 0 || !self.prob.inst.window(self.prob.depot).contains(t0) {
            return;
        }
        self.expand_clients(n, t0, 0.0, 0.0, 0, 0);
    }

    /// Tries every unvisited client as the next stop from `slot`.
    fn expand_clients(&mut self, slot: usize, t: f64, load: f64, cost: f64, count: usize, reps: usize) {
        let q = self.prob.inst.capacity();
        let remaining = self.prob.n - count;
        for i in 0..self.order[slot].len() {
            let u = self.order[slot][i];
            if self.visited[u] {
                continue;
            }
            let l = load + self.prob.demand.sizes[u];
            if l > q + 1e-9 {
                continue;
            }
            let Some(tu) = self.arrive(slot, u, t) else {
                continue;
            };
            let c = cost + self.prob.cost(slot, u) - self.pi[u];
            self.visited[u] = true;
            self.open_gain -= self.gain[u];
            self.mask ^= 1 << u;
            if c + self.lower_bound(remaining - 1, u, tu) - self.lambda < self.limit()
                && self.admit(u, Label { t: tu, load: l, cost: c, reps })
            {
                self.path.push(u);
                self.expand_from_client(u, tu, l, c, count + 1, reps);
                self.path.pop();
            }
            self.mask ^= 1 << u;
            self.open_gain += self.gain[u];
            self.visited[u] = false;
            if self.aborted || self.overflow || self.satisfied {
                break;
            }
        }
    }

    fn expand_from_client(&mut self, u: usize, t: f64, load: f64, cost: f64, count: usize, reps: usize) {
        if self.tick() {
            return;
        }
        let n = self.prob.n;
        if let Some(_te) = self.arrive(u, n, t) {
            let total = cost + self.prob.cost(u, n) - self.lambda;
            self.complete(total);
        }
        if count < n && reps < self.prob.replenishments {
            if let Some(td) = self.arrive(u, n, t) {
                let c = cost + self.prob.cost(u, n);
                if c + self.lower_bound(n - count, n, td) - self.lambda < self.limit()
                    && self.admit(n, Label { t: td, load: 0.0, cost: c, reps: reps + 1 })
                {
                    self.path.push(n);
                    self.expand_clients(n, td, 0.0, c, count, reps + 1);
                    self.path.pop();
                }
            }
        }
        self.expand_clients(u, t, load, cost, count, reps);
    }

    fn complete(&mut self, rc: f64) {
        match self.mode {
            Mode::Best => {
                if rc >= self.cutoff {
                    return;
                }
                let better = match &self.best {
                    None => true,
                    Some((b, bp)) => {
                        rc < b - TIE
                            || (rc <= b + TIE
                                && (self.path.len(), self.visit_nodes(&self.path))
                                    < (bp.len(), self.visit_nodes(bp)))
                    }
                };
                if let Some(k) = self.stop_after {
                    self.improving += 1;
                    self.satisfied = self.improving >= k;
                }
                if self.max_columns > 1 && rc < -1e-6 {
                    self.columns.push((rc, self.path.clone()));
                    if self.columns.len() >= 8 * self.max_columns {
                        self.columns.sort_by(|a, b| a.0.total_cmp(&b.0));
                        self.columns.dedup_by(|a, b| a.1 == b.1);
                        self.columns.truncate(2 * self.max_columns);
                    }
                }
                if better {
                    self.best = Some((rc, self.path.clone()));
                }
            }
            Mode::Enumerate { threshold, cap } => {
                if rc >= threshold {
                    return;
                }
                let mut key = vec![0u64; self.prob.n / 64 + 1];
                for &s in &self.path {
                    if s < self.prob.n {
                        key[s / 64] |= 1 << (s % 64);
                    }
                }
                let entry = self.found.entry(key);
                match entry {
                    std::collections::hash_map::Entry::Occupied(mut e) => {
                        if rc < e.get().0 - TIE {
                            e.insert((rc, self.path.clone()));
                        }
                    }
                    std::collections::hash_map::Entry::Vacant(e) => {
                        e.insert((rc, self.path.clone()));
                        if self.found.len() > cap {
                            self.overflow = true;
                        }
                    }
                }
            }
        }
    }

    fn visit_nodes(&self, path: &[usize]) -> Vec<usize> {
        path.iter().map(|&s| self.prob.node(s)).collect()
    }

    fn to_route(&self, path: &[usize]) -> Result<Route> {
        let mut visits = Vec::with_capacity(path.len() + 2);
        visits.push(self.prob.depot);
        visits.extend(path.iter().map(|&s| self.prob.node(s)));
        visits.push(self.prob.depot);
        self.prob.inst.make_route(self.prob.depot, visits, self.prob.demand)
    }
}

/// Finds the minimum reduced-cost feasible route of `depot` for `demand`.
pub fn price_route(
    inst: &Instance,
    depot: usize,
    demand: &ResolvedDemand,
    duals: &DualPrices,
    opts: &PricingOptions,
) -> Result<PricingOutcome> {
    let mut s = Search::new(inst, depot, demand, duals, opts, Mode::Best);
    s.run();
    let mut columns = Vec::new();
    let mut best = None;
    if let Some((rc, path)) = &s.best {
        let route = s.to_route(path)?;
        best = Some(PricedRoute {
            reduced_cost: reduced_cost(&route, demand, duals),
            route,
        });
        let _ = rc;
    }
    let mut seen: Vec<&Vec<usize>> = Vec::new();
    let mut extra = s.columns.clone();
    extra.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (_, path) in &extra {
        if columns.len() + 1 >= opts.max_columns {
            break;
        }
        if seen.contains(&path) || s.best.as_ref().is_some_and(|(_, bp)| bp == path) {
            continue;
        }
        seen.push(path);
        let route = s.to_route(path)?;
        columns.push(PricedRoute {
            reduced_cost: reduced_cost(&route, demand, duals),
            route,
        });
    }
    if let Some(b) = &best {
        columns.insert(0, b.clone());
    }
    Ok(PricingOutcome {
        best,
        columns,
        optimal: !s.aborted && !s.satisfied,
        stopped_early: s.satisfied,
        nodes: s.nodes,
    })
}

#[derive(Clone, Debug)]
pub struct Enumeration {
    /// Cheapest route per visited client set, ascending reduced cost.
    pub routes: Vec<PricedRoute>,
    /// False when the cap or the time limit cut the enumeration short.
    pub complete: bool,
}

/// All feasible routes of `depot` with reduced cost below `threshold`,
/// keeping the cheapest per client set. Stops once more than `cap`
/// distinct client sets qualify.
pub fn enumerate_routes(
    inst: &Instance,
    depot: usize,
    demand: &ResolvedDemand,
    duals: &DualPrices,
    threshold: f64,
    cap: usize,
    time_limit: Option<Duration>,
) -> Result<Enumeration> {
    let opts = PricingOptions {
        time_limit,
        ..Default::default()
    };
    let mut s = Search::new(inst, depot, demand, duals, &opts, Mode::Enumerate { threshold, cap });
    s.run();
    let mut found: Vec<_> = s.found.values().cloned().collect();
    found.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let mut routes = Vec::with_capacity(found.len());
    for (_, path) in found {
        let route = s.to_route(&path)?;
        routes.push(PricedRoute {
            reduced_cost: reduced_cost(&route, demand, duals),
            route,
        });
    }
    Ok(Enumeration {
        routes,
        complete: !(s.aborted || s.overflow),
    })
}
