//! Fixture generators and brute-force oracles shared by the integration
//! tests. The oracles only read the complete graph's matrices and the raw
//! configuration; they do not call the routing, pricing or LP code.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use fleetroute::model::{Arc, DemandRealization, InstanceConfig, Network, Node, NodeId, TimeWindow};
use fleetroute::{CompleteGraph, Instance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn id(s: &str) -> NodeId {
    NodeId::new(s)
}

#[derive(Clone, Debug)]
pub struct FixtureSpec {
    pub clients: usize,
    pub depots: usize,
    pub max_vehicles: u32,
    /// Fraction of clients with a finite time window.
    pub window_share: f64,
    /// Probability that a directed arc between two nodes exists.
    pub arc_density: f64,
    pub allow_waiting: bool,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            clients: 6,
            depots: 2,
            max_vehicles: 3,
            window_share: 0.5,
            arc_density: 0.6,
            allow_waiting: false,
        }
    }
}

pub struct Fixture {
    pub network: Network,
    pub config: InstanceConfig,
    pub clients: Vec<NodeId>,
    pub depots: Vec<NodeId>,
}

impl Fixture {
    pub fn instance(&self) -> Instance {
        Instance::new(&self.network, self.config.clone()).unwrap()
    }
}

/// A random directed network on points in a 10 x 10 square with random
/// asymmetric costs, some client windows and unit-free order sizes.
pub fn random_fixture(seed: u64, spec: &FixtureSpec) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depots: Vec<NodeId> = (0..spec.depots).map(|k| id(&format!("D{k}"))).collect();
    let clients: Vec<NodeId> = (0..spec.clients).map(|i| id(&format!("C{i}"))).collect();
    let all: Vec<NodeId> = depots.iter().chain(&clients).cloned().collect();
    let pts: Vec<(f64, f64)> = all
        .iter()
        .map(|_| (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)))
        .collect();
    let nodes = all
        .iter()
        .zip(&pts)
        .map(|(i, &(x, y))| Node {
            id: i.clone(),
            lat: 40.0 + y / 10.0,
            lon: -77.0 + x / 10.0,
        })
        .collect();
    let mut arcs = Vec::new();
    let n = all.len();
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            // A ring keeps the network strongly connected.
            let ring = b == (a + 1) % n || a == (b + 1) % n;
            if !ring && !rng.random_bool(spec.arc_density) {
                continue;
            }
            let d = ((pts[a].0 - pts[b].0).powi(2) + (pts[a].1 - pts[b].1).powi(2)).sqrt();
            arcs.push(Arc {
                tail: all[a].clone(),
                head: all[b].clone(),
                miles: d,
                hours: d / 20.0 * rng.random_range(1.0..1.3),
                dollars: d * rng.random_range(1.0..1.5),
            });
        }
    }
    let mut time_windows = BTreeMap::new();
    for c in &clients {
        if rng.random_bool(spec.window_share) {
            let open = rng.random_range(0.0..1.0);
            let close = open + rng.random_range(0.4..2.5);
            time_windows.insert(c.clone(), TimeWindow::new(open, close));
        }
    }
    for k in &depots {
        time_windows.insert(k.clone(), TimeWindow::new(0.0, 6.0));
    }
    let depot_daily_cost = depots
        .iter()
        .map(|k| (k.clone(), rng.random_range(5.0..30.0)))
        .collect();
    let coverage_penalty = all
        .iter()
        .map(|i| (i.clone(), rng.random_range(0.0..4.0)))
        .collect();
    let config = InstanceConfig {
        candidate_depots: depots.clone(),
        depot_daily_cost,
        vehicle_daily_cost: rng.random_range(2.0..8.0),
        max_vehicles_per_depot: spec.max_vehicles,
        vehicle_capacity: 10.0,
        time_windows,
        depot_departure_time: 0.0,
        coverage_radius: 0.3,
        coverage_penalty,
        num_depots_to_open: None,
        allow_waiting: spec.allow_waiting,
        unserved_penalty: Some(60.0),
    };
    Fixture {
        network: Network { nodes, arcs },
        config,
        clients,
        depots,
    }
}

/// A realization activating `active` of the fixture's clients with order
/// sizes in `1..=max_size`.
pub fn random_demand(seed: u64, fx: &Fixture, active: usize, max_size: u32, label: &str) -> DemandRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = fx.clients.clone();
    let mut orders = Vec::new();
    for _ in 0..active.min(pool.len()) {
        let i = rng.random_range(0..pool.len());
        let c = pool.swap_remove(i);
        orders.push((c, rng.random_range(1..=max_size) as f64));
    }
    DemandRealization::new(label, orders)
}

/// `ceil(total / q)` on integer-valued inputs, computed in integers.
pub fn ceil_div(total: u64, q: u64) -> u64 {
    total.div_ceil(q)
}

/// One feasible route found by the oracle: the visit sequence (graph
/// indices, depot at both ends) and its cost.
#[derive(Clone, Debug)]
pub struct OracleRoute {
    pub visits: Vec<usize>,
    pub cost: f64,
    pub mask: u32,
}

/// Independent feasibility check of a complete visit sequence.
pub fn oracle_feasible(
    cg: &CompleteGraph,
    cfg: &InstanceConfig,
    orders: &HashMap<usize, f64>,
    depot: usize,
    visits: &[usize],
) -> bool {
    let window = |v: usize| {
        cfg.time_windows
            .get(cg.id(v))
            .copied()
            .unwrap_or(TimeWindow::new(f64::NEG_INFINITY, f64::INFINITY))
    };
    let ok = |t: f64, w: TimeWindow| t >= w.open - 1e-9 && t <= w.close + 1e-9;
    let mut t = cfg.depot_departure_time;
    if !ok(t, window(depot)) {
        return false;
    }
    let mut load = 0.0;
    for w in visits.windows(2) {
        let tau = cg.time(w[0], w[1]);
        if !tau.is_finite() {
            return false;
        }
        t += tau;
        if cfg.allow_waiting {
            t = t.max(window(w[1]).open);
        }
        if !ok(t, window(w[1])) {
            return false;
        }
        if w[1] == depot {
            load = 0.0;
        } else {
            load += orders[&w[1]];
            if load > cfg.vehicle_capacity + 1e-9 {
                return false;
            }
        }
    }
    true
}

/// Every feasible elementary route of `depot` over `clients`, with at most
/// `max_reloads` interior depot visits, none leading, trailing or repeated
/// back to back.
pub fn enumerate_all_routes(
    cg: &CompleteGraph,
    cfg: &InstanceConfig,
    depot: usize,
    clients: &[usize],
    orders: &HashMap<usize, f64>,
    max_reloads: usize,
) -> Vec<OracleRoute> {
    let mut out = Vec::new();
    let mut seq = vec![depot];
    fn rec(
        cg: &CompleteGraph,
        cfg: &InstanceConfig,
        depot: usize,
        clients: &[usize],
        orders: &HashMap<usize, f64>,
        max_reloads: usize,
        seq: &mut Vec<usize>,
        used: u32,
        reloads: usize,
        out: &mut Vec<OracleRoute>,
    ) {
        let last = *seq.last().unwrap();
        if last != depot {
            let mut full = seq.clone();
            full.push(depot);
            if oracle_feasible(cg, cfg, orders, depot, &full) {
                let cost = full.windows(2).map(|w| cg.cost(w[0], w[1])).sum();
                out.push(OracleRoute {
                    visits: full,
                    cost,
                    mask: used,
                });
            }
            if reloads < max_reloads && used.count_ones() < clients.len() as u32 {
                seq.push(depot);
                rec(cg, cfg, depot, clients, orders, max_reloads, seq, used, reloads + 1, out);
                seq.pop();
            }
        }
        for (p, &c) in clients.iter().enumerate() {
            if used & (1 << p) != 0 || c == depot {
                continue;
            }
            seq.push(c);
            rec(cg, cfg, depot, clients, orders, max_reloads, seq, used | (1 << p), reloads, out);
            seq.pop();
        }
    }
    rec(cg, cfg, depot, clients, orders, max_reloads, &mut seq, 0, 0, &mut out);
    out
}

/// Resolved view of a realization for the oracles.
pub struct OracleDemand {
    pub clients: Vec<usize>,
    pub orders: HashMap<usize, f64>,
    pub reloads: usize,
}

pub fn oracle_demand(cg: &CompleteGraph, cfg: &InstanceConfig, xi: &DemandRealization) -> OracleDemand {
    let mut clients: Vec<usize> = xi.orders.keys().map(|i| cg.index_of(i).unwrap()).collect();
    clients.sort();
    let orders = xi
        .orders
        .iter()
        .map(|(i, &d)| (cg.index_of(i).unwrap(), d))
        .collect();
    let total: f64 = xi.orders.values().sum();
    let reloads = (total / cfg.vehicle_capacity - 1e-9).ceil().max(0.0) as usize;
    OracleDemand {
        clients,
        orders,
        reloads,
    }
}

/// Minimum route cost per client subset, for one depot.
pub fn cheapest_per_subset(routes: &[OracleRoute], n: usize) -> Vec<f64> {
    let mut best = vec![f64::INFINITY; 1 << n];
    for r in routes {
        let m = r.mask as usize;
        if r.cost < best[m] {
            best[m] = r.cost;
        }
    }
    best
}

/// Exact covering value: at most `fleet[k]` routes per depot, overlapping
/// allowed, each uncovered client charged `unserved`.
pub fn mdvrp_oracle(
    cg: &CompleteGraph,
    cfg: &InstanceConfig,
    xi: &DemandRealization,
    fleet: &BTreeMap<usize, u32>,
    unserved: f64,
) -> f64 {
    let od = oracle_demand(cg, cfg, xi);
    let n = od.clients.len();
    let full = 1usize << n;
    let mut best = vec![f64::INFINITY; full];
    best[0] = 0.0;
    for (&k, &y) in fleet {
        if y == 0 {
            continue;
        }
        let routes = enumerate_all_routes(cg, cfg, k, &od.clients, &od.orders, od.reloads);
        let per = cheapest_per_subset(&routes, n);
        let subsets: Vec<(usize, f64)> = per
            .iter()
            .enumerate()
            .filter(|(m, c)| *m != 0 && c.is_finite())
            .map(|(m, &c)| (m, c))
            .collect();
        for _ in 0..y {
            let prev = best.clone();
            for (mask, &v) in prev.iter().enumerate() {
                if !v.is_finite() {
                    continue;
                }
                for &(s, c) in &subsets {
                    let u = mask | s;
                    if v + c < best[u] {
                        best[u] = v + c;
                    }
                }
            }
        }
    }
    (0..full)
        .filter(|&m| best[m].is_finite())
        .map(|m| best[m] + unserved * (n - (m as u32).count_ones() as usize) as f64)
        .fold(f64::INFINITY, f64::min)
}

/// Every first-stage decision `(open, fleet)` allowed by the configuration.
pub fn all_first_stage(cfg: &InstanceConfig, depots: &[usize]) -> Vec<(Vec<bool>, Vec<u32>)> {
    let k = depots.len();
    let m = cfg.max_vehicles_per_depot;
    let mut out = Vec::new();
    for open_mask in 0..(1u32 << k) {
        if let Some(h) = cfg.num_depots_to_open {
            if open_mask.count_ones() != h {
                continue;
            }
        }
        let open: Vec<bool> = (0..k).map(|j| open_mask & (1 << j) != 0).collect();
        let mut ys = vec![vec![]];
        for j in 0..k {
            let top = if open[j] { m } else { 0 };
            ys = ys
                .into_iter()
                .flat_map(|p: Vec<u32>| {
                    (0..=top).map(move |v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        for y in ys {
            out.push((open.clone(), y));
        }
    }
    out
}

/// First-stage cost plus the coverage penalty of `open`.
pub fn first_stage_oracle(cg: &CompleteGraph, cfg: &InstanceConfig, depots: &[usize], open: &[bool], y: &[u32]) -> f64 {
    let mut v = 0.0;
    for (j, &k) in depots.iter().enumerate() {
        if open[j] {
            v += cfg.depot_daily_cost[cg.id(k)];
        }
        v += cfg.vehicle_daily_cost * y[j] as f64;
    }
    let n = cg.len();
    let fmax = cfg.depot_daily_cost.values().cloned().fold(0.0, f64::max);
    for i in 0..n {
        let covered = depots
            .iter()
            .zip(open)
            .any(|(&k, &o)| o && cg.time(k, i) <= cfg.coverage_radius + 1e-12);
        if !covered {
            v += cfg
                .coverage_penalty
                .get(cg.id(i))
                .copied()
                .unwrap_or(fmax / n as f64);
        }
    }
    v
}

/// Optimal objective of the scenario problem by full enumeration of the
/// first stage, together with the recourse value table per decision.
pub fn two_stage_oracle(
    cg: &CompleteGraph,
    cfg: &InstanceConfig,
    scenarios: &[DemandRealization],
    unserved: f64,
) -> (f64, Vec<(Vec<bool>, Vec<u32>, Vec<f64>)>) {
    let mut depots: Vec<usize> = cfg.candidate_depots.iter().map(|k| cg.index_of(k).unwrap()).collect();
    depots.sort();
    let mut memo: HashMap<(usize, Vec<u32>), f64> = HashMap::new();
    let mut best = f64::INFINITY;
    let mut table = Vec::new();
    for (open, y) in all_first_stage(cfg, &depots) {
        let fleet: BTreeMap<usize, u32> = depots.iter().cloned().zip(y.iter().cloned()).collect();
        let mut values = Vec::new();
        let mut total = first_stage_oracle(cg, cfg, &depots, &open, &y);
        for (s, xi) in scenarios.iter().enumerate() {
            let q = *memo
                .entry((s, y.clone()))
                .or_insert_with(|| mdvrp_oracle(cg, cfg, xi, &fleet, unserved));
            total += xi.probability.unwrap() * q;
            values.push(q);
        }
        best = best.min(total);
        table.push((open, y, values));
    }
    (best, table)
}

/// A small two-stage instance: up to 3 candidate depots, up to 3 vehicles
/// per depot, 1 to 3 scenarios with at most 6 active clients each.
pub fn lshaped_case(seed: u64) -> (Fixture, Vec<DemandRealization>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let spec = FixtureSpec {
        clients: 7,
        depots: rng.random_range(1..=3),
        max_vehicles: rng.random_range(1..=3),
        ..Default::default()
    };
    let mut fx = random_fixture(seed, &spec);
    fx.config.vehicle_capacity = rng.random_range(6.0..14.0f64).round();
    let n = rng.random_range(1..=3);
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let scenarios = (0..n)
        .map(|s| {
            let active = rng.random_range(2..=6);
            let xi = random_demand(seed * 7 + s as u64, &fx, active, 5, &format!("s{s}"));
            let p = if s + 1 == n { 1.0 - acc } else { weights[s] / total };
            acc += p;
            xi.with_probability(p)
        })
        .collect();
    (fx, scenarios)
}
