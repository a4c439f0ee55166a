//! Domain types shared by every stage of the pipeline: the road network, the
//! instance configuration, demand realizations, first-stage decisions and
//! routes, together with the route feasibility and cost semantics.
//!
//! A route is a closed walk on the complete shortest-path graph that starts
//! and ends at its depot. Interior depot occurrences are replenishments: the
//! vehicle reloads and the capacity budget starts over. Arrival times are
//! accumulated from the departure time `t0` by summing shortest-path travel
//! times, and every arrival (the depot included) has to fall inside the
//! node's time window. By default a vehicle may not wait for a window to
//! open; [`InstanceConfig::allow_waiting`] switches to the usual
//! "wait until open" semantics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CompleteGraph;

/// Opaque node identifier (a zip code in typical data sets). Never assumed
/// to be numeric.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub lat: f64,
    pub lon: f64,
}

/// A directed road segment with its distance (miles), travel time (hours)
/// and cost (dollars).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub tail: NodeId,
    pub head: NodeId,
    pub miles: f64,
    pub hours: f64,
    pub dollars: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub nodes: Vec<Node>,
    pub arcs: Vec<Arc>,
}

impl Network {
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(&n.id) {
                return Err(Error::input(format!("duplicate node id `{}`", n.id)));
            }
        }
        for a in &self.arcs {
            for end in [&a.tail, &a.head] {
                if !ids.contains(end) {
                    return Err(Error::UnknownNode(end.clone()));
                }
            }
            if a.tail == a.head {
                return Err(Error::input(format!("self-loop arc at `{}`", a.tail)));
            }
            for (what, v) in [("miles", a.miles), ("hours", a.hours), ("dollars", a.dollars)] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::input(format!(
                        "arc {} -> {} has invalid {what} {v}",
                        a.tail, a.head
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Service window `[open, close]` in hours. `close` may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub open: f64,
    #[serde(with = "crate::serde_util::inf_as_null", default = "infinity")]
    pub close: f64,
}

fn infinity() -> f64 {
    f64::INFINITY
}

impl TimeWindow {
    pub const UNBOUNDED: TimeWindow = TimeWindow {
        open: f64::NEG_INFINITY,
        close: f64::INFINITY,
    };

    pub fn new(open: f64, close: f64) -> Self {
        TimeWindow { open, close }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.open - TIME_EPS && t <= self.close + TIME_EPS
    }
}

/// Slack used when comparing arrival times against window bounds.
pub const TIME_EPS: f64 = 1e-9;

/// Everything about an instance that is not the network itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    pub candidate_depots: Vec<NodeId>,
    pub depot_daily_cost: BTreeMap<NodeId, f64>,
    pub vehicle_daily_cost: f64,
    pub max_vehicles_per_depot: u32,
    pub vehicle_capacity: f64,
    #[serde(default)]
    pub time_windows: BTreeMap<NodeId, TimeWindow>,
    #[serde(default)]
    pub depot_departure_time: f64,
    pub coverage_radius: f64,
    /// Penalty for leaving a node outside every open depot's coverage
    /// radius. Nodes not listed use [`InstanceConfig::default_coverage_penalty`].
    #[serde(default)]
    pub coverage_penalty: BTreeMap<NodeId, f64>,
    #[serde(default)]
    pub num_depots_to_open: Option<u32>,
    #[serde(default)]
    pub allow_waiting: bool,
    /// Cost of leaving one active client unserved in a routing subproblem.
    /// Defaults to ten times the largest coverage penalty.
    #[serde(default)]
    pub unserved_penalty: Option<f64>,
}

impl InstanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidate_depots.is_empty() {
            return Err(Error::input("candidate depot set is empty"));
        }
        let cands: BTreeSet<_> = self.candidate_depots.iter().collect();
        if cands.len() != self.candidate_depots.len() {
            return Err(Error::input("duplicate candidate depot"));
        }
        let keys: BTreeSet<_> = self.depot_daily_cost.keys().collect();
        if keys != cands {
            return Err(Error::input(
                "depot_daily_cost keys must equal candidate_depots",
            ));
        }
        if self.depot_daily_cost.values().any(|&f| !(f >= 0.0)) || !(self.vehicle_daily_cost >= 0.0) {
            return Err(Error::input("costs must be non-negative"));
        }
        if self.max_vehicles_per_depot < 1 {
            return Err(Error::input("max_vehicles_per_depot must be at least 1"));
        }
        if !(self.vehicle_capacity > 0.0) {
            return Err(Error::input("vehicle_capacity must be positive"));
        }
        for (id, w) in &self.time_windows {
            if !(w.open <= w.close) {
                return Err(Error::input(format!("time window of `{id}` has open > close")));
            }
        }
        if !(self.depot_departure_time >= 0.0) {
            return Err(Error::input("depot_departure_time must be non-negative"));
        }
        if !(self.coverage_radius > 0.0) {
            return Err(Error::input("coverage_radius must be positive"));
        }
        if self.coverage_penalty.values().any(|&p| !(p >= 0.0)) {
            return Err(Error::input("coverage penalties must be non-negative"));
        }
        if let Some(h) = self.num_depots_to_open {
            if h as usize > self.candidate_depots.len() {
                return Err(Error::input("num_depots_to_open exceeds candidate depots"));
            }
        }
        if let Some(p) = self.unserved_penalty {
            if !(p > 0.0) {
                return Err(Error::input("unserved_penalty must be positive"));
            }
        }
        Ok(())
    }

    pub fn window(&self, id: &NodeId) -> TimeWindow {
        self.time_windows
            .get(id)
            .copied()
            .unwrap_or(TimeWindow::UNBOUNDED)
    }

    /// `max f_k / |N|` for a network of `num_nodes` nodes.
    pub fn default_coverage_penalty(&self, num_nodes: usize) -> f64 {
        let fmax = self.depot_daily_cost.values().cloned().fold(0.0, f64::max);
        fmax / num_nodes.max(1) as f64
    }

    pub fn coverage_penalty_of(&self, id: &NodeId, num_nodes: usize) -> f64 {
        self.coverage_penalty
            .get(id)
            .copied()
            .unwrap_or_else(|| self.default_coverage_penalty(num_nodes))
    }

    pub fn unserved_penalty_for(&self, num_nodes: usize) -> f64 {
        self.unserved_penalty.unwrap_or_else(|| {
            let rho_max = if self.coverage_penalty.len() < num_nodes {
                self.default_coverage_penalty(num_nodes)
            } else {
                0.0
            };
            let rho_max = self.coverage_penalty.values().cloned().fold(rho_max, f64::max);
            // Keep the artificial columns usable even with zero penalties.
            (10.0 * rho_max).max(1.0)
        })
    }
}

/// One realized demand day: the active clients and their order sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandRealization {
    pub id: String,
    pub orders: BTreeMap<NodeId, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
}

impl DemandRealization {
    pub fn new(id: impl Into<String>, orders: impl IntoIterator<Item = (NodeId, f64)>) -> Self {
        DemandRealization {
            id: id.into(),
            orders: orders.into_iter().collect(),
            probability: None,
        }
    }

    pub fn with_probability(mut self, p: f64) -> Self {
        self.probability = Some(p);
        self
    }

    pub fn active(&self) -> impl Iterator<Item = &NodeId> {
        self.orders.keys()
    }

    pub fn is_active(&self, id: &NodeId) -> bool {
        self.orders.contains_key(id)
    }

    pub fn total_demand(&self) -> f64 {
        self.orders.values().sum()
    }

    pub fn validate(&self) -> Result<()> {
        for (id, &d) in &self.orders {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::input(format!(
                    "realization `{}`: order size of `{id}` must be positive, got {d}",
                    self.id
                )));
            }
        }
        if let Some(p) = self.probability {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::input(format!(
                    "realization `{}`: probability {p} outside [0,1]",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Depot opening, fleet allocation and coverage indicators.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FirstStageSolution {
    pub open: BTreeMap<NodeId, bool>,
    pub fleet: BTreeMap<NodeId, u32>,
    #[serde(default)]
    pub covered: BTreeMap<NodeId, bool>,
    #[serde(default)]
    pub objective_estimate: f64,
}

impl FirstStageSolution {
    pub fn is_open(&self, k: &NodeId) -> bool {
        self.open.get(k).copied().unwrap_or(false)
    }

    pub fn vehicles(&self, k: &NodeId) -> u32 {
        self.fleet.get(k).copied().unwrap_or(0)
    }

    pub fn total_vehicles(&self) -> u32 {
        self.fleet.values().sum()
    }

    pub fn validate(&self, cfg: &InstanceConfig) -> Result<()> {
        for (k, &y) in &self.fleet {
            let cap = if self.is_open(k) { cfg.max_vehicles_per_depot } else { 0 };
            if y > cap {
                return Err(Error::input(format!(
                    "depot `{k}` has {y} vehicles but may hold at most {cap}"
                )));
            }
        }
        Ok(())
    }

    pub fn open_set(&self) -> BTreeSet<NodeId> {
        self.open
            .iter()
            .filter(|(_, &o)| o)
            .map(|(k, _)| k.clone())
            .collect()
    }
}

/// Fixed daily cost of a first-stage decision: depots plus vehicles. The
/// coverage penalty is not included.
pub fn first_stage_cost(sol: &FirstStageSolution, cfg: &InstanceConfig) -> f64 {
    let depots: f64 = cfg
        .depot_daily_cost
        .iter()
        .filter(|(k, _)| sol.is_open(k))
        .map(|(_, f)| f)
        .sum();
    depots + cfg.vehicle_daily_cost * sol.total_vehicles() as f64
}

/// A depot-anchored route on the complete graph. `visits` holds node
/// indices of the [`CompleteGraph`], starting and ending at `depot`.
#[derive(Clone, Debug, PartialEq)]
pub struct Route {
    pub depot: usize,
    pub visits: Vec<usize>,
    pub cost: f64,
    pub subtrip_loads: Vec<f64>,
    pub arrival_times: Vec<f64>,
    pub realization_id: String,
}

impl Route {
    /// Builds a route from a full visit sequence, filling in the cached cost,
    /// loads and arrival times. `orders` maps node index to order size.
    pub fn from_visits(
        depot: usize,
        visits: Vec<usize>,
        cg: &CompleteGraph,
        orders: impl Fn(usize) -> f64,
        windows: impl Fn(usize) -> TimeWindow,
        departure: f64,
        allow_waiting: bool,
        realization_id: impl Into<String>,
    ) -> Result<Self> {
        if visits.len() < 2 || visits[0] != depot || *visits.last().unwrap() != depot {
            return Err(Error::input("route must start and end at its depot"));
        }
        let cost = leg_sum(&visits, |a, b| cg.cost(a, b), cg)?;
        let mut loads = vec![0.0];
        let mut times = vec![departure];
        let mut t = departure;
        for w in visits.windows(2) {
            let (a, b) = (w[0], w[1]);
            t += cg.time(a, b);
            if allow_waiting {
                t = t.max(windows(b).open);
            }
            times.push(t);
            if b == depot {
                loads.push(0.0);
            } else {
                *loads.last_mut().unwrap() += orders(b);
            }
        }
        loads.pop();
        if loads.is_empty() {
            loads.push(0.0);
        }
        Ok(Route {
            depot,
            visits,
            cost,
            subtrip_loads: loads,
            arrival_times: times,
            realization_id: realization_id.into(),
        })
    }

    /// Demand nodes visited, in order, without depot occurrences.
    pub fn clients(&self) -> impl Iterator<Item = usize> + '_ {
        let depot = self.depot;
        self.visits.iter().copied().filter(move |&v| v != depot)
    }

    pub fn visits_node(&self, node: usize) -> bool {
        node != self.depot && self.visits.contains(&node)
    }

    pub fn num_clients(&self) -> usize {
        self.clients().count()
    }

    pub fn replenishments(&self) -> usize {
        self.visits.len().saturating_sub(2).saturating_sub(self.num_clients())
    }

    pub fn is_empty(&self) -> bool {
        self.num_clients() == 0
    }

    pub fn key(&self) -> (usize, Vec<usize>) {
        (self.depot, self.visits.clone())
    }

    /// Shortest-path distance driven along the route.
    pub fn distance(&self, cg: &CompleteGraph) -> f64 {
        self.visits.windows(2).map(|w| cg.dist(w[0], w[1])).sum()
    }

    pub fn visit_ids<'a>(&'a self, cg: &'a CompleteGraph) -> impl Iterator<Item = &'a NodeId> + 'a {
        self.visits.iter().map(|&v| cg.id(v))
    }
}

fn leg_sum(visits: &[usize], f: impl Fn(usize, usize) -> f64, cg: &CompleteGraph) -> Result<f64> {
    let mut s = 0.0;
    for w in visits.windows(2) {
        let c = f(w[0], w[1]);
        if !c.is_finite() {
            return Err(Error::MissingPair(cg.id(w[0]).clone(), cg.id(w[1]).clone()));
        }
        s += c;
    }
    Ok(s)
}

/// Sum of shortest-path costs over consecutive visit pairs.
pub fn route_cost(route: &Route, cg: &CompleteGraph) -> Result<f64> {
    for &v in &route.visits {
        if v >= cg.len() {
            return Err(Error::input(format!("node index {v} out of range")));
        }
    }
    leg_sum(&route.visits, |a, b| cg.cost(a, b), cg)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// The subtrip ending in `node` carries more than the vehicle capacity.
    Capacity { node: NodeId, position: usize, load: f64 },
    /// Arrival before the window opens (no waiting allowed).
    EarlyArrival { node: NodeId, position: usize, arrival: f64, window: TimeWindow },
    LateArrival { node: NodeId, position: usize, arrival: f64, window: TimeWindow },
    /// A demand node appears twice.
    RepeatedVisit { node: NodeId, position: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Feasibility {
    Feasible,
    Infeasible(Violation),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }
}

/// Checks the capacity and time-window conditions of `route` for the
/// realization `xi`. `position` in a violation indexes `route.visits`
/// (position 0 is the departure from the depot).
pub fn route_feasible(
    route: &Route,
    xi: &DemandRealization,
    cfg: &InstanceConfig,
    cg: &CompleteGraph,
) -> Result<Feasibility> {
    let depot_id = cg
        .try_id(route.depot)
        .ok_or_else(|| Error::input(format!("depot index {} out of range", route.depot)))?;
    if !cfg.candidate_depots.contains(depot_id) {
        return Err(Error::input(format!("`{depot_id}` is not a candidate depot")));
    }
    if route.visits.len() < 2
        || route.visits[0] != route.depot
        || *route.visits.last().unwrap() != route.depot
    {
        return Err(Error::input("route must start and end at its depot"));
    }
    let mut ids = Vec::with_capacity(route.visits.len());
    for &v in &route.visits {
        let id = cg
            .try_id(v)
            .ok_or_else(|| Error::input(format!("node index {v} out of range")))?;
        if v != route.depot && !xi.is_active(id) {
            return Err(Error::InactiveVisit(id.clone(), xi.id.clone()));
        }
        ids.push(id);
    }

    let q = cfg.vehicle_capacity;
    let mut seen = BTreeSet::new();
    let mut load = 0.0;
    let mut t = cfg.depot_departure_time;
    let w0 = cfg.window(depot_id);
    if !w0.contains(t) {
        return Ok(Feasibility::Infeasible(time_violation(depot_id, 0, t, w0)));
    }
    for p in 1..route.visits.len() {
        let (a, b) = (route.visits[p - 1], route.visits[p]);
        let tau = cg.time(a, b);
        if !tau.is_finite() {
            return Err(Error::MissingPair(ids[p - 1].clone(), ids[p].clone()));
        }
        t += tau;
        let w = cfg.window(ids[p]);
        if cfg.allow_waiting {
            t = t.max(w.open);
        }
        if b == route.depot {
            load = 0.0;
        } else {
            if !seen.insert(b) {
                return Ok(Feasibility::Infeasible(Violation::RepeatedVisit {
                    node: ids[p].clone(),
                    position: p,
                }));
            }
            load += xi.orders[ids[p]];
            if load > q + 1e-9 {
                return Ok(Feasibility::Infeasible(Violation::Capacity {
                    node: ids[p].clone(),
                    position: p,
                    load,
                }));
            }
        }
        if !w.contains(t) {
            return Ok(Feasibility::Infeasible(time_violation(ids[p], p, t, w)));
        }
    }
    Ok(Feasibility::Feasible)
}

fn time_violation(id: &NodeId, position: usize, arrival: f64, window: TimeWindow) -> Violation {
    if arrival < window.open {
        Violation::EarlyArrival {
            node: id.clone(),
            position,
            arrival,
            window,
        }
    } else {
        Violation::LateArrival {
            node: id.clone(),
            position,
            arrival,
            window,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::CompleteGraph;

    fn id(s: &str) -> NodeId {
        NodeId::new(s)
    }

    fn arc(t: &str, h: &str, miles: f64, hours: f64, dollars: f64) -> Arc {
        Arc {
            tail: id(t),
            head: id(h),
            miles,
            hours,
            dollars,
        }
    }

    fn node(s: &str) -> Node {
        Node {
            id: id(s),
            lat: 0.0,
            lon: 0.0,
        }
    }

    /// Depot `d` and clients `a`, `b`, `c`; symmetric arcs d<->x and a chain.
    fn fixture() -> (Network, InstanceConfig) {
        let mut arcs = Vec::new();
        for (x, h, c) in [("a", 1.0, 3.0), ("b", 2.0, 5.0), ("c", 1.5, 4.0)] {
            arcs.push(arc("d", x, 10.0, h, c));
            arcs.push(arc(x, "d", 10.0, h, c + 1.0));
        }
        arcs.push(arc("a", "b", 5.0, 0.5, 2.0));
        arcs.push(arc("b", "c", 5.0, 0.25, 2.0));
        let net = Network {
            nodes: ["d", "a", "b", "c"].iter().map(|s| node(s)).collect(),
            arcs,
        };
        let cfg = InstanceConfig {
            candidate_depots: vec![id("d")],
            depot_daily_cost: [(id("d"), 100.0)].into_iter().collect(),
            vehicle_daily_cost: 50.0,
            max_vehicles_per_depot: 3,
            vehicle_capacity: 10.0,
            time_windows: BTreeMap::new(),
            depot_departure_time: 0.0,
            coverage_radius: 5.0,
            coverage_penalty: BTreeMap::new(),
            num_depots_to_open: None,
            allow_waiting: false,
            unserved_penalty: None,
        };
        (net, cfg)
    }

    fn route(cg: &CompleteGraph, seq: &[&str], xi: &DemandRealization, cfg: &InstanceConfig) -> Route {
        let visits: Vec<usize> = seq.iter().map(|s| cg.index_of(&id(s)).unwrap()).collect();
        Route::from_visits(
            visits[0],
            visits,
            cg,
            |v| xi.orders.get(cg.id(v)).copied().unwrap_or(0.0),
            |v| cfg.window(cg.id(v)),
            cfg.depot_departure_time,
            cfg.allow_waiting,
            xi.id.clone(),
        )
        .unwrap()
    }

    #[test]
    fn empty_route_is_feasible_and_free() {
        let (net, cfg) = fixture();
        let cg = CompleteGraph::build(&net).unwrap();
        let xi = DemandRealization::new("day", [(id("a"), 3.0)]);
        let r = route(&cg, &["d", "d"], &xi, &cfg);
        assert_eq!(route_feasible(&r, &xi, &cfg, &cg).unwrap(), Feasibility::Feasible);
        assert_eq!(route_cost(&r, &cg).unwrap(), 0.0);
    }

    #[test]
    fn oversized_order_violates_capacity() {
        let (net, cfg) = fixture();
        let cg = CompleteGraph::build(&net).unwrap();
        let xi = DemandRealization::new("day", [(id("a"), cfg.vehicle_capacity + 1.0)]);
        let r = route(&cg, &["d", "a", "d"], &xi, &cfg);
        match route_feasible(&r, &xi, &cfg, &cg).unwrap() {
            Feasibility::Infeasible(Violation::Capacity { node, position, .. }) => {
                assert_eq!(node, id("a"));
                assert_eq!(position, 1);
            }
            other => panic!("expected capacity violation, got {other:?}"),
        }
    }

    #[test]
    fn tight_window_on_third_visit() {
        // d->a 1.0h, a->b 0.5h, b->c 0.25h: arrivals 1.0, 1.5, 1.75.
        let (net, mut cfg) = fixture();
        cfg.time_windows.insert(id("c"), TimeWindow::new(0.0, 1.7));
        let cg = CompleteGraph::build(&net).unwrap();
        let xi = DemandRealization::new("day", [(id("a"), 1.0), (id("b"), 1.0), (id("c"), 1.0)]);
        let r = route(&cg, &["d", "a", "b", "c", "d"], &xi, &cfg);
        assert_eq!(r.arrival_times[..4], [0.0, 1.0, 1.5, 1.75]);
        match route_feasible(&r, &xi, &cfg, &cg).unwrap() {
            Feasibility::Infeasible(Violation::LateArrival { node, position, arrival, .. }) => {
                assert_eq!(node, id("c"));
                assert_eq!(position, 3);
                assert!((arrival - 1.75).abs() < 1e-12);
            }
            other => panic!("expected late arrival, got {other:?}"),
        }
    }

    #[test]
    fn early_arrival_is_infeasible_unless_waiting_allowed() {
        let (net, mut cfg) = fixture();
        cfg.time_windows.insert(id("a"), TimeWindow::new(2.0, 3.0));
        let cg = CompleteGraph::build(&net).unwrap();
        let xi = DemandRealization::new("day", [(id("a"), 1.0)]);
        let r = route(&cg, &["d", "a", "d"], &xi, &cfg);
        assert!(matches!(
            route_feasible(&r, &xi, &cfg, &cg).unwrap(),
            Feasibility::Infeasible(Violation::EarlyArrival { .. })
        ));
        cfg.allow_waiting = true;
        assert!(route_feasible(&r, &xi, &cfg, &cg).unwrap().is_feasible());
    }

    #[test]
    fn inactive_visit_is_an_input_error() {
        let (net, cfg) = fixture();
        let cg = CompleteGraph::build(&net).unwrap();
        let xi = DemandRealization::new("day", [(id("a"), 1.0)]);
        let full = DemandRealization::new("all", [(id("a"), 1.0), (id("b"), 1.0)]);
        let r = route(&cg, &["d", "b", "d"], &full, &cfg);
        assert!(matches!(
            route_feasible(&r, &xi, &cfg, &cg),
            Err(Error::InactiveVisit(..))
        ));
    }

    #[test]
    fn two_leg_cost() {
        let (net, cfg) = fixture();
        let cg = CompleteGraph::build(&net).unwrap();
        let xi = DemandRealization::new("day", [(id("a"), 1.0)]);
        // c(d,a) = 3, c(a,d) = 4
        let r = route(&cg, &["d", "a", "d"], &xi, &cfg);
        assert_eq!(route_cost(&r, &cg).unwrap(), 7.0);
        assert_eq!(r.cost, 7.0);
    }

    #[test]
    fn replenishment_resets_load() {
        let (net, cfg) = fixture();
        let cg = CompleteGraph::build(&net).unwrap();
        let xi = DemandRealization::new("day", [(id("a"), 8.0), (id("b"), 8.0)]);
        let r = route(&cg, &["d", "a", "d", "b", "d"], &xi, &cfg);
        assert_eq!(r.subtrip_loads, vec![8.0, 8.0]);
        assert_eq!(r.replenishments(), 1);
        assert!(route_feasible(&r, &xi, &cfg, &cg).unwrap().is_feasible());
        let chained = route(&cg, &["d", "a", "b", "d"], &xi, &cfg);
        assert!(!route_feasible(&chained, &xi, &cfg, &cg).unwrap().is_feasible());
    }

    #[test]
    fn first_stage_cost_examples() {
        let (_, mut cfg) = fixture();
        let empty = FirstStageSolution::default();
        assert_eq!(first_stage_cost(&empty, &cfg), 0.0);

        cfg.candidate_depots = vec![id("k1"), id("k2")];
        cfg.depot_daily_cost = [(id("k1"), 100.0), (id("k2"), 200.0)].into_iter().collect();
        cfg.vehicle_daily_cost = 50.0;
        let sol = FirstStageSolution {
            open: [(id("k1"), true), (id("k2"), true)].into_iter().collect(),
            fleet: [(id("k1"), 1), (id("k2"), 3)].into_iter().collect(),
            ..Default::default()
        };
        assert_eq!(first_stage_cost(&sol, &cfg), 500.0);
    }

    #[test]
    fn three_depots_fifteen_vehicles() {
        let (_, mut cfg) = fixture();
        let ks = ["k1", "k2", "k3"];
        cfg.candidate_depots = ks.iter().map(|k| id(k)).collect();
        cfg.depot_daily_cost = ks.iter().map(|k| (id(k), 174.33)).collect();
        cfg.vehicle_daily_cost = 30.0;
        let sol = FirstStageSolution {
            open: ks.iter().map(|k| (id(k), true)).collect(),
            fleet: ks.iter().map(|k| (id(k), 5)).collect(),
            ..Default::default()
        };
        let c = first_stage_cost(&sol, &cfg);
        assert!((c - 972.99).abs() < 1e-9);
        assert!((c - 973.0).abs() < 0.5);
    }

    #[test]
    fn config_validation_catches_key_mismatch() {
        let (_, mut cfg) = fixture();
        assert!(cfg.validate().is_ok());
        cfg.depot_daily_cost.insert(id("zz"), 1.0);
        assert!(cfg.validate().is_err());
    }
}
