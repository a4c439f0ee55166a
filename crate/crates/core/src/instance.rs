//! An instance bundles the network's complete graph with the configuration,
//! resolved to node indices for the inner loops.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{build_auxiliary, AuxiliaryGraph, CompleteGraph};
use crate::model::{DemandRealization, InstanceConfig, Network, NodeId, Route, TimeWindow};

#[derive(Clone, Debug)]
pub struct Instance {
    pub config: InstanceConfig,
    pub graph: Arc<CompleteGraph>,
    /// Candidate depots as graph indices, in ascending index order.
    pub depots: Vec<usize>,
    windows: Vec<TimeWindow>,
    coverage_penalty: Vec<f64>,
    pub unserved_penalty: f64,
}

impl Instance {
    pub fn new(network: &Network, config: InstanceConfig) -> Result<Self> {
        let graph = CompleteGraph::build(network)?;
        Self::from_graph(Arc::new(graph), config)
    }

    pub fn from_graph(graph: Arc<CompleteGraph>, config: InstanceConfig) -> Result<Self> {
        config.validate()?;
        let mut depots = Vec::new();
        for k in &config.candidate_depots {
            depots.push(graph.require(k)?);
        }
        depots.sort_unstable();
        for id in config.time_windows.keys().chain(config.coverage_penalty.keys()) {
            graph.require(id)?;
        }
        let n = graph.len();
        let windows = graph.ids().iter().map(|id| config.window(id)).collect();
        let coverage_penalty = graph
            .ids()
            .iter()
            .map(|id| config.coverage_penalty_of(id, n))
            .collect();
        let unserved_penalty = config.unserved_penalty_for(n);
        Ok(Instance {
            config,
            graph,
            depots,
            windows,
            coverage_penalty,
            unserved_penalty,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.len()
    }

    pub fn window(&self, node: usize) -> TimeWindow {
        self.windows[node]
    }

    pub fn coverage_penalty(&self, node: usize) -> f64 {
        self.coverage_penalty[node]
    }

    pub fn capacity(&self) -> f64 {
        self.config.vehicle_capacity
    }

    pub fn departure(&self) -> f64 {
        self.config.depot_departure_time
    }

    pub fn max_vehicles(&self) -> u32 {
        self.config.max_vehicles_per_depot
    }

    /// Arrival time at `to` when leaving `from` at time `t`, honoring the
    /// waiting policy.
    pub fn arrive(&self, from: usize, to: usize, t: f64) -> f64 {
        let a = t + self.graph.time(from, to);
        if self.config.allow_waiting {
            a.max(self.windows[to].open)
        } else {
            a
        }
    }

    /// Depots whose coverage radius reaches node `i` (travel time from the
    /// depot at most the radius).
    pub fn covering_depots(&self, i: usize) -> Vec<usize> {
        self.depots
            .iter()
            .copied()
            .filter(|&k| self.graph.time(k, i) <= self.config.coverage_radius + 1e-12)
            .collect()
    }

    pub fn resolve(&self, xi: &DemandRealization) -> Result<ResolvedDemand> {
        xi.validate()?;
        let mut clients = Vec::with_capacity(xi.orders.len());
        for (id, &d) in &xi.orders {
            clients.push((self.graph.require(id)?, d));
        }
        clients.sort_unstable_by_key(|c| c.0);
        Ok(ResolvedDemand {
            id: xi.id.clone(),
            total: clients.iter().map(|c| c.1).sum(),
            clients: clients.iter().map(|c| c.0).collect(),
            sizes: clients.iter().map(|c| c.1).collect(),
            probability: xi.probability,
        })
    }

    pub fn auxiliary(&self, depot: usize, xi: &DemandRealization) -> Result<AuxiliaryGraph> {
        build_auxiliary(&self.graph, self.graph.id(depot), xi, self.capacity())
    }

    /// Builds a [`Route`] with cached cost, loads and arrival times.
    pub fn make_route(&self, depot: usize, visits: Vec<usize>, demand: &ResolvedDemand) -> Result<Route> {
        Route::from_visits(
            depot,
            visits,
            &self.graph,
            |v| demand.size_of(v).unwrap_or(0.0),
            |v| self.windows[v],
            self.departure(),
            self.config.allow_waiting,
            demand.id.clone(),
        )
    }

    /// Fast feasibility test by index, without diagnostics.
    pub fn is_feasible(&self, route: &Route, demand: &ResolvedDemand) -> bool {
        let v = &route.visits;
        if v.len() < 2 || v[0] != route.depot || *v.last().unwrap() != route.depot {
            return false;
        }
        let mut t = self.departure();
        if !self.windows[route.depot].contains(t) {
            return false;
        }
        let mut load = 0.0;
        let mut seen = std::collections::HashSet::new();
        for p in 1..v.len() {
            t = self.arrive(v[p - 1], v[p], t);
            if !self.windows[v[p]].contains(t) {
                return false;
            }
            if v[p] == route.depot {
                load = 0.0;
                continue;
            }
            let Some(d) = demand.size_of(v[p]) else {
                return false;
            };
            load += d;
            if load > self.capacity() + 1e-9 || !seen.insert(v[p]) {
                return false;
            }
        }
        true
    }

    pub fn depot_id(&self, k: usize) -> &NodeId {
        self.graph.id(k)
    }

    pub fn require_depot(&self, id: &NodeId) -> Result<usize> {
        let k = self.graph.require(id)?;
        if self.depots.binary_search(&k).is_err() {
            return Err(Error::input(format!("`{id}` is not a candidate depot")));
        }
        Ok(k)
    }
}

/// A demand realization with clients resolved to graph indices.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedDemand {
    pub id: String,
    /// Active clients, ascending.
    pub clients: Vec<usize>,
    pub sizes: Vec<f64>,
    pub total: f64,
    pub probability: Option<f64>,
}

impl ResolvedDemand {
    pub fn position(&self, node: usize) -> Option<usize> {
        self.clients.binary_search(&node).ok()
    }

    pub fn size_of(&self, node: usize) -> Option<f64> {
        self.position(node).map(|p| self.sizes[p])
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    pub fn len(&self) -> usize {
        self.clients.len()
    }
}
