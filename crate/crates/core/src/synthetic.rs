//! Reproducible synthetic instances: a sparse road network on random
//! points, an instance configuration and a matching demand model.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Arc, InstanceConfig, Network, Node, NodeId, TimeWindow};
use crate::scenario::{FittedDemandModel, LogNormalParams, OrderSizeLaw};

const MILES_PER_LAT: f64 = 69.0;
const MILES_PER_LON: f64 = 53.0;

#[derive(Clone, Debug)]
pub struct SyntheticSpec {
    pub clients: usize,
    pub depots: usize,
    pub seed: u64,
    /// Side of the square service area in miles.
    pub side_miles: f64,
    /// Road links per node to its nearest neighbours.
    pub neighbours: usize,
    pub speed_mph: f64,
    pub dollars_per_mile: f64,
    pub vehicle_capacity: f64,
    pub max_vehicles_per_depot: u32,
    pub vehicle_daily_cost: f64,
    /// Fraction of clients with a delivery window.
    pub window_share: f64,
    /// Working day length in hours; depots close at its end.
    pub horizon: f64,
    /// Coverage radius in travel hours.
    pub coverage_radius: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            clients: 20,
            depots: 3,
            seed: 0,
            side_miles: 60.0,
            neighbours: 5,
            speed_mph: 40.0,
            dollars_per_mile: 1.5,
            vehicle_capacity: 40.0,
            max_vehicles_per_depot: 3,
            vehicle_daily_cost: 60.0,
            window_share: 0.3,
            horizon: 10.0,
            coverage_radius: 0.75,
        }
    }
}

pub fn client_id(i: usize) -> NodeId {
    NodeId::new(format!("C{:02}", i + 1))
}

pub fn depot_id(k: usize) -> NodeId {
    NodeId::new(format!("D{:02}", k + 1))
}

/// Builds the network and configuration described by `spec`. Every node
/// links to its nearest neighbours in both directions and consecutive nodes
/// by longitude are linked too, so the network is strongly connected.
pub fn generate(spec: &SyntheticSpec) -> (Network, InstanceConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ids: Vec<NodeId> = (0..spec.depots).map(depot_id).chain((0..spec.clients).map(client_id)).collect();
    let pts: Vec<(f64, f64)> = ids
        .iter()
        .map(|_| (rng.random_range(0.0..spec.side_miles), rng.random_range(0.0..spec.side_miles)))
        .collect();
    let nodes = ids
        .iter()
        .zip(&pts)
        .map(|(id, &(x, y))| Node {
            id: id.clone(),
            lat: 40.0 + y / MILES_PER_LAT,
            lon: -78.0 + x / MILES_PER_LON,
        })
        .collect();
    let miles = |a: usize, b: usize| 1.2 * ((pts[a].0 - pts[b].0).powi(2) + (pts[a].1 - pts[b].1).powi(2)).sqrt();
    let n = ids.len();
    let mut links = std::collections::BTreeSet::new();
    for a in 0..n {
        let mut near: Vec<usize> = (0..n).filter(|&b| b != a).collect();
        near.sort_by(|&b, &c| miles(a, b).total_cmp(&miles(a, c)));
        for &b in near.iter().take(spec.neighbours) {
            links.insert((a.min(b), a.max(b)));
        }
    }
    let mut by_x: Vec<usize> = (0..n).collect();
    by_x.sort_by(|&a, &b| pts[a].0.total_cmp(&pts[b].0));
    for w in by_x.windows(2) {
        links.insert((w[0].min(w[1]), w[0].max(w[1])));
    }
    let mut arcs = Vec::new();
    for (a, b) in links {
        let d = miles(a, b);
        for (t, h) in [(a, b), (b, a)] {
            arcs.push(Arc {
                tail: ids[t].clone(),
                head: ids[h].clone(),
                miles: d,
                hours: d / spec.speed_mph,
                dollars: d * spec.dollars_per_mile,
            });
        }
    }

    let mut time_windows = BTreeMap::new();
    for k in 0..spec.depots {
        time_windows.insert(depot_id(k), TimeWindow::new(0.0, spec.horizon));
    }
    for i in 0..spec.clients {
        if rng.random_bool(spec.window_share) {
            let open = rng.random_range(0.0..spec.horizon / 2.0);
            let width = rng.random_range(2.0..spec.horizon / 2.0);
            time_windows.insert(client_id(i), TimeWindow::new(open, open + width));
        }
    }
    let depot_daily_cost = (0..spec.depots)
        .map(|k| (depot_id(k), rng.random_range(100.0..300.0f64).round()))
        .collect();
    let coverage_penalty = ids.iter().map(|i| (i.clone(), rng.random_range(20.0..80.0f64).round())).collect();
    let config = InstanceConfig {
        candidate_depots: (0..spec.depots).map(depot_id).collect(),
        depot_daily_cost,
        vehicle_daily_cost: spec.vehicle_daily_cost,
        max_vehicles_per_depot: spec.max_vehicles_per_depot,
        vehicle_capacity: spec.vehicle_capacity,
        time_windows,
        depot_departure_time: 0.0,
        coverage_radius: spec.coverage_radius,
        coverage_penalty,
        num_depots_to_open: None,
        allow_waiting: false,
        unserved_penalty: None,
    };
    (Network { nodes, arcs }, config)
}

/// A demand model over the clients of `spec` with activity probabilities
/// drawn uniformly from `[0.1, 0.9]`.
pub fn demand_model(spec: &SyntheticSpec, mean_active: f64, order_size_mean: f64) -> FittedDemandModel {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xd3a4d);
    FittedDemandModel {
        activity: (0..spec.clients)
            .map(|i| {
                let p: f64 = rng.random_range(0.1..0.9);
                (client_id(i), [p; 12])
            })
            .collect(),
        active_count: LogNormalParams {
            mu: mean_active.ln(),
            sigma: 0.25,
        },
        order_size_law: OrderSizeLaw::ZeroTruncatedPoisson,
        order_size_mean,
    }
}

/// A six-client, two-depot instance small enough to check by hand.
pub fn toy() -> (Network, InstanceConfig) {
    generate(&SyntheticSpec {
        clients: 6,
        depots: 2,
        seed: 6,
        side_miles: 30.0,
        neighbours: 3,
        vehicle_capacity: 20.0,
        max_vehicles_per_depot: 2,
        window_share: 0.0,
        ..Default::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Instance;

    #[test]
    fn generated_instances_are_valid_and_reproducible() {
        let spec = SyntheticSpec {
            clients: 15,
            depots: 3,
            seed: 9,
            ..Default::default()
        };
        let (net, cfg) = generate(&spec);
        assert_eq!(generate(&spec).0, net);
        net.validate().unwrap();
        cfg.validate().unwrap();
        let inst = Instance::new(&net, cfg).unwrap();
        assert_eq!(inst.depots.len(), 3);
        let (tn, tc) = toy();
        Instance::new(&tn, tc).unwrap();
    }
}
