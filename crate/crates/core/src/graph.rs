//! Shortest-path preprocessing: the complete graph over all network nodes,
//! and the per-depot auxiliary graph used by the pricing search.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{DemandRealization, Network, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cost,
    Time,
    Distance,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Cost, Metric::Time, Metric::Distance];

    fn weight(self, a: &crate::model::Arc) -> f64 {
        match self {
            Metric::Cost => a.dollars,
            Metric::Time => a.hours,
            Metric::Distance => a.miles,
        }
    }
}

/// All-pairs shortest distances for one metric together with a predecessor
/// table: `pred[s * n + j]` is the node preceding `j` on the chosen `s -> j`
/// path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShortestPaths {
    n: usize,
    #[serde(with = "crate::serde_util::vec_inf_as_null")]
    dist: Vec<f64>,
    pred: Vec<Option<u32>>,
}

impl ShortestPaths {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    /// Node sequence of an achieving path, or `None` when `j` is unreachable.
    pub fn path(&self, i: usize, j: usize) -> Option<Vec<usize>> {
        if !self.get(i, j).is_finite() {
            return None;
        }
        let mut rev = vec![j];
        let mut cur = j;
        while cur != i {
            cur = self.pred[i * self.n + cur]? as usize;
            rev.push(cur);
        }
        rev.reverse();
        Some(rev)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then_with(|| o.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Sorted node ids plus adjacency lists (cheapest parallel arc kept).
struct Indexed {
    ids: Vec<NodeId>,
    adj: Vec<Vec<(usize, f64)>>,
}

fn index_network(net: &Network, metric: Metric) -> Result<Indexed> {
    let mut ids: Vec<NodeId> = net.nodes.iter().map(|n| n.id.clone()).collect();
    ids.sort();
    ids.dedup();
    if ids.len() != net.nodes.len() {
        return Err(Error::input("duplicate node id in network"));
    }
    let pos: HashMap<&NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
    let mut best: HashMap<(usize, usize), f64> = HashMap::new();
    for a in &net.arcs {
        let t = *pos.get(&a.tail).ok_or_else(|| Error::UnknownNode(a.tail.clone()))?;
        let h = *pos.get(&a.head).ok_or_else(|| Error::UnknownNode(a.head.clone()))?;
        let w = metric.weight(a);
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::input(format!(
                "arc {} -> {} has invalid {metric:?} weight {w}",
                a.tail, a.head
            )));
        }
        if t == h {
            continue;
        }
        let e = best.entry((t, h)).or_insert(f64::INFINITY);
        *e = e.min(w);
    }
    let mut adj = vec![Vec::new(); ids.len()];
    for ((t, h), w) in best {
        adj[t].push((h, w));
    }
    for l in &mut adj {
        l.sort_by_key(|&(h, _)| h);
    }
    Ok(Indexed { ids, adj })
}

fn dijkstra(adj: &[Vec<(usize, f64)>], s: usize) -> (Vec<f64>, Vec<Option<u32>>) {
    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[s] = 0.0;
    heap.push(HeapItem(0.0, s));
    while let Some(HeapItem(d, u)) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = Some(u as u32);
                heap.push(HeapItem(nd, v));
            }
        }
    }
    (dist, pred)
}

/// Shortest paths for one metric by a label-setting search from every node.
/// Nodes are indexed in sorted id order.
pub fn all_pairs_shortest(net: &Network, metric: Metric) -> Result<ShortestPaths> {
    let g = index_network(net, metric)?;
    let n = g.ids.len();
    let rows: Vec<_> = (0..n).into_par_iter().map(|s| dijkstra(&g.adj, s)).collect();
    let mut dist = Vec::with_capacity(n * n);
    let mut pred = Vec::with_capacity(n * n);
    for (d, p) in rows {
        dist.extend(d);
        pred.extend(p);
    }
    Ok(ShortestPaths { n, dist, pred })
}

/// SHA-256 of the canonical JSON encoding of a network.
pub fn network_hash(net: &Network) -> String {
    let bytes = serde_json::to_vec(net).expect("network serializes");
    hex::encode(Sha256::digest(&bytes))
}

const CACHE_FORMAT_VERSION: u32 = 1;

/// Complete shortest-path graph over every node of the network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompleteGraph {
    ids: Vec<NodeId>,
    coords: Vec<(f64, f64)>,
    cost: ShortestPaths,
    time: ShortestPaths,
    dist: ShortestPaths,
    #[serde(skip)]
    index: HashMap<NodeId, usize>,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    format_version: u32,
    network_hash: String,
    graph: CompleteGraph,
}

impl CompleteGraph {
    pub fn build(net: &Network) -> Result<Self> {
        net.validate()?;
        let (cost, time, dist) = (
            all_pairs_shortest(net, Metric::Cost)?,
            all_pairs_shortest(net, Metric::Time)?,
            all_pairs_shortest(net, Metric::Distance)?,
        );
        let mut nodes: Vec<_> = net.nodes.iter().collect();
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        let mut g = CompleteGraph {
            ids: nodes.iter().map(|n| n.id.clone()).collect(),
            coords: nodes.iter().map(|n| (n.lat, n.lon)).collect(),
            cost,
            time,
            dist,
            index: HashMap::new(),
        };
        g.reindex();
        Ok(g)
    }

    /// Loads the graph from `cache` when its recorded network hash matches,
    /// otherwise builds it and rewrites the cache.
    pub fn load_or_build(net: &Network, cache: &Path) -> Result<Self> {
        let hash = network_hash(net);
        if let Ok(text) = std::fs::read_to_string(cache) {
            match serde_json::from_str::<CacheFile>(&text) {
                Ok(c) if c.format_version == CACHE_FORMAT_VERSION && c.network_hash == hash => {
                    let mut g = c.graph;
                    g.reindex();
                    return Ok(g);
                }
                _ => log::info!("shortest-path cache {} is stale, rebuilding", cache.display()),
            }
        }
        let g = Self::build(net)?;
        let file = CacheFile {
            format_version: CACHE_FORMAT_VERSION,
            network_hash: hash,
            graph: g.clone(),
        };
        let text = serde_json::to_string(&file).expect("graph serializes");
        std::fs::write(cache, text).map_err(|e| Error::io(cache, e))?;
        Ok(g)
    }

    fn reindex(&mut self) {
        self.index = self.ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &NodeId {
        &self.ids[i]
    }

    pub fn try_id(&self, i: usize) -> Option<&NodeId> {
        self.ids.get(i)
    }

    pub fn index_of(&self, id: &NodeId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn require(&self, id: &NodeId) -> Result<usize> {
        self.index_of(id).ok_or_else(|| Error::UnknownNode(id.clone()))
    }

    /// `(lat, lon)` of node `i`.
    pub fn coords(&self, i: usize) -> (f64, f64) {
        self.coords[i]
    }

    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.cost.get(i, j)
    }

    pub fn time(&self, i: usize, j: usize) -> f64 {
        self.time.get(i, j)
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist.get(i, j)
    }

    pub fn metric(&self, m: Metric) -> &ShortestPaths {
        match m {
            Metric::Cost => &self.cost,
            Metric::Time => &self.time,
            Metric::Distance => &self.dist,
        }
    }

    /// Original-network node sequence realizing the `m`-shortest `i -> j`.
    pub fn expand(&self, m: Metric, i: usize, j: usize) -> Option<Vec<NodeId>> {
        self.metric(m)
            .path(i, j)
            .map(|p| p.into_iter().map(|v| self.ids[v].clone()).collect())
    }
}

/// Number of replenishment nodes for total demand `total` and capacity `q`:
/// `ceil(total / q)`, with exact multiples not rounded up by float noise.
pub fn replenishment_count(total: f64, q: f64) -> usize {
    let ratio = total / q;
    let r = ratio.ceil();
    // 0.3 / 0.1 evaluates to 2.9999999999999996 but 0.6 / 0.2 to 3.0000000000000004.
    if r - ratio > 1.0 - 1e-9 {
        (r - 1.0) as usize
    } else {
        r as usize
    }
}

/// A node of the auxiliary graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AuxNode {
    Start,
    End,
    /// Position in [`AuxiliaryGraph::clients`].
    Client(usize),
    /// Replenishment copy `0..R` of the depot.
    Replenish(usize),
}

/// Depot-anchored graph for one realization: a start copy, an end copy and
/// `R` replenishment copies of the depot, plus the active clients. Arc
/// weights come from the complete graph; depot copies reuse the depot's row
/// and column.
#[derive(Clone, Debug)]
pub struct AuxiliaryGraph {
    pub depot: usize,
    /// Complete-graph indices of the active clients, ascending.
    pub clients: Vec<usize>,
    pub demands: Vec<f64>,
    pub replenishments: usize,
    pub total_demand: f64,
}

impl AuxiliaryGraph {
    pub fn num_nodes(&self) -> usize {
        self.clients.len() + self.replenishments + 2
    }

    /// Complete-graph index behind an auxiliary node.
    pub fn base(&self, v: AuxNode) -> usize {
        match v {
            AuxNode::Client(p) => self.clients[p],
            _ => self.depot,
        }
    }

    pub fn start_arcs(&self) -> impl Iterator<Item = (AuxNode, AuxNode)> + '_ {
        (0..self.clients.len()).map(|p| (AuxNode::Start, AuxNode::Client(p)))
    }

    pub fn end_arcs(&self) -> impl Iterator<Item = (AuxNode, AuxNode)> + '_ {
        (0..self.clients.len()).map(|p| (AuxNode::Client(p), AuxNode::End))
    }

    pub fn replenishment_arcs(&self) -> impl Iterator<Item = (AuxNode, AuxNode)> + '_ {
        (0..self.replenishments).flat_map(move |j| {
            (0..self.clients.len()).flat_map(move |p| {
                [
                    (AuxNode::Replenish(j), AuxNode::Client(p)),
                    (AuxNode::Client(p), AuxNode::Replenish(j)),
                ]
            })
        })
    }

    pub fn client_arcs(&self) -> impl Iterator<Item = (AuxNode, AuxNode)> + '_ {
        let n = self.clients.len();
        (0..n).flat_map(move |a| {
            (0..n)
                .filter(move |&b| b != a)
                .map(move |b| (AuxNode::Client(a), AuxNode::Client(b)))
        })
    }

    pub fn cost(&self, cg: &CompleteGraph, a: AuxNode, b: AuxNode) -> f64 {
        cg.cost(self.base(a), self.base(b))
    }

    pub fn time(&self, cg: &CompleteGraph, a: AuxNode, b: AuxNode) -> f64 {
        cg.time(self.base(a), self.base(b))
    }
}

/// Builds the auxiliary graph of `depot` for the realization `xi`.
pub fn build_auxiliary(
    cg: &CompleteGraph,
    depot: &NodeId,
    xi: &DemandRealization,
    q: f64,
) -> Result<AuxiliaryGraph> {
    let depot = cg.require(depot)?;
    let mut clients = Vec::new();
    for id in xi.active() {
        let i = cg.require(id)?;
        if i != depot {
            clients.push(i);
        }
    }
    clients.sort_unstable();
    let demands: Vec<f64> = clients.iter().map(|&i| xi.orders[cg.id(i)]).collect();
    let total: f64 = demands.iter().sum();
    if !(total > 0.0) {
        return Err(Error::input(format!(
            "realization `{}` has no demand to route from `{}`",
            xi.id,
            cg.id(depot)
        )));
    }
    Ok(AuxiliaryGraph {
        depot,
        clients,
        demands,
        replenishments: replenishment_count(total, q),
        total_demand: total,
    })
}
