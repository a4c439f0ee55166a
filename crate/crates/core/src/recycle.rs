//! Route recycling between demand realizations.
//!
//! A route built for one day is walked position by position; each client
//! visit is replaced by the still-unused client of the target day whose
//! substitution is cheapest, subject to capacity and time windows. Depot
//! visits (replenishments) are copied through and reset the load.

use std::collections::BTreeSet;

use crate::colgen::RoutePool;
use crate::error::Result;
use crate::graph::replenishment_count;
use crate::instance::{Instance, ResolvedDemand};
use crate::model::Route;

/// Extra cost of visiting `candidate` instead of `original` between `prev`
/// and `next`. Negative values are savings.
pub fn replacement_cost(inst: &Instance, prev: usize, original: usize, next: usize, candidate: usize) -> f64 {
    let c = |a, b| inst.graph.cost(a, b);
    (c(prev, candidate) + c(candidate, next)) - (c(prev, original) + c(original, next))
}

/// Maps `route` onto the `target` realization. The result is always
/// feasible for `target`; it may be the empty route `(depot, depot)`.
pub fn recycle_route(inst: &Instance, route: &Route, target: &ResolvedDemand) -> Result<Route> {
    let depot = route.depot;
    let cap = inst.capacity();
    let close = inst.window(depot);
    let src = &route.visits;

    let mut unused: BTreeSet<usize> = target.clients.iter().copied().filter(|&c| c != depot).collect();
    let mut out = vec![depot];
    let mut t = inst.departure();
    let mut load = 0.0;
    // Routes may revisit the depot at most as often as the day's
    // replenishment count, like priced routes.
    let reload_cap = replenishment_count(target.total, cap);
    let mut reloads = 0;

    for p in 1..src.len().saturating_sub(1) {
        let orig = src[p];
        let prev = *out.last().unwrap();
        if orig == depot {
            // A replenishment right after the depot would be a no-op.
            if prev != depot && reloads < reload_cap {
                t = inst.arrive(prev, depot, t);
                out.push(depot);
                load = 0.0;
                reloads += 1;
            }
            continue;
        }
        let next = src[p + 1];
        let mut best: Option<(f64, usize, f64)> = None;
        for &cand in &unused {
            let d = target.size_of(cand).unwrap_or(0.0);
            if load + d > cap + 1e-9 {
                continue;
            }
            let at = inst.arrive(prev, cand, t);
            if !inst.window(cand).contains(at) {
                continue;
            }
            // The vehicle must still be able to get home in time.
            if !close.contains(inst.arrive(cand, depot, at)) {
                continue;
            }
            let value = replacement_cost(inst, prev, orig, next, cand);
            // Candidates iterate in index order, which is id order, so a
            // strict comparison keeps the lexicographically first on ties.
            if best.is_none_or(|(v, _, _)| value < v) {
                best = Some((value, cand, at));
            }
        }
        if let Some((_, cand, at)) = best {
            unused.remove(&cand);
            load += target.size_of(cand).unwrap_or(0.0);
            t = at;
            out.push(cand);
        }
    }
    while out.len() > 1 && *out.last().unwrap() == depot {
        out.pop();
    }
    out.push(depot);
    let mut recycled = inst.make_route(depot, out, target)?;
    if !inst.is_feasible(&recycled, target) {
        // Only reachable when the depot's own window rejects the departure.
        recycled = inst.make_route(depot, vec![depot, depot], target)?;
    }
    Ok(recycled)
}

/// Recycles every route of `source` into a fresh pool for `target`,
/// dropping empty and duplicate results. Only depots in `depots` are
/// considered when it is given.
pub fn recycle_pool(
    inst: &Instance,
    source: &RoutePool,
    target: &ResolvedDemand,
    depots: Option<&[usize]>,
) -> Result<RoutePool> {
    let mut pool = RoutePool::new(target.id.clone());
    recycle_into(inst, source, target, depots, &mut pool)?;
    Ok(pool)
}

/// Like [`recycle_pool`] but merges into an existing pool; returns the
/// number of routes added.
pub fn recycle_into(
    inst: &Instance,
    source: &RoutePool,
    target: &ResolvedDemand,
    depots: Option<&[usize]>,
    pool: &mut RoutePool,
) -> Result<usize> {
    let mut added = 0;
    for r in source.iter() {
        if depots.is_some_and(|d| !d.contains(&r.depot)) {
            continue;
        }
        let rr = recycle_route(inst, r, target)?;
        if !rr.is_empty() && pool.insert(rr) {
            added += 1;
        }
    }
    Ok(added)
}
