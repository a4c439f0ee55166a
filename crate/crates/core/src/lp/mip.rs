//! Branch-and-bound over the simplex relaxation.
//!
//! Node selection is best-bound, interleaved with depth-first dives: after a
//! node branches, the child in the rounding direction of the branching
//! variable is processed next and its sibling is queued. Branching picks the
//! most fractional variable, ties going to the lowest index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{
    relative_gap, simplex::solve_lp_bounded, LinearModel, ObjectiveSense, SolveResult, Status,
    INT_TOL,
};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct MipOptions {
    pub gap_tol: f64,
    pub node_limit: usize,
    /// Objective value (model sense) of a known feasible solution; nodes
    /// that cannot beat it are pruned.
    pub cutoff: Option<f64>,
}

impl Default for MipOptions {
    fn default() -> Self {
        MipOptions {
            gap_tol: 1e-9,
            node_limit: 100_000,
            cutoff: None,
        }
    }
}

struct Node {
    /// Parent relaxation value in minimization sense.
    bound: f64,
    id: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    // Max-heap: the smallest bound (then smallest id) pops first.
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound.total_cmp(&self.bound).then_with(|| o.id.cmp(&self.id))
    }
}

/// Solves `model` honoring integrality flags.
pub fn solve_mip(model: &LinearModel, opts: &MipOptions) -> Result<SolveResult> {
    model.validate()?;
    let n = model.num_vars();
    let m = model.num_rows();
    let sign = if model.sense == ObjectiveSense::Maximize { -1.0 } else { 1.0 };
    let mut lower: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
    let mut upper: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
    for (j, v) in model.variables.iter().enumerate() {
        if v.integer {
            lower[j] = (lower[j] - INT_TOL).ceil();
            upper[j] = (upper[j] + INT_TOL).floor();
        }
    }

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let cutoff = opts.cutoff.map(|c| sign * c).unwrap_or(f64::INFINITY);
    let prune_at = |inc: f64| -> f64 {
        let inc = inc.min(cutoff);
        if inc.is_finite() {
            inc - (opts.gap_tol * inc.abs().max(1.0)).max(1e-9)
        } else {
            f64::INFINITY
        }
    };
    let mut heap = BinaryHeap::new();
    let mut next_id = 1;
    let mut nodes = 0;
    let mut iterations = 0;
    let mut root_status = None;
    let mut current = Some(Node {
        bound: f64::NEG_INFINITY,
        id: 0,
        lower,
        upper,
    });
    let mut limit_hit = false;

    loop {
        let node = match current.take() {
            Some(nd) => nd,
            None => match heap.pop() {
                Some(nd) => nd,
                None => break,
            },
        };
        let inc_val = incumbent.as_ref().map_or(f64::INFINITY, |(v, _)| *v);
        if node.bound >= prune_at(inc_val) {
            continue;
        }
        if nodes >= opts.node_limit {
            heap.push(node);
            limit_hit = true;
            break;
        }
        nodes += 1;
        let r = solve_lp_bounded(model, &node.lower, &node.upper)?;
        iterations += r.iterations;
        if root_status.is_none() {
            root_status = Some(r.status);
        }
        match r.status {
            Status::Optimal => {}
            Status::Infeasible => continue,
            Status::Unbounded if node.id == 0 => {
                return Ok(SolveResult::without_solution(Status::Unbounded, n, m, iterations));
            }
            // An unbounded or stalled node below the root cannot be trusted;
            // report the limit instead of a wrong answer.
            _ => {
                limit_hit = true;
                break;
            }
        }
        let value = sign * r.objective;
        if value >= prune_at(inc_val) {
            continue;
        }
        let mut branch: Option<(usize, f64)> = None;
        for (j, v) in model.variables.iter().enumerate() {
            if !v.integer {
                continue;
            }
            let x = r.primal[j];
            let frac = x - x.floor();
            if frac <= INT_TOL || frac >= 1.0 - INT_TOL {
                continue;
            }
            let score = (frac - 0.5).abs();
            if branch.map_or(true, |(_, s)| score < s - 1e-12) {
                branch = Some((j, score));
            }
        }
        match branch {
            None => {
                let mut x = r.primal.clone();
                for (j, v) in model.variables.iter().enumerate() {
                    if v.integer {
                        x[j] = x[j].round();
                    }
                }
                let obj = sign * model.objective_value(&x);
                if obj < inc_val {
                    incumbent = Some((obj, x));
                }
            }
            Some((j, _)) => {
                let x = r.primal[j];
                let mut down = Node {
                    bound: value,
                    id: next_id,
                    lower: node.lower.clone(),
                    upper: node.upper.clone(),
                };
                down.upper[j] = x.floor();
                let mut up = Node {
                    bound: value,
                    id: next_id + 1,
                    lower: node.lower,
                    upper: node.upper,
                };
                up.lower[j] = x.ceil();
                next_id += 2;
                let (dive, queue) = if x - x.floor() >= 0.5 { (up, down) } else { (down, up) };
                heap.push(queue);
                current = Some(dive);
            }
        }
    }

    let open_bound = heap
        .iter()
        .map(|nd: &Node| nd.bound)
        .chain(current.iter().map(|nd| nd.bound))
        .fold(f64::INFINITY, f64::min);
    match incumbent {
        Some((val, x)) => {
            let bound = if limit_hit { open_bound.min(val) } else { val };
            let gap = relative_gap(val, bound);
            let status = if limit_hit && gap > opts.gap_tol {
                Status::NodeLimit
            } else {
                Status::Optimal
            };
            Ok(SolveResult {
                status,
                objective: model.objective_value(&x),
                primal: x,
                duals: vec![0.0; m],
                reduced_costs: vec![0.0; n],
                best_bound: sign * bound,
                gap,
                nodes,
                iterations,
            })
        }
        None => {
            let status = if limit_hit {
                Status::NodeLimit
            } else if root_status == Some(Status::Unbounded) {
                Status::Unbounded
            } else {
                Status::Infeasible
            };
            let mut r = SolveResult::without_solution(status, n, m, iterations);
            r.nodes = nodes;
            if limit_hit {
                r.best_bound = sign * open_bound;
            }
            Ok(r)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;

    #[test]
    fn small_knapsack() {
        let mut m = LinearModel::new(ObjectiveSense::Maximize);
        let a = m.add_var("a", 0.0, 1.0, 10.0, true);
        let b = m.add_var("b", 0.0, 1.0, 6.0, true);
        m.add_row("cap", vec![(a, 5.0), (b, 4.0)], RowSense::Le, 8.0);
        let r = solve_mip(&m, &MipOptions::default()).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert_eq!(r.primal, vec![1.0, 0.0]);
        assert!((r.objective - 10.0).abs() < 1e-9);
    }

    #[test]
    fn integral_polytope_needs_no_branching() {
        // Interval matrix: consecutive-ones rows.
        let mut m = LinearModel::new(ObjectiveSense::Minimize);
        let v: Vec<_> = (0..4)
            .map(|i| m.add_var(format!("x{i}"), 0.0, 5.0, 1.0 + i as f64, true))
            .collect();
        m.add_row("a", vec![(v[0], 1.0), (v[1], 1.0)], RowSense::Ge, 2.0);
        m.add_row("b", vec![(v[1], 1.0), (v[2], 1.0), (v[3], 1.0)], RowSense::Ge, 3.0);
        let lp = solve_lp(&m).unwrap();
        let ip = solve_mip(&m, &MipOptions::default()).unwrap();
        assert!((lp.objective - ip.objective).abs() < 1e-9);
        assert_eq!(ip.nodes, 1);
    }

    #[test]
    fn infeasible_integer_problem() {
        let mut m = LinearModel::new(ObjectiveSense::Minimize);
        let x = m.add_var("x", 0.0, 10.0, 1.0, true);
        m.add_row("a", vec![(x, 2.0)], RowSense::Eq, 3.0);
        assert_eq!(solve_mip(&m, &MipOptions::default()).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn node_limit_reports_status() {
        let mut m = LinearModel::new(ObjectiveSense::Maximize);
        let v: Vec<_> = (0..12)
            .map(|i| m.add_var(format!("x{i}"), 0.0, 1.0, 3.0 + (i % 5) as f64, true))
            .collect();
        m.add_row("cap", v.iter().map(|&x| (x, 2.0 + (x.0 % 3) as f64)).collect(), RowSense::Le, 13.5);
        let opts = MipOptions {
            node_limit: 1,
            ..Default::default()
        };
        let r = solve_mip(&m, &opts).unwrap();
        assert!(matches!(r.status, Status::NodeLimit | Status::Optimal));
        let full = solve_mip(&m, &MipOptions::default()).unwrap();
        assert_eq!(full.status, Status::Optimal);
        assert!(full.best_bound >= full.objective - 1e-9);
    }
}
