//! Bounded revised simplex on a dense explicit basis inverse.
//!
//! Every row gets a logical variable `s_i` equal to its activity, so the
//! working system is `A x - s = 0` with bounds on both `x` and `s` (a `<=`
//! row bounds `s_i` above by the rhs, a `>=` row below, an equality row on
//! both sides). The initial basis is all logicals. While some basic
//! variable is out of bounds the method minimizes the sum of
//! infeasibilities; afterwards it minimizes the true cost.

use super::{LinearModel, ObjectiveSense, SolveResult, Status, FEAS_TOL, OPT_TOL};
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const PHASE1_DJ_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 50;
const BLAND_AFTER: usize = 1000;

/// Solves the continuous relaxation of `model` (integrality flags ignored).
pub fn solve_lp(model: &LinearModel) -> Result<SolveResult> {
    model.validate()?;
    let lower: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
    let upper: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
    solve_lp_bounded(model, &lower, &upper)
}

/// Like [`solve_lp`] with the variable bounds replaced; used by
/// branch-and-bound. The model must already be validated.
pub(crate) fn solve_lp_bounded(model: &LinearModel, lower: &[f64], upper: &[f64]) -> Result<SolveResult> {
    let n = model.num_vars();
    let m = model.num_rows();
    if lower.iter().zip(upper).any(|(l, u)| l > u) {
        return Ok(SolveResult::without_solution(Status::Infeasible, n, m, 0));
    }
    let mut s = Simplex::new(model, lower, upper);
    let limit = 20_000usize.max(50 * (n + m));
    let status = s.run(limit)?;
    let iterations = s.iterations;
    if status != Status::Optimal {
        return Ok(SolveResult::without_solution(status, n, m, iterations));
    }
    let flip = if model.sense == ObjectiveSense::Maximize { -1.0 } else { 1.0 };
    let y = s.duals(false);
    let primal: Vec<f64> = s.x[..n].to_vec();
    let reduced_costs: Vec<f64> = (0..n).map(|j| flip * (s.cost[j] - s.col_dot(&y, j))).collect();
    let duals: Vec<f64> = y.iter().map(|v| flip * v).collect();
    let objective = model.objective_value(&primal);
    Ok(SolveResult {
        status,
        objective,
        primal,
        duals,
        reduced_costs,
        best_bound: objective,
        gap: 0.0,
        nodes: 0,
        iterations,
    })
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum NonBasic {
    Lower,
    Upper,
    /// Free variable resting at zero.
    Zero,
    Basic,
}

struct Simplex {
    m: usize,
    n: usize,
    cols: Vec<Vec<(usize, f64)>>,
    /// Minimization costs of structurals followed by zeros for logicals.
    cost: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    x: Vec<f64>,
    state: Vec<NonBasic>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    pivots_since_refactor: usize,
    degenerate_run: usize,
    iterations: usize,
}

enum Step {
    Optimal,
    Infeasible,
    Unbounded,
    Continue,
}

impl Simplex {
    fn new(model: &LinearModel, lower: &[f64], upper: &[f64]) -> Self {
        let n = model.num_vars();
        let m = model.num_rows();
        let mut cols = vec![Vec::new(); n];
        for (i, c) in model.constraints.iter().enumerate() {
            for &(v, a) in &c.coefficients {
                if a != 0.0 {
                    cols[v.0].push((i, a));
                }
            }
        }
        // Merge duplicate entries of one variable in one row.
        for col in &mut cols {
            col.sort_by_key(|&(i, _)| i);
            col.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
        }
        let flip = if model.sense == ObjectiveSense::Maximize { -1.0 } else { 1.0 };
        let mut cost: Vec<f64> = model.variables.iter().map(|v| flip * v.objective).collect();
        cost.resize(n + m, 0.0);
        let mut lb = lower.to_vec();
        let mut ub = upper.to_vec();
        for c in &model.constraints {
            let (l, u) = match c.sense {
                super::RowSense::Le => (f64::NEG_INFINITY, c.rhs),
                super::RowSense::Ge => (c.rhs, f64::INFINITY),
                super::RowSense::Eq => (c.rhs, c.rhs),
            };
            lb.push(l);
            ub.push(u);
        }
        let mut x = vec![0.0; n + m];
        let mut state = vec![NonBasic::Basic; n + m];
        for j in 0..n {
            let (l, u) = (lb[j], ub[j]);
            state[j] = if l.is_finite() {
                x[j] = l;
                NonBasic::Lower
            } else if u.is_finite() {
                x[j] = u;
                NonBasic::Upper
            } else {
                NonBasic::Zero
            };
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = -1.0;
        }
        let mut s = Simplex {
            m,
            n,
            cols,
            cost,
            lb,
            ub,
            x,
            state,
            basis: (n..n + m).collect(),
            binv,
            pivots_since_refactor: 0,
            degenerate_run: 0,
            iterations: 0,
        };
        s.recompute_basics();
        s
    }

    fn col_dot(&self, y: &[f64], j: usize) -> f64 {
        if j < self.n {
            self.cols[j].iter().map(|&(r, a)| y[r] * a).sum()
        } else {
            -y[j - self.n]
        }
    }

    /// `B^-1 a_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        if j < self.n {
            for &(r, a) in &self.cols[j] {
                for (i, al) in alpha.iter_mut().enumerate() {
                    *al += self.binv[i * m + r] * a;
                }
            }
        } else {
            let r = j - self.n;
            for (i, al) in alpha.iter_mut().enumerate() {
                *al = -self.binv[i * m + r];
            }
        }
        alpha
    }

    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut rhs = vec![0.0; m];
        for j in 0..self.n + m {
            if self.state[j] == NonBasic::Basic || self.x[j] == 0.0 {
                continue;
            }
            let v = self.x[j];
            if j < self.n {
                for &(r, a) in &self.cols[j] {
                    rhs[r] -= a * v;
                }
            } else {
                rhs[j - self.n] += v;
            }
        }
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.x[self.basis[i]] = row.iter().zip(&rhs).map(|(b, r)| b * r).sum();
        }
    }

    /// Rebuilds the basis inverse from scratch by Gauss-Jordan elimination
    /// with partial pivoting.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (k, &j) in self.basis.iter().enumerate() {
            if j < self.n {
                for &(r, v) in &self.cols[j] {
                    a[r * m + k] = v;
                }
            } else {
                a[(j - self.n) * m + k] = -1.0;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let (p, best) = (c..m)
                .map(|r| (r, a[r * m + c].abs()))
                .fold((c, -1.0), |acc, (r, v)| if v > acc.1 { (r, v) } else { acc });
            if best < 1e-11 {
                return Err(Error::Numerical("singular basis during refactorization".into()));
            }
            if p != c {
                for k in 0..m {
                    a.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let d = a[c * m + c];
            for k in 0..m {
                a[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = a[r * m + c];
                if f == 0.0 {
                    continue;
                }
                for k in 0..m {
                    a[r * m + k] -= f * a[c * m + k];
                    inv[r * m + k] -= f * inv[c * m + k];
                }
            }
        }
        // `inv` is the inverse of the matrix whose column k is basis[k]; its
        // row k therefore yields the coordinate of basis[k].
        self.binv = inv;
        self.pivots_since_refactor = 0;
        self.recompute_basics();
        Ok(())
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lb[j] - FEAS_TOL {
            self.lb[j] - v
        } else if v > self.ub[j] + FEAS_TOL {
            v - self.ub[j]
        } else {
            0.0
        }
    }

    fn primal_infeasible(&self) -> bool {
        self.basis.iter().any(|&j| self.infeasibility(j) > 0.0)
    }

    /// Simplex multipliers for the phase-one (`phase1`) or true costs.
    fn duals(&self, phase1: bool) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &j) in self.basis.iter().enumerate() {
            let c = if phase1 {
                let v = self.x[j];
                if v < self.lb[j] - FEAS_TOL {
                    -1.0
                } else if v > self.ub[j] + FEAS_TOL {
                    1.0
                } else {
                    0.0
                }
            } else {
                self.cost[j]
            };
            if c != 0.0 {
                for (r, yr) in y.iter_mut().enumerate() {
                    *yr += c * self.binv[i * m + r];
                }
            }
        }
        y
    }

    fn run(&mut self, limit: usize) -> Result<Status> {
        let mut verified = false;
        loop {
            if self.iterations >= limit {
                return Ok(Status::IterationLimit);
            }
            match self.iterate()? {
                Step::Continue => verified = false,
                Step::Unbounded => return Ok(Status::Unbounded),
                terminal => {
                    // Confirm on a fresh factorization before reporting.
                    if verified {
                        return Ok(match terminal {
                            Step::Optimal => Status::Optimal,
                            _ => Status::Infeasible,
                        });
                    }
                    self.refactor()?;
                    verified = true;
                }
            }
        }
    }

    fn iterate(&mut self) -> Result<Step> {
        let phase1 = self.primal_infeasible();
        let y = self.duals(phase1);
        let bland = self.degenerate_run >= BLAND_AFTER;
        let tol = if phase1 { PHASE1_DJ_TOL } else { OPT_TOL };

        // Entering variable and its direction (+1 increase, -1 decrease).
        let mut enter: Option<(usize, f64, f64)> = None;
        for j in 0..self.n + self.m {
            let st = self.state[j];
            if st == NonBasic::Basic || self.lb[j] == self.ub[j] {
                continue;
            }
            let c = if phase1 { 0.0 } else { self.cost[j] };
            let d = c - self.col_dot(&y, j);
            let dir = match st {
                NonBasic::Lower if d < -tol => 1.0,
                NonBasic::Upper if d > tol => -1.0,
                NonBasic::Zero if d.abs() > tol => -d.signum(),
                _ => continue,
            };
            if bland {
                enter = Some((j, dir, d));
                break;
            }
            if enter.map_or(true, |(_, _, best)| d.abs() > best.abs()) {
                enter = Some((j, dir, d));
            }
        }
        let Some((q, dir, _)) = enter else {
            return Ok(if phase1 { Step::Infeasible } else { Step::Optimal });
        };
        self.iterations += 1;

        let alpha = self.ftran(q);
        // Basic i moves at rate delta_i = -dir * alpha_i per unit step.
        let range = |s: &Self, j: usize| -> (f64, f64) {
            let v = s.x[j];
            if phase1 && v < s.lb[j] - FEAS_TOL {
                (f64::NEG_INFINITY, s.lb[j])
            } else if phase1 && v > s.ub[j] + FEAS_TOL {
                (s.ub[j], f64::INFINITY)
            } else {
                (s.lb[j], s.ub[j])
            }
        };
        // Harris pass 1: largest step keeping all basics within relaxed bounds.
        let mut theta_max = f64::INFINITY;
        for i in 0..self.m {
            let delta = -dir * alpha[i];
            if delta.abs() <= PIVOT_TOL {
                continue;
            }
            let j = self.basis[i];
            let (lo, hi) = range(self, j);
            let t = if delta > 0.0 {
                (hi - self.x[j] + FEAS_TOL) / delta
            } else {
                (self.x[j] - lo + FEAS_TOL) / -delta
            };
            theta_max = theta_max.min(t);
        }
        // Pass 2: among rows whose exact ratio fits, prefer the largest pivot.
        let mut leave: Option<(usize, f64, f64)> = None; // (row, ratio, |delta|)
        if theta_max.is_finite() {
            for i in 0..self.m {
                let delta = -dir * alpha[i];
                if delta.abs() <= PIVOT_TOL {
                    continue;
                }
                let j = self.basis[i];
                let (lo, hi) = range(self, j);
                let t = if delta > 0.0 {
                    (hi - self.x[j]) / delta
                } else {
                    (self.x[j] - lo) / -delta
                };
                if !t.is_finite() || t > theta_max {
                    continue;
                }
                let better = match leave {
                    None => true,
                    Some((r, bt, bd)) => {
                        if bland {
                            t < bt - 1e-12 || (t <= bt + 1e-12 && j < self.basis[r])
                        } else {
                            delta.abs() > bd
                        }
                    }
                };
                if better {
                    leave = Some((i, t.max(0.0), delta.abs()));
                }
            }
        }
        let span = self.ub[q] - self.lb[q];
        let theta = match leave {
            Some((_, t, _)) if t < span => t,
            _ if span.is_finite() => {
                // Bound flip: the entering variable reaches its other bound.
                self.apply_step(q, dir, span, &alpha);
                self.x[q] = if dir > 0.0 { self.ub[q] } else { self.lb[q] };
                self.state[q] = if dir > 0.0 { NonBasic::Upper } else { NonBasic::Lower };
                self.note_step(span);
                return Ok(Step::Continue);
            }
            Some((_, t, _)) => t,
            None => {
                if phase1 {
                    return Err(Error::Numerical("phase-one ray without a blocking row".into()));
                }
                return Ok(Step::Unbounded);
            }
        };
        let (r, _, _) = leave.expect("blocking row");
        let out = self.basis[r];
        let delta_r = -dir * alpha[r];
        let (lo, hi) = range(self, out);
        self.apply_step(q, dir, theta, &alpha);
        if delta_r > 0.0 {
            self.x[out] = hi;
            self.state[out] = if hi == self.ub[out] { NonBasic::Upper } else { NonBasic::Lower };
        } else {
            self.x[out] = lo;
            self.state[out] = if lo == self.lb[out] { NonBasic::Lower } else { NonBasic::Upper };
        }
        if self.lb[out] == f64::NEG_INFINITY && self.ub[out] == f64::INFINITY {
            self.state[out] = NonBasic::Zero;
        }
        self.pivot(r, q, &alpha);
        self.note_step(theta);
        if self.pivots_since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(Step::Continue)
    }

    fn apply_step(&mut self, q: usize, dir: f64, theta: f64, alpha: &[f64]) {
        if theta == 0.0 {
            return;
        }
        self.x[q] += dir * theta;
        for i in 0..self.m {
            let j = self.basis[i];
            self.x[j] -= dir * alpha[i] * theta;
        }
    }

    fn note_step(&mut self, theta: f64) {
        if theta.abs() < 1e-12 {
            self.degenerate_run += 1;
        } else {
            self.degenerate_run = 0;
        }
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64]) {
        let m = self.m;
        let p = alpha[r];
        for k in 0..m {
            self.binv[r * m + k] /= p;
        }
        for i in 0..m {
            if i == r || alpha[i] == 0.0 {
                continue;
            }
            let f = alpha[i];
            for k in 0..m {
                self.binv[i * m + k] -= f * self.binv[r * m + k];
            }
        }
        self.basis[r] = q;
        self.state[q] = NonBasic::Basic;
        self.pivots_since_refactor += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;

    fn lp(sense: ObjectiveSense) -> LinearModel {
        LinearModel::new(sense)
    }

    #[test]
    fn single_floor() {
        let mut m = lp(ObjectiveSense::Minimize);
        let x = m.add_var("x", 0.0, f64::INFINITY, 1.0, false);
        m.add_row("r", vec![(x, 1.0)], RowSense::Ge, 3.0);
        let r = solve_lp(&m).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.primal[0] - 3.0).abs() < 1e-9);
        assert!((r.duals[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_rows() {
        let mut m = lp(ObjectiveSense::Minimize);
        let x = m.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 0.0, false);
        m.add_row("a", vec![(x, 1.0)], RowSense::Le, 1.0);
        m.add_row("b", vec![(x, 1.0)], RowSense::Ge, 2.0);
        assert_eq!(solve_lp(&m).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut m = lp(ObjectiveSense::Maximize);
        let x = m.add_var("x", 0.0, f64::INFINITY, 1.0, false);
        let y = m.add_var("y", 0.0, f64::INFINITY, 0.0, false);
        m.add_row("a", vec![(x, 1.0), (y, -1.0)], RowSense::Le, 1.0);
        assert_eq!(solve_lp(&m).unwrap().status, Status::Unbounded);
    }

    #[test]
    fn maximize_with_upper_bounds_and_equality() {
        // max 3x + 2y, x + y = 4, x <= 3, y in [0, 10]
        let mut m = lp(ObjectiveSense::Maximize);
        let x = m.add_var("x", 0.0, 3.0, 3.0, false);
        let y = m.add_var("y", 0.0, 10.0, 2.0, false);
        m.add_row("sum", vec![(x, 1.0), (y, 1.0)], RowSense::Eq, 4.0);
        let r = solve_lp(&m).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.objective - 11.0).abs() < 1e-9);
        assert!((r.duals[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn free_variable_and_negative_rhs() {
        // min |t| style: min u s.t. u >= x - 2, u >= 2 - x, x free, x >= 5
        let mut m = lp(ObjectiveSense::Minimize);
        let x = m.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 0.0, false);
        let u = m.add_var("u", f64::NEG_INFINITY, f64::INFINITY, 1.0, false);
        m.add_row("a", vec![(u, 1.0), (x, -1.0)], RowSense::Ge, -2.0);
        m.add_row("b", vec![(u, 1.0), (x, 1.0)], RowSense::Ge, 2.0);
        m.add_row("c", vec![(x, 1.0)], RowSense::Ge, 5.0);
        let r = solve_lp(&m).unwrap();
        assert!((r.objective - 3.0).abs() < 1e-9);
        assert!((r.primal[x.0] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // A classic cycling example under the largest-coefficient rule.
        let mut m = lp(ObjectiveSense::Maximize);
        let v: Vec<_> = [10.0, -57.0, -9.0, -24.0]
            .iter()
            .enumerate()
            .map(|(i, &c)| m.add_var(format!("x{i}"), 0.0, f64::INFINITY, c, false))
            .collect();
        m.add_row("r1", vec![(v[0], 0.5), (v[1], -5.5), (v[2], -2.5), (v[3], 9.0)], RowSense::Le, 0.0);
        m.add_row("r2", vec![(v[0], 0.5), (v[1], -1.5), (v[2], -0.5), (v[3], 1.0)], RowSense::Le, 0.0);
        m.add_row("r3", vec![(v[0], 1.0)], RowSense::Le, 1.0);
        let r = solve_lp(&m).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.objective - 1.0).abs() < 1e-9);
    }
}
