//! A small linear and mixed-integer programming kernel: a bounded revised
//! simplex method that reports dual prices, and a branch-and-bound search on
//! top of it.
//!
//! ```
//! use fleetroute::lp::{LinearModel, ObjectiveSense, RowSense, Status};
//!
//! let mut m = LinearModel::new(ObjectiveSense::Minimize);
//! let x = m.add_var("x", 0.0, f64::INFINITY, 1.0, false);
//! m.add_row("floor", vec![(x, 1.0)], RowSense::Ge, 3.0);
//! let r = fleetroute::lp::solve_lp(&m).unwrap();
//! assert_eq!(r.status, Status::Optimal);
//! assert!((r.primal[x.0] - 3.0).abs() < 1e-9);
//! assert!((r.duals[0] - 1.0).abs() < 1e-9);
//! ```

mod mip;
mod simplex;

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub use mip::{solve_mip, MipOptions};
pub use simplex::solve_lp;

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-7;
/// Reduced-cost (dual feasibility) tolerance.
pub const OPT_TOL: f64 = 1e-6;
/// Distance from the nearest integer below which a value counts as integral.
pub const INT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectiveSense {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub objective: f64,
    pub integer: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub coefficients: Vec<(VarId, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub sense: ObjectiveSense,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    /// Constant added to the objective value.
    pub objective_offset: f64,
}

impl LinearModel {
    pub fn new(sense: ObjectiveSense) -> Self {
        LinearModel {
            sense,
            variables: Vec::new(),
            constraints: Vec::new(),
            objective_offset: 0.0,
        }
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        objective: f64,
        integer: bool,
    ) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
            objective,
            integer,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coefficients: Vec<(VarId, f64)>,
        sense: RowSense,
        rhs: f64,
    ) -> usize {
        self.constraints.push(Constraint {
            name: name.into(),
            coefficients,
            sense,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn validate(&self) -> Result<()> {
        for v in &self.variables {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(Error::input(format!("variable `{}` has bounds lower > upper", v.name)));
            }
            if v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(Error::input(format!("variable `{}` has an empty domain", v.name)));
            }
            if !v.objective.is_finite() {
                return Err(Error::input(format!("variable `{}` has a non-finite cost", v.name)));
            }
        }
        for c in &self.constraints {
            if !c.rhs.is_finite() {
                return Err(Error::input(format!("row `{}` has a non-finite rhs", c.name)));
            }
            for &(v, a) in &c.coefficients {
                if v.0 >= self.variables.len() {
                    return Err(Error::input(format!("row `{}` references unknown variable", c.name)));
                }
                if !a.is_finite() {
                    return Err(Error::input(format!("row `{}` has a non-finite coefficient", c.name)));
                }
            }
        }
        Ok(())
    }

    /// Objective value of `x`, offset included.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_offset
            + self
                .variables
                .iter()
                .zip(x)
                .map(|(v, xi)| v.objective * xi)
                .sum::<f64>()
    }

    pub fn row_activity(&self, row: usize, x: &[f64]) -> f64 {
        self.constraints[row]
            .coefficients
            .iter()
            .map(|&(v, a)| a * x[v.0])
            .sum()
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &xi) in self.variables.iter().zip(x) {
            worst = worst.max(v.lower - xi).max(xi - v.upper);
        }
        for (i, c) in self.constraints.iter().enumerate() {
            let a = self.row_activity(i, x);
            let viol = match c.sense {
                RowSense::Le => a - c.rhs,
                RowSense::Ge => c.rhs - a,
                RowSense::Eq => (a - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// The model in CPLEX LP text format, for debugging.
    pub fn to_lp_string(&self) -> String {
        let name = |v: VarId| sanitize(&self.variables[v.0].name, v.0, 'x');
        let mut s = String::new();
        s.push_str(match self.sense {
            ObjectiveSense::Minimize => "Minimize\n",
            ObjectiveSense::Maximize => "Maximize\n",
        });
        s.push_str(" obj:");
        let mut any = false;
        for (j, v) in self.variables.iter().enumerate() {
            if v.objective != 0.0 {
                write_term(&mut s, v.objective, &name(VarId(j)));
                any = true;
            }
        }
        if !any {
            s.push_str(" 0");
        }
        s.push_str("\nSubject To\n");
        for (i, c) in self.constraints.iter().enumerate() {
            let _ = write!(s, " {}:", sanitize(&c.name, i, 'c'));
            if c.coefficients.is_empty() {
                s.push_str(" 0");
            }
            for &(v, a) in &c.coefficients {
                write_term(&mut s, a, &name(v));
            }
            let op = match c.sense {
                RowSense::Le => "<=",
                RowSense::Ge => ">=",
                RowSense::Eq => "=",
            };
            let _ = writeln!(s, " {op} {}", c.rhs);
        }
        s.push_str("Bounds\n");
        for (j, v) in self.variables.iter().enumerate() {
            let n = name(VarId(j));
            match (v.lower.is_finite(), v.upper.is_finite()) {
                (true, true) => {
                    let _ = writeln!(s, " {} <= {n} <= {}", v.lower, v.upper);
                }
                (true, false) => {
                    let _ = writeln!(s, " {n} >= {}", v.lower);
                }
                (false, true) => {
                    let _ = writeln!(s, " -inf <= {n} <= {}", v.upper);
                }
                (false, false) => {
                    let _ = writeln!(s, " {n} free");
                }
            }
        }
        let ints: Vec<_> = (0..self.variables.len())
            .filter(|&j| self.variables[j].integer)
            .map(|j| name(VarId(j)))
            .collect();
        if !ints.is_empty() {
            s.push_str("General\n");
            for n in ints {
                let _ = writeln!(s, " {n}");
            }
        }
        s.push_str("End\n");
        s
    }
}

fn sanitize(name: &str, idx: usize, prefix: char) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.[]".contains(c) { c } else { '_' })
        .collect();
    if clean.is_empty() || clean.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        format!("{prefix}{idx}_{clean}")
    } else {
        clean
    }
}

fn write_term(s: &mut String, a: f64, name: &str) {
    if a < 0.0 {
        let _ = write!(s, " - {} {name}", -a);
    } else {
        let _ = write!(s, " + {a} {name}");
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    /// Branch-and-bound stopped at its node limit; the incumbent, if any,
    /// is reported with its gap.
    NodeLimit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub status: Status,
    /// Objective value of `primal` (incumbent for MIP), offset included.
    pub objective: f64,
    pub primal: Vec<f64>,
    /// Row dual prices (LP only): the rate of change of the optimal
    /// objective per unit increase of the right-hand side.
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    /// Proven bound on the optimum (equals `objective` for a solved LP).
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub iterations: usize,
}

impl SolveResult {
    pub(crate) fn without_solution(status: Status, n: usize, m: usize, iterations: usize) -> Self {
        SolveResult {
            status,
            objective: f64::NAN,
            primal: vec![0.0; n],
            duals: vec![0.0; m],
            reduced_costs: vec![0.0; n],
            best_bound: f64::NAN,
            gap: f64::INFINITY,
            nodes: 0,
            iterations,
        }
    }

    pub fn has_solution(&self) -> bool {
        self.objective.is_finite()
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.primal[v.0]
    }
}

/// Relative gap `(incumbent - bound) / max(1, |incumbent|)` in the
/// minimization sense.
pub fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    if !incumbent.is_finite() {
        return f64::INFINITY;
    }
    ((incumbent - bound) / incumbent.abs().max(1.0)).max(0.0)
}
