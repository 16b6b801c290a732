//! Small dense LP/MILP solver.
//!
//! Continuous programs are solved with a bounded-variable two-phase primal
//! simplex on a dense tableau. Binary variables are handled by best-bound
//! branch-and-bound, where each node re-optimises the root tableau with the
//! dual simplex.

mod lp_format;
mod milp;
mod simplex;

pub use lp_format::write_lp;
pub use milp::{solve_milp, solve_milp_from, solve_milp_with, MilpOptions};

use crate::error::{Error, Result};

/// Primal feasibility and integrality tolerance.
pub const FEAS_TOL: f64 = 1e-6;

/// Handle to a variable of a [`LinearProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub binary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A minimisation problem over bounded variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Vec<f64>,
    objective_offset: f64,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.push_var(Variable {
            name: name.into(),
            lower,
            upper,
            binary: false,
        })
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.push_var(Variable {
            name: name.into(),
            lower: 0.0,
            upper: 1.0,
            binary: true,
        })
    }

    fn push_var(&mut self, var: Variable) -> VarId {
        self.variables.push(var);
        self.objective.push(0.0);
        VarId(self.variables.len() - 1)
    }

    /// `sum(coeffs) <= rhs`
    pub fn add_le(&mut self, name: impl Into<String>, coeffs: Vec<(VarId, f64)>, rhs: f64) {
        self.push_constraint(name.into(), coeffs, Relation::Le, rhs);
    }

    /// `sum(coeffs) >= rhs`, stored negated as a `<=` row.
    pub fn add_ge(&mut self, name: impl Into<String>, coeffs: Vec<(VarId, f64)>, rhs: f64) {
        let coeffs = coeffs.into_iter().map(|(v, a)| (v, -a)).collect();
        self.push_constraint(name.into(), coeffs, Relation::Le, -rhs);
    }

    /// `sum(coeffs) == rhs`
    pub fn add_eq(&mut self, name: impl Into<String>, coeffs: Vec<(VarId, f64)>, rhs: f64) {
        self.push_constraint(name.into(), coeffs, Relation::Eq, rhs);
    }

    fn push_constraint(
        &mut self,
        name: String,
        coeffs: Vec<(VarId, f64)>,
        relation: Relation,
        rhs: f64,
    ) {
        self.constraints.push(Constraint {
            name,
            coeffs,
            relation,
            rhs,
        });
    }

    /// Add `coeff * var` to the objective.
    pub fn add_objective(&mut self, var: VarId, coeff: f64) {
        self.objective[var.0] += coeff;
    }

    pub fn add_objective_offset(&mut self, offset: f64) {
        self.objective_offset += offset;
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        let v = &mut self.variables[var.0];
        v.lower = lower;
        v.upper = upper;
    }

    pub fn fix(&mut self, var: VarId, value: f64) {
        self.set_bounds(var, value, value);
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Dense objective coefficients, indexed like [`Self::variables`].
    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn objective_offset(&self) -> f64 {
        self.objective_offset
    }

    /// Copy with every binary flag dropped, keeping the bounds.
    pub fn relax_binaries(&self) -> LinearProgram {
        let mut lp = self.clone();
        for v in &mut lp.variables {
            v.binary = false;
        }
        lp
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.binary).count()
    }

    pub fn var_ids(&self) -> impl Iterator<Item = VarId> {
        (0..self.variables.len()).map(VarId)
    }

    /// Objective value at a point.
    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.objective_offset
            + self
                .objective
                .iter()
                .zip(values)
                .map(|(c, x)| c * x)
                .sum::<f64>()
    }

    /// Largest bound or constraint violation at a point.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let bounds = self
            .variables
            .iter()
            .zip(values)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(0.0))
            .fold(0.0, f64::max);
        let rows = self
            .constraints
            .iter()
            .map(|c| {
                let lhs: f64 = c.coeffs.iter().map(|&(v, a)| a * values[v.0]).sum();
                match c.relation {
                    Relation::Le => (lhs - c.rhs).max(0.0),
                    Relation::Eq => (lhs - c.rhs).abs(),
                }
            })
            .fold(0.0, f64::max);
        bounds.max(rows)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.variables.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(Error::InvalidModel(format!(
                    "variable {i} ({}) has bounds [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
            if v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(Error::InvalidModel(format!(
                    "variable {i} ({}) has an empty domain",
                    v.name
                )));
            }
            if v.binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(Error::InvalidModel(format!(
                    "binary variable {i} ({}) has bounds [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
        }
        if let Some(i) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "objective coefficient of variable {i} is not finite"
            )));
        }
        if !self.objective_offset.is_finite() {
            return Err(Error::InvalidModel("objective offset is not finite".into()));
        }
        for (r, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "row {r} ({}) has rhs {}",
                    c.name, c.rhs
                )));
            }
            for &(v, a) in &c.coeffs {
                if v.0 >= self.variables.len() {
                    return Err(Error::InvalidModel(format!(
                        "row {r} ({}) references undeclared variable {}",
                        c.name, v.0
                    )));
                }
                if !a.is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "row {r} ({}) has a non-finite coefficient",
                        c.name
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: Status,
    /// Indexed by [`VarId::index`]; empty unless optimal.
    pub values: Vec<f64>,
    pub objective: f64,
    /// Proven lower bound on the optimum; equals `objective` when the search
    /// closed the gap.
    pub bound: f64,
    /// Branch-and-bound nodes evaluated (1 for a pure LP).
    pub nodes: usize,
}

impl Solution {
    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.0]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    fn without_point(status: Status) -> Self {
        let objective = match status {
            Status::Unbounded => f64::NEG_INFINITY,
            _ => f64::INFINITY,
        };
        Self {
            status,
            values: Vec::new(),
            objective,
            bound: objective,
            nodes: 1,
        }
    }
}

/// Solve a continuous program. Binary flags are rejected.
pub fn solve_lp(lp: &LinearProgram) -> Result<Solution> {
    lp.validate()?;
    if lp.num_binaries() > 0 {
        return Err(Error::InvalidModel(
            "solve_lp called on a program with binary variables".into(),
        ));
    }
    let bounds: Vec<(f64, f64)> = lp.variables.iter().map(|v| (v.lower, v.upper)).collect();
    simplex::solve_with_bounds(lp, &bounds)
}

#[cfg(test)]
mod tests;
