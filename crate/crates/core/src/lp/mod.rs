//! Linear programs in maximization form and a dependency-free simplex solver.

mod mps;
mod simplex;

use std::fmt;

pub use mps::write_mps;
pub use simplex::{solve, solve_with, SolverOptions};

/// Row relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

/// `Σ coeff·x  relation  rhs`, with coefficients stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * values[j]).sum()
    }
}

/// `maximize c·x` subject to linear rows and per-variable bounds.
///
/// Bounds may be infinite; a new variable defaults to `[0, +inf)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
    bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); num_vars],
        }
    }

    /// Appends a variable and returns its index.
    pub fn add_variable(&mut self, objective: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(objective);
        self.bounds.push((lower, upper));
        self.objective.len() - 1
    }

    pub fn set_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] = coeff;
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.bounds[var] = (lower, upper);
    }

    /// Appends a row and returns its index. Zero coefficients are dropped and
    /// repeated variables are summed.
    pub fn add_constraint(
        &mut self,
        coeffs: impl IntoIterator<Item = (usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> usize {
        let mut merged: Vec<(usize, f64)> = Vec::new();
        for (j, a) in coeffs {
            match merged.iter_mut().find(|(k, _)| *k == j) {
                Some((_, acc)) => *acc += a,
                None => merged.push((j, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        merged.sort_by_key(|&(j, _)| j);
        self.constraints.push(Constraint {
            coeffs: merged,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().zip(values).map(|(c, x)| c * x).sum()
    }

    /// Returns a copy with every objective coefficient multiplied by `factor`.
    pub fn scale_objective(&self, factor: f64) -> LinearProgram {
        let mut lp = self.clone();
        lp.objective.iter_mut().for_each(|c| *c *= factor);
        lp
    }

    /// Structural checks: indices in range, finite data, ordered bounds.
    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        for (j, (&c, &(lo, hi))) in self.objective.iter().zip(&self.bounds).enumerate() {
            if !c.is_finite() {
                return Err(LpError::Malformed(format!("objective coefficient {j} is not finite")));
            }
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY
            {
                return Err(LpError::Malformed(format!("variable {j} has bounds [{lo}, {hi}]")));
            }
        }
        for (i, row) in self.constraints.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row {i} has non-finite rhs")));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(LpError::Malformed(format!("row {i} references variable {j} of {n}")));
                }
                if !a.is_finite() {
                    return Err(LpError::Malformed(format!("row {i} has a non-finite coefficient")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values; for an unbounded program, the last feasible vertex.
    pub values: Vec<f64>,
    pub objective_value: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    #[error("malformed linear program: {0}")]
    Malformed(String),
    #[error("simplex iteration limit of {0} reached")]
    IterationLimit(usize),
}

/// A row or bound that a candidate point breaks.
#[derive(Debug, Clone, PartialEq)]
pub enum LpViolation {
    Row { row: usize, activity: f64, relation: Relation, rhs: f64 },
    Bound { var: usize, value: f64, lower: f64, upper: f64 },
}

impl fmt::Display for LpViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LpViolation::Row { row, activity, relation, rhs } => {
                write!(f, "row {row}: {activity} {relation} {rhs} fails")
            }
            LpViolation::Bound { var, value, lower, upper } => {
                write!(f, "variable {var}: {value} outside [{lower}, {upper}]")
            }
        }
    }
}

/// Walks every row and bound of `lp` at `values`. Independent of the solver.
pub fn check_feasibility(
    lp: &LinearProgram,
    values: &[f64],
    row_tol: f64,
    bound_tol: f64,
) -> Vec<LpViolation> {
    let mut out = Vec::new();
    for (var, (&value, &(lower, upper))) in values.iter().zip(lp.bounds()).enumerate() {
        if !(value >= lower - bound_tol && value <= upper + bound_tol) {
            out.push(LpViolation::Bound { var, value, lower, upper });
        }
    }
    for (row, c) in lp.constraints().iter().enumerate() {
        let activity = c.activity(values);
        let ok = match c.relation {
            Relation::Le => activity <= c.rhs + row_tol,
            Relation::Ge => activity >= c.rhs - row_tol,
            Relation::Eq => (activity - c.rhs).abs() <= row_tol,
        };
        if !ok {
            out.push(LpViolation::Row {
                row,
                activity,
                relation: c.relation,
                rhs: c.rhs,
            });
        }
    }
    out
}
