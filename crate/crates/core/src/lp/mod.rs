//! Linear programming: a generic instance type, an in-repo simplex solver and
//! the deadline-constrained capacity-region program built on top of it.

mod capacity;
mod export;
pub mod simplex;

use num::BigRational;

use crate::error::LpError;

pub use capacity::{
    build_lp, build_lp_with, extract_randomized_policy, max_scaling, min_cost, region_boundary,
    BoundaryResult, BuildOptions, CapacityLp, RowKind,
};
pub use export::write_lp_format;
pub use simplex::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    /// Sparse `(variable, coefficient)` pairs; repeated variables add up.
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `min c·x` subject to linear rows and `x ≥ 0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LpInstance {
    pub var_names: Vec<String>,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl LpInstance {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var_count(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self, name: &str, cost: f64) -> usize {
        self.var_names.push(name.to_string());
        self.objective.push(cost);
        self.objective.len() - 1
    }

    pub fn add_constraint(
        &mut self,
        name: &str,
        coeffs: Vec<(usize, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> usize {
        self.constraints.push(Constraint {
            name: name.to_string(),
            coeffs,
            sense,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn validate(&self) -> Result<(), LpError> {
        if self.var_names.len() != self.objective.len() {
            return Err(LpError::Malformed(
                "variable names and costs differ in length".into(),
            ));
        }
        if let Some(j) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(LpError::Malformed(format!(
                "non-finite cost on variable {j}"
            )));
        }
        for c in &self.constraints {
            if !c.rhs.is_finite() {
                return Err(LpError::Malformed(format!(
                    "row {}: non-finite rhs",
                    c.name
                )));
            }
            for &(j, v) in &c.coeffs {
                if j >= self.var_count() {
                    return Err(LpError::Malformed(format!(
                        "row {}: unknown variable {j}",
                        c.name
                    )));
                }
                if !v.is_finite() {
                    return Err(LpError::Malformed(format!(
                        "row {}: non-finite coefficient",
                        c.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation over all rows and non-negativity bounds.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().map(|&(j, v)| v * x[j]).sum();
            let viol = match c.sense {
                Sense::Le => lhs - c.rhs,
                Sense::Ge => c.rhs - lhs,
                Sense::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    /// Optimal solution found.
    Optimal,
    /// A feasible point found without optimizing.
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

fn to_solution(r: simplex::SimplexResult<f64>, phase_one: bool) -> LpSolution {
    let status = match (r.outcome, phase_one) {
        (simplex::Outcome::Infeasible, _) => LpStatus::Infeasible,
        (simplex::Outcome::Optimal, true) => LpStatus::Feasible,
        (simplex::Outcome::Optimal, false) => LpStatus::Optimal,
    };
    LpSolution {
        status,
        x: r.x,
        objective: r.objective,
        iterations: r.iterations,
    }
}

/// Minimizes in floating point.
pub fn solve(inst: &LpInstance) -> Result<LpSolution, LpError> {
    simplex::run::<f64>(inst, false).map(|r| to_solution(r, false))
}

/// Finds any feasible point in floating point.
pub fn find_feasible(inst: &LpInstance) -> Result<LpSolution, LpError> {
    simplex::run::<f64>(inst, true).map(|r| to_solution(r, true))
}

/// Minimizes in exact rational arithmetic; meant for small instances.
pub fn solve_exact(
    inst: &LpInstance,
) -> Result<(LpStatus, Vec<BigRational>, BigRational), LpError> {
    let r = simplex::run::<BigRational>(inst, false)?;
    let status = match r.outcome {
        simplex::Outcome::Optimal => LpStatus::Optimal,
        simplex::Outcome::Infeasible => LpStatus::Infeasible,
    };
    Ok((status, r.x, r.objective))
}
