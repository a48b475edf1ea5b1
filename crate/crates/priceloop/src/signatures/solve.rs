//! Direct LP solve of one signature block at posted prices.

use crate::milp::{MilpModel, RowSense, SolveOptions, SolveStatus, SolverBackend};
use crate::{Error, Result};

use super::block::ConstraintBlock;

/// Optimal response of one block to one price vector.
#[derive(Debug, Clone)]
pub struct SignatureSolution {
    /// Grid import/export per period, kWh.
    pub profile: Vec<f64>,
    /// Procurement cost, DKK.
    pub objective: f64,
    /// Duals of the equality rows, in block order.
    pub equality_duals: Vec<f64>,
    /// Duals of the inequality rows (nonnegative), in block order.
    pub inequality_duals: Vec<f64>,
}

/// Tolerance on the primal/dual objective match of a returned solution.
pub const STRONG_DUALITY_TOL: f64 = 1e-6;

/// Minimizes `sum_t price[t] * p[t]` over the block and returns the optimal
/// profile with its labeled duals.
///
/// All block structure lives in rows (variables are free), so the returned
/// row duals alone reproduce the objective; the match is checked before
/// returning.
pub fn solve_signature_lp(
    block: &ConstraintBlock,
    prices: &[f64],
    backend: &dyn SolverBackend,
    options: &SolveOptions,
) -> Result<SignatureSolution> {
    if prices.len() != block.horizon() {
        return Err(Error::InvalidSpec(format!(
            "{}: {} prices for horizon {}",
            block.label,
            prices.len(),
            block.horizon()
        )));
    }
    let mut model = MilpModel::new(block.label.clone());
    for name in &block.var_names {
        model.add_var(name.clone(), f64::NEG_INFINITY, f64::INFINITY);
    }
    let ids: Vec<_> = (0..block.num_vars()).map(crate::milp::VarId).collect();
    for row in &block.equalities {
        model.add_row(
            row.label.code(),
            RowSense::Equal,
            row.rhs,
            row.coeffs.iter().map(|&(v, c)| (ids[v], c)).collect(),
        );
    }
    for row in &block.inequalities {
        model.add_row(
            row.label.code(),
            RowSense::GreaterEqual,
            row.rhs,
            row.coeffs.iter().map(|&(v, c)| (ids[v], c)).collect(),
        );
    }
    for (t, &v) in block.link_vars.iter().enumerate() {
        model.add_objective_term(ids[v], prices[t]);
    }

    let sol = backend.solve_lp(&model, options)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::Infeasible {
                what: format!("signature block {}", block.label),
                detail: "no feasible schedule".into(),
            })
        }
        SolveStatus::Unbounded => {
            return Err(Error::Unbounded {
                what: format!("signature block {}", block.label),
                detail: "procurement cost unbounded below".into(),
            })
        }
        SolveStatus::LimitReached => {
            return Err(Error::Solver(format!("limit reached solving block {}", block.label)))
        }
    }

    let profile: Vec<f64> = block.link_vars.iter().map(|&v| sol.values[v]).collect();
    let n_eq = block.equalities.len();
    let equality_duals = sol.row_duals[..n_eq].to_vec();
    let inequality_duals = sol.row_duals[n_eq..].to_vec();

    let dual_obj = block.dual_objective(&equality_duals, &inequality_duals);
    let scale = sol.objective_value.abs().max(1.0);
    if (dual_obj - sol.objective_value).abs() > STRONG_DUALITY_TOL * scale {
        return Err(Error::Audit(format!(
            "{}: dual objective {dual_obj} does not match primal {} within {STRONG_DUALITY_TOL:e}",
            block.label, sol.objective_value
        )));
    }

    Ok(SignatureSolution {
        profile,
        objective: sol.objective_value,
        equality_duals,
        inequality_duals,
    })
}
