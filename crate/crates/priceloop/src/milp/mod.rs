//! Solver-agnostic mixed-integer linear model, LP-format export, and the
//! pluggable solver backend.
//!
//! A [`MilpModel`] is built once, sealed, and handed to a [`SolverBackend`].
//! Every optimal solution is re-checked row by row in-process
//! ([`MilpModel::check_solution`]), independent of whatever the backend
//! reported.

mod highs_backend;
mod lp_format;

pub use highs_backend::HighsBackend;
pub use lp_format::write_lp;

use std::time::Duration;

use crate::{Error, Result};

/// Handle to a model variable. Valid only for the model that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Handle to a model row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RowId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
}

/// Row sense; every row is `coeffs . vars  <sense>  rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Equal,
    GreaterEqual,
    LessEqual,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub name: String,
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

/// A minimization mixed-integer linear program.
#[derive(Debug, Clone, Default)]
pub struct MilpModel {
    pub name: String,
    variables: Vec<Variable>,
    rows: Vec<Row>,
    objective: Vec<(VarId, f64)>,
}

impl MilpModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Self::default() }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.variables.push(Variable { name: name.into(), lower, upper, kind: VarKind::Continuous });
        VarId(self.variables.len() - 1)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.variables.push(Variable { name: name.into(), lower: 0.0, upper: 1.0, kind: VarKind::Binary });
        VarId(self.variables.len() - 1)
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        sense: RowSense,
        rhs: f64,
        coeffs: Vec<(VarId, f64)>,
    ) -> RowId {
        self.rows.push(Row { name: name.into(), coeffs, sense, rhs });
        RowId(self.rows.len() - 1)
    }

    /// Adds `weight` to the objective coefficient of `var`.
    pub fn add_objective_term(&mut self, var: VarId, weight: f64) {
        self.objective.push((var, weight));
    }

    pub fn set_var_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        self.variables[var.0].lower = lower;
        self.variables[var.0].upper = upper;
    }

    pub fn var_bounds(&self, var: VarId) -> (f64, f64) {
        (self.variables[var.0].lower, self.variables[var.0].upper)
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    /// Dense objective vector (terms on the same variable accumulated).
    pub fn objective_dense(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.variables.len()];
        for &(v, w) in &self.objective {
            c[v.0] += w;
        }
        c
    }

    /// Objective value of an assignment.
    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, w)| w * values[v.0]).sum()
    }

    /// Structural invariants: referenced variables exist (guaranteed by
    /// construction through [`VarId`]), binary bounds lie within [0, 1], no
    /// NaN or infinite coefficients (infinite variable bounds are allowed).
    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.variables.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(Error::InvalidSpec(format!(
                    "variable {} (#{i}) has invalid bounds [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(Error::InvalidSpec(format!(
                    "binary variable {} has bounds outside [0, 1]",
                    v.name
                )));
            }
        }
        for r in &self.rows {
            if !r.rhs.is_finite() {
                return Err(Error::InvalidSpec(format!("row {} has non-finite rhs", r.name)));
            }
            for &(v, c) in &r.coeffs {
                if !c.is_finite() {
                    return Err(Error::InvalidSpec(format!(
                        "row {} has non-finite coefficient on {}",
                        r.name, self.variables[v.0].name
                    )));
                }
                debug_assert!(v.0 < self.variables.len());
            }
        }
        for &(_, w) in &self.objective {
            if !w.is_finite() {
                return Err(Error::InvalidSpec("non-finite objective coefficient".into()));
            }
        }
        Ok(())
    }

    /// Re-checks an assignment row by row and against variable bounds.
    /// Returns the largest violation found.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, val) in self.variables.iter().zip(values) {
            worst = worst.max(v.lower - val).max(val - v.upper);
            if v.kind == VarKind::Binary {
                worst = worst.max((val - val.round()).abs());
            }
        }
        for r in &self.rows {
            let lhs: f64 = r.coeffs.iter().map(|&(v, c)| c * values[v.0]).sum();
            let gap = match r.sense {
                RowSense::Equal => (lhs - r.rhs).abs(),
                RowSense::GreaterEqual => r.rhs - lhs,
                RowSense::LessEqual => lhs - r.rhs,
            };
            worst = worst.max(gap);
        }
        worst
    }

    /// Audits a claimed-optimal assignment against `tol` (default feasibility
    /// tolerance is 1e-6).
    pub fn check_solution(&self, values: &[f64], tol: f64) -> Result<()> {
        if values.len() != self.variables.len() {
            return Err(Error::Audit(format!(
                "solution has {} values for {} variables",
                values.len(),
                self.variables.len()
            )));
        }
        let worst = self.max_violation(values);
        if worst > tol {
            return Err(Error::Audit(format!(
                "solution violates model {} by {worst:.3e} (tolerance {tol:.1e})",
                self.name
            )));
        }
        Ok(())
    }
}

/// Per-solve options.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub time_limit: Duration,
    /// Relative MIP gap required for `Optimal`.
    pub gap_tolerance: f64,
    pub seed: i32,
    pub threads: usize,
    /// Stream the backend's own log to stdout.
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            time_limit: Duration::from_secs(120),
            gap_tolerance: 1e-6,
            seed: 0,
            threads: 1,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    LimitReached,
}

/// Outcome of a mixed-integer solve.
#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub status: SolveStatus,
    /// One value per variable, in creation order. Empty unless `Optimal`.
    pub values: Vec<f64>,
    pub objective_value: f64,
    /// Relative MIP gap proven by the backend.
    pub gap: f64,
}

/// Outcome of a continuous solve, including row duals.
///
/// Row duals follow the convention in which, at an optimum, the objective
/// equals the sum of `rhs * dual` over all rows plus `bound * reduced cost`
/// over all bound-constrained variables. Duals of `>=` rows are nonnegative,
/// duals of `<=` rows nonpositive, duals of `=` rows free.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: SolveStatus,
    pub values: Vec<f64>,
    pub objective_value: f64,
    /// One dual per row, in creation order. Empty unless `Optimal`.
    pub row_duals: Vec<f64>,
}

/// Contract for an external mixed-integer solver.
pub trait SolverBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn version(&self) -> String;

    /// Solves a mixed-integer model. `Optimal` implies the relative gap is
    /// within `options.gap_tolerance` and the assignment passes
    /// [`MilpModel::check_solution`] at 1e-6.
    fn solve_milp(&self, model: &MilpModel, options: &SolveOptions) -> Result<MilpSolution>;

    /// Solves a continuous model and returns row duals. Errors if the model
    /// contains integer variables.
    fn solve_lp(&self, model: &MilpModel, options: &SolveOptions) -> Result<LpSolution>;

    /// Parses an LP-format file and returns the optimal objective, used to
    /// round-trip [`write_lp`] output.
    fn solve_lp_file(&self, path: &std::path::Path, options: &SolveOptions) -> Result<f64>;
}

/// Instantiates a backend from its configuration key.
pub fn backend_from_name(name: &str) -> Result<Box<dyn SolverBackend>> {
    match name {
        "highs" => Ok(Box::new(HighsBackend)),
        other => Err(Error::Config(format!(
            "unknown solver backend '{other}' (available: highs)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_min_attains_lower_bound() {
        let mut m = MilpModel::new("bound_min");
        let x = m.add_var("x", 0.0, 1.0);
        m.add_objective_term(x, 1.0);
        let sol = HighsBackend.solve_milp(&m, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.values[x.index()] - 0.0).abs() < 1e-9);
        assert!(sol.objective_value.abs() < 1e-9);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut m = MilpModel::new("infeasible_pair");
        let x = m.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        m.add_row("ge", RowSense::GreaterEqual, 1.0, vec![(x, 1.0)]);
        m.add_row("le", RowSense::LessEqual, 0.0, vec![(x, 1.0)]);
        m.add_objective_term(x, 1.0);
        let sol = HighsBackend.solve_milp(&m, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn validate_rejects_nan() {
        let mut m = MilpModel::new("nan");
        let x = m.add_var("x", 0.0, 1.0);
        m.add_row("bad", RowSense::Equal, f64::NAN, vec![(x, 1.0)]);
        assert!(m.validate().is_err());
    }

    #[test]
    fn validate_rejects_binary_with_widened_bounds() {
        let mut m = MilpModel::new("badbin");
        let z = m.add_binary("z");
        m.variables[z.0].upper = 2.0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn lp_duals_reproduce_objective() {
        // min x + 2y  s.t.  x + y >= 1,  x - y = 0.25
        let mut m = MilpModel::new("dual_check");
        let x = m.add_var("x", 0.0, 10.0);
        let y = m.add_var("y", 0.0, 10.0);
        m.add_row("cover", RowSense::GreaterEqual, 1.0, vec![(x, 1.0), (y, 1.0)]);
        m.add_row("tie", RowSense::Equal, 0.25, vec![(x, 1.0), (y, -1.0)]);
        m.add_objective_term(x, 1.0);
        m.add_objective_term(y, 2.0);
        let sol = HighsBackend.solve_lp(&m, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let dual_obj = 1.0 * sol.row_duals[0] + 0.25 * sol.row_duals[1];
        assert!((dual_obj - sol.objective_value).abs() < 1e-8);
        assert!(sol.row_duals[0] >= -1e-9);
    }

    #[test]
    fn solution_audit_catches_violations() {
        let mut m = MilpModel::new("audit");
        let x = m.add_var("x", 0.0, 1.0);
        m.add_row("fix", RowSense::Equal, 0.5, vec![(x, 1.0)]);
        assert!(m.check_solution(&[0.5], 1e-6).is_ok());
        assert!(m.check_solution(&[0.9], 1e-6).is_err());
        assert!(m.check_solution(&[], 1e-6).is_err());
    }
}
