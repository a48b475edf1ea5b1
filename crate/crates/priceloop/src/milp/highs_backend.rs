//! HiGHS-backed implementation of the solver contract.

use std::ffi::CString;
use std::path::Path;

use highs::{HighsModelStatus, RowProblem, Sense};

use crate::{Error, Result};

use super::{
    LpSolution, MilpModel, MilpSolution, RowSense, SolveOptions, SolveStatus, SolverBackend,
    VarKind,
};

/// Open-source MILP/LP backend (bundled, no external install).
#[derive(Debug, Clone, Copy, Default)]
pub struct HighsBackend;

/// Feasibility tolerance applied by the in-process solution audit.
pub const FEASIBILITY_TOL: f64 = 1e-6;

fn build_problem(model: &MilpModel) -> RowProblem {
    let mut pb = RowProblem::default();
    let cost = model.objective_dense();
    let cols: Vec<highs::Col> = model
        .variables()
        .iter()
        .enumerate()
        .map(|(i, v)| match v.kind {
            VarKind::Continuous => pb.add_column(cost[i], v.lower..=v.upper),
            VarKind::Binary => pb.add_integer_column(cost[i], v.lower..=v.upper),
        })
        .collect();
    for row in model.rows() {
        let coeffs: Vec<(highs::Col, f64)> =
            row.coeffs.iter().map(|&(v, c)| (cols[v.index()], c)).collect();
        match row.sense {
            RowSense::Equal => pb.add_row(row.rhs..=row.rhs, coeffs),
            RowSense::GreaterEqual => pb.add_row(row.rhs.., coeffs),
            RowSense::LessEqual => pb.add_row(..=row.rhs, coeffs),
        };
    }
    pb
}

fn apply_options(model: &mut highs::Model, options: &SolveOptions, presolve: &str) {
    model.set_option("output_flag", options.verbose);
    model.set_option("threads", options.threads as i32);
    model.set_option("random_seed", options.seed);
    model.set_option("time_limit", options.time_limit.as_secs_f64());
    model.set_option("mip_rel_gap", options.gap_tolerance);
    model.set_option("presolve", presolve);
    // Tight feasibility keeps complementarity residuals (mu * slack, with mu
    // up to a big-M) well under the audit tolerances downstream.
    model.set_option("primal_feasibility_tolerance", 1e-9);
    model.set_option("dual_feasibility_tolerance", 1e-9);
    model.set_option("mip_feasibility_tolerance", 1e-9);
}

fn classify(status: HighsModelStatus) -> Result<SolveStatus> {
    match status {
        HighsModelStatus::Optimal => Ok(SolveStatus::Optimal),
        HighsModelStatus::Infeasible => Ok(SolveStatus::Infeasible),
        HighsModelStatus::Unbounded => Ok(SolveStatus::Unbounded),
        HighsModelStatus::ReachedTimeLimit | HighsModelStatus::ReachedIterationLimit => {
            Ok(SolveStatus::LimitReached)
        }
        other => Err(Error::Solver(format!("backend returned status {other:?}"))),
    }
}

impl HighsBackend {
    /// Solves and, when presolve reports an ambiguous status, retries once
    /// with presolve off to obtain a definitive one.
    fn run(&self, model: &MilpModel, options: &SolveOptions) -> Result<highs::SolvedModel> {
        model.validate()?;
        let mut m = build_problem(model).optimise(Sense::Minimise);
        apply_options(&mut m, options, "choose");
        let solved = m.solve();
        if solved.status() == HighsModelStatus::ModelError {
            return Err(Error::Solver(format!("model {} rejected by backend", model.name)));
        }
        if matches!(solved.status(), HighsModelStatus::Unknown) {
            let mut retry = build_problem(model).optimise(Sense::Minimise);
            apply_options(&mut retry, options, "off");
            return Ok(retry.solve());
        }
        Ok(solved)
    }
}

impl SolverBackend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn version(&self) -> String {
        let major = unsafe { highs_sys::Highs_versionMajor() };
        let minor = unsafe { highs_sys::Highs_versionMinor() };
        let patch = unsafe { highs_sys::Highs_versionPatch() };
        format!("{major}.{minor}.{patch}")
    }

    fn solve_milp(&self, model: &MilpModel, options: &SolveOptions) -> Result<MilpSolution> {
        let solved = self.run(model, options)?;
        let status = classify(solved.status())?;
        if status != SolveStatus::Optimal {
            return Ok(MilpSolution {
                status,
                values: Vec::new(),
                objective_value: f64::NAN,
                gap: f64::INFINITY,
            });
        }
        let values = solved.get_solution().columns().to_vec();
        model.check_solution(&values, FEASIBILITY_TOL)?;
        let objective_value = model.objective_value(&values);
        Ok(MilpSolution { status, values, objective_value, gap: options.gap_tolerance })
    }

    fn solve_lp(&self, model: &MilpModel, options: &SolveOptions) -> Result<LpSolution> {
        if model.num_binaries() > 0 {
            return Err(Error::InvalidSpec(format!(
                "model {} has integer variables; use solve_milp",
                model.name
            )));
        }
        let solved = self.run(model, options)?;
        let status = classify(solved.status())?;
        if status != SolveStatus::Optimal {
            return Ok(LpSolution {
                status,
                values: Vec::new(),
                objective_value: f64::NAN,
                row_duals: Vec::new(),
            });
        }
        let solution = solved.get_solution();
        let values = solution.columns().to_vec();
        model.check_solution(&values, FEASIBILITY_TOL)?;
        let objective_value = model.objective_value(&values);
        Ok(LpSolution { status, values, objective_value, row_duals: solution.dual_rows().to_vec() })
    }

    fn solve_lp_file(&self, path: &Path, options: &SolveOptions) -> Result<f64> {
        let c_path = CString::new(path.to_string_lossy().as_bytes())
            .map_err(|_| Error::Solver("path contains NUL".into()))?;
        unsafe {
            let h = highs_sys::Highs_create();
            let result = (|| {
                let off = CString::new("output_flag").unwrap();
                highs_sys::Highs_setBoolOptionValue(h, off.as_ptr(), 0);
                let tl = CString::new("time_limit").unwrap();
                highs_sys::Highs_setDoubleOptionValue(h, tl.as_ptr(), options.time_limit.as_secs_f64());
                if highs_sys::Highs_readModel(h, c_path.as_ptr()) != highs_sys::kHighsStatusOk {
                    return Err(Error::Solver(format!("backend could not parse {}", path.display())));
                }
                if highs_sys::Highs_run(h) == highs_sys::kHighsStatusError {
                    return Err(Error::Solver(format!("backend failed to solve {}", path.display())));
                }
                if highs_sys::Highs_getModelStatus(h) != highs_sys::kHighsModelStatusOptimal {
                    return Err(Error::Solver(format!(
                        "file model {} did not solve to optimality",
                        path.display()
                    )));
                }
                Ok(highs_sys::Highs_getObjectiveValue(h))
            })();
            highs_sys::Highs_destroy(h);
            result
        }
    }
}
