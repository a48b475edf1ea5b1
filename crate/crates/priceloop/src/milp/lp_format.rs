//! Writer for the industry-standard LP text format.

use std::fmt::Write as _;

use super::{MilpModel, RowSense, VarKind};

/// Value treated as infinite by LP readers.
const LP_INF: f64 = 1e30;

fn sanitize(name: &str) -> String {
    let mut out: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' })
        .collect();
    if !out.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') {
        out.insert(0, 'v');
    }
    out
}

fn push_terms(out: &mut String, terms: &[(usize, f64)], names: &[String]) {
    let mut first = true;
    for (i, &(v, c)) in terms.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        if first {
            if c < 0.0 {
                out.push_str("- ");
            }
            first = false;
        } else {
            out.push_str(if c < 0.0 { " - " } else { " + " });
        }
        let _ = write!(out, "{} {}", c.abs(), names[v]);
        if (i + 1) % 8 == 0 && i + 1 < terms.len() {
            out.push_str("\n   ");
        }
    }
    if first {
        out.push('0');
    }
}

/// Emits `model` in LP text format. Variable and row names are taken from the
/// model (sanitized), so the output is stable across runs.
pub fn write_lp(model: &MilpModel) -> String {
    let names: Vec<String> = model.variables().iter().map(|v| sanitize(&v.name)).collect();
    let mut out = String::new();
    let _ = writeln!(out, "\\ {}", model.name);
    out.push_str("Minimize\n obj: ");
    let objective: Vec<(usize, f64)> = {
        let dense = model.objective_dense();
        dense.iter().enumerate().filter(|(_, &c)| c != 0.0).map(|(i, &c)| (i, c)).collect()
    };
    push_terms(&mut out, &objective, &names);
    out.push_str("\nSubject To\n");
    for row in model.rows() {
        let _ = write!(out, " {}: ", sanitize(&row.name));
        let terms: Vec<(usize, f64)> = row.coeffs.iter().map(|&(v, c)| (v.index(), c)).collect();
        push_terms(&mut out, &terms, &names);
        let op = match row.sense {
            RowSense::Equal => "=",
            RowSense::GreaterEqual => ">=",
            RowSense::LessEqual => "<=",
        };
        let _ = writeln!(out, " {op} {}", row.rhs);
    }
    out.push_str("Bounds\n");
    for (v, name) in model.variables().iter().zip(&names) {
        if v.kind == VarKind::Binary {
            continue;
        }
        let lo_inf = v.lower <= -LP_INF || v.lower == f64::NEG_INFINITY;
        let hi_inf = v.upper >= LP_INF || v.upper == f64::INFINITY;
        match (lo_inf, hi_inf) {
            (true, true) => {
                let _ = writeln!(out, " {name} free");
            }
            (true, false) => {
                let _ = writeln!(out, " -{LP_INF} <= {name} <= {}", v.upper);
            }
            (false, true) => {
                let _ = writeln!(out, " {} <= {name}", v.lower);
            }
            (false, false) => {
                let _ = writeln!(out, " {} <= {name} <= {}", v.lower, v.upper);
            }
        }
    }
    let binaries: Vec<&String> =
        model.variables().iter().zip(&names).filter(|(v, _)| v.kind == VarKind::Binary).map(|(_, n)| n).collect();
    if !binaries.is_empty() {
        out.push_str("Binary\n");
        for name in binaries {
            let _ = writeln!(out, " {name}");
        }
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::super::{HighsBackend, MilpModel, RowSense, SolveOptions, SolverBackend};
    use super::*;

    #[test]
    fn empty_model_has_all_sections() {
        let text = write_lp(&MilpModel::new("empty"));
        assert!(text.starts_with("\\ empty\n"));
        assert!(text.contains("Minimize"));
        assert!(text.contains("Subject To"));
        assert!(text.ends_with("End\n"));
    }

    #[test]
    fn single_variable_bounds_line() {
        let mut m = MilpModel::new("one_var");
        let x = m.add_var("x", -1.5, 2.5);
        m.add_objective_term(x, 1.0);
        let text = write_lp(&m);
        assert!(text.contains(" -1.5 <= x <= 2.5\n"), "missing bounds line:\n{text}");
    }

    #[test]
    fn round_trip_matches_in_memory_solve() {
        // Mixed-integer model with an equality, an inequality, and a free var.
        let mut m = MilpModel::new("round_trip");
        let x = m.add_var("x", 0.0, 4.0);
        let y = m.add_var("y", f64::NEG_INFINITY, f64::INFINITY);
        let z = m.add_binary("z");
        m.add_row("link", RowSense::Equal, 1.0, vec![(x, 1.0), (y, -2.0)]);
        m.add_row("cover", RowSense::GreaterEqual, 2.0, vec![(x, 1.0), (z, 3.0)]);
        m.add_objective_term(x, 1.0);
        m.add_objective_term(y, 0.5);
        m.add_objective_term(z, 2.0);

        let backend = HighsBackend;
        let opts = SolveOptions::default();
        let mem = backend.solve_milp(&m, &opts).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("round_trip.lp");
        std::fs::write(&path, write_lp(&m)).unwrap();
        let file_obj = backend.solve_lp_file(&path, &opts).unwrap();

        assert!(
            (file_obj - mem.objective_value).abs() <= 1e-6,
            "file {file_obj} vs memory {}",
            mem.objective_value
        );
    }
}
