//! Declarative LP blocks: named variables, labeled equality and inequality
//! rows, and the link variable tying a block to the posted prices.

use crate::{Error, Result};

use super::SignatureKind;

/// Families of paired lower/upper bound rows, one per physical quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundFamily {
    /// Shiftable baseload energy per period.
    Load,
    /// Battery charge/discharge power.
    ChargePower,
    /// Battery stored energy.
    StoredEnergy,
    /// Heat pump electrical power.
    HeatPower,
    /// Indoor temperature.
    Temperature,
    /// Vehicle charge/discharge power.
    EvPower,
    /// Vehicle stored energy.
    EvSoc,
}

impl BoundFamily {
    pub fn code(self) -> &'static str {
        match self {
            BoundFamily::Load => "load",
            BoundFamily::ChargePower => "bpow",
            BoundFamily::StoredEnergy => "soe",
            BoundFamily::HeatPower => "hpow",
            BoundFamily::Temperature => "temp",
            BoundFamily::EvPower => "evpow",
            BoundFamily::EvSoc => "evsoc",
        }
    }
}

/// Dual-variable label carried by every row. Equality rows take free duals,
/// inequality rows take nonnegative ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DualLabel {
    /// Ties the grid import/export variable to the block's internal
    /// schedule in one period.
    Balance(usize),
    /// Pins the schedule to its predicted value in a non-flexible period.
    Pin(usize),
    /// Conserves total energy over the flexible window.
    ShiftBudget,
    /// One step of a storage or thermal state recursion.
    State(usize),
    /// Restores the initial state at the end of the day.
    Terminal,
    /// Lower bound row of a [`BoundFamily`] in one period.
    Lower(BoundFamily, usize),
    /// Upper bound row of a [`BoundFamily`] in one period.
    Upper(BoundFamily, usize),
}

impl DualLabel {
    /// Short stable code used in variable and row names.
    pub fn code(&self) -> String {
        match self {
            DualLabel::Balance(t) => format!("bal_t{t}"),
            DualLabel::Pin(t) => format!("pin_t{t}"),
            DualLabel::ShiftBudget => "shift".to_string(),
            DualLabel::State(t) => format!("state_t{t}"),
            DualLabel::Terminal => "term".to_string(),
            DualLabel::Lower(f, t) => format!("lo_{}_t{t}", f.code()),
            DualLabel::Upper(f, t) => format!("up_{}_t{t}", f.code()),
        }
    }
}

/// One sparse linear row over the block's variables.
///
/// Equality rows read `coeffs . v = rhs`; inequality rows are normalized to
/// `coeffs . v >= rhs`.
#[derive(Debug, Clone)]
pub struct BlockRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
    pub label: DualLabel,
}

/// The feasible set of one signature as an immutable LP block.
///
/// `var_ranges` are intervals implied by the rows (not extra constraints);
/// they feed big-M derivation and redundant tightening bounds downstream.
#[derive(Debug, Clone)]
pub struct ConstraintBlock {
    pub kind: SignatureKind,
    /// Identity used in diagnostics, e.g. `"n3_k5_battery"`.
    pub label: String,
    pub var_names: Vec<String>,
    pub var_ranges: Vec<(f64, f64)>,
    /// Index of the period-`t` grid import/export variable, length = horizon.
    pub link_vars: Vec<usize>,
    pub equalities: Vec<BlockRow>,
    pub inequalities: Vec<BlockRow>,
}

impl ConstraintBlock {
    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn horizon(&self) -> usize {
        self.link_vars.len()
    }

    /// Value of the dual objective for given row duals: the sum of
    /// `rhs * dual` over all rows. Equals the primal objective at optimality.
    pub fn dual_objective(&self, equality_duals: &[f64], inequality_duals: &[f64]) -> f64 {
        let eq: f64 = self
            .equalities
            .iter()
            .zip(equality_duals)
            .map(|(row, d)| row.rhs * d)
            .sum();
        let ineq: f64 = self
            .inequalities
            .iter()
            .zip(inequality_duals)
            .map(|(row, d)| row.rhs * d)
            .sum();
        eq + ineq
    }

    /// Per-variable view of the rows: for each variable, the list of
    /// `(is_equality, row index, coefficient)` entries that touch it.
    pub fn columns(&self) -> Vec<Vec<(bool, usize, f64)>> {
        let mut cols = vec![Vec::new(); self.num_vars()];
        for (i, row) in self.equalities.iter().enumerate() {
            for &(v, c) in &row.coeffs {
                cols[v].push((true, i, c));
            }
        }
        for (i, row) in self.inequalities.iter().enumerate() {
            for &(v, c) in &row.coeffs {
                cols[v].push((false, i, c));
            }
        }
        cols
    }

    /// Range of `coeffs . v - rhs` over the variable ranges, by interval
    /// arithmetic. For inequality rows this bounds the slack.
    pub fn slack_range(&self, row: &BlockRow) -> (f64, f64) {
        let mut lo = -row.rhs;
        let mut hi = -row.rhs;
        for &(v, c) in &row.coeffs {
            let (rlo, rhi) = self.var_ranges[v];
            let (a, b) = (c * rlo, c * rhi);
            lo += a.min(b);
            hi += a.max(b);
        }
        (lo, hi)
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.link_vars.len() != horizon {
            return Err(Error::InvalidSpec(format!(
                "{}: {} link variables for horizon {horizon}",
                self.label,
                self.link_vars.len()
            )));
        }
        if self.var_names.len() != self.var_ranges.len() {
            return Err(Error::InvalidSpec(format!("{}: name/range length mismatch", self.label)));
        }
        for row in self.equalities.iter().chain(&self.inequalities) {
            if !row.rhs.is_finite() {
                return Err(Error::InvalidSpec(format!(
                    "{}: row {} has non-finite rhs",
                    self.label,
                    row.label.code()
                )));
            }
            for &(v, c) in &row.coeffs {
                if v >= self.num_vars() || !c.is_finite() {
                    return Err(Error::InvalidSpec(format!(
                        "{}: row {} has bad entry ({v}, {c})",
                        self.label,
                        row.label.code()
                    )));
                }
            }
        }
        Ok(())
    }
}
