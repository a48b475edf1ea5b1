//! Optimality conditions of a signature block, embedded into a mixed-integer
//! model, and the big-M linearization of the complementarity pairs.

use crate::milp::{MilpModel, RowSense, VarId};
use crate::signatures::ConstraintBlock;
use crate::{Error, Result};

/// Big-M derivation policy.
///
/// Primal slack bounds come from the block's variable ranges where finite,
/// widened by `derived_headroom` so that a slack legitimately sitting at its
/// physical maximum does not trip the 1%-of-M audit. Where no finite bound is
/// derivable, `primal_default` applies (`None` turns that case into an
/// error). Duals are boxed at `dual_bound`. The audit-and-double loop in the
/// solver scales `primal_default` and `dual_bound`, never the bound-derived
/// values, which are valid by construction.
#[derive(Debug, Clone, Copy)]
pub struct BigMPolicy {
    pub primal_default: Option<f64>,
    pub dual_bound: f64,
    pub derived_headroom: f64,
    /// Slack widths at or below this are treated as structurally zero.
    pub zero_tol: f64,
}

impl Default for BigMPolicy {
    fn default() -> Self {
        Self { primal_default: Some(1e4), dual_bound: 1e4, derived_headroom: 2.0, zero_tol: 1e-9 }
    }
}

impl BigMPolicy {
    /// The policy after `n` audit-failure doublings.
    pub fn doubled(&self, n: u32) -> Self {
        let f = f64::powi(2.0, n as i32);
        Self {
            primal_default: self.primal_default.map(|m| m * f),
            dual_bound: self.dual_bound * f,
            ..*self
        }
    }
}

/// Dual box for one block: the policy's base bound amplified by the block's
/// worst coefficient ratio (state recursions with small transfer
/// coefficients scale their duals by the inverse coefficient).
pub fn block_dual_bound(block: &ConstraintBlock, policy: &BigMPolicy) -> f64 {
    let mut min_coeff = 1.0f64;
    for row in block.equalities.iter().chain(&block.inequalities) {
        for &(_, c) in &row.coeffs {
            if c != 0.0 {
                min_coeff = min_coeff.min(c.abs());
            }
        }
    }
    policy.dual_bound * (1.0 / min_coeff).max(1.0)
}

/// Boxes for the equality duals. When a link variable appears in exactly
/// one row, stationarity pins that row's dual to the (nonnegative) price
/// divided by the coefficient, so the dual's sign is known and half the box
/// can be cut away.
pub(crate) fn equality_dual_boxes(block: &ConstraintBlock, bound: f64) -> Vec<(f64, f64)> {
    let columns = block.columns();
    let mut boxes = vec![(-bound, bound); block.equalities.len()];
    for &v in &block.link_vars {
        if let [(true, row, a)] = columns[v][..] {
            boxes[row] = if a > 0.0 { (0.0, bound) } else { (-bound, 0.0) };
        }
    }
    boxes
}

/// One complementarity pair: the dual of an inequality row and that row's
/// slack.
#[derive(Debug, Clone, Copy)]
pub struct ComplementarityPair {
    /// Index into the block's inequality list.
    pub ineq_index: usize,
    pub mu: VarId,
    /// Slack range implied by the variable ranges.
    pub slack_min: f64,
    pub slack_max: f64,
}

/// How one pair was linearized.
#[derive(Debug, Clone, Copy)]
pub enum PairBigM {
    /// Binary switch with the primal-side big-M actually used.
    Switched { z: VarId, m_primal: f64, derived: bool },
    /// Slack is structurally zero: the dual is unrestricted, no binary.
    ZeroSlack,
    /// Slack is structurally positive: the dual is fixed to zero, no binary.
    ForcedInactive,
}

/// A block's optimality system inside a larger model: primal variables and
/// feasibility rows, labeled duals, stationarity rows, and the
/// complementarity pairs awaiting linearization.
#[derive(Debug, Clone)]
pub struct KktEmbedding {
    pub primal: Vec<VarId>,
    pub eq_duals: Vec<VarId>,
    pub ineq_duals: Vec<VarId>,
    pub pairs: Vec<ComplementarityPair>,
}

/// Emits the optimality conditions of `block` into `model`.
///
/// `prices` are the upper-level price variables entering the block's
/// objective on its link variables; fixing their bounds turns the embedding
/// into the optimality system at known prices. Produces one stationarity row
/// per primal variable, the original feasibility rows, sign conditions on
/// the inequality duals, and one complementarity pair per inequality.
pub fn derive_kkt(
    model: &mut MilpModel,
    block: &ConstraintBlock,
    prices: &[VarId],
    prefix: &str,
    policy: &BigMPolicy,
) -> Result<KktEmbedding> {
    if prices.len() != block.horizon() {
        return Err(Error::InvalidSpec(format!(
            "{}: {} price variables for horizon {}",
            block.label,
            prices.len(),
            block.horizon()
        )));
    }
    block.validate(block.horizon())?;

    let bound = block_dual_bound(block, policy);
    let primal: Vec<VarId> = block
        .var_names
        .iter()
        .zip(&block.var_ranges)
        .map(|(name, &(lo, hi))| model.add_var(format!("{prefix}_{name}"), lo, hi))
        .collect();
    let boxes = equality_dual_boxes(block, bound);
    let eq_duals: Vec<VarId> = block
        .equalities
        .iter()
        .zip(&boxes)
        .map(|(row, &(lo, hi))| {
            model.add_var(format!("{prefix}_lam_{}", row.label.code()), lo, hi)
        })
        .collect();
    let ineq_duals: Vec<VarId> = block
        .inequalities
        .iter()
        .map(|row| model.add_var(format!("{prefix}_mu_{}", row.label.code()), 0.0, bound))
        .collect();

    // Stationarity: for every primal column, the dual-weighted row
    // coefficients balance the objective coefficient, which is the price
    // variable on link columns and zero elsewhere.
    let mut link_of = vec![None; block.num_vars()];
    for (t, &v) in block.link_vars.iter().enumerate() {
        link_of[v] = Some(t);
    }
    for (j, entries) in block.columns().iter().enumerate() {
        let mut coeffs: Vec<(VarId, f64)> = Vec::with_capacity(entries.len() + 1);
        if let Some(t) = link_of[j] {
            coeffs.push((prices[t], -1.0));
        }
        for &(is_eq, row, a) in entries {
            let dual = if is_eq { eq_duals[row] } else { ineq_duals[row] };
            coeffs.push((dual, a));
        }
        model.add_row(
            format!("{prefix}_stat_{}", block.var_names[j]),
            RowSense::Equal,
            0.0,
            coeffs,
        );
    }

    // Primal feasibility: the block's own rows.
    for row in &block.equalities {
        model.add_row(
            format!("{prefix}_{}", row.label.code()),
            RowSense::Equal,
            row.rhs,
            row.coeffs.iter().map(|&(v, c)| (primal[v], c)).collect(),
        );
    }
    let mut pairs = Vec::with_capacity(block.inequalities.len());
    for (i, row) in block.inequalities.iter().enumerate() {
        model.add_row(
            format!("{prefix}_{}", row.label.code()),
            RowSense::GreaterEqual,
            row.rhs,
            row.coeffs.iter().map(|&(v, c)| (primal[v], c)).collect(),
        );
        let (slack_min, slack_max) = block.slack_range(row);
        pairs.push(ComplementarityPair { ineq_index: i, mu: ineq_duals[i], slack_min, slack_max });
    }

    Ok(KktEmbedding { primal, eq_duals, ineq_duals, pairs })
}

/// Linearizes every complementarity pair of an embedding with binary
/// switches: `mu <= M_dual z` and `slack <= M_primal (1 - z)`.
///
/// Structurally degenerate pairs need no binary: zero-width slacks leave the
/// dual unrestricted, and always-positive slacks force the dual to zero.
/// Lower/upper pairs of the same bound family get a `z_lo + z_hi <= 1` cut
/// (both sides cannot bind once zero-width pairs are gone).
pub fn bigm_linearize(
    model: &mut MilpModel,
    block: &ConstraintBlock,
    embedding: &KktEmbedding,
    policy: &BigMPolicy,
    prefix: &str,
) -> Result<Vec<PairBigM>> {
    let dual_bound = block_dual_bound(block, policy);
    let mut out = Vec::with_capacity(embedding.pairs.len());
    for pair in &embedding.pairs {
        let row = &block.inequalities[pair.ineq_index];
        if pair.slack_max <= policy.zero_tol {
            out.push(PairBigM::ZeroSlack);
            continue;
        }
        if pair.slack_min > policy.zero_tol {
            model.set_var_bounds(pair.mu, 0.0, 0.0);
            out.push(PairBigM::ForcedInactive);
            continue;
        }
        let (m_primal, derived) = if pair.slack_max.is_finite() {
            (pair.slack_max * policy.derived_headroom, true)
        } else {
            match policy.primal_default {
                Some(m) => (m, false),
                None => {
                    return Err(Error::Unbounded {
                        what: format!("complementarity slack {}", row.label.code()),
                        detail: "no finite big-M derivable and no default given".into(),
                    })
                }
            }
        };
        let z = model.add_binary(format!("{prefix}_z_{}", row.label.code()));
        // slack <= M (1 - z)   <=>   coeffs . v + M z <= rhs + M
        let mut slack_row: Vec<(VarId, f64)> =
            row.coeffs.iter().map(|&(v, c)| (embedding.primal[v], c)).collect();
        slack_row.push((z, m_primal));
        model.add_row(
            format!("{prefix}_cs_{}", row.label.code()),
            RowSense::LessEqual,
            row.rhs + m_primal,
            slack_row,
        );
        // mu <= M_dual z
        model.add_row(
            format!("{prefix}_cd_{}", row.label.code()),
            RowSense::LessEqual,
            0.0,
            vec![(pair.mu, 1.0), (z, -dual_bound)],
        );
        out.push(PairBigM::Switched { z, m_primal, derived });
    }

    // Interval cuts: at most one side of a two-sided bound can bind.
    use crate::signatures::DualLabel;
    let mut lower_z = std::collections::HashMap::new();
    for (pair, lin) in embedding.pairs.iter().zip(&out) {
        if let (DualLabel::Lower(fam, t), PairBigM::Switched { z, .. }) =
            (block.inequalities[pair.ineq_index].label, lin)
        {
            lower_z.insert((fam, t), *z);
        }
    }
    for (pair, lin) in embedding.pairs.iter().zip(&out) {
        if let (DualLabel::Upper(fam, t), PairBigM::Switched { z, .. }) =
            (block.inequalities[pair.ineq_index].label, lin)
        {
            if let Some(&z_lo) = lower_z.get(&(fam, t)) {
                model.add_row(
                    format!("{prefix}_onesided_{}_t{t}", fam.code()),
                    RowSense::LessEqual,
                    1.0,
                    vec![(z_lo, 1.0), (*z, 1.0)],
                );
            }
        }
    }
    Ok(out)
}

/// A fully linearized block system.
#[derive(Debug, Clone)]
pub struct LinearizedKkt {
    pub embedding: KktEmbedding,
    /// Aligned with `embedding.pairs`.
    pub pair_bigm: Vec<PairBigM>,
    pub dual_bound: f64,
}

impl LinearizedKkt {
    pub fn num_binaries(&self) -> usize {
        self.pair_bigm.iter().filter(|p| matches!(p, PairBigM::Switched { .. })).count()
    }
}
