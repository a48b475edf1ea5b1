//! Assembly of the full price-setting model.

use crate::milp::{MilpModel, RowSense, VarId};
use crate::signatures::ConstraintBlock;
use crate::{Error, Result, TimeGrid};

use super::kkt::{bigm_linearize, derive_kkt, BigMPolicy, LinearizedKkt};
use super::CommunityEconomics;

/// Everything needed to build one day's model.
#[derive(Debug, Clone, Copy)]
pub struct BipsInputs<'a> {
    /// Weight estimates per prosumer per signature (the sampled values, or
    /// the true ones for the clairvoyant baseline).
    pub weights: &'a [Vec<f64>],
    /// Signature blocks per prosumer, aligned with `weights`.
    pub blocks: &'a [Vec<ConstraintBlock>],
    pub econ: &'a CommunityEconomics,
    pub grid: &'a TimeGrid,
    /// When set, prices are pinned instead of optimized (used by oracles and
    /// fixed-price audits).
    pub fixed_prices: Option<&'a [Vec<f64>]>,
}

/// Locations of the model's pieces, for extraction and audits.
#[derive(Debug, Clone)]
pub struct BipsIndex {
    pub n_prosumers: usize,
    pub horizon: usize,
    pub price: Vec<Vec<VarId>>,
    pub response: Vec<Vec<VarId>>,
    pub import: Vec<VarId>,
    pub export: Vec<VarId>,
    pub excess: Vec<VarId>,
    /// `[prosumer][signature]`; `None` for signatures skipped at exactly
    /// zero weight (they cannot influence the optimum).
    pub kkt: Vec<Vec<Option<LinearizedKkt>>>,
    /// Dual-side payment expression per prosumer.
    pub payments: Vec<Vec<(VarId, f64)>>,
}

/// A sealed model plus its index.
#[derive(Debug, Clone)]
pub struct BipsModel {
    pub model: MilpModel,
    pub index: BipsIndex,
}

/// The dual objective of each signature, weighted and summed: linear in the
/// dual variables, equal to the prosumer's payment at lower-level
/// optimality.
pub fn payment_expression(
    weights: &[f64],
    blocks: &[ConstraintBlock],
    embeddings: &[Option<LinearizedKkt>],
) -> Result<Vec<(VarId, f64)>> {
    if weights.len() != embeddings.len() || weights.len() != blocks.len() {
        return Err(Error::InvalidSpec(format!(
            "payment expression needs aligned inputs ({} weights, {} blocks, {} embeddings)",
            weights.len(),
            blocks.len(),
            embeddings.len()
        )));
    }
    let mut expr = Vec::new();
    for ((&w, block), emb) in weights.iter().zip(blocks).zip(embeddings) {
        if w.abs() < 1e-15 {
            continue;
        }
        let emb = emb.as_ref().ok_or_else(|| {
            Error::InvalidSpec(format!("missing duals for weighted block {}", block.label))
        })?;
        for (row, &lam) in block.equalities.iter().zip(&emb.embedding.eq_duals) {
            if row.rhs != 0.0 {
                expr.push((lam, w * row.rhs));
            }
        }
        for (row, &mu) in block.inequalities.iter().zip(&emb.embedding.ineq_duals) {
            if row.rhs != 0.0 {
                expr.push((mu, w * row.rhs));
            }
        }
    }
    Ok(expr)
}

/// Builds the full single-level model: community objective and dispatch
/// rows, response definitions, rationality and revenue-adequacy rows on the
/// dual-side payments, and the linearized optimality system of every block
/// carrying nonzero weight.
pub fn assemble_bips(inputs: &BipsInputs, policy: &BigMPolicy) -> Result<BipsModel> {
    assemble_bips_inner(inputs, policy, true)
}

/// As [`assemble_bips`], optionally without the rationality and
/// revenue-adequacy rows. The solver uses the relaxed variant as a bound and
/// pattern provider; variables are created in identical order either way, so
/// indices transfer between the two builds.
pub(crate) fn assemble_bips_inner(
    inputs: &BipsInputs,
    policy: &BigMPolicy,
    with_rationality: bool,
) -> Result<BipsModel> {
    let econ = inputs.econ;
    let horizon = inputs.grid.horizon;
    let n = inputs.weights.len();
    econ.validate()?;
    if econ.horizon() != horizon {
        return Err(Error::InvalidSpec(format!(
            "economics horizon {} vs grid horizon {horizon}",
            econ.horizon()
        )));
    }
    if inputs.blocks.len() != n || econ.n_prosumers() != n {
        return Err(Error::InvalidSpec(format!(
            "{} weight rows, {} block rows, {} outside costs",
            n,
            inputs.blocks.len(),
            econ.n_prosumers()
        )));
    }
    if let Some(fixed) = inputs.fixed_prices {
        if fixed.len() != n || fixed.iter().any(|p| p.len() != horizon) {
            return Err(Error::InvalidSpec("fixed price matrix shape mismatch".into()));
        }
    }
    for (w, blocks) in inputs.weights.iter().zip(inputs.blocks) {
        if w.len() != blocks.len() {
            return Err(Error::InvalidSpec(format!(
                "{} weights vs {} blocks for one prosumer",
                w.len(),
                blocks.len()
            )));
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpec("non-finite weight".into()));
        }
    }

    let mut model = MilpModel::new("bips");

    // Connection-point bound: ten times the capacity limit where finite,
    // falling back to the gross weighted response range.
    let finite_cap =
        econ.capacity_limit.iter().cloned().filter(|c| c.is_finite()).fold(0.0_f64, f64::max);
    let gross: f64 = inputs
        .weights
        .iter()
        .zip(inputs.blocks)
        .map(|(w, blocks)| {
            w.iter()
                .zip(blocks)
                .map(|(&wk, b)| {
                    let reach = b
                        .link_vars
                        .iter()
                        .map(|&v| {
                            let (lo, hi) = b.var_ranges[v];
                            lo.abs().max(hi.abs())
                        })
                        .fold(0.0_f64, f64::max);
                    wk.abs() * reach
                })
                .sum::<f64>()
        })
        .sum();
    let conn_bound = (10.0 * finite_cap).max(10.0 * (gross + 1.0));

    let price: Vec<Vec<VarId>> = (0..n)
        .map(|pn| {
            (0..horizon)
                .map(|t| {
                    let (lo, hi) = match inputs.fixed_prices {
                        Some(fixed) => (fixed[pn][t], fixed[pn][t]),
                        None => (0.0, econ.price_cap),
                    };
                    model.add_var(format!("x_n{pn}_t{t}"), lo, hi)
                })
                .collect()
        })
        .collect();
    let response: Vec<Vec<VarId>> = (0..n)
        .map(|pn| {
            (0..horizon)
                .map(|t| model.add_var(format!("y_n{pn}_t{t}"), -conn_bound, conn_bound))
                .collect()
        })
        .collect();
    let import: Vec<VarId> =
        (0..horizon).map(|t| model.add_var(format!("pim_t{t}"), 0.0, conn_bound)).collect();
    let export: Vec<VarId> =
        (0..horizon).map(|t| model.add_var(format!("pex_t{t}"), 0.0, conn_bound)).collect();
    let excess: Vec<VarId> =
        (0..horizon).map(|t| model.add_var(format!("ppen_t{t}"), 0.0, conn_bound)).collect();

    // Objective: import cost minus export revenue plus violation penalties.
    for t in 0..horizon {
        model.add_objective_term(import[t], econ.spot_price[t] + econ.import_tariff[t]);
        model.add_objective_term(export[t], -(econ.spot_price[t] - econ.export_tariff[t]));
        model.add_objective_term(excess[t], econ.violation_penalty[t]);
    }

    // Balance and excess tracking.
    for t in 0..horizon {
        let mut coeffs = vec![(import[t], 1.0), (export[t], -1.0)];
        for yn in &response {
            coeffs.push((yn[t], -1.0));
        }
        model.add_row(format!("balance_t{t}"), RowSense::Equal, 0.0, coeffs);
        if econ.capacity_limit[t].is_finite() {
            model.add_row(
                format!("excess_t{t}"),
                RowSense::GreaterEqual,
                -econ.capacity_limit[t],
                vec![(excess[t], 1.0), (import[t], -1.0)],
            );
        }
    }

    // Per-block optimality systems and response definitions.
    let mut kkt: Vec<Vec<Option<LinearizedKkt>>> = Vec::with_capacity(n);
    for pn in 0..n {
        let mut row = Vec::with_capacity(inputs.blocks[pn].len());
        for (k, block) in inputs.blocks[pn].iter().enumerate() {
            if inputs.weights[pn][k].abs() < 1e-15 {
                row.push(None);
                continue;
            }
            let prefix = format!("n{pn}_k{k}");
            let embedding = derive_kkt(&mut model, block, &price[pn], &prefix, policy)?;
            let pair_bigm = bigm_linearize(&mut model, block, &embedding, policy, &prefix)
                .map_err(|e| {
                    Error::InvalidSpec(format!("prosumer {pn} signature {k} ({}): {e}", block.label))
                })?;
            let dual_bound = super::kkt::block_dual_bound(block, policy);
            row.push(Some(LinearizedKkt { embedding, pair_bigm, dual_bound }));
        }
        kkt.push(row);
    }
    for pn in 0..n {
        for t in 0..horizon {
            let mut coeffs = vec![(response[pn][t], 1.0)];
            for (k, emb) in kkt[pn].iter().enumerate() {
                if let Some(emb) = emb {
                    let link = emb.embedding.primal[inputs.blocks[pn][k].link_vars[t]];
                    coeffs.push((link, -inputs.weights[pn][k]));
                }
            }
            model.add_row(format!("resp_n{pn}_t{t}"), RowSense::Equal, 0.0, coeffs);
        }
    }

    // Individual rationality and revenue adequacy on dual-side payments.
    let mut payments = Vec::with_capacity(n);
    for pn in 0..n {
        let expr = payment_expression(&inputs.weights[pn], &inputs.blocks[pn], &kkt[pn])?;
        if with_rationality {
            model.add_row(
                format!("rationality_n{pn}"),
                RowSense::LessEqual,
                econ.outside_cost[pn],
                expr.clone(),
            );
        }
        payments.push(expr);
    }
    if with_rationality {
        let mut adequacy: Vec<(VarId, f64)> = payments.iter().flatten().cloned().collect();
        for t in 0..horizon {
            adequacy.push((import[t], -(econ.spot_price[t] + econ.import_tariff[t])));
            adequacy.push((export[t], econ.spot_price[t] - econ.export_tariff[t]));
            adequacy.push((excess[t], -econ.violation_penalty[t]));
        }
        model.add_row("revenue_adequacy", RowSense::GreaterEqual, 0.0, adequacy);
    }

    model.validate()?;
    Ok(BipsModel {
        model,
        index: BipsIndex {
            n_prosumers: n,
            horizon,
            price,
            response,
            import,
            export,
            excess,
            kkt,
            payments,
        },
    })
}
