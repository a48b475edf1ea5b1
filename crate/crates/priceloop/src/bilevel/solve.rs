//! Solving the assembled model, with post-solve audits and the
//! audit-failure doubling loop.

use std::path::PathBuf;

use crate::milp::{write_lp, SolveOptions, SolveStatus, SolverBackend};
use crate::signatures::solve_signature_lp;
use crate::{Error, Result};

use super::assemble::{assemble_bips_inner, BipsInputs, BipsModel};
use super::kkt::{BigMPolicy, PairBigM};
use super::BipsSolution;

/// Relative tolerance of the lower-level re-solve audit.
const LOWER_LEVEL_TOL: f64 = 1e-5;
/// Absolute tolerance on complementarity residuals.
const COMPLEMENTARITY_TOL: f64 = 1e-5;
/// Fraction of a big-M at which a dual or slack counts as crowding it.
const BIGM_CROWDING: f64 = 0.99;
/// Doublings attempted before giving up.
const MAX_DOUBLINGS: u32 = 6;

/// Solver, options, big-M policy, and a directory for failing instances.
pub struct SolveContext<'a> {
    pub backend: &'a dyn SolverBackend,
    pub options: SolveOptions,
    pub policy: BigMPolicy,
    /// Failing instances are exported here in LP format for post-mortem.
    pub diagnostics_dir: Option<PathBuf>,
}

impl<'a> SolveContext<'a> {
    pub fn new(backend: &'a dyn SolverBackend) -> Self {
        Self {
            backend,
            options: SolveOptions::default(),
            policy: BigMPolicy::default(),
            diagnostics_dir: None,
        }
    }

    fn export_failure(&self, bips: &BipsModel, tag: &str) -> Option<PathBuf> {
        let dir = self.diagnostics_dir.as_ref()?;
        std::fs::create_dir_all(dir).ok()?;
        let path = dir.join(format!("{tag}.lp"));
        std::fs::write(&path, write_lp(&bips.model)).ok()?;
        Some(path)
    }
}

/// Post-solve audit counters.
#[derive(Debug, Clone, Default)]
pub struct AuditReport {
    /// Assemble-and-solve attempts consumed (1 = no doubling needed).
    pub attempts: u32,
    pub binaries: usize,
    /// True when the pattern-repair shortcut missed the bound and the full
    /// mixed-integer model was solved outright.
    pub full_milp_fallback: bool,
    /// Largest `mu * slack` over all linearized pairs.
    pub max_complementarity_residual: f64,
    /// Largest relative gap between an anticipated signature cost and its
    /// direct LP re-solve at the returned prices.
    pub max_lower_level_gap: f64,
    /// Largest gap between a dual-side payment and the primal-side
    /// `sum_t price * response`.
    pub max_payment_identity_gap: f64,
}

/// Outcome of the big-M crowding scan over the linearized pairs.
struct CrowdingScan {
    hits: usize,
    max_comp_residual: f64,
}

fn scan_bigm(bips: &BipsModel, blocks: &[Vec<crate::signatures::ConstraintBlock>], values: &[f64]) -> CrowdingScan {
    let mut hits = 0;
    let mut max_comp = 0.0f64;
    for (pn, row) in bips.index.kkt.iter().enumerate() {
        for (k, emb) in row.iter().enumerate() {
            let Some(emb) = emb else { continue };
            let block = &blocks[pn][k];
            for (pair, lin) in emb.embedding.pairs.iter().zip(&emb.pair_bigm) {
                let ineq = &block.inequalities[pair.ineq_index];
                let lhs: f64 = ineq
                    .coeffs
                    .iter()
                    .map(|&(v, c)| c * values[emb.embedding.primal[v].index()])
                    .sum();
                let slack = lhs - ineq.rhs;
                let mu = values[pair.mu.index()];
                max_comp = max_comp.max(mu * slack.max(0.0));
                if let PairBigM::Switched { m_primal, .. } = lin {
                    if mu >= BIGM_CROWDING * emb.dual_bound || slack >= BIGM_CROWDING * m_primal {
                        hits += 1;
                    }
                }
            }
        }
    }
    CrowdingScan { hits, max_comp_residual: max_comp }
}

fn surface_failure(ctx: &SolveContext, bips: &BipsModel, status: SolveStatus) -> Error {
    match status {
        SolveStatus::Infeasible => {
            let path = ctx.export_failure(bips, "infeasible");
            Error::Infeasible {
                what: "price-setting problem".into(),
                detail: match path {
                    Some(p) => format!("model exported to {}", p.display()),
                    None => "no feasible prices and dispatch".into(),
                },
            }
        }
        SolveStatus::Unbounded => {
            let path = ctx.export_failure(bips, "unbounded");
            Error::Unbounded {
                what: "price-setting problem".into(),
                detail: path.map(|p| p.display().to_string()).unwrap_or_default(),
            }
        }
        _ => {
            let path = ctx.export_failure(bips, "limit");
            Error::Solver(format!(
                "time or iteration limit before optimality{}",
                path.map(|p| format!(" (model at {})", p.display())).unwrap_or_default()
            ))
        }
    }
}

/// Slack at or below this counts as tight when re-deriving binaries.
const TIGHT_SLACK: f64 = 1e-7;

/// Price-and-dual certification: holding the relaxed stage's dispatch
/// fixed, searches for prices and dual certificates that keep every block
/// optimal while satisfying rationality and revenue adequacy. Returns the
/// full model with a composed solution vector on success.
///
/// The LP contains only price and dual variables: stationarity ties duals
/// to prices, duals of strictly slack rows are pinned to zero, and the
/// payment rows use the fixed dispatch's cost as a constant.
fn certify_prices(
    inputs: &BipsInputs,
    ctx: &SolveContext,
    policy: &super::kkt::BigMPolicy,
    relaxed: &BipsModel,
    rvals: &[f64],
) -> Result<Option<(BipsModel, Vec<f64>)>> {
    use crate::milp::{MilpModel, RowSense, VarId};

    let full = assemble_bips_inner(inputs, policy, true)?;
    debug_assert_eq!(full.model.num_vars(), relaxed.model.num_vars());
    let idx = &full.index;
    let econ = inputs.econ;
    let horizon = idx.horizon;

    let mut lp = MilpModel::new("price_certificate");
    let price: Vec<Vec<VarId>> = (0..idx.n_prosumers)
        .map(|pn| {
            (0..horizon)
                .map(|t| {
                    let (lo, hi) = match inputs.fixed_prices {
                        Some(fixed) => (fixed[pn][t], fixed[pn][t]),
                        None => (0.0, econ.price_cap),
                    };
                    lp.add_var(format!("x_n{pn}_t{t}"), lo, hi)
                })
                .collect()
        })
        .collect();

    // Dual variables and the slack-derived binary pattern, aligned with the
    // full model's embeddings.
    let mut eq_duals: Vec<Vec<Vec<VarId>>> = Vec::with_capacity(idx.n_prosumers);
    let mut ineq_duals: Vec<Vec<Vec<VarId>>> = Vec::with_capacity(idx.n_prosumers);
    let mut tight: Vec<Vec<Vec<bool>>> = Vec::with_capacity(idx.n_prosumers);
    for (pn, row) in idx.kkt.iter().enumerate() {
        let mut eq_row = Vec::with_capacity(row.len());
        let mut ineq_row = Vec::with_capacity(row.len());
        let mut tight_row = Vec::with_capacity(row.len());
        for (k, emb) in row.iter().enumerate() {
            let Some(emb) = emb else {
                eq_row.push(Vec::new());
                ineq_row.push(Vec::new());
                tight_row.push(Vec::new());
                continue;
            };
            let block = &inputs.blocks[pn][k];
            let bound = emb.dual_bound;
            let boxes = super::kkt::equality_dual_boxes(block, bound);
            let lams: Vec<VarId> = block
                .equalities
                .iter()
                .zip(&boxes)
                .map(|(r, &(lo, hi))| {
                    lp.add_var(format!("n{pn}_k{k}_lam_{}", r.label.code()), lo, hi)
                })
                .collect();
            let mut tights = Vec::with_capacity(block.inequalities.len());
            let mus: Vec<VarId> = block
                .inequalities
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let slack: f64 = r
                        .coeffs
                        .iter()
                        .map(|&(v, c)| c * rvals[emb.embedding.primal[v].index()])
                        .sum::<f64>()
                        - r.rhs;
                    let is_tight = slack <= TIGHT_SLACK;
                    tights.push(is_tight);
                    let forced_zero = matches!(
                        emb.pair_bigm[i],
                        super::kkt::PairBigM::ForcedInactive
                    ) || !is_tight;
                    let hi = if forced_zero { 0.0 } else { bound };
                    lp.add_var(format!("n{pn}_k{k}_mu_{}", r.label.code()), 0.0, hi)
                })
                .collect();
            // Stationarity at the fixed dispatch: identical rows as in the
            // embedding, over the certificate's own variables.
            let mut link_of = vec![None; block.num_vars()];
            for (t, &v) in block.link_vars.iter().enumerate() {
                link_of[v] = Some(t);
            }
            for (j, entries) in block.columns().iter().enumerate() {
                let mut coeffs: Vec<(VarId, f64)> = Vec::with_capacity(entries.len() + 1);
                if let Some(t) = link_of[j] {
                    coeffs.push((price[pn][t], -1.0));
                }
                for &(is_eq, r, a) in entries {
                    coeffs.push((if is_eq { lams[r] } else { mus[r] }, a));
                }
                lp.add_row(
                    format!("n{pn}_k{k}_stat_{}", block.var_names[j]),
                    RowSense::Equal,
                    0.0,
                    coeffs,
                );
            }
            eq_row.push(lams);
            ineq_row.push(mus);
            tight_row.push(tights);
        }
        eq_duals.push(eq_row);
        ineq_duals.push(ineq_row);
        tight.push(tight_row);
    }

    // Rationality and revenue adequacy with the dispatch cost as constant.
    let dispatch_cost: f64 = (0..horizon)
        .map(|t| {
            rvals[idx.import[t].index()] * (econ.spot_price[t] + econ.import_tariff[t])
                - rvals[idx.export[t].index()] * (econ.spot_price[t] - econ.export_tariff[t])
                + rvals[idx.excess[t].index()] * econ.violation_penalty[t]
        })
        .sum();
    let mut adequacy: Vec<(VarId, f64)> = Vec::new();
    for pn in 0..idx.n_prosumers {
        let mut expr: Vec<(VarId, f64)> = Vec::new();
        for (k, emb) in idx.kkt[pn].iter().enumerate() {
            if emb.is_none() {
                continue;
            }
            let w = inputs.weights[pn][k];
            let block = &inputs.blocks[pn][k];
            for (r, &lam) in block.equalities.iter().zip(&eq_duals[pn][k]) {
                if r.rhs != 0.0 {
                    expr.push((lam, w * r.rhs));
                }
            }
            for (r, &mu) in block.inequalities.iter().zip(&ineq_duals[pn][k]) {
                if r.rhs != 0.0 {
                    expr.push((mu, w * r.rhs));
                }
            }
        }
        lp.add_row(
            format!("rationality_n{pn}"),
            RowSense::LessEqual,
            econ.outside_cost[pn],
            expr.clone(),
        );
        adequacy.extend(expr);
    }
    lp.add_row("revenue_adequacy", RowSense::GreaterEqual, dispatch_cost, adequacy);

    let sol = ctx.backend.solve_lp(&lp, &ctx.options)?;
    if sol.status != SolveStatus::Optimal {
        return Ok(None);
    }

    // Compose a full-model assignment: dispatch and primals from the
    // relaxed stage, prices and duals from the certificate, binaries from
    // the slack pattern.
    let mut values = rvals.to_vec();
    for pn in 0..idx.n_prosumers {
        for t in 0..horizon {
            values[idx.price[pn][t].index()] = sol.values[price[pn][t].index()];
        }
        for (k, emb) in idx.kkt[pn].iter().enumerate() {
            let Some(emb) = emb else { continue };
            for (dst, src) in emb.embedding.eq_duals.iter().zip(&eq_duals[pn][k]) {
                values[dst.index()] = sol.values[src.index()];
            }
            for (dst, src) in emb.embedding.ineq_duals.iter().zip(&ineq_duals[pn][k]) {
                values[dst.index()] = sol.values[src.index()];
            }
            for (i, lin) in emb.pair_bigm.iter().enumerate() {
                if let super::kkt::PairBigM::Switched { z, .. } = lin {
                    values[z.index()] = if tight[pn][k][i] { 1.0 } else { 0.0 };
                }
            }
        }
    }
    Ok(Some((full, values)))
}

/// Assembles and solves one day's model, then runs the post-solve audits:
/// the big-M crowding scan (doubling the default-valued big-Ms and dual
/// boxes until clean), complementarity residuals, a direct LP re-solve of
/// every embedded block at the returned prices, and the payment identity.
///
/// The solve itself is two-staged: the model without the rationality and
/// revenue-adequacy rows solves quickly and bounds the full model from
/// below; re-solving the full model with that stage's complementarity
/// pattern pinned is a near-LP whose optimum, when it matches the bound,
/// is a global optimum of the full model. Only when the repair misses the
/// bound does the full mixed-integer model run as is.
pub fn solve_bips(inputs: &BipsInputs, ctx: &SolveContext) -> Result<BipsSolution> {
    let mut last_err: Option<Error> = None;
    for attempt in 0..=MAX_DOUBLINGS {
        let policy = ctx.policy.doubled(attempt);

        let relaxed = assemble_bips_inner(inputs, &policy, false)?;
        let rsol = ctx.backend.solve_milp(&relaxed.model, &ctx.options)?;
        if rsol.status != SolveStatus::Optimal {
            return Err(surface_failure(ctx, &relaxed, rsol.status));
        }

        let (bips, values, fallback) =
            match certify_prices(inputs, ctx, &policy, &relaxed, &rsol.values)? {
                Some((bips, values)) => (bips, values, false),
                None => {
                    // No prices certify the relaxed dispatch under the
                    // payment constraints; solve the full model outright.
                    let full = assemble_bips_inner(inputs, &policy, true)?;
                    let fsol = ctx.backend.solve_milp(&full.model, &ctx.options)?;
                    if fsol.status != SolveStatus::Optimal {
                        return Err(surface_failure(ctx, &full, fsol.status));
                    }
                    (full, fsol.values, true)
                }
            };
        bips.model.check_solution(&values, 1e-6)?;

        let scan = scan_bigm(&bips, inputs.blocks, &values);
        if scan.hits > 0 {
            last_err = Some(Error::Audit(format!(
                "{} duals or slacks within {:.0}% of their big-M after attempt {}",
                scan.hits,
                (1.0 - BIGM_CROWDING) * 100.0,
                attempt + 1
            )));
            continue;
        }

        return finish(
            inputs,
            ctx,
            bips,
            values,
            attempt + 1,
            fallback,
            scan.max_comp_residual,
        );
    }
    Err(last_err.unwrap_or_else(|| Error::Solver("big-M doubling exhausted".into())))
}

fn finish(
    inputs: &BipsInputs,
    ctx: &SolveContext,
    bips: BipsModel,
    values: Vec<f64>,
    attempts: u32,
    fallback: bool,
    max_comp_residual: f64,
) -> Result<BipsSolution> {
    let idx = &bips.index;
    let horizon = idx.horizon;
    let at = |v: crate::milp::VarId| values[v.index()];

    if max_comp_residual > COMPLEMENTARITY_TOL {
        ctx.export_failure(&bips, "complementarity");
        return Err(Error::Audit(format!(
            "complementarity residual {max_comp_residual:.3e} exceeds {COMPLEMENTARITY_TOL:.0e}"
        )));
    }

    let prices: Vec<Vec<f64>> =
        idx.price.iter().map(|row| row.iter().map(|&v| at(v)).collect()).collect();
    let expected_response: Vec<Vec<f64>> =
        idx.response.iter().map(|row| row.iter().map(|&v| at(v)).collect()).collect();
    let import: Vec<f64> = idx.import.iter().map(|&v| at(v)).collect();
    let export: Vec<f64> = idx.export.iter().map(|&v| at(v)).collect();
    let excess: Vec<f64> = idx.excess.iter().map(|&v| at(v)).collect();
    let community_cost = bips.model.objective_value(&values);
    let payments: Vec<f64> = idx
        .payments
        .iter()
        .map(|expr| expr.iter().map(|&(v, w)| w * at(v)).sum())
        .collect();

    // Lower-level optimality audit: every embedded block, re-solved directly
    // at the returned prices, must reproduce its anticipated cost.
    let mut max_lower_level_gap = 0.0f64;
    let mut profiles: Vec<Vec<Vec<f64>>> = Vec::with_capacity(idx.n_prosumers);
    for (pn, row) in idx.kkt.iter().enumerate() {
        let mut per_sig = Vec::with_capacity(row.len());
        for (k, emb) in row.iter().enumerate() {
            let Some(emb) = emb else {
                per_sig.push(Vec::new());
                continue;
            };
            let block = &inputs.blocks[pn][k];
            let profile: Vec<f64> =
                block.link_vars.iter().map(|&v| at(emb.embedding.primal[v])).collect();
            let anticipated: f64 =
                profile.iter().zip(&prices[pn]).map(|(p, x)| p * x).sum();
            let direct =
                solve_signature_lp(block, &prices[pn], ctx.backend, &ctx.options)?.objective;
            let gap = (anticipated - direct).abs() / direct.abs().max(1.0);
            max_lower_level_gap = max_lower_level_gap.max(gap);
            per_sig.push(profile);
        }
        profiles.push(per_sig);
    }
    if max_lower_level_gap > LOWER_LEVEL_TOL {
        ctx.export_failure(&bips, "lower_level");
        return Err(Error::Audit(format!(
            "anticipated signature cost deviates from its LP re-solve by {max_lower_level_gap:.3e} \
             (relative), beyond {LOWER_LEVEL_TOL:.0e}"
        )));
    }

    // Payment identity: dual-side payments equal the primal-side bill.
    let mut max_payment_identity_gap = 0.0f64;
    for pn in 0..idx.n_prosumers {
        let primal_bill: f64 =
            (0..horizon).map(|t| prices[pn][t] * expected_response[pn][t]).sum();
        let gap = (payments[pn] - primal_bill).abs() / primal_bill.abs().max(1.0);
        max_payment_identity_gap = max_payment_identity_gap.max(gap);
    }
    if max_payment_identity_gap > LOWER_LEVEL_TOL {
        ctx.export_failure(&bips, "payment_identity");
        return Err(Error::Audit(format!(
            "dual-side payment deviates from the primal bill by {max_payment_identity_gap:.3e}"
        )));
    }

    let solution = BipsSolution {
        prices,
        import,
        export,
        excess,
        expected_response,
        community_cost,
        payments,
        profiles,
        audit: AuditReport {
            attempts,
            binaries: bips.model.num_binaries(),
            full_milp_fallback: fallback,
            max_complementarity_residual: max_comp_residual,
            max_lower_level_gap,
            max_payment_identity_gap,
        },
    };
    solution.check_invariants(inputs.econ, 1e-6)?;
    Ok(solution)
}
