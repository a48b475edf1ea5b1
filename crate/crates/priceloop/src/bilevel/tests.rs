use crate::milp::{HighsBackend, MilpModel, SolveOptions, SolverBackend};
use crate::signatures::{
    build_battery, build_flex_baseload, build_pv, BatterySpec, BlockRow, BoundFamily,
    ConstraintBlock, DualLabel, FlexBaseloadSpec, PvSpec, SignatureKind,
};
use crate::TimeGrid;

use super::*;

fn ctx(backend: &HighsBackend) -> SolveContext<'_> {
    SolveContext::new(backend)
}

fn econ_for(spot: Vec<f64>, capacity: f64, outside_cost: Vec<f64>) -> CommunityEconomics {
    let h = spot.len();
    let worst = spot.iter().cloned().fold(0.0f64, f64::max);
    CommunityEconomics {
        spot_price: spot,
        import_tariff: vec![0.1; h],
        export_tariff: vec![0.05; h],
        outside_tariff: vec![0.6; h],
        violation_penalty: vec![worst + 5.0; h],
        capacity_limit: vec![capacity; h],
        outside_cost,
        price_cap: 10.0,
    }
}

/// Embeds a block's optimality system at fixed prices and solves the
/// resulting feasibility MILP, returning (model values, embedding).
fn solve_kkt_at_fixed_prices(
    block: &ConstraintBlock,
    prices: &[f64],
    policy: &BigMPolicy,
) -> (Vec<f64>, LinearizedKkt) {
    let mut model = MilpModel::new(format!("kkt_{}", block.label));
    let price_vars: Vec<_> =
        prices.iter().enumerate().map(|(t, &x)| model.add_var(format!("x_t{t}"), x, x)).collect();
    let embedding = derive_kkt(&mut model, block, &price_vars, "b", policy).unwrap();
    let pair_bigm = bigm_linearize(&mut model, block, &embedding, policy, "b").unwrap();
    let sol = HighsBackend.solve_milp(&model, &SolveOptions::default()).unwrap();
    assert_eq!(sol.status, crate::milp::SolveStatus::Optimal, "KKT system must be feasible");
    (sol.values, LinearizedKkt { embedding, pair_bigm, dual_bound: policy.dual_bound })
}

fn kkt_cost(block: &ConstraintBlock, prices: &[f64], values: &[f64], emb: &LinearizedKkt) -> f64 {
    block
        .link_vars
        .iter()
        .zip(prices)
        .map(|(&v, x)| x * values[emb.embedding.primal[v].index()])
        .sum()
}

#[test]
fn kkt_of_single_equality_lp_recovers_the_price_as_dual() {
    // min x p  subject to  p = c: stationarity gives lambda = x, so the dual
    // objective lambda * c equals the primal x * c.
    let block = ConstraintBlock {
        kind: SignatureKind::Pv,
        label: "pinned".into(),
        var_names: vec!["p_t0".into()],
        var_ranges: vec![(2.5, 2.5)],
        link_vars: vec![0],
        equalities: vec![BlockRow { coeffs: vec![(0, 1.0)], rhs: 2.5, label: DualLabel::Balance(0) }],
        inequalities: vec![],
    };
    let policy = BigMPolicy::default();
    let (values, emb) = solve_kkt_at_fixed_prices(&block, &[1.3], &policy);
    let lambda = values[emb.embedding.eq_duals[0].index()];
    assert!((lambda - 1.3).abs() < 1e-8);
    assert!((values[emb.embedding.primal[0].index()] - 2.5).abs() < 1e-8);
    assert!((kkt_cost(&block, &[1.3], &values, &emb) - 1.3 * 2.5).abs() < 1e-8);
}

#[test]
fn kkt_of_pv_block_fixes_duals_to_negated_prices() {
    let g = TimeGrid::new(3, 1.0).unwrap();
    let block = build_pv(&PvSpec { reference_production: vec![0.5, 1.0, 0.0] }, &g).unwrap();
    let prices = [0.8, 1.4, 0.3];
    let (values, emb) = solve_kkt_at_fixed_prices(&block, &prices, &BigMPolicy::default());
    for (t, &lam) in emb.embedding.eq_duals.iter().enumerate() {
        assert!((values[lam.index()] + prices[t]).abs() < 1e-8);
    }
}

#[test]
fn kkt_of_battery_toy_matches_direct_lp() {
    let g = TimeGrid::new(2, 1.0).unwrap();
    let spec = BatterySpec {
        charge_max: 1.0,
        discharge_max: -1.0,
        energy_min: 0.0,
        energy_max: 2.0,
        energy_init: 1.0,
    };
    let block = build_battery(&spec, &g).unwrap();
    let prices = [2.0, 1.0];
    let (values, emb) = solve_kkt_at_fixed_prices(&block, &prices, &BigMPolicy::default());
    let kkt_obj = kkt_cost(&block, &prices, &values, &emb);
    let direct = crate::signatures::solve_signature_lp(
        &block,
        &prices,
        &HighsBackend,
        &SolveOptions::default(),
    )
    .unwrap();
    assert!((kkt_obj - direct.objective).abs() < 1e-6, "kkt {kkt_obj} vs lp {}", direct.objective);
    // Complementarity holds at the returned point.
    for pair in &emb.embedding.pairs {
        let row = &block.inequalities[pair.ineq_index];
        let lhs: f64 =
            row.coeffs.iter().map(|&(v, c)| c * values[emb.embedding.primal[v].index()]).sum();
        let mu = values[pair.mu.index()];
        assert!(mu * (lhs - row.rhs) <= 1e-5);
    }
}

#[test]
fn bigm_is_derived_from_bound_width() {
    let g = TimeGrid::new(2, 1.0).unwrap();
    let spec = BatterySpec {
        charge_max: 1.0,
        discharge_max: -1.0,
        energy_min: 0.0,
        energy_max: 2.0,
        energy_init: 1.0,
    };
    let block = build_battery(&spec, &g).unwrap();
    let policy = BigMPolicy::default();
    let mut model = MilpModel::new("bigm_probe");
    let price_vars: Vec<_> = (0..2).map(|t| model.add_var(format!("x_t{t}"), 1.0, 1.0)).collect();
    let emb = derive_kkt(&mut model, &block, &price_vars, "b", &policy).unwrap();
    let lin = bigm_linearize(&mut model, &block, &emb, &policy, "b").unwrap();

    // The charge-power lower bound row b >= -1 has slack b + 1 in [0, 2]:
    // the derived big-M base is the bound width 2.
    let (pair, pb) = emb
        .pairs
        .iter()
        .zip(&lin)
        .find(|(p, _)| {
            block.inequalities[p.ineq_index].label == DualLabel::Lower(BoundFamily::ChargePower, 0)
        })
        .unwrap();
    assert!((pair.slack_max - 2.0).abs() < 1e-12);
    match pb {
        PairBigM::Switched { m_primal, derived, .. } => {
            assert!(*derived);
            assert!((m_primal - 2.0 * policy.derived_headroom).abs() < 1e-12);
        }
        other => panic!("expected a switched pair, got {other:?}"),
    }
}

#[test]
fn zero_width_and_always_slack_pairs_need_no_binary() {
    // Pinned periods of a baseload block: the load equals its prediction, so
    // bound rows are either always slack (strictly inside the bounds) or
    // zero-width (prediction at a bound).
    let g = TimeGrid::new(3, 1.0).unwrap();
    let spec = FlexBaseloadSpec {
        baseload: vec![1.0, 2.0, 1.5],
        flex_window: vec![2],
        load_min: 0.0,
        load_max: 2.0, // period 1 prediction sits exactly at the cap
    };
    let block = build_flex_baseload(&spec, &g).unwrap();
    let policy = BigMPolicy::default();
    let mut model = MilpModel::new("elim_probe");
    let price_vars: Vec<_> = (0..3).map(|t| model.add_var(format!("x_t{t}"), 1.0, 1.0)).collect();
    let emb = derive_kkt(&mut model, &block, &price_vars, "b", &policy).unwrap();
    let lin = bigm_linearize(&mut model, &block, &emb, &policy, "b").unwrap();

    let find = |label: DualLabel| {
        emb.pairs
            .iter()
            .zip(&lin)
            .find(|(p, _)| block.inequalities[p.ineq_index].label == label)
            .map(|(_, pb)| pb)
            .unwrap()
    };
    // Pinned strictly inside the bounds: dual forced to zero.
    assert!(matches!(find(DualLabel::Lower(BoundFamily::Load, 0)), PairBigM::ForcedInactive));
    assert!(matches!(find(DualLabel::Upper(BoundFamily::Load, 0)), PairBigM::ForcedInactive));
    // Pinned exactly at the upper bound: zero-width slack, dual unrestricted.
    assert!(matches!(find(DualLabel::Upper(BoundFamily::Load, 1)), PairBigM::ZeroSlack));
    // Flexible period: a real switch.
    assert!(matches!(find(DualLabel::Lower(BoundFamily::Load, 2)), PairBigM::Switched { .. }));
}

#[test]
fn payment_expression_is_zero_for_zero_weights() {
    let g = TimeGrid::new(2, 1.0).unwrap();
    let block = build_pv(&PvSpec { reference_production: vec![1.0, 2.0] }, &g).unwrap();
    let expr = payment_expression(&[0.0], std::slice::from_ref(&block), &[None]).unwrap();
    assert!(expr.is_empty());
}

#[test]
fn payment_of_pv_prosumer_is_weighted_export_revenue() {
    // A solar signature with weight w: the dual-side payment expression
    // evaluates to w * sum_t price_t * (-production_t), the export revenue.
    let g = TimeGrid::new(3, 1.0).unwrap();
    let reference = vec![0.5, 1.0, 0.2];
    let w = 2.0;
    let block = build_pv(&PvSpec { reference_production: reference.clone() }, &g).unwrap();
    let prices = [1.0, 0.6, 0.8];
    let (values, emb) = solve_kkt_at_fixed_prices(&block, &prices, &BigMPolicy::default());
    let expr =
        payment_expression(&[w], std::slice::from_ref(&block), &[Some(emb.clone())]).unwrap();
    let payment: f64 = expr.iter().map(|&(v, c)| c * values[v.index()]).sum();
    let expected: f64 = prices.iter().zip(&reference).map(|(x, pv)| x * (-pv) * w).sum();
    assert!((payment - expected).abs() < 1e-8, "payment {payment} vs {expected}");
}

#[test]
fn zero_weight_prosumer_yields_zero_cost() {
    let g = TimeGrid::new(3, 1.0).unwrap();
    let blocks =
        vec![vec![build_pv(&PvSpec { reference_production: vec![1.0, 1.0, 1.0] }, &g).unwrap()]];
    let weights = vec![vec![0.0]];
    let econ = econ_for(vec![1.0, 1.0, 1.0], f64::INFINITY, vec![0.0]);
    let inputs = BipsInputs {
        weights: &weights,
        blocks: &blocks,
        econ: &econ,
        grid: &g,
        fixed_prices: None,
    };
    let backend = HighsBackend;
    let sol = solve_bips(&inputs, &ctx(&backend)).unwrap();
    assert!(sol.community_cost.abs() < 1e-9);
    assert!(sol.import.iter().all(|v| v.abs() < 1e-9));
    assert!(sol.expected_response[0].iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn infinite_capacity_means_no_excess() {
    let g = TimeGrid::new(3, 1.0).unwrap();
    let blocks = vec![vec![build_flex_baseload(
        &FlexBaseloadSpec {
            baseload: vec![2.0, 3.0, 1.0],
            flex_window: vec![0, 1],
            load_min: 0.0,
            load_max: 4.0,
        },
        &g,
    )
    .unwrap()]];
    let weights = vec![vec![1.0]];
    let backend = HighsBackend;
    let opts = SolveOptions::default();
    let mut econ = econ_for(vec![0.9, 1.4, 0.7], f64::INFINITY, vec![0.0]);
    econ.outside_cost =
        vec![outside_cost(&blocks[0], &weights[0], &econ.outside_price(), &backend, &opts).unwrap()];
    let inputs = BipsInputs {
        weights: &weights,
        blocks: &blocks,
        econ: &econ,
        grid: &g,
        fixed_prices: None,
    };
    let sol = solve_bips(&inputs, &ctx(&backend)).unwrap();
    assert!(sol.excess.iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn unattainable_outside_cost_is_infeasible() {
    // An inflexible positive load cannot pay less than zero at nonnegative
    // prices, while revenue adequacy demands a positive payment.
    let g = TimeGrid::new(2, 1.0).unwrap();
    let blocks = vec![vec![build_flex_baseload(
        &FlexBaseloadSpec {
            baseload: vec![1.0, 1.0],
            flex_window: vec![],
            load_min: 0.0,
            load_max: 2.0,
        },
        &g,
    )
    .unwrap()]];
    let weights = vec![vec![1.0]];
    let econ = econ_for(vec![1.0, 1.0], f64::INFINITY, vec![-5.0]);
    let inputs = BipsInputs {
        weights: &weights,
        blocks: &blocks,
        econ: &econ,
        grid: &g,
        fixed_prices: None,
    };
    let backend = HighsBackend;
    let err = solve_bips(&inputs, &ctx(&backend)).unwrap_err();
    assert!(matches!(err, crate::Error::Infeasible { .. }), "got {err}");
}

#[test]
fn excess_vanishes_when_a_feasible_shift_exists() {
    // The peak can be moved under the limit; the penalty dominates, so the
    // optimum carries no excess.
    let g = TimeGrid::new(2, 1.0).unwrap();
    let blocks = vec![vec![build_flex_baseload(
        &FlexBaseloadSpec {
            baseload: vec![2.0, 0.0],
            flex_window: vec![0, 1],
            load_min: 0.0,
            load_max: 2.0,
        },
        &g,
    )
    .unwrap()]];
    let weights = vec![vec![1.0]];
    let backend = HighsBackend;
    let opts = SolveOptions::default();
    let mut econ = econ_for(vec![0.5, 0.6], 1.0, vec![0.0]);
    econ.outside_cost =
        vec![outside_cost(&blocks[0], &weights[0], &econ.outside_price(), &backend, &opts).unwrap()];
    let inputs = BipsInputs {
        weights: &weights,
        blocks: &blocks,
        econ: &econ,
        grid: &g,
        fixed_prices: None,
    };
    let sol = solve_bips(&inputs, &ctx(&backend)).unwrap();
    let total_excess: f64 = sol.excess.iter().sum();
    assert!(total_excess < 1e-6, "excess {total_excess}");
    assert!(sol.import.iter().all(|&v| v <= 1.0 + 1e-6));
}

fn two_prosumer_instance(
    grid: &TimeGrid,
) -> (Vec<Vec<f64>>, Vec<Vec<ConstraintBlock>>, CommunityEconomics) {
    let spot = vec![0.4, 1.2, 0.9, 0.3];
    let blocks_a = vec![
        build_flex_baseload(
            &FlexBaseloadSpec {
                baseload: vec![1.0, 1.6, 0.8, 0.6],
                flex_window: vec![1, 2],
                load_min: 0.0,
                load_max: 2.0,
            },
            grid,
        )
        .unwrap(),
        build_battery(
            &BatterySpec {
                charge_max: 1.0,
                discharge_max: -1.0,
                energy_min: 0.0,
                energy_max: 3.0,
                energy_init: 1.5,
            },
            grid,
        )
        .unwrap(),
    ];
    let blocks_b = vec![
        build_flex_baseload(
            &FlexBaseloadSpec {
                baseload: vec![0.7, 1.1, 1.3, 0.5],
                flex_window: vec![0, 3],
                load_min: 0.0,
                load_max: 1.8,
            },
            grid,
        )
        .unwrap(),
        build_pv(&PvSpec { reference_production: vec![0.0, 0.6, 0.9, 0.2] }, grid).unwrap(),
    ];
    let weights = vec![vec![1.0, 1.0], vec![1.0, 1.5]];
    let blocks = vec![blocks_a, blocks_b];
    let backend = HighsBackend;
    let opts = SolveOptions::default();
    let mut econ = econ_for(spot, 2.5, vec![0.0, 0.0]);
    let retail = econ.outside_price();
    econ.outside_cost = (0..2)
        .map(|n| outside_cost(&blocks[n], &weights[n], &retail, &backend, &opts).unwrap())
        .collect();
    (weights, blocks, econ)
}

#[test]
fn two_prosumer_instance_passes_all_audits() {
    let grid = TimeGrid::new(4, 1.0).unwrap();
    let (weights, blocks, econ) = two_prosumer_instance(&grid);
    let inputs = BipsInputs {
        weights: &weights,
        blocks: &blocks,
        econ: &econ,
        grid: &grid,
        fixed_prices: None,
    };
    let backend = HighsBackend;
    let sol = solve_bips(&inputs, &ctx(&backend)).unwrap();
    sol.check_invariants(&econ, 1e-6).unwrap();
    assert!(sol.audit.max_complementarity_residual <= 1e-5);
    assert!(sol.audit.max_lower_level_gap <= 1e-5);
    assert!(sol.audit.max_payment_identity_gap <= 1e-5);
    assert!(sol.audit.attempts >= 1);
    // Strong duality per prosumer: dual-side payment equals the primal bill.
    for n in 0..2 {
        let bill: f64 = sol.prices[n]
            .iter()
            .zip(&sol.expected_response[n])
            .map(|(x, y)| x * y)
            .sum();
        assert!((sol.payments[n] - bill).abs() <= 1e-5 * bill.abs().max(1.0));
    }
}

#[test]
fn scaling_all_tariffs_scales_cost_and_keeps_dispatch() {
    let grid = TimeGrid::new(4, 1.0).unwrap();
    let (weights, blocks, econ) = two_prosumer_instance(&grid);
    let backend = HighsBackend;
    let base = solve_bips(
        &BipsInputs {
            weights: &weights,
            blocks: &blocks,
            econ: &econ,
            grid: &grid,
            fixed_prices: None,
        },
        &ctx(&backend),
    )
    .unwrap();

    let c = 3.0;
    let scaled_econ = CommunityEconomics {
        spot_price: econ.spot_price.iter().map(|v| c * v).collect(),
        import_tariff: econ.import_tariff.iter().map(|v| c * v).collect(),
        export_tariff: econ.export_tariff.iter().map(|v| c * v).collect(),
        outside_tariff: econ.outside_tariff.iter().map(|v| c * v).collect(),
        violation_penalty: econ.violation_penalty.iter().map(|v| c * v).collect(),
        capacity_limit: econ.capacity_limit.clone(),
        outside_cost: econ.outside_cost.iter().map(|v| c * v).collect(),
        price_cap: c * econ.price_cap,
    };
    let scaled = solve_bips(
        &BipsInputs {
            weights: &weights,
            blocks: &blocks,
            econ: &scaled_econ,
            grid: &grid,
            fixed_prices: None,
        },
        &ctx(&backend),
    )
    .unwrap();

    assert!(
        (scaled.community_cost - c * base.community_cost).abs()
            <= 1e-5 * base.community_cost.abs().max(1.0),
        "scaled {} vs {} * base {}",
        scaled.community_cost,
        c,
        base.community_cost
    );
    for t in 0..4 {
        assert!((scaled.import[t] - base.import[t]).abs() < 1e-5);
        assert!((scaled.export[t] - base.export[t]).abs() < 1e-5);
        assert!((scaled.excess[t] - base.excess[t]).abs() < 1e-5);
    }
}
