//! Temporary diagnostic: toggle IR/RA slack to isolate desk-scale
//! infeasibility.

use priceloop::bilevel::{
    outside_cost, solve_bips, BipsInputs, CommunityEconomics, SolveContext,
};
use priceloop::data::synth_exogenous;
use priceloop::environment::{make_community, CommunityConfig};
use priceloop::milp::HighsBackend;
use priceloop::TimeGrid;

fn run_lp_file_verbose(path: &std::path::Path, seconds: f64) {
    use std::ffi::CString;
    let c_path = CString::new(path.to_string_lossy().as_bytes()).unwrap();
    unsafe {
        let h = highs_sys::Highs_create();
        let tl = CString::new("time_limit").unwrap();
        highs_sys::Highs_setDoubleOptionValue(h, tl.as_ptr(), seconds);
        let gap = CString::new("mip_rel_gap").unwrap();
        highs_sys::Highs_setDoubleOptionValue(h, gap.as_ptr(), 1e-6);
        highs_sys::Highs_readModel(h, c_path.as_ptr());
        highs_sys::Highs_run(h);
        highs_sys::Highs_destroy(h);
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = TimeGrid::hourly();
    let n = 5;
    let days = synth_exogenous(1, n, 42, &grid)?;
    let day = &days[0];
    let community = make_community(n, 7, &day.baseload, &grid, &CommunityConfig::default())?;
    let backend = HighsBackend;
    let mut ctx = SolveContext::new(&backend);
    ctx.policy.dual_bound = 20.0;
    ctx.options.verbose = std::env::var("PL_VERBOSE").is_ok();
    ctx.options.time_limit = std::time::Duration::from_secs(60);
    let t0 = std::time::Instant::now();
    let blocks: Vec<_> = (0..n)
        .map(|p| community.blocks_for(p, &day.context()))
        .collect::<Result<_, _>>()?;
    let weights: Vec<Vec<f64>> = community.true_weights().to_vec();

    let h = grid.horizon;
    let econ_base = CommunityEconomics {
        spot_price: day.spot_price.clone(),
        import_tariff: vec![0.15; h],
        export_tariff: vec![0.05; h],
        outside_tariff: vec![1.0; h],
        violation_penalty: vec![day.spot_price.iter().cloned().fold(0.0, f64::max) + 5.0; h],
        capacity_limit: vec![f64::INFINITY; h],
        outside_cost: vec![1e7; n],
        price_cap: 10.0,
    };

    // Stage 1: no capacity limit, IR effectively off (huge outside costs).
    {
        let inputs = BipsInputs {
            weights: &weights,
            blocks: &blocks,
            econ: &econ_base,
            grid: &grid,
            fixed_prices: None,
        };
        match solve_bips(&inputs, &ctx) {
            Ok(sol) => println!("stage1 (no IR, no cap): cost {:.3} in {:?}", sol.community_cost, t0.elapsed()),
            Err(e) => println!("stage1 (no IR, no cap): {e}"),
        }
    }

    // Stage 2: real outside costs, no capacity limit.
    {
        let mut econ = econ_base.clone();
        let outside_prices = econ.outside_price();
        for p in 0..n {
            econ.outside_cost[p] =
                outside_cost(&blocks[p], &weights[p], &outside_prices, &backend, &ctx.options)?;
            println!("outside cost p{p}: {:.3}", econ.outside_cost[p]);
        }
        let inputs = BipsInputs {
            weights: &weights,
            blocks: &blocks,
            econ: &econ,
            grid: &grid,
            fixed_prices: None,
        };
        if std::env::var("PL_VERBOSE").is_ok() {
            let bips = priceloop::bilevel::assemble_bips(&inputs, &ctx.policy).unwrap();
            let path = std::path::Path::new("/tmp/stage2.lp");
            std::fs::write(path, priceloop::milp::write_lp(&bips.model)).unwrap();
            println!(
                "exported stage2 ({} rows, {} binaries)",
                bips.model.num_rows(),
                bips.model.num_binaries()
            );
            run_lp_file_verbose(path, 90.0);
        }
        let t1 = std::time::Instant::now();
        match solve_bips(&inputs, &ctx) {
            Ok(sol) => println!("stage2 (IR, no cap): cost {:.3} in {:?}", sol.community_cost, t1.elapsed()),
            Err(e) => println!("stage2 (IR, no cap): {e}"),
        }
    }

    // Stage 3: IR plus a binding capacity limit.
    {
        let t2 = std::time::Instant::now();
        let mut econ = econ_base.clone();
        let outside_prices = econ.outside_price();
        for p in 0..n {
            econ.outside_cost[p] =
                outside_cost(&blocks[p], &weights[p], &outside_prices, &backend, &ctx.options)?;
        }
        let cap = priceloop::environment::estimate_capacity_limit(&community, &days, 1.6);
        econ.capacity_limit = vec![cap; h];
        let inputs = BipsInputs {
            weights: &weights,
            blocks: &blocks,
            econ: &econ,
            grid: &grid,
            fixed_prices: None,
        };
        match solve_bips(&inputs, &ctx) {
            Ok(sol) => println!(
                "stage3 (IR + cap {:.2}): cost {:.3}, excess {:.3}, binaries {} in {:?}",
                econ.capacity_limit[0],
                sol.community_cost,
                sol.excess.iter().sum::<f64>(),
                sol.audit.binaries,
                t2.elapsed()
            ),
            Err(e) => println!("stage3: {e}"),
        }
    }
    Ok(())
}
