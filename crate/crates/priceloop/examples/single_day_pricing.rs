//! Assembles and solves one day of community price setting at desk scale:
//! five prosumers, the full ten-signature catalogue, 24 hourly periods.
//!
//! ```bash
//! cargo run --release --example single_day_pricing
//! ```

use std::time::Instant;

use priceloop::bilevel::{
    outside_cost, solve_bips, BipsInputs, CommunityEconomics, SolveContext,
};
use priceloop::data::synth_exogenous;
use priceloop::environment::{make_community, CommunityConfig};
use priceloop::milp::HighsBackend;
use priceloop::TimeGrid;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = TimeGrid::hourly();
    let n = 5;
    let days = synth_exogenous(1, n, 42, &grid)?;
    let day = &days[0];
    let community = make_community(n, 7, &day.baseload, &grid, &CommunityConfig::default())?;

    let backend = HighsBackend;
    let ctx = SolveContext::new(&backend);

    // Build every prosumer's blocks for this day.
    let blocks: Vec<_> = (0..n)
        .map(|p| community.blocks_for(p, &day.context()))
        .collect::<Result<_, _>>()?;

    // Weights as the true ones here; the learning loop would use samples.
    let weights: Vec<Vec<f64>> = community.true_weights().to_vec();

    // Tight enough to bind for an uninformed manager, loose enough for an
    // informed one to dodge violations.
    let capacity = priceloop::environment::estimate_capacity_limit(&community, &days, 1.6);

    let h = grid.horizon;
    let mut econ = CommunityEconomics {
        spot_price: day.spot_price.clone(),
        import_tariff: vec![0.15; h],
        export_tariff: vec![0.05; h],
        outside_tariff: vec![1.0; h],
        violation_penalty: vec![day.spot_price.iter().cloned().fold(0.0, f64::max) + 5.0; h],
        capacity_limit: vec![capacity; h],
        outside_cost: vec![0.0; n],
        price_cap: 10.0,
    };
    let outside_prices = econ.outside_price();
    for p in 0..n {
        econ.outside_cost[p] =
            outside_cost(&blocks[p], &weights[p], &outside_prices, &backend, &ctx.options)?;
    }

    let inputs = BipsInputs {
        weights: &weights,
        blocks: &blocks,
        econ: &econ,
        grid: &grid,
        fixed_prices: None,
    };

    let start = Instant::now();
    let solution = solve_bips(&inputs, &ctx)?;
    let elapsed = start.elapsed();

    println!("solved in {elapsed:?}");
    println!("binaries:            {}", solution.audit.binaries);
    println!("attempts:            {}", solution.audit.attempts);
    println!("community cost:      {:>8.3} DKK", solution.community_cost);
    println!("capacity limit:      {capacity:>8.3} kWh per hour");
    println!("total import:        {:>8.3} kWh", solution.import.iter().sum::<f64>());
    println!("total export:        {:>8.3} kWh", solution.export.iter().sum::<f64>());
    println!("total excess:        {:>8.3} kWh", solution.excess.iter().sum::<f64>());
    println!(
        "max complementarity: {:.2e}",
        solution.audit.max_complementarity_residual
    );
    println!("max lower-level gap: {:.2e}", solution.audit.max_lower_level_gap);
    println!("max payment gap:     {:.2e}", solution.audit.max_payment_identity_gap);
    println!();
    println!("hour  spot   import  export  excess   price[p0]");
    for t in 0..h {
        println!(
            "{t:>4}  {:>5.2}  {:>6.2}  {:>6.2}  {:>6.2}   {:>6.3}",
            econ.spot_price[t],
            solution.import[t],
            solution.export[t],
            solution.excess[t],
            solution.prices[0][t]
        );
    }
    for (p, pay) in solution.payments.iter().enumerate() {
        println!(
            "prosumer {p}: payment {pay:>8.3} DKK vs outside {:>8.3} DKK",
            econ.outside_cost[p]
        );
    }
    Ok(())
}
