//! The single-level price-setting MILP.
//!
//! The community manager minimizes total community cost (imports minus
//! export revenue plus capacity-violation penalties) over member-specific
//! hourly prices, anticipating every member's response. Each signature's
//! cost-minimizing response is characterized by the optimality conditions of
//! its LP block; complementarity is linearized with binary switches, and the
//! bilinear payment terms in the rationality and revenue-adequacy rows are
//! replaced by the blocks' dual objectives, which coincide with the payments
//! at lower-level optimality.

mod assemble;
mod kkt;
mod solve;

pub use assemble::{assemble_bips, payment_expression, BipsIndex, BipsInputs, BipsModel};
pub use kkt::{
    block_dual_bound,
    bigm_linearize, derive_kkt, BigMPolicy, ComplementarityPair, KktEmbedding, LinearizedKkt,
    PairBigM,
};
pub use solve::{solve_bips, AuditReport, SolveContext};

use serde::{Deserialize, Serialize};

use crate::milp::{SolveOptions, SolverBackend};
use crate::signatures::{solve_signature_lp, ConstraintBlock};
use crate::{Error, Result};

/// Prices, tariffs, penalties and limits for one day.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommunityEconomics {
    /// Day-ahead price per period, DKK/kWh (nonnegative).
    pub spot_price: Vec<f64>,
    /// Discounted grid import tariff the community pays at the connection
    /// point, DKK/kWh.
    pub import_tariff: Vec<f64>,
    /// Grid export tariff per period, DKK/kWh.
    pub export_tariff: Vec<f64>,
    /// Full grid import tariff a stand-alone prosumer would pay, DKK/kWh.
    /// The community's discount relative to this funds the capacity service:
    /// it keeps membership individually rational even on days when the
    /// capacity limit binds.
    pub outside_tariff: Vec<f64>,
    /// Penalty per kWh of imports above the capacity limit, DKK/kWh.
    pub violation_penalty: Vec<f64>,
    /// Agreed import limit per period, kWh (may be infinite).
    pub capacity_limit: Vec<f64>,
    /// Stand-alone procurement cost per prosumer, DKK.
    pub outside_cost: Vec<f64>,
    /// Upper bound on posted prices, DKK/kWh.
    pub price_cap: f64,
}

impl CommunityEconomics {
    pub fn horizon(&self) -> usize {
        self.spot_price.len()
    }

    pub fn n_prosumers(&self) -> usize {
        self.outside_cost.len()
    }

    /// Price vector a stand-alone prosumer would face.
    pub fn outside_price(&self) -> Vec<f64> {
        self.spot_price.iter().zip(&self.outside_tariff).map(|(s, g)| s + g).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.horizon();
        for (name, v) in [
            ("import_tariff", &self.import_tariff),
            ("export_tariff", &self.export_tariff),
            ("outside_tariff", &self.outside_tariff),
            ("violation_penalty", &self.violation_penalty),
            ("capacity_limit", &self.capacity_limit),
        ] {
            if v.len() != h {
                return Err(Error::InvalidSpec(format!(
                    "{name} has length {}, expected {h}",
                    v.len()
                )));
            }
        }
        if self.spot_price.iter().any(|&s| s < 0.0 || !s.is_finite()) {
            return Err(Error::InvalidSpec("spot prices must be nonnegative and finite".into()));
        }
        if !(self.price_cap > 0.0 && self.price_cap.is_finite()) {
            return Err(Error::InvalidSpec(format!("price_cap {} must be positive", self.price_cap)));
        }
        let worst_retail = self
            .spot_price
            .iter()
            .zip(&self.import_tariff)
            .map(|(s, g)| s + g)
            .fold(f64::NEG_INFINITY, f64::max);
        let min_penalty = self.violation_penalty.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_penalty <= worst_retail {
            return Err(Error::InvalidSpec(format!(
                "violation penalty {min_penalty} must strictly exceed the worst retail price \
                 {worst_retail}"
            )));
        }
        Ok(())
    }
}

/// Stand-alone procurement cost of one prosumer: each signature solved
/// against the stand-alone price vector (spot plus the full, undiscounted
/// tariff), combined with the manager's current weight estimates. Recomputed
/// daily.
pub fn outside_cost(
    blocks: &[ConstraintBlock],
    weights: &[f64],
    outside_price: &[f64],
    backend: &dyn SolverBackend,
    options: &SolveOptions,
) -> Result<f64> {
    if blocks.len() != weights.len() {
        return Err(Error::InvalidSpec(format!(
            "{} blocks vs {} weights",
            blocks.len(),
            weights.len()
        )));
    }
    let mut total = 0.0;
    for (block, &w) in blocks.iter().zip(weights) {
        if w.abs() < 1e-15 {
            continue;
        }
        total += w * solve_signature_lp(block, outside_price, backend, options)?.objective;
    }
    Ok(total)
}

/// Optimal prices and anticipated dispatch for one day.
#[derive(Debug, Clone)]
pub struct BipsSolution {
    /// Posted price per prosumer per period, DKK/kWh.
    pub prices: Vec<Vec<f64>>,
    /// Community import per period, kWh.
    pub import: Vec<f64>,
    /// Community export per period, kWh.
    pub export: Vec<f64>,
    /// Import above the capacity limit per period, kWh.
    pub excess: Vec<f64>,
    /// Anticipated response per prosumer per period under the weights used
    /// in the model, kWh.
    pub expected_response: Vec<Vec<f64>>,
    /// Objective value, DKK.
    pub community_cost: f64,
    /// Dual-side payment per prosumer, DKK.
    pub payments: Vec<f64>,
    /// Anticipated per-signature profiles, `[prosumer][signature][period]`;
    /// empty inner vectors for signatures skipped at exactly zero weight.
    pub profiles: Vec<Vec<Vec<f64>>>,
    pub audit: AuditReport,
}

impl BipsSolution {
    /// Re-checks the dispatch identities at tolerance `tol`.
    pub fn check_invariants(&self, econ: &CommunityEconomics, tol: f64) -> Result<()> {
        let h = self.import.len();
        for t in 0..h {
            let total: f64 = self.expected_response.iter().map(|y| y[t]).sum();
            if (self.import[t] - self.export[t] - total).abs() > tol {
                return Err(Error::Audit(format!("period {t}: balance violated")));
            }
            if self.import[t] < -tol || self.export[t] < -tol || self.excess[t] < -tol {
                return Err(Error::Audit(format!("period {t}: negative dispatch")));
            }
            if self.excess[t] + tol < self.import[t] - econ.capacity_limit[t] {
                return Err(Error::Audit(format!("period {t}: excess undercounts the violation")));
            }
        }
        for (n, &pay) in self.payments.iter().enumerate() {
            if pay > econ.outside_cost[n] + tol {
                return Err(Error::Audit(format!(
                    "prosumer {n}: payment {pay} exceeds outside cost {}",
                    econ.outside_cost[n]
                )));
            }
        }
        let collected: f64 = self.payments.iter().sum();
        if collected + tol < self.community_cost {
            return Err(Error::Audit(format!(
                "collected payments {collected} fall short of community cost {}",
                self.community_cost
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
