//! Asset usage models ("signatures") as declarative LP constraint blocks.
//!
//! A prosumer's daily load is a weighted sum of the optimal responses of its
//! signatures to the posted prices. Each signature is a small LP over one
//! day: the block form built here is consumed directly (simulation, oracle
//! tests) and re-used by the price-setting problem, which embeds each
//! block's optimality conditions.
//!
//! Blocks are immutable after construction and safe to share across threads;
//! solves on distinct blocks may run in parallel.

mod block;
mod build;
mod solve;

pub use block::{BlockRow, BoundFamily, ConstraintBlock, DualLabel};
pub use build::{
    build_battery, build_ev, build_flex_baseload, build_heatpump, build_pv, BatterySpec, EvSpec,
    FlexBaseloadSpec, HeatPumpSpec, PvSpec,
};
pub use solve::{solve_signature_lp, SignatureSolution, STRONG_DUALITY_TOL};

use serde::{Deserialize, Serialize};

use crate::grid::TimeGrid;
use crate::Result;

/// The five supported signature types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignatureKind {
    FlexBaseload,
    Pv,
    Battery,
    HeatPump,
    Ev,
}

impl SignatureKind {
    pub fn code(self) -> &'static str {
        match self {
            SignatureKind::FlexBaseload => "baseload",
            SignatureKind::Pv => "pv",
            SignatureKind::Battery => "battery",
            SignatureKind::HeatPump => "heatpump",
            SignatureKind::Ev => "ev",
        }
    }
}

/// Day-dependent inputs needed to build blocks: outdoor temperature for heat
/// pumps and the solar reference profile for PV signatures.
#[derive(Debug, Clone, Copy)]
pub struct DayContext<'a> {
    pub outdoor_temp: &'a [f64],
    pub outdoor_temp_peak: f64,
    /// kWh per period for a 1-kW solar system.
    pub pv_reference: &'a [f64],
}

/// One catalogue entry: the parameters of a single signature of a single
/// prosumer. The PV entry carries no parameters of its own; its reference
/// production is the day's exogenous solar profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SignatureSpec {
    FlexBaseload(FlexBaseloadSpec),
    Pv,
    Battery(BatterySpec),
    HeatPump(HeatPumpSpec),
    Ev(EvSpec),
}

impl SignatureSpec {
    pub fn kind(&self) -> SignatureKind {
        match self {
            SignatureSpec::FlexBaseload(_) => SignatureKind::FlexBaseload,
            SignatureSpec::Pv => SignatureKind::Pv,
            SignatureSpec::Battery(_) => SignatureKind::Battery,
            SignatureSpec::HeatPump(_) => SignatureKind::HeatPump,
            SignatureSpec::Ev(_) => SignatureKind::Ev,
        }
    }

    /// Builds the block for one day. Baseload and battery blocks do not
    /// depend on the day; heat pump, EV and PV blocks do.
    pub fn build(&self, grid: &TimeGrid, day: &DayContext) -> Result<ConstraintBlock> {
        match self {
            SignatureSpec::FlexBaseload(s) => build_flex_baseload(s, grid),
            SignatureSpec::Pv => {
                build_pv(&PvSpec { reference_production: day.pv_reference.to_vec() }, grid)
            }
            SignatureSpec::Battery(s) => build_battery(s, grid),
            SignatureSpec::HeatPump(s) => {
                build_heatpump(s, grid, day.outdoor_temp, day.outdoor_temp_peak)
            }
            SignatureSpec::Ev(s) => build_ev(s, grid),
        }
    }
}
