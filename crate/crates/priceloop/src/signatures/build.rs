//! Builders turning signature parameter sets into [`ConstraintBlock`]s.

use serde::{Deserialize, Serialize};

use crate::grid::TimeGrid;
use crate::{Error, Result};

use super::block::{BlockRow, BoundFamily, ConstraintBlock, DualLabel};
use super::SignatureKind;

const FEAS_TOL: f64 = 1e-9;

/// Base consumption with a manual-shift window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlexBaseloadSpec {
    /// Predicted energy per period, kWh; length = horizon.
    pub baseload: Vec<f64>,
    /// Periods in which load may be shifted.
    pub flex_window: Vec<usize>,
    /// Per-period lower bound on the shifted load, kWh.
    pub load_min: f64,
    /// Per-period upper bound on the shifted load, kWh.
    pub load_max: f64,
}

/// Rooftop solar production for a 1-kW reference system; no flexibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PvSpec {
    /// kWh per period produced by a 1-kW system; length = horizon.
    pub reference_production: Vec<f64>,
}

/// Home battery limits and initial state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatterySpec {
    /// Maximum charging power, kW (>= 0).
    pub charge_max: f64,
    /// Maximum discharging power as a negative bound, kW (<= 0).
    pub discharge_max: f64,
    /// Minimum stored energy, kWh.
    pub energy_min: f64,
    /// Maximum stored energy, kWh.
    pub energy_max: f64,
    /// Stored energy at the start (and, by the cyclic condition, the end)
    /// of the day, kWh.
    pub energy_init: f64,
}

/// Heat pump plus single-zone building envelope.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeatPumpSpec {
    /// Coefficient of performance (thermal out per electrical in).
    pub cop: f64,
    /// Thermal resistance of the envelope, degC per kW.
    pub thermal_resistance: f64,
    /// Thermal capacity of the building, kWh per degC.
    pub thermal_capacity: f64,
    /// Indoor temperature at the start (and end) of the day, degC.
    pub temp_init: f64,
    /// Comfort band, degC.
    pub temp_min: f64,
    pub temp_max: f64,
    /// Electrical capacity of the heat pump, kW.
    pub power_max: f64,
}

/// Electric vehicle with a daily driving pattern.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvSpec {
    /// Maximum charging power while plugged in, kW (>= 0).
    pub charge_max: f64,
    /// Maximum discharging power while plugged in as a negative bound, kW.
    pub discharge_max: f64,
    /// Battery limits, kWh.
    pub soc_min: f64,
    pub soc_max: f64,
    /// Stored energy at the start (and end) of the day, kWh.
    pub soc_init: f64,
    /// Per-period plug-in status; length = horizon.
    pub plugged_in: Vec<bool>,
    /// Energy drawn per absent hour of driving, kWh.
    pub drive_power: f64,
}

fn check_len(what: &str, len: usize, horizon: usize) -> Result<()> {
    if len != horizon {
        return Err(Error::InvalidSpec(format!("{what} has length {len}, expected {horizon}")));
    }
    Ok(())
}

/// Flexible-baseload block: per-period balance, pinned load outside the
/// window, energy conservation over the window, and load bounds. Uses
/// exactly 2 * horizon variables.
pub fn build_flex_baseload(spec: &FlexBaseloadSpec, grid: &TimeGrid) -> Result<ConstraintBlock> {
    let horizon = grid.horizon;
    check_len("baseload", spec.baseload.len(), horizon)?;
    let lo = spec.baseload.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = spec.baseload.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(0.0 <= spec.load_min && spec.load_min <= lo + FEAS_TOL) {
        return Err(Error::InvalidSpec(format!(
            "load_min {} must lie in [0, min baseload {lo}]",
            spec.load_min
        )));
    }
    if spec.load_max + FEAS_TOL < hi {
        return Err(Error::InvalidSpec(format!(
            "load_max {} is below the peak baseload {hi}",
            spec.load_max
        )));
    }
    for &t in &spec.flex_window {
        if t >= horizon {
            return Err(Error::InvalidSpec(format!("flex window period {t} outside horizon")));
        }
    }
    let in_window = {
        let mut w = vec![false; horizon];
        for &t in &spec.flex_window {
            w[t] = true;
        }
        w
    };

    let mut var_names = Vec::with_capacity(2 * horizon);
    let mut var_ranges = Vec::with_capacity(2 * horizon);
    for t in 0..horizon {
        var_names.push(format!("p_t{t}"));
        let r = if in_window[t] {
            (spec.load_min, spec.load_max)
        } else {
            (spec.baseload[t], spec.baseload[t])
        };
        var_ranges.push(r);
    }
    for t in 0..horizon {
        var_names.push(format!("l_t{t}"));
        var_ranges.push(var_ranges[t]);
    }
    let p = |t: usize| t;
    let l = |t: usize| horizon + t;

    let mut equalities = Vec::new();
    let mut inequalities = Vec::new();
    for t in 0..horizon {
        equalities.push(BlockRow {
            coeffs: vec![(p(t), -1.0), (l(t), 1.0)],
            rhs: 0.0,
            label: DualLabel::Balance(t),
        });
    }
    for t in 0..horizon {
        if !in_window[t] {
            equalities.push(BlockRow {
                coeffs: vec![(l(t), 1.0)],
                rhs: spec.baseload[t],
                label: DualLabel::Pin(t),
            });
        }
    }
    if !spec.flex_window.is_empty() {
        let coeffs: Vec<(usize, f64)> =
            (0..horizon).filter(|&t| in_window[t]).map(|t| (l(t), 1.0)).collect();
        let budget: f64 = (0..horizon).filter(|&t| in_window[t]).map(|t| spec.baseload[t]).sum();
        equalities.push(BlockRow { coeffs, rhs: budget, label: DualLabel::ShiftBudget });
    }
    for t in 0..horizon {
        inequalities.push(BlockRow {
            coeffs: vec![(l(t), 1.0)],
            rhs: spec.load_min,
            label: DualLabel::Lower(BoundFamily::Load, t),
        });
        inequalities.push(BlockRow {
            coeffs: vec![(l(t), -1.0)],
            rhs: -spec.load_max,
            label: DualLabel::Upper(BoundFamily::Load, t),
        });
    }

    Ok(ConstraintBlock {
        kind: SignatureKind::FlexBaseload,
        label: "flex_baseload".into(),
        var_names,
        var_ranges,
        link_vars: (0..horizon).collect(),
        equalities,
        inequalities,
    })
}

/// Solar block: the import/export profile is pinned to the negated reference
/// production in every period; zero degrees of freedom.
pub fn build_pv(spec: &PvSpec, grid: &TimeGrid) -> Result<ConstraintBlock> {
    let horizon = grid.horizon;
    check_len("reference_production", spec.reference_production.len(), horizon)?;
    for (t, &v) in spec.reference_production.iter().enumerate() {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidSpec(format!("reference production at period {t} is {v}")));
        }
    }
    let var_names = (0..horizon).map(|t| format!("p_t{t}")).collect();
    let var_ranges = spec.reference_production.iter().map(|&v| (-v, -v)).collect();
    let equalities = (0..horizon)
        .map(|t| BlockRow {
            coeffs: vec![(t, -1.0)],
            rhs: spec.reference_production[t],
            label: DualLabel::Balance(t),
        })
        .collect();
    Ok(ConstraintBlock {
        kind: SignatureKind::Pv,
        label: "pv".into(),
        var_names,
        var_ranges,
        link_vars: (0..horizon).collect(),
        equalities,
        inequalities: Vec::new(),
    })
}

/// Battery block: balance, state-of-energy recursion with a cyclic terminal
/// condition, and power/energy bounds.
pub fn build_battery(spec: &BatterySpec, grid: &TimeGrid) -> Result<ConstraintBlock> {
    let horizon = grid.horizon;
    let dt = grid.period_hours;
    if !(spec.discharge_max <= 0.0 && 0.0 <= spec.charge_max) {
        return Err(Error::InvalidSpec(format!(
            "battery power bounds must satisfy discharge_max <= 0 <= charge_max, got [{}, {}]",
            spec.discharge_max, spec.charge_max
        )));
    }
    if !(spec.energy_min <= spec.energy_init && spec.energy_init <= spec.energy_max) {
        return Err(Error::InvalidSpec(format!(
            "initial energy {} outside [{}, {}]",
            spec.energy_init, spec.energy_min, spec.energy_max
        )));
    }

    let mut var_names = Vec::with_capacity(3 * horizon);
    let mut var_ranges = Vec::with_capacity(3 * horizon);
    for t in 0..horizon {
        var_names.push(format!("p_t{t}"));
        var_ranges.push((dt * spec.discharge_max, dt * spec.charge_max));
    }
    for t in 0..horizon {
        var_names.push(format!("b_t{t}"));
        var_ranges.push((spec.discharge_max, spec.charge_max));
    }
    for t in 0..horizon {
        var_names.push(format!("e_t{t}"));
        if t + 1 == horizon {
            var_ranges.push((spec.energy_init, spec.energy_init));
        } else {
            var_ranges.push((spec.energy_min, spec.energy_max));
        }
    }
    let p = |t: usize| t;
    let b = |t: usize| horizon + t;
    let e = |t: usize| 2 * horizon + t;

    let mut equalities = Vec::new();
    for t in 0..horizon {
        equalities.push(BlockRow {
            coeffs: vec![(p(t), -1.0), (b(t), dt)],
            rhs: 0.0,
            label: DualLabel::Balance(t),
        });
    }
    for t in 0..horizon {
        let (coeffs, rhs) = if t == 0 {
            (vec![(e(0), -1.0), (b(0), dt)], -spec.energy_init)
        } else {
            (vec![(e(t - 1), 1.0), (e(t), -1.0), (b(t), dt)], 0.0)
        };
        equalities.push(BlockRow { coeffs, rhs, label: DualLabel::State(t) });
    }
    equalities.push(BlockRow {
        coeffs: vec![(e(horizon - 1), 1.0)],
        rhs: spec.energy_init,
        label: DualLabel::Terminal,
    });

    let mut inequalities = Vec::new();
    for t in 0..horizon {
        inequalities.push(BlockRow {
            coeffs: vec![(b(t), 1.0)],
            rhs: spec.discharge_max,
            label: DualLabel::Lower(BoundFamily::ChargePower, t),
        });
        inequalities.push(BlockRow {
            coeffs: vec![(b(t), -1.0)],
            rhs: -spec.charge_max,
            label: DualLabel::Upper(BoundFamily::ChargePower, t),
        });
    }
    for t in 0..horizon {
        inequalities.push(BlockRow {
            coeffs: vec![(e(t), 1.0)],
            rhs: spec.energy_min,
            label: DualLabel::Lower(BoundFamily::StoredEnergy, t),
        });
        inequalities.push(BlockRow {
            coeffs: vec![(e(t), -1.0)],
            rhs: -spec.energy_max,
            label: DualLabel::Upper(BoundFamily::StoredEnergy, t),
        });
    }

    Ok(ConstraintBlock {
        kind: SignatureKind::Battery,
        label: "battery".into(),
        var_names,
        var_ranges,
        link_vars: (0..horizon).collect(),
        equalities,
        inequalities,
    })
}

/// Heat pump block: balance, thermal recursion with a cyclic terminal
/// condition, power limits, and the comfort band. The band's upper side is
/// relaxed to the outdoor peak on abnormally hot days; the lower side is
/// never relaxed, so undersized pumps surface as errors.
pub fn build_heatpump(
    spec: &HeatPumpSpec,
    grid: &TimeGrid,
    outdoor_temp: &[f64],
    outdoor_temp_peak: f64,
) -> Result<ConstraintBlock> {
    let horizon = grid.horizon;
    let dt = grid.period_hours;
    check_len("outdoor_temp", outdoor_temp.len(), horizon)?;
    if !(spec.cop > 0.0 && spec.thermal_resistance > 0.0 && spec.thermal_capacity > 0.0) {
        return Err(Error::InvalidSpec(
            "cop, thermal_resistance and thermal_capacity must be positive".into(),
        ));
    }
    if spec.power_max < 0.0 {
        return Err(Error::InvalidSpec(format!("power_max {} is negative", spec.power_max)));
    }
    if !(spec.temp_min <= spec.temp_init && spec.temp_init <= spec.temp_max) {
        return Err(Error::InvalidSpec(format!(
            "initial temperature {} outside band [{}, {}]",
            spec.temp_init, spec.temp_min, spec.temp_max
        )));
    }
    let rc = spec.thermal_resistance * spec.thermal_capacity;
    let decay = 1.0 - dt / rc;
    let gain = spec.cop * dt / spec.thermal_capacity;
    let exchange = dt / rc;
    if decay <= 0.0 {
        return Err(Error::InvalidSpec(format!(
            "thermal time constant {rc} h is too small for {dt} h periods"
        )));
    }
    let band_max = spec.temp_max.max(outdoor_temp_peak);

    // Max-heating and band-floor trajectories decide feasibility: the band
    // and the terminal condition must be reachable at full power, and the
    // terminal temperature must be reachable from above without heating.
    let mut warmest = spec.temp_init;
    let mut coolest = spec.temp_init;
    for &outdoor in outdoor_temp {
        warmest = decay * warmest + exchange * outdoor + gain * spec.power_max;
        if warmest < spec.temp_min - FEAS_TOL {
            return Err(Error::InvalidSpec(format!(
                "power_max {} kW cannot hold temp_min {} against outdoor {outdoor} degC",
                spec.power_max, spec.temp_min
            )));
        }
        coolest = (decay * coolest + exchange * outdoor).max(spec.temp_min);
    }
    if warmest < spec.temp_init - FEAS_TOL {
        return Err(Error::InvalidSpec(format!(
            "power_max {} kW cannot restore the initial temperature {} by end of day",
            spec.power_max, spec.temp_init
        )));
    }
    if coolest > spec.temp_init + FEAS_TOL {
        return Err(Error::InvalidSpec(format!(
            "house cannot cool back to the initial temperature {} (warm day floor {coolest})",
            spec.temp_init
        )));
    }

    let mut var_names = Vec::with_capacity(3 * horizon);
    let mut var_ranges = Vec::with_capacity(3 * horizon);
    for t in 0..horizon {
        var_names.push(format!("p_t{t}"));
        var_ranges.push((0.0, dt * spec.power_max));
    }
    for t in 0..horizon {
        var_names.push(format!("q_t{t}"));
        var_ranges.push((0.0, spec.power_max));
    }
    for t in 0..horizon {
        var_names.push(format!("tmp_t{t}"));
        if t + 1 == horizon {
            var_ranges.push((spec.temp_init, spec.temp_init));
        } else {
            var_ranges.push((spec.temp_min, band_max));
        }
    }
    let p = |t: usize| t;
    let q = |t: usize| horizon + t;
    let tempvar = |t: usize| 2 * horizon + t;

    let mut equalities = Vec::new();
    for t in 0..horizon {
        equalities.push(BlockRow {
            coeffs: vec![(p(t), -1.0), (q(t), dt)],
            rhs: 0.0,
            label: DualLabel::Balance(t),
        });
    }
    for t in 0..horizon {
        let (coeffs, rhs) = if t == 0 {
            (
                vec![(tempvar(0), 1.0), (q(0), -gain)],
                decay * spec.temp_init + exchange * outdoor_temp[0],
            )
        } else {
            (
                vec![(tempvar(t), 1.0), (tempvar(t - 1), -decay), (q(t), -gain)],
                exchange * outdoor_temp[t],
            )
        };
        equalities.push(BlockRow { coeffs, rhs, label: DualLabel::State(t) });
    }
    equalities.push(BlockRow {
        coeffs: vec![(tempvar(horizon - 1), 1.0)],
        rhs: spec.temp_init,
        label: DualLabel::Terminal,
    });

    let mut inequalities = Vec::new();
    for t in 0..horizon {
        inequalities.push(BlockRow {
            coeffs: vec![(q(t), 1.0)],
            rhs: 0.0,
            label: DualLabel::Lower(BoundFamily::HeatPower, t),
        });
        inequalities.push(BlockRow {
            coeffs: vec![(q(t), -1.0)],
            rhs: -spec.power_max,
            label: DualLabel::Upper(BoundFamily::HeatPower, t),
        });
    }
    for t in 0..horizon {
        inequalities.push(BlockRow {
            coeffs: vec![(tempvar(t), 1.0)],
            rhs: spec.temp_min,
            label: DualLabel::Lower(BoundFamily::Temperature, t),
        });
        inequalities.push(BlockRow {
            coeffs: vec![(tempvar(t), -1.0)],
            rhs: -band_max,
            label: DualLabel::Upper(BoundFamily::Temperature, t),
        });
    }

    Ok(ConstraintBlock {
        kind: SignatureKind::HeatPump,
        label: "heatpump".into(),
        var_names,
        var_ranges,
        link_vars: (0..horizon).collect(),
        equalities,
        inequalities,
    })
}

/// Vehicle block: balance, state-of-energy recursion with driving drain and
/// a cyclic terminal condition, availability-gated power bounds, and battery
/// bounds.
pub fn build_ev(spec: &EvSpec, grid: &TimeGrid) -> Result<ConstraintBlock> {
    let horizon = grid.horizon;
    let dt = grid.period_hours;
    check_len("plugged_in", spec.plugged_in.len(), horizon)?;
    if !(spec.discharge_max <= 0.0 && 0.0 <= spec.charge_max) {
        return Err(Error::InvalidSpec(format!(
            "vehicle power bounds must satisfy discharge_max <= 0 <= charge_max, got [{}, {}]",
            spec.discharge_max, spec.charge_max
        )));
    }
    if !(spec.soc_min <= spec.soc_init && spec.soc_init <= spec.soc_max) {
        return Err(Error::InvalidSpec(format!(
            "initial state of charge {} outside [{}, {}]",
            spec.soc_init, spec.soc_min, spec.soc_max
        )));
    }
    if spec.drive_power < 0.0 {
        return Err(Error::InvalidSpec(format!("drive_power {} is negative", spec.drive_power)));
    }
    let drain = |t: usize| if spec.plugged_in[t] { 0.0 } else { spec.drive_power * dt };

    // Best-case recharge screen: charging at full power whenever plugged in
    // must keep the battery above its floor and restore the initial state.
    let mut best = spec.soc_init;
    for t in 0..horizon {
        if spec.plugged_in[t] {
            best = (best + dt * spec.charge_max).min(spec.soc_max);
        } else {
            best -= drain(t);
            if best < spec.soc_min - FEAS_TOL {
                return Err(Error::InvalidSpec(format!(
                    "driving drains the battery to {best} kWh at period {t}, below soc_min {}",
                    spec.soc_min
                )));
            }
        }
    }
    if best < spec.soc_init - FEAS_TOL {
        return Err(Error::InvalidSpec(format!(
            "drive energy cannot be recharged within plugged-in periods (best end state {best} \
             kWh < initial {} kWh)",
            spec.soc_init
        )));
    }

    let gated = |t: usize| -> (f64, f64) {
        if spec.plugged_in[t] {
            (spec.discharge_max, spec.charge_max)
        } else {
            (0.0, 0.0)
        }
    };

    let mut var_names = Vec::with_capacity(3 * horizon);
    let mut var_ranges = Vec::with_capacity(3 * horizon);
    for t in 0..horizon {
        let (lo, hi) = gated(t);
        var_names.push(format!("p_t{t}"));
        var_ranges.push((dt * lo, dt * hi));
    }
    for t in 0..horizon {
        let (lo, hi) = gated(t);
        var_names.push(format!("ev_t{t}"));
        var_ranges.push((lo, hi));
    }
    for t in 0..horizon {
        var_names.push(format!("s_t{t}"));
        if t + 1 == horizon {
            var_ranges.push((spec.soc_init, spec.soc_init));
        } else {
            var_ranges.push((spec.soc_min, spec.soc_max));
        }
    }
    let p = |t: usize| t;
    let ev = |t: usize| horizon + t;
    let soc = |t: usize| 2 * horizon + t;

    let mut equalities = Vec::new();
    for t in 0..horizon {
        equalities.push(BlockRow {
            coeffs: vec![(p(t), -1.0), (ev(t), dt)],
            rhs: 0.0,
            label: DualLabel::Balance(t),
        });
    }
    for t in 0..horizon {
        let (coeffs, rhs) = if t == 0 {
            (vec![(soc(0), 1.0), (ev(0), -dt)], spec.soc_init - drain(0))
        } else {
            (vec![(soc(t), 1.0), (soc(t - 1), -1.0), (ev(t), -dt)], -drain(t))
        };
        equalities.push(BlockRow { coeffs, rhs, label: DualLabel::State(t) });
    }
    equalities.push(BlockRow {
        coeffs: vec![(soc(horizon - 1), 1.0)],
        rhs: spec.soc_init,
        label: DualLabel::Terminal,
    });

    let mut inequalities = Vec::new();
    for t in 0..horizon {
        let (lo, hi) = gated(t);
        inequalities.push(BlockRow {
            coeffs: vec![(ev(t), 1.0)],
            rhs: lo,
            label: DualLabel::Lower(BoundFamily::EvPower, t),
        });
        inequalities.push(BlockRow {
            coeffs: vec![(ev(t), -1.0)],
            rhs: -hi,
            label: DualLabel::Upper(BoundFamily::EvPower, t),
        });
    }
    for t in 0..horizon {
        inequalities.push(BlockRow {
            coeffs: vec![(soc(t), 1.0)],
            rhs: spec.soc_min,
            label: DualLabel::Lower(BoundFamily::EvSoc, t),
        });
        inequalities.push(BlockRow {
            coeffs: vec![(soc(t), -1.0)],
            rhs: -spec.soc_max,
            label: DualLabel::Upper(BoundFamily::EvSoc, t),
        });
    }

    Ok(ConstraintBlock {
        kind: SignatureKind::Ev,
        label: "ev".into(),
        var_names,
        var_ranges,
        link_vars: (0..horizon).collect(),
        equalities,
        inequalities,
    })
}
