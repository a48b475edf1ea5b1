//! Simulated ground truth: hidden true signature weights per prosumer and
//! noisy daily responses to posted prices.
//!
//! The catalogue fixes ten signatures per prosumer: three shiftable-baseload
//! windows (morning 06-10, daytime 10-17, evening 17-22), rooftop solar, a
//! home battery, two heat-pump comfort bands (19-21 and 16-24 degC), and
//! three vehicle driving patterns. True baseload weights form a simplex over
//! the three windows; battery, heat-pump and vehicle weights are one-hot or
//! zero; the solar weight is the installed size in [0, 3] kW.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::milp::{SolveOptions, SolverBackend};
use crate::signatures::{
    solve_signature_lp, BatterySpec, DayContext, EvSpec, FlexBaseloadSpec, HeatPumpSpec,
    SignatureSpec,
};
use crate::{Error, Result, TimeGrid};

/// Signatures per prosumer in the standard catalogue.
pub const CATALOGUE_SIZE: usize = 10;
/// Catalogue position of the solar signature.
pub const PV_SIGNATURE: usize = 3;
/// Catalogue positions of the heat-pump signatures.
pub const HEATPUMP_SIGNATURES: [usize; 2] = [5, 6];
/// Catalogue positions of the vehicle signatures.
pub const EV_SIGNATURES: [usize; 3] = [7, 8, 9];
/// Catalogue position of the battery signature.
pub const BATTERY_SIGNATURE: usize = 4;
/// Catalogue positions of the baseload signatures.
pub const BASELOAD_SIGNATURES: [usize; 3] = [0, 1, 2];

/// Per-signature response profiles at one price vector: `horizon` rows, one
/// column per signature.
pub type ProfileMatrix = DMatrix<f64>;

/// Asset-ownership and sizing distribution for community generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommunityConfig {
    pub battery_ownership: f64,
    pub heatpump_ownership: f64,
    pub ev_ownership: f64,
    /// Probability of owning no solar at all; otherwise the size is uniform
    /// on `pv_size_range`.
    pub pv_none_probability: f64,
    pub pv_size_range: (f64, f64),
    /// Relative jitter applied to asset parameters across prosumers.
    pub param_jitter: f64,
    /// Response noise std as a fraction of the prosumer's peak baseload.
    pub noise_fraction_of_peak: f64,
}

impl Default for CommunityConfig {
    fn default() -> Self {
        Self {
            battery_ownership: 0.5,
            heatpump_ownership: 0.7,
            ev_ownership: 0.7,
            pv_none_probability: 0.25,
            pv_size_range: (0.5, 3.0),
            param_jitter: 0.2,
            noise_fraction_of_peak: 0.02,
        }
    }
}

/// Hidden ground truth. True weights are read only by the response
/// simulation here and by the clairvoyant baselines in the metrics; the
/// learner and the price setter see samples and observations only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrueCommunity {
    specs: Vec<Vec<SignatureSpec>>,
    true_weights: Vec<Vec<f64>>,
    noise_std: Vec<f64>,
    grid: TimeGrid,
}

impl TrueCommunity {
    pub fn n_prosumers(&self) -> usize {
        self.specs.len()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn specs(&self) -> &[Vec<SignatureSpec>] {
        &self.specs
    }

    /// Hidden weights; for the environment itself and the clairvoyant
    /// baselines only.
    pub fn true_weights(&self) -> &[Vec<f64>] {
        &self.true_weights
    }

    /// Response noise std per prosumer, kWh per period.
    pub fn noise_std(&self, prosumer: usize) -> f64 {
        self.noise_std[prosumer]
    }

    pub fn validate(&self) -> Result<()> {
        for (n, w) in self.true_weights.iter().enumerate() {
            if w.len() != self.specs[n].len() {
                return Err(Error::InvalidSpec(format!(
                    "prosumer {n}: {} weights for {} signatures",
                    w.len(),
                    self.specs[n].len()
                )));
            }
            if w.len() != CATALOGUE_SIZE {
                continue; // hand-built community; skip catalogue invariants
            }
            let baseload_sum: f64 = BASELOAD_SIGNATURES.iter().map(|&k| w[k]).sum();
            if (baseload_sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidSpec(format!(
                    "prosumer {n}: baseload weights sum to {baseload_sum}, expected 1"
                )));
            }
            let battery = w[BATTERY_SIGNATURE];
            if battery != 0.0 && battery != 1.0 {
                return Err(Error::InvalidSpec(format!(
                    "prosumer {n}: battery weight {battery} is not 0 or 1"
                )));
            }
            for group in [&HEATPUMP_SIGNATURES[..], &EV_SIGNATURES[..]] {
                let ones = group.iter().filter(|&&k| w[k] == 1.0).count();
                let zeros = group.iter().filter(|&&k| w[k] == 0.0).count();
                if ones + zeros != group.len() || ones > 1 {
                    return Err(Error::InvalidSpec(format!(
                        "prosumer {n}: weights over signatures {group:?} are not one-hot or zero"
                    )));
                }
            }
            let pv = w[PV_SIGNATURE];
            if !(0.0..=3.0).contains(&pv) {
                return Err(Error::InvalidSpec(format!(
                    "prosumer {n}: solar weight {pv} outside [0, 3]"
                )));
            }
        }
        Ok(())
    }

    /// Builds all signature blocks of one prosumer for one day.
    pub fn blocks_for(
        &self,
        prosumer: usize,
        day: &DayContext,
    ) -> Result<Vec<crate::signatures::ConstraintBlock>> {
        self.specs[prosumer]
            .iter()
            .enumerate()
            .map(|(k, spec)| {
                let mut block = spec.build(&self.grid, day)?;
                block.label = format!("n{prosumer}_k{k}_{}", block.label);
                Ok(block)
            })
            .collect()
    }

    /// Noise-free response: the profile columns combined with the hidden
    /// weights.
    pub fn noise_free_response(&self, prosumer: usize, profiles: &ProfileMatrix) -> DVector<f64> {
        let theta = DVector::from_row_slice(&self.true_weights[prosumer]);
        profiles * theta
    }

    /// Metered response: noise-free response plus i.i.d. Gaussian noise per
    /// period.
    pub fn observe(
        &self,
        prosumer: usize,
        profiles: &ProfileMatrix,
        rng: &mut impl Rng,
    ) -> DVector<f64> {
        let mut y = self.noise_free_response(prosumer, profiles);
        let sigma = self.noise_std[prosumer];
        for v in y.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += sigma * z;
        }
        y
    }

    /// Swaps heat-pump and vehicle usage patterns for a fraction of the
    /// prosumers (owners first), returning the affected indices.
    /// Deterministic for a fixed seed.
    pub fn apply_weight_flip(&mut self, fraction: f64, seed: u64) -> Vec<usize> {
        let n = self.n_prosumers();
        let target = (fraction * n as f64).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut owners: Vec<usize> = (0..n)
            .filter(|&i| {
                let w = &self.true_weights[i];
                HEATPUMP_SIGNATURES.iter().any(|&k| w[k] == 1.0)
                    || EV_SIGNATURES.iter().any(|&k| w[k] == 1.0)
            })
            .collect();
        for i in (1..owners.len()).rev() {
            owners.swap(i, rng.gen_range(0..=i));
        }
        let flipped: Vec<usize> = owners.into_iter().take(target).collect();
        for &i in &flipped {
            let w = &mut self.true_weights[i];
            if w[HEATPUMP_SIGNATURES[0]] == 1.0 {
                w[HEATPUMP_SIGNATURES[0]] = 0.0;
                w[HEATPUMP_SIGNATURES[1]] = 1.0;
            } else if w[HEATPUMP_SIGNATURES[1]] == 1.0 {
                w[HEATPUMP_SIGNATURES[1]] = 0.0;
                w[HEATPUMP_SIGNATURES[0]] = 1.0;
            }
            if let Some(pos) = EV_SIGNATURES.iter().position(|&k| w[k] == 1.0) {
                let next = EV_SIGNATURES[(pos + 1) % EV_SIGNATURES.len()];
                w[EV_SIGNATURES[pos]] = 0.0;
                w[next] = 1.0;
            }
        }
        flipped
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Data(format!("community serialization: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let community: Self =
            serde_json::from_str(&text).map_err(|e| Error::Data(format!("community file: {e}")))?;
        community.validate()?;
        Ok(community)
    }

    /// Keeps only the given catalogue entries (standard indices), in the
    /// given order. Catalogue-level weight invariants are not re-imposed on
    /// subsets.
    pub fn restrict_catalogue(&self, keep: &[usize]) -> Result<Self> {
        for &k in keep {
            if k >= CATALOGUE_SIZE {
                return Err(Error::InvalidSpec(format!("catalogue index {k} out of range")));
            }
        }
        let specs = self
            .specs
            .iter()
            .map(|row| keep.iter().map(|&k| row[k].clone()).collect())
            .collect();
        let true_weights = self
            .true_weights
            .iter()
            .map(|row| keep.iter().map(|&k| row[k]).collect())
            .collect();
        Ok(Self {
            specs,
            true_weights,
            noise_std: self.noise_std.clone(),
            grid: self.grid,
        })
    }

    /// Builds a community directly from parts; used by tests and scaled
    /// setups that bypass the standard catalogue.
    pub fn from_parts(
        specs: Vec<Vec<SignatureSpec>>,
        true_weights: Vec<Vec<f64>>,
        noise_std: Vec<f64>,
        grid: TimeGrid,
    ) -> Result<Self> {
        let community = Self { specs, true_weights, noise_std, grid };
        community.validate()?;
        Ok(community)
    }
}

fn window(from: usize, to: usize) -> Vec<usize> {
    (from..to).collect()
}

fn plugged_except(horizon: usize, gaps: &[(usize, usize)]) -> Vec<bool> {
    (0..horizon).map(|t| !gaps.iter().any(|&(a, b)| (a..b).contains(&t))).collect()
}

/// Draws a structured community: the standard ten-signature catalogue with
/// per-prosumer parameter jitter and weights satisfying the catalogue
/// invariants. Requires the 24-period hourly grid.
pub fn make_community(
    n_prosumers: usize,
    seed: u64,
    baseloads: &[Vec<f64>],
    grid: &TimeGrid,
    config: &CommunityConfig,
) -> Result<TrueCommunity> {
    if n_prosumers == 0 {
        return Err(Error::InvalidSpec("community needs at least one prosumer".into()));
    }
    if grid.horizon != 24 {
        return Err(Error::InvalidSpec(format!(
            "the standard catalogue is defined on 24 hourly periods, got {}",
            grid.horizon
        )));
    }
    if baseloads.len() != n_prosumers {
        return Err(Error::InvalidSpec(format!(
            "{} baseload profiles for {n_prosumers} prosumers",
            baseloads.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut specs = Vec::with_capacity(n_prosumers);
    let mut weights = Vec::with_capacity(n_prosumers);
    let mut noise = Vec::with_capacity(n_prosumers);

    for baseload in baseloads {
        if baseload.len() != grid.horizon {
            return Err(Error::InvalidSpec("baseload profile length mismatch".into()));
        }
        let jitter = |rng: &mut ChaCha8Rng, v: f64| {
            v * (1.0 + config.param_jitter * (rng.gen::<f64>() * 2.0 - 1.0))
        };
        let peak = baseload.iter().cloned().fold(0.0f64, f64::max);

        let flex = |w: Vec<usize>| {
            SignatureSpec::FlexBaseload(FlexBaseloadSpec {
                baseload: baseload.clone(),
                flex_window: w,
                load_min: 0.0,
                load_max: 1.5 * peak,
            })
        };
        let battery_cap = jitter(&mut rng, 7.0);
        let battery_power = jitter(&mut rng, 2.5);
        let battery = SignatureSpec::Battery(BatterySpec {
            charge_max: battery_power,
            discharge_max: -battery_power,
            energy_min: 0.05 * battery_cap,
            energy_max: battery_cap,
            energy_init: 0.5 * battery_cap,
        });
        // One house and one vehicle per prosumer: the two comfort bands and
        // the three driving patterns share the same physical parameters.
        let resistance = jitter(&mut rng, 6.0);
        let cop = jitter(&mut rng, 3.0);
        let capacity = jitter(&mut rng, 8.0);
        // Sized to hold the narrow band's floor against the design minimum
        // outdoor temperature of -10 degC.
        let power_needed = (19.0 + 10.0) / (resistance * cop);
        let hp_power = jitter(&mut rng, 4.0).max(1.05 * power_needed);
        let heatpump = |band: (f64, f64)| {
            SignatureSpec::HeatPump(HeatPumpSpec {
                cop,
                thermal_resistance: resistance,
                thermal_capacity: capacity,
                temp_init: 20.0,
                temp_min: band.0,
                temp_max: band.1,
                power_max: hp_power,
            })
        };
        let hp_narrow = heatpump((19.0, 21.0));
        let hp_wide = heatpump((16.0, 24.0));
        let ev_power = jitter(&mut rng, 3.7);
        let ev_cap = jitter(&mut rng, 30.0);
        let drive = jitter(&mut rng, 1.5);
        let ev = |gaps: &[(usize, usize)]| {
            SignatureSpec::Ev(EvSpec {
                charge_max: ev_power,
                discharge_max: -ev_power,
                soc_min: 0.1 * ev_cap,
                soc_max: ev_cap,
                soc_init: 0.5 * ev_cap,
                plugged_in: plugged_except(grid.horizon, gaps),
                drive_power: drive,
            })
        };

        specs.push(vec![
            flex(window(6, 10)),
            flex(window(10, 17)),
            flex(window(17, 22)),
            SignatureSpec::Pv,
            battery,
            hp_narrow,
            hp_wide,
            ev(&[(8, 19)]),
            ev(&[(6, 15), (19, 22)]),
            ev(&[(7, 10), (16, 20)]),
        ]);

        // Weights: simplex over the baseload windows, one-hot or zero
        // elsewhere, sized solar.
        let mut w = vec![0.0; CATALOGUE_SIZE];
        let raw: Vec<f64> = (0..3).map(|_| rng.gen::<f64>().max(1e-6)).collect();
        let total: f64 = raw.iter().sum();
        for (i, &k) in BASELOAD_SIGNATURES.iter().enumerate() {
            w[k] = raw[i] / total;
        }
        w[PV_SIGNATURE] = if rng.gen::<f64>() < config.pv_none_probability {
            0.0
        } else {
            rng.gen_range(config.pv_size_range.0..config.pv_size_range.1)
        };
        w[BATTERY_SIGNATURE] = if rng.gen::<f64>() < config.battery_ownership { 1.0 } else { 0.0 };
        if rng.gen::<f64>() < config.heatpump_ownership {
            let pick = HEATPUMP_SIGNATURES[rng.gen_range(0..HEATPUMP_SIGNATURES.len())];
            w[pick] = 1.0;
        }
        if rng.gen::<f64>() < config.ev_ownership {
            let pick = EV_SIGNATURES[rng.gen_range(0..EV_SIGNATURES.len())];
            w[pick] = 1.0;
        }
        weights.push(w);
        noise.push(config.noise_fraction_of_peak * peak);
    }

    TrueCommunity::from_parts(specs, weights, noise, *grid)
}

/// Rough flat community load for one day, kWh per period: baseload plus
/// steady-state heating plus vehicle recharge minus solar, averaged over the
/// horizon. That is the theoretical import level if all flexibility were
/// used perfectly.
pub fn estimate_flat_load(community: &TrueCommunity, day: &crate::data::ExogenousDay) -> f64 {
    let horizon = community.grid().horizon;
    let dt = community.grid().period_hours;
    let mut total = 0.0;
    for (n, specs) in community.specs().iter().enumerate() {
        let w = &community.true_weights()[n];
        total += day.baseload[n].iter().sum::<f64>();
        for (k, spec) in specs.iter().enumerate() {
            if w[k] == 0.0 {
                continue;
            }
            match spec {
                SignatureSpec::HeatPump(hp) => {
                    let heat: f64 = day
                        .outdoor_temp
                        .iter()
                        .map(|&tex| ((hp.temp_init - tex).max(0.0)) / (hp.thermal_resistance * hp.cop))
                        .sum();
                    total += w[k] * heat * dt;
                }
                SignatureSpec::Ev(ev) => {
                    let absent = ev.plugged_in.iter().filter(|&&p| !p).count() as f64;
                    total += w[k] * ev.drive_power * absent * dt;
                }
                SignatureSpec::Pv => {
                    total -= w[k] * day.pv_reference.iter().sum::<f64>();
                }
                _ => {}
            }
        }
    }
    (total / horizon as f64).max(0.0)
}

/// Capacity limit sized so that a fully informed manager can dodge
/// violations on every given day while an uninformed one cannot: `factor`
/// times the worst daily flat load.
pub fn estimate_capacity_limit(
    community: &TrueCommunity,
    days: &[crate::data::ExogenousDay],
    factor: f64,
) -> f64 {
    let worst = days
        .iter()
        .map(|d| estimate_flat_load(community, d))
        .fold(0.0f64, f64::max);
    factor * worst
}

/// Solves every signature of one prosumer at the posted prices and stacks
/// the optimal profiles as columns.
pub fn signature_profiles(
    blocks: &[crate::signatures::ConstraintBlock],
    prices: &[f64],
    backend: &dyn SolverBackend,
    options: &SolveOptions,
) -> Result<ProfileMatrix> {
    let horizon = prices.len();
    let mut m = DMatrix::zeros(horizon, blocks.len());
    for (k, block) in blocks.iter().enumerate() {
        let sol = solve_signature_lp(block, prices, backend, options)?;
        for (t, &v) in sol.profile.iter().enumerate() {
            m[(t, k)] = v;
        }
    }
    Ok(m)
}
