//! Experiment configuration: one TOML file holding every knob, with
//! documented defaults for everything the underlying model leaves open.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environment::CommunityConfig;
use crate::learner::PriorConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub community: CommunitySection,
    pub economics: EconomicsSection,
    pub prior: PriorConfig,
    pub shift_detection: ShiftSection,
    pub nonstationarity: NonstationaritySection,
    pub data: DataSection,
    pub solver: SolverSection,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentSection::default(),
            community: CommunitySection::default(),
            economics: EconomicsSection::default(),
            prior: PriorConfig::default(),
            shift_detection: ShiftSection::default(),
            nonstationarity: NonstationaritySection::default(),
            data: DataSection::default(),
            solver: SolverSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Days per run.
    pub days: usize,
    /// Independent runs (learner and noise seeds differ per run).
    pub runs: usize,
    /// Master seed; every stream is derived from it.
    pub seed: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self { days: 120, runs: 5, seed: 2023 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CommunitySection {
    pub prosumers: usize,
    /// Periods per day; the standard catalogue needs 24.
    pub horizon: usize,
    /// Catalogue entries in play, by standard index 0..=9. Subsets keep
    /// their parameters; weights outside the subset are dropped.
    pub catalogue: Vec<usize>,
    #[serde(flatten)]
    pub generation: CommunityConfig,
}

impl Default for CommunitySection {
    fn default() -> Self {
        Self {
            prosumers: 5,
            horizon: 24,
            catalogue: (0..10).collect(),
            generation: CommunityConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EconomicsSection {
    /// Community (discounted) import tariff, DKK/kWh.
    pub import_tariff: f64,
    pub export_tariff: f64,
    /// Full stand-alone import tariff, DKK/kWh; must exceed the community
    /// tariff for membership to stay rational when the capacity limit binds.
    pub outside_tariff: f64,
    /// Penalty above the worst retail price, DKK/kWh. The effective penalty
    /// is `max_day_spot + import_tariff + penalty_margin`.
    pub penalty_margin: f64,
    /// Fixed capacity limit, kWh per period; `None` sizes it automatically.
    pub capacity_limit: Option<f64>,
    /// Automatic sizing: this factor times the worst-day flat community
    /// load.
    pub capacity_factor: f64,
    /// Upper bound on posted prices, DKK/kWh.
    pub price_cap: f64,
}

impl Default for EconomicsSection {
    fn default() -> Self {
        Self {
            import_tariff: 0.15,
            export_tariff: 0.05,
            outside_tariff: 1.0,
            penalty_margin: 5.0,
            capacity_limit: None,
            capacity_factor: 1.6,
            price_cap: 10.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftSection {
    /// Reset the belief to the prior when a shift is detected.
    pub reset: bool,
    /// RMS distance threshold as a multiple of the prosumer's noise std.
    pub tolerance_noise_factor: f64,
    /// Consecutive days over threshold required.
    pub window: usize,
}

impl Default for ShiftSection {
    fn default() -> Self {
        Self { reset: true, tolerance_noise_factor: 4.0, window: 3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct NonstationaritySection {
    pub enabled: bool,
    /// 1-based day on which the flip happens (before that day's pricing).
    pub day: usize,
    /// Fraction of prosumers whose heat-pump and vehicle patterns flip.
    pub fraction: f64,
}

impl Default for NonstationaritySection {
    fn default() -> Self {
        Self { enabled: false, day: 60, fraction: 0.4 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// "synthetic" or "files".
    pub source: String,
    pub price_path: Option<PathBuf>,
    pub temp_path: Option<PathBuf>,
    pub pv_path: Option<PathBuf>,
    pub baseload_path: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: "synthetic".into(),
            price_path: None,
            temp_path: None,
            pv_path: None,
            baseload_path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub backend: String,
    pub time_limit_seconds: f64,
    pub gap_tolerance: f64,
    pub seed: i32,
    pub threads: usize,
    /// Dual-variable box as a multiple of the price cap (amplified per
    /// block); the audit-and-double loop recovers from a box chosen too
    /// small.
    pub dual_bound_factor: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            backend: "highs".into(),
            time_limit_seconds: 120.0,
            gap_tolerance: 1e-6,
            seed: 0,
            threads: 1,
            dual_bound_factor: 4.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Days at which belief box plots are emitted (1-based).
    pub snapshot_days: Vec<usize>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { snapshot_days: vec![1, 5, 25, 100] }
    }
}

/// Environment variable overriding the solver backend key.
pub const ENV_SOLVER: &str = "PRICELOOP_SOLVER";
/// Environment variable overriding the solver thread count.
pub const ENV_THREADS: &str = "PRICELOOP_THREADS";

impl ExperimentConfig {
    /// Parses a TOML string and applies environment overrides.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.apply_env_overrides()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(backend) = std::env::var(ENV_SOLVER) {
            self.solver.backend = backend;
        }
        if let Ok(threads) = std::env::var(ENV_THREADS) {
            self.solver.threads = threads
                .parse()
                .map_err(|_| Error::Config(format!("{ENV_THREADS}={threads} is not a number")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment.runs < 1 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.experiment.days < 1 {
            return Err(Error::Config("days must be at least 1".into()));
        }
        if self.community.prosumers < 1 {
            return Err(Error::Config("community needs at least one prosumer".into()));
        }
        if self.community.horizon != 24 {
            return Err(Error::Config(
                "the standard catalogue is defined on a 24-hour horizon".into(),
            ));
        }
        if self.community.catalogue.is_empty()
            || self.community.catalogue.iter().any(|&k| k >= 10)
        {
            return Err(Error::Config(
                "catalogue must be a non-empty subset of the standard indices 0..=9".into(),
            ));
        }
        if self.economics.outside_tariff <= self.economics.import_tariff {
            return Err(Error::Config(
                "outside_tariff must exceed import_tariff (the community's discount)".into(),
            ));
        }
        if !(self.economics.price_cap > 0.0) {
            return Err(Error::Config("price_cap must be positive".into()));
        }
        if self.nonstationarity.enabled
            && !(0.0..=1.0).contains(&self.nonstationarity.fraction)
        {
            return Err(Error::Config("nonstationarity fraction must lie in [0, 1]".into()));
        }
        crate::milp::backend_from_name(&self.solver.backend)?;
        match self.data.source.as_str() {
            "synthetic" => {}
            "files" => {
                for (name, path) in [
                    ("price_path", &self.data.price_path),
                    ("temp_path", &self.data.temp_path),
                    ("pv_path", &self.data.pv_path),
                    ("baseload_path", &self.data.baseload_path),
                ] {
                    match path {
                        None => {
                            return Err(Error::Config(format!(
                                "data.source = \"files\" requires data.{name}"
                            )))
                        }
                        Some(p) if !p.exists() => {
                            return Err(Error::Config(format!(
                                "data.{name} {} does not exist",
                                p.display()
                            )))
                        }
                        _ => {}
                    }
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "data.source must be \"synthetic\" or \"files\", got \"{other}\""
                )))
            }
        }
        Ok(())
    }
}

/// Derives an independent stream seed from the master seed and a label.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
