use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Discretization of one day into equal periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    /// Number of periods per day.
    pub horizon: usize,
    /// Duration of one period in hours. Multiplies every power-to-energy
    /// conversion (kW to kWh per period).
    pub period_hours: f64,
}

impl TimeGrid {
    pub fn new(horizon: usize, period_hours: f64) -> Result<Self> {
        if horizon < 1 {
            return Err(Error::InvalidSpec("horizon must be at least 1".into()));
        }
        if !(period_hours > 0.0) || !period_hours.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "period duration must be positive and finite, got {period_hours}"
            )));
        }
        Ok(Self { horizon, period_hours })
    }

    /// The standard 24 one-hour periods.
    pub fn hourly() -> Self {
        Self { horizon: 24, period_hours: 1.0 }
    }

    pub fn periods(&self) -> std::ops::Range<usize> {
        0..self.horizon
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self::hourly()
    }
}
