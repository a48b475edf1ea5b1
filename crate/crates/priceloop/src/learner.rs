//! Thompson sampling over signature weights: Gaussian beliefs per prosumer,
//! daily posterior updates from observed responses, and detection of shifts
//! in the underlying behavior.
//!
//! Beliefs are per-prosumer and independent; updates across prosumers are
//! free to run in parallel.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::environment::ProfileMatrix;
use crate::{Error, Result};

/// Gaussian belief over one prosumer's signature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBelief {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Eigenvalues this far below zero still count as positive semidefinite.
pub const PSD_TOL: f64 = -1e-10;

impl WeightBelief {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Smallest eigenvalue of the covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.covariance
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.len();
        if self.covariance.nrows() != k || self.covariance.ncols() != k {
            return Err(Error::Numerical(format!(
                "covariance is {}x{} for {k} weights",
                self.covariance.nrows(),
                self.covariance.ncols()
            )));
        }
        if (&self.covariance - self.covariance.transpose()).amax() > 1e-8 {
            return Err(Error::Numerical("covariance is not symmetric".into()));
        }
        if self.min_eigenvalue() < PSD_TOL {
            return Err(Error::Numerical(format!(
                "covariance lost positive semidefiniteness (min eigenvalue {})",
                self.min_eigenvalue()
            )));
        }
        Ok(())
    }
}

/// Observation noise: independent per period with one shared std.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseModel {
    /// kWh per period.
    pub std: f64,
}

impl NoiseModel {
    pub fn covariance(&self, horizon: usize) -> DMatrix<f64> {
        DMatrix::identity(horizon, horizon) * (self.std * self.std)
    }
}

/// Prior over signature weights.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PriorConfig {
    pub mean: f64,
    pub std: f64,
    /// Affine stretch applied to solar entries, whose weights range over the
    /// installed sizes rather than [0, 1].
    pub pv_scale: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { mean: 0.5, std: 0.15, pv_scale: 3.0 }
    }
}

/// Independent Gaussian prior per signature; solar entries are stretched by
/// `pv_scale` to cover the installed-size range.
pub fn init_prior(
    catalogue_size: usize,
    pv_entries: &[usize],
    config: &PriorConfig,
) -> Result<WeightBelief> {
    if !(config.std > 0.0) {
        return Err(Error::Config(format!("prior std {} must be positive", config.std)));
    }
    let mut mean = DVector::from_element(catalogue_size, config.mean);
    let mut covariance = DMatrix::from_diagonal_element(
        catalogue_size,
        catalogue_size,
        config.std * config.std,
    );
    for &k in pv_entries {
        if k >= catalogue_size {
            return Err(Error::Config(format!("solar entry {k} outside catalogue")));
        }
        mean[k] *= config.pv_scale;
        covariance[(k, k)] *= config.pv_scale * config.pv_scale;
    }
    Ok(WeightBelief { mean, covariance })
}

/// Returns the belief to its agnostic prior.
pub fn reset_prior(
    catalogue_size: usize,
    pv_entries: &[usize],
    config: &PriorConfig,
) -> Result<WeightBelief> {
    init_prior(catalogue_size, pv_entries, config)
}

/// One multivariate-normal draw. Deterministic for a fixed generator state;
/// samples are not clipped, so values outside [0, 1] do occur.
pub fn sample_weights(belief: &WeightBelief, rng: &mut impl Rng) -> Result<DVector<f64>> {
    if belief.is_empty() {
        return Ok(DVector::zeros(0));
    }
    if belief.covariance.amax() == 0.0 {
        return Ok(belief.mean.clone());
    }
    let factor = Cholesky::new(belief.covariance.clone()).or_else(|| {
        let jittered =
            &belief.covariance + DMatrix::identity(belief.len(), belief.len()) * 1e-10;
        Cholesky::new(jittered)
    });
    let Some(factor) = factor else {
        return Err(Error::Numerical(
            "covariance factorization failed even with jitter".into(),
        ));
    };
    let z = DVector::from_fn(belief.len(), |_, _| StandardNormal.sample(rng));
    Ok(&belief.mean + factor.l() * z)
}

/// Conditions the belief on one day's observation: `profiles` holds the
/// per-signature optimal responses under that day's prices (one column per
/// signature), `observation` the metered response. The Kalman-form update
/// keeps the covariance symmetric; loss of positive semidefiniteness is an
/// error, as is a singular innovation (possible only with zero noise and
/// rank-deficient profiles).
pub fn update_posterior(
    belief: &WeightBelief,
    profiles: &ProfileMatrix,
    observation: &DVector<f64>,
    noise: &NoiseModel,
) -> Result<WeightBelief> {
    let horizon = profiles.nrows();
    if profiles.ncols() != belief.len() {
        return Err(Error::Numerical(format!(
            "profile matrix has {} columns for {} weights",
            profiles.ncols(),
            belief.len()
        )));
    }
    if observation.len() != horizon {
        return Err(Error::Numerical(format!(
            "observation has {} periods, profiles have {horizon}",
            observation.len()
        )));
    }

    let cross = &belief.covariance * profiles.transpose(); // K x T
    let innovation_cov = profiles * &cross + noise.covariance(horizon); // T x T
    let Some(factor) = Cholesky::new(innovation_cov) else {
        return Err(Error::Config(
            "singular innovation covariance: zero noise with rank-deficient profiles".into(),
        ));
    };
    let residual = observation - profiles * &belief.mean;
    let gain = factor.solve(&cross.transpose()).transpose(); // K x T
    let mean = &belief.mean + &gain * residual;
    // Joseph form of the covariance recursion: identical to the plain
    // subtraction in exact arithmetic, but stays semidefinite when the
    // innovation is nearly singular.
    let shrink = DMatrix::identity(belief.len(), belief.len()) - &gain * profiles;
    let covariance = &shrink * &belief.covariance * shrink.transpose()
        + &gain * noise.covariance(horizon) * gain.transpose();
    let covariance = (&covariance + covariance.transpose()) * 0.5;

    let updated = WeightBelief { mean, covariance };
    if updated.min_eigenvalue() < PSD_TOL {
        return Err(Error::Numerical(format!(
            "posterior covariance lost positive semidefiniteness (min eigenvalue {})",
            updated.min_eigenvalue()
        )));
    }
    Ok(updated)
}

/// Root-mean-square distance between two profiles.
pub fn rms_distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    ((a - b).norm_squared() / a.len() as f64).sqrt()
}

/// Flags a behavioral shift when the predicted response stays far from the
/// observed one for a whole window of consecutive days.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShiftDetector {
    /// kWh threshold on the per-day RMS distance.
    pub tolerance: f64,
    /// Consecutive days over the threshold required to flag.
    pub window: usize,
    consecutive: usize,
}

impl ShiftDetector {
    pub fn new(tolerance: f64, window: usize) -> Self {
        Self { tolerance, window, consecutive: 0 }
    }

    /// Feeds one day: `predicted` is the profile implied by the posterior
    /// mean, `observed` the metered response. Returns true when the distance
    /// has exceeded the tolerance for `window` consecutive days.
    pub fn observe(&mut self, predicted: &DVector<f64>, observed: &DVector<f64>) -> bool {
        if rms_distance(predicted, observed) > self.tolerance {
            self.consecutive += 1;
        } else {
            self.consecutive = 0;
        }
        self.consecutive >= self.window
    }

    /// Clears the streak, e.g. after a prior reset.
    pub fn reset(&mut self) {
        self.consecutive = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn default_prior(k: usize) -> WeightBelief {
        init_prior(k, &[3], &PriorConfig::default()).unwrap()
    }

    #[test]
    fn prior_matches_configuration() {
        let b = default_prior(10);
        for k in 0..10 {
            if k == 3 {
                assert!((b.mean[k] - 1.5).abs() < 1e-12);
                assert!((b.covariance[(k, k)] - 0.45 * 0.45).abs() < 1e-12);
            } else {
                assert!((b.mean[k] - 0.5).abs() < 1e-12);
                assert!((b.covariance[(k, k)] - 0.15 * 0.15).abs() < 1e-12);
            }
        }
        assert!(init_prior(0, &[], &PriorConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn degenerate_covariance_samples_the_mean_exactly() {
        let belief = WeightBelief {
            mean: DVector::from_vec(vec![0.3, 0.7]),
            covariance: DMatrix::zeros(2, 2),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_weights(&belief, &mut rng).unwrap();
        assert_eq!(s, belief.mean);
    }

    #[test]
    fn fixed_seed_reproduces_the_draw() {
        let belief = default_prior(10);
        let a = sample_weights(&belief, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_weights(&belief, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_moments_match_the_prior() {
        let config = PriorConfig::default();
        let belief = init_prior(1, &[], &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let samples: Vec<f64> =
            (0..n).map(|_| sample_weights(&belief, &mut rng).unwrap()[0]).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 0.5).abs() < 0.01, "sample mean {mean}");
        assert!((var.sqrt() - 0.15).abs() < 0.01, "sample std {}", var.sqrt());
    }

    #[test]
    fn pv_scaling_shifts_the_quantiles() {
        let belief = default_prior(4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 50_000;
        let mut pv: Vec<f64> = (0..n)
            .map(|_| sample_weights(&belief, &mut rng).unwrap()[3])
            .collect();
        pv.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| pv[(p * n as f64) as usize];
        // Median 1.5, quartiles at 1.5 +/- 0.6745 * 0.45.
        assert!((q(0.5) - 1.5).abs() < 0.02);
        assert!((q(0.25) - (1.5 - 0.6745 * 0.45)).abs() < 0.02);
        assert!((q(0.75) - (1.5 + 0.6745 * 0.45)).abs() < 0.02);
    }

    #[test]
    fn zero_profiles_leave_the_belief_unchanged() {
        let belief = default_prior(4);
        let profiles = DMatrix::zeros(6, 4);
        let y = DVector::zeros(6);
        let updated =
            update_posterior(&belief, &profiles, &y, &NoiseModel { std: 0.1 }).unwrap();
        assert!((&updated.mean - &belief.mean).amax() < 1e-12);
        assert!((&updated.covariance - &belief.covariance).amax() < 1e-12);
    }

    #[test]
    fn exact_observation_recovers_the_weights() {
        // Square invertible profiles and vanishing noise: the posterior mean
        // solves the system exactly and the covariance collapses.
        let belief = init_prior(2, &[], &PriorConfig::default()).unwrap();
        let profiles = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, -1.0]);
        let truth = DVector::from_vec(vec![0.8, 0.2]);
        let y = &profiles * &truth;
        let updated =
            update_posterior(&belief, &profiles, &y, &NoiseModel { std: 1e-9 }).unwrap();
        assert!((&updated.mean - &truth).amax() < 1e-6);
        assert!(updated.covariance.amax() < 1e-6);
    }

    /// From-scratch batch Bayesian linear regression on stacked data.
    fn batch_posterior(
        prior: &WeightBelief,
        profile_days: &[DMatrix<f64>],
        observations: &[DVector<f64>],
        noise_std: f64,
    ) -> WeightBelief {
        let k = prior.len();
        let precision0 = prior.covariance.clone().try_inverse().unwrap();
        let mut precision = precision0.clone();
        let mut info = &precision0 * &prior.mean;
        for (p, y) in profile_days.iter().zip(observations) {
            precision += p.transpose() * p / (noise_std * noise_std);
            info += p.transpose() * y / (noise_std * noise_std);
        }
        let covariance = precision.try_inverse().unwrap();
        let mean = &covariance * info;
        let covariance = (&covariance + covariance.transpose()) * 0.5;
        assert_eq!(covariance.nrows(), k);
        WeightBelief { mean, covariance }
    }

    #[test]
    fn recursive_updates_match_batch_regression() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let noise = NoiseModel { std: 0.3 };
        let prior = default_prior(4);
        let mut belief = prior.clone();
        let mut profile_days = Vec::new();
        let mut observations = Vec::new();
        for _ in 0..3 {
            let p = DMatrix::from_fn(6, 4, |_, _| rng.gen_range(-2.0..2.0));
            let y = DVector::from_fn(6, |_, _| rng.gen_range(-3.0..3.0));
            belief = update_posterior(&belief, &p, &y, &noise).unwrap();
            profile_days.push(p);
            observations.push(y);
        }
        let batch = batch_posterior(&prior, &profile_days, &observations, noise.std);
        assert!(
            (&belief.mean - &batch.mean).amax() < 1e-8,
            "mean gap {}",
            (&belief.mean - &batch.mean).amax()
        );
        assert!(
            (&belief.covariance - &batch.covariance).amax() < 1e-8,
            "covariance gap {}",
            (&belief.covariance - &batch.covariance).amax()
        );
    }

    #[test]
    fn information_grows_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let noise = NoiseModel { std: 0.2 };
        let mut belief = default_prior(5);
        let mut last_trace = belief.covariance.trace();
        for _ in 0..20 {
            let p = DMatrix::from_fn(4, 5, |_, _| rng.gen_range(-1.0..1.0));
            let y = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
            belief = update_posterior(&belief, &p, &y, &noise).unwrap();
            let trace = belief.covariance.trace();
            assert!(trace <= last_trace + 1e-10, "trace rose {last_trace} -> {trace}");
            assert!(belief.min_eigenvalue() >= PSD_TOL);
            last_trace = trace;
        }
    }

    #[test]
    fn repeated_identifiable_days_converge_to_the_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let noise = NoiseModel { std: 0.05 };
        let truth = DVector::from_vec(vec![0.9, 0.1, 1.7]);
        let profiles = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 0.0, -1.0, 0.5, 1.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 1.0],
        );
        let mut belief = init_prior(3, &[2], &PriorConfig::default()).unwrap();
        for _ in 0..200 {
            let mut y = &profiles * &truth;
            for v in y.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += noise.std * z;
            }
            belief = update_posterior(&belief, &profiles, &y, &noise).unwrap();
        }
        assert!((&belief.mean - &truth).amax() < 1e-2, "mean {:?}", belief.mean);
    }

    #[test]
    fn shift_detector_needs_a_full_window() {
        let mut detector = ShiftDetector::new(1.0, 3);
        let zero = DVector::zeros(4);
        let off = DVector::from_element(4, 5.0);
        assert!(!detector.observe(&zero, &zero));
        assert!(!detector.observe(&zero, &off));
        assert!(!detector.observe(&zero, &off));
        assert!(detector.observe(&zero, &off));
        // A quiet day clears the streak.
        detector.reset();
        assert!(!detector.observe(&zero, &off));
    }

    #[test]
    fn reset_returns_the_agnostic_prior() {
        let prior = default_prior(10);
        let reset = reset_prior(10, &[3], &PriorConfig::default()).unwrap();
        assert_eq!(prior, reset);
    }
}
