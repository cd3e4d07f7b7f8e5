use serde::Serialize;

use super::SimStats;
use crate::error::{Error, Result};
use crate::model::SystemConfig;
use crate::stats::ks_exponential;

/// Minimum number of cycle-boundary samples for a distribution fit.
pub const FIT_MIN_SAMPLES: u64 = 1_000;

/// Tolerances used by [`DistributionFit::passes`].
const MEAN_REL_TOL: f64 = 0.10;
const CV2_RANGE: (f64, f64) = (0.8, 1.2);
const KS_TOL: f64 = 0.05;
const SHARE_TOL: f64 = 0.05;

/// Comparison of `eps |Q|_1` against the exponential heavy-traffic limit
/// and of per-queue shares against `gamma_l / |gamma|_1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionFit {
    pub samples: u64,
    /// Limit mean `(n sigma_lambda^2 + sum sigma_l^2) / 2`.
    pub target_mean: f64,
    pub mean: f64,
    pub mean_rel_err: f64,
    /// Squared coefficient of variation; 1 for an exponential law.
    pub cv2: f64,
    pub ks: f64,
    pub shares: Vec<f64>,
    pub target_shares: Vec<f64>,
    pub share_max_abs_err: f64,
}

impl DistributionFit {
    pub fn mean_ok(&self) -> bool {
        self.mean_rel_err <= MEAN_REL_TOL
    }
    pub fn cv2_ok(&self) -> bool {
        (CV2_RANGE.0..=CV2_RANGE.1).contains(&self.cv2)
    }
    pub fn ks_ok(&self) -> bool {
        self.ks <= KS_TOL
    }
    pub fn shares_ok(&self) -> bool {
        self.share_max_abs_err <= SHARE_TOL
    }
    pub fn passes(&self) -> bool {
        self.mean_ok() && self.cv2_ok() && self.ks_ok() && self.shares_ok()
    }
}

/// Fits the sampled `eps |Q|_1` of a steady-state run to the exponential
/// law with the limit mean; no parameter is estimated from the data.
pub fn distribution_fit(
    stats: &SimStats,
    system: &SystemConfig,
    gamma: &[f64],
) -> Result<DistributionFit> {
    if stats.samples < FIT_MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            got: stats.samples,
            need: FIT_MIN_SAMPLES,
        });
    }
    let target_mean = (system.arrival().variance() + system.sigma_sq_service_total()) / 2.0;
    let sample = stats.eps_total_samples();
    let count = stats.samples as f64;
    let mean = sample.iter().map(|&(x, c)| x * c as f64).sum::<f64>() / count;
    let var = sample
        .iter()
        .map(|&(x, c)| (x - mean).powi(2) * c as f64)
        .sum::<f64>()
        / count;
    let gamma_total: f64 = gamma.iter().sum();
    let target_shares: Vec<f64> = gamma.iter().map(|g| g / gamma_total).collect();
    let share_max_abs_err = stats
        .per_queue_share
        .iter()
        .zip(&target_shares)
        .map(|(a, b)| {
            if a.is_nan() {
                f64::INFINITY
            } else {
                (a - b).abs()
            }
        })
        .fold(0.0, f64::max);
    Ok(DistributionFit {
        samples: stats.samples,
        target_mean,
        mean,
        mean_rel_err: (mean - target_mean).abs() / target_mean,
        cv2: var / (mean * mean),
        ks: ks_exponential(&sample, target_mean),
        shares: stats.per_queue_share.clone(),
        target_shares,
        share_max_abs_err,
    })
}
