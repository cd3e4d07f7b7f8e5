use serde::Serialize;

use super::{distribution_fit, run_steady_state, ssc_constants, DistributionFit, RunConfig};
use super::{SimStats, SscConstants, FIT_MIN_SAMPLES};
use crate::error::{Error, Result};
use crate::fvector::{build_ftable, FMode};
use crate::model::{two_point_for_moments, SystemConfig};
use crate::policy::PolicySpec;
use crate::stability::check_strict_majorization;

/// Grid of capacity slacks `eps = |mu|_1 - n lambda` simulated at a fixed
/// total arrival variance.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
    pub replications: u32,
    /// Slots per replication, burn-in included.
    pub slots_per_rep: u64,
    /// Defaults to `max(10^6, 20 / eps^2)` slots.
    pub burn_in: Option<u64>,
    /// Total arrival variance `n sigma_lambda^2`, held fixed across the grid.
    pub variance: f64,
    /// Largest number of arrivals in one slot.
    pub a_max_total: u64,
    pub queue_guard: u64,
}

impl SweepConfig {
    pub fn burn_in_for(&self, eps: f64) -> u64 {
        self.burn_in
            .unwrap_or_else(|| 1_000_000u64.max((20.0 / (eps * eps)).ceil() as u64))
    }

    fn validate(&self, mu_total: f64) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one eps".into()));
        }
        for &eps in &self.epsilons {
            if !(eps > 0.0 && eps < mu_total) {
                return Err(Error::InvalidConfig(format!(
                    "eps = {eps} outside (0, {mu_total}); the arrival rate must be positive and \
                     below capacity"
                )));
            }
            if self.burn_in_for(eps) >= self.slots_per_rep {
                return Err(Error::InvalidConfig(format!(
                    "burn-in of {} slots at eps = {eps} is not shorter than the {} slots per \
                     replication",
                    self.burn_in_for(eps),
                    self.slots_per_rep
                )));
            }
        }
        Ok(())
    }
}

/// Lower bound on `eps E[(1/n) sum Q_l]` valid for every policy, from the
/// single-server system with the pooled service process.
pub fn lower_bound(system: &SystemConfig, eps: f64) -> f64 {
    let v = system.arrival().variance() + system.sigma_sq_service_total();
    (v + eps * eps - system.s_max() as f64 * eps) / (2.0 * system.n() as f64)
}

/// Common heavy-traffic limit of the lower bound and of
/// `eps E[(1/n) sum Q_l]` under a delay-optimal policy.
pub fn sandwich_limit(system: &SystemConfig) -> f64 {
    (system.arrival().variance() + system.sigma_sq_service_total()) / (2.0 * system.n() as f64)
}

/// Finite-eps upper bound on `eps E[(1/n) sum Q_l]` under strict
/// majorization, evaluated with the explicit `N_perp^2`.
pub fn upper_bound(system: &SystemConfig, policy: &PolicySpec, eps: f64, n_perp_sq: f64) -> f64 {
    let n = system.n() as f64;
    let t = policy.t_cycle() as f64;
    let gamma = policy.gamma();
    let g_min = gamma.iter().copied().fold(f64::INFINITY, f64::min);
    let g_total: f64 = gamma.iter().sum();
    let s_max = system.s_max() as f64;
    let v = system.arrival().variance() + system.sigma_sq_service_total();
    v / 2.0
        + eps * eps * t / 2.0
        + eps * (t * n * s_max * g_min + 2.0 * t * n * g_total * system.a_max()) / (2.0 * g_min)
        + eps.sqrt() * g_total * n_perp_sq.sqrt() * (n * s_max).sqrt() / g_min.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    /// Total arrival rate `n lambda`.
    pub n_lambda: f64,
    /// Per-server arrival rate `lambda`.
    pub lambda: f64,
    pub mean_total: f64,
    pub mean_total_ci: f64,
    /// `eps E[(1/n) sum Q_l]`.
    pub eps_mean_q_per_server: f64,
    pub eps_mean_q_ci: f64,
    pub lb: f64,
    pub limit: f64,
    pub ub: Option<f64>,
    /// `eps` lies in the range where the upper bound is proven.
    pub ub_in_validity: bool,
    pub o_perp_sq: f64,
    pub o_perp_sq_ci: f64,
    pub o_sq: f64,
    pub o_sq_ci: f64,
    pub fit: Option<DistributionFit>,
    pub burn_in: u64,
    pub stats: SimStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub strictly_majorized: bool,
    pub constants: Option<SscConstants>,
    pub rows: Vec<SweepRow>,
}

/// Simulates the policy at each `eps` with a moment-matched arrival law of
/// mean `|mu|_1 - eps` and the pinned variance.
///
/// Policies without strict majorization are still simulated; their report
/// carries no collapse constants and no upper bound.
pub fn heavy_traffic_sweep(
    template: &SystemConfig,
    policy: &PolicySpec,
    sweep: &SweepConfig,
) -> Result<SweepReport> {
    let n = template.n();
    let mu = template.mu();
    sweep.validate(template.mu_total())?;
    let table = build_ftable(policy, mu, FMode::Analytic)?;
    let strictly_majorized = check_strict_majorization(&table, mu)?.holds;
    let a_max = sweep.a_max_total as f64 / n as f64;

    let mut constants = None;
    let mut rows = Vec::with_capacity(sweep.epsilons.len());
    for (i, &eps) in sweep.epsilons.iter().enumerate() {
        let at = |e: Error| Error::AtEpsilon {
            eps,
            source: Box::new(e),
        };
        let law =
            two_point_for_moments(template.mu_total() - eps, sweep.variance, sweep.a_max_total)
                .map_err(at)?;
        let system = template.with_arrival(law).with_a_max(a_max).map_err(at)?;
        if strictly_majorized && constants.is_none() {
            constants = Some(ssc_constants(&system, policy, &table).map_err(at)?);
        }
        let burn_in = sweep.burn_in_for(eps);
        let cfg = RunConfig {
            slots: sweep.slots_per_rep,
            burn_in,
            replications: sweep.replications,
            queue_guard: sweep.queue_guard,
            grid_point: i as u32,
        };
        let stats = run_steady_state(&system, policy, &cfg).map_err(at)?;
        let fit = if stats.samples >= FIT_MIN_SAMPLES {
            Some(distribution_fit(&stats, &system, policy.gamma()).map_err(at)?)
        } else {
            None
        };
        let nf = n as f64;
        let ub = constants
            .as_ref()
            .map(|c| upper_bound(&system, policy, eps, c.n_perp_sq));
        rows.push(SweepRow {
            eps,
            n_lambda: system.arrival().mean(),
            lambda: system.arrival().mean() / nf,
            mean_total: stats.mean_total,
            mean_total_ci: stats.mean_total_ci,
            eps_mean_q_per_server: eps * stats.mean_total / nf,
            eps_mean_q_ci: eps * stats.mean_total_ci / nf,
            lb: lower_bound(&system, eps),
            limit: sandwich_limit(&system),
            ub,
            ub_in_validity: constants
                .as_ref()
                .is_some_and(|c| c.valid && eps <= c.delta),
            o_perp_sq: stats.o_perp_sq_mean,
            o_perp_sq_ci: stats.o_perp_sq_ci,
            o_sq: stats.o_sq_mean,
            o_sq_ci: stats.o_sq_ci,
            fit,
            burn_in,
            stats,
        });
    }
    Ok(SweepReport {
        strictly_majorized,
        constants,
        rows,
    })
}
