use std::f64::consts::E;

use serde::Serialize;

use super::SweepRow;
use crate::error::{Error, Result};
use crate::fvector::FTable;
use crate::model::SystemConfig;
use crate::policy::PolicySpec;

/// Explicit constants of the state-space-collapse bound
/// `E[|O_perp|^2] <= N_perp^2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SscConstants {
    /// Smallest gap between a proper prefix's capacity share and its
    /// dispatch share.
    pub delta_star: f64,
    /// Largest dispatch share outside a proper prefix.
    pub xi_star: f64,
    /// `delta_star |mu|_1 / (2 xi_star)`; the bound holds for `eps <= delta`.
    pub delta: f64,
    pub z_bound: f64,
    pub k1: f64,
    pub k2: f64,
    pub k_total: f64,
    pub eta_step: f64,
    pub rho: f64,
    pub a_level: f64,
    pub eps0: f64,
    pub n_perp_sq: f64,
    /// `rho < 1` and the `N_perp^2` denominator is positive.
    pub valid: bool,
}

/// Evaluates the constants from the f-table, the policy's `T` and `gamma`,
/// and the system's rates, variances and bounds.
///
/// `K_1` depends on the arrival rate; it is evaluated at `n lambda = |mu|_1`,
/// its supremum over the heavy-traffic range, so the result does not depend
/// on `eps`.
pub fn ssc_constants(
    system: &SystemConfig,
    policy: &PolicySpec,
    table: &FTable,
) -> Result<SscConstants> {
    let n = system.n();
    if n < 2 {
        return Err(Error::Unsupported(
            "state-space collapse needs at least two servers".into(),
        ));
    }
    if policy.n() != n || table.n() != n {
        return Err(Error::InvalidConfig(
            "policy, f-table and system differ in size".into(),
        ));
    }
    let mu = system.mu();
    let mu_total = system.mu_total();

    let mut delta_star = f64::INFINITY;
    let mut xi_star = f64::NEG_INFINITY;
    let (mut f_max, mut tau_max) = (0.0f64, 0.0f64);
    for (eta, row) in table.entries()? {
        let (mut share, mut pf) = (0.0, 0.0);
        for l in 0..n - 1 {
            share += mu[eta.at(l)] / mu_total;
            pf += row.f[l];
            delta_star = delta_star.min(share - pf);
            xi_star = xi_star.max(1.0 - pf);
        }
        f_max = row.f.iter().copied().fold(f_max, f64::max);
        tau_max = row.tau_sq.iter().copied().fold(tau_max, f64::max);
    }
    if !(delta_star > 0.0) {
        return Err(Error::NotStrictlyMajorized { delta_star });
    }

    let t = policy.t_cycle() as f64;
    let nf = n as f64;
    let gamma = policy.gamma();
    let g_min = gamma.iter().copied().fold(f64::INFINITY, f64::min);
    let g_max = gamma.iter().copied().fold(0.0, f64::max);
    let g_total: f64 = gamma.iter().sum();
    let mu_max = mu.iter().copied().fold(0.0, f64::max);
    let s_max = system.s_max() as f64;
    let a_max = system.a_max();
    let var_arr = system.arrival().variance();
    let sigma_max = system
        .sigma_sq_service()
        .iter()
        .copied()
        .fold(0.0, f64::max);
    let n_lambda = mu_total;

    let delta = delta_star * mu_total / (2.0 * xi_star);
    let z_bound = 2.0 * t * nf * (a_max + s_max) / g_min.sqrt();
    let bracket = t * t * (n_lambda * f_max + mu_max).powi(2)
        + t * f_max * var_arr
        + t * t * n_lambda * n_lambda * tau_max
        + t * sigma_max;
    let k1 = 2.0 * t * (nf - 1.0) * mu_max * t * s_max / g_min
        + bracket / g_min
        + (nf - 1.0) / g_min * bracket
        + (nf - 1.0) / g_min
            * (t * t * n_lambda * n_lambda * f_max * f_max
                + t * f_max * var_arr
                + t * t * n_lambda * n_lambda * tau_max);
    let k2 = 2.0 * t * t * nf * nf * s_max * s_max / g_total;
    let k_total = k1 + k2;

    let root = (nf * g_max).sqrt();
    let drift = t * xi_star * delta;
    let a_level = k_total * root / drift;
    let eps0 = drift / (2.0 * root);
    let e2 = E - 2.0;
    let eta_step = (1.0 / z_bound)
        .min(drift / (4.0 * root * z_bound * z_bound * e2))
        .min(drift / (k_total * root));
    let rho = 1.0 - eps0 * eta_step + z_bound * z_bound * e2 * eta_step * eta_step;
    let denom = drift * eta_step.powi(3) - 2.0 * root * z_bound * z_bound * e2 * eta_step.powi(4);
    let n_perp_sq = 4.0 * root * E * E / denom;
    Ok(SscConstants {
        delta_star,
        xi_star,
        delta,
        z_bound,
        k1,
        k2,
        k_total,
        eta_step,
        rho,
        a_level,
        eps0,
        n_perp_sq,
        valid: rho < 1.0 && denom > 0.0,
    })
}

/// Empirical collapse check over a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SscCheck {
    /// The policy is not strictly majorized; no collapse is claimed.
    NotApplicable,
    Checked {
        /// Largest over smallest `E[|O_perp|^2]`; at most 2 to pass.
        perp_ratio: f64,
        /// `E[|O|^2]` at the smallest eps over that at the largest.
        o_sq_growth: f64,
        /// `(eps_max / eps_min)^2 / 2`.
        required_growth: f64,
        /// `E[|O_perp|^2] <= N_perp^2` at every eps.
        below_bound: bool,
        passes: bool,
    },
}

/// Collapse shows as a bounded perpendicular component next to a parallel
/// component growing like `1 / eps^2`.
pub fn ssc_empirical_check(
    rows: &[SweepRow],
    constants: Option<&SscConstants>,
) -> Result<SscCheck> {
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let lo = eps.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eps.iter().copied().fold(0.0, f64::max);
    let span = hi / lo;
    if rows.len() < 3 || !(span >= 4.0) {
        return Err(Error::InsufficientSpan {
            count: rows.len(),
            span,
        });
    }
    let Some(constants) = constants else {
        return Ok(SscCheck::NotApplicable);
    };
    let perp: Vec<f64> = rows.iter().map(|r| r.o_perp_sq).collect();
    let p_max = perp.iter().copied().fold(0.0, f64::max);
    let p_min = perp.iter().copied().fold(f64::INFINITY, f64::min);
    let perp_ratio = p_max / p_min;
    let at = |e: f64| rows.iter().find(|r| r.eps == e).unwrap().o_sq;
    let o_sq_growth = at(lo) / at(hi);
    let required_growth = span * span / 2.0;
    let below_bound = perp.iter().all(|&p| p <= constants.n_perp_sq);
    Ok(SscCheck::Checked {
        perp_ratio,
        o_sq_growth,
        required_growth,
        below_bound,
        passes: perp_ratio <= 2.0 && o_sq_growth >= required_growth && below_bound,
    })
}
