use rayon::prelude::*;
use serde::Serialize;

use super::Simulator;
use crate::error::{Error, Result};
use crate::model::SystemConfig;
use crate::policy::PolicySpec;
use crate::rng::job_id;
use crate::stats::{batch_means_ci, BatchAccumulator};

/// Length and replication count of a steady-state run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Slots per replication, burn-in included.
    pub slots: u64,
    pub burn_in: u64,
    pub replications: u32,
    /// A queue exceeding this many jobs aborts the run as unstable.
    pub queue_guard: u64,
    /// Grid index mixed into each replication's stream key, so distinct
    /// sweep points never share randomness.
    pub grid_point: u32,
}

impl RunConfig {
    pub fn new(slots: u64, burn_in: u64, replications: u32) -> Self {
        RunConfig {
            slots,
            burn_in,
            replications,
            queue_guard: u64::MAX,
            grid_point: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("need at least one replication".into()));
        }
        if self.burn_in >= self.slots {
            return Err(Error::InvalidConfig(format!(
                "burn-in ({}) must be shorter than the run ({} slots)",
                self.burn_in, self.slots
            )));
        }
        Ok(())
    }
}

/// Steady-state estimates over post-burn-in cycle-boundary samples.
///
/// Vectors are indexed in the system's server order (nondecreasing rate).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    pub samples: u64,
    pub replications: u32,
    /// Post-burn-in slots summed over replications.
    pub effective_slots: u64,
    pub epsilon: f64,
    pub mean_q: Vec<f64>,
    pub mean_q_ci: Vec<f64>,
    pub mean_total: f64,
    pub mean_total_ci: f64,
    pub o_perp_sq_mean: f64,
    pub o_perp_sq_ci: f64,
    pub o_sq_mean: f64,
    pub o_sq_ci: f64,
    /// Mean of `q_l / |q|_1` over samples with a nonempty system.
    pub per_queue_share: Vec<f64>,
    /// `total_histogram[k]` counts samples with `|q|_1 = k`.
    #[serde(skip)]
    pub total_histogram: Vec<u64>,
    /// Largest relative gap in `|O|^2 = |O_par|^2 + |O_perp|^2` seen.
    pub max_pythagoras_residual: f64,
}

impl SimStats {
    /// Distinct values of `eps |q|_1` with their counts, ascending.
    pub fn eps_total_samples(&self) -> Vec<(f64, u64)> {
        self.total_histogram
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (self.epsilon * k as f64, c))
            .collect()
    }
}

struct RepAccum {
    samples: u64,
    q: Vec<BatchAccumulator>,
    total: BatchAccumulator,
    o_perp_sq: BatchAccumulator,
    o_sq: BatchAccumulator,
    sums_q: Vec<f64>,
    sum_total: f64,
    sum_perp: f64,
    sum_o: f64,
    share_sums: Vec<f64>,
    share_count: u64,
    histogram: Vec<u64>,
    max_residual: f64,
}

impl RepAccum {
    fn new(n: usize, expected: u64) -> Self {
        RepAccum {
            samples: 0,
            q: vec![BatchAccumulator::new(expected); n],
            total: BatchAccumulator::new(expected),
            o_perp_sq: BatchAccumulator::new(expected),
            o_sq: BatchAccumulator::new(expected),
            sums_q: vec![0.0; n],
            sum_total: 0.0,
            sum_perp: 0.0,
            sum_o: 0.0,
            share_sums: vec![0.0; n],
            share_count: 0,
            histogram: Vec::new(),
            max_residual: 0.0,
        }
    }

    #[inline]
    fn record(&mut self, q: &[u64], sqrt_gamma: &[f64], gamma_total: f64) {
        let batch = self.total.slot();
        let total: u64 = q.iter().sum();
        let tf = total as f64;
        let scale = tf / gamma_total;
        let (mut o_sq, mut perp_sq) = (0.0, 0.0);
        for (l, (&ql, &sg)) in q.iter().zip(sqrt_gamma).enumerate() {
            let x = ql as f64;
            let o = x / sg;
            o_sq += o * o;
            let d = o - scale * sg;
            perp_sq += d * d;
            self.q[l].push(batch, x);
            self.sums_q[l] += x;
            if total > 0 {
                self.share_sums[l] += x / tf;
            }
        }
        let par_sq = tf * tf / gamma_total;
        let residual = (o_sq - par_sq - perp_sq).abs() / o_sq.max(1.0);
        self.max_residual = self.max_residual.max(residual);
        if total > 0 {
            self.share_count += 1;
        }
        self.total.push(batch, tf);
        self.o_perp_sq.push(batch, perp_sq);
        self.o_sq.push(batch, o_sq);
        self.sum_total += tf;
        self.sum_perp += perp_sq;
        self.sum_o += o_sq;
        let k = total as usize;
        if k >= self.histogram.len() {
            self.histogram.resize(k + 1, 0);
        }
        self.histogram[k] += 1;
        self.samples += 1;
        for acc in self.q.iter_mut() {
            acc.advance();
        }
        self.total.advance();
        self.o_perp_sq.advance();
        self.o_sq.advance();
    }
}

fn boundary_count(from: u64, to: u64, t: u64) -> u64 {
    // Multiples of t in [from, to).
    to.div_ceil(t) - from.div_ceil(t)
}

fn run_replication(
    system: &SystemConfig,
    policy: &PolicySpec,
    cfg: &RunConfig,
    replication: u32,
) -> Result<RepAccum> {
    let n = system.n();
    let t = policy.t_cycle() as u64;
    let gamma = policy.gamma();
    let sqrt_gamma: Vec<f64> = gamma.iter().map(|g| g.sqrt()).collect();
    let gamma_total: f64 = gamma.iter().sum();
    let mut sim = Simulator::new(system, policy, job_id(cfg.grid_point, replication))?
        .with_guard(cfg.queue_guard);
    sim.run(cfg.burn_in, |_| {})?;
    let mut acc = RepAccum::new(n, boundary_count(cfg.burn_in, cfg.slots, t));
    sim.run(cfg.slots - cfg.burn_in, |state| {
        acc.record(&state.q, &sqrt_gamma, gamma_total)
    })?;
    Ok(acc)
}

/// Simulates `cfg.replications` independent trajectories from empty queues
/// and estimates steady-state moments from their cycle-boundary samples.
///
/// Confidence half-widths pool 32 batch means per replication. The arrival
/// rate should lie inside the policy's stability region; an unstable run
/// ends in [`Error::QueueOverflow`] once the guard is reached.
pub fn run_steady_state(
    system: &SystemConfig,
    policy: &PolicySpec,
    cfg: &RunConfig,
) -> Result<SimStats> {
    cfg.validate()?;
    let reps = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(system, policy, cfg, r))
        .collect::<Result<Vec<_>>>()?;

    let n = system.n();
    let samples: u64 = reps.iter().map(|r| r.samples).sum();
    if samples == 0 {
        return Err(Error::InsufficientSamples { got: 0, need: 1 });
    }
    let s = samples as f64;
    let ci = |pick: &dyn Fn(&RepAccum) -> &BatchAccumulator| {
        let means: Vec<f64> = reps.iter().flat_map(|r| pick(r).batch_means()).collect();
        batch_means_ci(&means).1
    };
    let mut histogram: Vec<u64> = Vec::new();
    for r in &reps {
        if r.histogram.len() > histogram.len() {
            histogram.resize(r.histogram.len(), 0);
        }
        for (h, c) in histogram.iter_mut().zip(&r.histogram) {
            *h += c;
        }
    }
    let share_count: u64 = reps.iter().map(|r| r.share_count).sum();
    Ok(SimStats {
        samples,
        replications: cfg.replications,
        effective_slots: (cfg.slots - cfg.burn_in) * cfg.replications as u64,
        epsilon: system.epsilon(),
        mean_q: (0..n)
            .map(|l| reps.iter().map(|r| r.sums_q[l]).sum::<f64>() / s)
            .collect(),
        mean_q_ci: (0..n).map(|l| ci(&|r: &RepAccum| &r.q[l])).collect(),
        mean_total: reps.iter().map(|r| r.sum_total).sum::<f64>() / s,
        mean_total_ci: ci(&|r| &r.total),
        o_perp_sq_mean: reps.iter().map(|r| r.sum_perp).sum::<f64>() / s,
        o_perp_sq_ci: ci(&|r| &r.o_perp_sq),
        o_sq_mean: reps.iter().map(|r| r.sum_o).sum::<f64>() / s,
        o_sq_ci: ci(&|r| &r.o_sq),
        per_queue_share: (0..n)
            .map(|l| {
                if share_count == 0 {
                    f64::NAN
                } else {
                    reps.iter().map(|r| r.share_sums[l]).sum::<f64>() / share_count as f64
                }
            })
            .collect(),
        total_histogram: histogram,
        max_pythagoras_residual: reps.iter().map(|r| r.max_residual).fold(0.0, f64::max),
    })
}
