//! Discrete-time parallel-queue dynamics.
//!
//! All `A(t)` jobs arriving in slot `t` join a single queue `I*(t)`, then every
//! server `l` serves up to `S_l(t)` jobs:
//!
//! ```text
//! Q(t+1) = [Q(t) + A(t) Z(t) - S(t)]^+ = Q(t) + A(t) Z(t) - S(t) + U(t)
//! ```
//!
//! where `U(t)` is the unused service. Queue lengths are 64-bit integers and
//! every update is exact.

use rand::distr::{Bernoulli, Distribution};
use rand::Rng;
use rand_distr::Binomial;
use statrs::distribution::{Binomial as BinomialPmf, Discrete};

use crate::error::{Error, Result};
use crate::rng::TrajectoryStreams;

/// Tolerance for probability vectors summing to one and for moment matching.
pub const PMF_TOLERANCE: f64 = 1e-12;

/// A finite law on nonnegative integers.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    values: Vec<u64>,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl Pmf {
    /// Builds a pmf from `(value, probability)` pairs. Duplicate values are
    /// merged and zero-probability atoms dropped.
    pub fn new(pairs: &[(u64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidConfig("empty pmf".into()));
        }
        let mut sorted: Vec<(u64, f64)> = pairs.to_vec();
        sorted.sort_by_key(|&(v, _)| v);
        let mut values: Vec<u64> = Vec::new();
        let mut probs: Vec<f64> = Vec::new();
        for (v, p) in sorted {
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "pmf probability {p} at value {v}"
                )));
            }
            if values.last() == Some(&v) {
                *probs.last_mut().unwrap() += p;
            } else {
                values.push(v);
                probs.push(p);
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PMF_TOLERANCE {
            return Err(Error::InvalidConfig(format!(
                "pmf sums to {total}, expected 1"
            )));
        }
        let (values, probs): (Vec<u64>, Vec<f64>) = values
            .into_iter()
            .zip(probs)
            .filter(|&(_, p)| p > 0.0)
            .unzip();
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Pmf { values, probs, cdf })
    }

    pub fn atoms(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.values.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.atoms().map(|(v, p)| v as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms().map(|(v, p)| (v as f64 - m).powi(2) * p).sum()
    }

    pub fn max_value(&self) -> u64 {
        *self.values.last().unwrap()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        let idx = self
            .cdf
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.values.len() - 1);
        self.values[idx]
    }
}

/// Law of the total number of arrivals per slot, `A(1)`.
#[derive(Debug, Clone)]
pub enum ArrivalLaw {
    Deterministic {
        value: u64,
    },
    TwoPoint {
        lo: u64,
        hi: u64,
        p_hi: f64,
        coin: Bernoulli,
    },
    Binomial {
        trials: u64,
        p: f64,
        dist: Binomial,
    },
    Pmf(Pmf),
}

impl PartialEq for ArrivalLaw {
    fn eq(&self, other: &Self) -> bool {
        use ArrivalLaw::*;
        match (self, other) {
            (Deterministic { value: a }, Deterministic { value: b }) => a == b,
            (
                TwoPoint { lo, hi, p_hi, .. },
                TwoPoint {
                    lo: l2,
                    hi: h2,
                    p_hi: p2,
                    ..
                },
            ) => lo == l2 && hi == h2 && p_hi == p2,
            (
                Binomial { trials, p, .. },
                Binomial {
                    trials: t2, p: p2, ..
                },
            ) => trials == t2 && p == p2,
            (Pmf(a), Pmf(b)) => a == b,
            _ => false,
        }
    }
}

impl ArrivalLaw {
    pub fn deterministic(value: u64) -> Self {
        ArrivalLaw::Deterministic { value }
    }

    pub fn two_point(lo: u64, hi: u64, p_hi: f64) -> Result<Self> {
        if lo >= hi {
            return Err(Error::InvalidConfig(format!(
                "two_point needs lo < hi, got {lo} >= {hi}"
            )));
        }
        let coin = Bernoulli::new(p_hi)
            .map_err(|_| Error::InvalidConfig(format!("two_point p_hi = {p_hi} not in [0, 1]")))?;
        Ok(ArrivalLaw::TwoPoint { lo, hi, p_hi, coin })
    }

    pub fn binomial(trials: u64, p: f64) -> Result<Self> {
        let dist = Binomial::new(trials, p)
            .map_err(|e| Error::InvalidConfig(format!("binomial({trials}, {p}): {e}")))?;
        Ok(ArrivalLaw::Binomial { trials, p, dist })
    }

    pub fn pmf(pairs: &[(u64, f64)]) -> Result<Self> {
        Ok(ArrivalLaw::Pmf(Pmf::new(pairs)?))
    }

    /// Mean `n lambda`.
    pub fn mean(&self) -> f64 {
        match self {
            ArrivalLaw::Deterministic { value } => *value as f64,
            ArrivalLaw::TwoPoint { lo, hi, p_hi, .. } => {
                *lo as f64 + p_hi * (*hi as f64 - *lo as f64)
            }
            ArrivalLaw::Binomial { trials, p, .. } => *trials as f64 * p,
            ArrivalLaw::Pmf(pmf) => pmf.mean(),
        }
    }

    /// Variance `n sigma_lambda^2`.
    pub fn variance(&self) -> f64 {
        match self {
            ArrivalLaw::Deterministic { .. } => 0.0,
            ArrivalLaw::TwoPoint { lo, hi, p_hi, .. } => {
                p_hi * (1.0 - p_hi) * (*hi as f64 - *lo as f64).powi(2)
            }
            ArrivalLaw::Binomial { trials, p, .. } => *trials as f64 * p * (1.0 - p),
            ArrivalLaw::Pmf(pmf) => pmf.variance(),
        }
    }

    /// Largest value in the support.
    pub fn support_max(&self) -> u64 {
        match self {
            ArrivalLaw::Deterministic { value } => *value,
            ArrivalLaw::TwoPoint { hi, .. } => *hi,
            ArrivalLaw::Binomial { trials, .. } => *trials,
            ArrivalLaw::Pmf(pmf) => pmf.max_value(),
        }
    }

    /// The full pmf as `(value, probability)` pairs.
    pub fn to_pairs(&self) -> Vec<(u64, f64)> {
        match self {
            ArrivalLaw::Deterministic { value } => vec![(*value, 1.0)],
            ArrivalLaw::TwoPoint { lo, hi, p_hi, .. } => vec![(*lo, 1.0 - p_hi), (*hi, *p_hi)],
            ArrivalLaw::Binomial { trials, p, .. } => {
                let b = BinomialPmf::new(*p, *trials).expect("validated at construction");
                (0..=*trials).map(|k| (k, b.pmf(k))).collect()
            }
            ArrivalLaw::Pmf(pmf) => pmf.atoms().collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            ArrivalLaw::Deterministic { value } => *value,
            ArrivalLaw::TwoPoint { lo, hi, coin, .. } => {
                if coin.sample(rng) {
                    *hi
                } else {
                    *lo
                }
            }
            ArrivalLaw::Binomial { dist, .. } => dist.sample(rng),
            ArrivalLaw::Pmf(pmf) => pmf.sample(rng),
        }
    }
}

/// Builds an integer-valued arrival law with exactly the requested mean and
/// variance and support inside `[0, a_max_total]`.
///
/// The law is searched on lattices `{lo, lo + k, lo + k + 1}` for
/// `lo = 0, 1, ..., floor(mean)`. With `m = mean - lo` and second moment
/// `s = variance + m^2` of the shifted variable, `k = floor(s / m)` is the
/// only spacing for which a nonnegative solution can exist, and then
///
/// ```text
/// p(lo + k + 1) = (s - k m) / (k + 1)
/// p(lo + k)     = (m - (k + 1) p(lo + k + 1)) / k
/// p(lo)         = 1 - p(lo + k) - p(lo + k + 1)
/// ```
///
/// The first `lo` giving nonnegative masses within the bound is used. When
/// one of the masses vanishes the result is a genuine two-point (or
/// deterministic) law; otherwise a three-atom pmf is returned.
pub fn two_point_for_moments(mean: f64, variance: f64, a_max_total: u64) -> Result<ArrivalLaw> {
    let infeasible = || Error::InfeasibleMoments {
        mean,
        variance,
        a_max_total,
    };
    if !(mean.is_finite() && variance.is_finite()) || mean < 0.0 || variance < 0.0 {
        return Err(infeasible());
    }
    // Snap masses this close to zero; they are rounding residue.
    const SNAP: f64 = 1e-13;
    let top = mean.floor() as u64;
    for lo in 0..=top {
        let m = mean - lo as f64;
        if m <= SNAP {
            if variance <= SNAP && lo <= a_max_total {
                return Ok(ArrivalLaw::deterministic(lo));
            }
            continue;
        }
        let s = variance + m * m;
        let k = (s / m).floor().max(1.0);
        let mut p_far = (s - k * m) / (k + 1.0);
        let mut p_near = (m - (k + 1.0) * p_far) / k;
        if p_far.abs() < SNAP {
            p_far = 0.0;
        }
        if p_near.abs() < SNAP {
            p_near = 0.0;
        }
        let mut p_lo = 1.0 - p_near - p_far;
        if p_lo.abs() < SNAP {
            p_lo = 0.0;
        }
        if p_far < 0.0 || p_near < 0.0 || p_lo < 0.0 {
            continue;
        }
        let k = k as u64;
        let near = lo + k;
        let far = near + 1;
        let needed_max = if p_far > 0.0 { far } else { near };
        if needed_max > a_max_total {
            continue;
        }
        let law = match (p_lo > 0.0, p_near > 0.0, p_far > 0.0) {
            (false, true, false) => ArrivalLaw::deterministic(near),
            (true, true, false) => ArrivalLaw::two_point(lo, near, p_near)?,
            (true, false, true) => ArrivalLaw::two_point(lo, far, p_far)?,
            (false, true, true) => ArrivalLaw::two_point(near, far, p_far)?,
            _ => ArrivalLaw::pmf(&[(lo, p_lo), (near, p_near), (far, p_far)])?,
        };
        return Ok(law);
    }
    Err(infeasible())
}

/// Law of the potential service `S_l(1)` of one server.
#[derive(Debug, Clone)]
pub enum ServiceLaw {
    /// `S = s_max` with probability `p`, else 0.
    BernoulliBatch {
        s_max: u64,
        p: f64,
        coin: Bernoulli,
    },
    Pmf(Pmf),
}

impl PartialEq for ServiceLaw {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (
                ServiceLaw::BernoulliBatch { s_max, p, .. },
                ServiceLaw::BernoulliBatch {
                    s_max: s2, p: p2, ..
                },
            ) => s_max == s2 && p == p2,
            (ServiceLaw::Pmf(a), ServiceLaw::Pmf(b)) => a == b,
            _ => false,
        }
    }
}

impl ServiceLaw {
    /// Bernoulli-batch law with mean `mu`.
    pub fn bernoulli_batch(mu: f64, s_max: u64) -> Result<Self> {
        if s_max == 0 || !(mu > 0.0 && mu <= s_max as f64) {
            return Err(Error::InvalidConfig(format!(
                "service rate {mu} must lie in (0, s_max = {s_max}]"
            )));
        }
        let p = mu / s_max as f64;
        let coin = Bernoulli::new(p).expect("p in (0, 1]");
        Ok(ServiceLaw::BernoulliBatch { s_max, p, coin })
    }

    /// Explicit law from `(value, probability)` pairs.
    pub fn pmf(pairs: &[(u64, f64)]) -> Result<Self> {
        Ok(ServiceLaw::Pmf(Pmf::new(pairs)?))
    }

    pub fn mean(&self) -> f64 {
        match self {
            ServiceLaw::BernoulliBatch { s_max, p, .. } => *s_max as f64 * p,
            ServiceLaw::Pmf(pmf) => pmf.mean(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            ServiceLaw::BernoulliBatch { s_max, p, .. } => (*s_max as f64).powi(2) * p * (1.0 - p),
            ServiceLaw::Pmf(pmf) => pmf.variance(),
        }
    }

    pub fn max_value(&self) -> u64 {
        match self {
            ServiceLaw::BernoulliBatch { s_max, .. } => *s_max,
            ServiceLaw::Pmf(pmf) => pmf.max_value(),
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            ServiceLaw::BernoulliBatch { s_max, coin, .. } => {
                if coin.sample(rng) {
                    *s_max
                } else {
                    0
                }
            }
            ServiceLaw::Pmf(pmf) => pmf.sample(rng),
        }
    }
}

/// Server count, service laws and arrival law of one system.
///
/// Servers are stored in nondecreasing order of service rate;
/// `original_index()[l]` is the configuration index of sorted server `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    mu: Vec<f64>,
    services: Vec<ServiceLaw>,
    sigma_sq_service: Vec<f64>,
    s_max: u64,
    arrival: ArrivalLaw,
    a_max: f64,
    seed: u64,
    original_index: Vec<usize>,
}

impl SystemConfig {
    /// System with Bernoulli-batch services of rates `mu`.
    pub fn bernoulli(mu: &[f64], s_max: u64, arrival: ArrivalLaw, seed: u64) -> Result<Self> {
        let services = mu
            .iter()
            .map(|&m| ServiceLaw::bernoulli_batch(m, s_max))
            .collect::<Result<Vec<_>>>()?;
        Self::with_services(services, s_max, arrival, seed)
    }

    /// System with explicit service laws, each bounded by `s_max`.
    pub fn with_services(
        services: Vec<ServiceLaw>,
        s_max: u64,
        arrival: ArrivalLaw,
        seed: u64,
    ) -> Result<Self> {
        if services.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one server is required".into(),
            ));
        }
        for (l, s) in services.iter().enumerate() {
            if s.max_value() > s_max {
                return Err(Error::InvalidConfig(format!(
                    "server {} can serve {} jobs, above s_max = {s_max}",
                    l + 1,
                    s.max_value()
                )));
            }
            if s.mean() <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "server {} has zero service rate",
                    l + 1
                )));
            }
        }
        let mut order: Vec<usize> = (0..services.len()).collect();
        order.sort_by(|&a, &b| services[a].mean().total_cmp(&services[b].mean()));
        let services: Vec<ServiceLaw> = order.iter().map(|&i| services[i].clone()).collect();
        let mu = services.iter().map(ServiceLaw::mean).collect();
        let sigma_sq_service = services.iter().map(ServiceLaw::variance).collect();
        let n = services.len();
        let a_max = arrival.support_max() as f64 / n as f64;
        Ok(SystemConfig {
            mu,
            services,
            sigma_sq_service,
            s_max,
            arrival,
            a_max,
            seed,
            original_index: order,
        })
    }

    /// Same servers with a different arrival law; the per-server arrival
    /// bound is re-derived from the new support.
    pub fn with_arrival(&self, arrival: ArrivalLaw) -> Self {
        let a_max = arrival.support_max() as f64 / self.n() as f64;
        SystemConfig {
            arrival,
            a_max,
            ..self.clone()
        }
    }

    /// Overrides the per-server arrival bound `A_max`; it must dominate the
    /// support of the arrival law (`A(1) <= n A_max`).
    pub fn with_a_max(mut self, a_max: f64) -> Result<Self> {
        if a_max * (self.n() as f64) < self.arrival.support_max() as f64 {
            return Err(Error::InvalidConfig(format!(
                "a_max = {a_max} is below the arrival support maximum {} / n",
                self.arrival.support_max()
            )));
        }
        self.a_max = a_max;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
    pub fn mu_total(&self) -> f64 {
        self.mu.iter().sum()
    }
    pub fn services(&self) -> &[ServiceLaw] {
        &self.services
    }
    pub fn sigma_sq_service(&self) -> &[f64] {
        &self.sigma_sq_service
    }
    pub fn sigma_sq_service_total(&self) -> f64 {
        self.sigma_sq_service.iter().sum()
    }
    pub fn s_max(&self) -> u64 {
        self.s_max
    }
    pub fn arrival(&self) -> &ArrivalLaw {
        &self.arrival
    }
    /// Per-server arrival bound `A_max`.
    pub fn a_max(&self) -> f64 {
        self.a_max
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn original_index(&self) -> &[usize] {
        &self.original_index
    }

    /// Capacity slack `sum(mu) - n lambda`.
    pub fn epsilon(&self) -> f64 {
        self.mu_total() - self.arrival.mean()
    }
}

/// Queue lengths at the start of a slot plus the slot and cycle counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueState {
    pub q: Vec<u64>,
    pub slot: u64,
    pub cycle_phase: usize,
    t_cycle: usize,
}

impl QueueState {
    pub fn empty(n: usize, t_cycle: usize) -> Self {
        assert!(t_cycle >= 1, "cycle length must be positive");
        QueueState {
            q: vec![0; n],
            slot: 0,
            cycle_phase: 0,
            t_cycle,
        }
    }

    pub fn with_queues(q: Vec<u64>, t_cycle: usize) -> Self {
        QueueState {
            q,
            ..Self::empty(0, t_cycle)
        }
    }

    pub fn t_cycle(&self) -> usize {
        self.t_cycle
    }

    pub fn total(&self) -> u64 {
        self.q.iter().sum()
    }

    pub fn at_cycle_boundary(&self) -> bool {
        self.cycle_phase == 0
    }

    fn tick(&mut self) {
        self.slot += 1;
        self.cycle_phase = (self.cycle_phase + 1) % self.t_cycle;
    }
}

/// Everything that happened in one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotOutcome {
    pub arrivals: u64,
    /// Index `I*(t)` of the queue receiving the arrivals.
    pub dispatch: usize,
    pub services: Vec<u64>,
    pub unused: Vec<u64>,
}

impl SlotOutcome {
    /// The dispatch action as the unit vector `Z(t)`.
    pub fn dispatch_vector(&self) -> Vec<u8> {
        unit_vector(self.services.len(), self.dispatch)
    }
}

pub fn unit_vector(n: usize, index: usize) -> Vec<u8> {
    let mut z = vec![0; n];
    z[index] = 1;
    z
}

/// Applies one slot of the queue recursion in place, writing the unused
/// service into `unused`. Fails if a queue would exceed `guard`.
#[inline]
pub fn apply_slot(
    q: &mut [u64],
    arrivals: u64,
    dispatch: usize,
    services: &[u64],
    unused: &mut [u64],
    guard: u64,
) -> std::result::Result<(), usize> {
    for l in 0..q.len() {
        let mut x = q[l];
        if l == dispatch {
            x = match x.checked_add(arrivals) {
                Some(v) if v <= guard => v,
                _ => return Err(l),
            };
        }
        let s = services[l];
        if x >= s {
            q[l] = x - s;
            unused[l] = 0;
        } else {
            q[l] = 0;
            unused[l] = s - x;
        }
    }
    Ok(())
}

/// Advances `state` by one slot, drawing `A(t)` and `S(t)` from their
/// streams, and returns what happened.
pub fn step_slot(
    state: &mut QueueState,
    system: &SystemConfig,
    dispatch: usize,
    streams: &mut TrajectoryStreams,
) -> Result<SlotOutcome> {
    step_slot_guarded(state, system, dispatch, streams, u64::MAX)
}

pub fn step_slot_guarded(
    state: &mut QueueState,
    system: &SystemConfig,
    dispatch: usize,
    streams: &mut TrajectoryStreams,
    guard: u64,
) -> Result<SlotOutcome> {
    let n = state.q.len();
    assert!(dispatch < n, "dispatch target {dispatch} out of range");
    let arrivals = sample_arrival(system.arrival(), streams);
    let services: Vec<u64> = system
        .services()
        .iter()
        .map(|s| s.sample(&mut streams.services))
        .collect();
    let mut unused = vec![0; n];
    apply_slot(
        &mut state.q,
        arrivals,
        dispatch,
        &services,
        &mut unused,
        guard,
    )
    .map_err(|server| Error::QueueOverflow {
        server,
        slot: state.slot,
        guard,
    })?;
    state.tick();
    Ok(SlotOutcome {
        arrivals,
        dispatch,
        services,
        unused,
    })
}

/// Advances the slot and phase counters after an in-place [`apply_slot`].
pub(crate) fn tick(state: &mut QueueState) {
    state.tick();
}

pub fn sample_arrival(law: &ArrivalLaw, streams: &mut TrajectoryStreams) -> u64 {
    law.sample(&mut streams.arrivals)
}
