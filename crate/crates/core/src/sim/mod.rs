//! Trajectory simulation and heavy-traffic verification.

mod fit;
mod ssc;
mod steady;
mod sweep;

pub use fit::{distribution_fit, DistributionFit, FIT_MIN_SAMPLES};
pub use ssc::{ssc_constants, ssc_empirical_check, SscCheck, SscConstants};
pub use steady::{run_steady_state, RunConfig, SimStats};
pub use sweep::{
    heavy_traffic_sweep, lower_bound, sandwich_limit, upper_bound, SweepConfig, SweepReport,
    SweepRow,
};

use crate::error::{Error, Result};
use crate::model::{apply_slot, tick, QueueState, SlotOutcome, SystemConfig};
use crate::policy::{plan_into, sort_into, DecisionTables, PolicyKind, PolicySpec, PolicyState};
use crate::rng::TrajectoryStreams;

/// One trajectory of the sampled chain: queues, RNG streams and policy state.
///
/// At every cycle boundary the queues are sorted and a plan for the next
/// `T` slots is drawn; each slot then applies the queue recursion.
pub struct Simulator<'a> {
    system: &'a SystemConfig,
    spec: &'a PolicySpec,
    tables: DecisionTables,
    state: QueueState,
    streams: TrajectoryStreams,
    policy_state: PolicyState,
    keys: Vec<f64>,
    order: Vec<usize>,
    scratch: Vec<usize>,
    plan: Vec<usize>,
    services: Vec<u64>,
    unused: Vec<u64>,
    guard: u64,
}

impl<'a> Simulator<'a> {
    /// Starts from empty queues with streams keyed by `(system.seed(), job)`.
    pub fn new(system: &'a SystemConfig, spec: &'a PolicySpec, job: u64) -> Result<Self> {
        let n = system.n();
        if spec.n() != n {
            return Err(Error::InvalidConfig(format!(
                "policy is for {} servers, system has {n}",
                spec.n()
            )));
        }
        if matches!(spec.kind(), PolicyKind::Custom(_)) {
            return Err(Error::Unsupported(
                "custom policies are defined by an f-table and cannot be simulated".into(),
            ));
        }
        Ok(Simulator {
            system,
            spec,
            tables: DecisionTables::new(system.mu()),
            state: QueueState::empty(n, spec.t_cycle()),
            streams: TrajectoryStreams::new(system.seed(), job),
            policy_state: PolicyState::default(),
            keys: Vec::with_capacity(n),
            order: Vec::with_capacity(n),
            scratch: Vec::with_capacity(n),
            plan: Vec::with_capacity(spec.t_cycle()),
            services: vec![0; n],
            unused: vec![0; n],
            guard: u64::MAX,
        })
    }

    /// Fails the run once any queue would exceed `guard` jobs.
    pub fn with_guard(mut self, guard: u64) -> Self {
        self.guard = guard;
        self
    }

    pub fn state(&self) -> &QueueState {
        &self.state
    }

    /// Sort permutation of the current cycle (0-based servers, longest first).
    pub fn current_order(&self) -> &[usize] {
        &self.order
    }

    fn begin_cycle(&mut self) -> Result<()> {
        sort_into(
            &self.state.q,
            self.spec.gamma(),
            &mut self.keys,
            &mut self.order,
            &mut self.streams.sorting,
        );
        debug_assert!(self
            .order
            .windows(2)
            .all(|w| self.keys[w[0]] >= self.keys[w[1]]));
        plan_into(
            self.spec,
            &self.order,
            &self.tables,
            &mut self.policy_state,
            &mut self.scratch,
            &mut self.plan,
            &mut self.streams.decisions,
        )
    }

    fn slot(&mut self) -> Result<(u64, usize)> {
        if self.state.cycle_phase == 0 {
            self.begin_cycle()?;
        }
        let target = self.plan[self.state.cycle_phase];
        let arrivals = self.system.arrival().sample(&mut self.streams.arrivals);
        for (s, law) in self.services.iter_mut().zip(self.system.services()) {
            *s = law.sample(&mut self.streams.services);
        }
        let guard = self.guard;
        apply_slot(
            &mut self.state.q,
            arrivals,
            target,
            &self.services,
            &mut self.unused,
            guard,
        )
        .map_err(|server| Error::QueueOverflow {
            server,
            slot: self.state.slot,
            guard,
        })?;
        tick(&mut self.state);
        Ok((arrivals, target))
    }

    /// Advances one slot.
    #[inline]
    pub fn step(&mut self) -> Result<()> {
        self.slot().map(|_| ())
    }

    /// Advances one slot and reports its arrivals, target, services and
    /// unused service.
    pub fn step_with_outcome(&mut self) -> Result<SlotOutcome> {
        let (arrivals, dispatch) = self.slot()?;
        Ok(SlotOutcome {
            arrivals,
            dispatch,
            services: self.services.clone(),
            unused: self.unused.clone(),
        })
    }

    /// Runs `slots` slots, calling `at_boundary` with the state at every
    /// cycle boundary `t = kT` before that cycle's decisions are made.
    pub fn run(&mut self, slots: u64, mut at_boundary: impl FnMut(&QueueState)) -> Result<()> {
        for _ in 0..slots {
            if self.state.cycle_phase == 0 {
                at_boundary(&self.state);
            }
            self.slot()?;
        }
        Ok(())
    }
}

/// Splits the analysis vector `O_l = q_l / sqrt(gamma_l)` into its
/// projection onto `c = (sqrt(gamma_l))` and the orthogonal remainder.
pub fn decompose(q: &[u64], gamma: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(
        q.len(),
        gamma.len(),
        "queue and scaling vectors differ in length"
    );
    let scale = q.iter().sum::<u64>() as f64 / gamma.iter().sum::<f64>();
    let par: Vec<f64> = gamma.iter().map(|g| scale * g.sqrt()).collect();
    let perp = q
        .iter()
        .zip(gamma)
        .zip(&par)
        .map(|((&ql, g), p)| ql as f64 / g.sqrt() - p)
        .collect();
    (par, perp)
}
