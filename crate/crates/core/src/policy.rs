//! The dispatching framework: a cycle length `T`, a scaling vector `gamma`,
//! a randomized sorting function and a decision function.
//!
//! At each cycle boundary `kT` the queues are sampled, scaled by `gamma` and
//! sorted longest-first into a permutation `eta_k`; the decision function then
//! fixes the dispatch target of each of the next `T` slots from
//! `(eta_k, mu, W_k)`.

use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_pcg::Pcg64Mcg;

use crate::error::{Error, Result};
use crate::fvector::FTable;
use crate::perm::Permutation;

/// Relative tolerance under which two scaled queue lengths count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    Rand,
    WeightedRand,
    RoundRobin,
    Jsq,
    Pod {
        d: usize,
    },
    Jsed,
    /// A policy known only through its f-table; analysable, not simulable.
    Custom(Arc<FTable>),
}

impl PolicyKind {
    pub fn name(&self) -> String {
        match self {
            PolicyKind::Rand => "rand".into(),
            PolicyKind::WeightedRand => "weighted_rand".into(),
            PolicyKind::RoundRobin => "round_robin".into(),
            PolicyKind::Jsq => "jsq".into(),
            PolicyKind::Pod { d } => format!("pod(d={d})"),
            PolicyKind::Jsed => "jsed".into(),
            PolicyKind::Custom(_) => "custom".into(),
        }
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self, PolicyKind::Custom(_))
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// The `(T, gamma, L, Y)` tuple of one policy. Tie-breaking is always
/// uniformly random within tied blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    t_cycle: usize,
    gamma: Vec<f64>,
    kind: PolicyKind,
}

impl PolicySpec {
    /// Built-in policy with its standard cycle length and scaling: `T = n`
    /// for round robin and 1 otherwise; `gamma = mu` for JSED, all ones
    /// otherwise.
    pub fn builtin(kind: PolicyKind, mu: &[f64]) -> Result<Self> {
        let n = mu.len();
        let t_cycle = if kind == PolicyKind::RoundRobin { n } else { 1 };
        let gamma = if kind == PolicyKind::Jsed {
            mu.to_vec()
        } else {
            vec![1.0; n]
        };
        Self::new(kind, t_cycle, gamma)
    }

    pub fn new(kind: PolicyKind, t_cycle: usize, gamma: Vec<f64>) -> Result<Self> {
        let n = gamma.len();
        if n == 0 {
            return Err(Error::InvalidConfig(
                "policy needs at least one server".into(),
            ));
        }
        if t_cycle == 0 {
            return Err(Error::InvalidConfig("cycle length T must be >= 1".into()));
        }
        if let Some(g) = gamma.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "scaling entries must be positive, got {g}"
            )));
        }
        match &kind {
            PolicyKind::Pod { d } if *d == 0 || *d > n => {
                return Err(Error::InvalidConfig(format!(
                    "pod needs 1 <= d <= n = {n}, got {d}"
                )));
            }
            PolicyKind::RoundRobin if t_cycle != n => {
                return Err(Error::InvalidConfig(format!(
                    "round robin needs T = n = {n}, got T = {t_cycle}"
                )));
            }
            PolicyKind::Custom(table) if table.n() != n => {
                return Err(Error::InvalidConfig(format!(
                    "custom f-table has n = {}, system has n = {n}",
                    table.n()
                )));
            }
            _ => {}
        }
        Ok(PolicySpec {
            t_cycle,
            gamma,
            kind,
        })
    }

    pub fn n(&self) -> usize {
        self.gamma.len()
    }
    pub fn t_cycle(&self) -> usize {
        self.t_cycle
    }
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }
    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }
    pub fn name(&self) -> String {
        self.kind.name()
    }
}

/// Sampled scaled queue lengths and the longest-first order they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct SortResult {
    pub eta: Permutation,
    pub sort_keys: Vec<f64>,
}

/// One dispatch target (server index) per slot of a cycle.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CyclePlan {
    pub decisions: Vec<usize>,
}

impl CyclePlan {
    pub fn len(&self) -> usize {
        self.decisions.len()
    }
    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }
}

/// Per-trajectory mutable policy state.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicyState {
    /// Round-robin start pointer, persistent across cycles.
    pub rr_start: usize,
}

fn keys_tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs())
}

/// Sorts servers by `q_l / gamma_l`, longest first, into `order`; tied blocks
/// are put in uniformly random order using `rng`, which is only consumed
/// when ties exist.
pub(crate) fn sort_into<R: Rng + ?Sized>(
    q: &[u64],
    gamma: &[f64],
    keys: &mut Vec<f64>,
    order: &mut Vec<usize>,
    rng: &mut R,
) {
    let n = q.len();
    keys.clear();
    keys.extend(q.iter().zip(gamma).map(|(&ql, &g)| ql as f64 / g));
    order.clear();
    order.extend(0..n);
    order.sort_unstable_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && keys_tied(keys[order[end - 1]], keys[order[end]]) {
            end += 1;
        }
        if end - start > 1 {
            order[start..end].shuffle(rng);
        }
        start = end;
    }
}

/// Sorting function `L(O(kT), V_k)`.
pub fn sort_scaled<R: Rng + ?Sized>(q: &[u64], gamma: &[f64], rng: &mut R) -> SortResult {
    assert_eq!(
        q.len(),
        gamma.len(),
        "queue and scaling vectors differ in length"
    );
    let mut keys = Vec::with_capacity(q.len());
    let mut order = Vec::with_capacity(q.len());
    sort_into(q, gamma, &mut keys, &mut order, rng);
    SortResult {
        eta: Permutation::from_vec_unchecked(order),
        sort_keys: keys,
    }
}

/// Precomputed decision-function data that does not change across cycles.
#[derive(Debug, Clone)]
pub(crate) struct DecisionTables {
    /// Cumulative service-rate shares for weighted random dispatch.
    mu_cdf: Vec<f64>,
}

impl DecisionTables {
    pub(crate) fn new(mu: &[f64]) -> Self {
        let total: f64 = mu.iter().sum();
        let mut acc = 0.0;
        let mu_cdf = mu
            .iter()
            .map(|m| {
                acc += m / total;
                acc
            })
            .collect();
        DecisionTables { mu_cdf }
    }
}

/// Decision function `Y(eta, mu, W_k)`: fills `out` with `T` targets.
///
/// One `W_k` draw per cycle (only for randomized rules) seeds a sub-stream
/// from which the per-slot choices are expanded.
pub(crate) fn plan_into<R: RngCore + ?Sized>(
    spec: &PolicySpec,
    eta: &[usize],
    tables: &DecisionTables,
    state: &mut PolicyState,
    scratch: &mut Vec<usize>,
    out: &mut Vec<usize>,
    rng: &mut R,
) -> Result<()> {
    let n = eta.len();
    let t = spec.t_cycle;
    out.clear();
    match spec.kind {
        PolicyKind::Jsq | PolicyKind::Jsed => {
            out.resize(t, eta[n - 1]);
        }
        PolicyKind::RoundRobin => {
            let start = state.rr_start;
            out.extend((0..t).map(|j| (start + j) % n));
            state.rr_start = (start + t) % n;
        }
        PolicyKind::Rand => {
            let mut sub = Pcg64Mcg::seed_from_u64(rng.next_u64());
            out.extend((0..t).map(|_| sub.random_range(0..n)));
        }
        PolicyKind::WeightedRand => {
            let mut sub = Pcg64Mcg::seed_from_u64(rng.next_u64());
            let cdf = &tables.mu_cdf;
            out.extend((0..t).map(|_| {
                let u: f64 = sub.random::<f64>() * cdf[n - 1];
                cdf.iter().position(|&c| u < c).unwrap_or(n - 1)
            }));
        }
        PolicyKind::Pod { d } => {
            let mut sub = Pcg64Mcg::seed_from_u64(rng.next_u64());
            for _ in 0..t {
                // Partial Fisher-Yates over sort positions; keep the largest
                // position, i.e. the shortest scaled queue among the d.
                scratch.clear();
                scratch.extend(0..n);
                let mut best = 0;
                for i in 0..d {
                    let j = sub.random_range(i..n);
                    scratch.swap(i, j);
                    best = best.max(scratch[i]);
                }
                out.push(eta[best]);
            }
        }
        PolicyKind::Custom(_) => {
            return Err(Error::Unsupported(
                "custom policies are defined by an f-table and cannot be simulated".into(),
            ))
        }
    }
    Ok(())
}

/// Builds the dispatch plan of one cycle.
pub fn plan_cycle<R: RngCore + ?Sized>(
    spec: &PolicySpec,
    eta: &Permutation,
    mu: &[f64],
    state: &mut PolicyState,
    rng: &mut R,
) -> Result<CyclePlan> {
    if eta.len() != spec.n() || mu.len() != spec.n() {
        return Err(Error::InvalidConfig(format!(
            "permutation of length {} / {} rates for a {}-server policy",
            eta.len(),
            mu.len(),
            spec.n()
        )));
    }
    let tables = DecisionTables::new(mu);
    let mut scratch = Vec::new();
    let mut decisions = Vec::with_capacity(spec.t_cycle);
    plan_into(
        spec,
        eta.as_slice(),
        &tables,
        state,
        &mut scratch,
        &mut decisions,
        rng,
    )?;
    Ok(CyclePlan { decisions })
}

/// Dispatch target for the slot at `phase` within the cycle.
pub fn dispatch_for_slot(plan: &CyclePlan, phase: usize) -> Result<usize> {
    plan.decisions
        .get(phase)
        .copied()
        .ok_or(Error::PhaseOutOfRange {
            phase,
            t_cycle: plan.decisions.len(),
        })
}
