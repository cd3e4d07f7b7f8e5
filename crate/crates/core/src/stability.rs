//! Stability analysis from an f-table.
//!
//! `h(eta, m)` is the ratio of the service capacity of the `m` longest
//! queues to the share of arrivals they receive. Its minimum `h*` over all
//! permutations and prefixes bounds the stable arrival rates: the sampled
//! chain is positive recurrent for `n lambda < h*`, and transient above `h*`
//! when the minimizers satisfy a symmetry condition.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fvector::FTable;
use crate::perm::{self, Permutation};

/// Relative tolerance for membership in the minimizer set and for the
/// prefix-share comparisons.
pub const RELATIVE_TOLERANCE: f64 = 1e-9;
/// Absolute tolerance on equal prefix sums in the transience condition.
pub const EQUALITY_TOLERANCE: f64 = 1e-9;

/// A `(eta, m)` pair; `m` counts the leading positions (1-based).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prefix {
    pub eta: Permutation,
    pub m: usize,
}

/// A prefix where the dispatch share is compared against the capacity share.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrefixWitness {
    pub eta: Permutation,
    pub m: usize,
    pub prefix_f: f64,
    pub prefix_mu_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrefixCheck {
    pub holds: bool,
    pub witness: Option<PrefixWitness>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransienceCheck {
    /// The symmetry condition holds at every minimizer.
    pub applicable: bool,
    /// Every minimizer uses the full prefix `m = n`, so the condition holds
    /// trivially.
    pub vacuous: bool,
    pub transient_above: Option<f64>,
    /// A minimizer and a permutation with the same leading set but a
    /// different prefix dispatch share.
    pub witness: Option<(Prefix, Permutation)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureEntry {
    pub eta: Permutation,
    pub m_star: usize,
    pub h: f64,
    /// `mu_{eta(m*)} / f_{m*}`; must not exceed `h`.
    pub last_ratio: f64,
    /// Smallest suffix ratio over `k > m*`; must exceed `h`.
    pub min_suffix_ratio: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "entries", rename_all = "snake_case")]
pub enum StructureReport {
    /// `h*` equals the total service rate; there is nothing to check.
    NotApplicable,
    Checked(Vec<StructureEntry>),
}

impl StructureReport {
    pub fn violations(&self) -> usize {
        match self {
            StructureReport::NotApplicable => 0,
            StructureReport::Checked(v) => v.iter().filter(|e| !e.passes).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    pub h_star: f64,
    pub minimizers: Vec<Prefix>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub mu_total: f64,
    pub h_star: f64,
    pub minimizers: Vec<Prefix>,
    pub throughput_optimal: PrefixCheck,
    /// `None` for Monte-Carlo tables, on which equality tests are refused.
    pub transience: Option<TransienceCheck>,
    pub strict_majorization: PrefixCheck,
    pub minimizer_structure: StructureReport,
}

/// What the analysis says about one arrival rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Inconclusive,
    Transient,
}

impl StabilityReport {
    /// Classifies the total arrival rate `n lambda`. The boundary `h*` itself
    /// is inconclusive, as is everything above it unless the transience
    /// condition applies.
    pub fn verdict(&self, n_lambda: f64) -> Verdict {
        let tol = RELATIVE_TOLERANCE * self.h_star;
        if n_lambda < self.h_star - tol {
            Verdict::Stable
        } else if n_lambda > self.h_star + tol
            && self.transience.as_ref().is_some_and(|t| t.applicable)
        {
            Verdict::Transient
        } else {
            Verdict::Inconclusive
        }
    }
}

fn check_inputs(table: &FTable, mu: &[f64]) -> Result<()> {
    if mu.len() != table.n() {
        return Err(Error::InvalidConfig(format!(
            "{} rates for an f-table over {} servers",
            mu.len(),
            table.n()
        )));
    }
    if let Some(m) = mu.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
        return Err(Error::InvalidConfig(format!(
            "service rates must be positive, got {m}"
        )));
    }
    Ok(())
}

/// Prefix sums of `mu` in sort order and of `f`, for `m = 1..=n`.
fn prefix_sums(f: &[f64], mu: &[f64], eta: &Permutation) -> (Vec<f64>, Vec<f64>) {
    let mut pm = Vec::with_capacity(f.len());
    let mut pf = Vec::with_capacity(f.len());
    let (mut sm, mut sf) = (0.0, 0.0);
    for (l, &server) in eta.as_slice().iter().enumerate() {
        sm += mu[server];
        sf += f[l];
        pm.push(sm);
        pf.push(sf);
    }
    (pm, pf)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den <= 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// `h(eta, m)`: capacity of the first `m` sort positions over their
/// dispatch share, `+inf` when that share is zero.
pub fn h_of(table: &FTable, mu: &[f64], eta: &Permutation, m: usize) -> f64 {
    assert!(
        m >= 1 && m <= table.n(),
        "prefix length {m} outside [1, {}]",
        table.n()
    );
    let (pm, pf) = prefix_sums(table.f(eta), mu, eta);
    ratio(pm[m - 1], pf[m - 1])
}

/// `h*` and the minimizer set, `(eta, m)` with `h <= h* (1 + 1e-9)`.
pub fn stability_region(table: &FTable, mu: &[f64]) -> Result<Region> {
    check_inputs(table, mu)?;
    let n = table.n();
    let mut values = Vec::new();
    let mut h_star = f64::INFINITY;
    for eta in perm::all(n)? {
        let (pm, pf) = prefix_sums(table.f(&eta), mu, &eta);
        let hs: Vec<f64> = (0..n).map(|m| ratio(pm[m], pf[m])).collect();
        h_star = hs.iter().copied().fold(h_star, f64::min);
        values.push((eta, hs));
    }
    let cut = h_star * (1.0 + RELATIVE_TOLERANCE);
    let minimizers = values
        .into_iter()
        .flat_map(|(eta, hs)| {
            hs.into_iter()
                .enumerate()
                .filter(|&(_, h)| h <= cut)
                .map(move |(m, _)| Prefix {
                    eta: eta.clone(),
                    m: m + 1,
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(Region { h_star, minimizers })
}

/// Scans every proper-or-full prefix, returning the first where `bad`
/// flags the pair `(prefix_f, prefix_mu_share)`.
fn scan_prefixes(
    table: &FTable,
    mu: &[f64],
    max_m: usize,
    bad: impl Fn(f64, f64) -> bool,
) -> Result<PrefixCheck> {
    check_inputs(table, mu)?;
    let total: f64 = mu.iter().sum();
    for eta in perm::all(table.n())? {
        let (pm, pf) = prefix_sums(table.f(&eta), mu, &eta);
        for m in 0..max_m {
            let share = pm[m] / total;
            if bad(pf[m], share) {
                return Ok(PrefixCheck {
                    holds: false,
                    witness: Some(PrefixWitness {
                        eta,
                        m: m + 1,
                        prefix_f: pf[m],
                        prefix_mu_share: share,
                    }),
                });
            }
        }
    }
    Ok(PrefixCheck {
        holds: true,
        witness: None,
    })
}

/// Throughput optimality: every prefix receives at most its capacity share
/// of arrivals.
pub fn check_throughput_optimal(table: &FTable, mu: &[f64]) -> Result<PrefixCheck> {
    scan_prefixes(table, mu, table.n(), |pf, share| {
        pf > share * (1.0 + RELATIVE_TOLERANCE)
    })
}

/// Strict majorization: every proper prefix receives strictly less than its
/// capacity share.
pub fn check_strict_majorization(table: &FTable, mu: &[f64]) -> Result<PrefixCheck> {
    scan_prefixes(table, mu, table.n() - 1, |pf, share| {
        pf >= share * (1.0 - RELATIVE_TOLERANCE)
    })
}

fn leading_mask(eta: &Permutation, m: usize) -> u64 {
    eta.as_slice()[..m]
        .iter()
        .fold(0u64, |acc, &s| acc | (1 << s))
}

/// Transience condition: at each minimizer, all permutations sharing its
/// leading server set give that set the same dispatch share.
pub fn check_transience(table: &FTable, mu: &[f64], region: &Region) -> Result<TransienceCheck> {
    if table.provenance().is_monte_carlo() {
        return Err(Error::NoisyTable);
    }
    check_inputs(table, mu)?;
    let n = table.n();
    // (m, leading set) -> (min, max, argmin, argmax) of the prefix share.
    let mut ranges: HashMap<(usize, u64), (f64, f64, Permutation, Permutation)> = HashMap::new();
    for eta in perm::all(n)? {
        let mut sf = 0.0;
        for (l, &x) in table.f(&eta).iter().enumerate() {
            sf += x;
            let key = (l + 1, leading_mask(&eta, l + 1));
            let e = ranges
                .entry(key)
                .or_insert((sf, sf, eta.clone(), eta.clone()));
            if sf < e.0 {
                e.0 = sf;
                e.2 = eta.clone();
            }
            if sf > e.1 {
                e.1 = sf;
                e.3 = eta.clone();
            }
        }
    }
    let vacuous = region.minimizers.iter().all(|p| p.m == n);
    for p in &region.minimizers {
        let (lo, hi, arg_lo, arg_hi) = &ranges[&(p.m, leading_mask(&p.eta, p.m))];
        if hi - lo > EQUALITY_TOLERANCE {
            let own: f64 = table.f(&p.eta)[..p.m].iter().sum();
            let other = if (own - lo).abs() > (own - hi).abs() {
                arg_lo
            } else {
                arg_hi
            };
            return Ok(TransienceCheck {
                applicable: false,
                vacuous,
                transient_above: None,
                witness: Some((p.clone(), other.clone())),
            });
        }
    }
    Ok(TransienceCheck {
        applicable: true,
        vacuous,
        transient_above: Some(region.h_star),
        witness: None,
    })
}

/// Checks the structure of each minimizing permutation's largest minimizing
/// prefix `m*`: the last position's own ratio does not exceed `h*`, and
/// every block of positions after `m*` has a strictly larger ratio.
pub fn structure_diagnostics(
    table: &FTable,
    mu: &[f64],
    region: &Region,
) -> Result<StructureReport> {
    check_inputs(table, mu)?;
    let total: f64 = mu.iter().sum();
    if region.h_star >= total * (1.0 - RELATIVE_TOLERANCE) {
        return Ok(StructureReport::NotApplicable);
    }
    let mut m_star: Vec<(Permutation, usize)> = Vec::new();
    for p in &region.minimizers {
        match m_star.iter_mut().find(|(eta, _)| *eta == p.eta) {
            Some(entry) => entry.1 = entry.1.max(p.m),
            None => m_star.push((p.eta.clone(), p.m)),
        }
    }
    let n = table.n();
    let entries = m_star
        .into_iter()
        .map(|(eta, ms)| {
            let f = table.f(&eta);
            let (pm, pf) = prefix_sums(f, mu, &eta);
            let h = ratio(pm[ms - 1], pf[ms - 1]);
            let f_last = f[ms - 1];
            let last_ratio = ratio(mu[eta.at(ms - 1)], f_last);
            let min_suffix_ratio = (ms..n)
                .map(|k| ratio(pm[k] - pm[ms - 1], pf[k] - pf[ms - 1]))
                .fold(f64::INFINITY, f64::min);
            // The left inequality inherits the minimizer tolerance, amplified
            // by how small the last fraction is relative to the prefix.
            let slack = RELATIVE_TOLERANCE * h * (pf[ms - 1] / f_last).max(1.0);
            let passes = f_last > 0.0 && last_ratio <= h + slack && h < min_suffix_ratio;
            StructureEntry {
                eta,
                m_star: ms,
                h,
                last_ratio,
                min_suffix_ratio,
                passes,
            }
        })
        .collect();
    Ok(StructureReport::Checked(entries))
}

/// Runs every check on one table.
pub fn analyze(table: &FTable, mu: &[f64]) -> Result<StabilityReport> {
    let region = stability_region(table, mu)?;
    let transience = match check_transience(table, mu, &region) {
        Ok(t) => Some(t),
        Err(Error::NoisyTable) => None,
        Err(e) => return Err(e),
    };
    Ok(StabilityReport {
        mu_total: mu.iter().sum(),
        throughput_optimal: check_throughput_optimal(table, mu)?,
        strict_majorization: check_strict_majorization(table, mu)?,
        minimizer_structure: structure_diagnostics(table, mu, &region)?,
        transience,
        h_star: region.h_star,
        minimizers: region.minimizers,
    })
}
