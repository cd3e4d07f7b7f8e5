//! Dispatch-fraction tables: for every sort permutation `eta`, the mean
//! `f_eta` and variance `tau_sq_eta` of the fraction of a cycle's slots sent
//! to each sort position.
//!
//! Closed forms exist for the built-in policies; any simulable policy can
//! also be estimated by running cycles with the permutation pinned.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::perm::{self, factorial, Permutation, ENUMERATION_LIMIT};
use crate::policy::{plan_into, DecisionTables, PolicyKind, PolicySpec, PolicyState};
use crate::rng::{stream, Purpose, Stream};

/// Tolerance on `sum_l f_l = 1`.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FRow {
    pub f: Vec<f64>,
    pub tau_sq: Vec<f64>,
    /// Standard errors of `f`, present for Monte-Carlo rows.
    pub std_err: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    MonteCarlo { cycles: u64 },
}

impl Provenance {
    pub fn is_monte_carlo(&self) -> bool {
        matches!(self, Provenance::MonteCarlo { .. })
    }
}

/// How [`build_ftable`] obtains each row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FMode {
    Analytic,
    MonteCarlo { cycles: u64, seed: u64 },
}

/// The table `F = {(f_eta, tau_sq_eta) : eta in S_n}`.
///
/// Rows are indexed by lexicographic rank of `eta`; a symmetric table stores
/// one row shared by every permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct FTable {
    n: usize,
    rows: Vec<FRow>,
    symmetric: bool,
    provenance: Provenance,
}

impl FTable {
    /// A table whose row does not depend on `eta`.
    pub fn symmetric(row: FRow, provenance: Provenance) -> Result<Self> {
        let n = row.f.len();
        let table = FTable {
            n,
            rows: vec![row],
            symmetric: true,
            provenance,
        };
        table.validate()?;
        Ok(table)
    }

    /// A table from one row per permutation, in any order.
    pub fn from_entries(
        n: usize,
        entries: Vec<(Permutation, FRow)>,
        provenance: Provenance,
    ) -> Result<Self> {
        if n > ENUMERATION_LIMIT {
            return Err(Error::Capacity {
                n,
                limit: ENUMERATION_LIMIT,
            });
        }
        let count = factorial(n);
        let mut slots: Vec<Option<FRow>> = vec![None; count];
        for (eta, row) in entries {
            if eta.len() != n {
                return Err(Error::InvalidFTable(format!(
                    "permutation {eta} has wrong length"
                )));
            }
            let slot = &mut slots[eta.rank()];
            if slot.is_some() {
                return Err(Error::InvalidFTable(format!("duplicate entry for {eta}")));
            }
            *slot = Some(row);
        }
        let rows = slots
            .into_iter()
            .enumerate()
            .map(|(r, row)| {
                row.ok_or_else(|| {
                    let missing = perm::all(n).unwrap().nth(r).unwrap();
                    Error::InvalidFTable(format!("missing entry for {missing}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let table = FTable {
            n,
            rows,
            symmetric: false,
            provenance,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }
    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn row(&self, eta: &Permutation) -> &FRow {
        if self.symmetric {
            &self.rows[0]
        } else {
            &self.rows[eta.rank()]
        }
    }

    pub fn f(&self, eta: &Permutation) -> &[f64] {
        &self.row(eta).f
    }

    /// Every `(eta, row)` pair in lexicographic order of `eta`.
    pub fn entries(&self) -> Result<impl Iterator<Item = (Permutation, &FRow)> + '_> {
        Ok(perm::all(self.n)?.map(move |eta| {
            let row = self.row(&eta);
            (eta, row)
        }))
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidFTable("empty table".into()));
        }
        let tau_cap = match self.provenance {
            Provenance::MonteCarlo { cycles } if cycles > 1 => {
                0.25 * cycles as f64 / (cycles - 1) as f64
            }
            _ => 0.25,
        };
        for row in &self.rows {
            if row.f.len() != self.n || row.tau_sq.len() != self.n {
                return Err(Error::InvalidFTable(format!(
                    "row length differs from n = {}",
                    self.n
                )));
            }
            if let Some(se) = &row.std_err {
                if se.len() != self.n || se.iter().any(|s| !(*s >= 0.0)) {
                    return Err(Error::InvalidFTable("bad standard-error row".into()));
                }
            }
            if let Some(x) = row.f.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::InvalidFTable(format!("fraction {x} outside [0, 1]")));
            }
            if let Some(x) = row
                .tau_sq
                .iter()
                .find(|x| !(**x >= 0.0 && **x <= tau_cap + 1e-12))
            {
                return Err(Error::InvalidFTable(format!(
                    "variance {x} outside [0, 1/4]"
                )));
            }
            let sum: f64 = row.f.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidFTable(format!(
                    "fractions sum to {sum}, not 1"
                )));
            }
        }
        Ok(())
    }
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Per-slot i.i.d. choices give `N ~ Binomial(T, p)`, so `Var(N/T) = p(1-p)/T`.
fn iid_row(f: Vec<f64>, t: usize) -> FRow {
    let tau_sq = f.iter().map(|p| p * (1.0 - p) / t as f64).collect();
    FRow {
        f,
        tau_sq,
        std_err: None,
    }
}

fn analytic_row(spec: &PolicySpec, mu: &[f64], eta: &Permutation) -> FRow {
    let n = spec.n();
    let t = spec.t_cycle();
    match spec.kind() {
        PolicyKind::Rand => iid_row(vec![1.0 / n as f64; n], t),
        PolicyKind::RoundRobin => FRow {
            f: vec![1.0 / n as f64; n],
            tau_sq: vec![0.0; n],
            std_err: None,
        },
        PolicyKind::WeightedRand => {
            let total: f64 = mu.iter().sum();
            iid_row(eta.as_slice().iter().map(|&s| mu[s] / total).collect(), t)
        }
        PolicyKind::Jsq | PolicyKind::Jsed => {
            let mut f = vec![0.0; n];
            f[n - 1] = 1.0;
            FRow {
                f,
                tau_sq: vec![0.0; n],
                std_err: None,
            }
        }
        PolicyKind::Pod { d } => {
            let total = binom(n, *d);
            iid_row((1..=n).map(|l| binom(l - 1, d - 1) / total).collect(), t)
        }
        PolicyKind::Custom(_) => unreachable!("custom policies have no closed form"),
    }
}

/// Closed-form table of a built-in policy.
pub fn f_analytic(spec: &PolicySpec, mu: &[f64]) -> Result<FTable> {
    if !spec.kind().is_builtin() {
        return Err(Error::Unsupported(
            "custom policies have no closed-form f-table; use Monte-Carlo".into(),
        ));
    }
    let n = spec.n();
    if mu.len() != n {
        return Err(Error::InvalidConfig(format!(
            "{} rates for {n} servers",
            mu.len()
        )));
    }
    if *spec.kind() != PolicyKind::WeightedRand {
        let row = analytic_row(spec, mu, &Permutation::identity(n));
        return FTable::symmetric(row, Provenance::Analytic);
    }
    let entries = perm::all(n)?
        .map(|eta| {
            let row = analytic_row(spec, mu, &eta);
            (eta, row)
        })
        .collect();
    FTable::from_entries(n, entries, Provenance::Analytic)
}

/// Monte-Carlo estimate of one table row.
#[derive(Debug, Clone, PartialEq)]
pub struct FEstimate {
    pub f: Vec<f64>,
    pub tau_sq: Vec<f64>,
    pub std_err: Vec<f64>,
}

/// Runs `cycles` independent cycles with the sort permutation pinned to `eta`
/// and estimates mean and variance of the per-position dispatch fractions.
pub fn f_monte_carlo(
    spec: &PolicySpec,
    mu: &[f64],
    eta: &Permutation,
    cycles: u64,
    rng: &mut Stream,
) -> Result<FEstimate> {
    let n = spec.n();
    if cycles == 0 {
        return Err(Error::InvalidConfig("need at least one cycle".into()));
    }
    if eta.len() != n || mu.len() != n {
        return Err(Error::InvalidConfig(
            "permutation or rates do not match the policy".into(),
        ));
    }
    let t = spec.t_cycle() as f64;
    let mut position = vec![0; n];
    for (p, &s) in eta.as_slice().iter().enumerate() {
        position[s] = p;
    }
    let tables = DecisionTables::new(mu);
    let mut state = PolicyState::default();
    let mut scratch = Vec::new();
    let mut plan = Vec::with_capacity(spec.t_cycle());
    let mut counts = vec![0u64; n];
    // Welford accumulators per position.
    let mut mean = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    for k in 1..=cycles {
        plan_into(
            spec,
            eta.as_slice(),
            &tables,
            &mut state,
            &mut scratch,
            &mut plan,
            rng,
        )?;
        counts.iter_mut().for_each(|c| *c = 0);
        for &server in &plan {
            counts[position[server]] += 1;
        }
        for l in 0..n {
            let x = counts[l] as f64 / t;
            let delta = x - mean[l];
            mean[l] += delta / k as f64;
            m2[l] += delta * (x - mean[l]);
        }
    }
    let c = cycles as f64;
    let tau_sq: Vec<f64> = m2
        .iter()
        .map(|s| if cycles > 1 { s / (c - 1.0) } else { 0.0 })
        .collect();
    let std_err = tau_sq.iter().map(|v| (v / c).sqrt()).collect();
    Ok(FEstimate {
        f: mean,
        tau_sq,
        std_err,
    })
}

/// Builds the full table over `S_n`, analytically or by Monte-Carlo.
///
/// In Monte-Carlo mode each permutation gets its own stream, keyed by its
/// rank, so the result does not depend on thread scheduling.
pub fn build_ftable(spec: &PolicySpec, mu: &[f64], mode: FMode) -> Result<FTable> {
    if let PolicyKind::Custom(table) = spec.kind() {
        table.validate()?;
        return Ok((**table).clone());
    }
    match mode {
        FMode::Analytic => f_analytic(spec, mu),
        FMode::MonteCarlo { cycles, seed } => {
            let n = spec.n();
            let perms: Vec<Permutation> = perm::all(n)?.collect();
            let entries = perms
                .into_par_iter()
                .map(|eta| {
                    let mut rng = stream(seed, eta.rank() as u64, Purpose::Decisions);
                    let est = f_monte_carlo(spec, mu, &eta, cycles, &mut rng)?;
                    let row = FRow {
                        f: est.f,
                        tau_sq: est.tau_sq,
                        std_err: Some(est.std_err),
                    };
                    Ok((eta, row))
                })
                .collect::<Result<Vec<_>>>()?;
            FTable::from_entries(n, entries, Provenance::MonteCarlo { cycles })
        }
    }
}

fn join(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x}")).collect();
    parts.join(" ")
}

/// Serializes a table. Records are `eta:`, `f:`, `tau_sq:` and (Monte-Carlo
/// only) `se:` lines; permutations are 1-based. Symmetric tables above the
/// enumeration limit write a single record with `eta: *`.
pub fn to_text(table: &FTable, header_comments: &[String]) -> String {
    let mut out = String::new();
    for c in header_comments {
        let _ = writeln!(out, "# {c}");
    }
    let provenance = match table.provenance {
        Provenance::Analytic => "analytic".to_string(),
        Provenance::MonteCarlo { cycles } => format!("monte_carlo cycles={cycles}"),
    };
    let _ = writeln!(
        out,
        "ftable n={} provenance={} symmetric={}",
        table.n, provenance, table.symmetric
    );
    let mut record = |label: String, row: &FRow| {
        let _ = writeln!(out);
        let _ = writeln!(out, "eta: {label}");
        let _ = writeln!(out, "f: {}", join(&row.f));
        let _ = writeln!(out, "tau_sq: {}", join(&row.tau_sq));
        if let Some(se) = &row.std_err {
            let _ = writeln!(out, "se: {}", join(se));
        }
    };
    match table.entries() {
        Ok(entries) => entries.for_each(|(eta, row)| record(eta.to_string(), row)),
        Err(_) => record("*".into(), &table.rows[0]),
    }
    out
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_floats(line: usize, body: &str, n: usize) -> Result<Vec<f64>> {
    let xs = body
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| parse_err(line, format!("bad number `{tok}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if xs.len() != n {
        return Err(parse_err(
            line,
            format!("expected {n} values, found {}", xs.len()),
        ));
    }
    Ok(xs)
}

/// Parses the format written by [`to_text`] and validates the result.
pub fn from_text(text: &str) -> Result<FTable> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing `ftable` header"))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("ftable") {
        return Err(parse_err(hline, "expected `ftable` header"));
    }
    let (mut n, mut provenance, mut cycles, mut symmetric) = (None, None, None, false);
    for field in fields {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(hline, format!("bad field `{field}`")))?;
        let bad = || parse_err(hline, format!("bad value for `{key}`: `{value}`"));
        match key {
            "n" => n = Some(value.parse::<usize>().map_err(|_| bad())?),
            "provenance" => provenance = Some(value.to_string()),
            "cycles" => cycles = Some(value.parse::<u64>().map_err(|_| bad())?),
            "symmetric" => symmetric = value.parse::<bool>().map_err(|_| bad())?,
            _ => return Err(parse_err(hline, format!("unknown field `{key}`"))),
        }
    }
    let n = n
        .filter(|&n| n > 0)
        .ok_or_else(|| parse_err(hline, "missing or zero `n`"))?;
    let provenance = match (provenance.as_deref(), cycles) {
        (Some("analytic"), None) => Provenance::Analytic,
        (Some("monte_carlo"), Some(cycles)) => Provenance::MonteCarlo { cycles },
        (Some("monte_carlo"), None) => return Err(parse_err(hline, "monte_carlo needs `cycles`")),
        _ => {
            return Err(parse_err(
                hline,
                "provenance must be `analytic` or `monte_carlo`",
            ))
        }
    };

    let mut records: Vec<(usize, Option<Permutation>, FRow)> = Vec::new();
    let mut pending: Option<(usize, Option<Permutation>)> = None;
    let mut f: Option<Vec<f64>> = None;
    let mut tau: Option<Vec<f64>> = None;
    let mut se: Option<Vec<f64>> = None;
    let mut flush = |pending: &mut Option<(usize, Option<Permutation>)>,
                     f: &mut Option<Vec<f64>>,
                     tau: &mut Option<Vec<f64>>,
                     se: &mut Option<Vec<f64>>|
     -> Result<()> {
        if let Some((line, eta)) = pending.take() {
            let f = f
                .take()
                .ok_or_else(|| parse_err(line, "record lacks an `f:` line"))?;
            let tau_sq = tau
                .take()
                .ok_or_else(|| parse_err(line, "record lacks a `tau_sq:` line"))?;
            records.push((
                line,
                eta,
                FRow {
                    f,
                    tau_sq,
                    std_err: se.take(),
                },
            ));
        }
        Ok(())
    };
    for (line, content) in lines {
        let (label, body) = content
            .split_once(':')
            .ok_or_else(|| parse_err(line, "expected `label: values`"))?;
        let body = body.trim();
        match label.trim() {
            "eta" => {
                flush(&mut pending, &mut f, &mut tau, &mut se)?;
                let eta = if body == "*" {
                    None
                } else {
                    let idx = body
                        .split_whitespace()
                        .map(|t| t.parse::<usize>().map_err(|_| parse_err(line, "bad index")))
                        .collect::<Result<Vec<_>>>()?;
                    if idx.len() != n {
                        return Err(parse_err(
                            line,
                            format!("permutation must have {n} entries"),
                        ));
                    }
                    Some(
                        Permutation::from_one_based(&idx)
                            .map_err(|e| parse_err(line, e.to_string()))?,
                    )
                };
                pending = Some((line, eta));
            }
            other => {
                if pending.is_none() {
                    return Err(parse_err(
                        line,
                        format!("`{other}:` before any `eta:` line"),
                    ));
                }
                let slot = match other {
                    "f" => &mut f,
                    "tau_sq" => &mut tau,
                    "se" => &mut se,
                    _ => return Err(parse_err(line, format!("unknown label `{other}`"))),
                };
                if slot.is_some() {
                    return Err(parse_err(line, format!("duplicate `{other}:` line")));
                }
                *slot = Some(parse_floats(line, body, n)?);
            }
        }
    }
    flush(&mut pending, &mut f, &mut tau, &mut se)?;

    let at_line = |line: usize| move |e: Error| parse_err(line, e.to_string());
    match records.as_slice() {
        [] => Err(parse_err(hline, "no records")),
        [(line, None, row)] if symmetric => {
            FTable::symmetric(row.clone(), provenance).map_err(at_line(*line))
        }
        _ => {
            let mut entries = Vec::with_capacity(records.len());
            for (line, eta, row) in records {
                let eta = eta.ok_or_else(|| parse_err(line, "`eta: *` only allowed alone"))?;
                entries.push((eta, row));
            }
            if symmetric {
                let (line, first) = (hline, entries[0].1.clone());
                if entries.iter().any(|(_, r)| *r != first) {
                    return Err(parse_err(line, "symmetric table has differing rows"));
                }
                if entries.len() != factorial(n) {
                    return Err(parse_err(
                        line,
                        "symmetric table must list every permutation",
                    ));
                }
                return FTable::symmetric(first, provenance).map_err(at_line(line));
            }
            FTable::from_entries(n, entries, provenance).map_err(at_line(hline))
        }
    }
}
