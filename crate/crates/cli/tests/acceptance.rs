//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every criterion reports even when an
//! earlier one fails; the process exits nonzero if any criterion fails.
//! Criteria 4-6 simulate about 6.5e8 slots and dominate the runtime.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use loadlab_core::fvector::{build_ftable, f_analytic, FMode, FRow, FTable, Provenance};
use loadlab_core::model::{ArrivalLaw, SystemConfig};
use loadlab_core::perm::{self, Permutation};
use loadlab_core::policy::{PolicyKind, PolicySpec};
use loadlab_core::sim::{
    heavy_traffic_sweep, run_steady_state, ssc_empirical_check, RunConfig, Simulator, SscCheck,
    SweepConfig, SweepReport,
};
use loadlab_core::stability::analyze;
use loadlab_core::stats::ols_slope;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// 1. f-table oracle equivalence

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Closed-form dispatch fractions per sorted position.
fn closed_form(kind: &PolicyKind, mu: &[f64], eta: &Permutation) -> Vec<f64> {
    let n = mu.len();
    let total: f64 = mu.iter().sum();
    match kind {
        PolicyKind::Rand | PolicyKind::RoundRobin => vec![1.0 / n as f64; n],
        PolicyKind::WeightedRand => (0..n).map(|l| mu[eta.at(l)] / total).collect(),
        PolicyKind::Jsq | PolicyKind::Jsed => {
            (0..n).map(|l| if l == n - 1 { 1.0 } else { 0.0 }).collect()
        }
        PolicyKind::Pod { d } => (1..=n)
            .map(|l| binom(l - 1, d - 1) / binom(n, *d))
            .collect(),
        PolicyKind::Custom(_) => unreachable!(),
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mu = [0.2, 0.5, 0.7, 1.1];
    let kinds = [
        PolicyKind::Rand,
        PolicyKind::WeightedRand,
        PolicyKind::RoundRobin,
        PolicyKind::Jsq,
        PolicyKind::Jsed,
        PolicyKind::Pod { d: 1 },
        PolicyKind::Pod { d: 2 },
        PolicyKind::Pod { d: 3 },
    ];
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    for kind in &kinds {
        let spec = PolicySpec::builtin(kind.clone(), &mu).unwrap();
        let mc = build_ftable(
            &spec,
            &mu,
            FMode::MonteCarlo {
                cycles: 100_000,
                seed: 1,
            },
        )
        .unwrap();
        let exact = f_analytic(&spec, &mu).unwrap();
        for (eta, row) in mc.entries().unwrap() {
            let want = closed_form(kind, &mu, &eta);
            let se = row.std_err.as_ref().unwrap();
            for l in 0..4 {
                let diff = (row.f[l] - want[l]).abs();
                let ok = if se[l] > 0.0 {
                    worst = worst.max(diff / se[l]);
                    diff <= 4.0 * se[l]
                } else {
                    diff == 0.0
                };
                if !ok || (exact.f(&eta)[l] - want[l]).abs() > 1e-12 {
                    bad.push(format!("{} {eta} l={}", kind.name(), l + 1));
                }
            }
            if matches!(kind, PolicyKind::RoundRobin | PolicyKind::Jsq) {
                let zero = |r: &FRow| r.tau_sq.iter().all(|&t| t == 0.0);
                if !zero(row) || !zero(exact.row(&eta)) {
                    bad.push(format!("{} {eta} tau_sq nonzero", kind.name()));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        bad.is_empty() && secs < 120.0,
        format!(
            "8 policies x 24 orderings x 1e5 cycles; largest deviation {worst:.2} s.e.; {secs:.1} s; mismatches {bad:?}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. Stability analyzer against exhaustive search

struct Brute {
    h_star: f64,
    minimizers: Vec<(usize, usize)>,
}

fn brute_force(rows: &[Vec<f64>], mu: &[f64]) -> Brute {
    let n = mu.len();
    let etas: Vec<Permutation> = perm::all(n).unwrap().collect();
    let mut h = vec![vec![0.0; n + 1]; etas.len()];
    let mut h_star = f64::INFINITY;
    for (r, eta) in etas.iter().enumerate() {
        let (mut pm, mut pf) = (0.0, 0.0);
        for m in 1..=n {
            pm += mu[eta.at(m - 1)];
            pf += rows[r][m - 1];
            h[r][m] = if pf <= 0.0 { f64::INFINITY } else { pm / pf };
            h_star = h_star.min(h[r][m]);
        }
    }
    let mut minimizers = Vec::new();
    for r in 0..etas.len() {
        for m in 1..=n {
            if h[r][m] <= h_star * (1.0 + 1e-9) {
                minimizers.push((r, m));
            }
        }
    }
    Brute { h_star, minimizers }
}

fn random_case(rng: &mut StdRng) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = rng.random_range(1..=4);
    let mut mu: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random_bool(0.2) {
                1.0
            } else {
                rng.random_range(0.05..3.0)
            }
        })
        .collect();
    mu.sort_by(f64::total_cmp);
    let row = |rng: &mut StdRng| {
        let w: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.25) {
                    0.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let s: f64 = w.iter().sum();
        if s == 0.0 {
            (0..n).map(|l| if l == n - 1 { 1.0 } else { 0.0 }).collect()
        } else {
            w.iter().map(|x| x / s).collect::<Vec<f64>>()
        }
    };
    let count = perm::factorial(n);
    let rows = if rng.random_bool(0.3) {
        vec![row(rng); count]
    } else {
        (0..count).map(|_| row(rng)).collect()
    };
    (rows, mu)
}

fn criterion_2() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2);
    let mut mismatches = 0;
    let mut structure_violations = 0;
    let mut below_capacity = 0;
    for _ in 0..1000 {
        let (rows, mu) = random_case(&mut rng);
        let n = mu.len();
        let entries = perm::all(n)
            .unwrap()
            .zip(&rows)
            .map(|(eta, f)| {
                (
                    eta,
                    FRow {
                        f: f.clone(),
                        tau_sq: vec![0.0; n],
                        std_err: None,
                    },
                )
            })
            .collect();
        let table = FTable::from_entries(n, entries, Provenance::Analytic).unwrap();
        let report = analyze(&table, &mu).unwrap();
        let b = brute_force(&rows, &mu);
        let mut found: Vec<(usize, usize)> = report
            .minimizers
            .iter()
            .map(|p| (p.eta.rank(), p.m))
            .collect();
        found.sort();
        if report.h_star != b.h_star || found != b.minimizers {
            mismatches += 1;
        }
        let total: f64 = mu.iter().sum();
        if report.h_star < total * (1.0 - 1e-9) {
            below_capacity += 1;
            structure_violations += report.minimizer_structure.violations();
        }
    }
    ensure(
        mismatches == 0 && structure_violations == 0,
        format!(
            "1000 random tables: {mismatches} h*/minimizer mismatches; {structure_violations} minimizer-structure \
             violations over {below_capacity} tables with h* < sum(mu)"
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. Stability against simulation

/// Relative CI half-width below which a steady-state mean counts as settled.
const CI_STABLE: f64 = 0.10;

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mu = [1.0, 2.0];
    let rand = PolicySpec::builtin(PolicyKind::Rand, &mu).unwrap();
    let jsq = PolicySpec::builtin(PolicyKind::Jsq, &mu).unwrap();
    let report = analyze(&f_analytic(&rand, &mu).unwrap(), &mu).unwrap();
    let mut notes = vec![format!("rand h* = {}", report.h_star)];
    let mut ok = report.h_star == 2.0;

    // Four potential arrivals per slot; n lambda = 4p.
    let system =
        |p: f64| SystemConfig::bernoulli(&mu, 2, ArrivalLaw::binomial(4, p).unwrap(), 3).unwrap();
    let mut stable_at = |spec: &PolicySpec, load: f64| {
        let mut cfg = RunConfig::new(10_000_000, 1_000_000, 1);
        cfg.queue_guard = 1_000_000;
        match run_steady_state(&system(load / 4.0), spec, &cfg) {
            Ok(s) => {
                let rel = s.mean_total_ci / s.mean_total;
                ok &= rel <= CI_STABLE;
                notes.push(format!(
                    "{} at {load}: E|Q| = {:.3} +- {:.3} (rel {rel:.3})",
                    spec.name(),
                    s.mean_total,
                    s.mean_total_ci
                ));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("{} at {load}: {e}", spec.name()));
            }
        }
    };
    stable_at(&rand, 1.9);
    stable_at(&jsq, 2.85);

    // Above h*: the leading group of the minimizer is the queue set that
    // cannot keep up.
    let m = &report.minimizers[0];
    let group: Vec<usize> = (0..m.m).map(|l| m.eta.at(l)).collect();
    let sys = system(2.2 / 4.0);
    let mut sim = Simulator::new(&sys, &rand, 0).unwrap();
    let (mut ts, mut ys) = (Vec::new(), Vec::new());
    for k in 0..2_000 {
        sim.run(1_000, |_| {}).unwrap();
        ts.push(k as f64);
        ys.push(group.iter().map(|&l| sim.state().q[l] as f64).sum());
    }
    let (slope, t) = ols_slope(&ts, &ys);
    ok &= slope > 0.0 && t > 5.0;
    notes.push(format!(
        "rand at 2.2: group {group:?} slope {slope:.2}/1000 slots, t = {t:.1}"
    ));
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 300.0;
    notes.push(format!("{secs:.1} s"));
    ensure(ok, notes.join("; "))
}

// ---------------------------------------------------------------------------
// 4-6. Heavy traffic: JSQ and JSED on mu = (0.4, 0.6)

const EPSILONS: [f64; 3] = [0.2, 0.05, 0.02];
const REPLICATIONS: u32 = 8;
const EFFECTIVE_PER_REP: u64 = 12_500_000;
const BURN_IN: u64 = 1_000_000;

fn heavy_traffic(kind: PolicyKind) -> SweepReport {
    let template =
        SystemConfig::bernoulli(&[0.4, 0.6], 1, ArrivalLaw::deterministic(0), 20240601).unwrap();
    let spec = PolicySpec::builtin(kind, template.mu()).unwrap();
    let cfg = SweepConfig {
        epsilons: EPSILONS.to_vec(),
        replications: REPLICATIONS,
        slots_per_rep: EFFECTIVE_PER_REP + BURN_IN,
        burn_in: Some(BURN_IN),
        variance: 1.0,
        a_max_total: 4,
        queue_guard: u64::MAX,
    };
    heavy_traffic_sweep(&template, &spec, &cfg).unwrap()
}

fn smallest(report: &SweepReport) -> &loadlab_core::sim::SweepRow {
    report.rows.iter().find(|r| r.eps == 0.02).unwrap()
}

fn criterion_4(reports: &[(&str, &SweepReport)]) -> Outcome {
    let mut ok = true;
    let mut notes = vec![format!(
        "{REPLICATIONS} reps x ({EFFECTIVE_PER_REP} + {BURN_IN} burn-in) slots per eps"
    )];
    for (name, rep) in reports {
        let r = smallest(rep);
        let rel = (r.eps_mean_q_per_server - r.limit).abs() / r.limit;
        let above = rep
            .rows
            .iter()
            .all(|r| r.eps_mean_q_per_server + r.eps_mean_q_ci >= r.lb);
        ok &= rep.strictly_majorized
            && rel <= 0.15
            && above
            && r.stats.effective_slots >= 100_000_000;
        notes.push(format!(
            "{name}: eps=0.02 {:.4} +- {:.4} vs limit {:.4} (rel {rel:.3}), lb {:.4}, above lb at every eps: {above}, effective slots {}",
            r.eps_mean_q_per_server, r.eps_mean_q_ci, r.limit, r.lb, r.stats.effective_slots
        ));
    }
    ensure(ok, notes.join("; "))
}

fn criterion_5(reports: &[(&str, &SweepReport)]) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, rep) in reports {
        match ssc_empirical_check(&rep.rows, rep.constants.as_ref()) {
            Ok(SscCheck::Checked {
                perp_ratio,
                o_sq_growth,
                required_growth,
                below_bound,
                passes,
            }) => {
                ok &= passes;
                let perp: Vec<String> = rep
                    .rows
                    .iter()
                    .map(|r| format!("{:.3}", r.o_perp_sq))
                    .collect();
                notes.push(format!(
                    "{name}: E|O_perp|^2 = [{}] ratio {perp_ratio:.3}, E|O|^2 growth {o_sq_growth:.1} (need {required_growth:.1}), below N_perp^2 = {:.3e}: {below_bound}",
                    perp.join(", "),
                    rep.constants.as_ref().unwrap().n_perp_sq
                ));
            }
            other => {
                ok = false;
                notes.push(format!("{name}: {other:?}"));
            }
        }
    }
    ensure(ok, notes.join("; "))
}

fn criterion_6(reports: &[(&str, &SweepReport)]) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, rep) in reports {
        let f = smallest(rep).fit.as_ref().unwrap();
        ok &= f.passes();
        notes.push(format!(
            "{name}: mean {:.3} vs {:.3} (rel {:.3}), CV^2 {:.3}, KS {:.4}, shares ({:.3}, {:.3}) vs ({:.3}, {:.3})",
            f.mean, f.target_mean, f.mean_rel_err, f.cv2, f.ks, f.shares[0], f.shares[1], f.target_shares[0], f.target_shares[1]
        ));
    }
    ensure(ok, notes.join("; "))
}

// ---------------------------------------------------------------------------
// 7. Single-queue chain

/// Stationary law of `q' = max(q + a - s, 0)` truncated at `cap`, by GTH
/// elimination (no subtractions, so no cancellation near saturation).
fn truncated_chain(arrivals: &[(u64, f64)], services: &[(u64, f64)], cap: usize) -> Vec<f64> {
    let size = cap + 1;
    let mut p = vec![vec![0.0; size]; size];
    for (i, row) in p.iter_mut().enumerate() {
        for &(a, pa) in arrivals {
            for &(s, ps) in services {
                let j = (i as i64 + a as i64 - s as i64).clamp(0, cap as i64) as usize;
                row[j] += pa * ps;
            }
        }
    }
    for k in (1..size).rev() {
        let out: f64 = p[k][..k].iter().sum();
        for i in 0..k {
            let w = p[i][k] / out;
            if w != 0.0 {
                for j in 0..k {
                    p[i][j] += w * p[k][j];
                }
            }
        }
    }
    let mut pi = vec![0.0; size];
    pi[0] = 1.0;
    for k in 1..size {
        let inflow: f64 = (0..k).map(|i| pi[i] * p[i][k]).sum();
        pi[k] = inflow / p[k][..k].iter().sum::<f64>();
    }
    let z: f64 = pi.iter().sum();
    pi.iter().map(|x| x / z).collect()
}

fn criterion_7() -> Outcome {
    let service = 0.5;
    let mut ok = true;
    let mut notes = Vec::new();
    for load in [0.5, 0.8, 0.95] {
        let law = ArrivalLaw::binomial(1, load * service).unwrap();
        let pi = truncated_chain(&law.to_pairs(), &[(0, 1.0 - service), (1, service)], 1000);
        let exact: f64 = pi.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        let sys = SystemConfig::bernoulli(&[service], 1, law, 7).unwrap();
        let spec = PolicySpec::builtin(PolicyKind::Jsq, sys.mu()).unwrap();
        let s = run_steady_state(&sys, &spec, &RunConfig::new(5_000_000, 100_000, 2)).unwrap();
        let hit = (s.mean_q[0] - exact).abs() <= s.mean_q_ci[0];
        ok &= hit && pi[1000] < 1e-12;
        notes.push(format!(
            "load {load}: {:.4} +- {:.4} vs chain {exact:.4}",
            s.mean_q[0], s.mean_q_ci[0]
        ));
    }
    ensure(ok, notes.join("; "))
}

// ---------------------------------------------------------------------------
// 8. Determinism of every subcommand

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        files.insert(
            path.file_name().unwrap().to_string_lossy().into_owned(),
            fs::read(&path).unwrap(),
        );
    }
    files
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs_dir();
    let jsq = cfg.join("jsq_two_server.toml");
    let runs: Vec<(&str, PathBuf, Vec<&str>)> = vec![
        ("fvector", cfg.join("pod_four_server.toml"), vec![]),
        ("stability", cfg.join("rand_unstable.toml"), vec![]),
        (
            "simulate",
            jsq.clone(),
            vec!["--slots", "400000", "--dump-samples"],
        ),
        (
            "sweep",
            jsq.clone(),
            vec!["--slots", "1200000", "--replications", "3"],
        ),
        (
            "distcheck",
            jsq,
            vec!["--slots", "1200000", "--replications", "3"],
        ),
    ];
    let mut notes = Vec::new();
    let mut ok = true;
    for (sub, config, extra) in runs {
        let out = tmp.path().join(sub);
        let mut outputs = Vec::new();
        // Thread count is not part of the manifest, so it must not matter.
        for threads in ["1", "3"] {
            let _ = fs::remove_dir_all(&out);
            let status = Command::new(env!("CARGO_BIN_EXE_loadlab"))
                .env("LOADLAB_THREADS", threads)
                .arg(sub)
                .arg(&config)
                .arg("--out")
                .arg(&out)
                .args(["--seed", "8"])
                .args(&extra)
                .output()
                .unwrap()
                .status;
            if status.code() == Some(2) {
                return Err(format!("{sub} errored"));
            }
            outputs.push(snapshot(&out));
        }
        let same = outputs[0] == outputs[1];
        ok &= same && !outputs[0].is_empty();
        notes.push(format!(
            "{sub}: {} files {}",
            outputs[0].len(),
            if same { "identical" } else { "DIFFER" }
        ));
    }
    ensure(ok, notes.join("; "))
}

// ---------------------------------------------------------------------------

fn run(number: u32, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {number} [{tag}] {name} ({secs:.1} s): {detail}");
    outcome.is_ok()
}

fn main() {
    let mut passed = Vec::new();
    passed.push(run(1, "f-table oracle equivalence", criterion_1));
    passed.push(run(
        2,
        "stability analyzer vs exhaustive search",
        criterion_2,
    ));
    passed.push(run(3, "stability vs simulation", criterion_3));

    let started = Instant::now();
    let sweeps = catch_unwind(|| {
        (
            heavy_traffic(PolicyKind::Jsq),
            heavy_traffic(PolicyKind::Jsed),
        )
    });
    eprintln!(
        "heavy-traffic sweeps took {:.1} s",
        started.elapsed().as_secs_f64()
    );
    match &sweeps {
        Ok((jsq, jsed)) => {
            let reports = [("jsq", jsq), ("jsed", jsed)];
            passed.push(run(4, "heavy-traffic delay optimality", || {
                criterion_4(&reports)
            }));
            passed.push(run(5, "state-space collapse", || criterion_5(&reports)));
            passed.push(run(6, "limiting distribution", || criterion_6(&reports)));
        }
        Err(_) => {
            for (k, name) in [
                (4, "heavy-traffic delay optimality"),
                (5, "state-space collapse"),
                (6, "limiting distribution"),
            ] {
                passed.push(run(k, name, || Err("sweep failed".into())));
            }
        }
    }
    passed.push(run(7, "single-queue chain oracle", criterion_7));
    passed.push(run(8, "determinism", criterion_8));

    let failed = passed.iter().filter(|p| !**p).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        passed.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
