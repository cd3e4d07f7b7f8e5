//! Subcommand implementations. Each returns the files it wrote and the
//! pass/fail checks it evaluated; the binary turns failed checks into a
//! nonzero exit status.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use loadlab_core::fvector::{self, build_ftable, FMode, FTable};
use loadlab_core::perm::Permutation;
use loadlab_core::sim::{
    heavy_traffic_sweep, run_steady_state, ssc_empirical_check, SscCheck, SweepReport, SweepRow,
};
use loadlab_core::stability::{analyze, StabilityReport, StructureReport, Verdict};
use loadlab_core::Error;

use crate::config::{self, Experiment};
use crate::manifest::RunManifest;

/// Relative distance to the heavy-traffic limit accepted at the smallest eps.
pub const SANDWICH_TOLERANCE: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl Check {
    fn new(name: &str, status: Status, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            status,
            detail: detail.into(),
        }
    }
    fn from_bool(name: &str, ok: bool, detail: impl Into<String>) -> Self {
        Self::new(name, if ok { Status::Pass } else { Status::Fail }, detail)
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
    /// Human-readable summary for stdout.
    pub summary: String,
}

impl Outcome {
    pub fn failures(&self) -> Vec<&Check> {
        self.checks
            .iter()
            .filter(|c| c.status == Status::Fail)
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub replications: Option<u32>,
    pub slots: Option<u64>,
    pub monte_carlo: Option<u64>,
    /// Extra f-table file for `stability`.
    pub ftable: Option<PathBuf>,
    pub dump_samples: bool,
}

struct Context_ {
    exp: Experiment,
    manifest: RunManifest,
    seed: u64,
}

fn prepare(subcommand: &str, opts: &Options) -> Result<Context_> {
    let mut exp = config::load(&opts.config)?;
    let seed = opts.seed.unwrap_or(exp.file.system.seed);
    exp.servers = exp.servers.clone().with_seed(seed);
    exp.system = exp.system.take().map(|s| s.with_seed(seed));
    let mut overrides = Vec::new();
    if let Some(r) = opts.replications {
        overrides.push(format!("replications={r}"));
    }
    if let Some(s) = opts.slots {
        overrides.push(format!("slots={s}"));
    }
    if let Some(c) = opts.monte_carlo {
        overrides.push(format!("monte_carlo={c}"));
    }
    if let Some(f) = &opts.ftable {
        let text = fs::read_to_string(f).with_context(|| format!("cannot read {}", f.display()))?;
        overrides.push(format!(
            "ftable={}@sha256:{}",
            f.display(),
            crate::manifest::blob_hash(text.as_bytes())
        ));
    }
    if opts.dump_samples {
        overrides.push("dump_samples=true".into());
    }
    let manifest = RunManifest::new(
        subcommand,
        &opts.config.display().to_string(),
        &exp.text,
        seed,
        &opts.out.display().to_string(),
        overrides,
    );
    fs::create_dir_all(&opts.out)
        .with_context(|| format!("cannot create output directory {}", opts.out.display()))?;
    Ok(Context_ {
        exp,
        manifest,
        seed,
    })
}

fn write(files: &mut Vec<PathBuf>, dir: &Path, name: &str, content: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, content).with_context(|| format!("cannot write {}", path.display()))?;
    files.push(path);
    Ok(())
}

fn write_json(
    files: &mut Vec<PathBuf>,
    dir: &Path,
    name: &str,
    value: &serde_json::Value,
) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(files, dir, name, &text)
}

/// CSV text preceded by the manifest as `#` comments.
fn csv_text(manifest: &RunManifest, header: &[String], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let body = String::from_utf8(w.into_inner()?)?;
    Ok(format!("{}{}", manifest.comment_header(), body))
}

fn fmt_vec(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x}")).collect();
    format!("({})", parts.join(", "))
}

fn analytic_or_mc(ctx: &Context_, cycles: Option<u64>) -> Result<FTable> {
    let mu = ctx.exp.servers.mu();
    let mode = match cycles {
        Some(cycles) => FMode::MonteCarlo {
            cycles,
            seed: ctx.seed,
        },
        None => FMode::Analytic,
    };
    Ok(build_ftable(&ctx.exp.policy, mu, mode)?)
}

pub fn fvector(opts: &Options) -> Result<Outcome> {
    let ctx = prepare("fvector", opts)?;
    let cycles = opts.monte_carlo.or(ctx.exp.file.fvector.monte_carlo_cycles);
    let table = analytic_or_mc(&ctx, cycles)?;
    let mut out = Outcome::default();
    let mu = ctx.exp.servers.mu();
    let mut header = ctx.manifest.lines();
    header.push(format!("policy: {}", ctx.exp.policy.name()));
    header.push(format!(
        "mu: {} (servers in nondecreasing rate order)",
        fmt_vec(mu)
    ));
    write(
        &mut out.files,
        &opts.out,
        "ftable.txt",
        &fvector::to_text(&table, &header),
    )?;

    let entries = if table.n() <= loadlab_core::perm::ENUMERATION_LIMIT {
        loadlab_core::perm::factorial(table.n())
    } else {
        1
    };
    let _ = writeln!(
        out.summary,
        "f-table for {} over n = {}: {} entries, provenance {:?}, symmetric = {}",
        ctx.exp.policy.name(),
        table.n(),
        entries,
        table.provenance(),
        table.is_symmetric()
    );
    if let (Some(_), true) = (cycles, ctx.exp.policy.kind().is_builtin()) {
        let exact = build_ftable(&ctx.exp.policy, mu, FMode::Analytic)?;
        let mut worst = 0.0f64;
        let mut ok = true;
        for (eta, row) in table.entries()? {
            let want = exact.f(&eta);
            let se = row
                .std_err
                .as_ref()
                .expect("Monte-Carlo rows carry standard errors");
            for l in 0..row.f.len() {
                let diff = (row.f[l] - want[l]).abs();
                if se[l] > 0.0 {
                    worst = worst.max(diff / se[l]);
                    ok &= diff <= 4.0 * se[l];
                } else {
                    ok &= diff <= 1e-12;
                }
            }
        }
        out.checks.push(Check::from_bool(
            "monte_carlo_matches_analytic",
            ok,
            format!("largest deviation {worst:.3} standard errors (limit 4)"),
        ));
    }
    Ok(out)
}

/// `x` rounded to 12 significant digits, without trailing zeros.
fn short(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return x.to_string();
    }
    let digits = (11 - x.abs().log10().floor() as i32).max(0) as usize;
    let s = format!("{x:.digits$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn witness_text(w: &Option<loadlab_core::stability::PrefixWitness>) -> String {
    match w {
        Some(w) => format!(
            " (eta = {}, m = {}: prefix f {} vs capacity share {})",
            w.eta, w.m, w.prefix_f, w.prefix_mu_share
        ),
        None => String::new(),
    }
}

fn stability_text(report: &StabilityReport, policy: &str, mu: &[f64]) -> String {
    let mut s = String::new();
    let to = &report.throughput_optimal;
    let sm = &report.strict_majorization;
    let headline_h = if to.holds {
        format!("h* = sum(mu) = {}", short(report.h_star))
    } else {
        format!("h* = {}", short(report.h_star))
    };
    let mut headline = vec![headline_h];
    headline.push(if to.holds {
        "throughput optimal".into()
    } else {
        "NOT throughput optimal".into()
    });
    if to.holds {
        headline.push(if sm.holds {
            "strict majorization holds".into()
        } else {
            "strict majorization FAILS (equalities)".into()
        });
    }
    if let Some(t) = &report.transience {
        if let (Some(x), false) = (t.transient_above, t.vacuous) {
            headline.push(format!("transient above n*lambda = {}", short(x)));
        }
    }
    let _ = writeln!(s, "{}", headline.join(", "));
    let _ = writeln!(s);
    let _ = writeln!(s, "policy: {policy}");
    let _ = writeln!(s, "mu (sorted): {}", fmt_vec(mu));
    let _ = writeln!(s, "sum(mu): {}", report.mu_total);
    let _ = writeln!(s, "h*: {}", report.h_star);
    let _ = writeln!(s, "stable for n*lambda < {}", report.h_star);
    let _ = writeln!(s, "minimizers: {}", report.minimizers.len());
    for p in report.minimizers.iter().take(20) {
        let _ = writeln!(s, "  eta = {}, m = {}", p.eta, p.m);
    }
    if report.minimizers.len() > 20 {
        let _ = writeln!(s, "  ... ({} more)", report.minimizers.len() - 20);
    }
    let _ = writeln!(
        s,
        "throughput optimal: {}{}",
        to.holds,
        witness_text(&to.witness)
    );
    let _ = writeln!(
        s,
        "strict majorization: {}{}",
        sm.holds,
        witness_text(&sm.witness)
    );
    match &report.transience {
        None => {
            let _ = writeln!(s, "transience: not evaluated (Monte-Carlo table)");
        }
        Some(t) => {
            let _ = write!(s, "transience condition: applicable = {}", t.applicable);
            if t.vacuous {
                let _ = write!(s, " (vacuous: every minimizer uses all servers)");
            }
            if let Some((p, other)) = &t.witness {
                let _ = write!(s, " (eta = {}, m = {} vs eta' = {})", p.eta, p.m, other);
            }
            let _ = writeln!(s);
        }
    }
    match &report.minimizer_structure {
        StructureReport::NotApplicable => {
            let _ = writeln!(s, "minimizer structure: not applicable (h* = sum(mu))");
        }
        StructureReport::Checked(v) => {
            let _ = writeln!(
                s,
                "minimizer structure: {} permutations checked, {} violations",
                v.len(),
                report.minimizer_structure.violations()
            );
        }
    }
    s
}

pub fn stability(opts: &Options) -> Result<Outcome> {
    let ctx = prepare("stability", opts)?;
    let mu = ctx.exp.servers.mu();
    let table = match &opts.ftable {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            fvector::from_text(&text).with_context(|| format!("f-table {}", path.display()))?
        }
        None => analytic_or_mc(&ctx, opts.monte_carlo)?,
    };
    let report = analyze(&table, mu)?;
    let mut out = Outcome::default();

    let violations = report.minimizer_structure.violations();
    out.checks.push(match &report.minimizer_structure {
        StructureReport::NotApplicable => Check::new(
            "minimizer_structure",
            Status::NotApplicable,
            "h* equals sum(mu)",
        ),
        StructureReport::Checked(v) => Check::from_bool(
            "minimizer_structure",
            violations == 0,
            format!(
                "{violations} violations over {} minimizing permutations",
                v.len()
            ),
        ),
    });
    let loads: Vec<_> = ctx
        .exp
        .file
        .stability
        .arrival_rates
        .iter()
        .map(|&x| json!({ "n_lambda": x, "verdict": report.verdict(x) }))
        .collect();

    let mut text = ctx.manifest.comment_header();
    let body = stability_text(&report, &ctx.exp.policy.name(), mu);
    text.push_str(&body);
    for &x in &ctx.exp.file.stability.arrival_rates {
        let _ = writeln!(text, "n*lambda = {x}: {:?}", report.verdict(x));
    }
    write(&mut out.files, &opts.out, "stability.txt", &text)?;
    write_json(
        &mut out.files,
        &opts.out,
        "stability.json",
        &json!({
            "manifest": ctx.manifest,
            "policy": ctx.exp.policy.name(),
            "mu": mu,
            "h_star": report.h_star,
            "minimizers": report.minimizers,
            "throughput_optimal": report.throughput_optimal,
            "strict_majorization": report.strict_majorization,
            "transience": report.transience,
            "minimizer_structure": report.minimizer_structure,
            "arrival_rates": loads,
            "checks": out.checks,
        }),
    )?;
    out.summary = body;
    Ok(out)
}

pub fn simulate(opts: &Options) -> Result<Outcome> {
    let ctx = prepare("simulate", opts)?;
    let system = ctx.exp.system()?;
    let policy = &ctx.exp.policy;
    let cfg = ctx.exp.simulate(opts.slots, opts.replications)?;
    let mut out = Outcome::default();

    let load = system.arrival().mean();
    let verdict = match build_ftable(policy, system.mu(), FMode::Analytic) {
        Ok(table) => Some(analyze(&table, system.mu())?.verdict(load)),
        Err(Error::Capacity { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    if verdict.is_some_and(|v| v != Verdict::Stable) {
        eprintln!(
            "warning: n*lambda = {load} is not inside the verified stability region of {}",
            policy.name()
        );
    }
    let stats = run_steady_state(system, policy, &cfg)?;
    out.checks.push(Check::from_bool(
        "pythagoras",
        stats.max_pythagoras_residual <= 1e-9,
        format!(
            "largest relative residual {:e}",
            stats.max_pythagoras_residual
        ),
    ));

    let header: Vec<String> = [
        "server",
        "config_index",
        "mu",
        "gamma",
        "mean_q",
        "mean_q_ci",
        "share",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows: Vec<Vec<String>> = (0..system.n())
        .map(|l| {
            vec![
                (l + 1).to_string(),
                (system.original_index()[l] + 1).to_string(),
                system.mu()[l].to_string(),
                policy.gamma()[l].to_string(),
                stats.mean_q[l].to_string(),
                stats.mean_q_ci[l].to_string(),
                stats.per_queue_share[l].to_string(),
            ]
        })
        .collect();
    write(
        &mut out.files,
        &opts.out,
        "simulate.csv",
        &csv_text(&ctx.manifest, &header, &rows)?,
    )?;
    if opts.dump_samples {
        let rows: Vec<Vec<String>> = stats
            .total_histogram
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, c)| vec![k.to_string(), c.to_string()])
            .collect();
        let header = vec!["total".to_string(), "count".to_string()];
        write(
            &mut out.files,
            &opts.out,
            "simulate_samples.csv",
            &csv_text(&ctx.manifest, &header, &rows)?,
        )?;
    }
    write_json(
        &mut out.files,
        &opts.out,
        "simulate.json",
        &json!({
            "manifest": ctx.manifest,
            "policy": policy.name(),
            "n_lambda": load,
            "stability_verdict": verdict,
            "stats": stats,
            "checks": out.checks,
        }),
    )?;
    let _ = writeln!(
        out.summary,
        "{} at n*lambda = {load}: E|Q|_1 = {} +- {} over {} samples; E|O_perp|^2 = {}",
        policy.name(),
        stats.mean_total,
        stats.mean_total_ci,
        stats.samples,
        stats.o_perp_sq_mean
    );
    let _ = writeln!(
        out.summary,
        "mean queue lengths (sorted servers): {}",
        fmt_vec(&stats.mean_q)
    );
    Ok(out)
}

fn sweep_checks(report: &SweepReport) -> Vec<Check> {
    let mut checks = Vec::new();
    let below: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.eps_mean_q_per_server + r.eps_mean_q_ci < r.lb)
        .map(|r| r.eps)
        .collect();
    checks.push(Check::from_bool(
        "lower_bound",
        below.is_empty(),
        if below.is_empty() {
            "simulated value is at least the lower bound minus its CI at every eps".into()
        } else {
            format!("below the lower bound at eps = {below:?}")
        },
    ));
    let smallest = report
        .rows
        .iter()
        .min_by(|a, b| a.eps.total_cmp(&b.eps))
        .expect("sweep has rows");
    if report.strictly_majorized {
        let rel = (smallest.eps_mean_q_per_server - smallest.limit).abs() / smallest.limit;
        checks.push(Check::from_bool(
            "heavy_traffic_limit",
            rel <= SANDWICH_TOLERANCE,
            format!(
                "eps = {}: {} vs limit {} (relative gap {rel:.4}, limit {SANDWICH_TOLERANCE})",
                smallest.eps, smallest.eps_mean_q_per_server, smallest.limit
            ),
        ));
    } else {
        checks.push(Check::new(
            "heavy_traffic_limit",
            Status::NotApplicable,
            "policy is not strictly majorized",
        ));
    }
    checks.push(
        match ssc_empirical_check(&report.rows, report.constants.as_ref()) {
            Ok(SscCheck::NotApplicable) => Check::new(
                "state_space_collapse",
                Status::NotApplicable,
                "policy is not strictly majorized",
            ),
            Ok(SscCheck::Checked {
                perp_ratio,
                o_sq_growth,
                required_growth,
                below_bound,
                passes,
            }) => Check::from_bool(
                "state_space_collapse",
                passes,
                format!(
                    "perpendicular ratio {perp_ratio:.4} (limit 2), |O|^2 growth {o_sq_growth:.2} \
                     (need {required_growth:.2}), below N_perp^2: {below_bound}"
                ),
            ),
            Err(e) => Check::new("state_space_collapse", Status::NotApplicable, e.to_string()),
        },
    );
    checks.push(fit_check(smallest, report.strictly_majorized));
    checks
}

fn fit_check(row: &SweepRow, strictly_majorized: bool) -> Check {
    if !strictly_majorized {
        return Check::new(
            "distribution_fit",
            Status::NotApplicable,
            "policy is not strictly majorized",
        );
    }
    match &row.fit {
        None => Check::new("distribution_fit", Status::NotApplicable, "too few samples"),
        Some(f) => Check::from_bool(
            "distribution_fit",
            f.passes(),
            format!(
                "eps = {}: mean rel. error {:.4}, CV^2 {:.4}, KS {:.4}, shares {} vs {}",
                row.eps,
                f.mean_rel_err,
                f.cv2,
                f.ks,
                fmt_vec(&f.shares),
                fmt_vec(&f.target_shares)
            ),
        ),
    }
}

fn sweep_csv(manifest: &RunManifest, rows: &[SweepRow], n: usize) -> Result<String> {
    let mut header: Vec<String> = [
        "eps",
        "lambda",
        "n_lambda",
        "mean_total",
        "mean_total_ci",
        "eps_mean_q_per_server",
        "eps_mean_q_ci",
        "lb",
        "limit",
        "ub",
        "ub_in_validity",
        "o_perp_sq",
        "o_perp_sq_ci",
        "o_sq",
        "o_sq_ci",
        "ks",
        "cv2",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=n).map(|l| format!("share_{l}")));
    header.extend(
        ["samples", "effective_slots", "burn_in"]
            .iter()
            .map(|s| s.to_string()),
    );
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![
                r.eps.to_string(),
                r.lambda.to_string(),
                r.n_lambda.to_string(),
                r.mean_total.to_string(),
                r.mean_total_ci.to_string(),
                r.eps_mean_q_per_server.to_string(),
                r.eps_mean_q_ci.to_string(),
                r.lb.to_string(),
                r.limit.to_string(),
                opt(r.ub),
                r.ub_in_validity.to_string(),
                r.o_perp_sq.to_string(),
                r.o_perp_sq_ci.to_string(),
                r.o_sq.to_string(),
                r.o_sq_ci.to_string(),
                opt(r.fit.as_ref().map(|f| f.ks)),
                opt(r.fit.as_ref().map(|f| f.cv2)),
            ];
            v.extend(r.stats.per_queue_share.iter().map(|s| s.to_string()));
            v.push(r.stats.samples.to_string());
            v.push(r.stats.effective_slots.to_string());
            v.push(r.burn_in.to_string());
            v
        })
        .collect();
    csv_text(manifest, &header, &table)
}

fn dump_samples(
    files: &mut Vec<PathBuf>,
    ctx: &Context_,
    dir: &Path,
    rows: &[SweepRow],
) -> Result<()> {
    for (i, r) in rows.iter().enumerate() {
        let header = vec!["eps_total".to_string(), "count".to_string()];
        let body: Vec<Vec<String>> = r
            .stats
            .eps_total_samples()
            .into_iter()
            .map(|(x, c)| vec![x.to_string(), c.to_string()])
            .collect();
        let name = format!("samples_{}.csv", i + 1);
        write(files, dir, &name, &csv_text(&ctx.manifest, &header, &body)?)?;
    }
    Ok(())
}

fn rows_json(rows: &[SweepRow]) -> serde_json::Value {
    serde_json::to_value(rows).expect("rows serialize")
}

pub fn sweep(opts: &Options) -> Result<Outcome> {
    let ctx = prepare("sweep", opts)?;
    let cfg = ctx.exp.sweep(opts.slots, opts.replications)?;
    let report = heavy_traffic_sweep(&ctx.exp.servers, &ctx.exp.policy, &cfg)?;
    let mut out = Outcome {
        checks: sweep_checks(&report),
        ..Default::default()
    };
    let n = ctx.exp.servers.n();
    write(
        &mut out.files,
        &opts.out,
        "sweep.csv",
        &sweep_csv(&ctx.manifest, &report.rows, n)?,
    )?;
    if opts.dump_samples {
        dump_samples(&mut out.files, &ctx, &opts.out, &report.rows)?;
    }
    write_json(
        &mut out.files,
        &opts.out,
        "sweep.json",
        &json!({
            "manifest": ctx.manifest,
            "policy": ctx.exp.policy.name(),
            "strictly_majorized": report.strictly_majorized,
            "constants": report.constants,
            "rows": rows_json(&report.rows),
            "checks": out.checks,
        }),
    )?;
    let _ = writeln!(
        out.summary,
        "{} sweep, strictly majorized = {}",
        ctx.exp.policy.name(),
        report.strictly_majorized
    );
    for r in &report.rows {
        let _ = writeln!(
            out.summary,
            "eps = {}: eps*E[mean Q] = {} +- {} (lb {}, limit {}), E|O_perp|^2 = {}",
            r.eps, r.eps_mean_q_per_server, r.eps_mean_q_ci, r.lb, r.limit, r.o_perp_sq
        );
    }
    Ok(out)
}

pub fn distcheck(opts: &Options) -> Result<Outcome> {
    let ctx = prepare("distcheck", opts)?;
    let cfg = ctx.exp.distcheck(opts.slots, opts.replications)?;
    let report = heavy_traffic_sweep(&ctx.exp.servers, &ctx.exp.policy, &cfg)?;
    let row = &report.rows[0];
    let mut out = Outcome::default();
    out.checks.push(fit_check(row, report.strictly_majorized));

    let total = row.stats.samples as f64;
    let mean = row.fit.as_ref().map(|f| f.target_mean);
    let mut below = 0u64;
    let body: Vec<Vec<String>> = row
        .stats
        .eps_total_samples()
        .into_iter()
        .map(|(x, c)| {
            below += c;
            let exp_cdf = mean
                .map(|m| (-(-x / m).exp_m1()).to_string())
                .unwrap_or_default();
            vec![
                x.to_string(),
                c.to_string(),
                (below as f64 / total).to_string(),
                exp_cdf,
            ]
        })
        .collect();
    let header: Vec<String> = ["eps_total", "count", "empirical_cdf", "exponential_cdf"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    write(
        &mut out.files,
        &opts.out,
        "distcheck.csv",
        &csv_text(&ctx.manifest, &header, &body)?,
    )?;
    write_json(
        &mut out.files,
        &opts.out,
        "distcheck.json",
        &json!({
            "manifest": ctx.manifest,
            "policy": ctx.exp.policy.name(),
            "eps": row.eps,
            "fit": row.fit,
            "checks": out.checks,
        }),
    )?;
    let _ = writeln!(out.summary, "{}", out.checks[0].detail);
    Ok(out)
}

/// Parses a 1-based permutation such as `2 1 3`; used by tests and tools.
pub fn parse_permutation(text: &str) -> Result<Permutation> {
    let idx = text
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Permutation::from_one_based(&idx)?)
}
