//! TOML experiment configuration.
//!
//! Servers are listed in any order in the file; the library stores them in
//! nondecreasing order of service rate, and every per-server output column
//! and f-table permutation uses that sorted order. Per-server vectors given
//! in the file (`mu`, `gamma`, `service_pmf`) follow the file order.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use loadlab_core::fvector::{self, FTable};
use loadlab_core::model::{two_point_for_moments, ArrivalLaw, ServiceLaw, SystemConfig};
use loadlab_core::policy::{PolicyKind, PolicySpec};
use loadlab_core::sim::{RunConfig, SweepConfig};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub system: SystemSection,
    pub policy: PolicySection,
    #[serde(default)]
    pub fvector: FvectorSection,
    #[serde(default)]
    pub stability: StabilitySection,
    pub simulate: Option<SimulateSection>,
    pub sweep: Option<SweepSection>,
    pub distcheck: Option<DistcheckSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// Service rate per server, jobs/slot.
    pub mu: Vec<f64>,
    /// Per-server service bound, jobs/slot.
    pub s_max: u64,
    #[serde(default)]
    pub seed: u64,
    /// Explicit service pmfs `[[value, prob], ...]`, one per server; when
    /// given, `mu` must match their means.
    pub service_pmf: Option<Vec<Vec<(u64, f64)>>>,
    pub arrival: Option<ArrivalSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalSection {
    Deterministic {
        value: u64,
    },
    TwoPoint {
        lo: u64,
        hi: u64,
        p_hi: f64,
    },
    Binomial {
        trials: u64,
        p: f64,
    },
    Pmf {
        pmf: Vec<(u64, f64)>,
    },
    /// Lattice law with the given total mean and variance on `[0, a_max_total]`.
    Moments {
        mean: f64,
        variance: f64,
        a_max_total: u64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub kind: String,
    pub d: Option<usize>,
    pub t_cycle: Option<usize>,
    pub gamma: Option<Vec<f64>>,
    /// f-table file for `kind = "custom"`, relative to the config file.
    pub ftable: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FvectorSection {
    pub monte_carlo_cycles: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    /// Total arrival rates `n lambda` (jobs/slot) to classify.
    #[serde(default)]
    pub arrival_rates: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub slots: u64,
    pub burn_in: u64,
    #[serde(default = "one")]
    pub replications: u32,
    pub queue_guard: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub epsilons: Vec<f64>,
    #[serde(default = "one")]
    pub replications: u32,
    pub slots_per_rep: u64,
    pub burn_in: Option<u64>,
    /// Total arrival variance `n sigma_lambda^2`, jobs^2/slot.
    pub variance: f64,
    pub a_max_total: u64,
    pub queue_guard: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistcheckSection {
    pub eps: f64,
    #[serde(default = "one")]
    pub replications: u32,
    pub slots_per_rep: u64,
    pub burn_in: Option<u64>,
    pub variance: f64,
    pub a_max_total: u64,
}

fn one() -> u32 {
    1
}

/// A parsed configuration resolved into library values.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub file: FileConfig,
    pub text: String,
    /// `None` when the file has no `[system.arrival]`.
    pub system: Option<SystemConfig>,
    /// System with a placeholder empty arrival stream, for analyses that
    /// ignore arrivals.
    pub servers: SystemConfig,
    pub policy: PolicySpec,
}

pub fn load(path: &Path) -> Result<Experiment> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    parse(&text, path.parent().unwrap_or(Path::new(".")))
        .with_context(|| format!("invalid config {}", path.display()))
}

/// Parses config text; `base` resolves relative paths inside it.
pub fn parse(text: &str, base: &Path) -> Result<Experiment> {
    let file: FileConfig = toml::from_str(text).map_err(|e| anyhow!("{e}"))?;
    let sys = &file.system;
    if sys.mu.is_empty() {
        bail!("system.mu: at least one server is required");
    }
    let services = match &sys.service_pmf {
        None => sys
            .mu
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                ServiceLaw::bernoulli_batch(m, sys.s_max).with_context(|| format!("system.mu[{i}]"))
            })
            .collect::<Result<Vec<_>>>()?,
        Some(pmfs) => {
            if pmfs.len() != sys.mu.len() {
                bail!(
                    "system.service_pmf: {} pmfs for {} servers",
                    pmfs.len(),
                    sys.mu.len()
                );
            }
            pmfs.iter()
                .zip(&sys.mu)
                .enumerate()
                .map(|(i, (pairs, &m))| {
                    let law = ServiceLaw::pmf(pairs)
                        .with_context(|| format!("system.service_pmf[{i}]"))?;
                    if (law.mean() - m).abs() > 1e-12 {
                        bail!(
                            "system.service_pmf[{i}]: mean {} differs from mu = {m}",
                            law.mean()
                        );
                    }
                    Ok(law)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let placeholder = ArrivalLaw::deterministic(0);
    let servers = SystemConfig::with_services(services, sys.s_max, placeholder, sys.seed)
        .context("system")?;
    let system = sys
        .arrival
        .as_ref()
        .map(|a| -> Result<SystemConfig> {
            Ok(servers.with_arrival(arrival_law(a).context("system.arrival")?))
        })
        .transpose()?;
    let policy = policy_spec(&file.policy, &servers, base).context("policy")?;
    Ok(Experiment {
        text: text.to_string(),
        file,
        system,
        servers,
        policy,
    })
}

fn arrival_law(a: &ArrivalSection) -> loadlab_core::Result<ArrivalLaw> {
    match a {
        ArrivalSection::Deterministic { value } => Ok(ArrivalLaw::deterministic(*value)),
        ArrivalSection::TwoPoint { lo, hi, p_hi } => ArrivalLaw::two_point(*lo, *hi, *p_hi),
        ArrivalSection::Binomial { trials, p } => ArrivalLaw::binomial(*trials, *p),
        ArrivalSection::Pmf { pmf } => ArrivalLaw::pmf(pmf),
        ArrivalSection::Moments {
            mean,
            variance,
            a_max_total,
        } => two_point_for_moments(*mean, *variance, *a_max_total),
    }
}

/// Reorders a file-order per-server vector into the sorted server order.
fn to_sorted<T: Clone>(values: &[T], system: &SystemConfig) -> Vec<T> {
    system
        .original_index()
        .iter()
        .map(|&i| values[i].clone())
        .collect()
}

fn policy_spec(p: &PolicySection, system: &SystemConfig, base: &Path) -> Result<PolicySpec> {
    let n = system.n();
    let mu = system.mu();
    let kind = match p.kind.as_str() {
        "rand" => PolicyKind::Rand,
        "weighted_rand" => PolicyKind::WeightedRand,
        "round_robin" => PolicyKind::RoundRobin,
        "jsq" => PolicyKind::Jsq,
        "jsed" => PolicyKind::Jsed,
        "pod" => PolicyKind::Pod {
            d: p.d.ok_or_else(|| anyhow!("kind: pod needs `d`"))?,
        },
        "custom" => {
            let rel = p
                .ftable
                .as_ref()
                .ok_or_else(|| anyhow!("kind: custom needs `ftable`"))?;
            let path = base.join(rel);
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("ftable: cannot read {}", path.display()))?;
            let table: FTable =
                fvector::from_text(&text).with_context(|| format!("ftable: {}", path.display()))?;
            PolicyKind::Custom(Arc::new(table))
        }
        other => bail!(
            "kind: unknown policy `{other}` (expected rand, weighted_rand, round_robin, jsq, \
             pod, jsed or custom)"
        ),
    };
    if p.d.is_some() && !matches!(kind, PolicyKind::Pod { .. }) {
        bail!("d: only meaningful for kind = \"pod\"");
    }
    if p.ftable.is_some() && !matches!(kind, PolicyKind::Custom(_)) {
        bail!("ftable: only meaningful for kind = \"custom\"");
    }
    let defaults = PolicySpec::builtin(
        if let PolicyKind::Custom(_) = kind {
            PolicyKind::Jsq
        } else {
            kind.clone()
        },
        mu,
    )?;
    let t_cycle = p.t_cycle.unwrap_or(defaults.t_cycle());
    let gamma = match &p.gamma {
        Some(g) if g.len() != n => bail!("gamma: {} entries for {n} servers", g.len()),
        Some(g) => to_sorted(g, system),
        None => defaults.gamma().to_vec(),
    };
    Ok(PolicySpec::new(kind, t_cycle, gamma)?)
}

impl Experiment {
    pub fn system(&self) -> Result<&SystemConfig> {
        self.system
            .as_ref()
            .ok_or_else(|| anyhow!("this command needs [system.arrival]"))
    }

    pub fn simulate(&self, slots: Option<u64>, replications: Option<u32>) -> Result<RunConfig> {
        let s = self
            .file
            .simulate
            .as_ref()
            .ok_or_else(|| anyhow!("missing [simulate]"))?;
        let mut cfg = RunConfig::new(slots.unwrap_or(s.slots), s.burn_in, s.replications);
        if let Some(r) = replications {
            cfg.replications = r;
        }
        if let Some(g) = s.queue_guard {
            cfg.queue_guard = g;
        }
        Ok(cfg)
    }

    pub fn sweep(&self, slots: Option<u64>, replications: Option<u32>) -> Result<SweepConfig> {
        let s = self
            .file
            .sweep
            .as_ref()
            .ok_or_else(|| anyhow!("missing [sweep]"))?;
        Ok(SweepConfig {
            epsilons: s.epsilons.clone(),
            replications: replications.unwrap_or(s.replications),
            slots_per_rep: slots.unwrap_or(s.slots_per_rep),
            burn_in: s.burn_in,
            variance: s.variance,
            a_max_total: s.a_max_total,
            queue_guard: s.queue_guard.unwrap_or(u64::MAX),
        })
    }

    pub fn distcheck(&self, slots: Option<u64>, replications: Option<u32>) -> Result<SweepConfig> {
        let s = self
            .file
            .distcheck
            .as_ref()
            .ok_or_else(|| anyhow!("missing [distcheck]"))?;
        Ok(SweepConfig {
            epsilons: vec![s.eps],
            replications: replications.unwrap_or(s.replications),
            slots_per_rep: slots.unwrap_or(s.slots_per_rep),
            burn_in: s.burn_in,
            variance: s.variance,
            a_max_total: s.a_max_total,
            queue_guard: u64::MAX,
        })
    }
}
