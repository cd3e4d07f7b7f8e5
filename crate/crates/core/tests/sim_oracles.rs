use loadlab_core::model::{two_point_for_moments, ArrivalLaw, SystemConfig};
use loadlab_core::policy::{PolicyKind, PolicySpec};
use loadlab_core::sim::{
    heavy_traffic_sweep, lower_bound, run_steady_state, sandwich_limit, RunConfig, SweepConfig,
};

/// Stationary law of the reflected walk `q' = max(q + a - s, 0)` truncated
/// at `cap` (overflow folded into the top state), by GTH elimination.
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
            if w == 0.0 {
                continue;
            }
            for j in 0..k {
                p[i][j] += w * p[k][j];
            }
        }
    }
    let mut pi = vec![0.0; size];
    pi[0] = 1.0;
    for k in 1..size {
        let inflow: f64 = (0..k).map(|i| pi[i] * p[i][k]).sum();
        let out: f64 = p[k][..k].iter().sum();
        pi[k] = inflow / out;
    }
    let z: f64 = pi.iter().sum();
    pi.iter().map(|x| x / z).collect()
}

#[test]
fn chain_solver_matches_geometric_closed_form() {
    let (p, s) = (0.3, 0.5);
    let pi = truncated_chain(&[(0, 1.0 - p), (1, p)], &[(0, 1.0 - s), (1, s)], 200);
    let r = p * (1.0 - s) / (s * (1.0 - p));
    for k in 0..20 {
        assert!((pi[k] - (1.0 - r) * r.powi(k as i32)).abs() < 1e-12);
    }
}

#[test]
fn single_queue_mean_matches_truncated_chain() {
    let law = ArrivalLaw::binomial(1, 0.3).unwrap();
    let sys = SystemConfig::bernoulli(&[0.5], 1, law.clone(), 17).unwrap();
    let spec = PolicySpec::builtin(PolicyKind::Jsq, sys.mu()).unwrap();
    let pi = truncated_chain(&law.to_pairs(), &[(0, 0.5), (1, 0.5)], 1000);
    assert!(pi[1000] < 1e-12);
    let exact: f64 = pi.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    let stats = run_steady_state(&sys, &spec, &RunConfig::new(4_000_000, 10_000, 2)).unwrap();
    assert!(
        (stats.mean_q[0] - exact).abs() <= stats.mean_q_ci[0],
        "{} +- {} vs {exact}",
        stats.mean_q[0],
        stats.mean_q_ci[0]
    );
}

#[test]
fn empty_arrivals_keep_every_policy_empty() {
    let sys = SystemConfig::bernoulli(&[0.2, 0.7], 1, ArrivalLaw::deterministic(0), 1).unwrap();
    for kind in [PolicyKind::Rand, PolicyKind::Jsq, PolicyKind::RoundRobin] {
        let spec = PolicySpec::builtin(kind, sys.mu()).unwrap();
        let stats = run_steady_state(&sys, &spec, &RunConfig::new(10_000, 100, 1)).unwrap();
        assert_eq!(stats.mean_total, 0.0);
        assert!(stats.mean_q.iter().all(|&q| q == 0.0));
    }
}

#[test]
fn jsq_beats_random_routing_on_paired_seeds() {
    let sys = SystemConfig::bernoulli(&[0.5, 0.5], 1, ArrivalLaw::binomial(2, 0.45).unwrap(), 31)
        .unwrap();
    let cfg = RunConfig::new(1_000_000, 50_000, 2);
    let run =
        |kind| run_steady_state(&sys, &PolicySpec::builtin(kind, sys.mu()).unwrap(), &cfg).unwrap();
    let jsq = run(PolicyKind::Jsq);
    let rand = run(PolicyKind::Rand);
    assert!(
        jsq.mean_total + jsq.mean_total_ci < rand.mean_total - rand.mean_total_ci,
        "jsq {} +- {}, rand {} +- {}",
        jsq.mean_total,
        jsq.mean_total_ci,
        rand.mean_total,
        rand.mean_total_ci
    );
}

#[test]
fn more_load_never_shortens_queues() {
    let mu = [0.4, 0.6];
    let spec = PolicySpec::builtin(PolicyKind::Jsq, &mu).unwrap();
    let mut last = 0.0;
    for load in [0.3, 0.5, 0.7, 0.85, 0.93] {
        let law = two_point_for_moments(load, 1.0, 4).unwrap();
        let sys = SystemConfig::bernoulli(&mu, 1, law, 99).unwrap();
        let stats = run_steady_state(&sys, &spec, &RunConfig::new(400_000, 20_000, 1)).unwrap();
        assert!(
            stats.mean_total >= last,
            "load {load}: {} < {last}",
            stats.mean_total
        );
        last = stats.mean_total;
    }
}

fn sweep(eps: Vec<f64>) -> SweepConfig {
    SweepConfig {
        epsilons: eps,
        replications: 2,
        slots_per_rep: 1_500_000,
        burn_in: Some(100_000),
        variance: 1.0,
        a_max_total: 4,
        queue_guard: u64::MAX,
    }
}

#[test]
fn lower_bound_holds_for_every_policy() {
    let template =
        SystemConfig::bernoulli(&[0.4, 0.6], 1, ArrivalLaw::deterministic(0), 4).unwrap();
    for kind in [
        PolicyKind::Rand,
        PolicyKind::WeightedRand,
        PolicyKind::RoundRobin,
        PolicyKind::Jsq,
        PolicyKind::Pod { d: 2 },
    ] {
        let spec = PolicySpec::builtin(kind, template.mu()).unwrap();
        let report = heavy_traffic_sweep(&template, &spec, &sweep(vec![0.3, 0.15])).unwrap();
        for r in &report.rows {
            assert!(
                r.eps_mean_q_per_server + r.eps_mean_q_ci >= r.lb,
                "{} eps {}: {} < {}",
                spec.name(),
                r.eps,
                r.eps_mean_q_per_server,
                r.lb
            );
        }
    }
}

#[test]
fn weighted_random_stays_above_the_heavy_traffic_limit() {
    let template =
        SystemConfig::bernoulli(&[0.4, 0.6], 1, ArrivalLaw::deterministic(0), 8).unwrap();
    let spec = PolicySpec::builtin(PolicyKind::WeightedRand, template.mu()).unwrap();
    let report = heavy_traffic_sweep(&template, &spec, &sweep(vec![0.05])).unwrap();
    assert!(!report.strictly_majorized);
    let r = &report.rows[0];
    let law = two_point_for_moments(1.0 - 0.05, 1.0, 4).unwrap();
    let limit = sandwich_limit(&template.with_arrival(law));
    assert_eq!(r.limit, limit);
    assert!(
        r.eps_mean_q_per_server - r.eps_mean_q_ci > 1.5 * limit,
        "{} vs {limit}",
        r.eps_mean_q_per_server
    );
}

#[test]
fn bounds_are_ordered() {
    let law = two_point_for_moments(0.9, 1.0, 4).unwrap();
    let sys = SystemConfig::bernoulli(&[0.4, 0.6], 1, law, 0).unwrap();
    let limit = sandwich_limit(&sys);
    let v = 1.0 + 0.4 * 0.6 + 0.6 * 0.4;
    assert!((limit - v / 4.0).abs() < 1e-12);
    for eps in [0.5, 0.1, 0.01] {
        assert!(lower_bound(&sys, eps) < limit);
    }
}
