use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn loadlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loadlab"))
        .current_dir(dir)
        .env_remove("LOADLAB_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TWO_SERVER: &str = r#"
[system]
mu = [0.6, 0.4]    # jobs/slot
s_max = 1
seed = 5

[policy]
kind = "KIND"

[sweep]
epsilons = [0.3, 0.15]
replications = 2
slots_per_rep = 300_000
burn_in = 50_000
variance = 1.0
a_max_total = 4

[distcheck]
eps = 0.02
replications = 1
slots_per_rep = 4_000
burn_in = 1_000
variance = 1.0
a_max_total = 4
"#;

fn two_server(dir: &Path, kind: &str) -> PathBuf {
    write_config(
        dir,
        &format!("{kind}.toml"),
        &TWO_SERVER.replace("KIND", kind),
    )
}

#[test]
fn fvector_lists_every_permutation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "jsq.toml",
        "[system]\nmu = [0.3, 0.2, 0.5]\ns_max = 1\n[policy]\nkind = \"jsq\"\n",
    );
    let out = loadlab(dir.path(), &["fvector", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("out/ftable.txt")).unwrap();
    assert!(text.contains("symmetric=true"));
    assert_eq!(text.matches("\neta: ").count(), 6);
    assert_eq!(text.matches("f: 0 0 1\n").count(), 6);
    assert!(text.starts_with("# tool: loadlab"));
}

#[test]
fn monte_carlo_fvector_reports_standard_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "pod.toml",
        "[system]\nmu = [0.2, 0.3, 0.6, 0.9]\ns_max = 1\n[policy]\nkind = \"pod\"\nd = 2\n",
    );
    let out = loadlab(
        dir.path(),
        &["fvector", cfg.to_str().unwrap(), "--monte-carlo", "100000"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("out/ftable.txt")).unwrap();
    assert!(text.contains("provenance=monte_carlo cycles=100000"));
    assert_eq!(text.matches("\nse: ").count(), 24);
    assert!(stdout(&out).contains("[PASS] monte_carlo_matches_analytic"));
}

#[test]
fn malformed_config_names_the_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        "[system]\nmu = [0.3, 0.2]\ns_max = 1\n[policy]\nkind = \"jsq\"\nbogus = 3\n",
    );
    let out = loadlab(dir.path(), &["stability", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("line 6") && err.contains("bogus"), "{err}");

    let cfg = write_config(
        dir.path(),
        "bad2.toml",
        "[system]\nmu = [0.3, -0.2]\ns_max = 1\n[policy]\nkind = \"jsq\"\n",
    );
    let out = loadlab(dir.path(), &["stability", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("system.mu[1]"), "{}", stderr(&out));
}

#[test]
fn stability_headlines() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            "rand",
            "[1.0, 2.0]",
            "h* = 2, NOT throughput optimal, transient above n*lambda = 2",
        ),
        (
            "jsq",
            "[1.0, 2.0]",
            "h* = sum(mu) = 3, throughput optimal, strict majorization holds",
        ),
        (
            "weighted_rand",
            "[1.0, 2.0]",
            "throughput optimal, strict majorization FAILS (equalities)",
        ),
    ];
    for (kind, mu, want) in cases {
        let cfg = write_config(
            dir.path(),
            &format!("{kind}.toml"),
            &format!("[system]\nmu = {mu}\ns_max = 2\n[policy]\nkind = \"{kind}\"\n"),
        );
        let out_dir = dir.path().join(kind);
        let out = loadlab(
            dir.path(),
            &[
                "stability",
                cfg.to_str().unwrap(),
                "--out",
                out_dir.to_str().unwrap(),
            ],
        );
        assert!(out.status.success(), "{}", stderr(&out));
        let first = stdout(&out).lines().next().unwrap().to_string();
        assert!(first.contains(want), "{kind}: {first}");
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out_dir.join("stability.json")).unwrap())
                .unwrap();
        assert_eq!(json["manifest"]["subcommand"], "stability");
        assert!(json["throughput_optimal"]["holds"].is_boolean());
    }
}

#[test]
fn stability_reads_an_explicit_ftable() {
    let dir = tempfile::tempdir().unwrap();
    let table = "ftable n=2 provenance=analytic symmetric=false\n\neta: 1 2\nf: 0.5 0.5\ntau_sq: 0 0\n\neta: 2 1\nf: 0.5 0.5\ntau_sq: 0 0\n";
    let ft = write_config(dir.path(), "half.ftable", table);
    let cfg = write_config(dir.path(), "c.toml", "[system]\nmu = [1.0, 2.0]\ns_max = 2\n[policy]\nkind = \"custom\"\nftable = \"half.ftable\"\n");
    for extra in [vec![], vec!["--ftable", ft.to_str().unwrap()]] {
        let mut args = vec!["stability", cfg.to_str().unwrap()];
        args.extend(extra);
        let out = loadlab(dir.path(), &args);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(
            stdout(&out).starts_with("h* = 2, NOT throughput optimal"),
            "{}",
            stdout(&out)
        );
    }
}

#[test]
fn sweep_writes_the_table_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = two_server(dir.path(), "jsq");
    let run = || {
        let out = loadlab(
            dir.path(),
            &["sweep", cfg.to_str().unwrap(), "--seed", "42"],
        );
        // Verdicts may fail on a run this short; only errors matter here.
        assert_ne!(out.status.code(), Some(2), "{}", stderr(&out));
        fs::read(dir.path().join("out/sweep.csv")).unwrap()
    };
    let first = run();
    let second = run();
    assert_eq!(first, second);
    let text = String::from_utf8(first).unwrap();
    assert!(text.contains("# seed: 42"));
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    for col in [
        "eps",
        "lambda",
        "mean_total",
        "eps_mean_q_per_server",
        "lb",
        "ub",
        "o_perp_sq",
        "o_sq",
        "ks",
        "cv2",
        "share_1",
        "share_2",
    ] {
        assert!(header.split(',').any(|c| c == col), "missing {col}");
    }
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/sweep.json")).unwrap())
            .unwrap();
    assert_eq!(json["strictly_majorized"], true);
    assert_eq!(json["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn overflow_names_the_offending_eps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "rand.toml",
        r#"
[system]
mu = [1.0, 2.0]
s_max = 2

[policy]
kind = "rand"

[sweep]
epsilons = [1.5, 0.5]
replications = 1
slots_per_rep = 2_000_000
burn_in = 1_000
variance = 1.0
a_max_total = 6
queue_guard = 2_000
"#,
    );
    let out = loadlab(dir.path(), &["sweep", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("0.5") && err.contains("2000"), "{err}");
}

#[test]
fn failed_checks_exit_nonzero_with_a_failure_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = two_server(dir.path(), "jsq");
    // Far too short to reach the heavy-traffic regime at eps = 0.02.
    let out = loadlab(dir.path(), &["distcheck", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", stdout(&out));
    let last = stderr(&out).lines().last().unwrap().to_string();
    let json: serde_json::Value = serde_json::from_str(&last).unwrap();
    let failures = json["failures"].as_array().unwrap();
    assert_eq!(failures[0]["name"], "distribution_fit");
    assert_eq!(failures[0]["status"], "fail");
}

#[test]
fn not_applicable_checks_do_not_fail_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = two_server(dir.path(), "weighted_rand");
    let out = loadlab(dir.path(), &["sweep", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}{}", stdout(&out), stderr(&out));
    let s = stdout(&out);
    assert!(s.contains("[N/A ] heavy_traffic_limit"));
    assert!(s.contains("[PASS] lower_bound"));
}
