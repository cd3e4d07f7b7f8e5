use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use loadlab::commands::{self, Options, Outcome, Status};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "loadlab",
    version,
    about = "Load-balancing stability and heavy-traffic toolkit"
)]
struct Cli {
    /// Worker threads for parallel replications.
    #[arg(long, global = true, env = "LOADLAB_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the f-table of the configured policy.
    Fvector {
        #[command(flatten)]
        common: Common,
        /// Estimate by Monte Carlo with this many cycles per ordering.
        #[arg(long)]
        monte_carlo: Option<u64>,
    },
    /// Stability region, throughput optimality and strict majorization.
    Stability {
        #[command(flatten)]
        common: Common,
        /// Analyse this f-table file instead of the configured policy.
        #[arg(long)]
        ftable: Option<PathBuf>,
        #[arg(long)]
        monte_carlo: Option<u64>,
    },
    /// Steady-state simulation at the configured arrival law.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Heavy-traffic sweep over the configured eps grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Exponential fit of eps * total queue length at one eps.
    Distcheck {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides `system.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    replications: Option<u32>,
    /// Slots per replication, burn-in included.
    #[arg(long)]
    slots: Option<u64>,
    /// Also write the sampled total queue lengths.
    #[arg(long)]
    dump_samples: bool,
}

fn options(common: Common) -> Options {
    Options {
        config: common.config,
        out: common.out,
        seed: common.seed,
        ..Default::default()
    }
}

fn with_run(mut o: Options, run: RunArgs) -> Options {
    o.replications = run.replications;
    o.slots = run.slots;
    o.dump_samples = run.dump_samples;
    o
}

fn report(outcome: &Outcome) -> ExitCode {
    // Write errors (e.g. a closed pipe) must not turn a finished run into a panic.
    let mut o = std::io::stdout().lock();
    let _ = write!(o, "{}", outcome.summary);
    for c in &outcome.checks {
        let tag = match c.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::NotApplicable => "N/A ",
        };
        let _ = writeln!(o, "[{tag}] {}: {}", c.name, c.detail);
    }
    for f in &outcome.files {
        let _ = writeln!(o, "wrote {}", f.display());
    }
    let failures = outcome.failures();
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("{}", json!({ "failures": failures }));
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Fvector {
            common,
            monte_carlo,
        } => commands::fvector(&Options {
            monte_carlo,
            ..options(common)
        }),
        Command::Stability {
            common,
            ftable,
            monte_carlo,
        } => commands::stability(&Options {
            ftable,
            monte_carlo,
            ..options(common)
        }),
        Command::Simulate { common, run } => commands::simulate(&with_run(options(common), run)),
        Command::Sweep { common, run } => commands::sweep(&with_run(options(common), run)),
        Command::Distcheck { common, run } => commands::distcheck(&with_run(options(common), run)),
    };
    match result {
        Ok(outcome) => report(&outcome),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
