//! `relhartree` command-line runner.
//!
//! Exit codes: 0 success, 1 verdict failure, 2 configuration error,
//! 3 numeric error or blow-up.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use relhartree::harness::{self, Command, ExperimentConfig, Outcome};
use relhartree::Error;

#[derive(Parser)]
#[command(name = "relhartree", version, about = "Semi-relativistic Hartree experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file with dotted keys, e.g. `grid.n = 256`
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root (default: $RELHARTREE_OUT or ./relhartree-out)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
    /// Only print errors
    #[arg(long)]
    quiet: bool,
    /// Override a config key, e.g. `--set potential.gamma=1.2`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the configured probes and fits
    Simulate(Common),
    /// Free flow: sup-norm, nonlinear-term and dyadic decay rates
    LinearDecay(Common),
    /// Small-data run with scattering diagnostics
    Scattering(Common),
    /// Sampled inequalities, dispersive estimate and C(m) scaling
    Verify(Common),
    /// Cartesian sweep over gamma, epsilon and the sign of lambda
    Sweep(Common),
    /// Re-plot a channel of a summary.json
    Plot {
        record: PathBuf,
        /// Channel name, optionally `series/channel`
        channel: String,
        /// SVG path (default: next to the record)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
}

fn init_logging(quiet: bool) {
    let level = if quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn report(o: &Outcome, quiet: bool) {
    if quiet {
        return;
    }
    for v in &o.record.verdicts {
        let m = v.measured.map_or("non-finite".to_string(), |m| format!("{m:.6}"));
        println!(
            "{} {}: {m} (need {})",
            if v.passed { "PASS" } else { "FAIL" },
            v.name,
            v.requirement
        );
    }
    for f in &o.record.fits {
        println!(
            "fit {}/{}: exponent {:.6} on [{}, {}] (r2 {:.6})",
            f.series, f.channel, f.fit.exponent, f.fit.window[0], f.fit.window[1], f.fit.r_squared
        );
    }
    println!("output: {}", o.dir.display());
}

fn run(cli: Cli) -> Result<i32, Error> {
    let (command, common) = match cli.command {
        Cmd::Plot {
            record,
            channel,
            out,
            quiet,
        } => {
            init_logging(quiet);
            let path = harness::plot(&record, &channel, out.as_deref())?;
            if !quiet {
                println!("{}", path.display());
            }
            return Ok(0);
        }
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::LinearDecay(c) => (Command::LinearDecay, c),
        Cmd::Scattering(c) => (Command::Scattering, c),
        Cmd::Verify(c) => (Command::Verify, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
    };
    init_logging(common.quiet);
    let cfg = ExperimentConfig::load(command, common.config.as_deref(), &common.sets, common.seed)?;
    let root = harness::output_root(common.out.as_deref());
    let jobs = common
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if command == Command::Sweep {
        let out = harness::sweep(&cfg, &root, jobs)?;
        if !common.quiet {
            for r in &out.rows {
                println!("gamma={} epsilon={} lambda={}: {}", r.gamma, r.epsilon, r.lambda, r.status);
            }
            println!("output: {}", out.dir.display());
        }
        return Ok(out.exit_code());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let o = harness::run_command(command, &cfg, &root)?;
    report(&o, common.quiet);
    Ok(o.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
