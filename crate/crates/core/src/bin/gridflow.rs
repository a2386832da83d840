//! Command-line front end: `run`, `sweep` and `check`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gridflow::monitor::TraceFormat;
use gridflow::sweep::{check_hitrate, read_file, run_sweep, run_to_dir, RunError, Scenario};
use gridflow::{parse_platform, parse_workload};

#[derive(Parser)]
#[command(name = "gridflow", version, about = "Flow-level simulation of grid sites with caches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write trace, summary and manifest.
    Run {
        #[command(flatten)]
        common: Common,
        /// Fraction of input files staged into caches before the start.
        #[arg(long)]
        hitrate: Option<f64>,
        /// Seed for workload generation and prestaging (default: the workload's).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run independent simulations for every (hitrate, seed) pair.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,0.95,1")]
        hitrate: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        seed: Vec<u64>,
        /// Simulations run at once (default: available cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Validate configuration files without simulating.
    Check {
        #[arg(long)]
        platform: Option<PathBuf>,
        #[arg(long)]
        workload: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    platform: PathBuf,
    #[arg(long)]
    workload: PathBuf,
    /// Downscaling factor in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Divide the bandwidth of every WAN link by this value.
    #[arg(long, default_value_t = 1.0)]
    wan_divisor: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Listing of `<cache> <file>` pairs resident at the start.
    #[arg(long)]
    initial_cache: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

impl From<Format> for TraceFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => TraceFormat::Csv,
            Format::Jsonl => TraceFormat::Jsonl,
        }
    }
}

fn scenario(c: &Common) -> Result<Scenario, RunError> {
    let s = Scenario::load(&c.platform, &c.workload, c.scale, c.wan_divisor)?;
    match &c.initial_cache {
        Some(p) => s.with_initial_cache(&read_file(p)?),
        None => Ok(s),
    }
}

fn execute(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Run { common, hitrate, seed } => {
            if let Some(h) = hitrate {
                check_hitrate(h)?;
            }
            let s = scenario(&common)?;
            let seed = seed.unwrap_or(s.workload.seed);
            let outcome = run_to_dir(&s, hitrate, seed, &common.out, common.format.into())?;
            if let Some((_, _, Ok(p))) = outcome.points.first() {
                println!(
                    "{} jobs ({} failed), makespan {:.3} s, wall time {:.2} s",
                    p.report.jobs, p.report.failed, p.report.makespan, p.report.wall_time_s
                );
            }
            Ok(())
        }
        Command::Sweep { common, hitrate, seed, jobs } => {
            for &h in &hitrate {
                check_hitrate(h)?;
            }
            let s = scenario(&common)?;
            let seeds = if seed.is_empty() { vec![s.workload.seed] } else { seed };
            let parallel = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let hs: Vec<Option<f64>> = hitrate.into_iter().map(Some).collect();
            let outcome = run_sweep(&s, &hs, &seeds, parallel, Some(&common.out), common.format.into())?;
            for (h, seed, r) in &outcome.points {
                match r {
                    Ok(p) => println!("hitrate {:.4} seed {seed}: {} jobs, makespan {:.3} s", h.unwrap_or(0.0), p.report.jobs, p.report.makespan),
                    Err(e) => eprintln!("hitrate {:.4} seed {seed}: FAILED: {e}", h.unwrap_or(0.0)),
                }
            }
            // Report the first failure's category as the exit status.
            match outcome.points.into_iter().find_map(|p| p.2.err()) {
                Some(e) => Err(e),
                None => Ok(()),
            }
        }
        Command::Check { platform, workload } => {
            if platform.is_none() && workload.is_none() {
                return Err(RunError::Config("nothing to check: pass --platform and/or --workload".into()));
            }
            if let Some(p) = platform {
                let spec = parse_platform(&read_file(&p)?)?;
                println!("# platform {}: {} sites, {} hosts, {} cores", p.display(), spec.sites.len(), spec.hosts.len(), spec.total_cores());
                print!("{}", spec.to_document());
            }
            if let Some(w) = workload {
                let spec = parse_workload(&read_file(&w)?)?;
                println!("# workload {}: {} jobs", w.display(), spec.effective_jobs());
                for (c, n) in spec.classes.iter().zip(spec.effective_class_counts()) {
                    println!("{:<12} {n}", c.name.to_string());
                }
            }
            println!("OK");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
