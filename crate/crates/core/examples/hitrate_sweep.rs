//! Cache hitrate sweep on the two-site platform, downscaled to 1%.
//!
//! Prints the CPU efficiency box statistics per site and hitrate. Pass a
//! WAN divisor of 10 to reproduce the reduced-WAN variant.
//!
//!     cargo run --release --example hitrate_sweep -- [wan_divisor] [scale]

use std::path::PathBuf;

use gridflow::monitor::TraceFormat;
use gridflow::sweep::{run_sweep, Scenario};

fn main() {
    let mut args = std::env::args().skip(1);
    let wan_divisor: f64 = args.next().map_or(1.0, |a| a.parse().expect("WAN divisor"));
    let scale: f64 = args.next().map_or(0.01, |a| a.parse().expect("scale"));
    let configs = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs");
    let scenario = Scenario::load(
        &configs.join("table1_platform.toml"),
        &configs.join("study_workload.toml"),
        scale,
        wan_divisor,
    )
    .expect("bundled configs");
    println!("{} job slots, {} jobs, WAN divided by {wan_divisor}", scenario.job_slots(), scenario.workload.effective_jobs());

    let hitrates: Vec<Option<f64>> = [0.0, 0.25, 0.5, 0.75, 0.95, 1.0].into_iter().map(Some).collect();
    let parallel = std::thread::available_parallelism().map_or(1, |n| n.get());
    let out = run_sweep(&scenario, &hitrates, &[scenario.workload.seed], parallel, None, TraceFormat::Csv)
        .expect("sweep");

    println!(
        "{:>7} {:<6} {:>6} {:>7} {:>7} {:>7} {:>7} {:>7} {:>9}",
        "hitrate", "site", "cached", "whisk-", "q25", "median", "q75", "whisk+", "outliers"
    );
    for r in &out.rows {
        let b = &r.cpu_efficiency;
        println!(
            "{:>7.2} {:<6} {:>6.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>9}",
            r.hitrate, r.site, r.cache_fraction, b.whisker_low, b.q25, b.median, b.q75, b.whisker_high, b.outliers
        );
    }
    println!("wall time {:.1} s", out.wall_time_s);
}
