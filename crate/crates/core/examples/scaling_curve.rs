//! Simulator wall time against platform size.
//!
//!     cargo run --release --example scaling_curve

use std::path::PathBuf;

use gridflow::sweep::{run_point, Scenario};

fn main() {
    let configs = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs");
    let base = Scenario::load(&configs.join("table1_platform.toml"), &configs.join("study_workload.toml"), 1.0, 1.0)
        .expect("bundled configs");
    println!("{:>8} {:>7} {:>7} {:>10} {:>12} {:>10}", "scale", "slots", "jobs", "wall_s", "solves", "peak_acts");
    let mut points = Vec::new();
    for k in [0.005, 0.0071, 0.01, 0.0141, 0.02] {
        let s = Scenario::new(base.platform.clone(), base.workload.clone(), k, 1.0).expect("downscaled");
        let p = run_point(&s, Some(0.5), s.workload.seed, None).expect("run");
        println!(
            "{k:>8.4} {:>7} {:>7} {:>10.3} {:>12} {:>10}",
            s.job_slots(),
            p.report.jobs,
            p.report.wall_time_s,
            p.report.rate_solves,
            p.report.peak_live_activities
        );
        points.push(((s.job_slots() as f64).ln(), p.report.wall_time_s.ln()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    println!("log-log slope {slope:.2}");
}
