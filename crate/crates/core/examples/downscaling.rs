//! Downscaling a platform and its workload by a common factor.
//!
//! Runs the two-site scenario at 2% and at a quarter of that, then compares
//! per-site median job execution times and simulator wall time.
//!
//!     cargo run --release --example downscaling

use std::collections::BTreeMap;
use std::path::PathBuf;

use gridflow::sweep::{run_point, Scenario};

fn medians(scenario: &Scenario) -> (BTreeMap<String, f64>, f64) {
    let point = run_point(scenario, Some(0.5), scenario.workload.seed, None).expect("run");
    let mut by_site: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &point.records {
        by_site.entry(r.site.clone()).or_default().push(r.execution_time());
    }
    let medians = by_site
        .into_iter()
        .map(|(site, mut v)| {
            v.sort_by(f64::total_cmp);
            let m = if v.len() % 2 == 1 { v[v.len() / 2] } else { 0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2]) };
            (site, m)
        })
        .collect();
    (medians, point.report.wall_time_s)
}

fn main() {
    let configs = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mid = Scenario::load(&configs.join("table1_platform.toml"), &configs.join("study_workload.toml"), 0.02, 1.0)
        .expect("bundled configs");
    let small = Scenario::new(mid.platform.clone(), mid.workload.clone(), 0.25, 1.0).expect("downscaled");

    let (full_m, full_t) = medians(&mid);
    let (small_m, small_t) = medians(&small);
    println!("{:<8} {:>14} {:>14} {:>8}", "site", "k=1 median_s", "k=0.25 median_s", "diff");
    for (site, m) in &full_m {
        let s = small_m[site];
        println!("{site:<8} {m:>14.0} {s:>14.0} {:>7.1}%", 100.0 * (s - m) / m);
    }
    println!(
        "slots {} -> {}, wall time {full_t:.2} s -> {small_t:.2} s",
        mid.job_slots(),
        small.job_slots()
    );
}
