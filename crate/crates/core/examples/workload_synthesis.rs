//! Samples the study workload and compares realised statistics with the
//! binned distributions they were drawn from.
//!
//!     cargo run --example workload_synthesis -- [jobs]

use std::collections::BTreeMap;

use gridflow::workload::Characteristic;
use gridflow::{generate_workload, parse_workload};

fn main() {
    let jobs: u64 = std::env::args().nth(1).map_or(5000, |a| a.parse().expect("job count"));
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/study_workload.toml"))
        .expect("bundled workload");
    let mut spec = parse_workload(&text).expect("valid workload");
    spec.total_jobs = jobs;
    let sample = generate_workload(&spec);

    let mut by_class: BTreeMap<String, Vec<&gridflow::JobSpec>> = BTreeMap::new();
    for j in &sample {
        by_class.entry(j.class.to_string()).or_default().push(j);
    }
    println!("{:<12} {:>6} {:>8} {:>10} {:>10} {:>10}", "class", "jobs", "share", "files", "fpb", "pdf fpb");
    for class in &spec.classes {
        let name = class.name.to_string();
        let js = by_class.get(&name).map_or(&[][..], Vec::as_slice);
        let n = js.len().max(1) as f64;
        let files = js.iter().map(|j| j.input_files.len() as f64).sum::<f64>() / n;
        let fpb = js.iter().map(|j| j.flops_per_byte).sum::<f64>() / n;
        println!(
            "{name:<12} {:>6} {:>8.4} {files:>10.2} {fpb:>10.0} {:>10.0}",
            js.len(),
            js.len() as f64 / sample.len() as f64,
            class.pdfs[&Characteristic::FlopsPerByte].mean()
        );
    }
    let mut sites: BTreeMap<String, usize> = BTreeMap::new();
    for j in &sample {
        *sites.entry(j.target_site.clone().unwrap_or_default()).or_default() += 1;
    }
    println!("jobs per site: {sites:?}");
}
