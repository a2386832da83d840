//! A lone streaming job: simulated duration against the closed form.
//!
//! Reads of block i+1 overlap the computation of block i, so the job is
//! read-bound or compute-bound depending on its flops per byte.
//!
//!     cargo run --example streaming_job

use gridflow::jobs::{pipeline_bound, JobClass, UncontendedPath};
use gridflow::sim::execute_streaming_job;
use gridflow::{parse_platform, FileId, JobSpec};

const PLATFORM: &str = r#"
[defaults]
block_size = "256MB"
input_storage = "store"

[[sites]]
name = "site"

[[sites.hosts]]
name = "node"
cores = 8
core_speed = "5Gflops"
memory = "32GB"

[[sites.disks]]
name = "store"
read_bw = "400MB/s"
write_bw = "200MB/s"
role = "grid-storage"

[[links]]
name = "lan"
bandwidth = "10Gb/s"
latency = "1ms"

[[routes]]
endpoints = ["site", "store"]
links = ["lan"]
"#;

fn main() {
    let platform = parse_platform(PLATFORM).expect("valid platform");
    let path = UncontendedPath { read_rate: 400e6, read_latency: 1e-3, write_rate: 200e6, write_latency: 1e-3 };
    println!("{:>8} {:>12} {:>12} {:>8} {:>10}", "fpb", "simulated_s", "bound_s", "eff", "stall_s");
    for fpb in [1.0, 5.0, 12.5, 25.0, 100.0] {
        let job = JobSpec {
            id: 0,
            class: JobClass::Processing,
            input_files: vec![
                FileId { name: "run-a".into(), size: 2_000_000_000 },
                FileId { name: "run-b".into(), size: 700_000_000 },
            ],
            flops_per_byte: fpb,
            cores: 4,
            memory: 8_000_000_000,
            output_size: 300_000_000,
            submit_time: 0.0,
            block_size: None,
            target_site: None,
        };
        let bound = pipeline_bound(&job, platform.defaults.block_size, &path, &platform.hosts[0]);
        let done = execute_streaming_job(&platform, job, "node").expect("job runs");
        let r = &done.record;
        println!(
            "{fpb:>8.1} {:>12.3} {bound:>12.3} {:>8.3} {:>10.3}",
            r.end - r.start,
            r.cpu_efficiency,
            r.stall_time
        );
    }
}
