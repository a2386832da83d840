//! Starting from an explicit cache listing instead of a sampled hitrate.
//!
//! Half of the files read at the cache site are listed as resident; the
//! run reports how many bytes came from the cache and how the cache
//! counters evolved.
//!
//!     cargo run --example initial_cache

use std::collections::BTreeSet;

use gridflow::sweep::{run_point, Scenario};

const PLATFORM: &str = r#"
[defaults]
block_size = "100MB"
input_storage = "origin"

[[sites]]
name = "hub"

[[sites.hosts]]
name = "hub-node"
cores = 16
core_speed = "2Gflops"
memory = "64GB"

[[sites.disks]]
name = "origin"
read_bw = "1GB/s"
write_bw = "1GB/s"
role = "grid-storage"

[[sites]]
name = "edge"

[[sites.hosts]]
name = "edge-node"
count = 2
cores = 8
core_speed = "2Gflops"
memory = "32GB"

[[sites.disks]]
name = "edge-cache"
read_bw = "2GB/s"
write_bw = "2GB/s"
capacity = "50GB"
role = "cache"

[[links]]
name = "hub-lan"
bandwidth = "2GB/s"
latency = "0.1ms"

[[links]]
name = "edge-lan"
bandwidth = "1GB/s"
latency = "0.1ms"

[[links]]
name = "wan"
bandwidth = "200MB/s"
latency = "20ms"
wan = true

[[routes]]
endpoints = ["hub", "origin"]
links = ["hub-lan"]

[[routes]]
endpoints = ["edge", "origin"]
links = ["edge-lan", "wan", "hub-lan"]

[[routes]]
endpoints = ["edge", "edge-cache"]
links = ["edge-lan"]
"#;

const WORKLOAD: &str = r#"
total_jobs = 60
seed = 11
site_split = [{ site = "hub", fraction = 0.3 }, { site = "edge", fraction = 0.7 }]

[sharing]
mode = "shared"
reuse = 2.0

[[classes]]
name = "Analysis"
proportion = 1.0
[classes.pdfs.n_input_files]
edges = [1, 4]
masses = [1.0]
[classes.pdfs.input_file_size]
edges = [2e8, 1e9]
masses = [1.0]
[classes.pdfs.flops_per_byte]
edges = [5, 20]
masses = [1.0]
[classes.pdfs.cores]
edges = [1, 3]
masses = [1.0]
[classes.pdfs.memory]
edges = [1e9, 4e9]
masses = [1.0]
[classes.pdfs.output_size]
edges = [1e6, 5e7]
masses = [1.0]
"#;

fn main() {
    let scenario = Scenario::from_documents(PLATFORM, WORKLOAD, 1.0, 1.0).expect("valid scenario");
    let edge_files: BTreeSet<String> = gridflow::generate_workload(&scenario.workload)
        .iter()
        .filter(|j| j.target_site.as_deref() == Some("edge"))
        .flat_map(|j| j.input_files.iter().map(|f| f.name.clone()))
        .collect();
    let listing: String = edge_files.iter().step_by(2).map(|f| format!("edge-cache {f}\n")).collect();
    println!("listing {} of {} edge files as resident", edge_files.len().div_ceil(2), edge_files.len());

    for (label, s) in [("cold", scenario.clone()), ("listed", scenario.with_initial_cache(&listing).expect("listing"))] {
        let p = run_point(&s, None, s.workload.seed, None).expect("run");
        let (cached, remote) = p
            .records
            .iter()
            .filter(|r| r.site == "edge")
            .fold((0, 0), |(c, r), rec| (c + rec.bytes_from_cache, r + rec.bytes_remote));
        let cache = &p.report.caches[0];
        println!(
            "{label:<7} makespan {:>8.1} s, edge bytes cached {:.1}%, hits {} misses {} evictions {}",
            p.report.makespan,
            100.0 * cached as f64 / (cached + remote) as f64,
            cache.hits,
            cache.misses,
            cache.evictions
        );
    }
}
