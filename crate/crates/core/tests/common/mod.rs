//! Independent reference models shared by the integration tests and the
//! acceptance runner.

#![allow(dead_code)]

use std::path::PathBuf;

/// One activity as seen by the oracle: `(resource, weight)` pairs, a scaling
/// factor and an optional private rate ceiling.
#[derive(Clone, Debug)]
pub struct OracleActivity {
    pub footprint: Vec<(usize, f64)>,
    pub scaling: f64,
    pub bound: Option<f64>,
}

/// Max-min allocation by naive progressive filling.
///
/// Every round recomputes residual capacities from scratch out of the frozen
/// rates, finds the lowest level at which any constraint becomes tight, and
/// freezes every activity touching a constraint that is tight at that level.
pub fn oracle_maxmin(caps: &[f64], acts: &[OracleActivity]) -> Vec<f64> {
    let n = acts.len();
    let mut rate: Vec<Option<f64>> = vec![None; n];
    while rate.iter().any(Option::is_none) {
        let mut level = f64::INFINITY;
        for (r, &cap) in caps.iter().enumerate() {
            let (fixed, open) = split_load(r, acts, &rate);
            if open > 0.0 {
                level = level.min((cap - fixed).max(0.0) / open);
            }
        }
        for (i, a) in acts.iter().enumerate() {
            if rate[i].is_none() {
                if let Some(b) = a.bound {
                    level = level.min(b);
                }
            }
        }
        let tol = level * 1e-12;
        let mut freeze = vec![false; n];
        for (r, &cap) in caps.iter().enumerate() {
            let (fixed, open) = split_load(r, acts, &rate);
            if open > 0.0 && (cap - fixed).max(0.0) / open <= level + tol {
                for (i, a) in acts.iter().enumerate() {
                    if rate[i].is_none() && a.footprint.iter().any(|&(q, _)| q == r) {
                        freeze[i] = true;
                    }
                }
            }
        }
        for (i, a) in acts.iter().enumerate() {
            if rate[i].is_none() && a.bound.is_some_and(|b| b <= level + tol) {
                freeze[i] = true;
            }
        }
        for i in 0..n {
            if freeze[i] {
                rate[i] = Some(match acts[i].bound {
                    Some(b) => level.min(b),
                    None => level,
                });
            }
        }
    }
    rate.into_iter().map(Option::unwrap).collect()
}

/// `(Σ consumption of frozen users, Σ coefficients of open users)` on resource `r`.
fn split_load(r: usize, acts: &[OracleActivity], rate: &[Option<f64>]) -> (f64, f64) {
    let mut fixed = 0.0;
    let mut open = 0.0;
    for (a, x) in acts.iter().zip(rate) {
        for &(q, w) in &a.footprint {
            if q == r {
                match x {
                    Some(v) => fixed += w * v / a.scaling,
                    None => open += w / a.scaling,
                }
            }
        }
    }
    (fixed, open)
}

/// Checks the bottleneck characterisation of a max-min allocation: every
/// activity is either at its bound or uses a saturated resource on which no
/// other user runs faster.
pub fn has_bottlenecks(caps: &[f64], acts: &[OracleActivity], rates: &[f64], tol: f64) -> bool {
    let used: Vec<f64> = (0..caps.len())
        .map(|r| {
            acts.iter()
                .zip(rates)
                .flat_map(|(a, &x)| a.footprint.iter().filter(move |f| f.0 == r).map(move |&(_, w)| w * x / a.scaling))
                .sum()
        })
        .collect();
    acts.iter().enumerate().all(|(i, a)| {
        if a.bound.is_some_and(|b| (rates[i] - b).abs() <= tol * b.max(1.0)) {
            return true;
        }
        a.footprint.iter().any(|&(r, _)| {
            let saturated = used[r] >= caps[r] * (1.0 - tol);
            let fastest = acts
                .iter()
                .enumerate()
                .filter(|(_, b)| b.footprint.iter().any(|f| f.0 == r))
                .all(|(j, _)| rates[j] <= rates[i] * (1.0 + tol) + tol);
            saturated && fastest
        })
    })
}

/// Least-recently-used cache kept as a plain list, oldest first.
#[derive(Clone, Debug, Default)]
pub struct ListLru {
    pub capacity: u64,
    pub entries: Vec<(String, u64)>,
}

impl ListLru {
    pub fn new(capacity: u64) -> Self {
        Self { capacity, entries: Vec::new() }
    }

    pub fn used(&self) -> u64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn touch(&mut self, name: &str) -> bool {
        match self.entries.iter().position(|e| e.0 == name) {
            Some(p) => {
                let e = self.entries.remove(p);
                self.entries.push(e);
                true
            }
            None => false,
        }
    }

    /// Returns the evicted names, or `None` if the file can never fit.
    pub fn admit(&mut self, name: &str, size: u64) -> Option<Vec<String>> {
        if self.touch(name) {
            return Some(Vec::new());
        }
        if size > self.capacity {
            return None;
        }
        let mut evicted = Vec::new();
        while self.used() + size > self.capacity {
            evicted.push(self.entries.remove(0).0);
        }
        self.entries.push((name.to_string(), size));
        Some(evicted)
    }

    pub fn order(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.0.as_str()).collect()
    }
}

/// Type-7 quantile of unsorted data, computed on a private sorted copy.
pub fn quantile7(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

/// One site, one host, one disk reached over one link.
pub fn single_site_platform(
    cores: u32,
    core_speed: f64,
    disk_bw: (f64, f64),
    link_bw: f64,
    latency: f64,
    block_size: u64,
) -> String {
    format!(
        r#"
[defaults]
block_size = {block_size}
input_storage = "store"

[[sites]]
name = "site"

[[sites.hosts]]
name = "node"
cores = {cores}
core_speed = {core_speed:e}
memory = "64GB"

[[sites.disks]]
name = "store"
read_bw = {:e}
write_bw = {:e}
role = "grid-storage"

[[links]]
name = "lan"
bandwidth = {link_bw:e}
latency = {latency:e}

[[routes]]
endpoints = ["site", "store"]
links = ["lan"]
"#,
        disk_bw.0, disk_bw.1
    )
}

/// Two sites sharing one grid storage; the second site has a small cache so
/// that eviction is frequent.
pub const FUZZ_PLATFORM: &str = r#"
[defaults]
block_size = "64MB"
input_storage = "t1-storage"

[[sites]]
name = "tier1"

[[sites.hosts]]
name = "t1-node"
count = 3
cores = 8
core_speed = "2Gflops"
memory = "32GB"

[[sites.disks]]
name = "t1-storage"
read_bw = "2GB/s"
write_bw = "1GB/s"
role = "grid-storage"

[[sites]]
name = "tier2"
output_storage = "t1-storage"

[[sites.hosts]]
name = "t2-node"
count = 2
cores = 12
core_speed = "1Gflops"
memory = "24GB"

[[sites.disks]]
name = "t2-cache"
read_bw = "1GB/s"
write_bw = "500MB/s"
capacity = "4GB"
role = "cache"

[[links]]
name = "t1-lan"
bandwidth = "4GB/s"
latency = "0.2ms"

[[links]]
name = "wan"
bandwidth = "600MB/s"
latency = "15ms"
wan = true

[[links]]
name = "t2-lan"
bandwidth = "1.5GB/s"
latency = "0.2ms"

[[routes]]
endpoints = ["tier1", "t1-storage"]
links = ["t1-lan"]

[[routes]]
endpoints = ["tier2", "t1-storage"]
links = ["t2-lan", "wan", "t1-lan"]

[[routes]]
endpoints = ["tier2", "t2-cache"]
links = ["t2-lan"]
"#;

/// Mixed workload with shared files, varied core counts and staggered submission.
pub fn fuzz_workload(jobs: u64, seed: u64) -> String {
    format!(
        r#"
total_jobs = {jobs}
seed = {seed}
site_split = [{{ site = "tier1", fraction = 0.55 }}, {{ site = "tier2", fraction = 0.45 }}]

[submission]
model = "uniform"
horizon = 600.0

[sharing]
mode = "shared"
reuse = 3.0

[[classes]]
name = "Analysis"
proportion = 0.7
[classes.pdfs.n_input_files]
edges = [0, 1, 4, 7]
masses = [0.05, 0.65, 0.3]
[classes.pdfs.input_file_size]
edges = [1e7, 1e8, 9e8]
masses = [0.4, 0.6]
[classes.pdfs.flops_per_byte]
edges = [0.5, 5, 40]
masses = [0.5, 0.5]
[classes.pdfs.cores]
edges = [1, 3, 5]
masses = [0.8, 0.2]
[classes.pdfs.memory]
edges = [1e9, 6e9]
masses = [1.0]
[classes.pdfs.output_size]
edges = [0, 1e6, 2e8]
masses = [0.2, 0.8]

[[classes]]
name = "Merge"
proportion = 0.3
[classes.pdfs.n_input_files]
edges = [2, 9]
masses = [1.0]
[classes.pdfs.input_file_size]
edges = [5e6, 3e8]
masses = [1.0]
[classes.pdfs.flops_per_byte]
edges = [0.1, 2]
masses = [1.0]
[classes.pdfs.cores]
edges = [1, 2]
masses = [1.0]
[classes.pdfs.memory]
edges = [5e8, 2e9]
masses = [1.0]
[classes.pdfs.output_size]
edges = [1e8, 1e9]
masses = [1.0]
"#
    )
}

/// Counters gathered while replaying a run under invariant checks.
#[derive(Debug, Default)]
pub struct InvariantStats {
    pub jobs: usize,
    pub records: usize,
    pub steps: u64,
    pub evictions: u64,
    pub max_overload: f64,
    pub worst_decomposition: f64,
}

/// Steps a simulation to the end and checks conservation, cache capacity,
/// rate feasibility and the per-record time decomposition.
pub fn run_with_invariants(
    platform: &str,
    workload: &str,
    hitrate: Option<f64>,
    seed: u64,
) -> Result<InvariantStats, String> {
    use gridflow::{generate_workload, parse_platform, parse_workload, SimConfig, Simulation};
    use std::collections::HashMap;

    let p = parse_platform(platform).map_err(|e| e.to_string())?;
    let w = parse_workload(workload).map_err(|e| e.to_string())?;
    let jobs = generate_workload(&w);
    let inputs: HashMap<u64, u64> = jobs.iter().map(|j| (j.id, j.input_bytes())).collect();
    let config = SimConfig { hitrate, seed, ..SimConfig::default() };
    let mut sim = Simulation::new(&p, jobs, &config).map_err(|e| e.to_string())?;
    let mut stats = InvariantStats { jobs: inputs.len(), ..Default::default() };
    let check = |sim: &mut Simulation, stats: &mut InvariantStats| -> Result<(), String> {
        for c in sim.storage().caches() {
            if c.used() > c.capacity {
                return Err(format!("t={}: cache {} holds {} > {}", sim.clock(), c.disk, c.used(), c.capacity));
            }
        }
        for f in sim.drain_finished() {
            let r = &f.record;
            stats.records += 1;
            if r.failed() {
                return Err(format!("job {} failed: {}", r.job_id, r.failure));
            }
            if r.bytes_from_cache + r.bytes_remote != inputs[&r.job_id] {
                return Err(format!(
                    "job {}: {} + {} bytes read, {} expected",
                    r.job_id, r.bytes_from_cache, r.bytes_remote, inputs[&r.job_id]
                ));
            }
            if !(r.start >= r.submit && r.end >= r.start) {
                return Err(format!("job {}: submit {} start {} end {}", r.job_id, r.submit, r.start, r.end));
            }
            let gap = (r.compute_time + r.stall_time + r.output_write_time - (r.end - r.start)).abs();
            stats.worst_decomposition = stats.worst_decomposition.max(gap);
            if gap > 1e-9 {
                return Err(format!("job {}: time decomposition off by {gap}", r.job_id));
            }
        }
        Ok(())
    };
    while sim.step().map_err(|e| e.to_string())? {
        stats.steps += 1;
        check(&mut sim, &mut stats)?;
    }
    check(&mut sim, &mut stats)?;
    let report = sim.report();
    stats.max_overload = report.max_overload;
    stats.evictions = report.caches.iter().map(|c| c.evictions).sum();
    if report.max_overload > 1e-9 {
        return Err(format!("a resource was oversubscribed by {}", report.max_overload));
    }
    if stats.records != stats.jobs {
        return Err(format!("{} records for {} jobs", stats.records, stats.jobs));
    }
    Ok(stats)
}
