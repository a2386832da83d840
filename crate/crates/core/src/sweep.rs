//! Scenario loading, single runs and parallel hitrate sweeps.
//!
//! A [`Scenario`] is a platform plus workload after the command-line
//! overrides (scale factor, WAN divisor) have been applied. Sweep points are
//! fully independent simulations, so results do not depend on how many run
//! at once.

use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::monitor::{summarize, write_summary, JobTraceRecord, SummaryRow, TraceFormat, TraceSink, TraceWriter};
use crate::platform::{downscale_platform, parse_platform, PlatformError, PlatformSpec};
use crate::sim::{RunReport, SimConfig, SimError, Simulation};
use crate::storage::{parse_cache_contents, StorageError};
use crate::workload::{generate_workload, parse_workload, WorkloadError, WorkloadSpec};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("initial cache contents: {0}")]
    Contents(#[from] StorageError),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Sim(SimError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl From<SimError> for RunError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(m) => RunError::Config(m),
            SimError::Platform(p) => RunError::Platform(p),
            SimError::Storage(s) => RunError::Contents(s),
            other => RunError::Sim(other),
        }
    }
}

impl RunError {
    /// Process exit code: 2 configuration, 3 simulation, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Platform(_) | RunError::Workload(_) | RunError::Contents(_) | RunError::Config(_) => 2,
            RunError::Sim(SimError::Io(_)) | RunError::Io { .. } => 4,
            RunError::Sim(_) => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

pub fn read_file(path: &Path) -> Result<String, RunError> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Platform and workload as given, and as simulated.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub original_platform: PlatformSpec,
    pub original_workload: WorkloadSpec,
    pub platform: PlatformSpec,
    pub workload: WorkloadSpec,
    pub scale: f64,
    pub wan_divisor: f64,
    pub initial_cache: Vec<(String, String)>,
}

impl Scenario {
    pub fn new(platform: PlatformSpec, workload: WorkloadSpec, scale: f64, wan_divisor: f64) -> Result<Self, RunError> {
        let (scaled, scaled_wl) = downscale_platform(&platform, scale, &workload)?;
        let scaled = scaled.with_wan_divisor(wan_divisor)?;
        for s in &scaled_wl.site_split {
            if scaled.site(&s.site).is_none() {
                return Err(RunError::Config(format!("workload targets unknown site '{}'", s.site)));
            }
        }
        Ok(Self {
            original_platform: platform,
            original_workload: workload,
            platform: scaled,
            workload: scaled_wl,
            scale,
            wan_divisor,
            initial_cache: Vec::new(),
        })
    }

    /// Parses both documents and applies the overrides.
    pub fn from_documents(platform: &str, workload: &str, scale: f64, wan_divisor: f64) -> Result<Self, RunError> {
        Self::new(parse_platform(platform)?, parse_workload(workload)?, scale, wan_divisor)
    }

    pub fn load(platform: &Path, workload: &Path, scale: f64, wan_divisor: f64) -> Result<Self, RunError> {
        Self::from_documents(&read_file(platform)?, &read_file(workload)?, scale, wan_divisor)
    }

    pub fn with_initial_cache(mut self, listing: &str) -> Result<Self, RunError> {
        self.initial_cache = parse_cache_contents(listing)?;
        Ok(self)
    }

    /// Effective job slots: total cores of the simulated platform.
    pub fn job_slots(&self) -> u64 {
        self.platform.total_cores()
    }
}

pub fn check_hitrate(h: f64) -> Result<(), RunError> {
    if (0.0..=1.0).contains(&h) {
        Ok(())
    } else {
        Err(RunError::Config(format!("hitrate must lie in [0, 1], got {h}")))
    }
}

/// Outcome of one simulation.
#[derive(Clone, Debug)]
pub struct PointResult {
    pub hitrate: Option<f64>,
    pub seed: u64,
    pub report: RunReport,
    pub records: Vec<JobTraceRecord>,
}

struct Tee<'a> {
    keep: Vec<JobTraceRecord>,
    out: Option<&'a mut dyn TraceSink>,
}

impl TraceSink for Tee<'_> {
    fn record(&mut self, r: &JobTraceRecord) -> io::Result<()> {
        if let Some(o) = self.out.as_mut() {
            o.record(r)?;
        }
        self.keep.push(r.clone());
        Ok(())
    }
}

/// Runs the scenario once; `seed` replaces the workload seed and drives prestaging.
pub fn run_point(
    scenario: &Scenario,
    hitrate: Option<f64>,
    seed: u64,
    sink: Option<&mut dyn TraceSink>,
) -> Result<PointResult, RunError> {
    if let Some(h) = hitrate {
        check_hitrate(h)?;
    }
    let mut wl = scenario.workload.clone();
    wl.seed = seed;
    let jobs = generate_workload(&wl);
    let config = SimConfig { hitrate, seed, initial_cache: scenario.initial_cache.clone() };
    let mut sim = Simulation::new(&scenario.platform, jobs, &config)?;
    let mut tee = Tee { keep: Vec::new(), out: sink };
    let report = sim.run(&mut tee)?;
    Ok(PointResult { hitrate, seed, report, records: tee.keep })
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    command: &'a str,
    seed: Option<u64>,
    seeds: Vec<u64>,
    hitrates: Vec<Option<f64>>,
    scale: f64,
    wan_divisor: f64,
    format: &'static str,
    platform_original: String,
    platform_scaled: String,
    workload_original: String,
    workload_scaled: String,
    initial_cache: &'a [(String, String)],
    wall_time_s: f64,
    peak_event_queue: usize,
    runs: Vec<ManifestRun<'a>>,
}

#[derive(Serialize)]
struct ManifestRun<'a> {
    hitrate: Option<f64>,
    seed: u64,
    trace: Option<String>,
    report: Option<&'a RunReport>,
    error: Option<String>,
}

fn hitrate_tag(h: Option<f64>) -> String {
    match h {
        Some(h) => format!("h{h:.4}"),
        None => "hnone".into(),
    }
}

fn trace_name(h: Option<f64>, seed: u64, format: TraceFormat) -> String {
    format!("trace_{}_s{seed}.{}", hitrate_tag(h), format.extension())
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// Result of a sweep, points in `(hitrate, seed)` input order.
pub struct SweepOutcome {
    pub points: Vec<(Option<f64>, u64, Result<PointResult, RunError>)>,
    pub rows: Vec<SummaryRow>,
    pub wall_time_s: f64,
}

impl SweepOutcome {
    pub fn failed(&self) -> usize {
        self.points.iter().filter(|p| p.2.is_err()).count()
    }
}

/// Runs every `(hitrate, seed)` pair with at most `parallel` simulations at once.
///
/// With `out` set, writes one trace per point plus `summary.<ext>` and
/// `manifest.json`. Failed points are reported in the outcome and skipped.
pub fn run_sweep(
    scenario: &Scenario,
    hitrates: &[Option<f64>],
    seeds: &[u64],
    parallel: usize,
    out: Option<&Path>,
    format: TraceFormat,
) -> Result<SweepOutcome, RunError> {
    let started = std::time::Instant::now();
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let points: Vec<(Option<f64>, u64)> =
        hitrates.iter().flat_map(|&h| seeds.iter().map(move |&s| (h, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| RunError::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<PointResult, RunError>> = pool.install(|| {
        points
            .par_iter()
            .map(|&(h, seed)| match out {
                Some(dir) => {
                    let path = dir.join(trace_name(h, seed, format));
                    let mut w = TraceWriter::new(create(&path)?, format).map_err(io_err(&path))?;
                    let r = run_point(scenario, h, seed, Some(&mut w))?;
                    w.flush().map_err(io_err(&path))?;
                    Ok(r)
                }
                None => run_point(scenario, h, seed, None),
            })
            .collect()
    });

    let mut rows_in = Vec::new();
    for r in results.iter().flatten() {
        let h = r.hitrate.unwrap_or(0.0);
        rows_in.extend(r.records.iter().map(move |rec| (h, rec)));
    }
    let rows = summarize(rows_in);
    let outcome = SweepOutcome {
        points: points.into_iter().zip(results).map(|((h, s), r)| (h, s, r)).collect(),
        rows,
        wall_time_s: started.elapsed().as_secs_f64(),
    };

    if let Some(dir) = out {
        let path = dir.join(format!("summary.{}", format.extension()));
        write_summary(create(&path)?, &outcome.rows, format).map_err(io_err(&path))?;
        write_manifest(dir, scenario, &outcome, "sweep", seeds, hitrates, format)?;
    }
    Ok(outcome)
}

fn write_manifest(
    dir: &Path,
    scenario: &Scenario,
    outcome: &SweepOutcome,
    command: &str,
    seeds: &[u64],
    hitrates: &[Option<f64>],
    format: TraceFormat,
) -> Result<(), RunError> {
    let runs = outcome
        .points
        .iter()
        .map(|(h, s, r)| ManifestRun {
            hitrate: *h,
            seed: *s,
            trace: r.as_ref().ok().map(|_| trace_name(*h, *s, format)),
            report: r.as_ref().ok().map(|p| &p.report),
            error: r.as_ref().err().map(|e| e.to_string()),
        })
        .collect();
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: (seeds.len() == 1).then(|| seeds[0]),
        seeds: seeds.to_vec(),
        hitrates: hitrates.to_vec(),
        scale: scenario.scale,
        wan_divisor: scenario.wan_divisor,
        format: format.extension(),
        platform_original: scenario.original_platform.to_document(),
        platform_scaled: scenario.platform.to_document(),
        workload_original: scenario.original_workload.to_document(),
        workload_scaled: scenario.workload.to_document(),
        initial_cache: &scenario.initial_cache,
        wall_time_s: outcome.wall_time_s,
        peak_event_queue: outcome
            .points
            .iter()
            .filter_map(|p| p.2.as_ref().ok())
            .map(|p| p.report.peak_event_queue)
            .max()
            .unwrap_or(0),
        runs,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| RunError::Config(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))
}

/// Single run writing its trace, summary and manifest into `out`.
pub fn run_to_dir(
    scenario: &Scenario,
    hitrate: Option<f64>,
    seed: u64,
    out: &Path,
    format: TraceFormat,
) -> Result<SweepOutcome, RunError> {
    let outcome = run_sweep(scenario, &[hitrate], &[seed], 1, Some(out), format)?;
    // A single run reports its own failure directly.
    if let Some((_, _, Err(_))) = outcome.points.first() {
        let (_, _, r) = outcome.points.into_iter().next().unwrap();
        return Err(r.err().unwrap());
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::TWO_SITE;

    const WORKLOAD: &str = r#"
total_jobs = 40
seed = 1
site_split = [{ site = "tier1", fraction = 0.5 }, { site = "tier2", fraction = 0.5 }]

[sharing]
mode = "shared"
reuse = 2.0

[[classes]]
name = "Analysis"
proportion = 1.0
[classes.pdfs.n_input_files]
edges = [1, 3]
masses = [1.0]
[classes.pdfs.input_file_size]
edges = [1e8, 5e8]
masses = [1.0]
[classes.pdfs.flops_per_byte]
edges = [1, 20]
masses = [1.0]
[classes.pdfs.cores]
edges = [1, 2]
masses = [1.0]
[classes.pdfs.memory]
edges = [1e9, 2e9]
masses = [1.0]
[classes.pdfs.output_size]
edges = [1e6, 1e7]
masses = [1.0]
"#;

    fn scenario() -> Scenario {
        Scenario::from_documents(TWO_SITE, WORKLOAD, 1.0, 1.0).unwrap()
    }

    #[test]
    fn sweep_yields_one_row_per_site_and_hitrate() {
        let out = run_sweep(&scenario(), &[Some(0.0), Some(0.5), Some(1.0)], &[3], 2, None, TraceFormat::Csv).unwrap();
        assert_eq!(out.points.len(), 3);
        assert_eq!(out.rows.len(), 6);
        assert!(out.rows.iter().all(|r| r.exec_time.q25 <= r.exec_time.median && r.exec_time.median <= r.exec_time.q75));
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let s = scenario();
        let hs = [Some(0.0), Some(0.75)];
        let a = run_sweep(&s, &hs, &[1, 2], 1, None, TraceFormat::Csv).unwrap();
        let b = run_sweep(&s, &hs, &[1, 2], 4, None, TraceFormat::Csv).unwrap();
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn bad_hitrate_is_a_config_error() {
        let err = run_point(&scenario(), Some(2.0), 0, None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn output_files_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let s = Scenario::from_documents(TWO_SITE, WORKLOAD, 0.5, 1.0).unwrap();
        run_to_dir(&s, Some(0.5), 7, dir.path(), TraceFormat::Jsonl).unwrap();
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["seed"], 7);
        assert!(manifest["platform_original"].as_str().unwrap().contains("cores = 8"));
        assert!(manifest["platform_scaled"].as_str().unwrap().contains("cores = 4"));
        assert!(dir.path().join("summary.jsonl").exists());
        let trace = fs::read_to_string(dir.path().join(trace_name(Some(0.5), 7, TraceFormat::Jsonl))).unwrap();
        assert_eq!(trace.lines().count(), 20);
    }
}
