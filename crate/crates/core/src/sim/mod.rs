//! Discrete-event simulation of a workload on a platform.
//!
//! [`Simulation`] owns the engine, the scheduler and the storage services and
//! drives every job through submission, matching, the streaming pipeline and
//! the output write. It can be stepped one engine event at a time or run to
//! completion while records stream into a [`TraceSink`].

use std::collections::HashMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{ActivityKind, ActivitySpec, Engine, EngineError, EngineStats, EventKind, ResourceId, ResourceKind};
use crate::jobs::{block_plan, cpu_efficiency, Block, JobPhaseTrace, JobSpec};
use crate::monitor::{JobTraceRecord, TraceSink};
use crate::platform::{PlatformError, PlatformSpec};
use crate::scheduler::Scheduler;
use crate::storage::{Admission, FileId, ReplicaCatalog, Source, Storage, StorageError};

/// RNG stream reserved for choosing prestaged files.
const PRESTAGE_STREAM: u64 = 0x5eed_cace;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("writing trace: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, Default)]
pub struct SimConfig {
    /// Fraction of each cache's distinct input files staged before t = 0.
    /// `None` leaves caches empty (apart from `initial_cache`).
    pub hitrate: Option<f64>,
    pub seed: u64,
    /// Explicit `(cache disk, file name)` initial contents.
    pub initial_cache: Vec<(String, String)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CacheReport {
    pub disk: String,
    pub site: String,
    pub capacity: u64,
    pub used: u64,
    pub files: usize,
    pub prestaged: usize,
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub bypasses: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub makespan: f64,
    pub jobs: usize,
    pub completed: usize,
    pub failed: usize,
    pub peak_scheduler_queue: usize,
    pub peak_event_queue: usize,
    pub peak_live_activities: usize,
    pub engine_steps: u64,
    pub rate_solves: u64,
    pub max_overload: f64,
    pub caches: Vec<CacheReport>,
    pub wall_time_s: f64,
}

/// A job that left the system, with its phase timings.
#[derive(Clone, Debug)]
pub struct FinishedJob {
    pub record: JobTraceRecord,
    pub phases: JobPhaseTrace,
}

#[derive(Clone, Copy, Debug)]
enum Ev {
    Submit(usize),
    Start(usize, usize),
    Read(usize),
    Compute(usize),
    Write(usize),
}

#[derive(Clone, Debug)]
struct ReadSource {
    footprint: Vec<(ResourceId, f64)>,
    latency: f64,
    from_cache: bool,
    admit_to: Option<usize>,
}

#[derive(Clone, Debug)]
struct RoutePath {
    links: Vec<ResourceId>,
    latency: f64,
}

struct Run {
    host: usize,
    start: f64,
    blocks: Vec<Block>,
    sources: Vec<Option<ReadSource>>,
    next_read: usize,
    read_done: usize,
    computed: usize,
    computing: bool,
    phases: JobPhaseTrace,
    bytes_cache: u64,
    bytes_remote: u64,
}

pub struct Simulation {
    engine: Engine<Ev>,
    platform: PlatformSpec,
    jobs: Vec<JobSpec>,
    runs: Vec<Option<Run>>,
    scheduler: Scheduler,
    storage: Storage,
    cpu: Vec<ResourceId>,
    link: HashMap<String, ResourceId>,
    disk_read: Vec<ResourceId>,
    disk_write: Vec<ResourceId>,
    disk_index: HashMap<String, usize>,
    /// Output disk per site index.
    output_disk: Vec<Option<usize>>,
    host_site: Vec<usize>,
    routes: HashMap<(usize, usize), RoutePath>,
    /// `(cache, file)` currently being copied in, with jobs waiting for it.
    inflight: HashMap<(usize, String), Vec<usize>>,
    prestaged: Vec<usize>,
    finished: Vec<FinishedJob>,
    done: usize,
    failed: usize,
    rematch: bool,
    started_at: Instant,
}

fn merge_footprint(mut fp: Vec<(ResourceId, f64)>) -> Vec<(ResourceId, f64)> {
    fp.sort_by_key(|(r, _)| *r);
    fp.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 += b.1;
            true
        } else {
            false
        }
    });
    fp
}

impl Simulation {
    /// Builds a simulation whose input files all live on the platform's input storage.
    pub fn new(platform: &PlatformSpec, jobs: Vec<JobSpec>, config: &SimConfig) -> Result<Self, SimError> {
        let catalog = match platform.input_storage() {
            Some(d) => ReplicaCatalog::for_jobs(&jobs, d),
            None => ReplicaCatalog::new(),
        };
        Self::with_catalog(platform, jobs, config, catalog)
    }

    pub fn with_catalog(
        platform: &PlatformSpec,
        jobs: Vec<JobSpec>,
        config: &SimConfig,
        catalog: ReplicaCatalog,
    ) -> Result<Self, SimError> {
        let started_at = Instant::now();
        let mut engine = Engine::new();
        let mut cpu = Vec::new();
        for h in &platform.hosts {
            cpu.push(engine.add_resource(format!("{}/cpu", h.name), ResourceKind::Cpu, h.cores as f64 * h.core_speed)?);
        }
        let mut link = HashMap::new();
        for l in &platform.links {
            link.insert(l.name.clone(), engine.add_resource(l.name.clone(), ResourceKind::Link, l.bandwidth)?);
        }
        let mut disk_read = Vec::new();
        let mut disk_write = Vec::new();
        let mut disk_index = HashMap::new();
        for (i, d) in platform.disks.iter().enumerate() {
            disk_read.push(engine.add_resource(format!("{}/read", d.name), ResourceKind::DiskRead, d.read_bw)?);
            disk_write.push(engine.add_resource(format!("{}/write", d.name), ResourceKind::DiskWrite, d.write_bw)?);
            disk_index.insert(d.name.clone(), i);
        }
        let site_idx: HashMap<&str, usize> =
            platform.sites.iter().enumerate().map(|(i, s)| (s.name.as_str(), i)).collect();
        let host_site = platform.hosts.iter().map(|h| site_idx[h.site.as_str()]).collect();
        let output_disk = platform
            .sites
            .iter()
            .map(|s| platform.output_storage_for(&s.name).and_then(|d| disk_index.get(d).copied()))
            .collect();

        let scheduler = Scheduler::new(platform);
        let mut storage = Storage::new(platform, catalog);
        let mut prestaged = vec![0; storage.caches().len()];
        if let Some(h) = config.hitrate {
            if !(0.0..=1.0).contains(&h) {
                return Err(SimError::Config(format!("hitrate must lie in [0, 1], got {h}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(PRESTAGE_STREAM);
            for r in storage.prestage(&jobs, h, &mut rng) {
                prestaged[storage.cache_index(&r.location).expect("staged into a known cache")] += 1;
            }
        }
        for r in storage.preload(&config.initial_cache)? {
            prestaged[storage.cache_index(&r.location).expect("preloaded into a known cache")] += 1;
        }

        for (k, j) in jobs.iter().enumerate() {
            scheduler.entry_for(k, j, j.submit_time).map_err(|e| SimError::Config(e.to_string()))?;
            if !(j.submit_time >= 0.0) || !j.submit_time.is_finite() {
                return Err(SimError::Config(format!("job {} has submit time {}", j.id, j.submit_time)));
            }
            engine.schedule(j.submit_time, EventKind::Submission, Ev::Submit(k))?;
        }

        let runs = jobs.iter().map(|_| None).collect();
        Ok(Self {
            engine,
            platform: platform.clone(),
            jobs,
            runs,
            scheduler,
            storage,
            cpu,
            link,
            disk_read,
            disk_write,
            disk_index,
            output_disk,
            host_site,
            routes: HashMap::new(),
            inflight: HashMap::new(),
            prestaged,
            finished: Vec::new(),
            done: 0,
            failed: 0,
            rematch: false,
            started_at,
        })
    }

    pub fn clock(&self) -> f64 {
        self.engine.clock()
    }

    pub fn platform(&self) -> &PlatformSpec {
        &self.platform
    }

    pub fn jobs(&self) -> &[JobSpec] {
        &self.jobs
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    pub fn engine_stats(&self) -> EngineStats {
        self.engine.stats()
    }

    pub fn running_jobs(&self) -> usize {
        self.runs.iter().filter(|r| r.is_some()).count()
    }

    pub fn is_finished(&self) -> bool {
        self.done + self.failed == self.jobs.len() && self.engine.is_idle()
    }

    /// Takes the jobs that finished since the last call.
    pub fn drain_finished(&mut self) -> Vec<FinishedJob> {
        std::mem::take(&mut self.finished)
    }

    /// Places `job` on `host` right now, bypassing the queue.
    pub fn inject(&mut self, job: JobSpec, host: &str) -> Result<usize, SimError> {
        let h = self
            .platform
            .hosts
            .iter()
            .position(|x| x.name == host)
            .ok_or_else(|| SimError::Config(format!("unknown host '{host}'")))?;
        for f in &job.input_files {
            if self.storage.catalog.size_of(&f.name).is_none() {
                if let Some(d) = self.platform.input_storage() {
                    let d = d.to_string();
                    self.storage.catalog.add(f, &d);
                }
            }
        }
        if !self.scheduler.reserve(h, job.id, job.cores, job.memory) {
            return Err(SimError::Config(format!("job {} does not fit on '{host}' now", job.id)));
        }
        let k = self.jobs.len();
        self.jobs.push(job);
        self.runs.push(None);
        self.start_job(k, h)?;
        Ok(k)
    }

    /// Processes one engine step. Returns `false` once nothing is left to do.
    pub fn step(&mut self) -> Result<bool, SimError> {
        let Some(step) = self.engine.advance()? else {
            let stuck = self.jobs.len() - self.done - self.failed;
            if stuck > 0 {
                return Err(SimError::Internal(format!("{stuck} jobs never finished")));
            }
            return Ok(false);
        };
        for c in step.completed {
            match c.owner {
                Ev::Read(k) => self.on_read_done(k)?,
                Ev::Compute(k) => self.on_compute_done(k)?,
                Ev::Write(k) => self.finish(k, None)?,
                other => return Err(SimError::Internal(format!("activity owned by {other:?}"))),
            }
        }
        let mut need_match = false;
        for (_, ev) in step.fired {
            match ev {
                Ev::Submit(k) => {
                    let e = self
                        .scheduler
                        .entry_for(k, &self.jobs[k], step.clock)
                        .map_err(|e| SimError::Config(e.to_string()))?;
                    self.scheduler.enqueue(e);
                    need_match = true;
                }
                Ev::Start(k, h) => self.start_job(k, h)?,
                other => return Err(SimError::Internal(format!("timer carrying {other:?}"))),
            }
        }
        if need_match {
            self.rematch = true;
        }
        while self.rematch {
            self.rematch = false;
            self.match_pending()?;
        }
        Ok(true)
    }

    /// Runs to completion, streaming every finished job into `sink`.
    pub fn run(&mut self, sink: &mut dyn TraceSink) -> Result<RunReport, SimError> {
        while self.step()? {
            for f in self.finished.drain(..) {
                sink.record(&f.record)?;
            }
        }
        for f in self.finished.drain(..) {
            sink.record(&f.record)?;
        }
        Ok(self.report())
    }

    pub fn report(&self) -> RunReport {
        let stats = self.engine.stats();
        RunReport {
            makespan: self.engine.clock(),
            jobs: self.jobs.len(),
            completed: self.done,
            failed: self.failed,
            peak_scheduler_queue: self.scheduler.peak_queue_len(),
            peak_event_queue: stats.peak_queue_len,
            peak_live_activities: stats.peak_live_activities,
            engine_steps: stats.steps,
            rate_solves: stats.solves,
            max_overload: stats.max_overload.max(0.0),
            caches: self
                .storage
                .caches()
                .iter()
                .zip(&self.prestaged)
                .map(|(c, &p)| CacheReport {
                    disk: c.disk.clone(),
                    site: c.site.clone(),
                    capacity: c.capacity,
                    used: c.used(),
                    files: c.len(),
                    prestaged: p,
                    hits: c.hits,
                    misses: c.misses,
                    evictions: c.evictions,
                    bypasses: c.bypasses,
                })
                .collect(),
            wall_time_s: self.started_at.elapsed().as_secs_f64(),
        }
    }

    fn match_pending(&mut self) -> Result<(), SimError> {
        let delay = self.platform.defaults.match_delay;
        for p in self.scheduler.match_jobs() {
            if delay > 0.0 {
                self.engine.schedule(self.engine.clock() + delay, EventKind::Timer, Ev::Start(p.key, p.host))?;
            } else {
                self.start_job(p.key, p.host)?;
            }
        }
        Ok(())
    }

    fn route(&mut self, host: usize, disk: usize) -> Result<RoutePath, SimError> {
        if let Some(r) = self.routes.get(&(host, disk)) {
            return Ok(r.clone());
        }
        let names = self.platform.resolve_route(&self.platform.hosts[host].name, &self.platform.disks[disk].name)?;
        let path = RoutePath {
            links: names.iter().map(|n| self.link[n]).collect(),
            latency: self.platform.route_latency(&names),
        };
        self.routes.insert((host, disk), path.clone());
        Ok(path)
    }

    fn read_source(&mut self, host: usize, disk: usize, admit_to: Option<usize>) -> Result<ReadSource, SimError> {
        let path = self.route(host, disk)?;
        let mut fp: Vec<(ResourceId, f64)> = path.links.iter().map(|&l| (l, 1.0)).collect();
        fp.push((self.disk_read[disk], 1.0));
        if let Some(c) = admit_to {
            let cd = self.disk_index[&self.storage.caches()[c].disk];
            fp.push((self.disk_write[cd], 1.0));
        }
        Ok(ReadSource { footprint: merge_footprint(fp), latency: path.latency, from_cache: false, admit_to })
    }

    fn cache_source(&mut self, host: usize, cache: usize) -> Result<ReadSource, SimError> {
        let d = self.disk_index[&self.storage.caches()[cache].disk];
        let mut s = self.read_source(host, d, None)?;
        s.from_cache = true;
        Ok(s)
    }

    fn start_job(&mut self, k: usize, host: usize) -> Result<(), SimError> {
        let now = self.engine.clock();
        let job = &self.jobs[k];
        let blocks = block_plan(job, self.platform.defaults.block_size);
        let run = Run {
            host,
            start: now,
            blocks,
            sources: vec![None; job.input_files.len()],
            next_read: 0,
            read_done: 0,
            computed: 0,
            computing: false,
            phases: JobPhaseTrace::default(),
            bytes_cache: 0,
            bytes_remote: 0,
        };
        self.runs[k] = Some(run);

        let missing = job.input_files.iter().find(|f| self.storage.catalog.authoritative(&f.name).is_none());
        if let Some(f) = missing {
            let msg = StorageError::NoReplica(f.name.clone()).to_string();
            return self.finish(k, Some(msg));
        }
        if job.output_size > 0 && self.output_disk[self.host_site[host]].is_none() {
            let msg = format!("no output storage for site '{}'", self.platform.hosts[host].site);
            return self.finish(k, Some(msg));
        }
        if self.runs[k].as_ref().unwrap().blocks.is_empty() {
            self.start_write(k)
        } else {
            self.issue_read(k)
        }
    }

    fn run_mut(&mut self, k: usize) -> Result<&mut Run, SimError> {
        self.runs[k].as_mut().ok_or_else(|| SimError::Internal(format!("job slot {k} is not running")))
    }

    fn issue_read(&mut self, k: usize) -> Result<(), SimError> {
        let (host, block) = {
            let r = self.run_mut(k)?;
            (r.host, r.blocks[r.next_read])
        };
        if self.runs[k].as_ref().unwrap().sources[block.file].is_none() {
            let file: FileId = self.jobs[k].input_files[block.file].clone();
            let site = self.platform.hosts[host].site.clone();
            let src = match self.storage.locate_input(&file, &site)? {
                Source::Cache(c) => self.cache_source(host, c)?,
                Source::Remote { disk, cache } => {
                    let d = self.disk_index[&disk];
                    match cache {
                        Some(c) => {
                            if let Some(waiters) = self.inflight.get_mut(&(c, file.name.clone())) {
                                waiters.push(k);
                                return Ok(());
                            }
                            self.inflight.insert((c, file.name.clone()), Vec::new());
                            self.read_source(host, d, Some(c))?
                        }
                        None => self.read_source(host, d, None)?,
                    }
                }
            };
            self.run_mut(k)?.sources[block.file] = Some(src);
        }
        let now = self.engine.clock();
        let r = self.runs[k].as_mut().unwrap();
        let src = r.sources[block.file].as_ref().unwrap();
        let spec = ActivitySpec::new(ActivityKind::Transfer, src.footprint.clone(), block.bytes as f64)
            .with_latency(src.latency);
        r.phases.reads.push((now, f64::NAN));
        r.next_read += 1;
        self.engine.spawn(spec, Ev::Read(k))?;
        Ok(())
    }

    fn on_read_done(&mut self, k: usize) -> Result<(), SimError> {
        let now = self.engine.clock();
        let r = self.run_mut(k)?;
        let b = r.read_done;
        let block = r.blocks[b];
        r.phases.reads[b].1 = now;
        r.read_done += 1;
        let src = r.sources[block.file].as_ref().unwrap();
        let admit_to = src.admit_to;
        if src.from_cache {
            r.bytes_cache += block.bytes;
        } else {
            r.bytes_remote += block.bytes;
        }
        if block.last_of_file {
            if let Some(c) = admit_to {
                let file = self.jobs[k].input_files[block.file].clone();
                if let Admission::Bypassed = self.storage.admit(c, &file) {
                    log::warn!("file {} bypassed cache after copy", file.name);
                }
                let waiters = self.inflight.remove(&(c, file.name)).unwrap_or_default();
                for w in waiters {
                    let host = self.run_mut(w)?.host;
                    let fi = self.runs[w].as_ref().unwrap().blocks[self.runs[w].as_ref().unwrap().next_read].file;
                    let s = self.cache_source(host, c)?;
                    self.run_mut(w)?.sources[fi] = Some(s);
                    self.issue_read(w)?;
                }
            }
        }
        self.try_compute(k)
    }

    fn try_compute(&mut self, k: usize) -> Result<(), SimError> {
        let now = self.engine.clock();
        let job = &self.jobs[k];
        let host = &self.platform.hosts[self.runs[k].as_ref().unwrap().host];
        let rate = job.cores as f64 * host.core_speed;
        let fpb = job.flops_per_byte;
        let r = self.runs[k].as_mut().unwrap();
        if r.computing || r.computed >= r.read_done {
            return Ok(());
        }
        let block = r.blocks[r.computed];
        let spec = ActivitySpec::new(ActivityKind::Compute, vec![(self.cpu[r.host], 1.0)], block.bytes as f64 * fpb)
            .with_bound(rate);
        r.computing = true;
        r.phases.computes.push((now, f64::NAN));
        let issue_next = r.next_read < r.blocks.len() && r.next_read == r.computed + 1;
        self.engine.spawn(spec, Ev::Compute(k))?;
        if issue_next {
            self.issue_read(k)?;
        }
        Ok(())
    }

    fn on_compute_done(&mut self, k: usize) -> Result<(), SimError> {
        let now = self.engine.clock();
        let r = self.run_mut(k)?;
        let c = r.computed;
        r.phases.computes[c].1 = now;
        r.computed += 1;
        r.computing = false;
        if r.computed == r.blocks.len() {
            self.start_write(k)
        } else {
            self.try_compute(k)
        }
    }

    fn start_write(&mut self, k: usize) -> Result<(), SimError> {
        let out = self.jobs[k].output_size;
        if out == 0 {
            return self.finish(k, None);
        }
        let host = self.run_mut(k)?.host;
        let disk = self.output_disk[self.host_site[host]].expect("checked at job start");
        let path = self.route(host, disk)?;
        let mut fp: Vec<(ResourceId, f64)> = path.links.iter().map(|&l| (l, 1.0)).collect();
        fp.push((self.disk_write[disk], 1.0));
        let spec = ActivitySpec::new(ActivityKind::Transfer, merge_footprint(fp), out as f64).with_latency(path.latency);
        let now = self.engine.clock();
        self.run_mut(k)?.phases.output_write = Some((now, f64::NAN));
        self.engine.spawn(spec, Ev::Write(k))?;
        Ok(())
    }

    fn finish(&mut self, k: usize, failure: Option<String>) -> Result<(), SimError> {
        let now = self.engine.clock();
        let mut run = self.runs[k].take().ok_or_else(|| SimError::Internal(format!("job slot {k} finished twice")))?;
        if let Some(w) = &mut run.phases.output_write {
            w.1 = now;
        }
        let job = &self.jobs[k];
        let host = &self.platform.hosts[run.host];
        let mut record = JobTraceRecord {
            job_id: job.id,
            class: job.class,
            site: host.site.clone(),
            host: host.name.clone(),
            submit: job.submit_time,
            start: run.start,
            end: now,
            compute_time: run.phases.compute_time(),
            stall_time: run.phases.stall_time(run.start, now),
            output_write_time: run.phases.output_write_time(),
            bytes_from_cache: run.bytes_cache,
            bytes_remote: run.bytes_remote,
            transfer_time: run.phases.transfer_time(),
            cpu_efficiency: 0.0,
            failure: failure.clone().unwrap_or_default(),
        };
        if failure.is_none() {
            record.cpu_efficiency = cpu_efficiency(&record).map_err(|e| SimError::Internal(e.to_string()))?;
        }
        self.scheduler
            .release(run.host, job.id, job.cores, job.memory)
            .map_err(|e| SimError::Internal(e.to_string()))?;
        if failure.is_some() {
            self.failed += 1;
        } else {
            self.done += 1;
        }
        self.finished.push(FinishedJob { record, phases: run.phases });
        self.rematch = true;
        Ok(())
    }
}

/// Runs a single job alone on `host` and returns its record and phases.
pub fn execute_streaming_job(platform: &PlatformSpec, job: JobSpec, host: &str) -> Result<FinishedJob, SimError> {
    execute_with_cache(platform, job, host, &[])
}

/// Like [`execute_streaming_job`], with files pre-placed in caches.
pub fn execute_with_cache(
    platform: &PlatformSpec,
    job: JobSpec,
    host: &str,
    initial_cache: &[(String, String)],
) -> Result<FinishedJob, SimError> {
    let catalog = match platform.input_storage() {
        Some(d) => ReplicaCatalog::for_jobs(std::slice::from_ref(&job), d),
        None => ReplicaCatalog::new(),
    };
    let config = SimConfig { initial_cache: initial_cache.to_vec(), ..SimConfig::default() };
    let mut sim = Simulation::with_catalog(platform, Vec::new(), &config, catalog)?;
    sim.inject(job, host)?;
    while sim.step()? {}
    sim.drain_finished().pop().ok_or_else(|| SimError::Internal("job did not finish".into()))
}
