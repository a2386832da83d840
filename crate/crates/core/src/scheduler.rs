//! Batch scheduler: FIFO queue with backfilling onto worker slots.
//!
//! Each matching pass walks the queue in submission order and places every
//! job that fits on the first host, in `(site, host name)` order, with enough
//! free cores and memory. Jobs that do not fit are skipped, so smaller jobs
//! behind them may start first. Jobs restricted to a site only consider that
//! site's hosts.

use std::collections::{BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::jobs::JobSpec;
use crate::platform::PlatformSpec;

#[derive(Debug, Error, PartialEq)]
pub enum SchedulerError {
    #[error("job {job} requests {cores} cores and {memory} bytes; no {scope} host is that large")]
    NeverFits { job: u64, cores: u32, memory: u64, scope: String },
    #[error("job {job} targets unknown site '{site}'")]
    UnknownSite { job: u64, site: String },
    #[error("job {job} is not running on host {host}")]
    NotRunning { job: u64, host: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlotState {
    pub host: usize,
    pub free_cores: u32,
    pub free_memory: u64,
    pub running: BTreeSet<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueueEntry {
    /// Caller's handle for the job.
    pub key: usize,
    pub job_id: u64,
    pub cores: u32,
    pub memory: u64,
    /// Index into the platform site list.
    pub site: Option<usize>,
    pub enqueued_at: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Placement {
    pub key: usize,
    pub job_id: u64,
    /// Index into the platform host list.
    pub host: usize,
}

#[derive(Clone, Debug)]
struct HostInfo {
    site: usize,
    cores: u32,
    memory: u64,
}

pub struct Scheduler {
    hosts: Vec<HostInfo>,
    slots: Vec<SlotState>,
    /// Host indices per site in first-fit order; the last entry holds all hosts.
    order: Vec<Vec<usize>>,
    site_index: HashMap<String, usize>,
    queue: VecDeque<QueueEntry>,
    peak_queue: usize,
}

impl Scheduler {
    pub fn new(platform: &PlatformSpec) -> Self {
        let site_index: HashMap<String, usize> =
            platform.sites.iter().enumerate().map(|(i, s)| (s.name.clone(), i)).collect();
        let hosts: Vec<HostInfo> = platform
            .hosts
            .iter()
            .map(|h| HostInfo { site: site_index[&h.site], cores: h.cores, memory: h.memory })
            .collect();
        let slots = hosts
            .iter()
            .enumerate()
            .map(|(i, h)| SlotState { host: i, free_cores: h.cores, free_memory: h.memory, running: BTreeSet::new() })
            .collect();
        let mut all: Vec<usize> = (0..hosts.len()).collect();
        all.sort_by(|&a, &b| {
            let (ha, hb) = (&platform.hosts[a], &platform.hosts[b]);
            (&ha.site, &ha.name).cmp(&(&hb.site, &hb.name))
        });
        let mut order: Vec<Vec<usize>> = vec![Vec::new(); platform.sites.len()];
        for &h in &all {
            order[hosts[h].site].push(h);
        }
        order.push(all);
        Self { hosts, slots, order, site_index, queue: VecDeque::new(), peak_queue: 0 }
    }

    pub fn slots(&self) -> &[SlotState] {
        &self.slots
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn peak_queue_len(&self) -> usize {
        self.peak_queue
    }

    pub fn site_of(&self, site: &str) -> Option<usize> {
        self.site_index.get(site).copied()
    }

    /// Builds a queue entry, rejecting jobs that no eligible host could ever run.
    pub fn entry_for(&self, key: usize, job: &JobSpec, now: f64) -> Result<QueueEntry, SchedulerError> {
        let site = match &job.target_site {
            None => None,
            Some(s) => Some(
                self.site_of(s).ok_or_else(|| SchedulerError::UnknownSite { job: job.id, site: s.clone() })?,
            ),
        };
        let candidates = &self.order[site.unwrap_or(self.order.len() - 1)];
        if !candidates.iter().any(|&h| self.hosts[h].cores >= job.cores && self.hosts[h].memory >= job.memory) {
            return Err(SchedulerError::NeverFits {
                job: job.id,
                cores: job.cores,
                memory: job.memory,
                scope: job.target_site.clone().unwrap_or_else(|| "platform".into()),
            });
        }
        Ok(QueueEntry { key, job_id: job.id, cores: job.cores, memory: job.memory, site, enqueued_at: now })
    }

    pub fn enqueue(&mut self, entry: QueueEntry) {
        self.queue.push_back(entry);
        self.peak_queue = self.peak_queue.max(self.queue.len());
    }

    /// One FIFO-with-backfill pass; reserves resources for every placement.
    pub fn match_jobs(&mut self) -> Vec<Placement> {
        let mut placed = Vec::new();
        if self.queue.is_empty() {
            return placed;
        }
        let n_groups = self.order.len();
        // Largest free core count per host group; lets us skip hopeless entries cheaply.
        let mut max_free: Vec<u32> = (0..n_groups).map(|g| self.group_max_free(g)).collect();
        let mut kept = VecDeque::with_capacity(self.queue.len());
        while let Some(entry) = self.queue.pop_front() {
            if max_free[n_groups - 1] == 0 {
                kept.push_back(entry);
                kept.extend(self.queue.drain(..));
                break;
            }
            let g = entry.site.unwrap_or(n_groups - 1);
            if entry.cores > max_free[g] {
                kept.push_back(entry);
                continue;
            }
            let host = self.order[g].iter().copied().find(|&h| {
                let s = &self.slots[h];
                s.free_cores >= entry.cores && s.free_memory >= entry.memory
            });
            match host {
                Some(h) => {
                    let s = &mut self.slots[h];
                    s.free_cores -= entry.cores;
                    s.free_memory -= entry.memory;
                    s.running.insert(entry.job_id);
                    placed.push(Placement { key: entry.key, job_id: entry.job_id, host: h });
                    let site = self.hosts[h].site;
                    max_free[site] = self.group_max_free(site);
                    max_free[n_groups - 1] = max_free[..n_groups - 1].iter().copied().max().unwrap_or(0);
                }
                None => kept.push_back(entry),
            }
        }
        self.queue = kept;
        placed
    }

    fn group_max_free(&self, group: usize) -> u32 {
        self.order[group].iter().map(|&h| self.slots[h].free_cores).max().unwrap_or(0)
    }

    /// Reserves capacity on a specific host outside the queue.
    pub fn reserve(&mut self, host: usize, job_id: u64, cores: u32, memory: u64) -> bool {
        let Some(s) = self.slots.get_mut(host) else { return false };
        if s.free_cores < cores || s.free_memory < memory || s.running.contains(&job_id) {
            return false;
        }
        s.free_cores -= cores;
        s.free_memory -= memory;
        s.running.insert(job_id);
        true
    }

    /// Returns a finished job's cores and memory to its host.
    pub fn release(&mut self, host: usize, job_id: u64, cores: u32, memory: u64) -> Result<(), SchedulerError> {
        let s = self.slots.get_mut(host).ok_or(SchedulerError::NotRunning { job: job_id, host })?;
        if !s.running.remove(&job_id) {
            return Err(SchedulerError::NotRunning { job: job_id, host });
        }
        s.free_cores += cores;
        s.free_memory += memory;
        debug_assert!(s.free_cores <= self.hosts[host].cores && s.free_memory <= self.hosts[host].memory);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jobs::JobClass;
    use crate::platform::parse_platform;
    use crate::testing::TWO_SITE;

    fn job(id: u64, cores: u32, site: Option<&str>) -> JobSpec {
        JobSpec {
            id,
            class: JobClass::Analysis,
            input_files: vec![],
            flops_per_byte: 1.0,
            cores,
            memory: 1_000_000_000,
            output_size: 0,
            submit_time: 0.0,
            block_size: None,
            target_site: site.map(Into::into),
        }
    }

    fn sched() -> (PlatformSpec, Scheduler) {
        let p = parse_platform(TWO_SITE).unwrap();
        let s = Scheduler::new(&p);
        (p, s)
    }

    fn submit(s: &mut Scheduler, j: &JobSpec) {
        let e = s.entry_for(j.id as usize, j, 0.0).unwrap();
        s.enqueue(e);
    }

    #[test]
    fn first_fit_in_site_then_name_order() {
        let (p, mut s) = sched();
        for i in 0..3 {
            submit(&mut s, &job(i, 6, None));
        }
        let placed: Vec<&str> = s.match_jobs().iter().map(|pl| p.hosts[pl.host].name.as_str()).collect();
        assert_eq!(placed, ["t1-node-00", "t1-node-01", "t2-node-00"]);
    }

    #[test]
    fn backfill_skips_blocked_head() {
        let (_, mut s) = sched();
        submit(&mut s, &job(0, 8, Some("tier1")));
        submit(&mut s, &job(1, 8, Some("tier1")));
        assert_eq!(s.match_jobs().len(), 2);
        submit(&mut s, &job(2, 8, Some("tier1")));
        submit(&mut s, &job(3, 4, Some("tier2")));
        let placed = s.match_jobs();
        assert_eq!(placed.iter().map(|p| p.job_id).collect::<Vec<_>>(), [3]);
        assert_eq!(s.queue_len(), 1);
        s.release(0, 0, 8, 1_000_000_000).unwrap();
        assert_eq!(s.match_jobs()[0].job_id, 2);
    }

    #[test]
    fn site_restriction_is_respected() {
        let (p, mut s) = sched();
        for i in 0..4 {
            submit(&mut s, &job(i, 4, Some("tier2")));
        }
        let placed = s.match_jobs();
        assert_eq!(placed.len(), 4);
        assert!(placed.iter().all(|pl| p.hosts[pl.host].site == "tier2"));
        submit(&mut s, &job(9, 1, Some("tier2")));
        assert!(s.match_jobs().is_empty());
    }

    #[test]
    fn oversize_jobs_are_rejected_up_front() {
        let (_, s) = sched();
        assert!(matches!(s.entry_for(0, &job(0, 9, None), 0.0), Err(SchedulerError::NeverFits { .. })));
        assert!(matches!(s.entry_for(0, &job(0, 1, Some("mars")), 0.0), Err(SchedulerError::UnknownSite { .. })));
    }

    #[test]
    fn double_release_is_an_error() {
        let (_, mut s) = sched();
        submit(&mut s, &job(7, 2, None));
        let pl = s.match_jobs()[0];
        s.release(pl.host, 7, 2, 1_000_000_000).unwrap();
        assert_eq!(s.release(pl.host, 7, 2, 1_000_000_000), Err(SchedulerError::NotRunning { job: 7, host: pl.host }));
        assert_eq!(s.slots()[pl.host].free_cores, 8);
    }
}
