//! Streaming job model.
//!
//! A job splits each input file into fixed-size blocks (the last block of a
//! file may be partial) and processes them as a two-stage pipeline: the read
//! of block `i + 1` is issued when the computation of block `i` starts, and
//! block `i` is computed once it has been read and block `i - 1` is done.
//! After the last block the output file is written in one transfer.
//!
//! The simulated execution lives in [`crate::sim`]; this module holds the job
//! description, the block plan, and the closed-form bound used to check it.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::monitor::JobTraceRecord;
use crate::platform::HostSpec;
use crate::storage::FileId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum JobClass {
    Analysis,
    ReadoutSim,
    Processing,
    Merge,
    Other,
}

impl JobClass {
    pub const ALL: [JobClass; 5] =
        [JobClass::Analysis, JobClass::ReadoutSim, JobClass::Processing, JobClass::Merge, JobClass::Other];

    /// Short lowercase tag used in generated file names.
    pub fn tag(self) -> &'static str {
        match self {
            JobClass::Analysis => "analysis",
            JobClass::ReadoutSim => "readoutsim",
            JobClass::Processing => "processing",
            JobClass::Merge => "merge",
            JobClass::Other => "other",
        }
    }
}

impl fmt::Display for JobClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            JobClass::Analysis => "Analysis",
            JobClass::ReadoutSim => "ReadoutSim",
            JobClass::Processing => "Processing",
            JobClass::Merge => "Merge",
            JobClass::Other => "Other",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JobSpec {
    pub id: u64,
    pub class: JobClass,
    pub input_files: Vec<FileId>,
    /// FLOP per input byte.
    pub flops_per_byte: f64,
    pub cores: u32,
    /// bytes, reserved at match time
    pub memory: u64,
    pub output_size: u64,
    pub submit_time: f64,
    /// Overrides the platform block size when set.
    pub block_size: Option<u64>,
    pub target_site: Option<String>,
}

impl JobSpec {
    pub fn input_bytes(&self) -> u64 {
        self.input_files.iter().map(|f| f.size).sum()
    }

    pub fn total_flops(&self) -> f64 {
        self.input_bytes() as f64 * self.flops_per_byte
    }
}

/// One block of a job's input stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    /// Index into `JobSpec::input_files`.
    pub file: usize,
    pub bytes: u64,
    /// First block of its file (where the file source is located).
    pub first_of_file: bool,
    /// Last block of its file (where a copy-on-miss admission completes).
    pub last_of_file: bool,
}

/// Splits the job's inputs into blocks, file by file.
pub fn block_plan(job: &JobSpec, block_size: u64) -> Vec<Block> {
    let bs = job.block_size.unwrap_or(block_size).max(1);
    let mut out = Vec::new();
    for (fi, f) in job.input_files.iter().enumerate() {
        let n = f.size.div_ceil(bs).max(1);
        for b in 0..n {
            let bytes = if b + 1 == n { f.size - bs * (n - 1) } else { bs };
            out.push(Block { file: fi, bytes, first_of_file: b == 0, last_of_file: b + 1 == n });
        }
    }
    out
}

/// Timing of a job's phases as observed by the simulator.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct JobPhaseTrace {
    /// `(start, end)` per block; start is when the read was issued.
    pub reads: Vec<(f64, f64)>,
    pub computes: Vec<(f64, f64)>,
    pub output_write: Option<(f64, f64)>,
}

impl JobPhaseTrace {
    pub fn compute_time(&self) -> f64 {
        self.computes.iter().map(|(s, e)| e - s).sum()
    }

    pub fn output_write_time(&self) -> f64 {
        self.output_write.map_or(0.0, |(s, e)| e - s)
    }

    pub fn transfer_time(&self) -> f64 {
        self.reads.iter().map(|(s, e)| e - s).sum()
    }

    /// Time neither computing nor writing output within `[start, end]`.
    pub fn stall_time(&self, start: f64, end: f64) -> f64 {
        (end - start) - self.compute_time() - self.output_write_time()
    }

    /// Checks the pipeline ordering rules; returns the first violated block.
    pub fn causality_violation(&self) -> Option<usize> {
        for i in 0..self.computes.len() {
            let (cs, _) = self.computes[i];
            if cs < self.reads[i].1 {
                return Some(i);
            }
            if i > 0 && cs < self.computes[i - 1].1 {
                return Some(i);
            }
        }
        None
    }
}

/// Uncontended transfer characteristics seen by a lone job.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UncontendedPath {
    /// bytes/s
    pub read_rate: f64,
    /// seconds paid by every block read
    pub read_latency: f64,
    pub write_rate: f64,
    pub write_latency: f64,
}

/// Closed-form duration of a job running alone on `host`.
///
/// `first read + Σ max(read of next block, compute of current block) +
/// last compute + output write`.
pub fn pipeline_bound(job: &JobSpec, block_size: u64, path: &UncontendedPath, host: &HostSpec) -> f64 {
    let compute_rate = job.cores as f64 * host.core_speed;
    let blocks = block_plan(job, block_size);
    let read = |b: &Block| path.read_latency + b.bytes as f64 / path.read_rate;
    let compute = |b: &Block| b.bytes as f64 * job.flops_per_byte / compute_rate;
    let mut total = 0.0;
    if let Some(first) = blocks.first() {
        total += read(first);
        for w in blocks.windows(2) {
            total += read(&w[1]).max(compute(&w[0]));
        }
        total += compute(blocks.last().unwrap());
    }
    if job.output_size > 0 {
        total += path.write_latency + job.output_size as f64 / path.write_rate;
    }
    total
}

#[derive(Debug, Error, PartialEq)]
pub enum EfficiencyError {
    #[error("job {0} has zero duration but non-zero compute time")]
    ZeroDuration(u64),
}

/// Fraction of the job's wall time spent computing.
pub fn cpu_efficiency(record: &JobTraceRecord) -> Result<f64, EfficiencyError> {
    let duration = record.end - record.start;
    if duration <= 0.0 {
        return if record.compute_time == 0.0 { Ok(1.0) } else { Err(EfficiencyError::ZeroDuration(record.job_id)) };
    }
    Ok((record.compute_time / duration).clamp(0.0, 1.0))
}
