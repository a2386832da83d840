//! Simulation of data-intensive batch workloads on distributed computing grids.
//!
//! The crate models worker nodes, disks and network links as shared
//! resources whose bandwidth is divided among concurrent activities by
//! max-min fairness. Jobs stream their input files block by block, overlap
//! reads with computation, and may be served by per-site caches. Runs emit
//! per-job traces and box-plot summaries keyed by cache hit rate and site.
//!
//! The main entry points are [`platform::parse_platform`],
//! [`workload::parse_workload`], [`sim::Simulation`] and [`sweep::run_point`].

pub mod engine;
pub mod jobs;
pub mod monitor;
pub mod platform;
pub mod scheduler;
pub mod sim;
pub mod storage;
pub mod sweep;
pub mod units;
pub mod workload;

#[cfg(test)]
mod testing;

pub use jobs::{JobClass, JobSpec};
pub use monitor::{JobTraceRecord, TraceFormat};
pub use platform::{downscale_platform, parse_platform, PlatformSpec};
pub use sim::{SimConfig, Simulation};
pub use storage::FileId;
pub use workload::{generate_workload, parse_workload, WorkloadSpec};
