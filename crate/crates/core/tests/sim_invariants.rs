mod common;

use common::{fuzz_workload, run_with_invariants, single_site_platform, FUZZ_PLATFORM};
use gridflow::jobs::{pipeline_bound, JobClass, UncontendedPath};
use gridflow::sim::execute_streaming_job;
use gridflow::{parse_platform, FileId, JobSpec};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn randomized_runs_conserve_bytes_and_respect_capacities(seed in 0u64..1_000_000, h in prop::option::of(0.0f64..=1.0)) {
        let stats = run_with_invariants(FUZZ_PLATFORM, &fuzz_workload(150, seed), h, seed);
        prop_assert!(stats.is_ok(), "{}", stats.unwrap_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn lone_job_matches_closed_form(
        n_files in 0usize..4,
        sizes in prop::collection::vec(1u64..3_000_000_000, 4),
        block in 10_000_000u64..500_000_000,
        disk in (5e7f64..5e9, 5e7f64..5e9),
        link in 5e7f64..5e9,
        latency in 0.0f64..0.05,
        fpb in 0.0f64..50.0,
        cores in 1u32..8,
        output in prop::option::of(1u64..1_000_000_000),
    ) {
        let p = parse_platform(&single_site_platform(8, 1e9, disk, link, latency, block)).unwrap();
        let job = JobSpec {
            id: 0,
            class: JobClass::Analysis,
            input_files: (0..n_files).map(|i| FileId { name: format!("f{i}"), size: sizes[i] }).collect(),
            flops_per_byte: fpb,
            cores,
            memory: 1_000_000_000,
            output_size: output.unwrap_or(0),
            submit_time: 0.0,
            block_size: None,
            target_site: None,
        };
        let path = UncontendedPath {
            read_rate: disk.0.min(link),
            read_latency: latency,
            write_rate: disk.1.min(link),
            write_latency: latency,
        };
        let bound = pipeline_bound(&job, block, &path, &p.hosts[0]);
        let f = execute_streaming_job(&p, job, "node").unwrap();
        let got = f.record.end - f.record.start;
        prop_assert!((got - bound).abs() <= 1e-6 * bound.max(1e-9), "{} vs {}", got, bound);
    }
}

#[test]
fn fuzz_run_evicts_and_stays_feasible() {
    let stats = run_with_invariants(FUZZ_PLATFORM, &fuzz_workload(300, 17), Some(0.5), 17).unwrap();
    assert_eq!(stats.records, stats.jobs);
    assert!(stats.evictions > 0, "{stats:?}");
}
