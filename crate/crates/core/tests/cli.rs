mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::{config_path, quantile7};

const PLATFORM: &str = r#"
[[sites]]
name = "solo"

[[sites.hosts]]
name = "node"
cores = 4
core_speed = "1Gflops"
memory = "8GiB"

[[sites.disks]]
name = "scratch"
attached_host = "node"
read_bw = "1GB/s"
write_bw = "1GB/s"
role = "grid-storage"
"#;

const ONE_JOB: &str = r#"
total_jobs = 1
seed = 3

[[classes]]
name = "Analysis"
proportion = 1.0
[classes.pdfs.n_input_files]
edges = [2, 3]
masses = [1.0]
[classes.pdfs.input_file_size]
edges = [1e8, 2e8]
masses = [1.0]
[classes.pdfs.flops_per_byte]
edges = [1, 2]
masses = [1.0]
[classes.pdfs.cores]
edges = [1, 2]
masses = [1.0]
[classes.pdfs.memory]
edges = [1e9, 2e9]
masses = [1.0]
[classes.pdfs.output_size]
edges = [1e6, 2e6]
masses = [1.0]
"#;

fn gridflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridflow")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn single_job_run_writes_one_record() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "p.toml", PLATFORM);
    let w = write(dir.path(), "w.toml", ONE_JOB);
    let out = dir.path().join("out");
    let o = gridflow(&["run", "--platform", &p, "--workload", &w, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trace = fs::read_to_string(out.join("trace_hnone_s3.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2);
    assert!(out.join("summary.csv").exists());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["runs"][0]["report"]["completed"], 1);
}

#[test]
fn out_of_range_hitrate_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "p.toml", PLATFORM);
    let w = write(dir.path(), "w.toml", ONE_JOB);
    let o = gridflow(&["run", "--platform", &p, "--workload", &w, "--hitrate", "2.0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("hitrate"));
}

#[test]
fn check_accepts_shipped_configs() {
    let o = gridflow(&[
        "check",
        "--platform",
        config_path("table1_platform.toml").to_str().unwrap(),
        "--workload",
        config_path("study_workload.toml").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.trim_end().ends_with("OK"));
    assert!(text.contains("62000 cores"), "{text}");
}

#[test]
fn check_names_endpoints_of_a_missing_route() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "p.toml", &PLATFORM.replace("attached_host = \"node\"\n", ""));
    let o = gridflow(&["check", "--platform", &p]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("'node'") && err.contains("'scratch'"), "{err}");
}

#[test]
fn check_rejects_proportions_not_summing_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let w = write(dir.path(), "w.toml", &ONE_JOB.replace("proportion = 1.0", "proportion = 0.9"));
    let o = gridflow(&["check", "--workload", &w]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("0.9"), "{}", stderr(&o));
}

#[test]
fn unreadable_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = gridflow(&["check", "--platform", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn downscaled_run_records_both_platforms() {
    let dir = tempfile::tempdir().unwrap();
    let w = write(
        dir.path(),
        "w.toml",
        &fs::read_to_string(config_path("study_workload.toml")).unwrap().replace("total_jobs = 200000", "total_jobs = 2000"),
    );
    let out = dir.path().join("out");
    let o = gridflow(&[
        "run",
        "--platform",
        config_path("table1_platform.toml").to_str().unwrap(),
        "--workload",
        &w,
        "--scale",
        "0.1",
        "--hitrate",
        "0.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["platform_original"].as_str().unwrap().contains("cores = 1000"));
    assert!(manifest["platform_scaled"].as_str().unwrap().contains("cores = 100"));
    assert_eq!(manifest["scale"], 0.1);
    assert_eq!(manifest["runs"][0]["report"]["jobs"], 200);
}

/// Recomputes every summary statistic from the raw traces.
#[test]
fn summary_matches_trace_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let w = write(
        dir.path(),
        "w.toml",
        &fs::read_to_string(config_path("study_workload.toml")).unwrap().replace("total_jobs = 200000", "total_jobs = 1500"),
    );
    let out = dir.path().join("out");
    let o = gridflow(&[
        "sweep",
        "--platform",
        config_path("table1_platform.toml").to_str().unwrap(),
        "--workload",
        &w,
        "--scale",
        "0.05",
        "--hitrate",
        "0,1",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut summary = csv::Reader::from_path(out.join("summary.csv")).unwrap();
    let headers = summary.headers().unwrap().clone();
    let col = |row: &csv::StringRecord, name: &str| -> f64 {
        row[headers.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))].parse().unwrap()
    };
    let mut rows = 0;
    for row in summary.records() {
        let row = row.unwrap();
        let site = row[headers.iter().position(|x| x == "site").unwrap()].to_string();
        let site = site.as_str();
        let h = col(&row, "hitrate");
        let file = out.join(format!("trace_h{h:.4}_s5.csv"));
        let mut trace = csv::Reader::from_path(&file).unwrap();
        let th = trace.headers().unwrap().clone();
        let at = |n: &str| th.iter().position(|h| h == n).unwrap();
        let (mut exec, mut eff) = (Vec::new(), Vec::new());
        for r in trace.records() {
            let r = r.unwrap();
            if &r[at("site")] == site && r[at("failure")].is_empty() {
                let num = |n: &str| r[at(n)].parse::<f64>().unwrap();
                exec.push(num("end") - num("start"));
                eff.push(num("cpu_efficiency"));
            }
        }
        let mine = &exec;
        assert_eq!(col(&row, "jobs") as usize, mine.len());
        for (name, p) in [("q25", 0.25), ("median", 0.5), ("q75", 0.75)] {
            let e = quantile7(&exec, p);
            let c = quantile7(&eff, p);
            assert!((col(&row, &format!("exec_time_{name}")) - e).abs() <= 1e-9 * e.abs().max(1.0), "{name}: {e}");
            assert!((col(&row, &format!("cpu_efficiency_{name}")) - c).abs() <= 1e-9, "{name}: {c}");
        }
        rows += 1;
    }
    assert_eq!(rows, 4);
}
