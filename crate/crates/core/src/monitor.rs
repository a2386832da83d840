//! Per-job trace records and summary statistics.
//!
//! Traces are written as CSV or JSON lines with the same fields: times with
//! six decimals, byte counts as integers. Summaries group completed jobs by
//! `(hitrate, site)` and report box-plot statistics of execution time and
//! CPU efficiency.

use std::collections::BTreeMap;
use std::io::{self, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::jobs::JobClass;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobTraceRecord {
    pub job_id: u64,
    pub class: JobClass,
    pub site: String,
    pub host: String,
    pub submit: f64,
    pub start: f64,
    pub end: f64,
    pub compute_time: f64,
    pub stall_time: f64,
    pub output_write_time: f64,
    pub bytes_from_cache: u64,
    pub bytes_remote: u64,
    pub transfer_time: f64,
    pub cpu_efficiency: f64,
    /// Empty for completed jobs.
    #[serde(default)]
    pub failure: String,
}

impl Default for JobTraceRecord {
    fn default() -> Self {
        Self {
            job_id: 0,
            class: JobClass::Other,
            site: String::new(),
            host: String::new(),
            submit: 0.0,
            start: 0.0,
            end: 0.0,
            compute_time: 0.0,
            stall_time: 0.0,
            output_write_time: 0.0,
            bytes_from_cache: 0,
            bytes_remote: 0,
            transfer_time: 0.0,
            cpu_efficiency: 0.0,
            failure: String::new(),
        }
    }
}

impl JobTraceRecord {
    pub fn execution_time(&self) -> f64 {
        self.end - self.start
    }

    pub fn failed(&self) -> bool {
        !self.failure.is_empty()
    }

    /// Share of the job's input bytes served by a cache.
    pub fn cache_fraction(&self) -> f64 {
        let total = self.bytes_from_cache + self.bytes_remote;
        if total == 0 {
            0.0
        } else {
            self.bytes_from_cache as f64 / total as f64
        }
    }
}

pub const TRACE_FIELDS: [&str; 15] = [
    "job_id",
    "class",
    "site",
    "host",
    "submit",
    "start",
    "end",
    "compute_time",
    "stall_time",
    "output_write_time",
    "bytes_from_cache",
    "bytes_remote",
    "transfer_time",
    "cpu_efficiency",
    "failure",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TraceFormat {
    #[default]
    Csv,
    Jsonl,
}

impl TraceFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TraceFormat::Csv => "csv",
            TraceFormat::Jsonl => "jsonl",
        }
    }
}

/// Receives job records as jobs finish.
pub trait TraceSink {
    fn record(&mut self, record: &JobTraceRecord) -> io::Result<()>;
}

impl TraceSink for Vec<JobTraceRecord> {
    fn record(&mut self, record: &JobTraceRecord) -> io::Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Discards records; useful when only aggregate statistics matter.
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _: &JobTraceRecord) -> io::Result<()> {
        Ok(())
    }
}

fn t6(x: f64) -> String {
    format!("{x:.6}")
}

/// The value a reader gets back from a trace file.
fn round6(x: f64) -> f64 {
    t6(x).parse().expect("formatted float parses")
}

/// Streams records to a writer in either trace format.
pub struct TraceWriter<W: Write> {
    format: TraceFormat,
    csv: Option<csv::Writer<W>>,
    raw: Option<W>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W, format: TraceFormat) -> io::Result<Self> {
        match format {
            TraceFormat::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(TRACE_FIELDS)?;
                Ok(Self { format, csv: Some(w), raw: None })
            }
            TraceFormat::Jsonl => Ok(Self { format, csv: None, raw: Some(out) }),
        }
    }

    pub fn format(&self) -> TraceFormat {
        self.format
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match (&mut self.csv, &mut self.raw) {
            (Some(w), _) => w.flush(),
            (_, Some(w)) => w.flush(),
            _ => Ok(()),
        }
    }
}

impl<W: Write> TraceSink for TraceWriter<W> {
    fn record(&mut self, r: &JobTraceRecord) -> io::Result<()> {
        if let Some(w) = &mut self.csv {
            w.write_record([
                r.job_id.to_string(),
                r.class.to_string(),
                r.site.clone(),
                r.host.clone(),
                t6(r.submit),
                t6(r.start),
                t6(r.end),
                t6(r.compute_time),
                t6(r.stall_time),
                t6(r.output_write_time),
                r.bytes_from_cache.to_string(),
                r.bytes_remote.to_string(),
                t6(r.transfer_time),
                t6(r.cpu_efficiency),
                r.failure.clone(),
            ])?;
            return Ok(());
        }
        let w = self.raw.as_mut().expect("one of the writers is set");
        let rounded = JobTraceRecord {
            submit: round6(r.submit),
            start: round6(r.start),
            end: round6(r.end),
            compute_time: round6(r.compute_time),
            stall_time: round6(r.stall_time),
            output_write_time: round6(r.output_write_time),
            transfer_time: round6(r.transfer_time),
            cpu_efficiency: round6(r.cpu_efficiency),
            ..r.clone()
        };
        serde_json::to_writer(&mut *w, &rounded)?;
        w.write_all(b"\n")
    }
}

/// Reads a trace written by [`TraceWriter`].
pub fn read_trace(text: &str, format: TraceFormat) -> io::Result<Vec<JobTraceRecord>> {
    match format {
        TraceFormat::Csv => {
            let mut r = csv::Reader::from_reader(text.as_bytes());
            r.deserialize().map(|rec| rec.map_err(io::Error::other)).collect()
        }
        TraceFormat::Jsonl => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(io::Error::other))
            .collect(),
    }
}

/// Linear-interpolation quantile of sorted data (R type 7).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub p2_5: f64,
    pub p97_5: f64,
    /// Most extreme data points within 1.5 IQR of the quartiles.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: usize,
}

impl BoxStats {
    /// Returns `None` for empty input.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q25 = quantile(&v, 0.25);
        let q75 = quantile(&v, 0.75);
        let iqr = q75 - q25;
        let (lo_fence, hi_fence) = (q25 - 1.5 * iqr, q75 + 1.5 * iqr);
        let inside: Vec<f64> = v.iter().copied().filter(|x| (lo_fence..=hi_fence).contains(x)).collect();
        Some(Self {
            n: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: quantile(&v, 0.5),
            q25,
            q75,
            p2_5: quantile(&v, 0.025),
            p97_5: quantile(&v, 0.975),
            whisker_low: inside.first().copied().unwrap_or(q25),
            whisker_high: inside.last().copied().unwrap_or(q75),
            outliers: v.len() - inside.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub hitrate: f64,
    pub site: String,
    pub jobs: usize,
    pub failed: usize,
    /// Share of input bytes read from a cache.
    pub cache_fraction: f64,
    pub exec_time: BoxStats,
    pub cpu_efficiency: BoxStats,
}

/// Groups records by `(hitrate, site)`; failed jobs are counted but not summarized.
pub fn summarize<'a>(records: impl IntoIterator<Item = (f64, &'a JobTraceRecord)>) -> Vec<SummaryRow> {
    #[derive(Default)]
    struct Acc {
        exec: Vec<f64>,
        eff: Vec<f64>,
        failed: usize,
        cache: u64,
        remote: u64,
    }
    // Non-negative floats order like their bit patterns.
    let mut groups: BTreeMap<(u64, String), Acc> = BTreeMap::new();
    for (h, r) in records {
        let acc = groups.entry((h.max(0.0).to_bits(), r.site.clone())).or_default();
        if r.failed() {
            acc.failed += 1;
            continue;
        }
        // Summaries use the traced precision so they can be recomputed from the files.
        acc.exec.push(round6(r.end) - round6(r.start));
        acc.eff.push(round6(r.cpu_efficiency));
        acc.cache += r.bytes_from_cache;
        acc.remote += r.bytes_remote;
    }
    let mut rows = Vec::new();
    for ((bits, site), acc) in groups {
        let hitrate = f64::from_bits(bits);
        let (Some(exec_time), Some(cpu_efficiency)) = (BoxStats::from_values(&acc.exec), BoxStats::from_values(&acc.eff))
        else {
            warn!("no completed jobs at site '{site}' for hitrate {hitrate}; group omitted");
            continue;
        };
        let bytes = acc.cache + acc.remote;
        rows.push(SummaryRow {
            hitrate,
            site,
            jobs: acc.exec.len(),
            failed: acc.failed,
            cache_fraction: if bytes == 0 { 0.0 } else { acc.cache as f64 / bytes as f64 },
            exec_time,
            cpu_efficiency,
        });
    }
    rows
}

const BOX_FIELDS: [&str; 10] =
    ["n", "mean", "median", "q25", "q75", "p2_5", "p97_5", "whisker_low", "whisker_high", "outliers"];

/// Statistics are written with full round-trip precision.
fn box_values(b: &BoxStats) -> [String; 10] {
    [
        b.n.to_string(),
        b.mean.to_string(),
        b.median.to_string(),
        b.q25.to_string(),
        b.q75.to_string(),
        b.p2_5.to_string(),
        b.p97_5.to_string(),
        b.whisker_low.to_string(),
        b.whisker_high.to_string(),
        b.outliers.to_string(),
    ]
}

/// Writes summary rows as CSV (flattened box columns) or JSON lines.
pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow], format: TraceFormat) -> io::Result<()> {
    match format {
        TraceFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let mut header: Vec<String> =
                ["hitrate", "site", "jobs", "failed", "cache_fraction"].iter().map(|s| s.to_string()).collect();
            for prefix in ["exec_time", "cpu_efficiency"] {
                header.extend(BOX_FIELDS.iter().map(|f| format!("{prefix}_{f}")));
            }
            w.write_record(&header)?;
            for r in rows {
                let mut rec =
                    vec![r.hitrate.to_string(), r.site.clone(), r.jobs.to_string(), r.failed.to_string(), r.cache_fraction.to_string()];
                rec.extend(box_values(&r.exec_time));
                rec.extend(box_values(&r.cpu_efficiency));
                w.write_record(&rec)?;
            }
            w.flush()
        }
        TraceFormat::Jsonl => {
            let mut out = out;
            for r in rows {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
            out.flush()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_of_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let b = BoxStats::from_values(&v).unwrap();
        assert!((b.median - 50.5).abs() < 1e-12);
        assert!((b.q25 - 25.75).abs() < 1e-12);
        assert!((b.q75 - 75.25).abs() < 1e-12);
        assert_eq!(b.outliers, 0);
        assert_eq!((b.whisker_low, b.whisker_high), (1.0, 100.0));
    }

    #[test]
    fn single_value_and_outliers() {
        let b = BoxStats::from_values(&[3.0]).unwrap();
        assert_eq!((b.median, b.q25, b.q75, b.p2_5, b.p97_5), (3.0, 3.0, 3.0, 3.0, 3.0));
        let b = BoxStats::from_values(&[1.0, 2.0, 2.0, 3.0, 100.0]).unwrap();
        assert_eq!(b.outliers, 1);
        assert_eq!(b.whisker_high, 3.0);
        assert!(BoxStats::from_values(&[]).is_none());
    }

    fn rec(id: u64, site: &str, start: f64, end: f64) -> JobTraceRecord {
        JobTraceRecord {
            job_id: id,
            class: JobClass::Analysis,
            site: site.into(),
            host: "h".into(),
            start,
            end,
            compute_time: (end - start) / 2.0,
            cpu_efficiency: 0.5,
            bytes_remote: 100,
            ..JobTraceRecord::default()
        }
    }

    #[test]
    fn summary_groups_by_hitrate_and_site() {
        let a: Vec<_> = (0..4).map(|i| rec(i, "tier1", 0.0, 10.0 + i as f64)).collect();
        let mut b: Vec<_> = (0..3).map(|i| rec(i, "tier2", 0.0, 20.0)).collect();
        b[0].failure = "no replica".into();
        let failed_only = JobTraceRecord { failure: "x".into(), ..rec(9, "tier3", 0.0, 1.0) };
        let rows = summarize(
            a.iter()
                .map(|r| (0.5, r))
                .chain(b.iter().map(|r| (0.0, r)))
                .chain(std::iter::once((0.0, &failed_only))),
        );
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].hitrate, rows[0].site.as_str(), rows[0].jobs, rows[0].failed), (0.0, "tier2", 2, 1));
        assert_eq!((rows[1].hitrate, rows[1].site.as_str(), rows[1].jobs), (0.5, "tier1", 4));
        assert!((rows[1].exec_time.median - 11.5).abs() < 1e-12);
    }

    #[test]
    fn csv_and_jsonl_round_trip() {
        let records = vec![rec(1, "tier1", 0.25, 1.0 / 3.0), rec(2, "tier2", 1.0, 2.0)];
        for format in [TraceFormat::Csv, TraceFormat::Jsonl] {
            let mut buf = Vec::new();
            {
                let mut w = TraceWriter::new(&mut buf, format).unwrap();
                for r in &records {
                    w.record(r).unwrap();
                }
                w.flush().unwrap();
            }
            let text = String::from_utf8(buf).unwrap();
            let back = read_trace(&text, format).unwrap();
            assert_eq!(back.len(), 2);
            assert_eq!(back[0].end, 0.333333);
            assert_eq!(back[1].site, "tier2");
            assert_eq!(back[1].bytes_remote, 100);
        }
    }

    #[test]
    fn csv_header_lists_every_field() {
        let mut buf = Vec::new();
        TraceWriter::new(&mut buf, TraceFormat::Csv).unwrap().flush().unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), TRACE_FIELDS.join(","));
    }
}
