//! Synthetic workload generation from per-class binned distributions.
//!
//! Each job class carries one histogram per job characteristic. Jobs are
//! produced by drawing every characteristic independently from its class
//! histogram; there are no cross-characteristic correlations.
//!
//! Generation is reproducible per job: job `i` draws from its own ChaCha
//! stream, so thinning a workload keeps the surviving jobs identical to their
//! counterparts in the full population.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jobs::{JobClass, JobSpec};
use crate::storage::FileId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error("workload document: {0}")]
    Syntax(String),
    #[error("{location}: {message}")]
    Invalid { location: String, message: String },
    #[error("cannot build a histogram from an empty sample set")]
    EmptySamples,
    #[error("sample {value} lies outside the histogram edges [{low}, {high}]")]
    SampleOutsideEdges { value: f64, low: f64, high: f64 },
}

fn invalid(location: impl Into<String>, message: impl Into<String>) -> WorkloadError {
    WorkloadError::Invalid { location: location.into(), message: message.into() }
}

/// A one-dimensional histogram: `edges.len() == masses.len() + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedPdf {
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
}

impl BinnedPdf {
    pub fn new(edges: Vec<f64>, masses: Vec<f64>) -> Result<Self, WorkloadError> {
        let pdf = Self { edges, masses };
        pdf.validate("pdf")?;
        Ok(pdf)
    }

    /// A histogram that always yields `value`.
    pub fn point(value: f64) -> Self {
        let width = value.abs().max(1.0) * 1e-9;
        Self { edges: vec![value, value + width], masses: vec![1.0] }
    }

    pub fn validate(&self, loc: &str) -> Result<(), WorkloadError> {
        if self.masses.is_empty() || self.edges.len() != self.masses.len() + 1 {
            return Err(invalid(loc, "needs n masses and n+1 edges, n >= 1"));
        }
        if self.edges.iter().any(|e| !e.is_finite()) || self.edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid(format!("{loc}.edges"), "must be finite and strictly increasing"));
        }
        if self.masses.iter().any(|m| !(*m >= 0.0)) {
            return Err(invalid(format!("{loc}.masses"), "must be non-negative"));
        }
        let total: f64 = self.masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("{loc}.masses"), format!("must sum to 1, sum is {total}")));
        }
        Ok(())
    }

    pub fn support(&self) -> (f64, f64) {
        (self.edges[0], *self.edges.last().unwrap())
    }

    pub fn mean(&self) -> f64 {
        self.masses
            .iter()
            .zip(self.edges.windows(2))
            .map(|(m, w)| m * 0.5 * (w[0] + w[1]))
            .sum()
    }

    /// Index of the bin containing `value`; the last bin is closed on the right.
    pub fn bin_of(&self, value: f64) -> Option<usize> {
        let (lo, hi) = self.support();
        if !(value >= lo && value <= hi) {
            return None;
        }
        let i = self.edges.partition_point(|&e| e <= value);
        Some(i.saturating_sub(1).min(self.masses.len() - 1))
    }
}

/// Bin layout requested from [`build_histogram`].
#[derive(Clone, Debug)]
pub enum Bins {
    /// Equal-width bins over `[min, max]` of the samples.
    Count(usize),
    Edges(Vec<f64>),
}

/// Normalized histogram of `samples`.
pub fn build_histogram(samples: &[f64], bins: Bins) -> Result<BinnedPdf, WorkloadError> {
    if samples.is_empty() {
        return Err(WorkloadError::EmptySamples);
    }
    if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
        return Err(invalid("samples", format!("non-finite sample {v}")));
    }
    let edges = match bins {
        Bins::Edges(e) => e,
        Bins::Count(n) => {
            let n = n.max(1);
            let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) * 1e-9 };
            let mut e: Vec<f64> = (0..=n).map(|i| lo + span * i as f64 / n as f64).collect();
            e[n] = lo + span;
            e
        }
    };
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("edges", "must be strictly increasing with at least two entries"));
    }
    let mut counts = vec![0u64; edges.len() - 1];
    let probe = BinnedPdf { edges: edges.clone(), masses: vec![0.0; edges.len() - 1] };
    for &s in samples {
        let bin = probe.bin_of(s).ok_or(WorkloadError::SampleOutsideEdges {
            value: s,
            low: edges[0],
            high: *edges.last().unwrap(),
        })?;
        counts[bin] += 1;
    }
    let n = samples.len() as f64;
    Ok(BinnedPdf { edges, masses: counts.into_iter().map(|c| c as f64 / n).collect() })
}

/// Draws one value: a bin by mass, then uniformly within the bin.
pub fn sample_value<R: Rng + ?Sized>(pdf: &BinnedPdf, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut bin = pdf.masses.len() - 1;
    for (i, m) in pdf.masses.iter().enumerate() {
        acc += m;
        if u < acc {
            bin = i;
            break;
        }
    }
    // Skip empty trailing bins that rounding could land on.
    while pdf.masses[bin] == 0.0 && bin > 0 {
        bin -= 1;
    }
    let (lo, hi) = (pdf.edges[bin], pdf.edges[bin + 1]);
    let v = lo + (hi - lo) * rng.random::<f64>();
    v.min(hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Characteristic {
    NInputFiles,
    InputFileSize,
    FlopsPerByte,
    Cores,
    Memory,
    OutputSize,
}

impl Characteristic {
    pub const ALL: [Characteristic; 6] = [
        Characteristic::NInputFiles,
        Characteristic::InputFileSize,
        Characteristic::FlopsPerByte,
        Characteristic::Cores,
        Characteristic::Memory,
        Characteristic::OutputSize,
    ];

    pub fn is_count(self) -> bool {
        matches!(self, Characteristic::NInputFiles | Characteristic::Cores)
    }
}

impl fmt::Display for Characteristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Characteristic::NInputFiles => "n_input_files",
            Characteristic::InputFileSize => "input_file_size",
            Characteristic::FlopsPerByte => "flops_per_byte",
            Characteristic::Cores => "cores",
            Characteristic::Memory => "memory",
            Characteristic::OutputSize => "output_size",
        };
        f.write_str(s)
    }
}

/// Samples a characteristic, rounding counts half-up and clamping them to at least one.
pub fn sample_characteristic<R: Rng + ?Sized>(pdf: &BinnedPdf, ch: Characteristic, rng: &mut R) -> f64 {
    let v = sample_value(pdf, rng);
    if ch.is_count() {
        (v + 0.5).floor().max(1.0)
    } else {
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobClassSpec {
    pub name: JobClass,
    pub proportion: f64,
    pub pdfs: BTreeMap<Characteristic, BinnedPdf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SubmissionModel {
    AllAtZero,
    /// Submit times uniform over `[0, horizon]` seconds.
    Uniform { horizon: f64 },
    /// Job `i` is submitted at `times[i % times.len()]`.
    Explicit { times: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Sharing {
    /// Every job reads its own files.
    Private,
    /// Jobs of a class draw files from a common per-class pool sized so
    /// each pool file is read `reuse` times on average.
    Shared { reuse: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteShare {
    pub site: String,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub total_jobs: u64,
    #[serde(default)]
    pub seed: u64,
    /// Thinning factor applied by downscaling; 1 keeps every job.
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default = "all_at_zero")]
    pub submission: SubmissionModel,
    #[serde(default = "private")]
    pub sharing: Sharing,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub site_split: Vec<SiteShare>,
    pub classes: Vec<JobClassSpec>,
}

fn one() -> f64 {
    1.0
}

fn all_at_zero() -> SubmissionModel {
    SubmissionModel::AllAtZero
}

fn private() -> Sharing {
    Sharing::Private
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            total_jobs: 0,
            seed: 0,
            scale: 1.0,
            submission: SubmissionModel::AllAtZero,
            sharing: Sharing::Private,
            site_split: Vec::new(),
            classes: Vec::new(),
        }
    }
}

pub fn parse_workload(document: &str) -> Result<WorkloadSpec, WorkloadError> {
    let spec: WorkloadSpec = toml::from_str(document).map_err(|e| WorkloadError::Syntax(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

impl WorkloadSpec {
    pub fn to_document(&self) -> String {
        toml::to_string(self).expect("workload documents always serialize")
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(invalid("scale", format!("must lie in (0, 1], got {}", self.scale)));
        }
        if self.total_jobs > 0 && self.classes.is_empty() {
            return Err(invalid("classes", "at least one job class is required"));
        }
        for (i, c) in self.classes.iter().enumerate() {
            let loc = format!("classes[{i}]");
            if !(0.0..=1.0).contains(&c.proportion) {
                return Err(invalid(format!("{loc}.proportion"), "must lie in [0, 1]"));
            }
            for ch in Characteristic::ALL {
                let pdf = c
                    .pdfs
                    .get(&ch)
                    .ok_or_else(|| invalid(format!("{loc}.pdfs"), format!("missing '{ch}'")))?;
                pdf.validate(&format!("{loc}.pdfs.{ch}"))?;
            }
            if self.classes[..i].iter().any(|o| o.name == c.name) {
                return Err(invalid(format!("{loc}.name"), format!("duplicate class {}", c.name)));
            }
        }
        if !self.classes.is_empty() {
            let total: f64 = self.classes.iter().map(|c| c.proportion).sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(invalid("classes", format!("proportions must sum to 1, sum is {total}")));
            }
        }
        if !self.site_split.is_empty() {
            let total: f64 = self.site_split.iter().map(|s| s.fraction).sum();
            if self.site_split.iter().any(|s| !(s.fraction >= 0.0)) || (total - 1.0).abs() > 1e-6 {
                return Err(invalid("site_split", format!("fractions must be non-negative and sum to 1, sum is {total}")));
            }
        }
        match &self.submission {
            SubmissionModel::Uniform { horizon } if !(*horizon >= 0.0) => {
                return Err(invalid("submission.horizon", "must be non-negative"));
            }
            SubmissionModel::Explicit { times } if times.is_empty() || times.iter().any(|t| !(*t >= 0.0)) => {
                return Err(invalid("submission.times", "must be a non-empty list of non-negative times"));
            }
            _ => {}
        }
        if let Sharing::Shared { reuse } = self.sharing {
            if !(reuse >= 1.0) {
                return Err(invalid("sharing.reuse", "must be at least 1"));
            }
        }
        Ok(())
    }

    /// Class counts of the full (unthinned) population.
    pub fn class_counts(&self) -> Vec<u64> {
        let weights: Vec<f64> = self.classes.iter().map(|c| c.proportion).collect();
        apportion(self.total_jobs, &weights)
    }

    /// Class counts after thinning by `scale`.
    pub fn effective_class_counts(&self) -> Vec<u64> {
        let full = self.class_counts();
        if self.scale >= 1.0 {
            return full;
        }
        let target = (self.scale * self.total_jobs as f64).round() as u64;
        let weights: Vec<f64> = full.iter().map(|&c| c as f64).collect();
        apportion(target, &weights)
    }

    pub fn effective_jobs(&self) -> u64 {
        self.effective_class_counts().iter().sum()
    }
}

/// Largest-remainder apportionment of `total` by `weights`; ties go to the earlier entry.
pub fn apportion(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || !(sum > 0.0) {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<u64> = quotas.iter().map(|q| (q + 1e-9).floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned) as usize) {
        counts[i] += 1;
    }
    counts
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const LABEL_STREAM: u64 = u64::MAX;
const THIN_STREAM: u64 = u64::MAX - 1;
const POOL_STREAM_BASE: u64 = 1 << 62;

/// Expands a workload specification into concrete jobs.
///
/// Jobs are returned in index order; `JobSpec::id` is the index in the
/// unthinned population.
pub fn generate_workload(spec: &WorkloadSpec) -> Vec<JobSpec> {
    let counts = spec.class_counts();
    let total = spec.total_jobs as usize;
    if total == 0 {
        return Vec::new();
    }

    let mut labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(c, n as usize))
        .collect();
    labels.shuffle(&mut stream_rng(spec.seed, LABEL_STREAM));

    let kept = spec.effective_class_counts();
    let mut keep = vec![spec.scale >= 1.0; total];
    if spec.scale < 1.0 {
        let mut rng = stream_rng(spec.seed, THIN_STREAM);
        for (c, &k) in kept.iter().enumerate() {
            let members: Vec<usize> = (0..total).filter(|&i| labels[i] == c).collect();
            for pick in index::sample(&mut rng, members.len(), k as usize).into_iter() {
                keep[members[pick]] = true;
            }
        }
    }

    let pools: Vec<Vec<FileId>> = match spec.sharing {
        Sharing::Private => vec![Vec::new(); spec.classes.len()],
        Sharing::Shared { reuse } => spec
            .classes
            .iter()
            .enumerate()
            .map(|(c, class)| {
                let files_pdf = &class.pdfs[&Characteristic::NInputFiles];
                let reads = kept[c] as f64 * files_pdf.mean().round().max(1.0);
                let n = ((reads / reuse).round() as usize).max(1);
                let size_pdf = &class.pdfs[&Characteristic::InputFileSize];
                let mut rng = stream_rng(spec.seed, POOL_STREAM_BASE + c as u64);
                (0..n)
                    .map(|i| FileId {
                        name: format!("{}-ds{:06}", class.name.tag(), i),
                        size: (sample_value(size_pdf, &mut rng).round() as u64).max(1),
                    })
                    .collect()
            })
            .collect(),
    };

    let mut jobs = Vec::with_capacity(kept.iter().sum::<u64>() as usize);
    for i in (0..total).filter(|&i| keep[i]) {
        let c = labels[i];
        let class = &spec.classes[c];
        let mut rng = stream_rng(spec.seed, i as u64);

        let site_u: f64 = rng.random();
        let target_site = pick_site(&spec.site_split, site_u);
        let submit_u: f64 = rng.random();
        let submit_time = match &spec.submission {
            SubmissionModel::AllAtZero => 0.0,
            SubmissionModel::Uniform { horizon } => submit_u * horizon,
            SubmissionModel::Explicit { times } => times[i % times.len()],
        };
        let mut draw = |ch: Characteristic| sample_characteristic(&class.pdfs[&ch], ch, &mut rng);
        let n_files = draw(Characteristic::NInputFiles) as usize;
        let sizes: Vec<f64> = (0..n_files).map(|_| draw(Characteristic::InputFileSize)).collect();
        let flops_per_byte = draw(Characteristic::FlopsPerByte).max(0.0);
        let cores = draw(Characteristic::Cores) as u32;
        let memory = (draw(Characteristic::Memory).round() as u64).max(1);
        let output_size = draw(Characteristic::OutputSize).round().max(0.0) as u64;

        let input_files = match spec.sharing {
            Sharing::Private => sizes
                .iter()
                .enumerate()
                .map(|(k, s)| FileId { name: format!("job{i:07}-f{k:03}"), size: (s.round() as u64).max(1) })
                .collect(),
            Sharing::Shared { .. } => {
                let pool = &pools[c];
                let n = n_files.min(pool.len());
                index::sample(&mut rng, pool.len(), n).into_iter().map(|k| pool[k].clone()).collect()
            }
        };

        jobs.push(JobSpec {
            id: i as u64,
            class: class.name,
            input_files,
            flops_per_byte,
            cores,
            memory,
            output_size,
            submit_time,
            block_size: None,
            target_site,
        });
    }
    jobs
}

fn pick_site(split: &[SiteShare], u: f64) -> Option<String> {
    let mut acc = 0.0;
    for s in split {
        acc += s.fraction;
        if u < acc {
            return Some(s.site.clone());
        }
    }
    split.iter().rev().find(|s| s.fraction > 0.0).map(|s| s.site.clone())
}
