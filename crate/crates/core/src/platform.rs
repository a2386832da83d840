//! Hardware description: sites, worker nodes, disks, links and routes.
//!
//! Platforms are read from TOML documents with the top-level keys `defaults`,
//! `sites`, `links` and `routes`. Hosts and disks are declared inside their
//! site. A host entry may carry `count = N` to declare `N` identical nodes
//! named `<name>-00`, `<name>-01`, ...
//!
//! Route endpoints name a host, a disk, or a whole site. Lookups try the
//! exact pair first and then fall back to the site of either endpoint, so a
//! single `["tier2", "t1-storage"]` route covers every Tier 2 worker.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{Dimension, Quantity};
use crate::workload::WorkloadSpec;

pub const DEFAULT_BLOCK_SIZE: u64 = 128 * 1024 * 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlatformError {
    #[error("platform document: {0}")]
    Syntax(String),
    #[error("{location}: {message}")]
    Invalid { location: String, message: String },
    #[error("no route declared between '{src}' and '{dst}'")]
    NoRoute { src: String, dst: String },
    #[error("unknown endpoint '{0}'")]
    UnknownEndpoint(String),
    #[error("scale factor must lie in (0, 1], got {0}")]
    BadScale(f64),
}

fn invalid(location: impl Into<String>, message: impl Into<String>) -> PlatformError {
    PlatformError::Invalid { location: location.into(), message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiskRole {
    GridStorage,
    Cache,
    Scratch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SiteSpec {
    pub name: String,
    /// Disk receiving the output files of jobs that ran at this site.
    pub output_storage: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HostSpec {
    pub name: String,
    pub site: String,
    pub cores: u32,
    /// FLOP/s per core.
    pub core_speed: f64,
    /// bytes
    pub memory: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiskSpec {
    pub name: String,
    pub site: String,
    pub attached_host: Option<String>,
    pub read_bw: f64,
    pub write_bw: f64,
    /// `None` means unbounded (only allowed for grid storage and scratch).
    pub capacity: Option<u64>,
    pub role: DiskRole,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkSpec {
    pub name: String,
    pub bandwidth: f64,
    pub latency: f64,
    /// Marks wide-area links targeted by the WAN bandwidth override.
    pub wan: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RouteSpec {
    pub endpoints: (String, String),
    pub links: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Defaults {
    pub block_size: u64,
    pub scheduler: String,
    /// Disk holding the authoritative replica of every workload input file.
    pub input_storage: Option<String>,
    /// Fixed delay between a successful match and job start.
    pub match_delay: f64,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            block_size: DEFAULT_BLOCK_SIZE,
            scheduler: "fifo-backfill".into(),
            input_storage: None,
            match_delay: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlatformSpec {
    pub sites: Vec<SiteSpec>,
    pub hosts: Vec<HostSpec>,
    pub disks: Vec<DiskSpec>,
    pub links: Vec<LinkSpec>,
    pub routes: Vec<RouteSpec>,
    pub defaults: Defaults,
}

// ---- document schema ------------------------------------------------------

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DefaultsDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    block_size: Option<Quantity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scheduler: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    input_storage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    match_delay: Option<Quantity>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HostDoc {
    name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    count: Option<u32>,
    cores: i64,
    core_speed: Quantity,
    memory: Quantity,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiskDoc {
    name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    attached_host: Option<String>,
    read_bw: Quantity,
    write_bw: Quantity,
    #[serde(skip_serializing_if = "Option::is_none")]
    capacity: Option<Quantity>,
    role: DiskRole,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SiteDoc {
    name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_storage: Option<String>,
    #[serde(default)]
    hosts: Vec<HostDoc>,
    #[serde(default)]
    disks: Vec<DiskDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkDoc {
    name: String,
    bandwidth: Quantity,
    #[serde(default = "zero_latency")]
    latency: Quantity,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    wan: bool,
}

fn zero_latency() -> Quantity {
    Quantity::Int(0)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RouteDoc {
    endpoints: [String; 2],
    links: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlatformDoc {
    #[serde(default)]
    defaults: DefaultsDoc,
    sites: Vec<SiteDoc>,
    #[serde(default)]
    links: Vec<LinkDoc>,
    #[serde(default)]
    routes: Vec<RouteDoc>,
}

fn qty(q: &Quantity, dim: Dimension, loc: &str) -> Result<f64, PlatformError> {
    q.to_base(dim).map_err(|m| invalid(loc, m))
}

fn positive(q: &Quantity, dim: Dimension, loc: &str) -> Result<f64, PlatformError> {
    let v = qty(q, dim, loc)?;
    if !(v > 0.0) || !v.is_finite() {
        return Err(invalid(loc, format!("must be positive, got {v}")));
    }
    Ok(v)
}

fn bytes(q: &Quantity, loc: &str) -> Result<u64, PlatformError> {
    Ok(positive(q, Dimension::Size, loc)?.round() as u64)
}

/// Parses and validates a platform document.
pub fn parse_platform(document: &str) -> Result<PlatformSpec, PlatformError> {
    let doc: PlatformDoc = toml::from_str(document).map_err(|e| PlatformError::Syntax(e.to_string()))?;
    let spec = resolve_doc(doc)?;
    spec.validate()?;
    Ok(spec)
}

fn resolve_doc(doc: PlatformDoc) -> Result<PlatformSpec, PlatformError> {
    let mut defaults = Defaults::default();
    if let Some(b) = &doc.defaults.block_size {
        defaults.block_size = bytes(b, "defaults.block_size")?;
    }
    if let Some(s) = doc.defaults.scheduler {
        defaults.scheduler = s;
    }
    defaults.input_storage = doc.defaults.input_storage;
    if let Some(d) = &doc.defaults.match_delay {
        defaults.match_delay = qty(d, Dimension::Time, "defaults.match_delay")?;
    }

    let mut sites = Vec::new();
    let mut hosts = Vec::new();
    let mut disks = Vec::new();
    for (si, site) in doc.sites.into_iter().enumerate() {
        for (hi, h) in site.hosts.iter().enumerate() {
            let loc = format!("sites[{si}].hosts[{hi}]");
            if h.cores < 1 || h.cores > u32::MAX as i64 {
                return Err(invalid(format!("{loc}.cores"), format!("must be at least 1, got {}", h.cores)));
            }
            let core_speed = positive(&h.core_speed, Dimension::Speed, &format!("{loc}.core_speed"))?;
            let memory = bytes(&h.memory, &format!("{loc}.memory"))?;
            let names = match h.count {
                None => vec![h.name.clone()],
                Some(0) => return Err(invalid(format!("{loc}.count"), "must be at least 1")),
                Some(n) => {
                    let width = (n - 1).to_string().len().max(2);
                    (0..n).map(|i| format!("{}-{:0width$}", h.name, i)).collect()
                }
            };
            for name in names {
                hosts.push(HostSpec {
                    name,
                    site: site.name.clone(),
                    cores: h.cores as u32,
                    core_speed,
                    memory,
                });
            }
        }
        for (di, d) in site.disks.iter().enumerate() {
            let loc = format!("sites[{si}].disks[{di}]");
            let capacity = match &d.capacity {
                None => None,
                Some(Quantity::Text(t)) if t == "unbounded" => None,
                Some(c) => Some(bytes(c, &format!("{loc}.capacity"))?),
            };
            disks.push(DiskSpec {
                name: d.name.clone(),
                site: site.name.clone(),
                attached_host: d.attached_host.clone(),
                read_bw: positive(&d.read_bw, Dimension::Bandwidth, &format!("{loc}.read_bw"))?,
                write_bw: positive(&d.write_bw, Dimension::Bandwidth, &format!("{loc}.write_bw"))?,
                capacity,
                role: d.role,
            });
        }
        sites.push(SiteSpec { name: site.name, output_storage: site.output_storage });
    }

    let mut links = Vec::new();
    for (li, l) in doc.links.iter().enumerate() {
        let loc = format!("links[{li}]");
        let latency = qty(&l.latency, Dimension::Time, &format!("{loc}.latency"))?;
        if !(latency >= 0.0) {
            return Err(invalid(format!("{loc}.latency"), format!("must be non-negative, got {latency}")));
        }
        links.push(LinkSpec {
            name: l.name.clone(),
            bandwidth: positive(&l.bandwidth, Dimension::Bandwidth, &format!("{loc}.bandwidth"))?,
            latency,
            wan: l.wan,
        });
    }

    let routes = doc
        .routes
        .into_iter()
        .map(|r| {
            let [a, b] = r.endpoints;
            RouteSpec { endpoints: (a, b), links: r.links }
        })
        .collect();

    Ok(PlatformSpec { sites, hosts, disks, links, routes, defaults })
}

/// Ordered key for an unordered endpoint pair.
fn pair_key<'a>(a: &'a str, b: &'a str) -> (&'a str, &'a str) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl PlatformSpec {
    pub fn site(&self, name: &str) -> Option<&SiteSpec> {
        self.sites.iter().find(|s| s.name == name)
    }

    pub fn host(&self, name: &str) -> Option<&HostSpec> {
        self.hosts.iter().find(|h| h.name == name)
    }

    pub fn disk(&self, name: &str) -> Option<&DiskSpec> {
        self.disks.iter().find(|d| d.name == name)
    }

    pub fn link(&self, name: &str) -> Option<&LinkSpec> {
        self.links.iter().find(|l| l.name == name)
    }

    /// The cache service serving readers at `site`, if any.
    pub fn site_cache(&self, site: &str) -> Option<&DiskSpec> {
        self.disks.iter().find(|d| d.site == site && d.role == DiskRole::Cache)
    }

    pub fn total_cores(&self) -> u64 {
        self.hosts.iter().map(|h| h.cores as u64).sum()
    }

    pub fn site_cores(&self, site: &str) -> u64 {
        self.hosts.iter().filter(|h| h.site == site).map(|h| h.cores as u64).sum()
    }

    /// Disk receiving output from jobs at `site`: the site's own setting,
    /// else its grid storage, else the global input storage.
    pub fn output_storage_for(&self, site: &str) -> Option<&str> {
        if let Some(s) = self.site(site).and_then(|s| s.output_storage.as_deref()) {
            return Some(s);
        }
        if let Some(d) = self.disks.iter().find(|d| d.site == site && d.role == DiskRole::GridStorage) {
            return Some(&d.name);
        }
        self.defaults.input_storage.as_deref()
    }

    /// Disk holding authoritative input replicas.
    pub fn input_storage(&self) -> Option<&str> {
        self.defaults.input_storage.as_deref().or_else(|| {
            self.disks.iter().find(|d| d.role == DiskRole::GridStorage).map(|d| d.name.as_str())
        })
    }

    fn endpoint_site(&self, name: &str) -> Option<&str> {
        if let Some(h) = self.host(name) {
            return Some(&h.site);
        }
        if let Some(d) = self.disk(name) {
            return Some(&d.site);
        }
        self.site(name).map(|s| s.name.as_str())
    }

    /// Links traversed between two endpoints (hosts or disks).
    pub fn resolve_route(&self, src: &str, dst: &str) -> Result<Vec<String>, PlatformError> {
        let src_site = self.endpoint_site(src).ok_or_else(|| PlatformError::UnknownEndpoint(src.into()))?;
        let dst_site = self.endpoint_site(dst).ok_or_else(|| PlatformError::UnknownEndpoint(dst.into()))?;
        if src == dst || self.attached(src, dst) || self.attached(dst, src) {
            return Ok(Vec::new());
        }
        let table: HashMap<(&str, &str), &RouteSpec> = self
            .routes
            .iter()
            .map(|r| (pair_key(&r.endpoints.0, &r.endpoints.1), r))
            .collect();
        let candidates = [(src, dst), (src_site, dst), (src, dst_site), (src_site, dst_site)];
        for (a, b) in candidates {
            if let Some(r) = table.get(&pair_key(a, b)) {
                return Ok(r.links.clone());
            }
        }
        Err(PlatformError::NoRoute { src: src.into(), dst: dst.into() })
    }

    fn attached(&self, disk: &str, host: &str) -> bool {
        self.disk(disk).is_some_and(|d| d.attached_host.as_deref() == Some(host))
    }

    /// Total one-way latency along a list of links.
    pub fn route_latency(&self, links: &[String]) -> f64 {
        links.iter().filter_map(|l| self.link(l)).map(|l| l.latency).sum()
    }

    pub fn validate(&self) -> Result<(), PlatformError> {
        let mut endpoint_names = HashSet::new();
        for (i, s) in self.sites.iter().enumerate() {
            if !endpoint_names.insert(s.name.as_str()) {
                return Err(invalid(format!("sites[{i}].name"), format!("duplicate name '{}'", s.name)));
            }
        }
        if self.sites.is_empty() {
            return Err(invalid("sites", "at least one site is required"));
        }
        for h in &self.hosts {
            if !endpoint_names.insert(h.name.as_str()) {
                return Err(invalid(format!("host '{}'", h.name), "duplicate name"));
            }
            if self.site(&h.site).is_none() {
                return Err(invalid(format!("host '{}'", h.name), format!("unknown site '{}'", h.site)));
            }
            if h.cores < 1 || !(h.core_speed > 0.0) || h.memory == 0 {
                return Err(invalid(format!("host '{}'", h.name), "cores, core_speed and memory must be positive"));
            }
        }
        for d in &self.disks {
            let loc = format!("disk '{}'", d.name);
            if !endpoint_names.insert(d.name.as_str()) {
                return Err(invalid(loc, "duplicate name"));
            }
            if self.site(&d.site).is_none() {
                return Err(invalid(loc, format!("unknown site '{}'", d.site)));
            }
            if let Some(h) = &d.attached_host {
                match self.host(h) {
                    None => return Err(invalid(format!("{loc}.attached_host"), format!("unknown host '{h}'"))),
                    Some(host) if host.site != d.site => {
                        return Err(invalid(format!("{loc}.attached_host"), format!("host '{h}' is at another site")))
                    }
                    _ => {}
                }
            }
            if !(d.read_bw > 0.0) || !(d.write_bw > 0.0) {
                return Err(invalid(loc, "read_bw and write_bw must be positive"));
            }
            match (d.role, d.capacity) {
                (DiskRole::Cache, None) => return Err(invalid(loc, "cache disks must declare a finite capacity")),
                (_, Some(0)) => return Err(invalid(loc, "capacity must be positive")),
                _ => {}
            }
        }
        let mut link_names = HashSet::new();
        for (i, l) in self.links.iter().enumerate() {
            if !link_names.insert(l.name.as_str()) {
                return Err(invalid(format!("links[{i}].name"), format!("duplicate link '{}'", l.name)));
            }
            if !(l.bandwidth > 0.0) || !(l.latency >= 0.0) {
                return Err(invalid(format!("links[{i}]"), "bandwidth must be positive and latency non-negative"));
            }
        }
        let mut pairs = HashSet::new();
        for (i, r) in self.routes.iter().enumerate() {
            let loc = format!("routes[{i}]");
            for (j, e) in [&r.endpoints.0, &r.endpoints.1].into_iter().enumerate() {
                if !endpoint_names.contains(e.as_str()) {
                    return Err(invalid(format!("{loc}.endpoints[{j}]"), format!("unknown endpoint '{e}'")));
                }
            }
            if r.links.is_empty() {
                return Err(invalid(format!("{loc}.links"), "route must list at least one link"));
            }
            for (j, l) in r.links.iter().enumerate() {
                if !link_names.contains(l.as_str()) {
                    return Err(invalid(format!("{loc}.links[{j}]"), format!("undeclared link '{l}'")));
                }
            }
            if !pairs.insert(pair_key(&r.endpoints.0, &r.endpoints.1)) {
                return Err(invalid(
                    loc,
                    format!("second route between '{}' and '{}'", r.endpoints.0, r.endpoints.1),
                ));
            }
        }
        for (name, loc) in [
            (self.defaults.input_storage.as_deref(), "defaults.input_storage"),
        ] {
            if let Some(n) = name {
                if self.disk(n).is_none() {
                    return Err(invalid(loc, format!("unknown disk '{n}'")));
                }
            }
        }
        for (i, s) in self.sites.iter().enumerate() {
            if let Some(n) = &s.output_storage {
                if self.disk(n).is_none() {
                    return Err(invalid(format!("sites[{i}].output_storage"), format!("unknown disk '{n}'")));
                }
            }
        }
        if self.defaults.block_size == 0 {
            return Err(invalid("defaults.block_size", "must be positive"));
        }

        // Every worker must reach the input storage, its site cache and its output storage.
        let input = self.input_storage();
        for h in &self.hosts {
            let mut targets: Vec<&str> = Vec::new();
            targets.extend(input);
            if let Some(c) = self.site_cache(&h.site) {
                targets.push(&c.name);
            }
            targets.extend(self.output_storage_for(&h.site));
            for t in targets {
                self.resolve_route(&h.name, t)?;
            }
        }
        Ok(())
    }

    /// Serializes to the document format with every value in base units.
    pub fn to_document(&self) -> String {
        let mut doc = PlatformDoc {
            defaults: DefaultsDoc {
                block_size: Some(self.defaults.block_size.into()),
                scheduler: Some(self.defaults.scheduler.clone()),
                input_storage: self.defaults.input_storage.clone(),
                match_delay: Some(self.defaults.match_delay.into()),
            },
            sites: Vec::new(),
            links: self
                .links
                .iter()
                .map(|l| LinkDoc {
                    name: l.name.clone(),
                    bandwidth: l.bandwidth.into(),
                    latency: l.latency.into(),
                    wan: l.wan,
                })
                .collect(),
            routes: self
                .routes
                .iter()
                .map(|r| RouteDoc {
                    endpoints: [r.endpoints.0.clone(), r.endpoints.1.clone()],
                    links: r.links.clone(),
                })
                .collect(),
        };
        for s in &self.sites {
            doc.sites.push(SiteDoc {
                name: s.name.clone(),
                output_storage: s.output_storage.clone(),
                hosts: self
                    .hosts
                    .iter()
                    .filter(|h| h.site == s.name)
                    .map(|h| HostDoc {
                        name: h.name.clone(),
                        count: None,
                        cores: h.cores as i64,
                        core_speed: h.core_speed.into(),
                        memory: h.memory.into(),
                    })
                    .collect(),
                disks: self
                    .disks
                    .iter()
                    .filter(|d| d.site == s.name)
                    .map(|d| DiskDoc {
                        name: d.name.clone(),
                        attached_host: d.attached_host.clone(),
                        read_bw: d.read_bw.into(),
                        write_bw: d.write_bw.into(),
                        capacity: d.capacity.map(Quantity::from),
                        role: d.role,
                    })
                    .collect(),
            });
        }
        toml::to_string(&doc).expect("platform documents always serialize")
    }

    /// Divides the bandwidth of every WAN link by `divisor`.
    pub fn with_wan_divisor(mut self, divisor: f64) -> Result<Self, PlatformError> {
        if !(divisor > 0.0) || !divisor.is_finite() {
            return Err(invalid("--wan-divisor", format!("must be positive, got {divisor}")));
        }
        for l in self.links.iter_mut().filter(|l| l.wan) {
            l.bandwidth /= divisor;
        }
        Ok(self)
    }
}

/// Shrinks a platform and its workload by a common factor `k`.
///
/// Cores per host become `round(k * cores)`; link bandwidths, disk
/// bandwidths and cache capacities are multiplied by `k`; host memory follows
/// the realized core ratio so memory per core is unchanged. Core speeds,
/// latencies and per-job characteristics are left alone. The workload keeps
/// its parameters but is thinned to `round(k * total_jobs)` jobs.
pub fn downscale_platform(
    spec: &PlatformSpec,
    k: f64,
    workload: &WorkloadSpec,
) -> Result<(PlatformSpec, WorkloadSpec), PlatformError> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(PlatformError::BadScale(k));
    }
    if k == 1.0 {
        return Ok((spec.clone(), workload.clone()));
    }
    let mut out = spec.clone();
    for h in &mut out.hosts {
        let cores = (k * h.cores as f64).round();
        if cores < 1.0 {
            return Err(invalid(
                format!("host '{}'", h.name),
                format!("{} cores scaled by {k} rounds to zero", h.cores),
            ));
        }
        let ratio = cores / h.cores as f64;
        h.memory = ((h.memory as f64 * ratio).round() as u64).max(1);
        h.cores = cores as u32;
    }
    for l in &mut out.links {
        l.bandwidth *= k;
    }
    for d in &mut out.disks {
        d.read_bw *= k;
        d.write_bw *= k;
        if d.role == DiskRole::Cache {
            d.capacity = d.capacity.map(|c| ((c as f64 * k).round() as u64).max(1));
        }
    }
    let mut wl = workload.clone();
    wl.scale *= k;
    Ok((out, wl))
}
