//! Grid storage and cache services.
//!
//! Every input file has one authoritative replica on a grid-storage disk.
//! Each site may run one cache service; readers look there first and fall
//! back to the authoritative copy on a miss, in which case the file is copied
//! into the cache as it streams past. Caches evict least-recently-used files
//! when an admission would exceed their capacity.

use std::collections::{BTreeMap, HashMap};

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jobs::JobSpec;
use crate::platform::{DiskRole, DiskSpec, PlatformSpec};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FileId {
    pub name: String,
    /// bytes
    pub size: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Replica {
    pub file: FileId,
    /// disk name
    pub location: String,
    pub authoritative: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum StorageError {
    #[error("file '{0}' has no authoritative replica")]
    NoReplica(String),
    #[error("unknown cache '{0}'")]
    UnknownCache(String),
    #[error("line {line}: {message}")]
    BadContents { line: usize, message: String },
}

/// Result of admitting a file into a cache.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Admission {
    /// File is resident; `evicted` lists displaced files in eviction order.
    Admitted { evicted: Vec<FileId> },
    /// File is larger than the whole cache and was not stored.
    Bypassed,
}

/// One cache service with LRU replacement.
#[derive(Clone, Debug)]
pub struct CacheState {
    pub disk: String,
    pub site: String,
    pub capacity: u64,
    used: u64,
    resident: HashMap<String, (u64, u64)>,
    /// stamp -> file, oldest first
    lru: BTreeMap<u64, String>,
    next_stamp: u64,
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub bypasses: u64,
}

impl CacheState {
    pub fn new(disk: impl Into<String>, site: impl Into<String>, capacity: u64) -> Self {
        Self {
            disk: disk.into(),
            site: site.into(),
            capacity,
            used: 0,
            resident: HashMap::new(),
            lru: BTreeMap::new(),
            next_stamp: 0,
            hits: 0,
            misses: 0,
            evictions: 0,
            bypasses: 0,
        }
    }

    pub fn from_disk(disk: &DiskSpec) -> Self {
        Self::new(&disk.name, &disk.site, disk.capacity.unwrap_or(u64::MAX))
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn len(&self) -> usize {
        self.resident.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resident.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.resident.contains_key(name)
    }

    /// Resident file names from least to most recently used.
    pub fn lru_order(&self) -> Vec<&str> {
        self.lru.values().map(String::as_str).collect()
    }

    /// Marks a resident file as most recently used.
    pub fn touch(&mut self, name: &str) -> bool {
        let stamp = self.next_stamp;
        match self.resident.get_mut(name) {
            Some((_, s)) => {
                let old = std::mem::replace(s, stamp);
                let f = self.lru.remove(&old).expect("lru tracks every resident file");
                self.lru.insert(stamp, f);
                self.next_stamp += 1;
                true
            }
            None => false,
        }
    }

    fn insert(&mut self, file: &FileId) {
        let stamp = self.next_stamp;
        self.next_stamp += 1;
        self.resident.insert(file.name.clone(), (file.size, stamp));
        self.lru.insert(stamp, file.name.clone());
        self.used += file.size;
    }

    /// Inserts `file` at the MRU position, evicting LRU files as needed.
    pub fn admit(&mut self, file: &FileId) -> Admission {
        if self.touch(&file.name) {
            return Admission::Admitted { evicted: Vec::new() };
        }
        if file.size > self.capacity {
            self.bypasses += 1;
            return Admission::Bypassed;
        }
        let mut evicted = Vec::new();
        while self.used + file.size > self.capacity {
            let (_, victim) = self.lru.pop_first().expect("non-empty while over capacity");
            let (size, _) = self.resident.remove(&victim).expect("lru and resident agree");
            self.used -= size;
            self.evictions += 1;
            evicted.push(FileId { name: victim, size });
        }
        self.insert(file);
        Admission::Admitted { evicted }
    }

    /// Inserts without evicting; returns false (and stores nothing) if it would not fit.
    pub fn insert_if_room(&mut self, file: &FileId) -> bool {
        if self.contains(&file.name) {
            return true;
        }
        if self.used.saturating_add(file.size) > self.capacity {
            return false;
        }
        self.insert(file);
        true
    }

    pub fn observed_hitrate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }
}

/// Authoritative replica locations.
#[derive(Clone, Debug, Default)]
pub struct ReplicaCatalog {
    files: HashMap<String, (u64, String)>,
}

impl ReplicaCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers every input file of `jobs` on `disk`.
    pub fn for_jobs<'a>(jobs: impl IntoIterator<Item = &'a JobSpec>, disk: &str) -> Self {
        let mut c = Self::new();
        for j in jobs {
            for f in &j.input_files {
                c.add(f, disk);
            }
        }
        c
    }

    pub fn add(&mut self, file: &FileId, disk: &str) {
        self.files.entry(file.name.clone()).or_insert_with(|| (file.size, disk.to_string()));
    }

    pub fn remove(&mut self, name: &str) {
        self.files.remove(name);
    }

    pub fn authoritative(&self, name: &str) -> Option<Replica> {
        self.files.get(name).map(|(size, disk)| Replica {
            file: FileId { name: name.to_string(), size: *size },
            location: disk.clone(),
            authoritative: true,
        })
    }

    pub fn size_of(&self, name: &str) -> Option<u64> {
        self.files.get(name).map(|(s, _)| *s)
    }
}

/// Where a reader gets a file from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Source {
    /// Resident in the reader's site cache (index into the cache list).
    Cache(usize),
    /// Authoritative disk; `cache` is the site cache that should receive a copy.
    Remote { disk: String, cache: Option<usize> },
}

/// Catalog plus all cache services of a platform.
#[derive(Clone, Debug)]
pub struct Storage {
    pub catalog: ReplicaCatalog,
    caches: Vec<CacheState>,
    by_site: HashMap<String, usize>,
}

impl Storage {
    pub fn new(platform: &PlatformSpec, catalog: ReplicaCatalog) -> Self {
        let mut caches = Vec::new();
        let mut by_site = HashMap::new();
        for d in platform.disks.iter().filter(|d| d.role == DiskRole::Cache) {
            if by_site.contains_key(&d.site) {
                warn!("site '{}' has several caches; only the first is used", d.site);
                continue;
            }
            by_site.insert(d.site.clone(), caches.len());
            caches.push(CacheState::from_disk(d));
        }
        Self { catalog, caches, by_site }
    }

    pub fn caches(&self) -> &[CacheState] {
        &self.caches
    }

    pub fn cache_mut(&mut self, idx: usize) -> &mut CacheState {
        &mut self.caches[idx]
    }

    pub fn cache_index(&self, disk: &str) -> Option<usize> {
        self.caches.iter().position(|c| c.disk == disk)
    }

    pub fn site_cache(&self, site: &str) -> Option<usize> {
        self.by_site.get(site).copied()
    }

    /// Picks the source for `file` read from a host at `reader_site`, updating
    /// hit/miss counters and LRU recency of the site cache.
    pub fn locate_input(&mut self, file: &FileId, reader_site: &str) -> Result<Source, StorageError> {
        let replica = self
            .catalog
            .authoritative(&file.name)
            .ok_or_else(|| StorageError::NoReplica(file.name.clone()))?;
        let Some(ci) = self.site_cache(reader_site) else {
            return Ok(Source::Remote { disk: replica.location, cache: None });
        };
        let cache = &mut self.caches[ci];
        if cache.touch(&file.name) {
            cache.hits += 1;
            return Ok(Source::Cache(ci));
        }
        cache.misses += 1;
        let target = if file.size > cache.capacity {
            cache.bypasses += 1;
            None
        } else {
            Some(ci)
        };
        Ok(Source::Remote { disk: replica.location, cache: target })
    }

    pub fn admit(&mut self, cache: usize, file: &FileId) -> Admission {
        self.caches[cache].admit(file)
    }

    /// Stages `round(h * N)` of the distinct files bound for each cache's site.
    ///
    /// Files are taken from a seeded permutation, so staged sets are nested
    /// across hitrates.
    ///
    /// Jobs without a target site count towards every cache. Staging never
    /// evicts; it stops at the first file that does not fit.
    pub fn prestage<R: Rng + ?Sized>(&mut self, jobs: &[JobSpec], hitrate: f64, rng: &mut R) -> Vec<Replica> {
        let mut staged = Vec::new();
        for cache in &mut self.caches {
            let mut files: Vec<&FileId> = jobs
                .iter()
                .filter(|j| j.target_site.as_deref().is_none_or(|s| s == cache.site))
                .flat_map(|j| j.input_files.iter())
                .collect();
            files.sort();
            files.dedup_by(|a, b| a.name == b.name);
            let n = (hitrate * files.len() as f64).round() as usize;
            let n = n.min(files.len());
            // One permutation per cache: for a given seed, the files staged at a
            // lower hitrate are a prefix of those staged at a higher one.
            files.shuffle(rng);
            for &f in files.iter().take(n) {
                if !cache.insert_if_room(f) {
                    warn!(
                        "prestaging into '{}' stopped: {} does not fit ({} of {} bytes used)",
                        cache.disk, f.name, cache.used, cache.capacity
                    );
                    break;
                }
                staged.push(Replica { file: f.clone(), location: cache.disk.clone(), authoritative: false });
            }
        }
        staged
    }

    /// Places explicitly listed files into caches (no eviction).
    pub fn preload(&mut self, entries: &[(String, String)]) -> Result<Vec<Replica>, StorageError> {
        let mut staged = Vec::new();
        for (cache_name, file) in entries {
            let ci = self.cache_index(cache_name).ok_or_else(|| StorageError::UnknownCache(cache_name.clone()))?;
            let size = self.catalog.size_of(file).ok_or_else(|| StorageError::NoReplica(file.clone()))?;
            let f = FileId { name: file.clone(), size };
            if self.caches[ci].insert_if_room(&f) {
                staged.push(Replica { file: f, location: cache_name.clone(), authoritative: false });
            } else {
                warn!("initial contents: {} does not fit into '{}'", f.name, cache_name);
            }
        }
        Ok(staged)
    }
}

/// Parses an initial-cache listing: one `<cache disk> <file name>` pair per line.
pub fn parse_cache_contents(text: &str) -> Result<Vec<(String, String)>, StorageError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty());
        match (parts.next(), parts.next(), parts.next()) {
            (Some(c), Some(f), None) => out.push((c.to_string(), f.to_string())),
            _ => {
                return Err(StorageError::BadContents {
                    line: i + 1,
                    message: format!("expected '<cache> <file>', got '{line}'"),
                })
            }
        }
    }
    Ok(out)
}
