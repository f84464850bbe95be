//! On-disk reuse of Ulam matrices and spectral snapshots.
//!
//! Entries live in one flat directory (from `ULAM_ESCAPE_CACHE` unless given
//! explicitly). Matrices use the plain matrix file format, snapshots are
//! JSON. File names carry the map fingerprint, the bin count and the mode or
//! norm convention; the contents repeat the fingerprint and are checked on
//! load. Writes go to a temporary file in the same directory and are renamed
//! into place.

use std::collections::HashMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::certify::SpectralProvider;
use crate::error::{Error, Result};
use crate::maps::PiecewiseMap;
use crate::spectral::{self, QNormConvention, SnapshotOptions, SpectralData, SpectralSnapshot};
use crate::ulam::{build_closed, build_open, Hole, MatrixMode, UlamMatrix, UlamPartition};

pub const CACHE_ENV: &str = "ULAM_ESCAPE_CACHE";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub matrix_hits: usize,
    pub matrix_misses: usize,
    pub spectral_hits: usize,
    pub spectral_misses: usize,
    /// Snapshot computations and power-norm extensions.
    pub power_norm_computations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryKind {
    Matrix,
    Spectral,
    Other,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub name: String,
    pub kind: EntryKind,
    pub bytes: u64,
}

/// A cache directory, or nothing when disabled.
#[derive(Clone, Debug)]
pub struct Cache {
    dir: Option<PathBuf>,
    stats: CacheStats,
}

fn mode_tag(mode: &MatrixMode) -> String {
    match mode {
        MatrixMode::Closed => "closed".into(),
        MatrixMode::Open { hole } => {
            let (a, b) = hole.endpoints();
            format!("open-{}-{}", a.to_string().replace('/', "_"), b.to_string().replace('/', "_"))
        }
    }
}

impl Cache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating cache {}", dir.display()), e))?;
        Ok(Cache {
            dir: Some(dir),
            stats: CacheStats::default(),
        })
    }

    pub fn disabled() -> Self {
        Cache {
            dir: None,
            stats: CacheStats::default(),
        }
    }

    /// Directory from `ULAM_ESCAPE_CACHE`, disabled when unset or empty.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(CACHE_ENV) {
            Some(dir) if !dir.is_empty() => Self::open(PathBuf::from(dir)),
            _ => Ok(Self::disabled()),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    pub fn matrix_path(&self, fingerprint: &str, n_bins: usize, mode: &MatrixMode) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(format!("matrix-{fingerprint}-{n_bins}-{}.ulam", mode_tag(mode))))
    }

    pub fn spectral_path(&self, fingerprint: &str, n_bins: usize, convention: QNormConvention) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(format!("spectral-{fingerprint}-{n_bins}-{}.json", convention.as_str())))
    }

    fn write_atomic(&self, path: &Path, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let dir = path.parent().expect("cache entries live in a directory");
        let ctx = || format!("writing cache entry {}", path.display());
        let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(ctx(), e))?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            write(&mut w).map_err(|e| Error::io(ctx(), e))?;
            w.flush().map_err(|e| Error::io(ctx(), e))?;
        }
        tmp.persist(path).map_err(|e| Error::io(ctx(), e.error))?;
        Ok(())
    }

    fn load_matrix(&self, path: &Path, fingerprint: &str) -> Result<UlamMatrix> {
        let loaded = UlamMatrix::load(path, Some(fingerprint))?;
        if !loaded.warnings.is_empty() {
            return Err(Error::CorruptCache {
                path: path.to_path_buf(),
                reason: loaded.warnings.join("; "),
            });
        }
        loaded.matrix.check_invariants(1e-9)?;
        Ok(loaded.matrix)
    }

    /// Closed or open matrix, loaded when present and built otherwise.
    pub fn matrix(&mut self, map: &PiecewiseMap, n_bins: usize, hole: Option<&Hole>) -> Result<UlamMatrix> {
        let mode = match hole {
            None => MatrixMode::Closed,
            Some(h) => MatrixMode::Open { hole: *h },
        };
        let path = self.matrix_path(map.fingerprint(), n_bins, &mode);
        if let Some(path) = &path {
            if path.exists() {
                match self.load_matrix(path, map.fingerprint()) {
                    Ok(m) if m.n_bins() == n_bins && *m.mode() == mode => {
                        self.stats.matrix_hits += 1;
                        return Ok(m);
                    }
                    Ok(_) => log::warn!("cache entry {} does not match its key; rebuilding", path.display()),
                    Err(e) => log::warn!("ignoring unreadable cache entry {}: {e}", path.display()),
                }
            }
        }
        self.stats.matrix_misses += 1;
        let partition = UlamPartition::new(n_bins)?;
        let matrix = match hole {
            None => build_closed(map, &partition)?,
            Some(h) => build_open(map, &partition, h)?,
        };
        if let Some(path) = &path {
            self.write_atomic(path, |w| matrix.write_to(w))?;
        }
        Ok(matrix)
    }

    pub fn load_snapshot(&mut self, fingerprint: &str, n_bins: usize, convention: QNormConvention) -> Option<SpectralSnapshot> {
        let path = self.spectral_path(fingerprint, n_bins, convention)?;
        if !path.exists() {
            return None;
        }
        let parsed = fs::File::open(&path)
            .map_err(|e| e.to_string())
            .and_then(|f| serde_json::from_reader::<_, SpectralSnapshot>(BufReader::new(f)).map_err(|e| e.to_string()));
        match parsed {
            Ok(s) if s.map_fingerprint == fingerprint && s.n_bins == n_bins && s.convention == convention => Some(s),
            Ok(_) => {
                log::warn!("cache entry {} does not match its key; ignoring", path.display());
                None
            }
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
                None
            }
        }
    }

    pub fn store_snapshot(&self, snapshot: &SpectralSnapshot) -> Result<()> {
        let Some(path) = self.spectral_path(&snapshot.map_fingerprint, snapshot.n_bins, snapshot.convention) else {
            return Ok(());
        };
        self.write_atomic(&path, |w| {
            serde_json::to_writer(&mut *w, snapshot).map_err(std::io::Error::other)
        })
    }

    /// Snapshot from disk, or computed (and stored) from the closed matrix.
    pub fn snapshot(&mut self, map: &PiecewiseMap, n_bins: usize, options: &SnapshotOptions) -> Result<SpectralSnapshot> {
        if let Some(s) = self.load_snapshot(map.fingerprint(), n_bins, options.convention) {
            if s.q_power_norms.len() > options.max_power {
                self.stats.spectral_hits += 1;
                return Ok(s);
            }
        }
        self.stats.spectral_misses += 1;
        let matrix = self.matrix(map, n_bins, None)?;
        let snapshot = spectral::spectral_snapshot(&matrix, options)?;
        self.stats.power_norm_computations += 1;
        self.store_snapshot(&snapshot)?;
        Ok(snapshot)
    }

    pub fn list(&self) -> Result<Vec<CacheEntry>> {
        let Some(dir) = &self.dir else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        let read = fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
        for entry in read {
            let entry = entry.map_err(|e| Error::io("listing cache", e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let meta = entry.metadata().map_err(|e| Error::io("listing cache", e))?;
            if !meta.is_file() || name.starts_with(".tmp") {
                continue;
            }
            let kind = if name.starts_with("matrix-") {
                EntryKind::Matrix
            } else if name.starts_with("spectral-") {
                EntryKind::Spectral
            } else {
                EntryKind::Other
            };
            out.push(CacheEntry {
                name,
                kind,
                bytes: meta.len(),
            });
        }
        out.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(out)
    }

    /// Removes matrix and spectral entries; returns how many.
    pub fn purge(&self) -> Result<usize> {
        let Some(dir) = &self.dir else {
            return Ok(0);
        };
        let mut removed = 0;
        for entry in self.list()? {
            if entry.kind != EntryKind::Other {
                let path = dir.join(&entry.name);
                fs::remove_file(&path).map_err(|e| Error::io(format!("removing {}", path.display()), e))?;
                removed += 1;
            }
        }
        Ok(removed)
    }

    /// Summary of one entry's contents.
    pub fn inspect(&self, name: &str) -> Result<serde_json::Value> {
        let dir = self.dir.as_ref().ok_or_else(|| Error::Domain("cache is disabled".into()))?;
        let path = dir.join(name);
        let corrupt = |reason: String| Error::CorruptCache {
            path: path.clone(),
            reason,
        };
        if name.starts_with("matrix-") {
            let loaded = UlamMatrix::load(&path, None).map_err(|e| corrupt(e.to_string()))?;
            let m = loaded.matrix;
            Ok(serde_json::json!({
                "kind": "matrix",
                "n_bins": m.n_bins(),
                "mode": mode_tag(m.mode()),
                "fingerprint": m.map_fingerprint(),
                "nnz": m.entries().nnz(),
            }))
        } else if name.starts_with("spectral-") {
            let file = fs::File::open(&path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
            let s: SpectralSnapshot =
                serde_json::from_reader(BufReader::new(file)).map_err(|e| corrupt(e.to_string()))?;
            Ok(serde_json::json!({
                "kind": "spectral",
                "n_bins": s.n_bins,
                "fingerprint": s.map_fingerprint,
                "convention": s.convention,
                "method": s.method,
                "leading_eigenvalues": s.eigenvalues.iter().take(5).map(|z| [z.re, z.im]).collect::<Vec<_>>(),
                "subdominant_modulus": s.subdominant_modulus(),
                "projection_norm": s.projection_norm,
                "q_power_norms": s.q_power_norms,
            }))
        } else {
            Err(Error::Domain(format!("{name} is not a cache entry")))
        }
    }
}

/// [`SpectralProvider`] backed by a [`Cache`] with an in-memory layer.
pub struct CachedProvider {
    pub cache: Cache,
    memory: HashMap<(String, usize, QNormConvention), SpectralSnapshot>,
}

impl CachedProvider {
    pub fn new(cache: Cache) -> Self {
        CachedProvider {
            cache,
            memory: HashMap::new(),
        }
    }

    pub fn stats(&self) -> CacheStats {
        self.cache.stats()
    }

    pub fn insert(&mut self, snapshot: SpectralSnapshot) {
        let key = (snapshot.map_fingerprint.clone(), snapshot.n_bins, snapshot.convention);
        self.memory.insert(key, snapshot);
    }
}

impl SpectralProvider for CachedProvider {
    fn spectral_data(
        &mut self,
        map: &PiecewiseMap,
        n_bins: usize,
        r: f64,
        truncation: usize,
        options: &SnapshotOptions,
    ) -> Result<SpectralData> {
        let key = (map.fingerprint().to_string(), n_bins, options.convention);
        if let Some(s) = self.memory.get(&key) {
            self.cache.stats.spectral_hits += 1;
            if let Ok(data) = s.level(r, truncation) {
                return Ok(data);
            }
        } else {
            let s = self.cache.snapshot(map, n_bins, options)?;
            self.memory.insert(key.clone(), s);
        }
        let snap = &self.memory[&key];
        match snap.level(r, truncation) {
            Err(Error::NeumannDivergence { .. }) if snap.q_power_norms.len() < spectral::MAX_TRUNCATION + 2 => {
                let matrix = self.cache.matrix(map, n_bins, None)?;
                let (data, extended) = spectral::level_with_extension(snap, &matrix, r, truncation)?;
                if let Some(ext) = extended {
                    self.cache.stats.power_norm_computations += 1;
                    self.cache.store_snapshot(&ext)?;
                    self.memory.insert(key, ext);
                }
                Ok(data)
            }
            other => other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::builtin;
    use crate::Rational;

    #[test]
    fn matrix_round_trip_and_stats() {
        let dir = tempfile::tempdir().unwrap();
        let mut cache = Cache::open(dir.path()).unwrap();
        let map = builtin::doubling();
        let a = cache.matrix(&map, 64, None).unwrap();
        let b = cache.matrix(&map, 64, None).unwrap();
        assert_eq!(a, b);
        let hole = Hole::new(Rational::ZERO, Rational::new(1, 8)).unwrap();
        cache.matrix(&map, 64, Some(&hole)).unwrap();
        let s = cache.stats();
        assert_eq!((s.matrix_hits, s.matrix_misses), (1, 2));
        assert_eq!(cache.list().unwrap().len(), 2);
    }

    #[test]
    fn snapshot_hit_after_store() {
        let dir = tempfile::tempdir().unwrap();
        let map = builtin::moebius_ten_branch();
        let options = SnapshotOptions::default();
        let first = Cache::open(dir.path()).unwrap().snapshot(&map, 100, &options).unwrap();
        let mut cache = Cache::open(dir.path()).unwrap();
        let second = cache.snapshot(&map, 100, &options).unwrap();
        assert_eq!(first, second);
        assert_eq!(cache.stats().spectral_hits, 1);
        assert_eq!(cache.stats().power_norm_computations, 0);
    }

    #[test]
    fn corrupt_entries_are_recomputed() {
        let dir = tempfile::tempdir().unwrap();
        let map = builtin::doubling();
        let mut cache = Cache::open(dir.path()).unwrap();
        cache.matrix(&map, 16, None).unwrap();
        let path = cache.matrix_path(map.fingerprint(), 16, &MatrixMode::Closed).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..text.len() / 2]).unwrap();
        let mut cache = Cache::open(dir.path()).unwrap();
        cache.matrix(&map, 16, None).unwrap();
        assert_eq!(cache.stats().matrix_misses, 1);
        assert_eq!(fs::read_to_string(&path).unwrap(), text);
    }

    #[test]
    fn purge_and_empty_listing() {
        let dir = tempfile::tempdir().unwrap();
        let mut cache = Cache::open(dir.path()).unwrap();
        assert!(cache.list().unwrap().is_empty());
        cache.matrix(&builtin::doubling(), 8, None).unwrap();
        assert_eq!(cache.purge().unwrap(), 1);
        assert!(cache.list().unwrap().is_empty());
        assert!(Cache::disabled().list().unwrap().is_empty());
    }
}
