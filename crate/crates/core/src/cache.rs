//! Content-addressed store for Dirichlet-to-Neumann evaluations.
//!
//! Keys are SHA-256 digests of the domain configuration, the coefficient
//! values and the exact bits of the input trace, so a hit can only return the
//! output of an identical solve. Values are stored as flat CSV files with
//! round-trip float formatting; a warm run therefore reproduces a cold run
//! bit for bit.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::domain::{BoundaryTrace, DomainConfig};
use crate::error::{Error, Result};

pub trait SolveCache: Send + Sync + fmt::Debug {
    fn get(&self, key: &str) -> Option<Vec<Complex64>>;
    fn put(&self, key: &str, values: &[Complex64]) -> Result<()>;
}

/// Digest of everything a forward solve depends on besides its input trace.
pub fn model_digest(cfg: &DomainConfig, coefficient_bytes: &[u8], solver_tag: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    // Debug formatting of f64 is shortest round-trip, hence exact
    h.update(format!("{cfg:?}").as_bytes());
    h.update(solver_tag.as_bytes());
    h.update(coefficient_bytes);
    h.finalize().into()
}

pub fn trace_key(model: &[u8; 32], f: &BoundaryTrace) -> String {
    let mut h = Sha256::new();
    h.update(model);
    for (v, m) in f.values().iter().zip(f.mask().as_slice()) {
        h.update(v.re.to_bits().to_le_bytes());
        h.update(v.im.to_bits().to_le_bytes());
        h.update([*m as u8]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// One CSV file per key under a directory.
#[derive(Debug)]
pub struct DirCache {
    dir: PathBuf,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl DirCache {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(DirCache { dir: dir.as_ref().to_path_buf(), hits: AtomicUsize::new(0), misses: AtomicUsize::new(0) })
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.csv"))
    }
}

fn parse_values(text: &str) -> Result<Vec<Complex64>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        let (re, im) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("cache line {}: expected `re,im`", lineno + 1)))?;
        let p = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("cache line {}: {e}", lineno + 1)));
        out.push(Complex64::new(p(re)?, p(im)?));
    }
    Ok(out)
}

impl SolveCache for DirCache {
    fn get(&self, key: &str) -> Option<Vec<Complex64>> {
        let found = fs::read_to_string(self.path(key)).ok().and_then(|t| parse_values(&t).ok());
        match found {
            Some(v) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                Some(v)
            }
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    fn put(&self, key: &str, values: &[Complex64]) -> Result<()> {
        let mut text = String::with_capacity(values.len() * 48 + 8);
        text.push_str("re,im\n");
        for v in values {
            text.push_str(&format!("{:?},{:?}\n", v.re, v.im));
        }
        // write-then-rename keeps concurrent readers from seeing partial files
        let tmp = self.dir.join(format!("{key}.{}.tmp", std::process::id()));
        let mut file = fs::File::create(&tmp)?;
        file.write_all(text.as_bytes())?;
        file.sync_all()?;
        fs::rename(&tmp, self.path(key))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DirCache::open(dir.path()).unwrap();
        let values = vec![Complex64::new(0.1 + 0.2, -1e-300), Complex64::new(f64::MIN_POSITIVE, 1.0 / 3.0)];
        assert!(cache.get("k").is_none());
        cache.put("k", &values).unwrap();
        let back = cache.get("k").unwrap();
        for (a, b) in back.iter().zip(&values) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        assert_eq!((cache.hits(), cache.misses()), (1, 1));
    }
}
