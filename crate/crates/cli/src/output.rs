//! Single writer for all artifacts of a run, plus the manifest.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use semilinear_inverse::inverse::MomentRecord;
use semilinear_inverse::{io, BoundaryTrace, Domain};
use sha2::{Digest, Sha256};

use crate::RunError;

pub struct Output {
    dir: PathBuf,
    artifacts: Vec<String>,
    report: Vec<String>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self, RunError> {
        std::fs::create_dir_all(dir)?;
        Ok(Output { dir: dir.to_path_buf(), artifacts: Vec::new(), report: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.dir.join(name)
    }

    /// Adds a line to `report.txt`.
    pub fn line(&mut self, s: impl Into<String>) {
        self.report.push(s.into());
    }

    pub fn real_field(&mut self, name: &str, d: &Domain, v: &[f64]) -> Result<(), RunError> {
        let p = self.path(name);
        Ok(io::write_real_field(&p, d, v)?)
    }

    pub fn complex_field(&mut self, name: &str, d: &Domain, v: &[Complex64]) -> Result<(), RunError> {
        let p = self.path(name);
        Ok(io::write_complex_field(&p, d, v)?)
    }

    pub fn trace(&mut self, name: &str, d: &Domain, t: &BoundaryTrace) -> Result<(), RunError> {
        let p = self.path(name);
        Ok(io::write_trace(&p, d, t)?)
    }

    pub fn moments(&mut self, name: &str, m: &[MomentRecord]) -> Result<(), RunError> {
        let p = self.path(name);
        Ok(io::write_moments(&p, m)?)
    }

    pub fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), RunError> {
        let p = self.path(name);
        Ok(io::write_table(&p, header, rows)?)
    }

    /// Writes `report.txt` (with the run-dependent lines, e.g. wall time) and
    /// `manifest.csv`, which lists the inputs and a digest of every artifact
    /// and is therefore identical for identical runs.
    pub fn finish(mut self, inputs: &[(&str, String)], volatile: &[String]) -> Result<(), RunError> {
        let mut text = self.report.join("\n");
        text.push('\n');
        for v in volatile {
            text.push_str(v);
            text.push('\n');
        }
        io::write_text(&self.dir.join("report.txt"), &text)?;
        let mut rows: Vec<Vec<String>> = inputs.iter().map(|(k, v)| vec![k.to_string(), v.clone()]).collect();
        rows.push(vec!["report".into(), "report.txt".into()]);
        self.artifacts.sort();
        self.artifacts.dedup();
        for a in &self.artifacts {
            let bytes = std::fs::read(self.dir.join(a))?;
            rows.push(vec![format!("sha256:{a}"), hex(&Sha256::digest(&bytes))]);
        }
        io::write_table(&self.dir.join("manifest.csv"), &["key", "value"], &rows)?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}
