//! Node-indexed CSV files for fields, boundary traces and moment tables.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading a
//! file back reproduces the values bit for bit and identical runs produce
//! identical files.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::domain::{BoundaryTrace, Domain};
use crate::error::{Error, Result};
use crate::inverse::{MomentRecord, MomentSource};

fn create(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(csv::Writer::from_path(path)?)
}

fn check_len(d: &Domain, n: usize) -> Result<()> {
    if n != d.node_count() {
        return Err(Error::DomainMismatch { expected: d.node_count(), got: n });
    }
    Ok(())
}

fn node_coord(d: &Domain, n: usize) -> [f64; 2] {
    d.coords()[n]
}

/// `node,x,y,value` for a real nodal field.
pub fn write_real_field(path: &Path, d: &Domain, values: &[f64]) -> Result<()> {
    check_len(d, values.len())?;
    let mut w = create(path)?;
    w.write_record(["node", "x", "y", "value"])?;
    for (n, v) in values.iter().enumerate() {
        let [x, y] = node_coord(d, n);
        w.write_record([n.to_string(), x.to_string(), y.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `node,x,y,re,im` for a complex nodal field.
pub fn write_complex_field(path: &Path, d: &Domain, values: &[Complex64]) -> Result<()> {
    check_len(d, values.len())?;
    let mut w = create(path)?;
    w.write_record(["node", "x", "y", "re", "im"])?;
    for (n, v) in values.iter().enumerate() {
        let [x, y] = node_coord(d, n);
        w.write_record([n.to_string(), x.to_string(), y.to_string(), v.re.to_string(), v.im.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a real nodal field written by [`write_real_field`] (or any CSV with
/// `node` and `value` columns covering every node exactly once).
pub fn read_real_field(path: &Path, d: &Domain) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Parse(format!("{}: missing column `{name}`", path.display())))
    };
    let (ci, cv) = (col("node")?, col("value")?);
    let mut out = vec![f64::NAN; d.node_count()];
    let mut seen = vec![false; d.node_count()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let at = |c: usize| rec.get(c).unwrap_or("").trim();
        let ctx = |e: &dyn std::fmt::Display| Error::Parse(format!("{} line {}: {e}", path.display(), line + 2));
        let n: usize = at(ci).parse().map_err(|e| ctx(&e))?;
        let v: f64 = at(cv).parse().map_err(|e| ctx(&e))?;
        if n >= out.len() || seen[n] {
            return Err(ctx(&format!("node {n} out of range or repeated")));
        }
        out[n] = v;
        seen[n] = true;
    }
    if let Some(n) = seen.iter().position(|s| !s) {
        return Err(Error::Parse(format!("{}: node {n} missing", path.display())));
    }
    Ok(out)
}

/// `k,s,x,y,re,im` over the masked outer boundary nodes.
pub fn write_trace(path: &Path, d: &Domain, t: &BoundaryTrace) -> Result<()> {
    if t.len() != d.n_outer() {
        return Err(Error::DomainMismatch { expected: d.n_outer(), got: t.len() });
    }
    let mut w = create(path)?;
    w.write_record(["k", "s", "x", "y", "re", "im"])?;
    for k in t.mask().indices() {
        let [x, y] = d.outer_coord(k);
        let v = t.values()[k];
        w.write_record([
            k.to_string(),
            d.boundary_param(k).to_string(),
            x.to_string(),
            y.to_string(),
            v.re.to_string(),
            v.im.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per moment: `ids` joined by `-`, value, source, error estimate.
pub fn write_moments(path: &Path, moments: &[MomentRecord]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["ids", "re", "im", "source", "error_estimate"])?;
    for m in moments {
        let ids: Vec<String> = m.ids.iter().map(|i| i.to_string()).collect();
        let source = match m.source {
            MomentSource::BoundaryData => "boundary_data",
            MomentSource::InteriorOracle => "interior_oracle",
        };
        w.write_record([
            ids.join("-"),
            m.value.re.to_string(),
            m.value.im.to_string(),
            source.to_string(),
            m.error_estimate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Generic table with a header, for landscapes and summaries.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(header)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::Parse(format!("{}: row has {} cells, header {}", path.display(), r.len(), header.len())));
        }
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut f = File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
