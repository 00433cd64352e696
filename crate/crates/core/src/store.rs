//! Embedding files and the in-memory store.
//!
//! Binary layout (little-endian): magic `SHPY`, version `u32 = 1`,
//! count `u64`, dim `u32`, then `count * dim` `f32` values row-major.
//! The companion index file is UTF-8 with one image id per line; line k
//! names row k.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::dataset::{ImageId, Manifest};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SHPY";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 4 + 4 + 8 + 4;

/// Rows whose L2 norm is at or below this cannot be normalized.
pub const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    ids: Vec<ImageId>,
    dim: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl EmbeddingStore {
    pub fn from_rows(ids: Vec<ImageId>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Mismatch("embedding dimension must be positive".into()));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::Mismatch(format!(
                "{} values cannot form {} rows of dimension {dim}",
                data.len(),
                ids.len()
            )));
        }
        if let Some(bad) = data.iter().position(|x| !x.is_finite()) {
            let row = bad / dim;
            return Err(Error::BadRow {
                row,
                id: ids[row].to_string(),
                reason: "non-finite value".into(),
            });
        }
        Ok(EmbeddingStore {
            ids,
            dim,
            data,
            normalized: false,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[ImageId] {
        &self.ids
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Scale every row to unit L2 norm so that dot products are cosines.
    pub fn normalize(mut self) -> Result<Self> {
        let dim = self.dim;
        for (row, chunk) in self.data.chunks_exact_mut(dim).enumerate() {
            let norm = chunk
                .iter()
                .map(|&x| f64::from(x) * f64::from(x))
                .sum::<f64>()
                .sqrt();
            if norm <= MIN_NORM {
                return Err(Error::BadRow {
                    row,
                    id: self.ids[row].to_string(),
                    reason: format!("norm {norm:e} is too small to normalize"),
                });
            }
            for x in chunk.iter_mut() {
                *x = (f64::from(*x) / norm) as f32;
            }
        }
        self.normalized = true;
        Ok(self)
    }

    /// Reorder rows into manifest order. Fails unless the store covers the
    /// manifest exactly.
    pub fn align(self, manifest: &Manifest) -> Result<Self> {
        let report = validate_against_manifest(&self, manifest);
        if !report.is_ok() {
            return Err(Error::Mismatch(report.summary()));
        }
        if self.ids.as_slice() == manifest.ids() {
            return Ok(self);
        }
        let dim = self.dim;
        let mut data = vec![0f32; self.data.len()];
        for (src, id) in self.ids.iter().enumerate() {
            let dst = manifest.row_of(id).expect("validated");
            data[dst * dim..(dst + 1) * dim].copy_from_slice(self.row(src));
        }
        Ok(EmbeddingStore {
            ids: manifest.ids().to_vec(),
            dim,
            data,
            normalized: self.normalized,
        })
    }
}

pub fn write_embeddings(store: &EmbeddingStore, path: &Path, index_path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(store.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(store.dim as u32).to_le_bytes()).map_err(io)?;
    for x in &store.data {
        w.write_all(&x.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)?;

    let file = File::create(index_path).map_err(|e| Error::io(index_path, e))?;
    let mut w = BufWriter::new(file);
    for id in &store.ids {
        writeln!(w, "{id}").map_err(|e| Error::io(index_path, e))?;
    }
    w.flush().map_err(|e| Error::io(index_path, e))?;
    Ok(())
}

pub fn read_embeddings(path: &Path, index_path: &Path) -> Result<EmbeddingStore> {
    let format_err = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut r = BufReader::new(file);
    let mut header = [0u8; HEADER_LEN as usize];
    r.read_exact(&mut header)
        .map_err(|_| format_err(format!("file is shorter than the {HEADER_LEN}-byte header")))?;
    if &header[0..4] != MAGIC {
        return Err(format_err("bad magic; expected `SHPY`".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let dim = u32::from_le_bytes(header[16..20].try_into().unwrap()) as u64;
    if dim == 0 {
        return Err(format_err("dimension is zero".into()));
    }
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| format_err("header count/dim overflow".into()))?;
    if file_len != expected {
        return Err(format_err(format!(
            "header declares {count} rows of dimension {dim} ({expected} bytes) but file has {file_len} bytes"
        )));
    }

    let ids = read_index(index_path)?;
    if ids.len() as u64 != count {
        return Err(Error::Mismatch(format!(
            "index {} lists {} ids but {} declares {count} rows",
            index_path.display(),
            ids.len(),
            path.display()
        )));
    }

    let (count, dim) = (count as usize, dim as usize);
    let mut data = vec![0f32; count * dim];
    let mut buf = vec![0u8; dim * 4];
    for (row, out) in data.chunks_exact_mut(dim).enumerate() {
        r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
        for (x, b) in out.iter_mut().zip(buf.chunks_exact(4)) {
            *x = f32::from_le_bytes(b.try_into().unwrap());
        }
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::BadRow {
                row,
                id: ids[row].to_string(),
                reason: "non-finite value".into(),
            });
        }
    }
    Ok(EmbeddingStore {
        ids,
        dim,
        data,
        normalized: false,
    })
}

fn read_index(path: &Path) -> Result<Vec<ImageId>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let id = line.trim_end().parse::<ImageId>().map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: format!("line {}: {e}", n + 1),
        })?;
        ids.push(id);
    }
    Ok(ids)
}

#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct ValidationReport {
    pub rows: usize,
    pub expected: usize,
    pub missing: Vec<ImageId>,
    pub extra: Vec<ImageId>,
    pub duplicates: Vec<ImageId>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.missing.is_empty() && self.extra.is_empty() && self.duplicates.is_empty()
    }

    pub fn summary(&self) -> String {
        let show = |ids: &[ImageId]| {
            let head: Vec<String> = ids.iter().take(5).map(ToString::to_string).collect();
            let more = ids.len().saturating_sub(5);
            if more > 0 {
                format!("{} (+{more} more)", head.join(", "))
            } else {
                head.join(", ")
            }
        };
        let mut parts = Vec::new();
        if !self.missing.is_empty() {
            parts.push(format!("{} missing: {}", self.missing.len(), show(&self.missing)));
        }
        if !self.extra.is_empty() {
            parts.push(format!("{} extra: {}", self.extra.len(), show(&self.extra)));
        }
        if !self.duplicates.is_empty() {
            parts.push(format!(
                "{} duplicated: {}",
                self.duplicates.len(),
                show(&self.duplicates)
            ));
        }
        if parts.is_empty() {
            format!("ok: {} rows cover the manifest", self.rows)
        } else {
            parts.join("; ")
        }
    }
}

/// Check that every manifest id has exactly one row and every row names a manifest id.
pub fn validate_against_manifest(store: &EmbeddingStore, manifest: &Manifest) -> ValidationReport {
    let mut seen: HashMap<&ImageId, usize> = HashMap::with_capacity(store.len());
    let mut duplicates = Vec::new();
    for id in &store.ids {
        let n = seen.entry(id).or_insert(0);
        *n += 1;
        if *n == 2 {
            duplicates.push(id.clone());
        }
    }
    let wanted: HashSet<&ImageId> = manifest.ids().iter().collect();
    let missing = manifest
        .ids()
        .iter()
        .filter(|id| !seen.contains_key(id))
        .cloned()
        .collect();
    let mut extra_seen = HashSet::new();
    let extra = store
        .ids
        .iter()
        .filter(|id| !wanted.contains(id) && extra_seen.insert(*id))
        .cloned()
        .collect();
    ValidationReport {
        rows: store.len(),
        expected: manifest.len(),
        missing,
        extra,
        duplicates,
    }
}
