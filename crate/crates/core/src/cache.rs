//! Binary cache for assembled kernel matrices.
//!
//! Layout: `GKC1`, seven little-endian `u32` (version, domain code, kernel
//! code, rows, cols, n_radial, n_angular), row-major little-endian `f64`
//! entries, then a little-endian FNV-1a 64 checksum of everything before it.

use std::fs;
use std::hash::Hasher;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use fnv::FnvHasher;

use crate::assembly::{DiagonalRule, KernelKind, KernelMatrix};
use crate::domain::{DomainKind, ModelDomain};
use crate::error::{Error, Result};
use crate::mesh::MeshTag;

pub const MAGIC: &[u8; 4] = b"GKC1";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 7 * 4;

/// What a caller expects to find in a cache file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheKey {
    pub domain: DomainKind,
    pub kind: KernelKind,
    pub rows: usize,
    pub cols: usize,
    pub n_radial: usize,
    pub n_angular: usize,
}

impl CacheKey {
    pub fn of(m: &KernelMatrix) -> Self {
        CacheKey {
            domain: m.domain.kind,
            kind: m.kind,
            rows: m.rows,
            cols: m.cols,
            n_radial: m.n_radial,
            n_angular: m.n_angular,
        }
    }

    /// Canonical file name inside a cache directory. The truncation radius and
    /// boundary resolution are folded in since the header does not carry them.
    pub fn file_name(&self, domain: &ModelDomain, extra: u64) -> String {
        let mut h = FnvHasher::default();
        h.write_u64(domain.truncation_radius.to_bits());
        h.write_u64(extra);
        format!(
            "{}_{}_{}x{}_r{}_a{}_{:016x}.gkc",
            self.domain.name(),
            self.kind.code(),
            self.rows,
            self.cols,
            self.n_radial,
            self.n_angular,
            h.finish()
        )
    }
}

fn checksum(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn encode(m: &KernelMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * m.entries.len() + 8);
    buf.extend_from_slice(MAGIC);
    for v in [
        FORMAT_VERSION,
        m.domain.kind.code(),
        m.kind.code(),
        m.rows as u32,
        m.cols as u32,
        m.n_radial as u32,
        m.n_angular as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for e in &m.entries {
        buf.extend_from_slice(&e.to_le_bytes());
    }
    let sum = checksum(&buf);
    buf.extend_from_slice(&sum.to_le_bytes());
    buf
}

/// Writes the matrix atomically. An existing file at `path` is left alone
/// (first writer wins).
pub fn cache_store(m: &KernelMatrix, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&encode(m))?;
        f.sync_all()?;
    }
    let linked = fs::hard_link(&tmp, path);
    let _ = fs::remove_file(&tmp);
    match linked {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == ErrorKind::AlreadyExists => Ok(()),
        Err(e) => Err(e.into()),
    }
}

/// Reads a matrix, rejecting anything that does not match `expected`.
/// Mesh tags are re-attached by the caller, who owns the meshes.
pub fn cache_load(
    path: &Path,
    expected: &CacheKey,
    domain: ModelDomain,
    row_tag: MeshTag,
    col_tag: MeshTag,
    diagonal_rule: DiagonalRule,
) -> Result<KernelMatrix> {
    let reject = |reason: String| Error::CacheInvalid { path: PathBuf::from(path), reason };
    let bytes = fs::read(path)?;
    if bytes.len() < HEADER_LEN + 8 {
        return Err(reject(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(reject("bad magic".into()));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().expect("4 bytes"));
    let header = [word(0), word(1), word(2), word(3), word(4), word(5), word(6)];
    if header[0] != FORMAT_VERSION {
        return Err(reject(format!("format version {}", header[0])));
    }
    let want = [
        ("domain", expected.domain.code(), header[1]),
        ("kernel", expected.kind.code(), header[2]),
        ("rows", expected.rows as u32, header[3]),
        ("cols", expected.cols as u32, header[4]),
        ("n_radial", expected.n_radial as u32, header[5]),
        ("n_angular", expected.n_angular as u32, header[6]),
    ];
    for (name, e, got) in want {
        if e != got {
            return Err(reject(format!("{name} is {got}, expected {e}")));
        }
    }
    let count = expected.rows * expected.cols;
    let body_end = HEADER_LEN + 8 * count;
    if bytes.len() != body_end + 8 {
        return Err(reject(format!("length {} does not match header", bytes.len())));
    }
    let stored = u64::from_le_bytes(bytes[body_end..].try_into().expect("8 bytes"));
    if stored != checksum(&bytes[..body_end]) {
        return Err(reject("checksum mismatch".into()));
    }
    let entries = bytes[HEADER_LEN..body_end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(KernelMatrix {
        entries,
        rows: expected.rows,
        cols: expected.cols,
        kind: expected.kind,
        row_tag,
        col_tag,
        diagonal_rule,
        domain,
        n_radial: expected.n_radial,
        n_angular: expected.n_angular,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CacheStat {
    pub files: usize,
    pub bytes: u64,
}

pub fn cache_stat(dir: &Path) -> Result<CacheStat> {
    let mut stat = CacheStat::default();
    if !dir.exists() {
        return Ok(stat);
    }
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.path().extension().is_some_and(|e| e == "gkc") {
            stat.files += 1;
            stat.bytes += entry.metadata()?.len();
        }
    }
    Ok(stat)
}

pub fn cache_clear(dir: &Path) -> Result<usize> {
    let mut removed = 0;
    if !dir.exists() {
        return Ok(0);
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "gkc") {
            fs::remove_file(&path)?;
            removed += 1;
        }
    }
    Ok(removed)
}
