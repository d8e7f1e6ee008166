//! The GELD binary format.
//!
//! Layout (little-endian):
//! - magic `b"GELD"`
//! - version: u32 (= 1)
//! - m, c, k: u32
//! - n: u64
//! - n records, each: class u32, subdomain u32, split u8 (0 train, 1 test),
//!   then m binary32 values
//!
//! The manifest lives next to the payload as `<basename>.manifest` (JSON).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{DatasetManifest, LatentDataset, LatentRecord, Split};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GELD";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 4 + 8;

fn stride(m: usize) -> usize {
    4 + 4 + 1 + 4 * m
}

pub fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("manifest")
}

/// Write the payload and manifest sidecar. Returns the payload byte count.
pub fn write_dataset(dataset: &LatentDataset, path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    let man = dataset.manifest();
    // Re-validate: a dataset assembled through `into_parts` could have drifted.
    let dataset = LatentDataset::with_manifest(man.clone(), dataset.records().to_vec())?;
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Format(format!("{what}={v} does not fit in u32")))
    };

    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    header.extend_from_slice(&to_u32(man.m, "m")?.to_le_bytes());
    header.extend_from_slice(&to_u32(man.c, "c")?.to_le_bytes());
    header.extend_from_slice(&to_u32(man.k, "k")?.to_le_bytes());
    header.extend_from_slice(&(dataset.len() as u64).to_le_bytes());
    w.write_all(&header).map_err(|e| Error::io(path, e))?;

    let mut buf = Vec::with_capacity(stride(man.m));
    for r in dataset.records() {
        buf.clear();
        buf.extend_from_slice(&r.class_id.to_le_bytes());
        buf.extend_from_slice(&r.subdomain_id.to_le_bytes());
        buf.push(r.split.index() as u8);
        for v in &r.vector {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let mpath = manifest_path(path);
    let text = serde_json::to_string_pretty(man)
        .map_err(|e| Error::Format(format!("manifest serialization: {e}")))?;
    fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;

    Ok((HEADER_LEN + dataset.len() * stride(man.m)) as u64)
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Read a payload and its manifest, checking that they agree.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<LatentDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (m, c, k, records) = decode(&bytes)?;

    let mpath = manifest_path(path);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("manifest {}: {e}", mpath.display())))?;
    if (manifest.m, manifest.c, manifest.k) != (m, c, k) {
        return Err(Error::Integrity(format!(
            "manifest (m, c, k) = ({}, {}, {}) but payload header says ({m}, {c}, {k})",
            manifest.m, manifest.c, manifest.k
        )));
    }
    if manifest.total() != records.len() as u64 {
        return Err(Error::Integrity(format!(
            "manifest totals {} records but payload holds {}",
            manifest.total(),
            records.len()
        )));
    }
    LatentDataset::with_manifest(manifest, records)
}

/// Decode a payload into `(m, c, k, records)`.
pub(crate) fn decode(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<LatentRecord>)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "truncated header: {} of {HEADER_LEN} bytes",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &bytes[..4])));
    }
    let version = u32_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let m = u32_at(bytes, 8) as usize;
    let c = u32_at(bytes, 12) as usize;
    let k = u32_at(bytes, 16) as usize;
    let n = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
    let s = stride(m);
    let body = bytes.len() - HEADER_LEN;
    let expected = (n as u128) * (s as u128);
    if (body as u128) < expected {
        let index = body / s;
        return Err(Error::Format(format!(
            "truncated at record {index} of {n} ({} bytes short)",
            expected - body as u128
        )));
    }
    if (body as u128) > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after {n} records",
            body as u128 - expected
        )));
    }

    let mut records = Vec::with_capacity(n as usize);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(s).enumerate() {
        let class_id = u32_at(chunk, 0);
        let subdomain_id = u32_at(chunk, 4);
        let split = match chunk[8] {
            0 => Split::Train,
            1 => Split::Test,
            other => return Err(Error::Format(format!("record {i}: bad split tag {other}"))),
        };
        if class_id as usize >= c || subdomain_id as usize >= k {
            return Err(Error::Format(format!(
                "record {i}: label ({class_id}, {subdomain_id}) outside (c={c}, k={k})"
            )));
        }
        let vector: Vec<f32> = chunk[9..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("record {i}: non-finite value")));
        }
        records.push(LatentRecord {
            vector,
            class_id,
            subdomain_id,
            split,
        });
    }
    Ok((m, c, k, records))
}
