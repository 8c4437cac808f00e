//! `.fvecs` / `.ivecs` readers and writers.
//!
//! Each record is a little-endian `i32` dimension followed by that many
//! little-endian 4-byte values. All records in a file share one dimension.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::VectorSet;
use crate::error::{Error, Result};

fn parse_records(bytes: &[u8]) -> Result<Vec<&[u8]>> {
    let mut records = Vec::new();
    let mut offset = 0usize;
    let mut expected: Option<usize> = None;
    while offset < bytes.len() {
        let header = bytes.get(offset..offset + 4).ok_or_else(|| Error::Parse {
            offset: offset as u64,
            reason: "truncated dimension header".into(),
        })?;
        let dim = i32::from_le_bytes(header.try_into().expect("4 bytes"));
        if dim <= 0 {
            return Err(Error::Parse {
                offset: offset as u64,
                reason: format!("non-positive dimension {dim}"),
            });
        }
        let dim = dim as usize;
        match expected {
            None => expected = Some(dim),
            Some(e) if e != dim => {
                return Err(Error::Parse {
                    offset: offset as u64,
                    reason: format!("dimension {dim} differs from first record's {e}"),
                })
            }
            Some(_) => {}
        }
        let body_start = offset + 4;
        let body_end = body_start + 4 * dim;
        let body = bytes.get(body_start..body_end).ok_or_else(|| Error::Parse {
            offset: offset as u64,
            reason: format!(
                "truncated record: need {} bytes, {} remain",
                4 * dim,
                bytes.len() - body_start
            ),
        })?;
        records.push(body);
        offset = body_end;
    }
    Ok(records)
}

/// Reads all fvecs records. An empty file yields an empty list.
pub fn read_fvecs(path: &Path) -> Result<Vec<Vec<f32>>> {
    let bytes = fs::read(path)?;
    Ok(parse_records(&bytes)?
        .into_iter()
        .map(|body| {
            body.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect()
        })
        .collect())
}

/// Loads a vector set; an empty file is an error since a set needs a dimension.
pub fn load_fvecs(path: &Path) -> Result<VectorSet> {
    VectorSet::from_rows(read_fvecs(path)?)
}

/// Reads ivecs records as non-negative ids.
pub fn load_ivecs(path: &Path) -> Result<Vec<Vec<u32>>> {
    let bytes = fs::read(path)?;
    let base = bytes.as_ptr() as usize;
    parse_records(&bytes)?
        .into_iter()
        .map(|body| {
            body.chunks_exact(4)
                .map(|c| {
                    let v = i32::from_le_bytes(c.try_into().expect("4 bytes"));
                    u32::try_from(v).map_err(|_| Error::Parse {
                        offset: (c.as_ptr() as usize - base) as u64,
                        reason: format!("negative id {v}"),
                    })
                })
                .collect()
        })
        .collect()
}

fn write_records<T: Copy>(
    path: &Path,
    rows: impl Iterator<Item = impl AsRef<[T]>>,
    to_le: impl Fn(T) -> [u8; 4],
) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for row in rows {
        let row = row.as_ref();
        w.write_all(&(row.len() as i32).to_le_bytes())?;
        for &x in row {
            w.write_all(&to_le(x))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_fvecs(path: &Path, set: &VectorSet) -> Result<()> {
    write_records(path, set.iter(), f32::to_le_bytes)
}

pub fn write_fvecs_rows(path: &Path, rows: &[Vec<f32>]) -> Result<()> {
    write_records(path, rows.iter(), f32::to_le_bytes)
}

pub fn write_ivecs(path: &Path, rows: &[Vec<i32>]) -> Result<()> {
    write_records(path, rows.iter(), i32::to_le_bytes)
}
