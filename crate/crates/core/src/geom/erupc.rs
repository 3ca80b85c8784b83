//! Compact binary point-cloud blocks.
//!
//! Layout (little-endian): magic `ERUPC\0`, `u32` count, `count` f32
//! position triples, then a `u8` color flag followed by `count` f32 triples
//! when set, then a `u8` normal flag followed by `count` f32 triples when set.

use std::io::{Read, Seek, SeekFrom, Write};

use super::{Point3, PointCloud, Vec3};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"ERUPC\0";

fn write_triples<W: Write>(w: &mut W, vals: impl Iterator<Item = [f64; 3]>) -> std::io::Result<()> {
    for v in vals {
        for c in v {
            w.write_all(&(c as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_block<W: Write>(w: &mut W, pc: &PointCloud) -> std::io::Result<()> {
    let count = u32::try_from(pc.len()).map_err(|_| {
        std::io::Error::new(std::io::ErrorKind::InvalidInput, "cloud too large for u32 count")
    })?;
    w.write_all(MAGIC)?;
    w.write_all(&count.to_le_bytes())?;
    write_triples(w, pc.points().iter().map(|p| [p.x, p.y, p.z]))?;
    for feat in [pc.colors(), pc.normals()] {
        match feat {
            Some(v) => {
                w.write_all(&[1])?;
                write_triples(w, v.iter().map(|c| [c.x, c.y, c.z]))?;
            }
            None => w.write_all(&[0])?,
        }
    }
    Ok(())
}

fn fmt_err(message: impl Into<String>) -> Error {
    Error::Format {
        what: "ERUPC block",
        message: message.into(),
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| fmt_err(format!("truncated block: {e}")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_triples<R: Read>(r: &mut R, n: usize) -> Result<Vec<Vec3>> {
    let mut buf = vec![0u8; n * 12];
    read_exact(r, &mut buf)?;
    Ok(buf
        .chunks_exact(12)
        .map(|c| {
            let f = |i: usize| f32::from_le_bytes(c[i..i + 4].try_into().unwrap()) as f64;
            Vec3::new(f(0), f(4), f(8))
        })
        .collect())
}

fn read_flag<R: Read>(r: &mut R) -> Result<bool> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b)?;
    match b[0] {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(fmt_err(format!("bad feature flag {other}"))),
    }
}

fn read_header<R: Read>(r: &mut R) -> Result<usize> {
    let mut magic = [0u8; 6];
    read_exact(r, &mut magic)?;
    if &magic != MAGIC {
        return Err(fmt_err("bad magic"));
    }
    Ok(read_u32(r)? as usize)
}

pub fn read_block<R: Read>(r: &mut R) -> Result<PointCloud> {
    let n = read_header(r)?;
    let points = read_triples(r, n)?.into_iter().map(Point3::from).collect();
    let colors = if read_flag(r)? {
        Some(read_triples(r, n)?)
    } else {
        None
    };
    let normals = if read_flag(r)? {
        // f32 storage loses a little length; restore unit norm
        Some(
            read_triples(r, n)?
                .into_iter()
                .map(|v| {
                    let l = v.norm();
                    if l > 0.0 {
                        v / l
                    } else {
                        v
                    }
                })
                .collect(),
        )
    } else {
        None
    };
    PointCloud::new(points, colors, normals).map_err(|e| fmt_err(e.to_string()))
}

/// Skips one block, returning its point count.
pub fn skip_block<R: Read + Seek>(r: &mut R) -> Result<usize> {
    let n = read_header(r)?;
    let skip = |r: &mut R| {
        r.seek(SeekFrom::Current(n as i64 * 12))
            .map_err(|e| fmt_err(e.to_string()))
    };
    skip(r)?;
    for _ in 0..2 {
        if read_flag(r)? {
            skip(r)?;
        }
    }
    Ok(n)
}
