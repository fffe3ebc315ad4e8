//! Binary prediction cache.
//!
//! Layout: magic `TTAPRD01`, `u32` n_objects, `u32` n_classes, `u64` payload
//! checksum (first eight bytes of the SHA-256 of the payload, little-endian),
//! then `n_objects * n_classes` little-endian `f32` values, row-major.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::PredictionMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CACHE_MAGIC: &[u8; 8] = b"TTAPRD01";
pub const CACHE_HEADER_LEN: usize = 8 + 4 + 4 + 8;

fn checksum(payload: &[u8]) -> u64 {
    let digest = Sha256::digest(payload);
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn encode<F: Scalar>(m: &PredictionMatrix<F>) -> Vec<u8> {
    let mut payload = Vec::with_capacity(m.as_flat().len() * 4);
    for &p in m.as_flat() {
        payload.extend_from_slice(&(p.to_f64_lossy() as f32).to_le_bytes());
    }
    let mut out = Vec::with_capacity(CACHE_HEADER_LEN + payload.len());
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&(m.n_objects() as u32).to_le_bytes());
    out.extend_from_slice(&(m.n_classes() as u32).to_le_bytes());
    out.extend_from_slice(&checksum(&payload).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

fn decode<F: Scalar>(bytes: &[u8]) -> Result<PredictionMatrix<F>> {
    if bytes.len() < CACHE_HEADER_LEN {
        if bytes.len() >= 8 && &bytes[..8] != CACHE_MAGIC {
            return Err(bad_magic(&bytes[..8]));
        }
        return Err(Error::Truncated {
            expected: CACHE_HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    if &bytes[..8] != CACHE_MAGIC {
        return Err(bad_magic(&bytes[..8]));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let k = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let stored = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let expected = (CACHE_HEADER_LEN + n * k * 4) as u64;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(Error::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after a {n}x{k} payload",
            actual - expected
        )));
    }
    let payload = &bytes[CACHE_HEADER_LEN..];
    let sum = checksum(payload);
    if sum != stored {
        return Err(Error::Checksum {
            expected: stored,
            actual: sum,
        });
    }
    let data: Vec<F> = payload
        .chunks_exact(4)
        .map(|b| F::c(f32::from_le_bytes(b.try_into().unwrap()) as f64))
        .collect();
    // Rows were normalized before rounding to f32.
    let tol = super::ROW_SUM_TOLERANCE + k as f64 * f32::EPSILON as f64;
    PredictionMatrix::from_flat_with_tolerance(n, k, data, tol)
}

fn bad_magic(found: &[u8]) -> Error {
    Error::Format(format!(
        "bad cache magic {:?}, expected \"TTAPRD01\"",
        String::from_utf8_lossy(found)
    ))
}

pub fn write_cache_to<F: Scalar, W: Write>(m: &PredictionMatrix<F>, mut w: W) -> Result<()> {
    w.write_all(&encode(m))?;
    Ok(())
}

pub fn read_cache_from<F: Scalar, R: Read>(mut r: R) -> Result<PredictionMatrix<F>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

/// Write atomically: the file appears under `path` only once complete.
pub fn write_cache<F: Scalar>(m: &PredictionMatrix<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("partial");
    fs::write(&tmp, encode(m))
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(|e| Error::from(e).at(path))
}

pub fn read_cache<F: Scalar>(path: impl AsRef<Path>) -> Result<PredictionMatrix<F>> {
    let path = path.as_ref();
    fs::read(path)
        .map_err(Error::from)
        .and_then(|b| decode(&b))
        .map_err(|e| e.at(path))
}
