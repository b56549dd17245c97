//! Raw little-endian `f64` blocks and the trailing `crc32` line shared by
//! checksummed file formats.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

const TRAILER_LEN: usize = "crc32 00000000\n".len();

pub(crate) fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f64s<R: BufRead>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::parse("file truncated in binary data"))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// Appends `crc32 <hex>` over `body`.
pub(crate) fn seal(mut body: Vec<u8>) -> Vec<u8> {
    let crc = crc32fast::hash(&body);
    body.extend_from_slice(format!("crc32 {crc:08x}\n").as_bytes());
    body
}

/// Returns the body if the trailer matches.
pub(crate) fn unseal(bytes: &[u8]) -> Result<&[u8]> {
    if bytes.len() < TRAILER_LEN {
        return Err(Error::Checksum);
    }
    let (data, trailer) = bytes.split_at(bytes.len() - TRAILER_LEN);
    let stored = std::str::from_utf8(trailer)
        .ok()
        .and_then(|t| t.strip_prefix("crc32 "))
        .and_then(|t| u32::from_str_radix(t.trim_end(), 16).ok())
        .ok_or(Error::Checksum)?;
    if stored != crc32fast::hash(data) {
        return Err(Error::Checksum);
    }
    Ok(data)
}

/// Reads a `key value` line.
pub(crate) fn keyed_line<R: BufRead>(r: &mut R, key: &str) -> Result<String> {
    let mut s = String::new();
    r.read_line(&mut s)?;
    let s = s.trim_end_matches('\n');
    s.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .map(str::to_string)
        .ok_or_else(|| Error::parse(format!("expected `{key}` line, found `{s}`")))
}
