//! Shared pieces of the little-endian binary container family.
//!
//! Every file starts with an 8-byte magic: a five-letter tag, a zero byte,
//! the major version (1) and another zero byte.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::{Error, Result};

pub const ACTIVATION_MAGIC: [u8; 8] = *b"PFACT\x00\x01\x00";
pub const PCA_MAGIC: [u8; 8] = *b"PFPCA\x00\x01\x00";
pub const NET_MAGIC: [u8; 8] = *b"PFNET\x00\x01\x00";
pub const FEATURES_MAGIC: [u8; 8] = *b"PFFEA\x00\x01\x00";

pub(crate) fn read_magic<R: Read>(r: &mut R, expected: &[u8; 8], what: &str) -> Result<()> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::format(format!("{what}: truncated header")))?;
    if &buf != expected {
        return Err(Error::format(format!(
            "{what}: malformed header magic {:?}",
            String::from_utf8_lossy(&buf)
        )));
    }
    Ok(())
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, values: impl IntoIterator<Item = f64>) -> std::io::Result<()> {
    for v in values {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> std::io::Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub(crate) fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

pub(crate) fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(truncated)?;
    String::from_utf8(buf).map_err(|e| Error::format(format!("invalid utf-8 string: {e}")))
}

pub(crate) fn truncated(e: std::io::Error) -> Error {
    Error::format(format!("truncated container: {e}"))
}
