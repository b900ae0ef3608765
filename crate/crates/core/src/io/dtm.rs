//! `DTM1` dense map files.
//!
//! Layout: magic `DTM1`, little-endian u32 height, width, channels, a u8 dtype
//! tag (0 = f32), three padding bytes, then the row-major channel-interleaved
//! f32 payload. NaN is rejected on both sides.

use std::path::Path;

use crate::densemap::{DenseMap, MapRole};

use super::{write_file, IoError};

pub const DTM_MAGIC: &[u8; 4] = b"DTM1";
const HEADER_LEN: usize = 20;
const DTYPE_F32: u8 = 0;

/// Serialises `channels` maps of equal shape, interleaved per pixel.
pub fn encode_dtm(channels: &[&DenseMap]) -> Result<Vec<u8>, String> {
    let first = channels.first().ok_or("no channels")?;
    let (h, w) = (first.height(), first.width());
    if channels.iter().any(|c| c.height() != h || c.width() != w) {
        return Err("channels differ in shape".into());
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * h * w * channels.len());
    out.extend_from_slice(DTM_MAGIC);
    for v in [h, w, channels.len()] {
        let v = u32::try_from(v).map_err(|_| "dimension exceeds u32")?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&[DTYPE_F32, 0, 0, 0]);
    for i in 0..h * w {
        for c in channels {
            let v = c.data()[i];
            if v.is_nan() {
                return Err(format!("NaN at pixel {i}"));
            }
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses a DTM buffer into one map per channel, all tagged with `role`.
pub fn decode_dtm(bytes: &[u8], role: MapRole) -> Result<Vec<DenseMap>, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("truncated header ({} bytes)", bytes.len()));
    }
    if &bytes[..4] != DTM_MAGIC {
        return Err("bad magic".into());
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let (h, w, c) = (u32_at(4), u32_at(8), u32_at(12));
    if bytes[16] != DTYPE_F32 {
        return Err(format!("unsupported dtype tag {}", bytes[16]));
    }
    if c == 0 {
        return Err("zero channels".into());
    }
    let expected = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(c))
        .and_then(|n| n.checked_mul(4))
        .ok_or("dimensions overflow")?;
    if bytes.len() - HEADER_LEN != expected {
        return Err(format!(
            "payload is {} bytes, expected {expected}",
            bytes.len() - HEADER_LEN
        ));
    }
    let mut data = vec![Vec::with_capacity(h * w); c];
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if v.is_nan() {
            return Err(format!("NaN at value {i}"));
        }
        data[i % c].push(v as f64);
    }
    Ok(data
        .into_iter()
        .map(|d| DenseMap::from_vec(h, w, role, d).expect("length checked"))
        .collect())
}

pub fn write_dtm(path: &Path, map: &DenseMap) -> Result<(), IoError> {
    let bytes = encode_dtm(&[map]).map_err(|m| IoError::format(path, m))?;
    write_file(path, &bytes)
}

/// Reads a single-channel DTM file.
pub fn read_dtm(path: &Path, role: MapRole) -> Result<DenseMap, IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    let mut maps = decode_dtm(&bytes, role).map_err(|m| IoError::format(path, m))?;
    if maps.len() != 1 {
        return Err(IoError::format(
            path,
            format!("expected 1 channel, found {}", maps.len()),
        ));
    }
    Ok(maps.remove(0))
}
