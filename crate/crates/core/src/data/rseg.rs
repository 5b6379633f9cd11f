//! "RSEG" single-raster files.
//!
//! Layout (little-endian): magic `RSEG`, version `u16`, dtype `u8`
//! (0 = f32, 1 = u8 labels), channels `u16`, height `u32`, width `u32`,
//! channel-major row-major payload, trailing FNV-1a-64 of all prior bytes.

use std::fs;
use std::path::Path;

use crate::codec::{write_atomic, FormatError, Reader, Writer};

use super::raster::{LabelRaster, Raster};
use super::DataError;

pub const MAGIC: &[u8; 4] = b"RSEG";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 2 + 4 + 4;

/// Contents of one RSEG file.
#[derive(Clone, Debug, PartialEq)]
pub enum RsegData {
    F32(Raster),
    Labels(LabelRaster),
}

pub fn encode_raster(r: &Raster) -> Vec<u8> {
    let mut w = Writer::new(MAGIC, VERSION);
    w.u8(0);
    w.u16(r.channels as u16);
    w.u32(r.height as u32);
    w.u32(r.width as u32);
    w.f32s(r.data.iter().copied());
    w.finish()
}

pub fn encode_labels(l: &LabelRaster) -> Vec<u8> {
    let mut w = Writer::new(MAGIC, VERSION);
    w.u8(1);
    w.u16(1);
    w.u32(l.height as u32);
    w.u32(l.width as u32);
    w.bytes(&l.data);
    w.finish()
}

pub fn decode(bytes: &[u8]) -> Result<RsegData, FormatError> {
    // Declared size is checked before the checksum so that a cut-off file
    // reports truncation rather than a checksum mismatch.
    if bytes.len() >= HEADER_LEN && &bytes[..4] == MAGIC && u16::from_le_bytes([bytes[4], bytes[5]]) == VERSION {
        let dtype = bytes[6];
        let ch = u16::from_le_bytes([bytes[7], bytes[8]]) as usize;
        let h = u32::from_le_bytes(bytes[9..13].try_into().expect("4")) as usize;
        let w = u32::from_le_bytes(bytes[13..17].try_into().expect("4")) as usize;
        let elem = if dtype == 0 { 4 } else { 1 };
        let want = ch.saturating_mul(h).saturating_mul(w).saturating_mul(elem).saturating_add(HEADER_LEN + 8);
        if bytes.len() < want {
            return Err(FormatError::Truncated { format: "RSEG" });
        }
    } else if bytes.len() < HEADER_LEN + 8 && bytes.len() >= 6 && &bytes[..4] == MAGIC
        && u16::from_le_bytes([bytes[4], bytes[5]]) == VERSION {
            return Err(FormatError::Truncated { format: "RSEG" });
        }
    let mut r = Reader::open(bytes, MAGIC, "RSEG", VERSION)?;
    let dtype = r.u8()?;
    let ch = r.u16()? as usize;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let out = match dtype {
        0 => RsegData::F32(Raster { channels: ch, height: h, width: w, data: r.f32s(ch * h * w)? }),
        1 => {
            if ch != 1 {
                return Err(r.malformed("label rasters have exactly one channel"));
            }
            RsegData::Labels(LabelRaster { height: h, width: w, data: r.bytes(h * w)?.to_vec() })
        }
        other => return Err(r.malformed(format!("unknown dtype {other}"))),
    };
    r.expect_end()?;
    Ok(out)
}

pub fn write_raster(path: &Path, r: &Raster) -> Result<(), DataError> {
    write_atomic(path, &encode_raster(r)).map_err(|e| DataError::io(path, e))
}

pub fn write_labels(path: &Path, l: &LabelRaster) -> Result<(), DataError> {
    write_atomic(path, &encode_labels(l)).map_err(|e| DataError::io(path, e))
}

pub fn read(path: &Path) -> Result<RsegData, DataError> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode(&bytes).map_err(|e| DataError::Format { path: path.display().to_string(), source: e })
}

pub fn read_raster(path: &Path) -> Result<Raster, DataError> {
    match read(path)? {
        RsegData::F32(r) => Ok(r),
        RsegData::Labels(_) => Err(DataError::Invalid(format!("{} holds labels, expected f32 raster", path.display()))),
    }
}

pub fn read_labels(path: &Path) -> Result<LabelRaster, DataError> {
    match read(path)? {
        RsegData::Labels(l) => Ok(l),
        RsegData::F32(_) => Err(DataError::Invalid(format!("{} holds an f32 raster, expected labels", path.display()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checksum::fnv1a64;

    fn raster() -> Raster {
        Raster::new(2, 2, 3, (0..12).map(|v| v as f32 * 0.25 - 1.0).collect()).unwrap()
    }

    #[test]
    fn round_trips_bitwise() {
        let r = raster();
        let bytes = encode_raster(&r);
        assert_eq!(bytes.len(), HEADER_LEN + 12 * 4 + 8);
        assert_eq!(decode(&bytes).unwrap(), RsegData::F32(r));
        let l = LabelRaster::new(2, 2, vec![0, 5, 3, 1]).unwrap();
        assert_eq!(decode(&encode_labels(&l)).unwrap(), RsegData::Labels(l));
    }

    #[test]
    fn corrupted_checksum_detected() {
        let mut bytes = encode_raster(&raster());
        bytes[HEADER_LEN + 3] ^= 0x01;
        assert!(matches!(decode(&bytes), Err(FormatError::Checksum { .. })));
    }

    #[test]
    fn newer_version_rejected() {
        let mut bytes = encode_raster(&raster());
        bytes[4] = (VERSION + 1) as u8;
        let n = bytes.len() - 8;
        let sum = fnv1a64(&bytes[..n]);
        bytes[n..].copy_from_slice(&sum.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(FormatError::UnsupportedVersion { version: 2, .. })));
    }

    #[test]
    fn truncation_and_magic() {
        let bytes = encode_raster(&raster());
        assert!(matches!(decode(&bytes[..bytes.len() - 5]), Err(FormatError::Truncated { .. })));
        assert!(matches!(decode(&bytes[..10]), Err(FormatError::Truncated { .. })));
        assert!(matches!(decode(b"PNG\x00rest-of-file"), Err(FormatError::BadMagic { .. })));
    }
}
