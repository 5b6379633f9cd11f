//! Little-endian binary framing shared by the tile, checkpoint and SVM
//! model formats: a 4-byte magic, a `u16` version, a body, and a trailing
//! FNV-1a-64 checksum over everything before it.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::checksum::fnv1a64;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: &'static str, found: Vec<u8> },
    #[error("unsupported {format} version {version} (supported: {supported})")]
    UnsupportedVersion { format: &'static str, version: u16, supported: u16 },
    #[error("truncated {format} file")]
    Truncated { format: &'static str },
    #[error("{format} checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    Checksum { format: &'static str, stored: u64, computed: u64 },
    #[error("malformed {format} file: {detail}")]
    Malformed { format: &'static str, detail: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Accumulates a file body; `finish` appends the checksum.
#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4], version: u16) -> Self {
        let mut w = Self { buf: Vec::new() };
        w.bytes(magic);
        w.u16(version);
        w
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32s(&mut self, vs: impl IntoIterator<Item = f32>) {
        for v in vs {
            self.f32(v);
        }
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }

    pub fn finish(mut self) -> Vec<u8> {
        let sum = fnv1a64(&self.buf);
        self.u64(sum);
        self.buf
    }
}

/// Cursor over a checksummed file body.
pub struct Reader<'a> {
    format: &'static str,
    body: &'a [u8],
    pos: usize,
    pub version: u16,
}

impl<'a> Reader<'a> {
    /// Validates magic, version and checksum, in that order.
    pub fn open(bytes: &'a [u8], magic: &'static [u8; 4], format: &'static str, supported: u16) -> Result<Self, FormatError> {
        if bytes.len() < 4 || &bytes[..4] != magic {
            return Err(FormatError::BadMagic {
                expected: std::str::from_utf8(magic).unwrap_or("?"),
                found: bytes[..bytes.len().min(4)].to_vec(),
            });
        }
        if bytes.len() < 6 {
            return Err(FormatError::Truncated { format });
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != supported {
            return Err(FormatError::UnsupportedVersion { format, version, supported });
        }
        if bytes.len() < 6 + 8 {
            return Err(FormatError::Truncated { format });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        let computed = fnv1a64(body);
        if stored != computed {
            return Err(FormatError::Checksum { format, stored, computed });
        }
        Ok(Self { format, body, pos: 6, version })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.pos + n > self.body.len() {
            return Err(FormatError::Truncated { format: self.format });
        }
        let s = &self.body[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f32(&mut self) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>, FormatError> {
        let raw = self.take(n.checked_mul(4).ok_or(FormatError::Truncated { format: self.format })?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        self.take(n)
    }

    pub fn str(&mut self) -> Result<String, FormatError> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.malformed("invalid utf-8 string"))
    }

    pub fn malformed(&self, detail: impl Into<String>) -> FormatError {
        FormatError::Malformed { format: self.format, detail: detail.into() }
    }

    /// Fails unless the whole body was consumed.
    pub fn expect_end(&self) -> Result<(), FormatError> {
        if self.pos != self.body.len() {
            return Err(self.malformed(format!("{} trailing bytes", self.body.len() - self.pos)));
        }
        Ok(())
    }
}

/// Writes via a temporary sibling and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<u8> {
        let mut w = Writer::new(b"TEST", 1);
        w.u32(7);
        w.f32(1.5);
        w.str("hi");
        w.finish()
    }

    #[test]
    fn round_trip() {
        let bytes = sample();
        let mut r = Reader::open(&bytes, b"TEST", "test", 1).unwrap();
        assert_eq!(r.u32().unwrap(), 7);
        assert_eq!(r.f32().unwrap(), 1.5);
        assert_eq!(r.str().unwrap(), "hi");
        r.expect_end().unwrap();
    }

    #[test]
    fn error_kinds_are_distinct() {
        let bytes = sample();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Reader::open(&bad, b"TEST", "test", 1), Err(FormatError::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(Reader::open(&bad, b"TEST", "test", 1), Err(FormatError::UnsupportedVersion { version: 2, .. })));
        let mut bad = bytes.clone();
        let last = bad.len() - 1;
        bad[last] ^= 0xff;
        assert!(matches!(Reader::open(&bad, b"TEST", "test", 1), Err(FormatError::Checksum { .. })));
        assert!(matches!(Reader::open(&bytes[..7], b"TEST", "test", 1), Err(FormatError::Truncated { .. })));
        let mut r = Reader::open(&bytes, b"TEST", "test", 1).unwrap();
        r.bytes(100).unwrap_err();
    }
}
