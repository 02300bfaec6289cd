//! Little-endian readers/writers that track the byte offset so format
//! errors can point at the exact position in the file.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub(crate) struct OffsetReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> OffsetReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner, offset: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn corrupt(&self, reason: impl Into<String>) -> Error {
        Error::Corrupt {
            offset: self.offset,
            reason: reason.into(),
        }
    }

    pub fn exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let mut filled = 0;
        while filled < buf.len() {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => {
                    self.offset += filled as u64;
                    return Err(self.corrupt(format!("unexpected end of file while reading {what}")));
                }
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += buf.len() as u64;
        Ok(())
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.exact(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.exact(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    pub fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; n * 8];
        self.exact(&mut bytes, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }

    pub fn magic(&mut self, expected: &[u8; 8]) -> Result<()> {
        let start = self.offset;
        let mut b = [0u8; 8];
        self.exact(&mut b, "magic")?;
        if &b != expected {
            return Err(Error::Corrupt {
                offset: start,
                reason: format!("bad magic, expected {:?}", String::from_utf8_lossy(expected)),
            });
        }
        Ok(())
    }

    pub fn version(&mut self, expected: u32) -> Result<()> {
        let found = self.u32("version")?;
        if found != expected {
            return Err(Error::VersionMismatch { found, expected });
        }
        Ok(())
    }

    /// Length-prefixed UTF-8 block.
    pub fn text(&mut self, limit: usize, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        if len > limit {
            return Err(self.corrupt(format!("{what} length {len} exceeds limit {limit}")));
        }
        let mut buf = vec![0u8; len];
        let start = self.offset;
        self.exact(&mut buf, what)?;
        String::from_utf8(buf).map_err(|_| Error::Corrupt {
            offset: start,
            reason: format!("{what} is not valid UTF-8"),
        })
    }

    /// Succeeds only if the stream has no bytes left.
    pub fn expect_eof(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b)? {
            0 => Ok(()),
            _ => Err(self.corrupt("trailing bytes after last record")),
        }
    }
}

pub(crate) fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_f64s(w: &mut impl Write, vs: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(vs.len() * 8);
    for v in vs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn put_text(w: &mut impl Write, s: &str) -> Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}
