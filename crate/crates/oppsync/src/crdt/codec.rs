//! Canonical binary encoding helpers shared by the CRDT payloads.
//!
//! Layout rules, kept deliberately small:
//! * integers are little-endian (`u32` for lengths and counts, `u64`/`i64`
//!   for values),
//! * strings are a `u32` byte length followed by UTF-8 bytes,
//! * collections are a `u32` element count followed by the elements in
//!   sorted order.
//!
//! Because every collection is written in sorted order, equal states always
//! produce byte-identical blobs, which the protocol uses for cheap equality
//! checks and the tests use for golden fixtures.

use super::DecodeError;

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 2], version: u8) -> Self {
        let mut buf = Vec::with_capacity(64);
        buf.extend_from_slice(magic);
        buf.push(version);
        Writer { buf }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn count(&mut self, n: usize) {
        self.u32(n as u32);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8], magic: &[u8; 2], version: u8) -> Result<Self, DecodeError> {
        let mut r = Reader { buf, pos: 0 };
        let found = [r.u8()?, r.u8()?];
        if &found != magic {
            return Err(DecodeError::BadMagic { found });
        }
        let v = r.u8()?;
        if v != version {
            return Err(DecodeError::BadVersion { found: v });
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() - self.pos < n {
            return Err(DecodeError::Truncated { at: self.pos });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn i64(&mut self) -> Result<i64, DecodeError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn str(&mut self) -> Result<String, DecodeError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| DecodeError::BadUtf8 { at: self.pos })
    }

    /// Element count for a collection, bounded to catch corrupted lengths
    /// before they turn into huge allocations.
    pub fn count(&mut self) -> Result<usize, DecodeError> {
        let n = self.u32()? as usize;
        // Every element is at least one byte, so a count larger than the
        // remaining buffer cannot be honest.
        if n > self.buf.len() - self.pos {
            return Err(DecodeError::Truncated { at: self.pos });
        }
        Ok(n)
    }

    pub fn expect_end(&self) -> Result<(), DecodeError> {
        if self.pos != self.buf.len() {
            return Err(DecodeError::TrailingBytes { at: self.pos });
        }
        Ok(())
    }
}
