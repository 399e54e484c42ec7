//! Byte-level access to MVB1 streams with per-category read accounting.
//!
//! Every parse path in the crate goes through [`CountingCursor`] so the
//! selective-access claims (motion vectors without touching residual bytes)
//! are measurable rather than assumed.

use crate::error::{Error, Result};

/// Running tally of how a parse touched the stream.
///
/// `residual_bytes_read + residual_bytes_skipped` accounts for every residual
/// payload byte the cursor moved over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ByteAccessCounter {
    pub header_bytes: u64,
    pub mv_bytes: u64,
    pub residual_bytes_read: u64,
    pub residual_bytes_skipped: u64,
}

impl ByteAccessCounter {
    pub fn merge(&mut self, other: &ByteAccessCounter) {
        self.header_bytes += other.header_bytes;
        self.mv_bytes += other.mv_bytes;
        self.residual_bytes_read += other.residual_bytes_read;
        self.residual_bytes_skipped += other.residual_bytes_skipped;
    }
}

/// Category a read is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteClass {
    Header,
    Mv,
    Residual,
}

pub struct CountingCursor<'a> {
    data: &'a [u8],
    pos: usize,
    pub counter: ByteAccessCounter,
}

impl<'a> CountingCursor<'a> {
    pub fn new(data: &'a [u8]) -> CountingCursor<'a> {
        CountingCursor { data, pos: 0, counter: ByteAccessCounter::default() }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    fn charge(&mut self, class: ByteClass, n: usize) {
        let n = n as u64;
        match class {
            ByteClass::Header => self.counter.header_bytes += n,
            ByteClass::Mv => self.counter.mv_bytes += n,
            ByteClass::Residual => self.counter.residual_bytes_read += n,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Parse {
                offset: self.pos,
                msg: format!("need {n} more bytes but only {} remain", self.data.len() - self.pos),
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn read_u8(&mut self, class: ByteClass) -> Result<u8> {
        let b = self.take(1)?[0];
        self.charge(class, 1);
        Ok(b)
    }

    pub fn read_i8(&mut self, class: ByteClass) -> Result<i8> {
        Ok(self.read_u8(class)? as i8)
    }

    pub fn read_u16(&mut self, class: ByteClass) -> Result<u16> {
        let s = self.take(2)?;
        self.charge(class, 2);
        Ok(u16::from_le_bytes([s[0], s[1]]))
    }

    pub fn read_i16(&mut self, class: ByteClass) -> Result<i16> {
        Ok(self.read_u16(class)? as i16)
    }

    pub fn read_u32(&mut self, class: ByteClass) -> Result<u32> {
        let s = self.take(4)?;
        self.charge(class, 4);
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    }

    pub fn read_bytes(&mut self, n: usize, class: ByteClass) -> Result<&'a [u8]> {
        let s = self.take(n)?;
        self.charge(class, n);
        Ok(s)
    }

    /// Advances over `n` payload bytes without reading them; charged as
    /// skipped residual bytes.
    pub fn skip_residual(&mut self, n: usize) -> Result<()> {
        self.take(n)?;
        self.counter.residual_bytes_skipped += n as u64;
        Ok(())
    }

    /// Advances without charging any category. Used when the same bytes were
    /// already accounted for by another parse over the stream.
    pub fn seek(&mut self, n: usize) -> Result<()> {
        self.take(n)?;
        Ok(())
    }
}

/// Little-endian writer counterpart used by the encoder.
#[derive(Default)]
pub struct ByteWriter {
    pub buf: Vec<u8>,
}

impl ByteWriter {
    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn put_i8(&mut self, v: i8) {
        self.buf.push(v as u8);
    }
    pub fn put_u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn put_i16(&mut self, v: i16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}
