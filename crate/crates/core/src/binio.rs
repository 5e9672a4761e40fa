//! Little-endian, length-prefixed primitives shared by the binary containers.
//!
//! Strings are `u32` byte length followed by UTF-8; numbers are fixed-width
//! little-endian; doubles are IEEE-754 binary64.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("truncated input while reading {0}")]
    Truncated(&'static str),
    #[error("invalid UTF-8 in {0}")]
    Utf8(&'static str),
    #[error("invalid header: {0}")]
    Header(String),
    #[error("{0} trailing bytes after end of container")]
    Trailing(usize),
    #[error("schema violation: {0}")]
    Schema(String),
}

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64s(&mut self, vs: impl IntoIterator<Item = f64>) -> &mut Self {
        for v in vs {
            self.f64(v);
        }
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).ok_or(FormatError::Truncated(what))?;
        if end > self.buf.len() {
            return Err(FormatError::Truncated(what));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn u64(&mut self, what: &'static str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn f64(&mut self, what: &'static str) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize, what: &'static str) -> Result<Vec<f64>, FormatError> {
        let bytes = self.take(n.checked_mul(8).ok_or(FormatError::Truncated(what))?, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn str(&mut self, what: &'static str) -> Result<String, FormatError> {
        let n = self.u32(what)? as usize;
        let bytes = self.take(n, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| FormatError::Utf8(what))
    }

    /// Reads the leading string and checks it equals `magic`.
    pub fn magic(&mut self, magic: &str) -> Result<(), FormatError> {
        let found = self.str("magic").map_err(|_| FormatError::BadMagic {
            expected: magic.into(),
            found: String::new(),
        })?;
        if found != magic {
            return Err(FormatError::BadMagic {
                expected: magic.into(),
                found,
            });
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<(), FormatError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(FormatError::Trailing(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitives_round_trip() {
        let mut w = Writer::new();
        w.str("crossrsa-x/1").u32(7).u64(1 << 40).f64(-0.25).str("é");
        let bytes = w.finish();
        assert_eq!(&bytes[..4], &12u32.to_le_bytes());
        let mut r = Reader::new(&bytes);
        r.magic("crossrsa-x/1").unwrap();
        assert_eq!(r.u32("a").unwrap(), 7);
        assert_eq!(r.u64("b").unwrap(), 1 << 40);
        assert_eq!(r.f64("c").unwrap(), -0.25);
        assert_eq!(r.str("d").unwrap(), "é");
        r.finish().unwrap();
        assert_eq!(r.u32("e"), Err(FormatError::Truncated("e")));
    }

    #[test]
    fn wrong_magic() {
        let mut w = Writer::new();
        w.str("other/1");
        let bytes = w.finish();
        assert!(matches!(
            Reader::new(&bytes).magic("crossrsa-x/1"),
            Err(FormatError::BadMagic { .. })
        ));
    }
}
