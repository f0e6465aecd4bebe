//! Little-endian byte helpers for the section formats.

use bitvec::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Truncated {
    pub offset: usize,
    pub needed: usize,
    pub available: usize,
}

#[derive(Default)]
pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32s(&mut self, vs: &[u32]) {
        for &v in vs {
            self.u32(v);
        }
    }

    pub fn i16s(&mut self, vs: &[i16]) {
        for &v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    /// Bits MSB-first, zero-padded to a whole byte.
    pub fn bits(&mut self, bits: &BitSlice<u8, Msb0>) {
        let mut owned: BitVec<u8, Msb0> = bits.to_bitvec();
        owned.set_uninitialized(false);
        self.buf.extend_from_slice(owned.as_raw_slice());
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
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], Truncated> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn checked_len(&self, count: usize, width: usize) -> Result<usize, Truncated> {
        count.checked_mul(width).ok_or(Truncated {
            offset: self.pos,
            needed: usize::MAX,
            available: self.buf.len() - self.pos,
        })
    }

    pub fn u32(&mut self) -> Result<u32, Truncated> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u32s(&mut self, n: usize) -> Result<Vec<u32>, Truncated> {
        let len = self.checked_len(n, 4)?;
        Ok(self
            .take(len)?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn i16s(&mut self, n: usize) -> Result<Vec<i16>, Truncated> {
        let len = self.checked_len(n, 2)?;
        Ok(self
            .take(len)?
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    /// `n` bits MSB-first from `ceil(n / 8)` bytes. Returns the bits and
    /// whether the padding bits were all zero.
    pub fn bits(&mut self, n: usize) -> Result<(BitVec<u8, Msb0>, bool), Truncated> {
        let raw = self.take(n.div_ceil(8))?;
        let all: &BitSlice<u8, Msb0> = raw.view_bits();
        let clean = all[n..].not_any();
        Ok((all[..n].to_bitvec(), clean))
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bits_pad_msb_first() {
        let bits = bitvec![u8, Msb0; 1, 0, 1];
        let mut w = Writer::new();
        w.bits(&bits);
        let out = w.finish();
        assert_eq!(out, vec![0b1010_0000]);
        let mut r = Reader::new(&out);
        let (back, clean) = r.bits(3).unwrap();
        assert_eq!(back, bits);
        assert!(clean);
    }

    #[test]
    fn reader_reports_truncation() {
        let mut r = Reader::new(&[1, 2, 3]);
        assert_eq!(
            r.u32(),
            Err(Truncated {
                offset: 0,
                needed: 4,
                available: 3
            })
        );
    }
}
