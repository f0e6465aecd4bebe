//! Byte layout of BSR and SBSR sections.
//!
//! All integers are little-endian. A BSR section is
//!
//! ```text
//! u32 rows, cols, block_h, block_w, n_blocks
//! u32 row_ptr[ceil(rows / block_h) + 1]
//! u32 col_idx[n_blocks]
//! i16 blocks[n_blocks * block_h * block_w]
//! ```
//!
//! and an SBSR section is
//!
//! ```text
//! u32 rows, cols, block_h, block_w, n_blocks, n_unique
//! u32 row_ptr[ceil(rows / block_h) + 1]
//! u32 col_idx[n_blocks]
//! u8  flags[ceil(n_blocks / 8)]       one bit per block, MSB first, 1 = repeat
//! u32 refs[n_blocks - n_unique]
//! i16 unique_blocks[n_unique * block_h * block_w]
//! ```

use super::{to_u32, BlockSparse, BsrMatrix, FormatError, SbsrMatrix, SharedLayout};
use crate::wire::{Reader, Truncated, Writer};

/// Header words of a BSR section.
pub const BSR_HEADER_WORDS: usize = 5;
/// Header words of an SBSR section.
pub const SBSR_HEADER_WORDS: usize = 6;

impl From<Truncated> for FormatError {
    fn from(t: Truncated) -> Self {
        FormatError::Truncated {
            offset: t.offset,
            needed: t.needed,
            available: t.available,
        }
    }
}

fn header<M: BlockSparse>(w: &mut Writer, m: &M) {
    w.u32(to_u32(m.rows()));
    w.u32(to_u32(m.cols()));
    w.u32(to_u32(m.block_h()));
    w.u32(to_u32(m.block_w()));
    w.u32(to_u32(m.num_blocks()));
}

pub fn write_bsr(m: &BsrMatrix) -> Vec<u8> {
    let mut w = Writer::new();
    header(&mut w, m);
    w.u32s(m.row_ptr());
    w.u32s(m.col_idx());
    w.i16s(m.blocks());
    w.finish()
}

pub fn write_sbsr(m: &SbsrMatrix) -> Vec<u8> {
    let layout = m.layout();
    let mut w = Writer::new();
    header(&mut w, m);
    w.u32(to_u32(m.num_unique()));
    w.u32s(m.row_ptr());
    w.u32s(m.col_idx());
    w.bits(&layout.flags);
    w.u32s(&layout.refs);
    w.i16s(&layout.unique_blocks);
    w.finish()
}

struct Head {
    rows: usize,
    cols: usize,
    block_h: usize,
    block_w: usize,
    blocks: usize,
}

fn read_head(r: &mut Reader<'_>) -> Result<Head, FormatError> {
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let block_h = r.u32()? as usize;
    let block_w = r.u32()? as usize;
    let blocks = r.u32()? as usize;
    if block_h == 0 || block_w == 0 {
        return Err(FormatError::BadBlockShape { block_h, block_w });
    }
    Ok(Head {
        rows,
        cols,
        block_h,
        block_w,
        blocks,
    })
}

fn finish(r: &Reader<'_>) -> Result<(), FormatError> {
    match r.remaining() {
        0 => Ok(()),
        extra => Err(FormatError::TrailingBytes { extra }),
    }
}

pub fn read_bsr(bytes: &[u8]) -> Result<BsrMatrix, FormatError> {
    let mut r = Reader::new(bytes);
    let h = read_head(&mut r)?;
    let row_ptr = r.u32s(h.rows.div_ceil(h.block_h) + 1)?;
    let col_idx = r.u32s(h.blocks)?;
    let blocks = r.i16s(h.blocks.saturating_mul(h.block_h * h.block_w))?;
    finish(&r)?;
    BsrMatrix::from_parts(h.rows, h.cols, h.block_h, h.block_w, row_ptr, col_idx, blocks)
}

pub fn read_sbsr(bytes: &[u8]) -> Result<SbsrMatrix, FormatError> {
    let mut r = Reader::new(bytes);
    let h = read_head(&mut r)?;
    let unique = r.u32()? as usize;
    if unique > h.blocks {
        return Err(FormatError::UniqueCount {
            firsts: h.blocks,
            unique,
        });
    }
    let row_ptr = r.u32s(h.rows.div_ceil(h.block_h) + 1)?;
    let col_idx = r.u32s(h.blocks)?;
    let (flags, clean) = r.bits(h.blocks)?;
    if !clean {
        return Err(FormatError::FlagPadding);
    }
    let refs = r.u32s(h.blocks - unique)?;
    let unique_blocks = r.i16s(unique.saturating_mul(h.block_h * h.block_w))?;
    finish(&r)?;
    SbsrMatrix::from_layout(
        h.rows,
        h.cols,
        h.block_h,
        h.block_w,
        row_ptr,
        col_idx,
        SharedLayout {
            flags,
            refs,
            unique_blocks,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Q16Matrix;
    use crate::sparse::{to_bsr, to_sbsr};

    fn sample() -> Q16Matrix {
        Q16Matrix::from_vec(3, 5, vec![1, 2, 0, 0, 1, 1, 2, 3, 0, 0, 0, 0, 1, 2, 9])
    }

    #[test]
    fn bsr_section_round_trips() {
        let b = to_bsr(&sample(), 1, 2).unwrap();
        let bytes = write_bsr(&b);
        assert_eq!(read_bsr(&bytes).unwrap(), b);
    }

    #[test]
    fn sbsr_section_round_trips() {
        let s = to_sbsr(&sample(), 1, 2).unwrap();
        let bytes = write_sbsr(&s);
        let back = read_sbsr(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.decode(), sample());
    }

    #[test]
    fn truncated_section_is_rejected() {
        let bytes = write_sbsr(&to_sbsr(&sample(), 1, 2).unwrap());
        assert!(matches!(
            read_sbsr(&bytes[..bytes.len() - 1]),
            Err(FormatError::Truncated { .. })
        ));
        let mut longer = bytes.clone();
        longer.push(0);
        assert_eq!(read_sbsr(&longer), Err(FormatError::TrailingBytes { extra: 1 }));
    }

    #[test]
    fn forward_reference_in_section_is_rejected() {
        let s = to_sbsr(&sample(), 1, 2).unwrap();
        let mut bytes = write_sbsr(&s);
        // refs follow header (6 words), row_ptr (4), col_idx (n), flags
        let n = s.num_blocks();
        let at = 4 * (6 + 4 + n) + n.div_ceil(8);
        bytes[at..at + 4].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(read_sbsr(&bytes), Err(FormatError::RefOutOfRange { .. })));
    }
}
