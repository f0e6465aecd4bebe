use super::{check_indices, check_payload, to_u32, BlockSparse, FormatError};
use crate::matrix::Q16Matrix;

/// Classic block sparse row matrix over q16 payloads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BsrMatrix {
    rows: usize,
    cols: usize,
    block_h: usize,
    block_w: usize,
    row_ptr: Vec<u32>,
    col_idx: Vec<u32>,
    /// Stored blocks back to back, `block_h * block_w` values each.
    blocks: Vec<i16>,
}

/// Tiles `m` into `block_h x block_w` blocks and keeps the nonzero ones.
pub fn to_bsr(m: &Q16Matrix, block_h: usize, block_w: usize) -> Result<BsrMatrix, FormatError> {
    BsrMatrix::from_dense(m, block_h, block_w)
}

impl BsrMatrix {
    pub fn from_dense(m: &Q16Matrix, block_h: usize, block_w: usize) -> Result<Self, FormatError> {
        if block_h == 0 || block_w == 0 {
            return Err(FormatError::BadBlockShape { block_h, block_w });
        }
        let block_rows = m.rows().div_ceil(block_h);
        let block_cols = m.cols().div_ceil(block_w);
        let len = block_h * block_w;
        let mut row_ptr = Vec::with_capacity(block_rows + 1);
        let mut col_idx = Vec::new();
        let mut blocks = Vec::new();
        let mut tile = vec![0i16; len];
        row_ptr.push(0);
        for br in 0..block_rows {
            for bc in 0..block_cols {
                if m.read_tile(br * block_h, bc * block_w, block_h, block_w, &mut tile) {
                    col_idx.push(to_u32(bc));
                    blocks.extend_from_slice(&tile);
                }
            }
            row_ptr.push(to_u32(col_idx.len()));
        }
        Ok(Self {
            rows: m.rows(),
            cols: m.cols(),
            block_h,
            block_w,
            row_ptr,
            col_idx,
            blocks,
        })
    }

    /// Assembles a matrix from raw arrays, checking every structural invariant.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        block_h: usize,
        block_w: usize,
        row_ptr: Vec<u32>,
        col_idx: Vec<u32>,
        blocks: Vec<i16>,
    ) -> Result<Self, FormatError> {
        check_indices(rows, cols, block_h, block_w, &row_ptr, &col_idx)?;
        let len = block_h * block_w;
        if blocks.len() != col_idx.len() * len {
            return Err(FormatError::PayloadLength {
                len: blocks.len(),
                expected: col_idx.len() * len,
            });
        }
        for br in 0..row_ptr.len() - 1 {
            for k in row_ptr[br] as usize..row_ptr[br + 1] as usize {
                check_payload(
                    k,
                    &blocks[k * len..(k + 1) * len],
                    (rows, cols),
                    (br * block_h, col_idx[k] as usize * block_w),
                    (block_h, block_w),
                )?;
            }
        }
        Ok(Self {
            rows,
            cols,
            block_h,
            block_w,
            row_ptr,
            col_idx,
            blocks,
        })
    }

    pub fn blocks(&self) -> &[i16] {
        &self.blocks
    }
}

impl BlockSparse for BsrMatrix {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn block_h(&self) -> usize {
        self.block_h
    }
    fn block_w(&self) -> usize {
        self.block_w
    }
    fn row_ptr(&self) -> &[u32] {
        &self.row_ptr
    }
    fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }
    fn payload(&self, entry: usize) -> &[i16] {
        let len = self.block_len();
        &self.blocks[entry * len..(entry + 1) * len]
    }
}
