//! Block sparse row storage and its shared-block extension.
//!
//! Both formats tile a [`Q16Matrix`] into `block_h x block_w` blocks
//! (zero-padded at the right and bottom edges) and keep only blocks holding at
//! least one nonzero. [`BsrMatrix`] stores every kept block's payload;
//! [`SbsrMatrix`] stores each distinct payload once and lets repeat
//! occurrences point at the shared copy.

mod bsr;
mod sbsr;
pub mod serial;

pub use bsr::{to_bsr, BsrMatrix};
pub use sbsr::{to_sbsr, to_sbsr_with_stats, ScanStats, SbsrMatrix, SharedLayout, REPEAT};

use thiserror::Error;

use crate::matrix::Q16Matrix;
use crate::par::{self, Exec};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("block extents must be positive, got {block_h}x{block_w}")]
    BadBlockShape { block_h: usize, block_w: usize },

    #[error("row_ptr has {len} entries, expected {expected}")]
    RowPtrLength { len: usize, expected: usize },

    #[error("row_ptr must start at 0 and end at the block count {blocks}")]
    RowPtrEnds { blocks: usize },

    #[error("row_ptr decreases at block row {row}")]
    RowPtrDecreasing { row: usize },

    #[error("col_idx not strictly increasing in block row {row}")]
    ColIdxOrder { row: usize },

    #[error("col_idx {col} out of range for {block_cols} block columns")]
    ColIdxRange { col: u32, block_cols: usize },

    #[error("payload holds {len} values, expected {expected}")]
    PayloadLength { len: usize, expected: usize },

    #[error("stored block {entry} is all zero")]
    ZeroBlock { entry: usize },

    #[error("stored block {entry} has nonzero values in edge padding")]
    PaddingNotZero { entry: usize },

    #[error("{flags} flags for {blocks} stored blocks")]
    FlagCount { flags: usize, blocks: usize },

    #[error("{firsts} first-appearance flags but {unique} unique blocks")]
    UniqueCount { firsts: usize, unique: usize },

    #[error("{repeats} repeat flags but {refs} references")]
    RefCount { repeats: usize, refs: usize },

    #[error("reference {reference} at stored block {entry} does not point back into the {available} unique blocks seen so far")]
    RefOutOfRange {
        entry: usize,
        reference: u32,
        available: usize,
    },

    #[error("unique blocks {first} and {second} are identical")]
    DuplicateUnique { first: usize, second: usize },

    #[error("block ({block_row}, {block_col}) outside {block_rows}x{block_cols} block grid")]
    OutOfRange {
        block_row: usize,
        block_col: usize,
        block_rows: usize,
        block_cols: usize,
    },

    #[error("block ({block_row}, {block_col}) is not stored")]
    NotStored { block_row: usize, block_col: usize },

    #[error("vector has {len} entries, matrix has {cols} columns")]
    DimensionMismatch { len: usize, cols: usize },

    #[error("section truncated: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("section has {extra} trailing bytes")]
    TrailingBytes { extra: usize },

    #[error("flag padding bits are not zero")]
    FlagPadding,

    #[error("count {value} does not fit a 32-bit field")]
    TooLarge { value: usize },
}

/// Read access shared by both block formats: index arrays plus a payload per
/// stored block.
pub trait BlockSparse {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn block_h(&self) -> usize;
    fn block_w(&self) -> usize;
    fn row_ptr(&self) -> &[u32];
    fn col_idx(&self) -> &[u32];
    /// Payload of the `entry`-th stored block, row-major.
    fn payload(&self, entry: usize) -> &[i16];

    fn block_len(&self) -> usize {
        self.block_h() * self.block_w()
    }

    fn block_rows(&self) -> usize {
        self.rows().div_ceil(self.block_h())
    }

    fn block_cols(&self) -> usize {
        self.cols().div_ceil(self.block_w())
    }

    fn num_blocks(&self) -> usize {
        self.col_idx().len()
    }

    /// Stored-entry index of block `(br, bc)`, if stored.
    fn entry_at(&self, br: usize, bc: usize) -> Result<Option<usize>, FormatError> {
        if br >= self.block_rows() || bc >= self.block_cols() {
            return Err(FormatError::OutOfRange {
                block_row: br,
                block_col: bc,
                block_rows: self.block_rows(),
                block_cols: self.block_cols(),
            });
        }
        let (lo, hi) = (self.row_ptr()[br] as usize, self.row_ptr()[br + 1] as usize);
        Ok(self.col_idx()[lo..hi]
            .binary_search(&(bc as u32))
            .ok()
            .map(|i| lo + i))
    }

    /// Dense matrix with zeros in unstored positions and padding stripped.
    fn decode(&self) -> Q16Matrix {
        let (bh, bw) = (self.block_h(), self.block_w());
        let mut m = Q16Matrix::zeros(self.rows(), self.cols());
        for br in 0..self.block_rows() {
            let (lo, hi) = (self.row_ptr()[br] as usize, self.row_ptr()[br + 1] as usize);
            for k in lo..hi {
                let c0 = self.col_idx()[k] as usize * bw;
                m.write_tile(br * bh, c0, bh, bw, self.payload(k));
            }
        }
        m
    }

    /// `A x` with float64 accumulation. Each output row sums its products in
    /// ascending column order, matching [`Q16Matrix::matvec`] bit-for-bit.
    fn spmv(&self, x: &[f64]) -> Result<Vec<f64>, FormatError>
    where
        Self: Sync,
    {
        self.spmv_with(x, Exec::default())
    }

    fn spmv_with(&self, x: &[f64], exec: Exec) -> Result<Vec<f64>, FormatError>
    where
        Self: Sync,
    {
        if x.len() != self.cols() {
            return Err(FormatError::DimensionMismatch {
                len: x.len(),
                cols: self.cols(),
            });
        }
        let (bh, bw, cols) = (self.block_h(), self.block_w(), self.cols());
        let chunks = par::map_range(exec, self.block_rows(), |br| {
            let mut acc = vec![0.0f64; bh];
            let (lo, hi) = (self.row_ptr()[br] as usize, self.row_ptr()[br + 1] as usize);
            for k in lo..hi {
                let c0 = self.col_idx()[k] as usize * bw;
                let block = self.payload(k);
                for (i, a) in acc.iter_mut().enumerate() {
                    for j in 0..bw.min(cols - c0) {
                        let q = block[i * bw + j];
                        if q != 0 {
                            *a += q as f64 * x[c0 + j];
                        }
                    }
                }
            }
            acc
        });
        let mut y: Vec<f64> = chunks.into_iter().flatten().collect();
        y.truncate(self.rows());
        Ok(y)
    }
}

/// Shared validation of block extents and index arrays.
pub(crate) fn check_indices(
    rows: usize,
    cols: usize,
    block_h: usize,
    block_w: usize,
    row_ptr: &[u32],
    col_idx: &[u32],
) -> Result<(), FormatError> {
    if block_h == 0 || block_w == 0 {
        return Err(FormatError::BadBlockShape { block_h, block_w });
    }
    let block_rows = rows.div_ceil(block_h);
    let block_cols = cols.div_ceil(block_w);
    if row_ptr.len() != block_rows + 1 {
        return Err(FormatError::RowPtrLength {
            len: row_ptr.len(),
            expected: block_rows + 1,
        });
    }
    if row_ptr[0] != 0 || row_ptr[block_rows] as usize != col_idx.len() {
        return Err(FormatError::RowPtrEnds {
            blocks: col_idx.len(),
        });
    }
    for br in 0..block_rows {
        let (lo, hi) = (row_ptr[br] as usize, row_ptr[br + 1] as usize);
        if hi < lo {
            return Err(FormatError::RowPtrDecreasing { row: br });
        }
        let row = &col_idx[lo..hi];
        if row.windows(2).any(|p| p[0] >= p[1]) {
            return Err(FormatError::ColIdxOrder { row: br });
        }
        if let Some(&col) = row.iter().find(|&&c| c as usize >= block_cols) {
            return Err(FormatError::ColIdxRange { col, block_cols });
        }
    }
    Ok(())
}

/// Checks one stored payload: at least one nonzero, zeros in edge padding.
pub(crate) fn check_payload(
    entry: usize,
    payload: &[i16],
    (rows, cols): (usize, usize),
    (r0, c0): (usize, usize),
    (block_h, block_w): (usize, usize),
) -> Result<(), FormatError> {
    if payload.iter().all(|&v| v == 0) {
        return Err(FormatError::ZeroBlock { entry });
    }
    for i in 0..block_h {
        for j in 0..block_w {
            if (r0 + i >= rows || c0 + j >= cols) && payload[i * block_w + j] != 0 {
                return Err(FormatError::PaddingNotZero { entry });
            }
        }
    }
    Ok(())
}

pub(crate) fn to_u32(v: usize) -> u32 {
    u32::try_from(v).expect("index exceeds the 32-bit range of the block formats")
}
