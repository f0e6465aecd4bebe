//! Row-major matrix of 16-bit grid indices, the common input of every
//! storage format.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Q16Matrix {
    rows: usize,
    cols: usize,
    data: Vec<i16>,
}

impl Q16Matrix {
    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<i16>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data does not match {rows}x{cols}");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_vec(rows, cols, vec![0; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[i16] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<i16> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> i16 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: i16) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[i16] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Copies the `h x w` tile whose top-left element is `(r0, c0)` into `out`
    /// (row-major), zero-filling positions past the matrix edge. Returns
    /// whether any copied value is nonzero.
    pub fn read_tile(&self, r0: usize, c0: usize, h: usize, w: usize, out: &mut [i16]) -> bool {
        debug_assert_eq!(out.len(), h * w);
        let mut any = false;
        for i in 0..h {
            let dst = &mut out[i * w..(i + 1) * w];
            let r = r0 + i;
            if r >= self.rows {
                dst.fill(0);
                continue;
            }
            let avail = self.cols.saturating_sub(c0).min(w);
            let src = &self.data[r * self.cols + c0..r * self.cols + c0 + avail];
            dst[..avail].copy_from_slice(src);
            dst[avail..].fill(0);
            any |= src.iter().any(|&v| v != 0);
        }
        any
    }

    /// Writes an `h x w` tile back, dropping positions past the matrix edge.
    pub fn write_tile(&mut self, r0: usize, c0: usize, h: usize, w: usize, tile: &[i16]) {
        debug_assert_eq!(tile.len(), h * w);
        for i in 0..h {
            let r = r0 + i;
            if r >= self.rows {
                break;
            }
            let avail = self.cols.saturating_sub(c0).min(w);
            let start = r * self.cols + c0;
            self.data[start..start + avail].copy_from_slice(&tile[i * w..i * w + avail]);
        }
    }

    /// Dense product with float64 accumulation in column order.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                let mut acc = 0.0f64;
                for (c, &q) in self.row(r).iter().enumerate() {
                    if q != 0 {
                        acc += q as f64 * x[c];
                    }
                }
                acc
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tile_reads_pad_with_zero() {
        let m = Q16Matrix::from_vec(3, 5, (1..=15).collect());
        let mut t = [0i16; 4];
        assert!(m.read_tile(2, 4, 2, 2, &mut t));
        assert_eq!(t, [15, 0, 0, 0]);
        assert!(!Q16Matrix::zeros(2, 2).read_tile(0, 0, 2, 2, &mut t));
    }

    #[test]
    fn tile_write_clips_at_edge() {
        let mut m = Q16Matrix::zeros(3, 5);
        m.write_tile(2, 4, 2, 2, &[7, 8, 9, 10]);
        assert_eq!(m.get(2, 4), 7);
        assert_eq!(m.nnz(), 1);
    }
}
