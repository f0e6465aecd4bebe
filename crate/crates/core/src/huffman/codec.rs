use std::collections::BTreeMap;

use bitvec::prelude::*;

use super::{build_codebook, Codebook, HuffmanError};
use crate::matrix::Q16Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SymbolKind {
    /// One nonzero element per symbol.
    Element,
    /// One nonzero `1 x width` vector per symbol.
    Vector(usize),
}

impl SymbolKind {
    pub fn width(&self) -> usize {
        match *self {
            SymbolKind::Element => 1,
            SymbolKind::Vector(w) => w,
        }
    }
}

/// A Huffman-coded matrix: codebook, one coordinate per coded symbol, and
/// the concatenated codes (MSB first) in coordinate order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedTensor {
    kind: SymbolKind,
    rows: usize,
    cols: usize,
    codebook: Codebook,
    /// `(row, block column)`; block column equals column for elements.
    coords: Vec<(u32, u32)>,
    payload: BitVec<u8, Msb0>,
}

/// Counts of every nonzero `1 x width` tile, right edge zero-padded.
pub fn symbol_histogram(m: &Q16Matrix, width: usize) -> BTreeMap<Vec<i16>, u64> {
    let mut counts = BTreeMap::new();
    for_each_symbol(m, width, |_, _, tile| {
        *counts.entry(tile.to_vec()).or_insert(0) += 1;
    });
    counts
}

fn for_each_symbol(m: &Q16Matrix, width: usize, mut f: impl FnMut(usize, usize, &[i16])) {
    let block_cols = m.cols().div_ceil(width);
    let mut tile = vec![0i16; width];
    for r in 0..m.rows() {
        for bc in 0..block_cols {
            if m.read_tile(r, bc * width, 1, width, &mut tile) {
                f(r, bc, &tile);
            }
        }
    }
}

pub fn encode_elementwise(m: &Q16Matrix) -> EncodedTensor {
    encode(m, SymbolKind::Element)
}

pub fn encode_vectorwise(m: &Q16Matrix, width: usize) -> Result<EncodedTensor, HuffmanError> {
    if width == 0 {
        return Err(HuffmanError::ZeroWidth);
    }
    Ok(encode(m, SymbolKind::Vector(width)))
}

fn encode(m: &Q16Matrix, kind: SymbolKind) -> EncodedTensor {
    let width = kind.width();
    let counts = symbol_histogram(m, width);
    let codebook = if counts.is_empty() {
        Codebook::empty(width)
    } else {
        build_codebook(&counts).expect("histogram counts are positive and uniform width")
    };
    let mut coords = Vec::with_capacity(counts.values().sum::<u64>() as usize);
    let mut payload = BitVec::new();
    for_each_symbol(m, width, |r, bc, tile| {
        let e = codebook.get(tile).expect("every histogram symbol has a code");
        for i in (0..e.len).rev() {
            payload.push((e.code >> i) & 1 == 1);
        }
        coords.push((r as u32, bc as u32));
    });
    EncodedTensor {
        kind,
        rows: m.rows(),
        cols: m.cols(),
        codebook,
        coords,
        payload,
    }
}

impl EncodedTensor {
    /// Assembles an encoded tensor, checking coordinates and symbols.
    /// The payload itself is checked by [`decode`](Self::decode).
    pub fn from_parts(
        kind: SymbolKind,
        rows: usize,
        cols: usize,
        codebook: Codebook,
        coords: Vec<(u32, u32)>,
        payload: BitVec<u8, Msb0>,
    ) -> Result<Self, HuffmanError> {
        let width = kind.width();
        if width == 0 {
            return Err(HuffmanError::ZeroWidth);
        }
        if codebook.width() != width {
            return Err(HuffmanError::MixedWidth {
                expected: width,
                found: codebook.width(),
            });
        }
        if let Some(e) = codebook.entries().iter().find(|e| e.symbol.iter().all(|&v| v == 0)) {
            return Err(HuffmanError::ZeroSymbol {
                symbol: e.symbol.clone(),
            });
        }
        let block_cols = cols.div_ceil(width);
        for (i, &(r, c)) in coords.iter().enumerate() {
            let in_range = (r as usize) < rows && (c as usize) < block_cols;
            let ordered = i == 0 || coords[i - 1] < (r, c);
            if !in_range || !ordered {
                return Err(HuffmanError::BadCoordinate {
                    index: i,
                    row: r,
                    col: c,
                });
            }
        }
        Ok(Self {
            kind,
            rows,
            cols,
            codebook,
            coords,
            payload,
        })
    }

    pub fn kind(&self) -> SymbolKind {
        self.kind
    }

    pub fn width(&self) -> usize {
        self.kind.width()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn coords(&self) -> &[(u32, u32)] {
        &self.coords
    }

    pub fn payload(&self) -> &BitSlice<u8, Msb0> {
        &self.payload
    }

    pub fn payload_bits(&self) -> usize {
        self.payload.len()
    }

    /// Decodes one symbol per coordinate, requiring the payload to end
    /// exactly after the last code.
    pub fn decode(&self) -> Result<Q16Matrix, HuffmanError> {
        let (m, used) = self.decode_prefix(&self.payload)?;
        if used != self.payload.len() {
            return Err(HuffmanError::TrailingBits {
                bits: self.payload.len() - used,
            });
        }
        Ok(m)
    }

    /// Decodes from `bits`, returning the matrix and the number of bits read.
    pub(crate) fn decode_prefix(
        &self,
        bits: &BitSlice<u8, Msb0>,
    ) -> Result<(Q16Matrix, usize), HuffmanError> {
        let width = self.width();
        let mut m = Q16Matrix::zeros(self.rows, self.cols);
        let mut pos = 0usize;
        let max_len = self.codebook.max_len();
        for (i, &(r, bc)) in self.coords.iter().enumerate() {
            let mut code = 0u64;
            let mut len = 0u8;
            let entry = loop {
                if len == max_len || pos >= bits.len() {
                    return Err(HuffmanError::TruncatedCode { coord: i });
                }
                code = (code << 1) | bits[pos] as u64;
                pos += 1;
                len += 1;
                if let Some(e) = self.codebook.resolve(code, len) {
                    break e;
                }
            };
            let c0 = bc as usize * width;
            if entry.symbol[self.cols.saturating_sub(c0).min(width)..]
                .iter()
                .any(|&v| v != 0)
            {
                return Err(HuffmanError::SymbolPadding {
                    coord: i,
                    symbol: entry.symbol.clone(),
                });
            }
            m.write_tile(r as usize, c0, 1, width, &entry.symbol);
        }
        Ok((m, pos))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_matrix_encodes_to_nothing() {
        let e = encode_elementwise(&Q16Matrix::zeros(3, 3));
        assert_eq!(e.payload_bits(), 0);
        assert!(e.coords().is_empty());
        assert!(e.codebook().is_empty());
        assert_eq!(e.decode().unwrap(), Q16Matrix::zeros(3, 3));
    }

    #[test]
    fn single_value_costs_one_bit_each() {
        let m = Q16Matrix::from_vec(2, 5, vec![4; 10]);
        let e = encode_elementwise(&m);
        assert_eq!(e.payload_bits(), 10);
        assert_eq!(e.codebook().len(), 1);
        assert_eq!(e.decode().unwrap(), m);
    }

    #[test]
    fn full_width_vectors_of_identical_rows() {
        let m = Q16Matrix::from_vec(6, 3, [1, -2, 3].repeat(6));
        let e = encode_vectorwise(&m, 3).unwrap();
        assert_eq!(e.codebook().len(), 1);
        assert_eq!(e.payload_bits(), 6);
        assert_eq!(e.decode().unwrap(), m);
    }

    #[test]
    fn width_one_matches_elementwise() {
        let m = Q16Matrix::from_vec(3, 4, vec![0, 1, 2, 0, 1, 1, 0, 5, 0, 0, 2, 1]);
        let a = encode_elementwise(&m);
        let b = encode_vectorwise(&m, 1).unwrap();
        assert_eq!(a.codebook(), b.codebook());
        assert_eq!(a.coords(), b.coords());
        assert_eq!(a.payload(), b.payload());
    }

    #[test]
    fn ragged_vectors_round_trip() {
        let m = Q16Matrix::from_vec(2, 5, vec![1, 2, 0, 0, 7, 1, 2, 1, 2, 0]);
        let e = encode_vectorwise(&m, 2).unwrap();
        assert_eq!(e.coords(), &[(0, 0), (0, 2), (1, 0), (1, 1)]);
        assert_eq!(e.decode().unwrap(), m);
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let m = Q16Matrix::from_vec(1, 4, vec![1, 2, 3, 3]);
        let e = encode_elementwise(&m);
        let mut cut = e.payload().to_bitvec();
        cut.pop();
        let bad = EncodedTensor::from_parts(
            e.kind(),
            1,
            4,
            e.codebook().clone(),
            e.coords().to_vec(),
            cut,
        )
        .unwrap();
        assert!(matches!(bad.decode(), Err(HuffmanError::TruncatedCode { coord: 3 })));

        let mut long = e.payload().to_bitvec();
        long.push(false);
        let bad = EncodedTensor::from_parts(e.kind(), 1, 4, e.codebook().clone(), e.coords().to_vec(), long)
            .unwrap();
        assert_eq!(bad.decode(), Err(HuffmanError::TrailingBits { bits: 1 }));
    }

    #[test]
    fn coordinates_are_validated() {
        let e = encode_elementwise(&Q16Matrix::from_vec(1, 2, vec![1, 1]));
        let swapped = vec![(0, 1), (0, 0)];
        let err = EncodedTensor::from_parts(
            e.kind(),
            1,
            2,
            e.codebook().clone(),
            swapped,
            e.payload().to_bitvec(),
        );
        assert!(matches!(err, Err(HuffmanError::BadCoordinate { index: 1, .. })));
    }
}
