//! Byte layout of an encoded-tensor section (little-endian):
//!
//! ```text
//! u32 kind                      0 = element, 1 = vector
//! u32 rows, cols, width, n_symbols, n_coords
//! i16 symbols[n_symbols * width]  canonical (length, symbol) order
//! u8  lengths[n_symbols]
//! u8  codes[ceil(sum(lengths) / 8)]   each symbol's code, MSB first
//! u32 coords[2 * n_coords]        (row, block column) pairs
//! u8  payload[..]                 concatenated codes, MSB first, zero-padded
//! ```
//!
//! The payload length is implied: decoding stops after `n_coords` codes and
//! fewer than 8 zero padding bits may follow.

use bitvec::prelude::*;

use super::{Codebook, EncodedTensor, HuffmanError, SymbolKind};
use crate::wire::{Reader, Truncated, Writer};

pub const HEADER_WORDS: usize = 6;

impl From<Truncated> for HuffmanError {
    fn from(t: Truncated) -> Self {
        HuffmanError::Truncated {
            offset: t.offset,
            needed: t.needed,
            available: t.available,
        }
    }
}

fn u32_of(v: usize) -> u32 {
    u32::try_from(v).expect("encoded tensor count exceeds 32 bits")
}

/// Code bits of every dictionary entry, concatenated in canonical order.
pub fn dictionary_code_bits(cb: &Codebook) -> BitVec<u8, Msb0> {
    let mut bits = BitVec::new();
    for e in cb.entries() {
        for i in (0..e.len).rev() {
            bits.push((e.code >> i) & 1 == 1);
        }
    }
    bits
}

pub fn write_encoded(e: &EncodedTensor) -> Vec<u8> {
    let cb = e.codebook();
    let mut w = Writer::new();
    w.u32(match e.kind() {
        SymbolKind::Element => 0,
        SymbolKind::Vector(_) => 1,
    });
    w.u32(u32_of(e.rows()));
    w.u32(u32_of(e.cols()));
    w.u32(u32_of(e.width()));
    w.u32(u32_of(cb.len()));
    w.u32(u32_of(e.coords().len()));
    for entry in cb.entries() {
        w.i16s(&entry.symbol);
    }
    w.bytes(&cb.entries().iter().map(|e| e.len).collect::<Vec<_>>());
    w.bits(&dictionary_code_bits(cb));
    for &(r, c) in e.coords() {
        w.u32(r);
        w.u32(c);
    }
    w.bits(e.payload());
    w.finish()
}

pub fn read_encoded(bytes: &[u8]) -> Result<EncodedTensor, HuffmanError> {
    let mut r = Reader::new(bytes);
    let tag = r.u32()?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let width = r.u32()? as usize;
    let kind = match tag {
        0 if width == 1 => SymbolKind::Element,
        0 => {
            return Err(HuffmanError::MixedWidth {
                expected: 1,
                found: width,
            })
        }
        1 if width > 0 => SymbolKind::Vector(width),
        1 => return Err(HuffmanError::ZeroWidth),
        t => return Err(HuffmanError::UnknownKind(t)),
    };
    let n_symbols = r.u32()? as usize;
    let n_coords = r.u32()? as usize;
    let values = r.i16s(n_symbols.saturating_mul(width))?;
    let lengths = r.take(n_symbols)?.to_vec();
    let symbols: Vec<(Vec<i16>, u8)> = values
        .chunks_exact(width)
        .map(<[i16]>::to_vec)
        .zip(lengths.iter().copied())
        .collect();
    let codebook = Codebook::from_lengths(width, symbols)?;
    if codebook.entries().iter().map(|e| e.len).ne(lengths.iter().copied()) {
        // lengths must already be listed in canonical order
        return Err(HuffmanError::CodeMismatch);
    }
    let code_bits: usize = lengths.iter().map(|&l| l as usize).sum();
    let (stored, clean) = r.bits(code_bits)?;
    if !clean {
        return Err(HuffmanError::Padding);
    }
    if stored != dictionary_code_bits(&codebook) {
        return Err(HuffmanError::CodeMismatch);
    }
    let flat = r.u32s(n_coords.saturating_mul(2))?;
    let coords = flat.chunks_exact(2).map(|p| (p[0], p[1])).collect();
    let rest = r.take(r.remaining())?;
    let bits: &BitSlice<u8, Msb0> = rest.view_bits();

    let mut e = EncodedTensor::from_parts(kind, rows, cols, codebook, coords, BitVec::new())?;
    let (_, used) = e.decode_prefix(bits)?;
    if rest.len() != used.div_ceil(8) {
        return Err(HuffmanError::TrailingBits {
            bits: bits.len() - used,
        });
    }
    if bits[used..].any() {
        return Err(HuffmanError::Padding);
    }
    e = EncodedTensor::from_parts(
        e.kind(),
        e.rows(),
        e.cols(),
        e.codebook().clone(),
        e.coords().to_vec(),
        bits[..used].to_bitvec(),
    )?;
    Ok(e)
}
