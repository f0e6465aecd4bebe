//! Bit-level size models for every storage format and the compaction ratios
//! built on them.
//!
//! Component names by format:
//!
//! * BSR:  `BSR_idx + BSR_blocks`
//! * SBSR: `S_flag + S_block_pointer + S_idx + S_unique_blocks`
//! * Huffman: `H_Idx + H_dict + payload`, where payload is the sum of
//!   `code_length * frequency` over the dictionary
//!
//! Under [`WidthPolicy::Fixed32`] every index is a 32-bit field and the
//! breakdown also carries the section `header` and byte-alignment `padding`,
//! so the total equals the serialized section length in bits exactly.
//! [`WidthPolicy::Theoretical`] charges each index `ceil(log2(domain))` bits
//! (at least 1) and has no header or padding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::huffman::{serial as huff_serial, EncodedTensor};
use crate::sparse::serial::{BSR_HEADER_WORDS, SBSR_HEADER_WORDS};
use crate::sparse::{BlockSparse, BsrMatrix, SbsrMatrix};
use crate::tensor::{DType, DenseTensor};

/// Bits per stored q16 value.
pub const Q16_BITS: u64 = 16;
/// Bits of the per-entry length field in the Huffman dictionary.
pub const DICT_LENGTH_FIELD_BITS: u64 = 8;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum AccountingError {
    #[error("compaction ratio undefined: compacted size is {0} bits")]
    ZeroDenominator(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthPolicy {
    Theoretical,
    #[default]
    Fixed32,
}

impl std::fmt::Display for WidthPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WidthPolicy::Theoretical => "theoretical",
            WidthPolicy::Fixed32 => "fixed32",
        })
    }
}

impl std::str::FromStr for WidthPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "theoretical" => Ok(WidthPolicy::Theoretical),
            "fixed32" => Ok(WidthPolicy::Fixed32),
            other => Err(format!("unknown width policy `{other}`")),
        }
    }
}

impl WidthPolicy {
    /// Bits for one field holding values in `0..domain`.
    pub fn field_bits(&self, domain: u64) -> u64 {
        match self {
            WidthPolicy::Fixed32 => 32,
            WidthPolicy::Theoretical => log2_ceil(domain).max(1),
        }
    }
}

/// `ceil(log2(n))`, with `log2_ceil(0) == log2_ceil(1) == 0`.
pub fn log2_ceil(n: u64) -> u64 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros() as u64
    }
}

/// What an SBSR repeat reference addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefTarget {
    /// Index into the unique-block store (the implemented layout).
    #[default]
    UniqueIndex,
    /// `(block row, block column)` of the first appearance.
    Coordinate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    #[serde(rename = "dense")]
    Dense,
    #[serde(rename = "BSR_idx")]
    BsrIdx,
    #[serde(rename = "BSR_blocks")]
    BsrBlocks,
    #[serde(rename = "S_flag")]
    SFlag,
    #[serde(rename = "S_block_pointer")]
    SBlockPointer,
    #[serde(rename = "S_idx")]
    SIdx,
    #[serde(rename = "S_unique_blocks")]
    SUniqueBlocks,
    #[serde(rename = "H_Idx")]
    HIdx,
    #[serde(rename = "H_dict")]
    HDict,
    #[serde(rename = "payload")]
    Payload,
    #[serde(rename = "header")]
    Header,
    #[serde(rename = "padding")]
    Padding,
}

impl Component {
    pub fn label(&self) -> &'static str {
        match self {
            Component::Dense => "dense",
            Component::BsrIdx => "BSR_idx",
            Component::BsrBlocks => "BSR_blocks",
            Component::SFlag => "S_flag",
            Component::SBlockPointer => "S_block_pointer",
            Component::SIdx => "S_idx",
            Component::SUniqueBlocks => "S_unique_blocks",
            Component::HIdx => "H_Idx",
            Component::HDict => "H_dict",
            Component::Payload => "payload",
            Component::Header => "header",
            Component::Padding => "padding",
        }
    }
}

impl std::fmt::Display for Component {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Labeled bit counts whose sum is the total size.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SizeBreakdown {
    parts: Vec<(Component, u64)>,
}

impl SizeBreakdown {
    pub fn new(parts: Vec<(Component, u64)>) -> Self {
        Self { parts }
    }

    pub fn total_bits(&self) -> u64 {
        self.parts.iter().map(|(_, b)| b).sum()
    }

    pub fn components(&self) -> &[(Component, u64)] {
        &self.parts
    }

    /// Bits of `c`, zero if absent.
    pub fn get(&self, c: Component) -> u64 {
        self.parts
            .iter()
            .filter(|(k, _)| *k == c)
            .map(|(_, b)| b)
            .sum()
    }

    fn with_storage(mut self, policy: WidthPolicy, header_words: usize, padding: u64) -> Self {
        if policy == WidthPolicy::Fixed32 {
            self.parts.push((Component::Header, header_words as u64 * 32));
            self.parts.push((Component::Padding, padding));
        }
        self
    }
}

/// Bits needed to round `bits` up to a whole byte.
fn pad_to_byte(bits: u64) -> u64 {
    (8 - bits % 8) % 8
}

/// Uncompressed size: every element at its dtype width.
pub fn size_dense(t: &DenseTensor) -> SizeBreakdown {
    let per = match t.dtype() {
        DType::F32 => 32,
        DType::Q16 => Q16_BITS,
    };
    SizeBreakdown::new(vec![(Component::Dense, t.len() as u64 * per)])
}

/// Row-pointer plus column-index bits, shared by BSR and SBSR.
fn index_bits<M: BlockSparse>(m: &M, p: WidthPolicy) -> u64 {
    let n = m.num_blocks() as u64;
    let row_ptr = m.row_ptr().len() as u64 * p.field_bits(n + 1);
    let col_idx = n * p.field_bits(m.block_cols() as u64);
    row_ptr + col_idx
}

pub fn size_bsr(b: &BsrMatrix, p: WidthPolicy) -> SizeBreakdown {
    let blocks = b.num_blocks() as u64 * b.block_len() as u64 * Q16_BITS;
    SizeBreakdown::new(vec![
        (Component::BsrIdx, index_bits(b, p)),
        (Component::BsrBlocks, blocks),
    ])
    .with_storage(p, BSR_HEADER_WORDS, 0)
}

pub fn size_sbsr(s: &SbsrMatrix, p: WidthPolicy) -> SizeBreakdown {
    size_sbsr_with(s, p, RefTarget::UniqueIndex)
}

pub fn size_sbsr_with(s: &SbsrMatrix, p: WidthPolicy, target: RefTarget) -> SizeBreakdown {
    let flags = s.num_blocks() as u64;
    let ref_bits = match target {
        RefTarget::UniqueIndex => p.field_bits(s.num_unique() as u64),
        RefTarget::Coordinate => {
            p.field_bits(s.block_rows() as u64) + p.field_bits(s.block_cols() as u64)
        }
    };
    let unique = s.num_unique() as u64 * s.block_len() as u64 * Q16_BITS;
    SizeBreakdown::new(vec![
        (Component::SFlag, flags),
        (Component::SBlockPointer, s.num_refs() as u64 * ref_bits),
        (Component::SIdx, index_bits(s, p)),
        (Component::SUniqueBlocks, unique),
    ])
    .with_storage(p, SBSR_HEADER_WORDS, pad_to_byte(flags))
}

/// Dictionary cost: per entry the symbol values, its code bits and an 8-bit
/// length field.
pub fn dictionary_bits(e: &EncodedTensor) -> u64 {
    e.codebook()
        .entries()
        .iter()
        .map(|c| c.symbol.len() as u64 * Q16_BITS + c.len as u64 + DICT_LENGTH_FIELD_BITS)
        .sum()
}

pub fn size_huffman(e: &EncodedTensor, p: WidthPolicy) -> SizeBreakdown {
    let coord_domain = e.rows().max(e.cols().div_ceil(e.width())) as u64;
    let idx = e.coords().len() as u64 * p.field_bits(coord_domain) * 2;
    let payload = e.payload_bits() as u64;
    let code_bits: u64 = e.codebook().entries().iter().map(|c| c.len as u64).sum();
    SizeBreakdown::new(vec![
        (Component::HIdx, idx),
        (Component::HDict, dictionary_bits(e)),
        (Component::Payload, payload),
    ])
    .with_storage(
        p,
        huff_serial::HEADER_WORDS,
        pad_to_byte(code_bits) + pad_to_byte(payload),
    )
}

/// Anything with a size that compaction ratios can compare.
pub trait StorageTotal {
    fn total_bits(&self) -> f64;
}

impl StorageTotal for SizeBreakdown {
    fn total_bits(&self) -> f64 {
        SizeBreakdown::total_bits(self) as f64
    }
}

/// A size quoted in bytes, with binary kB/MB constructors.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ByteSize(pub f64);

impl ByteSize {
    pub fn bytes(b: f64) -> Self {
        ByteSize(b)
    }

    pub fn kib(k: f64) -> Self {
        ByteSize(k * 1024.0)
    }

    pub fn mib(m: f64) -> Self {
        ByteSize(m * 1024.0 * 1024.0)
    }

    pub fn as_mib(&self) -> f64 {
        self.0 / (1024.0 * 1024.0)
    }
}

impl StorageTotal for ByteSize {
    fn total_bits(&self) -> f64 {
        self.0 * 8.0
    }
}

pub fn compaction_ratio<A: StorageTotal, B: StorageTotal>(
    baseline: &A,
    compacted: &B,
) -> Result<f64, AccountingError> {
    let d = compacted.total_bits();
    if d <= 0.0 {
        return Err(AccountingError::ZeroDenominator(d));
    }
    Ok(baseline.total_bits() / d)
}

/// BSR size over SBSR size.
pub fn cr_over_bsr<A: StorageTotal, B: StorageTotal>(bsr: &A, sbsr: &B) -> Result<f64, AccountingError> {
    compaction_ratio(bsr, sbsr)
}

/// Element-wise Huffman size over `other` (vector-wise Huffman or SBSR).
pub fn cr_huffman<A: StorageTotal, B: StorageTotal>(elem: &A, other: &B) -> Result<f64, AccountingError> {
    compaction_ratio(elem, other)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub label: String,
    pub component: Component,
    pub bits: u64,
    pub percent: f64,
}

/// One row per component of every item, with its share of the item total.
pub fn breakdown_report(items: &[(String, SizeBreakdown)]) -> Vec<BreakdownRow> {
    items
        .iter()
        .flat_map(|(label, b)| {
            let total = b.total_bits();
            b.components().iter().map(move |&(component, bits)| BreakdownRow {
                label: label.clone(),
                component,
                bits,
                percent: if total == 0 {
                    0.0
                } else {
                    100.0 * bits as f64 / total as f64
                },
            })
        })
        .collect()
}
