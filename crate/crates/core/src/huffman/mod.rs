//! Element-wise and vector-wise Huffman coding of sparse q16 matrices.
//!
//! Only nonzero elements (or nonzero `1 x width` vectors) are coded; each one
//! is addressed by an explicit `(row, col)` coordinate and zeros are restored
//! positionally on decode.

mod codebook;
mod codec;
pub mod serial;

pub use codebook::{build_codebook, CodeEntry, Codebook, MAX_CODE_LEN};
pub use codec::{
    encode_elementwise, encode_vectorwise, symbol_histogram, EncodedTensor, SymbolKind,
};

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum HuffmanError {
    #[error("cannot build a code for an empty alphabet")]
    EmptyAlphabet,

    #[error("symbol width {found} differs from {expected}")]
    MixedWidth { expected: usize, found: usize },

    #[error("symbol {symbol:?} has zero frequency")]
    ZeroFrequency { symbol: Vec<i16> },

    #[error("symbol {symbol:?} listed twice")]
    DuplicateSymbol { symbol: Vec<i16> },

    #[error("code length {len} outside 1..=64")]
    BadLength { len: u8 },

    #[error("code lengths do not form a complete prefix code")]
    NotComplete,

    #[error("vector width must be positive")]
    ZeroWidth,

    #[error("payload ends inside the code for coordinate {coord}")]
    TruncatedCode { coord: usize },

    #[error("payload has {bits} bits left after the last coordinate")]
    TrailingBits { bits: usize },

    #[error("coordinate {index} ({row}, {col}) out of range or out of order")]
    BadCoordinate { index: usize, row: u32, col: u32 },

    #[error("symbol {symbol:?} is all zero")]
    ZeroSymbol { symbol: Vec<i16> },

    #[error("symbol {symbol:?} at coordinate {coord} spills nonzero values past the last column")]
    SymbolPadding { coord: usize, symbol: Vec<i16> },

    #[error("stored code bits disagree with the canonical code for the listed lengths")]
    CodeMismatch,

    #[error("section truncated: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("bit padding is not zero")]
    Padding,

    #[error("unknown symbol kind tag {0}")]
    UnknownKind(u32),
}
