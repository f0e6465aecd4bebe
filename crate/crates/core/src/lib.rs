//! Weight-tensor compaction: pruning, 16-bit quantization, block sparse
//! formats with shared blocks, Huffman coding, and exact size accounting.

pub mod accounting;
pub mod container;
pub mod huffman;
pub mod matrix;
pub mod par;
pub mod reduce;
pub mod report;
pub mod sparse;
pub mod sweep;
pub mod synth;
pub mod tensor;
mod wire;

pub use matrix::Q16Matrix;
pub use par::Exec;
pub use tensor::{flatten_to_matrix, DType, DenseTensor, LayerKind, TensorData, TensorError};
