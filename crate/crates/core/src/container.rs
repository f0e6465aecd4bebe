//! The WTC1 tensor container.
//!
//! ```text
//! b"WTC1"
//! u64 LE   manifest length in bytes
//! [u8]     UTF-8 JSON manifest
//! [u8]     payload; every tensor's bytes at `offset` (relative to the
//!          payload start) with `length` bytes
//! ```
//!
//! Manifest:
//!
//! ```json
//! {"version":1,"endianness":"little","tensors":[
//!   {"name":"ip1","shape":[500,800],"dtype":"q16","layer_kind":"fc",
//!    "scale":0.00390625,"offset":0,"length":800000}]}
//! ```
//!
//! `dtype` is one of `float32` (raw f32 bits), `q16` (raw i16 plus `scale`),
//! or a packed form of a q16 tensor: `bsr`, `sbsr`, `ehuff`, `vhuff`. Packed
//! sections use the layouts in [`crate::sparse::serial`] and
//! [`crate::huffman::serial`] over the tensor's matrix view and load back as
//! q16 tensors.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::huffman::{self, serial as huff_serial, EncodedTensor, SymbolKind};
use crate::sparse::{self, serial as sparse_serial, BlockSparse};
use crate::tensor::{flatten_to_matrix, DenseTensor, LayerKind, TensorData, TensorError};
use crate::Q16Matrix;

pub const MAGIC: &[u8; 4] = b"WTC1";
pub const VERSION: u32 = 1;
/// Magic plus the manifest length field.
pub const PREAMBLE_LEN: usize = 12;

#[derive(Error, Debug)]
pub enum ContainerError {
    #[error("{path}: {cause}")]
    Io { path: String, cause: std::io::Error },

    #[error("bad magic {found:?} at byte 0, expected \"WTC1\"")]
    BadMagic { found: Vec<u8> },

    #[error("file is {len} bytes, too short for the {PREAMBLE_LEN}-byte preamble")]
    ShortPreamble { len: usize },

    #[error("manifest length {declared} at byte 4 exceeds the {available} bytes after the preamble")]
    ManifestLength { declared: u64, available: usize },

    #[error("malformed manifest at byte {position}: {message}")]
    Manifest { position: usize, message: String },

    #[error("unsupported container version {0}")]
    Version(u32),

    #[error("unsupported endianness `{0}`")]
    Endianness(String),

    #[error("tensor `{name}` (manifest entry {index}): unknown dtype `{dtype}`")]
    UnknownDtype {
        name: String,
        index: usize,
        dtype: String,
    },

    #[error("tensor name `{0}` appears more than once")]
    DuplicateName(String),

    #[error("tensor `{name}`: bytes {start}..{end} exceed the file length {file_len}")]
    OutOfBounds {
        name: String,
        start: u64,
        end: u64,
        file_len: usize,
    },

    #[error("tensor `{name}`: bytes {start}..{end} overlap tensor `{other}`")]
    Overlap {
        name: String,
        other: String,
        start: u64,
        end: u64,
    },

    #[error("tensor `{name}` at byte {position}: shape {shape:?} needs {expected} bytes, entry has {actual}")]
    PayloadLength {
        name: String,
        position: u64,
        shape: Vec<usize>,
        expected: u64,
        actual: u64,
    },

    #[error("tensor `{name}`: dtype {dtype} needs a positive finite scale")]
    MissingScale { name: String, dtype: String },

    #[error("tensor `{name}` at byte {position}: {message}")]
    Section {
        name: String,
        position: u64,
        message: String,
    },

    #[error("tensor `{name}`: packed encodings need a q16 tensor")]
    NotQuantized { name: String },

    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// How a tensor's bytes are laid out in the container.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Encoding {
    /// `float32` or `q16` values as-is.
    #[default]
    Raw,
    Bsr { block_w: usize },
    Sbsr { block_w: usize },
    ElemHuffman,
    VecHuffman { width: usize },
}

impl Encoding {
    fn dtype_name(&self, t: &DenseTensor) -> &'static str {
        match self {
            Encoding::Raw => match t.dtype() {
                crate::DType::F32 => "float32",
                crate::DType::Q16 => "q16",
            },
            Encoding::Bsr { .. } => "bsr",
            Encoding::Sbsr { .. } => "sbsr",
            Encoding::ElemHuffman => "ehuff",
            Encoding::VecHuffman { .. } => "vhuff",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub layer_kind: LayerKind,
    /// Grid step for q16 and packed dtypes. Written as f64 so the f32 value
    /// survives the decimal round trip exactly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    pub offset: u64,
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub endianness: String,
    pub tensors: Vec<ManifestEntry>,
}

/// Serializes `tensors` raw.
pub fn write_container(tensors: &[DenseTensor]) -> Result<Vec<u8>, ContainerError> {
    let entries: Vec<_> = tensors.iter().map(|t| (t, Encoding::Raw)).collect();
    write_container_with(&entries)
}

/// Serializes each tensor under its chosen encoding.
pub fn write_container_with(entries: &[(&DenseTensor, Encoding)]) -> Result<Vec<u8>, ContainerError> {
    let mut seen = HashSet::new();
    for (t, _) in entries {
        if !seen.insert(t.name()) {
            return Err(ContainerError::DuplicateName(t.name().to_string()));
        }
    }
    let mut payload = Vec::new();
    let mut tensors = Vec::with_capacity(entries.len());
    for &(t, enc) in entries {
        let bytes = encode_tensor(t, enc)?;
        let scale = match t.data() {
            TensorData::Q16 { scale, .. } => Some(*scale as f64),
            TensorData::F32(_) => None,
        };
        tensors.push(ManifestEntry {
            name: t.name().to_string(),
            shape: t.shape().to_vec(),
            dtype: enc.dtype_name(t).to_string(),
            layer_kind: t.layer_kind(),
            scale,
            offset: payload.len() as u64,
            length: bytes.len() as u64,
        });
        payload.extend_from_slice(&bytes);
    }
    let manifest = Manifest {
        version: VERSION,
        endianness: "little".to_string(),
        tensors,
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut out = Vec::with_capacity(PREAMBLE_LEN + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

fn encode_tensor(t: &DenseTensor, enc: Encoding) -> Result<Vec<u8>, ContainerError> {
    let packed = |t: &DenseTensor| -> Result<Q16Matrix, ContainerError> {
        if t.q16_values().is_err() {
            return Err(ContainerError::NotQuantized {
                name: t.name().to_string(),
            });
        }
        Ok(t.to_q16_matrix()?)
    };
    let section = |e: String| ContainerError::Section {
        name: t.name().to_string(),
        position: 0,
        message: e,
    };
    Ok(match enc {
        Encoding::Raw => match t.data() {
            TensorData::F32(v) => v.iter().flat_map(|x| x.to_bits().to_le_bytes()).collect(),
            TensorData::Q16 { values, .. } => values.iter().flat_map(|x| x.to_le_bytes()).collect(),
        },
        Encoding::Bsr { block_w } => {
            let b = sparse::to_bsr(&packed(t)?, 1, block_w).map_err(|e| section(e.to_string()))?;
            sparse_serial::write_bsr(&b)
        }
        Encoding::Sbsr { block_w } => {
            let s = sparse::to_sbsr(&packed(t)?, 1, block_w).map_err(|e| section(e.to_string()))?;
            sparse_serial::write_sbsr(&s)
        }
        Encoding::ElemHuffman => huff_serial::write_encoded(&huffman::encode_elementwise(&packed(t)?)),
        Encoding::VecHuffman { width } => {
            let e = huffman::encode_vectorwise(&packed(t)?, width).map_err(|e| section(e.to_string()))?;
            huff_serial::write_encoded(&e)
        }
    })
}

pub fn save_container(tensors: &[DenseTensor], path: &Path) -> Result<(), ContainerError> {
    write_file(path, &write_container(tensors)?)
}

pub fn save_container_with(
    entries: &[(&DenseTensor, Encoding)],
    path: &Path,
) -> Result<(), ContainerError> {
    write_file(path, &write_container_with(entries)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ContainerError> {
    fs::write(path, bytes).map_err(|cause| ContainerError::Io {
        path: path.display().to_string(),
        cause,
    })
}

pub fn load_container(path: &Path) -> Result<Vec<DenseTensor>, ContainerError> {
    let bytes = fs::read(path).map_err(|cause| ContainerError::Io {
        path: path.display().to_string(),
        cause,
    })?;
    read_container(&bytes)
}

/// Parses and validates the preamble and manifest, returning the manifest
/// and the absolute byte position where the payload starts.
pub fn read_manifest(bytes: &[u8]) -> Result<(Manifest, usize), ContainerError> {
    if bytes.len() < PREAMBLE_LEN {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(ContainerError::BadMagic {
                found: bytes[..4].to_vec(),
            });
        }
        return Err(ContainerError::ShortPreamble { len: bytes.len() });
    }
    if &bytes[..4] != MAGIC {
        return Err(ContainerError::BadMagic {
            found: bytes[..4].to_vec(),
        });
    }
    let declared = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
    let available = bytes.len() - PREAMBLE_LEN;
    if declared > available as u64 {
        return Err(ContainerError::ManifestLength {
            declared,
            available,
        });
    }
    let payload_start = PREAMBLE_LEN + declared as usize;
    let text = &bytes[PREAMBLE_LEN..payload_start];
    let manifest: Manifest = serde_json::from_slice(text).map_err(|e| ContainerError::Manifest {
        position: PREAMBLE_LEN + json_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    if manifest.version != VERSION {
        return Err(ContainerError::Version(manifest.version));
    }
    if manifest.endianness != "little" {
        return Err(ContainerError::Endianness(manifest.endianness));
    }
    check_layout(&manifest, bytes.len() - payload_start, payload_start)?;
    Ok((manifest, payload_start))
}

/// Byte offset of a serde_json (1-based line, column) position.
fn json_offset(text: &[u8], line: usize, column: usize) -> usize {
    let line_start: usize = text
        .split(|&b| b == b'\n')
        .take(line.saturating_sub(1))
        .map(|l| l.len() + 1)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

fn check_layout(m: &Manifest, payload_len: usize, payload_start: usize) -> Result<(), ContainerError> {
    let mut seen = HashSet::new();
    let mut spans = Vec::with_capacity(m.tensors.len());
    for e in &m.tensors {
        if !seen.insert(e.name.as_str()) {
            return Err(ContainerError::DuplicateName(e.name.clone()));
        }
        let start = payload_start as u64 + e.offset;
        let end = e.offset.checked_add(e.length).filter(|&end| end <= payload_len as u64);
        match end {
            Some(_) => spans.push((e.offset, e.offset + e.length, e.name.as_str())),
            None => {
                return Err(ContainerError::OutOfBounds {
                    name: e.name.clone(),
                    start,
                    end: start.saturating_add(e.length),
                    file_len: payload_start + payload_len,
                })
            }
        }
    }
    spans.sort();
    for w in spans.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(ContainerError::Overlap {
                name: w[1].2.to_string(),
                other: w[0].2.to_string(),
                start: payload_start as u64 + w[1].0,
                end: payload_start as u64 + w[1].1,
            });
        }
    }
    Ok(())
}

pub fn read_container(bytes: &[u8]) -> Result<Vec<DenseTensor>, ContainerError> {
    let (manifest, payload_start) = read_manifest(bytes)?;
    manifest
        .tensors
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let start = payload_start + e.offset as usize;
            decode_entry(i, e, &bytes[start..start + e.length as usize], start as u64)
        })
        .collect()
}

fn decode_entry(
    index: usize,
    e: &ManifestEntry,
    data: &[u8],
    position: u64,
) -> Result<DenseTensor, ContainerError> {
    let name = e.name.clone();
    let count: usize = e.shape.iter().product();
    let scale = || -> Result<f32, ContainerError> {
        e.scale
            .map(|s| s as f32)
            .filter(|s| s.is_finite() && *s > 0.0)
            .ok_or_else(|| ContainerError::MissingScale {
                name: name.clone(),
                dtype: e.dtype.clone(),
            })
    };
    let raw_len = |width: u64| -> Result<(), ContainerError> {
        let expected = count as u64 * width;
        if expected != e.length {
            return Err(ContainerError::PayloadLength {
                name: name.clone(),
                position,
                shape: e.shape.clone(),
                expected,
                actual: e.length,
            });
        }
        Ok(())
    };
    let section = |message: String| ContainerError::Section {
        name: name.clone(),
        position,
        message,
    };

    let matrix = match e.dtype.as_str() {
        "float32" => {
            raw_len(4)?;
            let values = data
                .chunks_exact(4)
                .map(|c| f32::from_bits(u32::from_le_bytes(c.try_into().unwrap())))
                .collect();
            return Ok(DenseTensor::f32(name, e.shape.clone(), e.layer_kind, values)?);
        }
        "q16" => {
            raw_len(2)?;
            let values = data
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let scale = scale()?;
            return Ok(DenseTensor::q16(name, e.shape.clone(), e.layer_kind, values, scale)?);
        }
        "bsr" => sparse_serial::read_bsr(data).map(|b| b.decode()),
        "sbsr" => sparse_serial::read_sbsr(data).map(|s| s.decode()),
        "ehuff" | "vhuff" => {
            let enc = huff_serial::read_encoded(data).map_err(|err| section(err.to_string()))?;
            check_kind(&enc, &e.dtype).map_err(section)?;
            Ok(enc.decode().map_err(|err| section(err.to_string()))?)
        }
        other => {
            return Err(ContainerError::UnknownDtype {
                name,
                index,
                dtype: other.to_string(),
            })
        }
    }
    .map_err(|err: sparse::FormatError| section(err.to_string()))?;

    let scale = scale()?;
    let probe = DenseTensor::q16(name.clone(), e.shape.clone(), e.layer_kind, vec![0; count], scale)?;
    let (rows, cols) = flatten_to_matrix(&probe)?;
    if (rows, cols) != (matrix.rows(), matrix.cols()) {
        return Err(section(format!(
            "section holds a {}x{} matrix but shape {:?} views as {rows}x{cols}",
            matrix.rows(),
            matrix.cols(),
            e.shape
        )));
    }
    Ok(probe.with_data(TensorData::Q16 {
        values: matrix.into_vec(),
        scale,
    })?)
}

fn check_kind(enc: &EncodedTensor, dtype: &str) -> Result<(), String> {
    match (enc.kind(), dtype) {
        (SymbolKind::Element, "ehuff") | (SymbolKind::Vector(_), "vhuff") => Ok(()),
        (kind, _) => Err(format!("section holds {kind:?} symbols but dtype is {dtype}")),
    }
}
