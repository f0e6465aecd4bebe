//! Weight tensor data model.
//!
//! A [`DenseTensor`] holds one layer's weights either as raw `float32` values
//! or as 16-bit fixed-point integers sharing a single per-tensor scale
//! (`q16`). Every storage format in this crate works on the 2-D matrix view
//! produced by [`flatten_to_matrix`]: convolution kernels become a matrix
//! whose rows are kernel rows, fully connected layers pass through.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Q16Matrix;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum TensorError {
    #[error("tensor `{name}`: shape {shape:?} has a zero extent")]
    ZeroExtent { name: String, shape: Vec<usize> },

    #[error("tensor `{name}`: shape {shape:?} holds {expected} elements but {actual} values were given")]
    LengthMismatch {
        name: String,
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },

    #[error("tensor `{name}`: q16 scale must be finite and positive, got {scale}")]
    BadScale { name: String, scale: f32 },

    #[error("tensor `{name}`: a matrix view needs at least 2 dimensions, shape is {shape:?}")]
    NotAMatrix { name: String, shape: Vec<usize> },

    #[error("tensor `{name}`: expected dtype {expected}, found {found}")]
    WrongDtype {
        name: String,
        expected: DType,
        found: DType,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DType {
    #[serde(rename = "float32")]
    F32,
    #[serde(rename = "q16")]
    Q16,
}

impl std::fmt::Display for DType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DType::F32 => "float32",
            DType::Q16 => "q16",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    #[serde(rename = "conv")]
    Convolutional,
    #[serde(rename = "fc")]
    FullyConnected,
}

impl std::fmt::Display for LayerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LayerKind::Convolutional => "conv",
            LayerKind::FullyConnected => "fc",
        })
    }
}

impl std::str::FromStr for LayerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "conv" => Ok(LayerKind::Convolutional),
            "fc" => Ok(LayerKind::FullyConnected),
            other => Err(format!("unknown layer kind `{other}`, expected `conv` or `fc`")),
        }
    }
}

/// Element storage. `Q16` values are grid indices: the real weight is
/// `value * scale`, so grid membership holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    Q16 { values: Vec<i16>, scale: f32 },
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::Q16 { values, .. } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::Q16 { .. } => DType::Q16,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DenseTensor {
    name: String,
    shape: Vec<usize>,
    layer_kind: LayerKind,
    data: TensorData,
}

impl DenseTensor {
    pub fn new(
        name: impl Into<String>,
        shape: Vec<usize>,
        layer_kind: LayerKind,
        data: TensorData,
    ) -> Result<Self, TensorError> {
        let name = name.into();
        if shape.contains(&0) {
            return Err(TensorError::ZeroExtent { name, shape });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::LengthMismatch {
                name,
                shape,
                expected,
                actual: data.len(),
            });
        }
        if let TensorData::Q16 { scale, .. } = data {
            if !(scale.is_finite() && scale > 0.0) {
                return Err(TensorError::BadScale { name, scale });
            }
        }
        Ok(Self {
            name,
            shape,
            layer_kind,
            data,
        })
    }

    pub fn f32(
        name: impl Into<String>,
        shape: Vec<usize>,
        layer_kind: LayerKind,
        values: Vec<f32>,
    ) -> Result<Self, TensorError> {
        Self::new(name, shape, layer_kind, TensorData::F32(values))
    }

    pub fn q16(
        name: impl Into<String>,
        shape: Vec<usize>,
        layer_kind: LayerKind,
        values: Vec<i16>,
        scale: f32,
    ) -> Result<Self, TensorError> {
        Self::new(name, shape, layer_kind, TensorData::Q16 { values, scale })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn layer_kind(&self) -> LayerKind {
        self.layer_kind
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn into_data(self) -> TensorData {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Raw float values, or an error for q16 tensors.
    pub fn f32_values(&self) -> Result<&[f32], TensorError> {
        match &self.data {
            TensorData::F32(v) => Ok(v),
            TensorData::Q16 { .. } => Err(self.wrong_dtype(DType::F32)),
        }
    }

    /// Grid indices and scale, or an error for float tensors.
    pub fn q16_values(&self) -> Result<(&[i16], f32), TensorError> {
        match &self.data {
            TensorData::Q16 { values, scale } => Ok((values, *scale)),
            TensorData::F32(_) => Err(self.wrong_dtype(DType::Q16)),
        }
    }

    /// Real-valued view of the weights (`q * scale` for q16).
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::Q16 { values, scale } => {
                values.iter().map(|&q| q as f64 * *scale as f64).collect()
            }
        }
    }

    pub fn count_zeros(&self) -> usize {
        match &self.data {
            TensorData::F32(v) => v.iter().filter(|x| **x == 0.0).count(),
            TensorData::Q16 { values, .. } => values.iter().filter(|x| **x == 0).count(),
        }
    }

    pub fn sparsity(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.count_zeros() as f64 / self.len() as f64
    }

    /// Same name, shape and kind with different element storage.
    pub fn with_data(&self, data: TensorData) -> Result<Self, TensorError> {
        Self::new(self.name.clone(), self.shape.clone(), self.layer_kind, data)
    }

    /// Reinterprets the element array under a new shape and kind.
    pub fn reshaped(self, shape: Vec<usize>, layer_kind: LayerKind) -> Result<Self, TensorError> {
        Self::new(self.name, shape, layer_kind, self.data)
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Matrix view of a q16 tensor. See [`flatten_to_matrix`].
    pub fn to_q16_matrix(&self) -> Result<Q16Matrix, TensorError> {
        let (rows, cols) = flatten_to_matrix(self)?;
        let (values, _) = self.q16_values()?;
        Ok(Q16Matrix::from_vec(rows, cols, values.to_vec()))
    }

    fn wrong_dtype(&self, expected: DType) -> TensorError {
        TensorError::WrongDtype {
            name: self.name.clone(),
            expected,
            found: self.dtype(),
        }
    }
}

impl PartialEq for DenseTensor {
    /// Bitwise equality on values so `-0.0 != 0.0` and NaN payloads compare.
    fn eq(&self, other: &Self) -> bool {
        if self.name != other.name || self.shape != other.shape || self.layer_kind != other.layer_kind {
            return false;
        }
        match (&self.data, &other.data) {
            (TensorData::F32(a), TensorData::F32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (
                TensorData::Q16 { values: a, scale: sa },
                TensorData::Q16 { values: b, scale: sb },
            ) => a == b && sa.to_bits() == sb.to_bits(),
            _ => false,
        }
    }
}

/// Rows and columns of the 2-D view of `t`, in row-major element order.
///
/// Convolution tensors `[.., kw]` become `product(leading dims) x kw`, so every
/// matrix row is one kernel row. Fully connected tensors keep their first
/// extent as rows and fold the remainder into columns.
pub fn flatten_to_matrix(t: &DenseTensor) -> Result<(usize, usize), TensorError> {
    let shape = t.shape();
    if shape.len() < 2 {
        return Err(TensorError::NotAMatrix {
            name: t.name().to_string(),
            shape: shape.to_vec(),
        });
    }
    Ok(match t.layer_kind() {
        LayerKind::Convolutional => {
            let kw = shape[shape.len() - 1];
            (t.len() / kw, kw)
        }
        LayerKind::FullyConnected => (shape[0], t.len() / shape[0]),
    })
}
