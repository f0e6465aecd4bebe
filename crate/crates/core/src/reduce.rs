//! Magnitude pruning and fixed-point quantization.
//!
//! Quantization maps each float onto an integer multiple of a per-tensor
//! `scale`. All rounding decisions are made with exact comparisons in `f64`
//! (an `f32` value and an `i16 x f32` product are both exactly representable
//! there), so the error bounds below hold bit-for-bit, not just up to the
//! rounding of `value / scale`:
//!
//! * nearest (ties to even): `|q * scale - v| <= scale / 2`
//! * truncate (toward zero): `|q * scale - v| < scale`, `|q * scale| <= |v|`

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{DenseTensor, TensorData, TensorError};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ReduceError {
    #[error("pruning threshold must be finite and non-negative, got {0}")]
    BadThreshold(f32),

    #[error("target sparsity must lie in [0, 1], got {0}")]
    BadSparsity(f64),

    #[error("quantization bits must lie in 2..=16, got {0}")]
    BadBits(u32),

    #[error("quantization scale must be finite and positive, got {0}")]
    BadScale(f64),

    #[error("tensor `{name}`: {count} value(s) overflow the {bits}-bit grid with scale {scale}, first indices {indices:?}")]
    Overflow {
        name: String,
        bits: u32,
        scale: f32,
        count: usize,
        indices: Vec<usize>,
    },

    #[error("tensor `{name}`: value at index {index} is not finite")]
    NonFinite { name: String, index: usize },

    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Pruning rule. The enum makes the two modes mutually exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneSpec {
    /// Zero every element whose magnitude is strictly below the threshold.
    Threshold(f32),
    /// Zero the `ceil(s * n)` smallest-magnitude elements.
    TargetSparsity(f64),
}

impl PruneSpec {
    pub fn threshold(t: f32) -> Result<Self, ReduceError> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(ReduceError::BadThreshold(t));
        }
        Ok(PruneSpec::Threshold(t))
    }

    pub fn target_sparsity(s: f64) -> Result<Self, ReduceError> {
        if !(0.0..=1.0).contains(&s) {
            return Err(ReduceError::BadSparsity(s));
        }
        Ok(PruneSpec::TargetSparsity(s))
    }

    pub fn validate(&self) -> Result<(), ReduceError> {
        match *self {
            PruneSpec::Threshold(t) => Self::threshold(t).map(drop),
            PruneSpec::TargetSparsity(s) => Self::target_sparsity(s).map(drop),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    Truncate,
    Nearest,
}

impl std::fmt::Display for Rounding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Rounding::Truncate => "truncate",
            Rounding::Nearest => "nearest",
        })
    }
}

impl std::str::FromStr for Rounding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "truncate" => Ok(Rounding::Truncate),
            "nearest" => Ok(Rounding::Nearest),
            other => Err(format!("unknown rounding mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantGrid {
    bits: u32,
    scale: f32,
    rounding: Rounding,
}

impl QuantGrid {
    pub fn new(bits: u32, scale: f32, rounding: Rounding) -> Result<Self, ReduceError> {
        if !(2..=16).contains(&bits) {
            return Err(ReduceError::BadBits(bits));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(ReduceError::BadScale(scale as f64));
        }
        Ok(Self {
            bits,
            scale,
            rounding,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn rounding(&self) -> Rounding {
        self.rounding
    }

    pub fn with_rounding(self, rounding: Rounding) -> Self {
        Self { rounding, ..self }
    }

    /// Smallest grid index, `-(2^(bits-1))`.
    pub fn min_index(&self) -> i64 {
        -(1i64 << (self.bits - 1))
    }

    /// Largest grid index, `2^(bits-1) - 1`.
    pub fn max_index(&self) -> i64 {
        (1i64 << (self.bits - 1)) - 1
    }

    /// Grid index for `v`, or `None` if it falls outside the representable range.
    pub fn index_of(&self, v: f32) -> Option<i64> {
        let v = v as f64;
        let s = self.scale as f64;
        // Anything this far out overflows every supported width; the bound
        // also keeps the exact search below within i64.
        if !v.is_finite() || (v / s).abs() > 1e6 {
            return None;
        }
        let q = match self.rounding {
            Rounding::Truncate => {
                if v >= 0.0 {
                    floor_index(v, s)
                } else {
                    -floor_index(-v, s)
                }
            }
            Rounding::Nearest => {
                let lo = floor_index(v, s);
                // Compare v against the midpoint (lo + 0.5) * s as 2v vs (2lo + 1) s.
                let twice_v = 2.0 * v;
                let mid = (2 * lo + 1) as f64 * s;
                if twice_v < mid {
                    lo
                } else if twice_v > mid {
                    lo + 1
                } else if lo % 2 == 0 {
                    lo
                } else {
                    lo + 1
                }
            }
        };
        (self.min_index()..=self.max_index()).contains(&q).then_some(q)
    }

    /// Real value of grid index `q`.
    pub fn value_of(&self, q: i64) -> f64 {
        q as f64 * self.scale as f64
    }
}

/// Exact `floor(v / s)`: largest `q` with `q * s <= v`.
fn floor_index(v: f64, s: f64) -> i64 {
    let mut q = (v / s).floor() as i64;
    while q as f64 * s > v {
        q -= 1;
    }
    while (q + 1) as f64 * s <= v {
        q += 1;
    }
    q
}

/// Applies `spec` to a float32 tensor.
pub fn prune(t: &DenseTensor, spec: PruneSpec) -> Result<DenseTensor, ReduceError> {
    spec.validate()?;
    let values = t.f32_values()?;
    let out = match spec {
        PruneSpec::Threshold(th) => values
            .iter()
            .map(|&v| if v.abs() < th { 0.0 } else { v })
            .collect(),
        PruneSpec::TargetSparsity(s) => {
            let mut out = values.to_vec();
            for i in smallest_magnitudes(values, pruned_count(s, values.len())) {
                out[i] = 0.0;
            }
            out
        }
    };
    Ok(t.with_data(TensorData::F32(out))?)
}

/// Number of elements a target sparsity removes: `ceil(s * n)`, with a tiny
/// slack so products like `0.6 * 5` that land a hair above an integer do not
/// round up an extra element.
pub fn pruned_count(s: f64, n: usize) -> usize {
    let k = (s * n as f64 - 1e-9).ceil();
    (k.max(0.0) as usize).min(n)
}

/// Flat indices of the `k` smallest magnitudes, ties to the lower index.
fn smallest_magnitudes(values: &[f32], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    let key = |i: &usize| (values[*i].abs().to_bits(), *i);
    if k < order.len() {
        order.select_nth_unstable_by_key(k, key);
    }
    order.truncate(k);
    order
}

/// Magnitude below which a target-sparsity prune zeroes values: the largest
/// pruned magnitude, or `0` when nothing is pruned.
pub fn effective_threshold(t: &DenseTensor, spec: PruneSpec) -> Result<f32, ReduceError> {
    spec.validate()?;
    match spec {
        PruneSpec::Threshold(th) => Ok(th),
        PruneSpec::TargetSparsity(s) => {
            let values = t.f32_values()?;
            Ok(smallest_magnitudes(values, pruned_count(s, values.len()))
                .into_iter()
                .map(|i| values[i].abs())
                .fold(0.0, f32::max))
        }
    }
}

/// Outcome counters of a quantization pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QuantStats {
    /// Nonzero inputs whose grid index is zero (magnitude under one step).
    pub zeroed_nonzeros: usize,
}

/// Maps a tensor onto `grid`. Float inputs are rounded per the grid's mode;
/// q16 inputs already on a grid with the same scale pass through unchanged.
pub fn quantize(t: &DenseTensor, grid: &QuantGrid) -> Result<DenseTensor, ReduceError> {
    quantize_with_stats(t, grid).map(|(q, _)| q)
}

pub fn quantize_with_stats(
    t: &DenseTensor,
    grid: &QuantGrid,
) -> Result<(DenseTensor, QuantStats), ReduceError> {
    let floats: Vec<f32> = match t.data() {
        TensorData::Q16 { values, scale } if scale.to_bits() == grid.scale().to_bits() => {
            let range = grid.min_index()..=grid.max_index();
            let bad: Vec<usize> = values
                .iter()
                .enumerate()
                .filter(|(_, &q)| !range.contains(&(q as i64)))
                .map(|(i, _)| i)
                .collect();
            if !bad.is_empty() {
                return Err(overflow(t, grid, bad));
            }
            return Ok((t.clone(), QuantStats::default()));
        }
        TensorData::Q16 { .. } => t.to_f64().into_iter().map(|v| v as f32).collect(),
        TensorData::F32(v) => v.clone(),
    };

    let mut out = Vec::with_capacity(floats.len());
    let mut bad = Vec::new();
    let mut stats = QuantStats::default();
    for (i, &v) in floats.iter().enumerate() {
        if !v.is_finite() {
            return Err(ReduceError::NonFinite {
                name: t.name().to_string(),
                index: i,
            });
        }
        match grid.index_of(v) {
            Some(q) => {
                if q == 0 && v != 0.0 {
                    stats.zeroed_nonzeros += 1;
                }
                out.push(q as i16);
            }
            None => {
                bad.push(i);
                out.push(0);
            }
        }
    }
    if !bad.is_empty() {
        return Err(overflow(t, grid, bad));
    }
    let q = t.with_data(TensorData::Q16 {
        values: out,
        scale: grid.scale(),
    })?;
    Ok((q, stats))
}

fn overflow(t: &DenseTensor, grid: &QuantGrid, bad: Vec<usize>) -> ReduceError {
    ReduceError::Overflow {
        name: t.name().to_string(),
        bits: grid.bits(),
        scale: grid.scale(),
        count: bad.len(),
        indices: bad.into_iter().take(16).collect(),
    }
}

/// `max|v| / (2^(bits-1) - 1)`, or `1.0` for an all-zero tensor.
pub fn default_scale(t: &DenseTensor, bits: u32) -> Result<f32, ReduceError> {
    if !(2..=16).contains(&bits) {
        return Err(ReduceError::BadBits(bits));
    }
    let max = t.to_f64().into_iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return Ok(1.0);
    }
    let steps = ((1u64 << (bits - 1)) - 1) as f64;
    Ok((max / steps) as f32)
}

/// How the grid step is picked for a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleChoice {
    /// [`default_scale`] of the tensor being quantized.
    Auto,
    /// The pruning threshold doubles as the grid step.
    Threshold,
    Fixed(f32),
}

impl std::str::FromStr for ScaleChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(ScaleChoice::Auto),
            "threshold" => Ok(ScaleChoice::Threshold),
            other => other
                .parse::<f32>()
                .map(ScaleChoice::Fixed)
                .map_err(|_| format!("expected `auto`, `threshold` or a number, got `{other}`")),
        }
    }
}

impl ScaleChoice {
    /// Resolves the grid step for `original` (the tensor before pruning).
    pub fn resolve(
        &self,
        original: &DenseTensor,
        prune: Option<PruneSpec>,
        bits: u32,
    ) -> Result<f32, ReduceError> {
        let scale = match *self {
            ScaleChoice::Auto => default_scale(original, bits)?,
            ScaleChoice::Fixed(s) => s,
            ScaleChoice::Threshold => match prune {
                Some(spec) if original.f32_values().is_ok() => effective_threshold(original, spec)?,
                _ => default_scale(original, bits)?,
            },
        };
        if !(scale.is_finite() && scale > 0.0) {
            return Err(ReduceError::BadScale(scale as f64));
        }
        Ok(scale)
    }
}
