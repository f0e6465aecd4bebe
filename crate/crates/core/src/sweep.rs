//! Redundancy analysis: block histograms, block-width sweeps, rounding-mode
//! comparison and the full per-layer pipeline report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounting::{
    compaction_ratio, size_bsr, size_dense, size_huffman, size_sbsr, SizeBreakdown, WidthPolicy,
};
use crate::huffman::{encode_elementwise, encode_vectorwise, symbol_histogram, HuffmanError};
use crate::par::{self, Exec};
use crate::reduce::{
    prune, quantize_with_stats, PruneSpec, QuantGrid, ReduceError, Rounding, ScaleChoice,
};
use crate::sparse::{to_bsr, to_sbsr, BlockSparse, FormatError};
use crate::tensor::{DType, DenseTensor, LayerKind, TensorError};
use crate::Q16Matrix;

/// Widths tried for fully connected layers when none are given.
pub const DEFAULT_FC_WIDTHS: [usize; 5] = [1, 2, 4, 8, 16];

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SweepError {
    #[error("no block widths to sweep")]
    NoWidths,
    #[error("block width must be positive")]
    ZeroWidth,
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Huffman(#[from] HuffmanError),
}

/// Counts of every distinct nonzero `1 x width` block, right edge zero-padded.
pub fn block_histogram(m: &Q16Matrix, width: usize) -> Result<BTreeMap<Vec<i16>, u64>, SweepError> {
    if width == 0 {
        return Err(SweepError::ZeroWidth);
    }
    Ok(symbol_histogram(m, width))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthCandidate {
    pub width: usize,
    pub total_bits: u64,
    pub breakdown: SizeBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub layer: String,
    pub candidates: Vec<WidthCandidate>,
    pub best_width: usize,
}

pub fn sweep_block_width(
    layer: &str,
    m: &Q16Matrix,
    widths: &[usize],
    policy: WidthPolicy,
) -> Result<SweepResult, SweepError> {
    sweep_block_width_with(Exec::default(), layer, m, widths, policy)
}

/// Builds the SBSR form at every width and picks the smallest total, ties
/// going to the narrower width. Candidates keep the order of `widths`.
pub fn sweep_block_width_with(
    exec: Exec,
    layer: &str,
    m: &Q16Matrix,
    widths: &[usize],
    policy: WidthPolicy,
) -> Result<SweepResult, SweepError> {
    if widths.is_empty() {
        return Err(SweepError::NoWidths);
    }
    let candidates = par::try_map(exec, widths, |&width| {
        let breakdown = size_sbsr(&to_sbsr(m, 1, width)?, policy);
        Ok::<_, SweepError>(WidthCandidate {
            width,
            total_bits: breakdown.total_bits(),
            breakdown,
        })
    })?;
    let best_width = candidates
        .iter()
        .min_by_key(|c| (c.total_bits, c.width))
        .map(|c| c.width)
        .expect("widths is non-empty");
    Ok(SweepResult {
        layer: layer.to_string(),
        candidates,
        best_width,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundingOutcome {
    pub stored_blocks: usize,
    pub unique_blocks: usize,
    pub sbsr_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundingComparison {
    pub layer: String,
    pub width: usize,
    pub truncate: RoundingOutcome,
    pub nearest: RoundingOutcome,
    /// Truncate total over nearest total.
    pub ratio: f64,
    /// Largest per-element index difference between the two modes.
    pub max_step_diff: u32,
}

/// Quantizes a float32 tensor under both rounding modes and reports the
/// resulting sharing side by side. The grid's own rounding mode is ignored.
pub fn compare_rounding(
    t: &DenseTensor,
    grid: &QuantGrid,
    width: usize,
    policy: WidthPolicy,
) -> Result<RoundingComparison, SweepError> {
    if t.dtype() != DType::F32 {
        return Err(TensorError::WrongDtype {
            name: t.name().to_string(),
            expected: DType::F32,
            found: t.dtype(),
        }
        .into());
    }
    if width == 0 {
        return Err(SweepError::ZeroWidth);
    }
    let run = |rounding: Rounding| -> Result<(Q16Matrix, RoundingOutcome), SweepError> {
        let (q, _) = quantize_with_stats(t, &grid.with_rounding(rounding))?;
        let m = q.to_q16_matrix()?;
        let s = to_sbsr(&m, 1, width)?;
        let outcome = RoundingOutcome {
            stored_blocks: s.num_blocks(),
            unique_blocks: s.num_unique(),
            sbsr_bits: size_sbsr(&s, policy).total_bits(),
        };
        Ok((m, outcome))
    };
    let (mt, truncate) = run(Rounding::Truncate)?;
    let (mn, nearest) = run(Rounding::Nearest)?;
    let max_step_diff = mt
        .as_slice()
        .iter()
        .zip(mn.as_slice())
        .map(|(&a, &b)| (a as i32 - b as i32).unsigned_abs())
        .max()
        .unwrap_or(0);
    Ok(RoundingComparison {
        layer: t.name().to_string(),
        width,
        truncate,
        nearest,
        ratio: truncate.sbsr_bits as f64 / nearest.sbsr_bits as f64,
        max_step_diff,
    })
}

/// Every size and ratio for one layer after pruning and quantization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: String,
    pub layer_kind: LayerKind,
    pub rows: usize,
    pub cols: usize,
    pub block_width: usize,
    /// Zero fraction of the quantized tensor.
    pub sparsity: f64,
    pub zeroed_by_quantization: usize,
    pub stored_blocks: usize,
    pub unique_blocks: usize,
    pub dense: SizeBreakdown,
    pub bsr: SizeBreakdown,
    pub sbsr: SizeBreakdown,
    pub elem_huffman: SizeBreakdown,
    pub vec_huffman: SizeBreakdown,
}

impl LayerReport {
    /// BSR total over SBSR total.
    pub fn cr_over_bsr(&self) -> Option<f64> {
        compaction_ratio(&self.bsr, &self.sbsr).ok()
    }

    /// Dense total over SBSR total.
    pub fn cr_dense_over_sbsr(&self) -> Option<f64> {
        compaction_ratio(&self.dense, &self.sbsr).ok()
    }

    /// Element-wise Huffman total over vector-wise Huffman total.
    pub fn cr_huffman(&self) -> Option<f64> {
        compaction_ratio(&self.elem_huffman, &self.vec_huffman).ok()
    }

    /// Element-wise Huffman total over SBSR total.
    pub fn cr_sbsr_vs_elem_huffman(&self) -> Option<f64> {
        compaction_ratio(&self.elem_huffman, &self.sbsr).ok()
    }
}

/// Prune (when `spec` is given), quantize onto `grid`, then build and size
/// every storage format at block width `width` (block height 1).
pub fn analyze_layer(
    t: &DenseTensor,
    spec: Option<PruneSpec>,
    grid: &QuantGrid,
    width: usize,
    policy: WidthPolicy,
) -> Result<LayerReport, SweepError> {
    if width == 0 {
        return Err(SweepError::ZeroWidth);
    }
    let pruned = match spec {
        Some(s) => prune(t, s)?,
        None => t.clone(),
    };
    let (q, stats) = quantize_with_stats(&pruned, grid)?;
    let m = q.to_q16_matrix()?;
    report_matrix(t, &q, &m, stats.zeroed_nonzeros, width, policy)
}

fn report_matrix(
    original: &DenseTensor,
    q: &DenseTensor,
    m: &Q16Matrix,
    zeroed: usize,
    width: usize,
    policy: WidthPolicy,
) -> Result<LayerReport, SweepError> {
    let bsr = to_bsr(m, 1, width)?;
    let sbsr = to_sbsr(m, 1, width)?;
    let ehuff = encode_elementwise(m);
    let vhuff = encode_vectorwise(m, width)?;
    Ok(LayerReport {
        layer: original.name().to_string(),
        layer_kind: original.layer_kind(),
        rows: m.rows(),
        cols: m.cols(),
        block_width: width,
        sparsity: q.sparsity(),
        zeroed_by_quantization: zeroed,
        stored_blocks: sbsr.num_blocks(),
        unique_blocks: sbsr.num_unique(),
        dense: size_dense(original),
        bsr: size_bsr(&bsr, policy),
        sbsr: size_sbsr(&sbsr, policy),
        elem_huffman: size_huffman(&ehuff, policy),
        vec_huffman: size_huffman(&vhuff, policy),
    })
}

/// Pipeline settings shared by every layer of a container.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeConfig {
    /// Applied to float32 layers only; q16 layers are already reduced.
    pub prune: Option<PruneSpec>,
    pub bits: u32,
    pub rounding: Rounding,
    pub scale: ScaleChoice,
    /// Candidate widths for fully connected layers; the SBSR-optimal one is
    /// used. Convolutional layers always use the kernel width.
    pub fc_widths: Vec<usize>,
    pub policy: WidthPolicy,
    pub fc_only: bool,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            prune: None,
            bits: 16,
            rounding: Rounding::Nearest,
            scale: ScaleChoice::Auto,
            fc_widths: DEFAULT_FC_WIDTHS.to_vec(),
            policy: WidthPolicy::Fixed32,
            fc_only: false,
        }
    }
}

impl AnalyzeConfig {
    /// Grid for `t`: its own scale for q16 layers, the resolved scale choice
    /// otherwise.
    pub fn grid_for(&self, t: &DenseTensor) -> Result<QuantGrid, ReduceError> {
        let scale = match t.q16_values() {
            Ok((_, scale)) => scale,
            Err(_) => self.scale.resolve(t, self.prune, self.bits)?,
        };
        QuantGrid::new(self.bits, scale, self.rounding)
    }

    /// The pruned and quantized tensor for `t`, with the quantization stats.
    pub fn reduce(&self, t: &DenseTensor) -> Result<(DenseTensor, usize), SweepError> {
        let grid = self.grid_for(t)?;
        let pruned = match (self.prune, t.dtype()) {
            (Some(spec), DType::F32) => prune(t, spec)?,
            _ => t.clone(),
        };
        let (q, stats) = quantize_with_stats(&pruned, &grid)?;
        Ok((q, stats.zeroed_nonzeros))
    }

    pub fn selects(&self, t: &DenseTensor) -> bool {
        !self.fc_only || t.layer_kind() == LayerKind::FullyConnected
    }

    /// Block width used for `t` given its reduced matrix.
    pub fn width_for(&self, t: &DenseTensor, m: &Q16Matrix) -> Result<usize, SweepError> {
        match t.layer_kind() {
            LayerKind::Convolutional => Ok(m.cols()),
            LayerKind::FullyConnected => {
                Ok(sweep_block_width_with(Exec::Sequential, t.name(), m, &self.fc_widths, self.policy)?.best_width)
            }
        }
    }
}

/// One report per selected layer, in input order.
pub fn analyze_container(
    tensors: &[DenseTensor],
    cfg: &AnalyzeConfig,
    exec: Exec,
) -> Result<Vec<LayerReport>, SweepError> {
    let selected: Vec<&DenseTensor> = tensors.iter().filter(|t| cfg.selects(t)).collect();
    par::try_map(exec, &selected, |t| {
        let (q, zeroed) = cfg.reduce(t)?;
        let m = q.to_q16_matrix()?;
        let width = cfg.width_for(t, &m)?;
        report_matrix(t, &q, &m, zeroed, width, cfg.policy)
    })
}

/// Width sweep of every selected layer, in input order.
pub fn sweep_container(
    tensors: &[DenseTensor],
    cfg: &AnalyzeConfig,
    exec: Exec,
) -> Result<Vec<SweepResult>, SweepError> {
    let selected: Vec<&DenseTensor> = tensors.iter().filter(|t| cfg.selects(t)).collect();
    par::try_map(exec, &selected, |t| {
        let (q, _) = cfg.reduce(t)?;
        let m = q.to_q16_matrix()?;
        sweep_block_width_with(Exec::Sequential, t.name(), &m, &cfg.fc_widths, cfg.policy)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accounting::Component;
    use crate::reduce::quantize;
    use crate::synth::{synth_layer, synth_planted, PLANTED_STEP};

    fn planted_matrix(t: &DenseTensor) -> Q16Matrix {
        let grid = QuantGrid::new(16, PLANTED_STEP, Rounding::Nearest).unwrap();
        quantize(t, &grid).unwrap().to_q16_matrix().unwrap()
    }

    #[test]
    fn histogram_cases() {
        let m = Q16Matrix::from_vec(8, 3, [1, 2, 3].repeat(8));
        let h = block_histogram(&m, 3).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h[&vec![1, 2, 3]], 8);
        assert!(block_histogram(&Q16Matrix::zeros(4, 4), 2).unwrap().is_empty());
        assert_eq!(block_histogram(&m, 0), Err(SweepError::ZeroWidth));
    }

    #[test]
    fn identical_rows_favor_wide_blocks() {
        let row: Vec<i16> = (1..=16).collect();
        let m = Q16Matrix::from_vec(64, 16, row.repeat(64));
        let r = sweep_block_width("x", &m, &[1, 2, 4, 8, 16], WidthPolicy::Fixed32).unwrap();
        for w in r.candidates.windows(2) {
            assert!(w[1].total_bits < w[0].total_bits, "{:?}", r.candidates);
        }
        assert_eq!(r.best_width, 16);
    }

    #[test]
    fn distinct_values_keep_width_one() {
        let m = Q16Matrix::from_vec(16, 16, (1..=256).collect());
        let r = sweep_block_width("x", &m, &[1, 2, 4], WidthPolicy::Theoretical).unwrap();
        let at = |w| r.candidates.iter().find(|c| c.width == w).unwrap().total_bits;
        // no sharing at any width, so only indexing differs; width 1 pays the most index bits
        for c in &r.candidates {
            assert_eq!(c.breakdown.get(Component::SBlockPointer), 0);
            assert_eq!(c.breakdown.get(Component::SUniqueBlocks), 256 * 16);
        }
        assert!(at(4) <= at(1));
    }

    #[test]
    fn single_width_and_empty_set() {
        let m = Q16Matrix::from_vec(2, 2, vec![1, 2, 3, 4]);
        assert_eq!(sweep_block_width("x", &m, &[2], WidthPolicy::Fixed32).unwrap().best_width, 2);
        assert_eq!(sweep_block_width("x", &m, &[], WidthPolicy::Fixed32), Err(SweepError::NoWidths));
    }

    #[test]
    fn sequential_and_parallel_sweeps_agree() {
        let m = planted_matrix(&synth_planted(64, 32, 4, 5, 0.5, 3).unwrap());
        let a = sweep_block_width_with(Exec::Sequential, "p", &m, &[1, 2, 4, 8], WidthPolicy::Fixed32);
        let b = sweep_block_width_with(Exec::Parallel, "p", &m, &[1, 2, 4, 8], WidthPolicy::Fixed32);
        assert_eq!(a, b);
    }

    #[test]
    fn rounding_on_grid_is_identical() {
        let vals: Vec<f32> = (0..40).map(|i| (i % 7) as f32 * 0.25).collect();
        let t = DenseTensor::f32("g", vec![8, 5], LayerKind::FullyConnected, vals).unwrap();
        let grid = QuantGrid::new(16, 0.25, Rounding::Nearest).unwrap();
        let c = compare_rounding(&t, &grid, 5, WidthPolicy::Fixed32).unwrap();
        assert_eq!(c.truncate, c.nearest);
        assert_eq!(c.ratio, 1.0);
        assert_eq!(c.max_step_diff, 0);
    }

    #[test]
    fn rounding_half_steps_diverge_by_one() {
        let vals: Vec<f32> = (0..20).map(|i| (i as f32 + 0.5) * 0.25).collect();
        let t = DenseTensor::f32("h", vec![4, 5], LayerKind::FullyConnected, vals).unwrap();
        let grid = QuantGrid::new(16, 0.25, Rounding::Truncate).unwrap();
        let c = compare_rounding(&t, &grid, 5, WidthPolicy::Fixed32).unwrap();
        assert_eq!(c.max_step_diff, 1);
        assert!(c.truncate.sbsr_bits > 0 && c.nearest.sbsr_bits > 0);
    }

    #[test]
    fn rounding_rejects_q16() {
        let t = DenseTensor::q16("q", vec![1, 2], LayerKind::FullyConnected, vec![1, 2], 1.0).unwrap();
        let grid = QuantGrid::new(16, 1.0, Rounding::Nearest).unwrap();
        assert!(matches!(
            compare_rounding(&t, &grid, 1, WidthPolicy::Fixed32),
            Err(SweepError::Tensor(TensorError::WrongDtype { .. }))
        ));
    }

    #[test]
    fn all_zero_layer() {
        let t = DenseTensor::f32("z", vec![4, 4], LayerKind::FullyConnected, vec![0.0; 16]).unwrap();
        let grid = QuantGrid::new(16, 1.0, Rounding::Nearest).unwrap();
        let r = analyze_layer(&t, None, &grid, 2, WidthPolicy::Fixed32).unwrap();
        assert_eq!(r.bsr.get(Component::BsrBlocks), 0);
        assert_eq!(r.sbsr.get(Component::SUniqueBlocks), 0);
        assert_eq!(r.elem_huffman.get(Component::Payload), 0);
        assert_eq!(r.vec_huffman.get(Component::HDict), 0);
    }

    #[test]
    fn planted_conv_layer_ratio_matches_histogram() {
        let t = synth_layer("conv2", &[50, 20, 5, 5], LayerKind::Convolutional, 4, 12, 0.6, 9).unwrap();
        let grid = QuantGrid::new(16, PLANTED_STEP, Rounding::Nearest).unwrap();
        let r = analyze_layer(&t, None, &grid, 5, WidthPolicy::Fixed32).unwrap();
        assert_eq!((r.rows, r.cols), (5000, 5));

        let m = planted_matrix(&t);
        let hist = block_histogram(&m, 5).unwrap();
        let n: u64 = hist.values().sum();
        let u = hist.len() as u64;
        let idx = (5001 + n) * 32;
        let bsr = 5 * 32 + idx + n * 5 * 16;
        let flags = n;
        let sbsr = 6 * 32 + flags + (8 - flags % 8) % 8 + (n - u) * 32 + idx + u * 5 * 16;
        assert!(u <= 12);
        assert_eq!(r.bsr.total_bits(), bsr);
        assert_eq!(r.sbsr.total_bits(), sbsr);
        assert!((r.cr_over_bsr().unwrap() - bsr as f64 / sbsr as f64).abs() < 1e-12);
        assert!(r.cr_over_bsr().unwrap() > 1.0);
        assert!(r.cr_huffman().unwrap() > 1.0);
        assert!(r.cr_sbsr_vs_elem_huffman().unwrap() > 1.0);
    }

    #[test]
    fn container_order_and_fc_only() {
        let conv = synth_layer("c", &[4, 2, 3, 3], LayerKind::Convolutional, 4, 3, 0.3, 1).unwrap();
        let fc = synth_layer("f", &[16, 32], LayerKind::FullyConnected, 4, 3, 0.3, 2).unwrap();
        let tensors = vec![conv, fc];
        let cfg = AnalyzeConfig::default();
        let seq = analyze_container(&tensors, &cfg, Exec::Sequential).unwrap();
        let par = analyze_container(&tensors, &cfg, Exec::Parallel).unwrap();
        assert_eq!(seq, par);
        assert_eq!(seq.iter().map(|r| r.layer.as_str()).collect::<Vec<_>>(), ["c", "f"]);
        assert_eq!(seq[0].block_width, 3);
        let fc_only = AnalyzeConfig {
            fc_only: true,
            ..cfg
        };
        let only = analyze_container(&tensors, &fc_only, Exec::Sequential).unwrap();
        assert_eq!(only.len(), 1);
        assert_eq!(only[0], seq[1]);
    }
}
