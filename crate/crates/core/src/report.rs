//! Flat report rows and their CSV/JSON rendering.
//!
//! Every row type has a fixed column list; CSV output always starts with that
//! header, even when there are no rows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounting::{compaction_ratio, Component, SizeBreakdown, WidthPolicy};
use crate::sweep::{LayerReport, RoundingComparison, SweepResult};

/// Huffman coordinates are stored as raw `(row, block column)` pairs.
pub const H_IDX_CONVENTION: &str = "raw_pairs";

#[derive(Error, Debug)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

pub trait ReportRow: Serialize {
    const COLUMNS: &'static [&'static str];
}

pub fn render<R: ReportRow>(rows: &[R], format: ReportFormat) -> Result<Vec<u8>, ReportError> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            w.write_record(R::COLUMNS)?;
            for r in rows {
                w.serialize(r)?;
            }
            Ok(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?)
        }
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(rows)?;
            out.push(b'\n');
            Ok(out)
        }
    }
}

/// One row per format component of a layer, plus a `total` row per format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountingRow {
    pub layer: String,
    pub format: String,
    pub component: String,
    pub bits: u64,
    pub bytes: f64,
    /// BSR total over this format's total.
    pub cr_over_bsr: Option<f64>,
    /// Element-wise Huffman total over this format's total.
    pub cr_vs_elem_huffman: Option<f64>,
}

impl ReportRow for AccountingRow {
    const COLUMNS: &'static [&'static str] = &[
        "layer",
        "format",
        "component",
        "bits",
        "bytes",
        "cr_over_bsr",
        "cr_vs_elem_huffman",
    ];
}

pub fn accounting_rows(reports: &[LayerReport]) -> Vec<AccountingRow> {
    let mut rows = Vec::new();
    for r in reports {
        let formats: [(&str, &SizeBreakdown); 5] = [
            ("dense", &r.dense),
            ("bsr", &r.bsr),
            ("sbsr", &r.sbsr),
            ("ehuff", &r.elem_huffman),
            ("vhuff", &r.vec_huffman),
        ];
        for (format, b) in formats {
            let cr_bsr = compaction_ratio(&r.bsr, b).ok();
            let cr_elem = compaction_ratio(&r.elem_huffman, b).ok();
            let row = |component: &str, bits: u64| AccountingRow {
                layer: r.layer.clone(),
                format: format.to_string(),
                component: component.to_string(),
                bits,
                bytes: bits as f64 / 8.0,
                cr_over_bsr: cr_bsr,
                cr_vs_elem_huffman: cr_elem,
            };
            for &(c, bits) in b.components() {
                rows.push(row(c.label(), bits));
            }
            rows.push(row("total", b.total_bits()));
        }
    }
    rows
}

/// One row per layer: sizes of every format and the headline ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub layer: String,
    pub layer_kind: String,
    pub rows: usize,
    pub cols: usize,
    pub block_width: usize,
    pub sparsity: f64,
    pub zeroed_by_quantization: usize,
    pub stored_blocks: usize,
    pub unique_blocks: usize,
    pub dense_bits: u64,
    pub bsr_bits: u64,
    pub sbsr_bits: u64,
    pub ehuff_bits: u64,
    pub vhuff_bits: u64,
    pub dense_mib: f64,
    pub bsr_mib: f64,
    pub sbsr_mib: f64,
    pub cr_over_bsr: Option<f64>,
    pub cr_dense_over_sbsr: Option<f64>,
    pub cr_huffman: Option<f64>,
    pub cr_sbsr_vs_elem_huffman: Option<f64>,
    pub width_policy: String,
    pub h_idx: String,
}

impl ReportRow for SummaryRow {
    const COLUMNS: &'static [&'static str] = &[
        "layer",
        "layer_kind",
        "rows",
        "cols",
        "block_width",
        "sparsity",
        "zeroed_by_quantization",
        "stored_blocks",
        "unique_blocks",
        "dense_bits",
        "bsr_bits",
        "sbsr_bits",
        "ehuff_bits",
        "vhuff_bits",
        "dense_mib",
        "bsr_mib",
        "sbsr_mib",
        "cr_over_bsr",
        "cr_dense_over_sbsr",
        "cr_huffman",
        "cr_sbsr_vs_elem_huffman",
        "width_policy",
        "h_idx",
    ];
}

fn mib(bits: u64) -> f64 {
    bits as f64 / 8.0 / (1024.0 * 1024.0)
}

pub fn summary_rows(reports: &[LayerReport], policy: WidthPolicy) -> Vec<SummaryRow> {
    reports
        .iter()
        .map(|r| SummaryRow {
            layer: r.layer.clone(),
            layer_kind: r.layer_kind.to_string(),
            rows: r.rows,
            cols: r.cols,
            block_width: r.block_width,
            sparsity: r.sparsity,
            zeroed_by_quantization: r.zeroed_by_quantization,
            stored_blocks: r.stored_blocks,
            unique_blocks: r.unique_blocks,
            dense_bits: r.dense.total_bits(),
            bsr_bits: r.bsr.total_bits(),
            sbsr_bits: r.sbsr.total_bits(),
            ehuff_bits: r.elem_huffman.total_bits(),
            vhuff_bits: r.vec_huffman.total_bits(),
            dense_mib: mib(r.dense.total_bits()),
            bsr_mib: mib(r.bsr.total_bits()),
            sbsr_mib: mib(r.sbsr.total_bits()),
            cr_over_bsr: r.cr_over_bsr(),
            cr_dense_over_sbsr: r.cr_dense_over_sbsr(),
            cr_huffman: r.cr_huffman(),
            cr_sbsr_vs_elem_huffman: r.cr_sbsr_vs_elem_huffman(),
            width_policy: policy.to_string(),
            h_idx: H_IDX_CONVENTION.to_string(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub layer: String,
    pub width: usize,
    pub total_bits: u64,
    pub s_idx: u64,
    pub s_flag: u64,
    pub s_ptr: u64,
    pub s_unique: u64,
    pub best_width: usize,
}

impl ReportRow for SweepRow {
    const COLUMNS: &'static [&'static str] = &[
        "layer",
        "width",
        "total_bits",
        "s_idx",
        "s_flag",
        "s_ptr",
        "s_unique",
        "best_width",
    ];
}

pub fn sweep_rows(results: &[SweepResult]) -> Vec<SweepRow> {
    results
        .iter()
        .flat_map(|r| {
            r.candidates.iter().map(move |c| SweepRow {
                layer: r.layer.clone(),
                width: c.width,
                total_bits: c.total_bits,
                s_idx: c.breakdown.get(Component::SIdx),
                s_flag: c.breakdown.get(Component::SFlag),
                s_ptr: c.breakdown.get(Component::SBlockPointer),
                s_unique: c.breakdown.get(Component::SUniqueBlocks),
                best_width: r.best_width,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundingRow {
    pub layer: String,
    pub width: usize,
    pub truncate_stored: usize,
    pub truncate_unique: usize,
    pub truncate_bits: u64,
    pub nearest_stored: usize,
    pub nearest_unique: usize,
    pub nearest_bits: u64,
    pub ratio: f64,
    pub max_step_diff: u32,
}

impl ReportRow for RoundingRow {
    const COLUMNS: &'static [&'static str] = &[
        "layer",
        "width",
        "truncate_stored",
        "truncate_unique",
        "truncate_bits",
        "nearest_stored",
        "nearest_unique",
        "nearest_bits",
        "ratio",
        "max_step_diff",
    ];
}

pub fn rounding_rows(cmp: &[RoundingComparison]) -> Vec<RoundingRow> {
    cmp.iter()
        .map(|c| RoundingRow {
            layer: c.layer.clone(),
            width: c.width,
            truncate_stored: c.truncate.stored_blocks,
            truncate_unique: c.truncate.unique_blocks,
            truncate_bits: c.truncate.sbsr_bits,
            nearest_stored: c.nearest.stored_blocks,
            nearest_unique: c.nearest.unique_blocks,
            nearest_bits: c.nearest.sbsr_bits,
            ratio: c.ratio,
            max_step_diff: c.max_step_diff,
        })
        .collect()
}

/// Element-wise against vector-wise Huffman (and SBSR) for one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HuffmanRow {
    pub layer: String,
    pub width: usize,
    pub ehuff_idx: u64,
    pub ehuff_dict: u64,
    pub ehuff_payload: u64,
    pub ehuff_bits: u64,
    pub vhuff_idx: u64,
    pub vhuff_dict: u64,
    pub vhuff_payload: u64,
    pub vhuff_bits: u64,
    pub sbsr_bits: u64,
    pub cr_huffman: Option<f64>,
    pub cr_sbsr: Option<f64>,
    pub h_idx: String,
}

impl ReportRow for HuffmanRow {
    const COLUMNS: &'static [&'static str] = &[
        "layer",
        "width",
        "ehuff_idx",
        "ehuff_dict",
        "ehuff_payload",
        "ehuff_bits",
        "vhuff_idx",
        "vhuff_dict",
        "vhuff_payload",
        "vhuff_bits",
        "sbsr_bits",
        "cr_huffman",
        "cr_sbsr",
        "h_idx",
    ];
}

pub fn huffman_rows(reports: &[LayerReport]) -> Vec<HuffmanRow> {
    reports
        .iter()
        .map(|r| HuffmanRow {
            layer: r.layer.clone(),
            width: r.block_width,
            ehuff_idx: r.elem_huffman.get(Component::HIdx),
            ehuff_dict: r.elem_huffman.get(Component::HDict),
            ehuff_payload: r.elem_huffman.get(Component::Payload),
            ehuff_bits: r.elem_huffman.total_bits(),
            vhuff_idx: r.vec_huffman.get(Component::HIdx),
            vhuff_dict: r.vec_huffman.get(Component::HDict),
            vhuff_payload: r.vec_huffman.get(Component::Payload),
            vhuff_bits: r.vec_huffman.total_bits(),
            sbsr_bits: r.sbsr.total_bits(),
            cr_huffman: r.cr_huffman(),
            cr_sbsr: r.cr_sbsr_vs_elem_huffman(),
            h_idx: H_IDX_CONVENTION.to_string(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduce::{QuantGrid, Rounding};
    use crate::sweep::{analyze_layer, compare_rounding, sweep_block_width};
    use crate::tensor::{DenseTensor, LayerKind};

    fn header_of<R: ReportRow>(row: &R) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(row).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        text.lines().next().unwrap().to_string()
    }

    fn layer() -> LayerReport {
        let v: Vec<f32> = (0..32).map(|i| ((i % 5) as f32 - 2.0) * 0.5).collect();
        let t = DenseTensor::f32("l", vec![4, 8], LayerKind::FullyConnected, v).unwrap();
        let grid = QuantGrid::new(16, 0.5, Rounding::Nearest).unwrap();
        analyze_layer(&t, None, &grid, 4, WidthPolicy::Fixed32).unwrap()
    }

    #[test]
    fn columns_match_field_names() {
        let r = layer();
        assert_eq!(header_of(&accounting_rows(std::slice::from_ref(&r))[0]), AccountingRow::COLUMNS.join(","));
        assert_eq!(header_of(&summary_rows(std::slice::from_ref(&r), WidthPolicy::Fixed32)[0]), SummaryRow::COLUMNS.join(","));
        assert_eq!(header_of(&huffman_rows(std::slice::from_ref(&r))[0]), HuffmanRow::COLUMNS.join(","));
        let m = crate::Q16Matrix::from_vec(1, 2, vec![1, 1]);
        let s = sweep_block_width("l", &m, &[1], WidthPolicy::Fixed32).unwrap();
        assert_eq!(header_of(&sweep_rows(&[s])[0]), SweepRow::COLUMNS.join(","));
        let t = DenseTensor::f32("l", vec![1, 2], LayerKind::FullyConnected, vec![1.0, 2.0]).unwrap();
        let grid = QuantGrid::new(16, 1.0, Rounding::Nearest).unwrap();
        let c = compare_rounding(&t, &grid, 1, WidthPolicy::Fixed32).unwrap();
        assert_eq!(header_of(&rounding_rows(&[c])[0]), RoundingRow::COLUMNS.join(","));
    }

    #[test]
    fn empty_csv_still_has_header() {
        let out = render::<SweepRow>(&[], ReportFormat::Csv).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{}\n", SweepRow::COLUMNS.join(",")));
        assert_eq!(render::<SweepRow>(&[], ReportFormat::Json).unwrap(), b"[]\n");
    }

    #[test]
    fn accounting_totals_sum_components() {
        let rows = accounting_rows(&[layer()]);
        for format in ["dense", "bsr", "sbsr", "ehuff", "vhuff"] {
            let of: Vec<_> = rows.iter().filter(|r| r.format == format).collect();
            let (total, parts): (Vec<&AccountingRow>, Vec<&AccountingRow>) = of.into_iter().partition(|r| r.component == "total");
            assert_eq!(total.len(), 1);
            assert_eq!(total[0].bits, parts.iter().map(|r| r.bits).sum::<u64>());
        }
        let bsr_total = rows.iter().find(|r| r.format == "bsr" && r.component == "total").unwrap();
        assert_eq!(bsr_total.cr_over_bsr, Some(1.0));
    }

    #[test]
    fn json_round_trips() {
        let rows = summary_rows(&[layer()], WidthPolicy::Fixed32);
        let out = render(&rows, ReportFormat::Json).unwrap();
        let back: Vec<SummaryRow> = serde_json::from_slice(&out).unwrap();
        assert_eq!(back, rows);
    }
}
