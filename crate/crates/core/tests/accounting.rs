mod common;

use common::q16_matrix;
use proptest::prelude::*;
use wtc_core::accounting::{
    breakdown_report, size_bsr, size_dense, size_huffman, size_sbsr, size_sbsr_with, RefTarget,
    SizeBreakdown, WidthPolicy,
};
use wtc_core::huffman::serial::write_encoded;
use wtc_core::huffman::{encode_elementwise, encode_vectorwise};
use wtc_core::sparse::serial::{write_bsr, write_sbsr};
use wtc_core::sparse::{to_bsr, to_sbsr};
use wtc_core::{DenseTensor, LayerKind};

proptest! {
    #[test]
    fn fixed32_matches_written_bytes(m in q16_matrix(40), h in 1usize..=2, w in 1usize..=8) {
        let p = WidthPolicy::Fixed32;
        let b = to_bsr(&m, h, w).unwrap();
        let s = to_sbsr(&m, h, w).unwrap();
        let e = encode_elementwise(&m);
        let v = encode_vectorwise(&m, w).unwrap();
        prop_assert_eq!(size_bsr(&b, p).total_bits(), write_bsr(&b).len() as u64 * 8);
        prop_assert_eq!(size_sbsr(&s, p).total_bits(), write_sbsr(&s).len() as u64 * 8);
        prop_assert_eq!(size_huffman(&e, p).total_bits(), write_encoded(&e).len() as u64 * 8);
        prop_assert_eq!(size_huffman(&v, p).total_bits(), write_encoded(&v).len() as u64 * 8);
    }

    #[test]
    fn theoretical_never_exceeds_fixed32(m in q16_matrix(40), w in 1usize..=8) {
        let s = to_sbsr(&m, 1, w).unwrap();
        let b = to_bsr(&m, 1, w).unwrap();
        let v = encode_vectorwise(&m, w).unwrap();
        let pairs: [(SizeBreakdown, SizeBreakdown); 4] = [
            (size_bsr(&b, WidthPolicy::Theoretical), size_bsr(&b, WidthPolicy::Fixed32)),
            (size_sbsr(&s, WidthPolicy::Theoretical), size_sbsr(&s, WidthPolicy::Fixed32)),
            (
                size_sbsr_with(&s, WidthPolicy::Theoretical, RefTarget::Coordinate),
                size_sbsr_with(&s, WidthPolicy::Fixed32, RefTarget::Coordinate),
            ),
            (size_huffman(&v, WidthPolicy::Theoretical), size_huffman(&v, WidthPolicy::Fixed32)),
        ];
        for (t, f) in pairs {
            for &(c, bits) in t.components() {
                prop_assert!(bits <= f.get(c), "{} {} > {}", c, bits, f.get(c));
            }
        }
    }

    #[test]
    fn breakdown_percentages_sum_to_100(m in q16_matrix(30), w in 1usize..=6) {
        let s = size_sbsr(&to_sbsr(&m, 1, w).unwrap(), WidthPolicy::Fixed32);
        let rows = breakdown_report(&[("l".to_string(), s.clone())]);
        let bits: u64 = rows.iter().map(|r| r.bits).sum();
        prop_assert_eq!(bits, s.total_bits());
        let pct: f64 = rows.iter().map(|r| r.percent).sum();
        prop_assert!((pct - 100.0).abs() < 1e-9);
    }

    #[test]
    fn dense_costs_per_element(rows in 1usize..50, cols in 1usize..50) {
        let f = DenseTensor::f32("f", vec![rows, cols], LayerKind::FullyConnected, vec![0.5; rows * cols]).unwrap();
        let q = DenseTensor::q16("q", vec![rows, cols], LayerKind::FullyConnected, vec![1; rows * cols], 0.5).unwrap();
        prop_assert_eq!(size_dense(&f).total_bits(), 32 * (rows * cols) as u64);
        prop_assert_eq!(size_dense(&q).total_bits(), 16 * (rows * cols) as u64);
    }
}
